#include "gaitlab/refmotion.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gaitlab/errors.hpp"
#include "gaitlab/json_io.hpp"

namespace gaitlab {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Lateral partner of a channel name, or empty for midline channels.
std::string partner(const std::string& name) {
  if (ends_with(name, "_l")) return name.substr(0, name.size() - 2) + "_r";
  if (ends_with(name, "_r")) return name.substr(0, name.size() - 2) + "_l";
  return {};
}

void check_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw DataError(std::string("reference clip: non-finite values in ") + what);
}

// Left/right column swap for a block laid out as [left..., right...].
void swap_halves(Eigen::MatrixXd& m, int offset, int width) {
  for (int c = 0; c < width; ++c) m.col(offset + c).swap(m.col(offset + width + c));
}

struct Column {
  std::string name;
  std::string unit;
};

std::vector<Column> csv_columns(const ReferenceClip& clip) {
  std::vector<Column> cols = {{"time_s", "s"}, {"root_x_m", "m"}, {"root_y_m", "m"}};
  for (auto a : kAngleNames) cols.push_back({std::string(a) + "_rad", "rad"});
  for (auto a : kAngleNames) cols.push_back({std::string(a) + "_vel_rad_per_s", "rad/s"});
  for (auto j : kJointNames) cols.push_back({std::string(j) + "_moment_Nm_per_kg", "N m/kg"});
  for (const auto& l : clip.landmark_names) {
    cols.push_back({l + "_x_m", "m"});
    cols.push_back({l + "_y_m", "m"});
  }
  if (clip.grf.cols() == 2) {
    cols.push_back({"grf_l_bw", "BW"});
    cols.push_back({"grf_r_bw", "BW"});
  }
  if (clip.contact.cols() == 2) {
    cols.push_back({"contact_l", "1"});
    cols.push_back({"contact_r", "1"});
  }
  return cols;
}

// Pair name for a CSV column: swaps the lateral token inside the name.
std::string column_partner(const std::string& col) {
  for (const char* tok : {"_l_", "_r_"}) {
    const auto pos = col.find(tok);
    if (pos != std::string::npos) {
      std::string p = col;
      p[pos + 1] = tok[1] == 'l' ? 'r' : 'l';
      return p;
    }
  }
  if (ends_with(col, "_l") || ends_with(col, "_r")) return partner(col);
  return {};
}

}  // namespace

int ReferenceClip::landmark_index(const std::string& name) const {
  for (size_t i = 0; i < landmark_names.size(); ++i)
    if (landmark_names[i] == name) return static_cast<int>(i);
  throw DataError("reference clip has no landmark '" + name + "'");
}

double ReferenceClip::resolved_wrap_advance() const {
  if (std::isfinite(wrap_advance)) return wrap_advance;
  const int n = frames();
  if (n < 2) return 0.0;
  return root(n - 1, 0) - root(0, 0) + (root(n - 1, 0) - root(n - 2, 0));
}

void ReferenceClip::validate() const {
  const int n = frames();
  if (!(sample_rate > 0.0)) throw DataError("reference clip: sample rate must be positive");
  if (n < 2) throw DataError("reference clip: needs at least two frames");
  if (angles.cols() != kNumAngles || velocities.rows() != n || velocities.cols() != kNumAngles)
    throw DataError("reference clip: angle/velocity block has the wrong shape");
  if (moments.rows() != n || moments.cols() != kNumJoints) throw DataError("reference clip: moment block shape");
  if (root.rows() != n || root.cols() != 2) throw DataError("reference clip: root block shape");
  if (landmarks.rows() != n || landmarks.cols() != 2 * static_cast<int>(landmark_names.size()))
    throw DataError("reference clip: landmark block shape");
  if (grf.cols() != 0 && (grf.cols() != 2 || grf.rows() != n)) throw DataError("reference clip: GRF block shape");
  if (contact.cols() != 0 && (contact.cols() != 2 || contact.rows() != n))
    throw DataError("reference clip: contact block shape");
  if (!(subject_mass > 0.0)) throw DataError("reference clip: subject mass must be positive");
  check_finite(angles, "angles");
  check_finite(velocities, "velocities");
  check_finite(moments, "moments");
  check_finite(root, "root");
  check_finite(landmarks, "landmarks");
  check_finite(grf, "grf");
  check_finite(contact, "contact");
  for (const auto& name : landmark_names) {
    const std::string p = partner(name);
    if (p.empty()) continue;
    bool found = false;
    for (const auto& other : landmark_names) found = found || other == p;
    if (!found) throw DataError("reference clip: lateral landmark '" + name + "' has no partner '" + p + "'");
  }
  if (n >= 3) {
    for (int c = 0; c < kNumAngles; ++c) {
      double err = 0.0, ref = 0.0;
      for (int k = 1; k + 1 < n; ++k) {
        const double cd = (angles(k + 1, c) - angles(k - 1, c)) * 0.5 * sample_rate;
        err += (velocities(k, c) - cd) * (velocities(k, c) - cd);
        ref += cd * cd;
      }
      if (std::sqrt(err) > 0.05 * std::sqrt(ref) + 1e-9 * std::sqrt(n))
        throw DataError("reference clip: velocity channel '" + std::string(kAngleNames[c]) +
                        "' inconsistent with angle differences");
    }
  }
}

ReferenceFrame sample_clip(const ReferenceClip& clip, double t) {
  const int n = clip.frames();
  const double period = clip.period();
  const double advance = clip.resolved_wrap_advance();
  const int lm = static_cast<int>(clip.landmark_names.size());

  struct Slot {
    int i, j;
    double w, shift_i, shift_j;
  };
  auto locate = [&](double time) {
    const double cycles = std::floor(time / period);
    double f = (time - cycles * period) * clip.sample_rate;
    int i = static_cast<int>(std::floor(f));
    if (i >= n) i = n - 1;
    if (i < 0) i = 0;
    Slot s{i, i + 1, f - i, cycles * advance, cycles * advance};
    if (s.j >= n) {
      s.j = 0;
      s.shift_j += advance;
    }
    return s;
  };
  auto lerp = [](double a, double b, double w) { return a + w * (b - a); };

  const Slot s = locate(t);
  ReferenceFrame out;
  for (int c = 0; c < kNumAngles; ++c) {
    out.angles[c] = lerp(clip.angles(s.i, c), clip.angles(s.j, c), s.w);
    out.velocities[c] = lerp(clip.velocities(s.i, c), clip.velocities(s.j, c), s.w);
  }
  for (int c = 0; c < kNumJoints; ++c) out.moments[c] = lerp(clip.moments(s.i, c), clip.moments(s.j, c), s.w);
  auto root_at = [&](const Slot& q) {
    return Eigen::Vector2d(lerp(clip.root(q.i, 0) + q.shift_i, clip.root(q.j, 0) + q.shift_j, q.w),
                           lerp(clip.root(q.i, 1), clip.root(q.j, 1), q.w));
  };
  out.root = root_at(s);
  const double h = clip.dt();
  out.root_velocity = (root_at(locate(t + h)) - root_at(locate(t - h))) / (2.0 * h);
  out.landmarks.resize(lm);
  for (int l = 0; l < lm; ++l) {
    out.landmarks[l] = {lerp(clip.landmarks(s.i, 2 * l) + s.shift_i, clip.landmarks(s.j, 2 * l) + s.shift_j, s.w),
                        lerp(clip.landmarks(s.i, 2 * l + 1), clip.landmarks(s.j, 2 * l + 1), s.w)};
  }
  if (clip.grf.cols() == 2)
    for (int c = 0; c < 2; ++c) out.grf[c] = lerp(clip.grf(s.i, c), clip.grf(s.j, c), s.w);
  return out;
}

std::string sidecar_path(const std::string& csv_path) {
  if (ends_with(csv_path, ".csv")) return csv_path.substr(0, csv_path.size() - 4) + ".json";
  return csv_path + ".json";
}

void save_clip(const ReferenceClip& clip, const std::string& csv_path) {
  clip.validate();
  const auto cols = csv_columns(clip);
  Json side;
  side["schema"] = "gaitlab.clip/1";
  side["sample_rate_hz"] = clip.sample_rate;
  side["speed_m_per_s"] = clip.speed;
  side["subject_mass_kg"] = clip.subject_mass;
  side["mirrored"] = clip.mirrored;
  if (std::isfinite(clip.wrap_advance)) side["wrap_advance_m"] = clip.wrap_advance;
  side["landmarks"] = clip.landmark_names;
  side["has_grf"] = clip.grf.cols() == 2;
  side["has_contact"] = clip.contact.cols() == 2;
  side["channels"] = Json::array();
  for (const auto& c : cols) {
    Json e = {{"name", c.name}, {"unit", c.unit}};
    const std::string p = column_partner(c.name);
    if (!p.empty()) e["pair"] = p;
    side["channels"].push_back(e);
  }
  write_json_file(side, sidecar_path(csv_path));

  std::ofstream out(csv_path);
  if (!out) throw DataError("cannot write clip file " + csv_path);
  for (size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c].name;
  out << '\n';
  char buf[32];
  for (int k = 0; k < clip.frames(); ++k) {
    std::vector<double> row = {clip.time(k), clip.root(k, 0), clip.root(k, 1)};
    for (int c = 0; c < kNumAngles; ++c) row.push_back(clip.angles(k, c));
    for (int c = 0; c < kNumAngles; ++c) row.push_back(clip.velocities(k, c));
    for (int c = 0; c < kNumJoints; ++c) row.push_back(clip.moments(k, c));
    for (int c = 0; c < clip.landmarks.cols(); ++c) row.push_back(clip.landmarks(k, c));
    for (int c = 0; c < clip.grf.cols(); ++c) row.push_back(clip.grf(k, c));
    for (int c = 0; c < clip.contact.cols(); ++c) row.push_back(clip.contact(k, c));
    for (size_t c = 0; c < row.size(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", row[c]);
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing clip file " + csv_path);
}

ReferenceClip load_clip(const std::string& csv_path) {
  Json side;
  try {
    side = read_json_file(sidecar_path(csv_path));
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
  ReferenceClip clip;
  try {
    clip.sample_rate = required<double>(side, "sample_rate_hz");
    clip.speed = optional<double>(side, "speed_m_per_s", 0.0);
    clip.subject_mass = required<double>(side, "subject_mass_kg");
    clip.mirrored = optional<bool>(side, "mirrored", false);
    clip.wrap_advance = optional<double>(side, "wrap_advance_m", std::numeric_limits<double>::quiet_NaN());
    clip.landmark_names = required<std::vector<std::string>>(side, "landmarks");
    if (optional<bool>(side, "has_grf", false)) clip.grf.resize(1, 2);
    if (optional<bool>(side, "has_contact", false)) clip.contact.resize(1, 2);
  } catch (const ConfigError& e) {
    throw DataError(csv_path + ": " + e.what());
  }
  const auto cols = csv_columns(clip);
  // Pairing declared by the sidecar must cover every lateral column.
  if (side.contains("channels")) {
    std::vector<std::string> declared;
    for (const auto& c : side["channels"]) declared.push_back(c.value("name", ""));
    for (const auto& c : side["channels"]) {
      const std::string name = c.value("name", "");
      if (column_partner(name).empty()) continue;
      const std::string p = c.value("pair", "");
      bool found = false;
      for (const auto& d : declared) found = found || d == p;
      if (p.empty() || !found) throw DataError(csv_path + ": lateral channel '" + name + "' is unpaired");
    }
  }

  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open clip file " + csv_path);
  std::string line;
  std::getline(in, line);
  {
    std::stringstream ss(line);
    std::string tok;
    size_t c = 0;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty() && tok.back() == '\r') tok.pop_back();
      if (c >= cols.size() || tok != cols[c].name)
        throw DataError(csv_path + ": unexpected column '" + tok + "' at position " + std::to_string(c));
      ++c;
    }
    if (c != cols.size()) throw DataError(csv_path + ": header has " + std::to_string(c) + " columns, expected " +
                                          std::to_string(cols.size()));
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p < end) {
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) throw DataError(csv_path + ": malformed number on line " + std::to_string(rows.size() + 2));
      row.push_back(v);
      p = next;
      if (p < end && (*p == ',' || *p == '\r')) ++p;
    }
    if (row.size() != cols.size())
      throw DataError(csv_path + ": line " + std::to_string(rows.size() + 2) + " has " + std::to_string(row.size()) +
                      " values");
    rows.push_back(std::move(row));
  }
  const int n = static_cast<int>(rows.size());
  if (n < 2) throw DataError(csv_path + ": fewer than two frames");
  const int lm = static_cast<int>(clip.landmark_names.size());
  clip.angles.resize(n, kNumAngles);
  clip.velocities.resize(n, kNumAngles);
  clip.moments.resize(n, kNumJoints);
  clip.root.resize(n, 2);
  clip.landmarks.resize(n, 2 * lm);
  if (clip.grf.cols()) clip.grf.resize(n, 2);
  if (clip.contact.cols()) clip.contact.resize(n, 2);
  for (int k = 0; k < n; ++k) {
    const auto& r = rows[k];
    if (std::abs(r[0] - k / clip.sample_rate) > 1e-9)
      throw DataError(csv_path + ": non-uniform sampling at frame " + std::to_string(k));
    int c = 1;
    clip.root(k, 0) = r[c++];
    clip.root(k, 1) = r[c++];
    for (int i = 0; i < kNumAngles; ++i) clip.angles(k, i) = r[c++];
    for (int i = 0; i < kNumAngles; ++i) clip.velocities(k, i) = r[c++];
    for (int i = 0; i < kNumJoints; ++i) clip.moments(k, i) = r[c++];
    for (int i = 0; i < 2 * lm; ++i) clip.landmarks(k, i) = r[c++];
    for (int i = 0; i < clip.grf.cols(); ++i) clip.grf(k, i) = r[c++];
    for (int i = 0; i < clip.contact.cols(); ++i) clip.contact(k, i) = r[c++];
  }
  clip.validate();
  return clip;
}

BeltSpeedEstimate estimate_belt_speed(std::span<const std::vector<double>> toe_x,
                                      std::span<const std::vector<std::uint8_t>> stance, double sample_rate,
                                      int min_frames) {
  if (toe_x.size() != stance.size()) throw DataError("belt speed: toe and stance track counts differ");
  BeltSpeedEstimate est;
  double weighted = 0.0, total = 0.0;
  for (size_t t = 0; t < toe_x.size(); ++t) {
    const auto& x = toe_x[t];
    const auto& m = stance[t];
    if (x.size() != m.size()) throw DataError("belt speed: toe and stance lengths differ");
    const int n = static_cast<int>(x.size());
    for (int k = 0; k < n;) {
      if (!m[k]) {
        ++k;
        continue;
      }
      int e = k;
      while (e + 1 < n && m[e + 1]) ++e;
      if (e - k + 1 >= min_frames) {
        const double duration = (e - k) / sample_rate;
        const double speed = -(x[e] - x[k]) / duration;
        est.intervals.push_back({k, e, speed});
        weighted += speed * duration;
        total += duration;
      }
      k = e + 1;
    }
  }
  if (est.intervals.empty()) throw DataError("belt speed: no stance interval of at least " +
                                             std::to_string(min_frames) + " frames");
  est.speed = weighted / total;
  return est;
}

ReferenceClip to_overground(const ReferenceClip& clip, double belt_speed) {
  if (!(belt_speed >= 0.0)) throw DataError("belt speed must be non-negative");
  ReferenceClip out = clip;
  if (belt_speed == 0.0) return out;
  for (int k = 0; k < out.frames(); ++k) {
    const double dx = belt_speed * out.time(k);
    out.root(k, 0) += dx;
    for (int l = 0; l < static_cast<int>(out.landmark_names.size()); ++l) out.landmarks(k, 2 * l) += dx;
  }
  if (std::isfinite(out.wrap_advance)) out.wrap_advance += belt_speed * out.period();
  return out;
}

ReferenceClip mirror_clip(const ReferenceClip& clip) {
  ReferenceClip out = clip;
  swap_halves(out.angles, 1, 3);
  swap_halves(out.velocities, 1, 3);
  swap_halves(out.moments, 0, 3);
  if (out.grf.cols() == 2) swap_halves(out.grf, 0, 1);
  if (out.contact.cols() == 2) swap_halves(out.contact, 0, 1);
  const int lm = static_cast<int>(clip.landmark_names.size());
  std::vector<bool> done(lm, false);
  for (int l = 0; l < lm; ++l) {
    if (done[l]) continue;
    const std::string p = partner(clip.landmark_names[l]);
    if (p.empty()) continue;
    int other = -1;
    for (int m = 0; m < lm; ++m)
      if (clip.landmark_names[m] == p) other = m;
    if (other < 0) throw DataError("mirror: lateral landmark '" + clip.landmark_names[l] + "' is unpaired");
    out.landmarks.col(2 * l).swap(out.landmarks.col(2 * other));
    out.landmarks.col(2 * l + 1).swap(out.landmarks.col(2 * other + 1));
    done[l] = done[other] = true;
  }
  out.mirrored = !clip.mirrored;
  return out;
}

}  // namespace gaitlab
