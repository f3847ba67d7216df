#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "gaitlab/errors.hpp"
#include "gaitlab/json_io.hpp"
#include "gaitlab/metrics.hpp"

namespace gaitlab {

namespace fs = std::filesystem;

namespace {

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json curve(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
  return a;
}

Json channel_json(const ChannelMetric& c) {
  return {{"name", c.name}, {"unit", c.unit},          {"rmse", number(c.rmse)},
          {"r2", number(c.r2)}, {"sim_mean", curve(c.sim_mean)}, {"sim_sd", curve(c.sim_spread)},
          {"ref_mean", curve(c.ref_mean)}, {"ref_sd", curve(c.ref_spread)}};
}

std::string condition(const TraceMeta& m) {
  std::string mask;
  for (const auto& [name, cap] : m.mask) mask += (mask.empty() ? "" : "+") + name;
  return std::string(to_string(m.phase)) + "/" + m.device + "/" + (mask.empty() ? "intact" : mask);
}

class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) { row(header); }
  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) s_ << (i ? "," : "") << cells[i];
    s_ << '\n';
  }
  static std::string num(double v) {
    if (!std::isfinite(v)) return "";
    std::ostringstream o;
    o.precision(12);
    o << v;
    return o.str();
  }
  std::string str() const { return s_.str(); }

 private:
  std::ostringstream s_;
};

std::string tracking_csv(const TrackingMetrics& t, int points) {
  std::vector<std::string> header{"phase_pct"};
  std::vector<const ChannelMetric*> all;
  auto add = [&](const std::vector<ChannelMetric>& group, const char* kind) {
    for (const auto& c : group) {
      all.push_back(&c);
      const std::string base = c.name + "_" + kind;
      for (const char* part : {"_sim_", "_sim_sd_", "_ref_", "_ref_sd_"}) header.push_back(base + part + c.unit);
    }
  };
  add(t.angles, "angle");
  add(t.moments, "moment");
  add(t.grf, "vertical");
  Csv csv(header);
  for (int p = 0; p < points; ++p) {
    std::vector<std::string> r{Csv::num(100.0 * p / points)};
    for (const auto* c : all)
      for (const Eigen::VectorXd* v : {&c->sim_mean, &c->sim_spread, &c->ref_mean, &c->ref_spread})
        r.push_back(Csv::num((*v)[p]));
    csv.row(r);
  }
  return csv.str();
}

std::string deviations_csv(const TrackingMetrics& t, int points) {
  std::vector<std::string> header{"phase_pct"};
  for (const auto& c : t.angles) header.push_back(c.name + "_dev_deg");
  Csv csv(header);
  for (int p = 0; p < points; ++p) {
    std::vector<std::string> r{Csv::num(100.0 * p / points)};
    for (const auto& c : t.angles) r.push_back(Csv::num(c.sim_mean[p] - c.ref_mean[p]));
    csv.row(r);
  }
  return csv.str();
}

std::string torque_csv(const TorqueProfiles& tp) {
  std::vector<std::string> header{"phase_pct"};
  int points = 0;
  for (const auto& p : tp.profiles) {
    const std::string name(kJointNames[p.joint]);
    header.push_back(name + "_exo_Nm_per_kg");
    header.push_back(name + "_exo_sd_Nm_per_kg");
    points = static_cast<int>(p.mean.size());
  }
  Csv csv(header);
  for (int i = 0; i < points; ++i) {
    std::vector<std::string> r{Csv::num(100.0 * i / points)};
    for (const auto& p : tp.profiles) {
      r.push_back(Csv::num(p.mean[i]));
      r.push_back(Csv::num(p.spread[i]));
    }
    csv.row(r);
  }
  return csv.str();
}

Json torque_json(const TorqueProfiles& tp) {
  Json j;
  j["affected_side"] = tp.affected == Side::left ? "left" : "right";
  Json prof = Json::array();
  for (const auto& p : tp.profiles)
    prof.push_back({{"joint", std::string(kJointNames[p.joint])}, {"unit", "Nm_per_kg"},
                    {"peak", number(p.peak)}, {"peak_sign", p.peak > 0 ? 1 : (p.peak < 0 ? -1 : 0)},
                    {"peak_phase_pct", p.peak_phase}, {"mean", curve(p.mean)}, {"sd", curve(p.spread)}});
  j["profiles"] = prof;
  Json ratio = Json::object();
  for (const auto& [name, r] : tp.peak_ratio) ratio[name] = number(r);
  j["affected_to_unaffected_peak_ratio"] = ratio;
  return j;
}

Json report_json(const GaitReport& r) {
  Json j;
  j["schema"] = "gaitlab.report/1";
  j["fingerprint"] = r.fingerprint;
  j["condition"] = condition(r.meta);
  j["phase"] = std::string(to_string(r.meta.phase));
  j["device"] = r.meta.device;
  j["mask"] = r.meta.mask;
  j["speed_m_per_s"] = r.meta.speed;
  j["model_mass_kg"] = r.meta.model_mass;
  j["traces"] = r.traces;
  j["steps"] = r.steps;
  j["mean_return"] = number(r.mean_return);
  j["mean_episode_steps"] = r.mean_length;
  j["gross_cost_W_per_kg"] = number(r.gross_cost);
  j["net_cost_W_per_kg"] = number(r.gross_cost - kBasalRate);
  if (r.tracking) {
    const auto& t = *r.tracking;
    Json tj;
    tj["cycles"] = {{"left", t.cycles[0]}, {"right", t.cycles[1]}};
    tj["angle_rmse_deg"] = number(t.angle_rmse);
    tj["moment_rmse_Nm_per_kg"] = number(t.moment_rmse);
    tj["grf_rmse_BW"] = number(t.grf_rmse);
    for (const auto* g : {&t.angles, &t.moments, &t.grf}) {
      const char* key = g == &t.angles ? "angles" : (g == &t.moments ? "moments" : "grf");
      tj[key] = Json::array();
      for (const auto& c : *g) tj[key].push_back(channel_json(c));
    }
    j["tracking"] = tj;
  } else {
    j["tracking"] = nullptr;
    j["tracking_error"] = r.tracking_error;
  }
  if (r.symmetry) {
    j["symmetry_rmse_deg"] = number(*r.symmetry);
  } else {
    j["symmetry_rmse_deg"] = nullptr;
    j["symmetry_error"] = r.symmetry_error;
  }
  if (r.torque) {
    j["exo_torque"] = torque_json(*r.torque);
  } else {
    j["exo_torque"] = nullptr;
    if (!r.torque_error.empty()) j["exo_torque_error"] = r.torque_error;
  }
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  out.close();
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

// Stages every file in a sibling directory and renames them into place.
void publish(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& files) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory '" + dir.string() + "'");
  const fs::path stage = dir / (".staging-" + std::to_string(::getpid()));
  fs::remove_all(stage, ec);
  if (!fs::create_directory(stage, ec) || ec) throw DataError("output directory '" + dir.string() + "' is not writable");
  try {
    for (const auto& [name, text] : files) write_text(stage / name, text);
    for (const auto& [name, text] : files) {
      fs::rename(stage / name, dir / name, ec);
      if (ec) throw DataError("cannot move '" + name + "' into '" + dir.string() + "': " + ec.message());
    }
  } catch (...) {
    fs::remove_all(stage, ec);
    throw;
  }
  fs::remove_all(stage, ec);
}

}  // namespace

void write_report(const GaitReport& r, const std::string& out_dir) {
  std::vector<std::pair<std::string, std::string>> files;
  files.emplace_back("report.json", report_json(r).dump(2) + "\n");
  if (r.tracking) {
    const int points = r.tracking->angles.empty() ? 0 : static_cast<int>(r.tracking->angles[0].sim_mean.size());
    files.emplace_back("tracking.csv", tracking_csv(*r.tracking, points));
    files.emplace_back("impaired_deviations.csv", deviations_csv(*r.tracking, points));
  }
  {
    Csv csv({"condition", "gross_cost_W_per_kg", "net_cost_W_per_kg"});
    csv.row({condition(r.meta), Csv::num(r.gross_cost), Csv::num(r.gross_cost - kBasalRate)});
    files.emplace_back("metabolics.csv", csv.str());
  }
  if (r.torque) files.emplace_back("torque_profiles.csv", torque_csv(*r.torque));
  {
    Csv csv({"condition", "symmetry_rmse_deg", "gross_cost_W_per_kg"});
    csv.row({condition(r.meta), r.symmetry ? Csv::num(*r.symmetry) : "", Csv::num(r.gross_cost)});
    files.emplace_back("symmetry_energy.csv", csv.str());
  }
  publish(out_dir, files);
}

void write_torque_profiles(const TorqueProfiles& profiles, const std::string& path) {
  const fs::path p(path);
  publish(p.has_parent_path() ? p.parent_path() : fs::path("."), {{p.filename().string(), torque_csv(profiles)}});
}

}  // namespace gaitlab
