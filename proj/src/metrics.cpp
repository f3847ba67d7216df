#include "gaitlab/metrics.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "gaitlab/errors.hpp"

namespace gaitlab {

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;
constexpr const char* kSideName[2] = {"left", "right"};

// Cycles used from one strike sequence: drop settling cycles only when
// something is left afterwards.
struct Selection {
  int skip = 0;
  int count = 0;
};

Selection select_cycles(const std::vector<double>& strikes, const CycleOptions& o) {
  const int available = strikes.size() < 2 ? 0 : static_cast<int>(strikes.size()) - 1;
  Selection s;
  if (available == 0) return s;
  s.skip = std::min(o.skip, available - 1);
  s.count = std::min(o.cycles, available - s.skip);
  return s;
}

// Stacked per-cycle curves of one channel across traces.
struct Stack {
  std::vector<Eigen::VectorXd> rows;

  void add(std::span<const double> signal, const std::vector<double>& strikes, const Selection& sel, int points) {
    if (sel.count == 0) return;
    const auto c = cycle_normalize(signal, strikes, sel.count, points, sel.skip);
    for (int r = 0; r < c.cycles.rows(); ++r) rows.push_back(c.cycles.row(r).transpose());
  }
  void mean_spread(int points, Eigen::VectorXd& mean, Eigen::VectorXd& spread) const {
    const int n = static_cast<int>(rows.size());
    mean = Eigen::VectorXd::Zero(points);
    spread = Eigen::VectorXd::Zero(points);
    for (const auto& r : rows) mean += r;
    mean /= n;
    if (n < 2) return;
    for (const auto& r : rows) spread += (r - mean).cwiseAbs2();
    spread = (spread / (n - 1)).cwiseSqrt();
  }
};

std::vector<double> loading(const EpisodeTrace& t, int side) {
  const double weight = t.meta.model_mass * kGravity;
  std::vector<double> l(t.size());
  for (int k = 0; k < t.size(); ++k) l[k] = t.steps[k].grf[side].y() / weight;
  return l;
}

std::vector<double> column(const EpisodeTrace& t, auto&& f) {
  std::vector<double> v(t.size());
  for (int k = 0; k < t.size(); ++k) v[k] = f(t.steps[k]);
  return v;
}

ChannelMetric compare(std::string name, std::string unit, const Stack& sim, const Stack& ref, int points) {
  ChannelMetric m;
  m.name = std::move(name);
  m.unit = std::move(unit);
  sim.mean_spread(points, m.sim_mean, m.sim_spread);
  ref.mean_spread(points, m.ref_mean, m.ref_spread);
  const double ss_res = (m.sim_mean - m.ref_mean).squaredNorm();
  const double ss_tot = (m.ref_mean.array() - m.ref_mean.mean()).matrix().squaredNorm();
  m.rmse = std::sqrt(ss_res / points);
  m.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : std::numeric_limits<double>::quiet_NaN();
  return m;
}

double group_rmse(const std::vector<ChannelMetric>& ch) {
  if (ch.empty()) return 0.0;
  double ss = 0.0;
  long n = 0;
  for (const auto& c : ch) {
    ss += (c.sim_mean - c.ref_mean).squaredNorm();
    n += c.sim_mean.size();
  }
  return std::sqrt(ss / n);
}

void require_cycles(const std::array<int, 2>& counts, const std::string& what) {
  std::string missing;
  for (int s = 0; s < 2; ++s)
    if (counts[s] == 0) missing += missing.empty() ? kSideName[s] : std::string(" and ") + kSideName[s];
  if (!missing.empty()) throw DataError(what + ": found 0 complete gait cycles on the " + missing + " side");
}

}  // namespace

std::array<std::vector<double>, 2> trace_strikes(const EpisodeTrace& trace) {
  std::array<std::vector<double>, 2> out;
  for (int s = 0; s < 2; ++s)
    out[s] = detect_side_events(loading(trace, s), kStrikeThreshold, trace.sample_rate()).strike_positions;
  return out;
}

TrackingMetrics tracking_metrics(std::span<const EpisodeTrace> traces, const ReferenceClip& clip,
                                 const CycleOptions& o) {
  const bool has_grf = clip.grf.cols() == 2;
  const int p = o.points;
  std::array<Stack, kNumJoints> sim_a, ref_a, sim_m, ref_m;
  std::array<Stack, 2> sim_g, ref_g;

  for (const auto& t : traces) {
    // The moment filter needs a minimum length.
    if (t.size() <= 24) continue;
    const double rate = t.sample_rate();
    std::vector<ReferenceFrame> ref;
    ref.reserve(t.size());
    for (const auto& s : t.steps) ref.push_back(sample_clip(clip, s.ref_time));

    std::array<std::vector<double>, 2> ref_load;
    for (int s = 0; s < 2; ++s) {
      ref_load[s].resize(t.size());
      if (has_grf) {
        for (int k = 0; k < t.size(); ++k) ref_load[s][k] = ref[k].grf[s];
      } else {
        // Foot height within 1 cm of its lowest point counts as loaded.
        const int lm = clip.landmark_index(s == 0 ? "foot_l" : "foot_r");
        double lo = std::numeric_limits<double>::infinity();
        for (const auto& f : ref) lo = std::min(lo, f.landmarks[lm].y());
        for (int k = 0; k < t.size(); ++k) ref_load[s][k] = ref[k].landmarks[lm].y() <= lo + 0.01 ? 1.0 : 0.0;
      }
    }
    const auto sim_strikes = trace_strikes(t);
    std::array<std::vector<double>, 2> ref_strikes;
    for (int s = 0; s < 2; ++s)
      ref_strikes[s] =
          detect_side_events(ref_load[s], has_grf ? kStrikeThreshold : 0.5, rate).strike_positions;
    std::array<Selection, 2> ssel, rsel;
    for (int s = 0; s < 2; ++s) {
      ssel[s] = select_cycles(sim_strikes[s], o);
      rsel[s] = select_cycles(ref_strikes[s], o);
      // A side contributes only when both signals hold a cycle.
      if (ssel[s].count == 0 || rsel[s].count == 0) ssel[s].count = rsel[s].count = 0;
    }

    for (int j = 0; j < kNumJoints; ++j) {
      const int s = j < 3 ? 0 : 1;
      sim_a[j].add(column(t, [&](const TraceStep& st) { return st.q[kRootDofs + j] * kDeg; }), sim_strikes[s],
                   ssel[s], p);
      std::vector<double> ra(t.size()), rm(t.size());
      for (int k = 0; k < t.size(); ++k) {
        ra[k] = ref[k].angles[1 + j] * kDeg;
        rm[k] = ref[k].moments[j];
      }
      ref_a[j].add(ra, ref_strikes[s], rsel[s], p);
      const auto sm = zero_lag_lowpass(
          column(t, [&](const TraceStep& st) { return st.tau[j] / t.meta.model_mass; }), rate, kMomentCutoff);
      sim_m[j].add(sm, sim_strikes[s], ssel[s], p);
      ref_m[j].add(zero_lag_lowpass(rm, rate, kMomentCutoff), ref_strikes[s], rsel[s], p);
    }
    if (has_grf) {
      for (int s = 0; s < 2; ++s) {
        sim_g[s].add(loading(t, s), sim_strikes[s], ssel[s], p);
        ref_g[s].add(ref_load[s], ref_strikes[s], rsel[s], p);
      }
    }
  }

  TrackingMetrics out;
  out.cycles = {static_cast<int>(sim_a[0].rows.size()), static_cast<int>(sim_a[3].rows.size())};
  require_cycles(out.cycles, "tracking metrics");
  for (int j = 0; j < kNumJoints; ++j) {
    const std::string name(kJointNames[j]);
    out.angles.push_back(compare(name, "deg", sim_a[j], ref_a[j], p));
    out.moments.push_back(compare(name, "Nm_per_kg", sim_m[j], ref_m[j], p));
  }
  if (has_grf)
    for (int s = 0; s < 2; ++s)
      out.grf.push_back(compare(s == 0 ? "grf_l" : "grf_r", "BW", sim_g[s], ref_g[s], p));
  out.angle_rmse = group_rmse(out.angles);
  out.moment_rmse = group_rmse(out.moments);
  out.grf_rmse = group_rmse(out.grf);
  return out;
}

TrackingMetrics tracking_metrics(const EpisodeTrace& trace, const ReferenceClip& clip, const CycleOptions& o) {
  return tracking_metrics(std::span<const EpisodeTrace>(&trace, 1), clip, o);
}

namespace {

double symmetry_from_stacks(std::span<const int> joints, const std::vector<Stack>& left,
                            const std::vector<Stack>& right, int points) {
  double ss = 0.0;
  for (size_t i = 0; i < joints.size(); ++i) {
    Eigen::VectorXd lm, ls, rm, rs;
    left[i].mean_spread(points, lm, ls);
    right[i].mean_spread(points, rm, rs);
    ss += (lm - rm).squaredNorm();
  }
  return std::sqrt(ss / (points * static_cast<double>(joints.size())));
}

void check_joints(std::span<const int> joints) {
  if (joints.empty()) throw ConfigError("symmetry: empty joint set");
  for (int j : joints)
    if (j < 0 || j >= 3) throw ConfigError("symmetry: joints are given by their left JointId");
}

}  // namespace

double symmetry_rmse(std::span<const EpisodeTrace> traces, std::span<const int> joints, const CycleOptions& o) {
  check_joints(joints);
  std::vector<Stack> left(joints.size()), right(joints.size());
  for (const auto& t : traces) {
    const auto strikes = trace_strikes(t);
    const Selection sl = select_cycles(strikes[0], o), sr = select_cycles(strikes[1], o);
    for (size_t i = 0; i < joints.size(); ++i) {
      const int j = joints[i];
      left[i].add(column(t, [&](const TraceStep& s) { return s.q[kRootDofs + j] * kDeg; }), strikes[0], sl,
                  o.points);
      right[i].add(column(t, [&](const TraceStep& s) { return s.q[kRootDofs + j + 3] * kDeg; }), strikes[1], sr,
                   o.points);
    }
  }
  require_cycles({static_cast<int>(left[0].rows.size()), static_cast<int>(right[0].rows.size())}, "symmetry");
  return symmetry_from_stacks(joints, left, right, o.points);
}

double symmetry_rmse(const EpisodeTrace& trace, std::span<const int> joints, const CycleOptions& o) {
  return symmetry_rmse(std::span<const EpisodeTrace>(&trace, 1), joints, o);
}

double symmetry_rmse(const ReferenceClip& clip, std::span<const int> joints, const CycleOptions& o) {
  check_joints(joints);
  const auto ev = detect_clip_events(clip);
  const Selection sl = select_cycles(ev.sides[0].strike_positions, o);
  const Selection sr = select_cycles(ev.sides[1].strike_positions, o);
  std::vector<Stack> left(joints.size()), right(joints.size());
  for (size_t i = 0; i < joints.size(); ++i) {
    const int j = joints[i];
    std::vector<double> l(clip.frames()), r(clip.frames());
    for (int k = 0; k < clip.frames(); ++k) {
      l[k] = clip.angles(k, 1 + j) * kDeg;
      r[k] = clip.angles(k, 4 + j) * kDeg;
    }
    left[i].add(l, ev.sides[0].strike_positions, sl, o.points);
    right[i].add(r, ev.sides[1].strike_positions, sr, o.points);
  }
  return symmetry_from_stacks(joints, left, right, o.points);
}

Side affected_side(const WeaknessMask& mask) {
  bool left = false, right = false;
  for (const auto& [name, cap] : mask) {
    if (name.ends_with("_l")) left = true;
    if (name.ends_with("_r")) right = true;
  }
  return right && !left ? Side::right : Side::left;
}

TorqueProfiles extract_torque_profiles(std::span<const EpisodeTrace> traces, double model_mass, Side affected,
                                       const CycleOptions& o) {
  if (!(model_mass > 0.0)) throw ConfigError("torque profiles: model mass must be positive");
  std::array<bool, kNumJoints> assisted{};
  for (const auto& t : traces)
    for (int j : t.meta.assisted) assisted[j] = true;
  if (std::none_of(assisted.begin(), assisted.end(), [](bool b) { return b; }))
    throw DataError("torque profiles: traces carry no exoskeleton device");

  std::array<Stack, kNumJoints> stacks;
  for (const auto& t : traces) {
    const auto strikes = trace_strikes(t);
    const std::array<Selection, 2> sel{select_cycles(strikes[0], o), select_cycles(strikes[1], o)};
    for (int j = 0; j < kNumJoints; ++j) {
      if (!assisted[j]) continue;
      const int s = j < 3 ? 0 : 1;
      stacks[j].add(column(t, [&](const TraceStep& st) { return st.exo[j] / model_mass; }), strikes[s], sel[s],
                    o.points);
    }
  }

  TorqueProfiles out;
  out.affected = affected;
  std::array<int, 2> counts{0, 0};
  for (int j = 0; j < kNumJoints; ++j)
    if (assisted[j]) counts[j < 3 ? 0 : 1] = std::max<int>(counts[j < 3 ? 0 : 1], stacks[j].rows.size());
  for (int s = 0; s < 2; ++s) {
    bool side_assisted = false;
    for (int j = 3 * s; j < 3 * s + 3; ++j) side_assisted = side_assisted || assisted[j];
    if (!side_assisted) counts[s] = 1;
  }
  require_cycles(counts, "torque profiles");

  std::array<double, kNumJoints> peak_mag{};
  for (int j = 0; j < kNumJoints; ++j) {
    if (!assisted[j]) continue;
    TorqueProfile pr;
    pr.joint = j;
    stacks[j].mean_spread(o.points, pr.mean, pr.spread);
    Eigen::Index at = 0;
    pr.mean.cwiseAbs().maxCoeff(&at);
    pr.peak = pr.mean[at];
    pr.peak_phase = 100.0 * static_cast<double>(at) / o.points;
    peak_mag[j] = std::abs(pr.peak);
    out.profiles.push_back(std::move(pr));
  }
  const int a0 = affected == Side::left ? 0 : 3, n0 = affected == Side::left ? 3 : 0;
  constexpr const char* kPair[3] = {"hip", "knee", "ankle"};
  for (int k = 0; k < 3; ++k) {
    if (!assisted[a0 + k] && !assisted[n0 + k]) continue;
    const double den = peak_mag[n0 + k];
    out.peak_ratio.emplace_back(kPair[k],
                                den > 0.0 ? peak_mag[a0 + k] / den : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

double gross_cost(std::span<const EpisodeTrace> traces) {
  if (traces.empty()) throw DataError("gross cost: no traces");
  std::vector<double> power;
  for (const auto& t : traces) {
    const auto p = t.muscle_power();
    power.insert(power.end(), p.begin(), p.end());
  }
  return gross_metabolic_cost(power, traces.front().meta.model_mass);
}

GaitReport build_report(std::span<const EpisodeTrace> traces, const ReferenceClip& clip, const CycleOptions& o) {
  if (traces.empty()) throw DataError("report: empty trace set");
  GaitReport r;
  r.fingerprint = traces.front().meta.fingerprint;
  r.meta = traces.front().meta;
  for (const auto& t : traces) {
    if (t.meta.fingerprint != r.fingerprint)
      throw DataError("report: mixed config fingerprints (" + r.fingerprint + " vs " + t.meta.fingerprint + ")");
    if (t.meta.model_mass != r.meta.model_mass) throw DataError("report: traces disagree on model mass");
    t.validate();
    double ret = 0.0;
    for (const auto& s : t.steps) ret += s.reward.total;
    r.mean_return += ret;
    r.steps += t.size();
  }
  r.traces = static_cast<int>(traces.size());
  r.mean_return /= r.traces;
  r.mean_length = static_cast<double>(r.steps) / r.traces;
  r.gross_cost = gross_cost(traces);
  try {
    r.tracking = tracking_metrics(traces, clip, o);
  } catch (const DataError& e) {
    r.tracking_error = e.what();
  }
  const int joints[] = {hip_l, knee_l, ankle_l};
  try {
    r.symmetry = symmetry_rmse(traces, joints, o);
  } catch (const DataError& e) {
    r.symmetry_error = e.what();
  }
  bool any_device = false;
  for (const auto& t : traces) any_device = any_device || !t.meta.assisted.empty();
  if (any_device) {
    try {
      r.torque = extract_torque_profiles(traces, r.meta.model_mass, affected_side(r.meta.mask), o);
    } catch (const DataError& e) {
      r.torque_error = e.what();
    }
  }
  return r;
}

}  // namespace gaitlab
