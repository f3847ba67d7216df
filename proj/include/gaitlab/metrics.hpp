#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gaitlab/trace.hpp"

namespace gaitlab {

/// Vertical GRF level (body weights) marking heel strike and toe off.
inline constexpr double kStrikeThreshold = 0.05;
/// Zero-lag low-pass applied to simulated and reference moments.
inline constexpr double kMomentCutoff = 4.0;  // Hz

struct CycleOptions {
  int cycles = 10;  // averaged per side when available
  int skip = 2;     // settling cycles dropped first
  int points = 100;
};

/// Cycle-averaged comparison of one channel.
struct ChannelMetric {
  std::string name;
  std::string unit;
  double rmse = 0.0;
  double r2 = 1.0;  // NaN when the reference curve is flat
  Eigen::VectorXd sim_mean, sim_spread, ref_mean, ref_spread;
};

struct TrackingMetrics {
  std::vector<ChannelMetric> angles;   // hip/knee/ankle, left then right, deg
  std::vector<ChannelMetric> moments;  // same joints, N m / kg
  std::vector<ChannelMetric> grf;      // left, right vertical, body weights
  /// RMSE over the concatenated mean curves of each group.
  double angle_rmse = 0.0;
  double moment_rmse = 0.0;
  double grf_rmse = 0.0;
  std::array<int, 2> cycles{0, 0};  // cycles averaged per side
};

/// Strike positions (in trace steps) for each side of a simulated trace.
std::array<std::vector<double>, 2> trace_strikes(const EpisodeTrace& trace);

/// Simulated signals against the reference sampled on the trace's reference
/// clock. Each signal is cycle-normalized by its own heel strikes. Throws
/// DataError when no trace holds a complete cycle on some side.
TrackingMetrics tracking_metrics(std::span<const EpisodeTrace> traces, const ReferenceClip& clip,
                                 const CycleOptions& options = {});
TrackingMetrics tracking_metrics(const EpisodeTrace& trace, const ReferenceClip& clip,
                                 const CycleOptions& options = {});

/// RMSE (deg) between left and right cycle-averaged angles over `joints`
/// (left JointIds; the right partner is implied), each side aligned by its
/// own heel strikes.
double symmetry_rmse(std::span<const EpisodeTrace> traces, std::span<const int> joints,
                     const CycleOptions& options = {});
double symmetry_rmse(const EpisodeTrace& trace, std::span<const int> joints, const CycleOptions& options = {});
double symmetry_rmse(const ReferenceClip& clip, std::span<const int> joints, const CycleOptions& options = {});

struct TorqueProfile {
  int joint = 0;  // JointId
  Eigen::VectorXd mean;    // N m / kg over the gait cycle
  Eigen::VectorXd spread;
  double peak = 0.0;        // signed value at the largest magnitude
  double peak_phase = 0.0;  // % gait cycle
};

struct TorqueProfiles {
  std::vector<TorqueProfile> profiles;  // assisted joints in JointId order
  Side affected = Side::left;
  /// Affected over non-affected peak magnitude per assisted joint pair
  /// (hip, knee, ankle order); NaN when the non-affected peak is zero.
  std::vector<std::pair<std::string, double>> peak_ratio;
};

/// Exo torque curves normalized by `model_mass`. Throws DataError for traces
/// without an assisting device.
TorqueProfiles extract_torque_profiles(std::span<const EpisodeTrace> traces, double model_mass,
                                       Side affected = Side::left, const CycleOptions& options = {});
/// Side carrying the weakness mask, left when the mask is empty.
Side affected_side(const WeaknessMask& mask);

/// Gross cost (W/kg, basal included) over all steps of all traces.
double gross_cost(std::span<const EpisodeTrace> traces);

struct GaitReport {
  std::string fingerprint;
  TraceMeta meta;  // of the first trace
  int traces = 0;
  int steps = 0;
  double mean_return = 0.0;
  double mean_length = 0.0;
  double gross_cost = 0.0;  // W/kg
  std::optional<TrackingMetrics> tracking;
  std::string tracking_error;
  std::optional<double> symmetry;  // deg
  std::string symmetry_error;
  std::optional<TorqueProfiles> torque;
  std::string torque_error;
};

/// Throws DataError for an empty set or mixed fingerprints. Metrics that need
/// complete cycles are left empty with a reason when the traces are too short.
GaitReport build_report(std::span<const EpisodeTrace> traces, const ReferenceClip& clip,
                        const CycleOptions& options = {});
/// Writes report.json and per-plot CSV files into `out_dir`. Files are
/// staged and renamed so a failure leaves no partial output.
void write_report(const GaitReport& report, const std::string& out_dir);
/// Only the exo torque profile CSV.
void write_torque_profiles(const TorqueProfiles& profiles, const std::string& path);

}  // namespace gaitlab
