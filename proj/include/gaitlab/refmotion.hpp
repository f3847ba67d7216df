#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gaitlab/skeleton.hpp"

namespace gaitlab {

class Model;

/// Tracked angle channels: root pitch followed by the six joints.
inline constexpr int kNumAngles = 1 + kNumJoints;
inline constexpr std::array<std::string_view, kNumAngles> kAngleNames = {
    "pitch", "hip_l", "knee_l", "ankle_l", "hip_r", "knee_r", "ankle_r"};

/// Uniformly sampled reference motion. Row k is sampled at time k / sample_rate.
struct ReferenceClip {
  double sample_rate = 100.0;             // Hz
  Eigen::MatrixXd angles;                 // frames x 7, rad
  Eigen::MatrixXd velocities;             // frames x 7, rad/s
  Eigen::MatrixXd moments;                // frames x 6, N m / kg (subject-mass normalized)
  Eigen::MatrixXd root;                   // frames x 2, m (pelvis origin, world frame)
  std::vector<std::string> landmark_names;
  Eigen::MatrixXd landmarks;              // frames x 2L, (x, y) per landmark, world frame
  Eigen::MatrixXd grf;                    // frames x 2 vertical GRF in body weights, or 0 columns
  Eigen::MatrixXd contact;                // frames x 2 contact flags (0/1), or 0 columns
  double speed = 0.0;                     // m/s label
  double subject_mass = 75.0;             // kg
  bool mirrored = false;
  /// Forward root displacement between frame 0 and the frame one clip length
  /// later, used when reference time wraps. NaN means extrapolate.
  double wrap_advance = std::numeric_limits<double>::quiet_NaN();

  int frames() const { return static_cast<int>(angles.rows()); }
  double dt() const { return 1.0 / sample_rate; }
  double time(int frame) const { return frame / sample_rate; }
  /// Clip length as a period: frames / sample_rate.
  double period() const { return frames() / sample_rate; }
  int landmark_index(const std::string& name) const;
  double resolved_wrap_advance() const;
  /// Shapes, finiteness, pairing, and velocity consistency (5% RMS of
  /// central differences). Throws DataError.
  void validate() const;
};

/// Reference quantities at an arbitrary (wrapped) time.
struct ReferenceFrame {
  Eigen::Matrix<double, kNumAngles, 1> angles;
  Eigen::Matrix<double, kNumAngles, 1> velocities;
  JointVector moments;       // N m / kg
  Eigen::Vector2d root;
  Eigen::Vector2d root_velocity;
  std::vector<Eigen::Vector2d> landmarks;
  /// Vertical GRF (left, right) in body weights; zero when the clip has none.
  Eigen::Vector2d grf = Eigen::Vector2d::Zero();
};

/// Linear interpolation in time. Times past the end wrap cyclically, with
/// global x positions advanced by the wrap advance per period.
ReferenceFrame sample_clip(const ReferenceClip& clip, double t);

ReferenceClip load_clip(const std::string& csv_path);
/// Writes `<path>` (CSV) and `<path minus .csv>.json` (sidecar schema).
void save_clip(const ReferenceClip& clip, const std::string& csv_path);
std::string sidecar_path(const std::string& csv_path);

struct StanceInterval {
  int begin = 0;  // first frame
  int end = 0;    // last frame, inclusive
  double speed = 0.0;
};

struct BeltSpeedEstimate {
  std::vector<StanceInterval> intervals;
  double speed = 0.0;  // duration-weighted mean
};

/// Belt speed from toe x trajectories during stance. Each stance run of at
/// least `min_frames` frames contributes the negated mean forward toe
/// velocity, weighted by its duration. Throws DataError without stance.
BeltSpeedEstimate estimate_belt_speed(std::span<const std::vector<double>> toe_x,
                                      std::span<const std::vector<std::uint8_t>> stance, double sample_rate,
                                      int min_frames = 5);

/// Adds belt_speed * t to every global x position channel.
ReferenceClip to_overground(const ReferenceClip& clip, double belt_speed);

/// Swaps left and right channels and toggles the mirrored flag.
ReferenceClip mirror_clip(const ReferenceClip& clip);

/// Two-pass second-order Butterworth low-pass with the cutoff corrected so
/// the combined response is -3 dB at `cutoff`. Odd-reflection padding.
std::vector<double> zero_lag_lowpass(std::span<const double> signal, double sample_rate, double cutoff);
Eigen::MatrixXd zero_lag_lowpass(const Eigen::MatrixXd& columns, double sample_rate, double cutoff);

struct SideEvents {
  std::vector<int> strikes;
  std::vector<int> offs;
  /// Sub-frame crossing positions in frame units.
  std::vector<double> strike_positions;
  std::vector<double> off_positions;
  int cycles() const { return strikes.size() < 2 ? 0 : static_cast<int>(strikes.size()) - 1; }
};

struct GaitEvents {
  std::array<SideEvents, 2> sides;  // left, right
};

/// Heel strike = upward threshold crossing, toe off = downward crossing, with
/// a debounce window during which the signal must stay on the new side.
SideEvents detect_side_events(std::span<const double> loading, double threshold, double sample_rate,
                              double debounce = 0.05);
/// Detects both sides. Throws DataError naming the sides with no full cycle.
GaitEvents detect_gait_events(std::span<const double> left, std::span<const double> right, double threshold,
                              double sample_rate, double debounce = 0.05);
/// Events from the clip's GRF channels when present, foot heights otherwise.
GaitEvents detect_clip_events(const ReferenceClip& clip);

struct CycleAverage {
  Eigen::MatrixXd cycles;  // n_cycles x n_points
  Eigen::VectorXd mean;
  Eigen::VectorXd spread;  // sample standard deviation
};

/// Resamples each cycle (strike k to strike k+1, positions in frame units) at
/// phases i / n_points and averages the first n_cycles after `skip`.
/// Throws DataError stating how many cycles were available.
CycleAverage cycle_normalize(std::span<const double> signal, std::span<const double> strike_positions, int n_cycles,
                             int n_points = 100, int skip = 0);

struct PreprocessOptions {
  /// Convert treadmill-frame positions to overground with the estimated belt
  /// speed. Off for clips recorded overground.
  bool treadmill = true;
  double filter_cutoff = 6.0;  // Hz, zero-lag low-pass on joint channels; <= 0 skips
  bool mirror = true;
  std::string toe_left = "toe_l";
  std::string toe_right = "toe_r";
  /// Stance when vertical GRF exceeds this (body weights) and the clip has
  /// no contact flags.
  double stance_threshold = 0.05;
  /// Belt speed uses only stance frames with the toe within this distance (m)
  /// of its median stance height (foot flat). Heel rocker and push-off move
  /// the toe while the foot is loaded. <= 0 uses all stance frames.
  double toe_flat_band = 0.002;
};

struct PreprocessResult {
  ReferenceClip clip;
  std::optional<ReferenceClip> mirrored;
  BeltSpeedEstimate belt;
  GaitEvents events;
};

/// Belt speed estimation, overground conversion, filtering of angles,
/// velocities, moments and GRF, mirroring and event detection.
PreprocessResult preprocess_clip(const ReferenceClip& raw, const PreprocessOptions& options = {});

struct SyntheticGaitParams {
  double speed = 1.2;          // m/s
  double sample_rate = 100.0;  // Hz
  int cycles = 12;
  /// Express global positions in a treadmill frame moving with the belt.
  bool treadmill = false;
};

/// Periodic walking clip generated from smooth phase-locked joint curves.
/// Pelvis height keeps the lowest sphere of the stance foot on the ground and the
/// forward motion keeps the stance foot from slipping; the cycle period is
/// chosen so the mean speed equals `speed`.
ReferenceClip synthetic_clip(const Model& model, const SyntheticGaitParams& params = {});

}  // namespace gaitlab
