#pragma once

#include <span>
#include <string>
#include <vector>

#include "gaitlab/skeleton.hpp"

namespace gaitlab {

/// Moment arm r(theta) = sum_k c_k theta^k (m) about one joint. Positive arms
/// produce flexion (hip, knee) or dorsiflexion (ankle) moments, and the
/// muscle-tendon unit shortens as the joint rotates in that direction.
struct MomentArm {
  std::string joint;
  std::vector<double> coefficients;

  int joint_index() const;
  double at(double angle) const;
  /// Integral of r from 0 to angle.
  double integral(double angle) const;
};

enum class TendonModel { elastic, rigid };

struct MuscleSpec {
  std::string name;
  double max_isometric_force = 0.0;     // N
  double optimal_fiber_length = 0.0;    // m
  double tendon_slack_length = 0.0;     // m
  double pennation_at_optimum = 0.0;    // rad
  double max_contraction_velocity = 10.0;  // optimal fiber lengths / s
  double activation_time_constant = 0.010;    // s
  double deactivation_time_constant = 0.040;  // s
  double fast_twitch_ratio = 0.5;
  std::string fast_twitch_source;
  std::vector<MomentArm> moment_arms;
  TendonModel tendon = TendonModel::elastic;
  /// Muscle-tendon length with every joint at zero; when <= 0 the length at
  /// which the fibre sits at optimum with a slack tendon is used.
  double neutral_mtu_length = 0.0;

  void validate() const;
  /// Muscle mass from specific tension and density (kg).
  double mass() const;
  double resolved_neutral_length() const;
  double mtu_length(const JointVector& angles) const;
  double mtu_velocity(const JointVector& angles, const JointVector& rates) const;
  /// Fibre thickness l_opt * sin(pennation at optimum), constant under
  /// the constant-thickness pennation model.
  double fiber_height() const;
};

inline constexpr double kMuscleDensity = 1059.7;      // kg / m^3
inline constexpr double kSpecificTension = 0.25e6;    // Pa

struct MuscleState {
  double excitation = 0.0;
  double activation = 0.0;
  double fiber_length = 1.0;    // normalized by optimal fibre length
  double fiber_velocity = 0.0;  // normalized by max contraction velocity
  double tendon_force = 0.0;       // N
  double active_fiber_force = 0.0; // N, along the fibre
};

/// Hill-type curves. Lengths normalized by optimal fibre length, velocities by
/// the maximum contraction velocity (negative = shortening), forces by the
/// maximum isometric force.
namespace curves {
inline constexpr double kActiveWidth = 0.45;       // Gaussian f_L width
inline constexpr double kPassiveStrain = 0.6;      // passive force = 1 at this strain
inline constexpr double kPassiveShape = 4.0;
inline constexpr double kHillCurvature = 0.5;
inline constexpr double kEccentricForceMax = 1.8;
inline constexpr double kTendonStrainAtMax = 0.049;
inline constexpr double kTendonToeFraction = 0.609;
inline constexpr double kTendonToeShape = 3.0;
inline constexpr double kFiberDamping = 0.1;

double active_force_length(double l);
double active_force_length_slope(double l);
double passive_force_length(double l);
double passive_force_length_slope(double l);
double force_velocity(double v);
double force_velocity_slope(double v);
double tendon_force_strain(double strain);
double tendon_force_strain_slope(double strain);
}  // namespace curves

/// One forward Euler step of first-order activation dynamics, clamped to [0, 1].
double activation_step(double activation, double excitation, double dt, const MuscleSpec& spec);

/// Activation after `interval` seconds of constant excitation, taken as
/// `substeps` equal Euler steps.
double integrate_activation(double activation, double excitation, double interval, int substeps,
                            const MuscleSpec& spec);

/// Largest Euler step the simulator takes for activation. At 1 ms a 10 ms
/// time constant is off the exact response by about 0.02.
inline constexpr double kActivationMaxStep = 0.25e-3;  // s

/// Euler steps the simulator uses to cover `interval`.
int activation_substeps(double interval);

struct MtuResult {
  double tendon_force = 0.0;
  MuscleState state;
};

/// Solves the fibre-tendon force equilibrium for the next fibre length with a
/// backward Euler fibre velocity over `dt`. `state.fiber_length` is the
/// previous fibre length; the returned state carries the new one. The rigid
/// tendon variant uses the geometric fibre length and `mtu_velocity` directly.
/// Throws ConvergenceError when the equilibrium cannot be bracketed.
MtuResult mtu_force(const MuscleState& state, double mtu_length, double mtu_velocity, double activation,
                    const MuscleSpec& spec, double dt);

/// Fibre length at static (zero velocity) equilibrium for the given activation.
MuscleState equilibrate(double mtu_length, double activation, const MuscleSpec& spec);

/// Net moment of all muscles at each joint (N m).
JointVector joint_moments(std::span<const MuscleState> states, std::span<const MuscleSpec> specs,
                          const JointVector& angles);

/// Nine muscles per leg: iliopsoas, gluteals, hamstrings, rectus femoris,
/// vasti, biceps femoris short head, gastrocnemius, soleus, tibialis anterior.
std::vector<MuscleSpec> default_muscles();
std::vector<MuscleSpec> load_muscles(const std::string& path);
void save_muscles(std::span<const MuscleSpec> muscles, const std::string& path);
int muscle_index(std::span<const MuscleSpec> muscles, const std::string& name);

}  // namespace gaitlab
