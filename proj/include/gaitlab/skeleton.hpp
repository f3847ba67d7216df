#pragma once

#include <Eigen/Core>

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace gaitlab {

// Generalized coordinate layout of the planar walker:
//   0 root x, 1 root y, 2 root pitch, 3..8 internal joints (see JointId).
inline constexpr int kNumCoords = 9;
inline constexpr int kNumJoints = 6;
inline constexpr int kRootDofs = 3;
inline constexpr double kGravity = 9.81;

using Coords = Eigen::Matrix<double, kNumCoords, 1>;
using JointVector = Eigen::Matrix<double, kNumJoints, 1>;

enum class Side { left = 0, right = 1 };

enum JointId : int { hip_l = 0, knee_l, ankle_l, hip_r, knee_r, ankle_r };

inline constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "hip_l", "knee_l", "ankle_l", "hip_r", "knee_r", "ankle_r"};

/// Index of a joint by name; throws ConfigError for unknown names.
int joint_index(std::string_view name);
inline int coord_of_joint(int joint) { return kRootDofs + joint; }
inline Side joint_side(int joint) { return joint < 3 ? Side::left : Side::right; }
/// Same joint on the opposite leg.
inline int contralateral(int joint) { return (joint + 3) % kNumJoints; }

struct SegmentSpec {
  std::string name;
  double mass = 0.0;        // kg
  double inertia = 0.0;     // kg m^2 about the centre of mass, sagittal axis
  double length = 0.0;      // m
  Eigen::Vector2d com{0.0, 0.0};  // local frame, m
};

/// A hinge between two segments. `location` is the joint centre expressed in
/// the parent's local frame. `axis_sign` maps the anatomical angle onto the
/// counter-clockwise rotation of the child (knee flexion rotates clockwise).
struct JointSpec {
  std::string name;
  std::string parent;
  std::string child;
  Eigen::Vector2d location{0.0, 0.0};
  double lower = 0.0;             // rad
  double upper = 0.0;             // rad
  double limit_stiffness = 0.0;   // N m / rad
  double limit_damping = 0.0;     // N m s / rad
  double axis_sign = 1.0;
};

struct ContactSphereSpec {
  std::string name;
  std::string segment;
  Eigen::Vector2d offset{0.0, 0.0};
  double radius = 0.0;
};

/// Named body point tracked for rewards and observations.
struct LandmarkSpec {
  std::string name;
  std::string segment;
  Eigen::Vector2d offset{0.0, 0.0};
};

/// Hunt-Crossley ground contact with regularized Coulomb friction.
struct ContactMaterial {
  double stiffness = 2.5e7;            // N / m^exponent
  double exponent = 1.5;
  double dissipation = 1.0;            // s / m
  double friction = 0.9;
  double transition_velocity = 0.01;   // m/s
};

struct SkeletonSpec {
  std::string name = "walker";
  std::string root = "pelvis";
  std::vector<SegmentSpec> segments;
  std::vector<JointSpec> joints;
  std::vector<ContactSphereSpec> contacts;
  std::vector<LandmarkSpec> landmarks;
  ContactMaterial material;
  double total_mass = 0.0;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
  int segment_index(std::string_view name) const;  // -1 when absent
};

enum class DeviceKind { none, hip, ankle };

std::string_view to_string(DeviceKind kind);
DeviceKind device_kind_from_string(std::string_view s);

struct ExoDeviceSpec {
  DeviceKind kind = DeviceKind::none;
  std::string name = "none";
  std::map<std::string, double> added_mass;   // segment name -> kg
  std::vector<std::string> assisted_joints;
  std::map<std::string, double> tau_max;      // joint name -> N m
  /// When positive, tau_max for every assisted joint is this value times the
  /// assisted model mass (resolved by resolve_tau_max).
  double tau_max_per_kg = 0.0;
  double cutoff_hz = 1.0;
  double total_added_mass = 0.0;

  void validate() const;
  double sum_added_mass() const;
  bool assists(int joint) const;
  /// Fills tau_max from tau_max_per_kg for every assisted joint.
  void resolve_tau_max(double model_mass);
  /// Torque bound per internal joint, zero for unassisted joints.
  JointVector tau_max_vector() const;
};

/// 75 kg, 1.75 m planar walker with standard segment-mass fractions.
SkeletonSpec default_skeleton();
ExoDeviceSpec no_device();
/// Added masses of the simulated hip and ankle devices.
ExoDeviceSpec hip_exo_device();
ExoDeviceSpec ankle_exo_device();

SkeletonSpec load_skeleton(const std::string& path);
void save_skeleton(const SkeletonSpec& spec, const std::string& path);
ExoDeviceSpec load_device(const std::string& path);
void save_device(const ExoDeviceSpec& spec, const std::string& path);

}  // namespace gaitlab
