#pragma once

#include <Eigen/Core>

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "gaitlab/skeleton.hpp"

namespace gaitlab {

/// Mechanical state of the walker at one physics tick.
struct ModelState {
  Coords q = Coords::Zero();
  Coords qd = Coords::Zero();
  /// Ground reaction force per foot (left, right), N, averaged over the tick.
  std::array<Eigen::Vector2d, 2> grf{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  Eigen::Vector2d root = Eigen::Vector2d::Zero();
  /// World positions of the model landmarks, in Model::landmark order.
  std::vector<Eigen::Vector2d> landmarks;
  /// Net joint moments applied during the tick (muscle + exo + passive), N m.
  JointVector tau = JointVector::Zero();
};

struct ContactForce {
  double tangential = 0.0;  // N, along +x
  double normal = 0.0;      // N, along +y, never negative
  /// Slope of the friction force with slip speed while in the viscous
  /// regime (N s/m); zero when sliding or out of contact.
  double viscous_coefficient = 0.0;
};

/// Hunt-Crossley normal force f = k d^p (1 + c d') clamped at zero, with
/// friction bounded by the Coulomb cone and linear below the transition
/// slip speed.
ContactForce contact_force(double depth, double depth_rate, double slip_velocity,
                           const ContactMaterial& material);

struct StepOptions {
  bool contact = true;
  bool joint_limits = true;
  bool gravity = true;
  /// Coordinates held fixed (zero velocity) during integration.
  std::array<bool, kNumCoords> locked{};
  /// Semi-implicit Euler substeps per tick.
  int substeps = 5;
};

/// Called at every integration substep to obtain muscle joint moments.
using TorqueProvider = std::function<JointVector(const Coords& q, const Coords& qd)>;

class Model {
 public:
  struct Segment {
    std::string name;
    int parent = -1;
    int joint = -1;  // JointId of the proximal joint, -1 for the root
    Eigen::Vector2d joint_location{0.0, 0.0};  // in the parent's frame
    double axis_sign = 1.0;
    double mass = 0.0;
    double inertia = 0.0;
    Eigen::Vector2d com{0.0, 0.0};
  };
  struct Contact {
    int segment = -1;
    Eigen::Vector2d offset{0.0, 0.0};
    double radius = 0.0;
    int foot = -1;  // 0 left, 1 right, -1 other
  };
  struct Landmark {
    std::string name;
    int segment = -1;
    Eigen::Vector2d offset{0.0, 0.0};
  };
  struct Limit {
    double lower = 0.0, upper = 0.0, stiffness = 0.0, damping = 0.0;
  };

  const SkeletonSpec& skeleton() const { return skeleton_; }
  const ExoDeviceSpec& device() const { return device_; }
  double total_mass() const { return total_mass_; }
  double weight() const { return total_mass_ * kGravity; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<Contact>& contacts() const { return contacts_; }
  const std::vector<Landmark>& landmarks() const { return landmarks_; }
  const std::array<Limit, kNumJoints>& limits() const { return limits_; }
  const ContactMaterial& material() const { return skeleton_.material; }
  int segment_index(const std::string& name) const;
  /// Throws ConfigError when the landmark does not exist.
  int landmark_index(const std::string& name) const;

 private:
  friend Model build_model(const SkeletonSpec&, const ExoDeviceSpec&);
  SkeletonSpec skeleton_;  // after device augmentation
  ExoDeviceSpec device_;
  double total_mass_ = 0.0;
  std::vector<Segment> segments_;  // topological order, root first
  std::vector<Contact> contacts_;
  std::vector<Landmark> landmarks_;
  std::array<Limit, kNumJoints> limits_{};
};

/// Applies device masses to the skeleton. Each affected segment gains the
/// device mass and its inertia is scaled by m_new / m_old.
Model build_model(const SkeletonSpec& skeleton, const ExoDeviceSpec& device);

/// Pose and velocity of every segment plus the Jacobians of its origin.
struct SegmentKinematics {
  double angle = 0.0;
  double omega = 0.0;
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  Eigen::Vector2d origin_velocity = Eigen::Vector2d::Zero();
  Eigen::Vector2d origin_bias = Eigen::Vector2d::Zero();  // J-dot * qd
  Eigen::Matrix<double, 2, kNumCoords> jacobian = Eigen::Matrix<double, 2, kNumCoords>::Zero();
  Eigen::Matrix<double, 1, kNumCoords> angular_jacobian = Eigen::Matrix<double, 1, kNumCoords>::Zero();
};

struct PointKinematics {
  Eigen::Vector2d position;
  Eigen::Vector2d velocity;
  Eigen::Vector2d bias;
  Eigen::Matrix<double, 2, kNumCoords> jacobian;
};

std::vector<SegmentKinematics> segment_kinematics(const Model& model, const Coords& q, const Coords& qd);
PointKinematics point_kinematics(const SegmentKinematics& seg, const Eigen::Vector2d& local);

/// State with landmarks filled from forward kinematics, zero GRF and moments.
ModelState make_state(const Model& model, const Coords& q, const Coords& qd);
std::vector<Eigen::Vector2d> landmark_positions(const Model& model, const Coords& q);
std::vector<Eigen::Vector2d> landmark_velocities(const Model& model, const Coords& q, const Coords& qd);

/// Kinetic plus gravitational potential energy (J), potential measured from y = 0.
double mechanical_energy(const Model& model, const Coords& q, const Coords& qd);
/// Elastic contact force only (no rate term): total vertical force per foot.
std::array<double, 2> static_vertical_grf(const Model& model, const Coords& q);
/// Exponential joint-limit torques engaging 2 degrees before each limit.
JointVector passive_limit_torques(const Model& model, const Coords& q, const Coords& qd);

/// Advances the state one physics tick of length dt with constant muscle
/// moments. Throws DivergedStateError on non-finite coordinates.
ModelState step_physics(const Model& model, const ModelState& state, const JointVector& muscle_torques,
                        const JointVector& exo_torques, double dt, const StepOptions& options = {});
/// Same, re-evaluating muscle moments at every integration substep.
ModelState step_physics_coupled(const Model& model, const ModelState& state, const TorqueProvider& muscle_torques,
                        const JointVector& exo_torques, double dt, const StepOptions& options = {});

}  // namespace gaitlab
