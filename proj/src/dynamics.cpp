#include "gaitlab/dynamics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gaitlab/errors.hpp"

namespace gaitlab {

namespace {

constexpr double kLimitMargin = 2.0 * std::numbers::pi / 180.0;
// Past this normalized overshoot the limit torque continues linearly with the
// slope reached there, keeping the stiffness within the integrator's range.
constexpr double kLimitExponentCap = 3.0;

// expm1(x) continued linearly beyond the cap.
double limit_shape(double x) {
  if (x <= kLimitExponentCap) return std::expm1(x);
  return std::expm1(kLimitExponentCap) + std::exp(kLimitExponentCap) * (x - kLimitExponentCap);
}

double limit_shape_slope(double x) { return std::exp(std::min(x, kLimitExponentCap)); }

Eigen::Vector2d rotate(double angle, const Eigen::Vector2d& v) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

// d/d(angle) of a rotated vector.
Eigen::Vector2d perp(const Eigen::Vector2d& w) { return {-w.y(), w.x()}; }

int foot_of_segment(const std::string& name) {
  if (name == "foot_l") return 0;
  if (name == "foot_r") return 1;
  return -1;
}

}  // namespace

ContactForce contact_force(double depth, double depth_rate, double slip_velocity,
                           const ContactMaterial& m) {
  ContactForce f;
  if (!(depth > 0.0)) return f;
  const double elastic = m.stiffness * std::pow(depth, m.exponent);
  f.normal = std::max(0.0, elastic * (1.0 + m.dissipation * depth_rate));
  if (f.normal == 0.0) return f;
  const double cap = m.friction * f.normal;
  if (std::abs(slip_velocity) < m.transition_velocity) {
    f.viscous_coefficient = cap / m.transition_velocity;
    f.tangential = -f.viscous_coefficient * slip_velocity;
  } else {
    f.tangential = slip_velocity > 0.0 ? -cap : cap;
  }
  return f;
}

int Model::segment_index(const std::string& name) const {
  for (std::size_t i = 0; i < segments_.size(); ++i)
    if (segments_[i].name == name) return static_cast<int>(i);
  return -1;
}

int Model::landmark_index(const std::string& name) const {
  for (std::size_t i = 0; i < landmarks_.size(); ++i)
    if (landmarks_[i].name == name) return static_cast<int>(i);
  throw ConfigError("model has no landmark '" + name + "'");
}

Model build_model(const SkeletonSpec& skeleton, const ExoDeviceSpec& device) {
  skeleton.validate();
  device.validate();
  Model model;
  model.skeleton_ = skeleton;
  model.device_ = device;
  for (const auto& [seg, added] : device.added_mass) {
    int idx = skeleton.segment_index(seg);
    if (idx < 0) throw ConfigError("device '" + device.name + "' adds mass to unknown segment '" + seg + "'");
    auto& s = model.skeleton_.segments[idx];
    const double m_new = s.mass + added;
    s.inertia *= m_new / s.mass;
    s.mass = m_new;
  }
  model.skeleton_.total_mass = skeleton.total_mass + device.total_added_mass;
  model.total_mass_ = model.skeleton_.total_mass;
  model.device_.resolve_tau_max(model.total_mass_);

  // Topological ordering: root first, then children breadth-first.
  const auto& sk = model.skeleton_;
  std::vector<std::string> order{sk.root};
  for (std::size_t i = 0; i < order.size(); ++i)
    for (const auto& j : sk.joints)
      if (j.parent == order[i]) order.push_back(j.child);
  for (const auto& name : order) {
    const auto& spec = sk.segments[sk.segment_index(name)];
    Model::Segment seg;
    seg.name = spec.name;
    seg.mass = spec.mass;
    seg.inertia = spec.inertia;
    seg.com = spec.com;
    for (const auto& j : sk.joints) {
      if (j.child != name) continue;
      seg.joint = joint_index(j.name);
      seg.joint_location = j.location;
      seg.axis_sign = j.axis_sign;
      for (std::size_t p = 0; p < model.segments_.size(); ++p)
        if (model.segments_[p].name == j.parent) seg.parent = static_cast<int>(p);
    }
    model.segments_.push_back(seg);
  }
  for (const auto& j : sk.joints)
    model.limits_[joint_index(j.name)] = {j.lower, j.upper, j.limit_stiffness, j.limit_damping};
  for (const auto& c : sk.contacts) {
    int seg = model.segment_index(c.segment);
    model.contacts_.push_back({seg, c.offset, c.radius, foot_of_segment(c.segment)});
  }
  for (const auto& l : sk.landmarks) model.landmarks_.push_back({l.name, model.segment_index(l.segment), l.offset});
  return model;
}

std::vector<SegmentKinematics> segment_kinematics(const Model& model, const Coords& q, const Coords& qd) {
  const auto& segs = model.segments();
  std::vector<SegmentKinematics> kin(segs.size());
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& s = segs[i];
    auto& k = kin[i];
    if (s.parent < 0) {
      k.angle = q[2];
      k.omega = qd[2];
      k.origin = {q[0], q[1]};
      k.origin_velocity = {qd[0], qd[1]};
      k.origin_bias.setZero();
      k.jacobian.setZero();
      k.jacobian(0, 0) = 1.0;
      k.jacobian(1, 1) = 1.0;
      k.angular_jacobian.setZero();
      k.angular_jacobian(2) = 1.0;
      continue;
    }
    const auto& p = kin[s.parent];
    const int c = coord_of_joint(s.joint);
    PointKinematics joint = point_kinematics(p, s.joint_location);
    k.angle = p.angle + s.axis_sign * q[c];
    k.omega = p.omega + s.axis_sign * qd[c];
    k.origin = joint.position;
    k.origin_velocity = joint.velocity;
    k.origin_bias = joint.bias;
    k.jacobian = joint.jacobian;
    k.angular_jacobian = p.angular_jacobian;
    k.angular_jacobian(c) += s.axis_sign;
  }
  return kin;
}

PointKinematics point_kinematics(const SegmentKinematics& seg, const Eigen::Vector2d& local) {
  const Eigen::Vector2d w = rotate(seg.angle, local);
  const Eigen::Vector2d pw = perp(w);
  PointKinematics p;
  p.position = seg.origin + w;
  p.velocity = seg.origin_velocity + seg.omega * pw;
  p.bias = seg.origin_bias - seg.omega * seg.omega * w;
  p.jacobian = seg.jacobian + pw * seg.angular_jacobian;
  return p;
}

std::vector<Eigen::Vector2d> landmark_positions(const Model& model, const Coords& q) {
  auto kin = segment_kinematics(model, q, Coords::Zero());
  std::vector<Eigen::Vector2d> out;
  out.reserve(model.landmarks().size());
  for (const auto& l : model.landmarks()) out.push_back(point_kinematics(kin[l.segment], l.offset).position);
  return out;
}

std::vector<Eigen::Vector2d> landmark_velocities(const Model& model, const Coords& q, const Coords& qd) {
  auto kin = segment_kinematics(model, q, qd);
  std::vector<Eigen::Vector2d> out;
  out.reserve(model.landmarks().size());
  for (const auto& l : model.landmarks()) out.push_back(point_kinematics(kin[l.segment], l.offset).velocity);
  return out;
}

ModelState make_state(const Model& model, const Coords& q, const Coords& qd) {
  ModelState s;
  s.q = q;
  s.qd = qd;
  s.root = {q[0], q[1]};
  s.landmarks = landmark_positions(model, q);
  return s;
}

double mechanical_energy(const Model& model, const Coords& q, const Coords& qd) {
  auto kin = segment_kinematics(model, q, qd);
  double e = 0.0;
  for (std::size_t i = 0; i < kin.size(); ++i) {
    const auto& s = model.segments()[i];
    auto c = point_kinematics(kin[i], s.com);
    e += 0.5 * s.mass * c.velocity.squaredNorm() + 0.5 * s.inertia * kin[i].omega * kin[i].omega +
         s.mass * kGravity * c.position.y();
  }
  return e;
}

std::array<double, 2> static_vertical_grf(const Model& model, const Coords& q) {
  auto kin = segment_kinematics(model, q, Coords::Zero());
  std::array<double, 2> f{0.0, 0.0};
  const auto& m = model.material();
  for (const auto& c : model.contacts()) {
    if (c.foot < 0) continue;
    auto center = point_kinematics(kin[c.segment], c.offset);
    const double depth = c.radius - center.position.y();
    if (depth > 0.0) f[c.foot] += m.stiffness * std::pow(depth, m.exponent);
  }
  return f;
}

namespace {

struct LimitResponse {
  JointVector torque = JointVector::Zero();
  JointVector stiffness = JointVector::Zero();  // -d torque / d angle
  JointVector damping = JointVector::Zero();    // -d torque / d rate
};

LimitResponse limit_response(const Model& model, const Coords& q, const Coords& qd) {
  LimitResponse r;
  for (int j = 0; j < kNumJoints; ++j) {
    const auto& lim = model.limits()[j];
    const double angle = q[coord_of_joint(j)], rate = qd[coord_of_joint(j)];
    const double over = angle - (lim.upper - kLimitMargin);
    const double under = (lim.lower + kLimitMargin) - angle;
    double x = 0.0, sign = 0.0;
    if (over > 0.0) {
      x = over / kLimitMargin;
      sign = -1.0;
    } else if (under > 0.0) {
      x = under / kLimitMargin;
      sign = 1.0;
    } else {
      continue;
    }
    const double engage = -std::expm1(-x);
    r.torque[j] = sign * lim.stiffness * kLimitMargin * limit_shape(x) - lim.damping * rate * engage;
    r.stiffness[j] = lim.stiffness * limit_shape_slope(x);
    r.damping[j] = lim.damping * engage;
  }
  return r;
}

}  // namespace

JointVector passive_limit_torques(const Model& model, const Coords& q, const Coords& qd) {
  return limit_response(model, q, qd).torque;
}

ModelState step_physics(const Model& model, const ModelState& state, const JointVector& muscle_torques,
                        const JointVector& exo_torques, double dt, const StepOptions& options) {
  return step_physics_coupled(
      model, state, [&](const Coords&, const Coords&) { return muscle_torques; }, exo_torques, dt, options);
}

ModelState step_physics_coupled(const Model& model, const ModelState& state, const TorqueProvider& muscle_torques,
                        const JointVector& exo_torques, double dt, const StepOptions& options) {
  if (!(dt > 0.0) || options.substeps < 1) throw ConfigError("step_physics needs dt > 0 and >= 1 substep");
  const int n = options.substeps;
  const double h = dt / n;
  const auto& segs = model.segments();
  const auto& mat = model.material();

  std::vector<int> free;
  for (int i = 0; i < kNumCoords; ++i)
    if (!options.locked[i]) free.push_back(i);
  const int nf = static_cast<int>(free.size());

  Coords q = state.q, qd = state.qd;
  for (int i = 0; i < kNumCoords; ++i)
    if (options.locked[i]) qd[i] = 0.0;

  JointVector tau_sum = JointVector::Zero();
  std::array<Eigen::Vector2d, 2> grf_sum{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};

  using Mat = Eigen::Matrix<double, kNumCoords, kNumCoords>;
  using BoundedMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kNumCoords, kNumCoords>;
  using BoundedVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kNumCoords, 1>;
  struct ViscousContact {
    int foot;
    Eigen::Matrix<double, 1, kNumCoords> row;
    double coefficient;
  };
  std::vector<ViscousContact> viscous;

  for (int step = 0; step < n; ++step) {
    auto kin = segment_kinematics(model, q, qd);
    Mat mass = Mat::Zero();
    Coords force = Coords::Zero();
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const auto& s = segs[i];
      auto com = point_kinematics(kin[i], s.com);
      mass.noalias() += s.mass * com.jacobian.transpose() * com.jacobian;
      mass.noalias() += s.inertia * kin[i].angular_jacobian.transpose() * kin[i].angular_jacobian;
      force.noalias() -= s.mass * com.jacobian.transpose() * com.bias;
      if (options.gravity) force.noalias() += com.jacobian.transpose() * Eigen::Vector2d(0.0, -s.mass * kGravity);
    }

    JointVector tau = muscle_torques(q, qd) + exo_torques;
    // Stiff forces are integrated linearly implicitly:
    //   (M + h D + h^2 K) dqd = h (F - h K qd)
    // with D and K the negated velocity and position Jacobians of F.
    Mat damp = Mat::Zero();
    Mat stiff = Mat::Zero();
    if (options.joint_limits) {
      const LimitResponse lim = limit_response(model, q, qd);
      tau += lim.torque;
      for (int j = 0; j < kNumJoints; ++j) {
        damp(coord_of_joint(j), coord_of_joint(j)) += lim.damping[j];
        stiff(coord_of_joint(j), coord_of_joint(j)) += lim.stiffness[j];
      }
    }
    for (int j = 0; j < kNumJoints; ++j) force[coord_of_joint(j)] += tau[j];
    tau_sum += tau;

    viscous.clear();
    if (options.contact) {
      for (const auto& c : model.contacts()) {
        auto center = point_kinematics(kin[c.segment], c.offset);
        const double depth = c.radius - center.position.y();
        if (!(depth > 0.0)) continue;
        // The contact point is the lowest point of the sphere, rigidly
        // attached to the segment.
        const Eigen::Vector2d arm(0.0, -c.radius);
        Eigen::Matrix<double, 2, kNumCoords> jac = center.jacobian + perp(arm) * kin[c.segment].angular_jacobian;
        const double slip = center.velocity.x() + kin[c.segment].omega * c.radius;
        const double depth_rate = -center.velocity.y();
        ContactForce f = contact_force(depth, depth_rate, slip, mat);
        force.noalias() += jac.row(1).transpose() * f.normal;
        if (f.normal > 0.0) {
          const double elastic = mat.stiffness * std::pow(depth, mat.exponent);
          const double k_n = mat.exponent * elastic / depth * (1.0 + mat.dissipation * depth_rate);
          const double c_n = elastic * mat.dissipation;
          if (k_n > 0.0) stiff.noalias() += k_n * jac.row(1).transpose() * jac.row(1);
          damp.noalias() += c_n * jac.row(1).transpose() * jac.row(1);
        }
        if (f.viscous_coefficient > 0.0) {
          damp.noalias() += f.viscous_coefficient * jac.row(0).transpose() * jac.row(0);
          force.noalias() -= f.viscous_coefficient * jac.row(0).transpose() * jac.row(0).dot(qd);
          viscous.push_back({c.foot, jac.row(0), f.viscous_coefficient});
        } else {
          force.noalias() += jac.row(0).transpose() * f.tangential;
          if (c.foot >= 0) grf_sum[c.foot].x() += f.tangential;
        }
        if (c.foot >= 0) grf_sum[c.foot].y() += f.normal;
      }
    }

    BoundedVector dqd(nf), rhs(nf);
    BoundedMatrix lhs(nf, nf);
    const Coords k_qd = stiff * qd;
    for (int a = 0; a < nf; ++a) {
      rhs[a] = h * (force[free[a]] - h * k_qd[free[a]]);
      for (int b = 0; b < nf; ++b)
        lhs(a, b) = mass(free[a], free[b]) + h * damp(free[a], free[b]) + h * h * stiff(free[a], free[b]);
    }
    if (nf > 0) dqd = lhs.ldlt().solve(rhs);
    for (int a = 0; a < nf; ++a) qd[free[a]] += dqd[a];
    for (const auto& v : viscous)
      if (v.foot >= 0) grf_sum[v.foot].x() += -v.coefficient * v.row.dot(qd);
    q += h * qd;

    if (!q.allFinite() || !qd.allFinite())
      throw DivergedStateError("physics diverged: non-finite generalized coordinates");
  }

  ModelState out = make_state(model, q, qd);
  out.tau = tau_sum / n;
  out.grf[0] = grf_sum[0] / n;
  out.grf[1] = grf_sum[1] / n;
  return out;
}

}  // namespace gaitlab
