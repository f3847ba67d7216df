#include <algorithm>
#include <cmath>
#include <numbers>

#include "gaitlab/dynamics.hpp"
#include "gaitlab/errors.hpp"
#include "gaitlab/refmotion.hpp"

namespace gaitlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDeg = std::numbers::pi / 180.0;

// Periodic bump centred at mu with width sigma (both in cycle fractions).
double bump(double phase, double mu, double sigma) {
  const double s = kTwoPi * sigma;
  return std::exp((std::cos(kTwoPi * (phase - mu)) - 1.0) / (s * s));
}

struct GaitShape {
  double hip_amplitude;  // deg

  // Left-leg joint angles (rad) at a phase, heel strike at phase 0.
  std::array<double, 3> leg(double p) const {
    const double hip = 6.0 + hip_amplitude * std::cos(kTwoPi * (p - 0.9));
    const double knee = 5.0 + 15.0 * bump(p, 0.14, 0.06) + 65.0 * bump(p, 0.74, 0.12);
    const double ankle = 6.0 - 6.0 * bump(p, 0.07, 0.045) + 10.0 * bump(p, 0.42, 0.1) -
                         20.0 * bump(p, 0.6, 0.065) + 8.0 * bump(p, 0.85, 0.08);
    return {hip * kDeg, knee * kDeg, ankle * kDeg};
  }

  // Net joint moments, N m per kg of body mass.
  std::array<double, 3> leg_moments(double p) const {
    const double hip = -0.5 * bump(p, 0.08, 0.07) + 0.6 * bump(p, 0.5, 0.09) - 0.2 * bump(p, 0.9, 0.05);
    const double knee = -0.5 * bump(p, 0.15, 0.06) + 0.25 * bump(p, 0.45, 0.06) - 0.2 * bump(p, 0.95, 0.04);
    const double ankle = 0.1 * bump(p, 0.03, 0.02) - 1.5 * bump(p, 0.48, 0.09);
    return {hip, knee, ankle};
  }

  double pitch(double p) const { return (-2.0 + 1.0 * std::cos(2.0 * kTwoPi * p)) * kDeg; }

  Eigen::Matrix<double, kNumAngles, 1> angles(double p) const {
    Eigen::Matrix<double, kNumAngles, 1> a;
    const auto l = leg(p);
    const auto r = leg(p + 0.5);
    a << pitch(p), l[0], l[1], l[2], r[0], r[1], r[2];
    return a;
  }
};

Coords pose(const Eigen::Matrix<double, kNumAngles, 1>& a, double x, double y) {
  Coords q;
  q << x, y, a[0], a[1], a[2], a[3], a[4], a[5], a[6];
  return q;
}

struct ContactPoint {
  double x, bottom;
};

// World position of each contact sphere centre and the height of its bottom.
std::vector<ContactPoint> contact_points(const Model& model, const Coords& q) {
  const auto segs = segment_kinematics(model, q, Coords::Zero());
  std::vector<ContactPoint> out;
  for (const auto& c : model.contacts()) {
    const auto p = point_kinematics(segs[c.segment], c.offset).position;
    out.push_back({p.x(), p.y() - c.radius});
  }
  return out;
}

// Left stance covers phases [0, 0.6), right stance is the same window shifted
// by half a cycle; both feet support during the overlap.
constexpr double kStanceFraction = 0.6;

bool in_stance(int foot, double p) {
  const double local = p + (foot == 1 ? 0.5 : 0.0);
  return local - std::floor(local) < kStanceFraction;
}

// Vertical load share of a foot, u in cycles relative to its heel strike.
// Piecewise linear so that the 5% crossings at u = 0 and u = kStanceFraction
// sit inside linear segments wider than a frame at the default rate.
double load_on(double u) {
  if (u <= -0.02) return 0.0;
  if (u <= 0.02) return 2.5 * (u + 0.02);
  if (u <= 0.08) return 0.1 + 0.8 * (u - 0.02) / 0.06;
  if (u <= 0.12) return 0.9 + 2.5 * (u - 0.08);
  return 1.0;
}

double foot_load(int foot, double p) {
  double u = p + (foot == 1 ? 0.5 : 0.0);
  u -= std::floor(u);
  if (u > 0.5 * (1.0 + kStanceFraction)) u -= 1.0;  // pre-contact ramp before heel strike
  if (u < 0.5 * kStanceFraction) return load_on(u);
  return 1.0 - load_on(u - kStanceFraction + 0.1);
}

// Lowest sphere among the feet in stance at phase p.
int support(const Model& model, const std::vector<ContactPoint>& pts, double p) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
    const int foot = model.contacts()[i].foot;
    if (foot < 0 || !in_stance(foot, p)) continue;
    if (best < 0 || pts[i].bottom < pts[best].bottom) best = i;
  }
  return best;
}

}  // namespace

ReferenceClip synthetic_clip(const Model& model, const SyntheticGaitParams& params) {
  if (!(params.speed > 0.0) || !(params.sample_rate > 0.0) || params.cycles < 2)
    throw ConfigError("synthetic clip: speed and sample rate must be positive with at least two cycles");
  if (model.contacts().empty()) throw ConfigError("synthetic clip: model has no contact spheres");
  const GaitShape shape{18.0 + 5.0 * params.speed};

  // Forward root travel per cycle that keeps the lowest sphere from slipping.
  constexpr int kDense = 4000;
  std::vector<double> travel(kDense + 1, 0.0);
  for (int j = 0; j < kDense; ++j) {
    const double p0 = static_cast<double>(j) / kDense, p1 = static_cast<double>(j + 1) / kDense;
    const auto c0 = contact_points(model, pose(shape.angles(p0), 0.0, 0.0));
    const auto c1 = contact_points(model, pose(shape.angles(p1), 0.0, 0.0));
    const int s = support(model, c0, p0);
    if (s < 0) throw ConfigError("synthetic clip: model has no foot contact spheres");
    travel[j + 1] = travel[j] - (c1[s].x - c0[s].x);
  }
  const double stride = travel[kDense];
  if (!(stride > 0.0)) throw ConfigError("synthetic clip: gait shape produces no forward travel");

  const int frames = static_cast<int>(std::lround(params.cycles * stride / params.speed * params.sample_rate));
  const double period = frames / (params.cycles * params.sample_rate);

  ReferenceClip clip;
  clip.sample_rate = params.sample_rate;
  clip.speed = stride / period;
  clip.subject_mass = model.total_mass();
  clip.wrap_advance = params.cycles * stride;
  for (const auto& l : model.landmarks()) clip.landmark_names.push_back(l.name);
  const int lm = static_cast<int>(clip.landmark_names.size());
  clip.angles.resize(frames, kNumAngles);
  clip.velocities.resize(frames, kNumAngles);
  clip.moments.resize(frames, kNumJoints);
  clip.root.resize(frames, 2);
  clip.landmarks.resize(frames, 2 * lm);
  clip.grf.resize(frames, 2);
  clip.contact.resize(frames, 2);

  constexpr double kDelta = 1e-6;
  for (int k = 0; k < frames; ++k) {
    const double t = clip.time(k);
    const double cycles = std::floor(t / period);
    const double p = t / period - cycles;
    const auto a = shape.angles(p);
    const Eigen::Matrix<double, kNumAngles, 1> da =
        (shape.angles(p + kDelta) - shape.angles(p - kDelta)) / (2.0 * kDelta * period);

    const double f = p * kDense;
    const int j = std::min(static_cast<int>(f), kDense - 1);
    double x = cycles * stride + travel[j] + (f - j) * (travel[j + 1] - travel[j]);
    if (params.treadmill) x -= clip.speed * t;
    const auto pts = contact_points(model, pose(a, 0.0, 0.0));
    const double y = -pts[support(model, pts, p)].bottom;
    const Coords q = pose(a, x, y);

    clip.angles.row(k) = a.transpose();
    clip.velocities.row(k) = da.transpose();
    const auto ml = shape.leg_moments(p), mr = shape.leg_moments(p + 0.5);
    clip.moments.row(k) << ml[0], ml[1], ml[2], mr[0], mr[1], mr[2];
    clip.root.row(k) << x, y;
    const auto marks = landmark_positions(model, q);
    for (int l = 0; l < lm; ++l) clip.landmarks.row(k).segment<2>(2 * l) = marks[l].transpose();

    const double gl = foot_load(0, p), gr = foot_load(1, p);
    clip.contact.row(k) << (gl > 0.0 ? 1.0 : 0.0), (gr > 0.0 ? 1.0 : 0.0);
    clip.grf.row(k) << gl, gr;
  }
  if (params.treadmill) clip.wrap_advance -= clip.speed * clip.period();
  clip.validate();
  return clip;
}

}  // namespace gaitlab
