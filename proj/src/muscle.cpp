#include "gaitlab/muscle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gaitlab/errors.hpp"
#include "gaitlab/json_io.hpp"

namespace gaitlab {

namespace curves {
namespace {

// C1 exponential ramp normalized to g(0) = 0, g'(0) = 0, g(1) = 1.
double ramp(double x, double k) { return (std::exp(k * x) - 1.0 - k * x) / (std::exp(k) - 1.0 - k); }
double ramp_slope(double x, double k) { return k * (std::exp(k * x) - 1.0) / (std::exp(k) - 1.0 - k); }

constexpr double kEccentricShape = 0.8 / 3.0;  // slope 3 at zero velocity on both branches

double toe_strain() { return kTendonToeFraction * kTendonStrainAtMax; }

// Force at the end of the toe region, chosen so the linear part reaches 1 at
// kTendonStrainAtMax.
double toe_force() {
  const double k = kTendonToeShape;
  const double e_toe = toe_strain();
  return 1.0 / (1.0 + ramp_slope(1.0, k) * (kTendonStrainAtMax - e_toe) / e_toe);
}

double eccentric(double v) { return 1.0 + (kEccentricForceMax - 1.0) * v / (v + kEccentricShape); }
double eccentric_slope(double v) {
  return (kEccentricForceMax - 1.0) * kEccentricShape / ((v + kEccentricShape) * (v + kEccentricShape));
}

}  // namespace

double active_force_length(double l) { return std::exp(-(l - 1.0) * (l - 1.0) / kActiveWidth); }

double active_force_length_slope(double l) { return -2.0 * (l - 1.0) / kActiveWidth * active_force_length(l); }

double passive_force_length(double l) {
  const double x = (l - 1.0) / kPassiveStrain;
  return x <= 0.0 ? 0.0 : ramp(x, kPassiveShape);
}

double passive_force_length_slope(double l) {
  const double x = (l - 1.0) / kPassiveStrain;
  return x <= 0.0 ? 0.0 : ramp_slope(x, kPassiveShape) / kPassiveStrain;
}

double force_velocity(double v) {
  if (v <= -1.0) return 0.0;
  if (v <= 0.0) return (1.0 + v) / (1.0 - v / kHillCurvature);
  if (v <= 1.0) return eccentric(v);
  return eccentric(1.0) + eccentric_slope(1.0) * (v - 1.0);
}

double force_velocity_slope(double v) {
  if (v <= -1.0) return 0.0;
  if (v <= 0.0) {
    const double d = 1.0 - v / kHillCurvature;
    return (1.0 + 1.0 / kHillCurvature) / (d * d);
  }
  return eccentric_slope(std::min(v, 1.0));
}

double tendon_force_strain(double strain) {
  if (strain <= 0.0) return 0.0;
  const double e_toe = toe_strain();
  const double f_toe = toe_force();
  if (strain < e_toe) return f_toe * ramp(strain / e_toe, kTendonToeShape);
  return f_toe + f_toe * ramp_slope(1.0, kTendonToeShape) / e_toe * (strain - e_toe);
}

double tendon_force_strain_slope(double strain) {
  if (strain <= 0.0) return 0.0;
  const double e_toe = toe_strain();
  const double x = std::min(strain / e_toe, 1.0);
  return toe_force() * ramp_slope(x, kTendonToeShape) / e_toe;
}

}  // namespace curves

int MomentArm::joint_index() const { return gaitlab::joint_index(joint); }

double MomentArm::at(double angle) const {
  double r = 0.0;
  for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) r = r * angle + *it;
  return r;
}

double MomentArm::integral(double angle) const {
  double s = 0.0;
  for (int k = static_cast<int>(coefficients.size()) - 1; k >= 0; --k) s = s * angle + coefficients[k] / (k + 1);
  return s * angle;
}

void MuscleSpec::validate() const {
  auto fail = [&](const std::string& what) { throw ConfigError("muscle '" + name + "': " + what); };
  if (name.empty()) throw ConfigError("muscle with empty name");
  if (!(max_isometric_force > 0.0)) fail("max isometric force must be positive");
  if (!(optimal_fiber_length > 0.0)) fail("optimal fiber length must be positive");
  if (!(tendon_slack_length > 0.0)) fail("tendon slack length must be positive");
  if (!(pennation_at_optimum >= 0.0 && pennation_at_optimum < 1.3)) fail("pennation out of range");
  if (!(max_contraction_velocity > 0.0)) fail("max contraction velocity must be positive");
  if (!(activation_time_constant > 0.0)) fail("activation time constant must be positive");
  if (!(deactivation_time_constant >= activation_time_constant))
    fail("deactivation time constant must not be shorter than activation");
  if (!(fast_twitch_ratio >= 0.0 && fast_twitch_ratio <= 1.0)) fail("fast-twitch ratio outside [0, 1]");
  if (moment_arms.empty()) fail("spans no joint");
  for (const auto& arm : moment_arms) {
    arm.joint_index();
    if (arm.coefficients.empty()) fail("moment arm about " + arm.joint + " has no coefficients");
  }
}

double MuscleSpec::mass() const {
  return max_isometric_force * optimal_fiber_length * kMuscleDensity / kSpecificTension;
}

double MuscleSpec::resolved_neutral_length() const {
  if (neutral_mtu_length > 0.0) return neutral_mtu_length;
  return tendon_slack_length + optimal_fiber_length * std::cos(pennation_at_optimum);
}

double MuscleSpec::mtu_length(const JointVector& angles) const {
  double l = resolved_neutral_length();
  for (const auto& arm : moment_arms) l -= arm.integral(angles[arm.joint_index()]);
  return l;
}

double MuscleSpec::mtu_velocity(const JointVector& angles, const JointVector& rates) const {
  double v = 0.0;
  for (const auto& arm : moment_arms) {
    const int j = arm.joint_index();
    v -= arm.at(angles[j]) * rates[j];
  }
  return v;
}

double MuscleSpec::fiber_height() const { return optimal_fiber_length * std::sin(pennation_at_optimum); }

double activation_step(double activation, double excitation, double dt, const MuscleSpec& spec) {
  const double tau =
      excitation >= activation ? spec.activation_time_constant : spec.deactivation_time_constant;
  return std::clamp(activation + dt * (excitation - activation) / tau, 0.0, 1.0);
}

double integrate_activation(double activation, double excitation, double interval, int substeps,
                            const MuscleSpec& spec) {
  if (substeps < 1) throw ConfigError("activation integration needs at least one substep");
  const double h = interval / substeps;
  for (int i = 0; i < substeps; ++i) activation = activation_step(activation, excitation, h, spec);
  return activation;
}

int activation_substeps(double interval) {
  return std::max(1, static_cast<int>(std::ceil(interval / kActivationMaxStep - 1e-9)));
}

namespace {

struct FiberEval {
  double l_norm, v_norm, cos_alpha;
  double active;  // a f_L f_V, along the fibre, normalized
  double total;   // active + passive + damping, normalized
};

// Fibre quantities for a fibre whose projection on the tendon line is x.
FiberEval eval_fiber(double x, double l_prev, double activation, double dt, const MuscleSpec& spec) {
  const double h = spec.fiber_height();
  const double l = std::sqrt(x * x + h * h);
  FiberEval f{};
  f.l_norm = l / spec.optimal_fiber_length;
  f.v_norm = (l - l_prev) / (dt * spec.max_contraction_velocity * spec.optimal_fiber_length);
  f.cos_alpha = x / l;
  f.active = activation * curves::active_force_length(f.l_norm) * curves::force_velocity(f.v_norm);
  f.total = f.active + curves::passive_force_length(f.l_norm) + curves::kFiberDamping * f.v_norm;
  return f;
}

MuscleState finish(const MuscleState& in, const FiberEval& f, double tendon_force, double activation,
                   const MuscleSpec& spec) {
  MuscleState s = in;
  s.activation = activation;
  s.fiber_length = f.l_norm;
  s.fiber_velocity = f.v_norm;
  s.tendon_force = tendon_force;
  s.active_fiber_force = spec.max_isometric_force * f.active;
  return s;
}

double min_projection(const MuscleSpec& spec) { return 1e-3 * spec.optimal_fiber_length; }

}  // namespace

MtuResult mtu_force(const MuscleState& state, double mtu_length, double mtu_velocity, double activation,
                    const MuscleSpec& spec, double dt) {
  if (!(mtu_length > 0.5 * spec.tendon_slack_length) || !std::isfinite(mtu_velocity))
    throw ConvergenceError("muscle '" + spec.name + "': degenerate muscle-tendon length " +
                           std::to_string(mtu_length));
  const double fmax = spec.max_isometric_force;
  const double lopt = spec.optimal_fiber_length;
  const double h = spec.fiber_height();
  const double x_min = min_projection(spec);

  if (spec.tendon == TendonModel::rigid) {
    const double x = std::max(mtu_length - spec.tendon_slack_length, x_min);
    const double l = std::sqrt(x * x + h * h);
    const double cos_alpha = x / l;
    const double v_norm = mtu_velocity * cos_alpha / (spec.max_contraction_velocity * lopt);
    FiberEval f{};
    f.l_norm = l / lopt;
    f.v_norm = v_norm;
    f.cos_alpha = cos_alpha;
    f.active = activation * curves::active_force_length(f.l_norm) * curves::force_velocity(v_norm);
    f.total = f.active + curves::passive_force_length(f.l_norm) + curves::kFiberDamping * v_norm;
    const double force = std::max(0.0, fmax * f.total * cos_alpha);
    return {force, finish(state, f, force, activation, spec)};
  }

  if (!(dt > 0.0)) throw ConfigError("mtu_force requires a positive time step for an elastic tendon");
  const double l_prev = std::max(state.fiber_length * lopt, 1.0001 * h);
  const double lts = spec.tendon_slack_length;

  auto residual = [&](double x, FiberEval& f) {
    f = eval_fiber(x, l_prev, activation, dt, spec);
    const double strain = (mtu_length - x - lts) / lts;
    return fmax * curves::tendon_force_strain(strain) - fmax * f.total * f.cos_alpha;
  };
  auto slope = [&](double x, const FiberEval& f) {
    const double l = f.l_norm * lopt;
    const double strain = (mtu_length - x - lts) / lts;
    const double dtendon = -fmax * curves::tendon_force_strain_slope(strain) / lts;
    const double vscale = dt * spec.max_contraction_velocity * lopt;
    const double fl = curves::active_force_length(f.l_norm);
    const double fv = curves::force_velocity(f.v_norm);
    const double dfiber_dl =
        (activation * curves::active_force_length_slope(f.l_norm) * fv + curves::passive_force_length_slope(f.l_norm)) /
            lopt +
        (activation * fl * curves::force_velocity_slope(f.v_norm) + curves::kFiberDamping) / vscale;
    const double dcos = h * h / (l * l * l);
    return dtendon - fmax * (dfiber_dl * f.cos_alpha * f.cos_alpha + f.total * dcos);
  };

  FiberEval f{};
  double lo = x_min;
  double r_lo = residual(lo, f);
  if (r_lo <= 0.0) {
    // Fibre cannot shorten further: tendon slack, fibre at its minimum.
    return {0.0, finish(state, f, 0.0, activation, spec)};
  }
  double hi = std::max(mtu_length - lts, 2.0 * x_min);
  double step = lopt;
  double r_hi = residual(hi, f);
  for (int i = 0; r_hi > 0.0; ++i) {
    if (i > 60) throw ConvergenceError("muscle '" + spec.name + "': fibre equilibrium not bracketed");
    lo = hi;
    r_lo = r_hi;
    hi += step;
    step *= 2.0;
    r_hi = residual(hi, f);
  }

  const double x_guess = std::sqrt(std::max(l_prev * l_prev - h * h, 0.0)) + mtu_velocity * dt;
  double x = (x_guess > lo && x_guess < hi) ? x_guess : 0.5 * (lo + hi);
  const double tol = 1e-10 * fmax;
  for (int iter = 0; iter < 200; ++iter) {
    const double r = residual(x, f);
    if (std::abs(r) <= tol || hi - lo < 1e-15) {
      const double force = std::max(0.0, fmax * curves::tendon_force_strain((mtu_length - x - lts) / lts));
      return {force, finish(state, f, force, activation, spec)};
    }
    if (r > 0.0) lo = x; else hi = x;
    const double d = slope(x, f);
    double next = (d < 0.0) ? x - r / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  throw ConvergenceError("muscle '" + spec.name + "': fibre equilibrium did not converge");
}

MuscleState equilibrate(double mtu_length, double activation, const MuscleSpec& spec) {
  const double fmax = spec.max_isometric_force;
  const double lopt = spec.optimal_fiber_length;
  const double h = spec.fiber_height();
  const double lts = spec.tendon_slack_length;
  MuscleState s;
  s.activation = activation;

  auto fiber_at = [&](double x, FiberEval& f) {
    const double l = std::sqrt(x * x + h * h);
    f.l_norm = l / lopt;
    f.v_norm = 0.0;
    f.cos_alpha = x / l;
    f.active = activation * curves::active_force_length(f.l_norm);
    f.total = f.active + curves::passive_force_length(f.l_norm);
  };
  FiberEval f{};
  if (spec.tendon == TendonModel::rigid) {
    fiber_at(std::max(mtu_length - lts, min_projection(spec)), f);
    return finish(s, f, std::max(0.0, fmax * f.total * f.cos_alpha), activation, spec);
  }
  auto residual = [&](double x) {
    fiber_at(x, f);
    return curves::tendon_force_strain((mtu_length - x - lts) / lts) - f.total * f.cos_alpha;
  };
  double lo = min_projection(spec);
  if (residual(lo) <= 0.0) return finish(s, f, 0.0, activation, spec);
  double hi = std::max(mtu_length - lts, 2.0 * lo);
  // Beyond tendon slack the residual is minus the fibre force, which is
  // positive for any activation once passive stretch sets in.
  for (int i = 0; residual(hi) > 0.0; ++i) {
    if (i > 60) throw ConvergenceError("muscle '" + spec.name + "': static equilibrium not bracketed");
    lo = hi;
    hi += lopt;
  }
  for (int iter = 0; iter < 200 && hi - lo > 1e-14; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (residual(mid) > 0.0) lo = mid; else hi = mid;
  }
  const double x = 0.5 * (lo + hi);
  fiber_at(x, f);
  const double force = fmax * curves::tendon_force_strain((mtu_length - x - lts) / lts);
  return finish(s, f, force, activation, spec);
}

JointVector joint_moments(std::span<const MuscleState> states, std::span<const MuscleSpec> specs,
                          const JointVector& angles) {
  if (states.size() != specs.size()) throw ConfigError("joint_moments: state/spec count mismatch");
  JointVector tau = JointVector::Zero();
  for (size_t i = 0; i < specs.size(); ++i) {
    const double f = states[i].tendon_force;
    if (f == 0.0) continue;
    for (const auto& arm : specs[i].moment_arms) {
      const int j = arm.joint_index();
      tau[j] += f * arm.at(angles[j]);
    }
  }
  return tau;
}

namespace {

struct MuscleTemplate {
  const char* name;
  double fmax, lopt, lts, alpha, ft;
  const char* ft_source;
  std::vector<std::pair<const char*, std::vector<double>>> arms;
  double neutral_fiber = 1.0;  // normalized fibre length at zero joint angles, slack tendon
};

// Fibre-type fractions follow autopsy histochemistry of human lower-limb
// muscles; biarticular and compartment values are averaged over the heads.
const std::vector<MuscleTemplate>& leg_templates() {
  static const std::vector<MuscleTemplate> t = {
      {"iliopsoas", 2342, 0.1066, 0.142, 0.1396, 0.51, "Johnson et al. 1973, iliopsoas", {{"hip", {0.05}}}},
      {"glut_max", 1944, 0.1569, 0.111, 0.0, 0.48, "Johnson et al. 1973, gluteus maximus", {{"hip", {-0.06}}}},
      {"hamstrings", 2594, 0.0976, 0.319, 0.157, 0.33,
       "Johnson et al. 1973, semimembranosus/semitendinosus/biceps femoris long head",
       {{"hip", {-0.06}}, {"knee", {0.04}}}},
      {"rect_fem", 1169, 0.0759, 0.3449, 0.2443, 0.65, "Johnson et al. 1973, rectus femoris",
       {{"hip", {0.035}}, {"knee", {-0.05}}}, 0.85},
      {"vasti", 4530, 0.0993, 0.1576, 0.0524, 0.58, "Johnson et al. 1973, vastus lateralis/medialis",
       {{"knee", {-0.042, -0.012, 0.008}}}, 0.75},
      {"bifemsh", 960, 0.1103, 0.0954, 0.2042, 0.33, "Johnson et al. 1973, biceps femoris", {{"knee", {0.03}}}},
      {"gastroc", 2241, 0.051, 0.384, 0.2967, 0.53, "Johnson et al. 1973, gastrocnemius (medial/lateral)",
       {{"knee", {0.02}}, {"ankle", {-0.05}}}},
      {"soleus", 3549, 0.044, 0.248, 0.4363, 0.12, "Johnson et al. 1973, soleus", {{"ankle", {-0.05}}}},
      {"tib_ant", 1579, 0.0683, 0.243, 0.0873, 0.27, "Johnson et al. 1973, tibialis anterior",
       {{"ankle", {0.04}}}},
  };
  return t;
}

const char* tendon_name(TendonModel t) { return t == TendonModel::rigid ? "rigid" : "elastic"; }

TendonModel tendon_from_string(const std::string& s) {
  if (s == "elastic") return TendonModel::elastic;
  if (s == "rigid") return TendonModel::rigid;
  throw ConfigError("unknown tendon model '" + s + "'");
}

}  // namespace

std::vector<MuscleSpec> default_muscles() {
  std::vector<MuscleSpec> out;
  for (const char* side : {"_l", "_r"}) {
    for (const auto& t : leg_templates()) {
      MuscleSpec m;
      m.name = std::string(t.name) + side;
      m.max_isometric_force = t.fmax;
      m.optimal_fiber_length = t.lopt;
      m.tendon_slack_length = t.lts;
      m.pennation_at_optimum = t.alpha;
      m.fast_twitch_ratio = t.ft;
      m.fast_twitch_source = t.ft_source;
      for (const auto& [joint, coeffs] : t.arms) m.moment_arms.push_back({std::string(joint) + side, coeffs});
      if (t.neutral_fiber != 1.0) {
        const double l = t.neutral_fiber * t.lopt;
        const double h = m.fiber_height();
        m.neutral_mtu_length = t.lts + std::sqrt(l * l - h * h);
      }
      out.push_back(std::move(m));
    }
  }
  return out;
}

std::vector<MuscleSpec> load_muscles(const std::string& path) {
  const Json j = read_json_file(path);
  std::vector<MuscleSpec> out;
  try {
    for (const auto& e : required<Json>(j, "muscles")) {
      MuscleSpec m;
      m.name = required<std::string>(e, "name");
      m.max_isometric_force = required<double>(e, "max_isometric_force_N");
      m.optimal_fiber_length = required<double>(e, "optimal_fiber_length_m");
      m.tendon_slack_length = required<double>(e, "tendon_slack_length_m");
      m.pennation_at_optimum = required<double>(e, "pennation_at_optimum_rad");
      m.max_contraction_velocity = optional<double>(e, "max_contraction_velocity_lopt_per_s", 10.0);
      m.activation_time_constant = optional<double>(e, "activation_time_constant_s", 0.010);
      m.deactivation_time_constant = optional<double>(e, "deactivation_time_constant_s", 0.040);
      m.fast_twitch_ratio = required<double>(e, "fast_twitch_ratio");
      m.fast_twitch_source = optional<std::string>(e, "fast_twitch_source", "");
      m.tendon = tendon_from_string(optional<std::string>(e, "tendon", "elastic"));
      m.neutral_mtu_length = optional<double>(e, "neutral_mtu_length_m", 0.0);
      for (const auto& a : required<Json>(e, "moment_arms"))
        m.moment_arms.push_back({required<std::string>(a, "joint"), required<std::vector<double>>(a, "coefficients_m")});
      m.validate();
      out.push_back(std::move(m));
    }
  } catch (const ConfigError& err) {
    throw ConfigError(path + ": " + err.what());
  }
  if (out.empty()) throw ConfigError(path + ": no muscles defined");
  return out;
}

void save_muscles(std::span<const MuscleSpec> muscles, const std::string& path) {
  Json j;
  j["schema"] = "gaitlab.muscles/1";
  j["muscles"] = Json::array();
  for (const auto& m : muscles) {
    Json e = {{"name", m.name},
              {"max_isometric_force_N", m.max_isometric_force},
              {"optimal_fiber_length_m", m.optimal_fiber_length},
              {"tendon_slack_length_m", m.tendon_slack_length},
              {"pennation_at_optimum_rad", m.pennation_at_optimum},
              {"max_contraction_velocity_lopt_per_s", m.max_contraction_velocity},
              {"activation_time_constant_s", m.activation_time_constant},
              {"deactivation_time_constant_s", m.deactivation_time_constant},
              {"fast_twitch_ratio", m.fast_twitch_ratio},
              {"fast_twitch_source", m.fast_twitch_source},
              {"tendon", tendon_name(m.tendon)}};
    if (m.neutral_mtu_length > 0.0) e["neutral_mtu_length_m"] = m.neutral_mtu_length;
    e["moment_arms"] = Json::array();
    for (const auto& a : m.moment_arms) e["moment_arms"].push_back({{"joint", a.joint}, {"coefficients_m", a.coefficients}});
    j["muscles"].push_back(std::move(e));
  }
  write_json_file(j, path);
}

int muscle_index(std::span<const MuscleSpec> muscles, const std::string& name) {
  for (size_t i = 0; i < muscles.size(); ++i)
    if (muscles[i].name == name) return static_cast<int>(i);
  throw ConfigError("unknown muscle '" + name + "'");
}

}  // namespace gaitlab
