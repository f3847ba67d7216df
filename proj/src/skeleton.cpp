#include "gaitlab/skeleton.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "gaitlab/errors.hpp"
#include "gaitlab/json_io.hpp"

namespace gaitlab {

namespace {

constexpr double deg(double d) { return d * std::numbers::pi / 180.0; }

bool near_rel(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

Json vec2_to_json(const Eigen::Vector2d& v) { return Json::array({v.x(), v.y()}); }

Eigen::Vector2d vec2_from_json(const Json& j, const char* key) {
  auto a = required<std::vector<double>>(j, key);
  if (a.size() != 2) throw ConfigError(std::string("'") + key + "' must have two entries");
  return {a[0], a[1]};
}

}  // namespace

int joint_index(std::string_view name) {
  for (int i = 0; i < kNumJoints; ++i)
    if (kJointNames[i] == name) return i;
  throw ConfigError("unknown joint '" + std::string(name) + "'");
}

int SkeletonSpec::segment_index(std::string_view n) const {
  for (std::size_t i = 0; i < segments.size(); ++i)
    if (segments[i].name == n) return static_cast<int>(i);
  return -1;
}

void SkeletonSpec::validate() const {
  if (segments.empty()) throw ConfigError("skeleton has no segments");
  double sum = 0.0;
  std::set<std::string> names;
  for (const auto& s : segments) {
    if (!(s.mass > 0.0)) throw ConfigError("segment '" + s.name + "' mass must be > 0");
    if (!(s.inertia > 0.0)) throw ConfigError("segment '" + s.name + "' inertia must be > 0");
    if (!names.insert(s.name).second) throw ConfigError("duplicate segment '" + s.name + "'");
    sum += s.mass;
  }
  if (!near_rel(sum, total_mass, 1e-9))
    throw ConfigError("total_mass does not equal the sum of segment masses");
  if (segment_index(root) < 0) throw ConfigError("root segment '" + root + "' missing");

  // Every non-root segment must have exactly one parent joint, and walking
  // parents must reach the root without revisiting a segment.
  if (joints.size() != kNumJoints)
    throw ConfigError("the planar walker requires exactly six joints");
  std::map<std::string, std::string> parent_of;
  std::set<std::string> joint_names;
  for (const auto& j : joints) {
    joint_index(j.name);
    if (!joint_names.insert(j.name).second) throw ConfigError("duplicate joint '" + j.name + "'");
    if (!(j.lower < j.upper)) throw ConfigError("joint '" + j.name + "' lower limit must be < upper");
    if (segment_index(j.parent) < 0 || segment_index(j.child) < 0)
      throw ConfigError("joint '" + j.name + "' references an unknown segment");
    if (j.child == root) throw ConfigError("root segment cannot be a joint child");
    if (!parent_of.emplace(j.child, j.parent).second)
      throw ConfigError("segment '" + j.child + "' has two parent joints");
  }
  for (const auto& s : segments) {
    if (s.name == root) continue;
    std::set<std::string> seen{s.name};
    std::string cur = s.name;
    while (cur != root) {
      auto it = parent_of.find(cur);
      if (it == parent_of.end()) throw ConfigError("segment '" + s.name + "' is not connected to the root");
      cur = it->second;
      if (!seen.insert(cur).second) throw ConfigError("kinematic tree contains a cycle");
    }
  }
  for (const auto& c : contacts) {
    if (segment_index(c.segment) < 0) throw ConfigError("contact '" + c.name + "' on unknown segment");
    if (!(c.radius > 0.0)) throw ConfigError("contact '" + c.name + "' radius must be > 0");
  }
  for (const auto& l : landmarks)
    if (segment_index(l.segment) < 0) throw ConfigError("landmark '" + l.name + "' on unknown segment");
  if (!(material.stiffness > 0 && material.exponent > 0 && material.dissipation >= 0 &&
        material.friction >= 0 && material.transition_velocity > 0))
    throw ConfigError("contact material parameters must be positive");
}

std::string_view to_string(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::hip: return "hip";
    case DeviceKind::ankle: return "ankle";
    case DeviceKind::none: break;
  }
  return "none";
}

DeviceKind device_kind_from_string(std::string_view s) {
  if (s == "hip") return DeviceKind::hip;
  if (s == "ankle") return DeviceKind::ankle;
  if (s == "none") return DeviceKind::none;
  throw ConfigError("unknown device kind '" + std::string(s) + "'");
}

double ExoDeviceSpec::sum_added_mass() const {
  double s = 0.0;
  for (const auto& [seg, m] : added_mass) s += m;
  return s;
}

bool ExoDeviceSpec::assists(int joint) const {
  for (const auto& n : assisted_joints)
    if (joint_index(n) == joint) return true;
  return false;
}

void ExoDeviceSpec::validate() const {
  for (const auto& [seg, m] : added_mass)
    if (!(m >= 0.0)) throw ConfigError("device mass for '" + seg + "' must be >= 0");
  if (!near_rel(sum_added_mass(), total_added_mass, 1e-9))
    throw ConfigError("device total mass does not equal the sum of per-segment entries");
  if (kind == DeviceKind::none && !assisted_joints.empty())
    throw ConfigError("device kind none cannot assist joints");
  for (const auto& j : assisted_joints) {
    joint_index(j);
    auto it = tau_max.find(j);
    bool per_kg = tau_max_per_kg > 0.0;
    if (!per_kg && (it == tau_max.end() || !(it->second > 0.0)))
      throw ConfigError("tau_max must be > 0 for assisted joint '" + j + "'");
  }
  if (!assisted_joints.empty() && !(cutoff_hz > 0.0))
    throw ConfigError("device filter cutoff must be > 0");
}

void ExoDeviceSpec::resolve_tau_max(double model_mass) {
  if (tau_max_per_kg <= 0.0) return;
  for (const auto& j : assisted_joints) tau_max[j] = tau_max_per_kg * model_mass;
}

JointVector ExoDeviceSpec::tau_max_vector() const {
  JointVector v = JointVector::Zero();
  for (const auto& j : assisted_joints) {
    auto it = tau_max.find(j);
    if (it != tau_max.end()) v[joint_index(j)] = it->second;
  }
  return v;
}

SkeletonSpec default_skeleton() {
  // Segment masses follow Winter's fractions of a 75 kg body; the root
  // segment lumps head, arms and trunk with the pelvis.
  constexpr double body = 75.0;
  SkeletonSpec s;
  s.name = "planar-walker-75kg";
  s.root = "pelvis";
  const double m_hat = 0.678 * body, m_thigh = 0.100 * body, m_shank = 0.0465 * body,
               m_foot = 0.0145 * body;
  const double l_thigh = 0.429, l_shank = 0.4305, l_foot = 0.266;
  auto gyr = [](double m, double rg) { return m * rg * rg; };
  s.segments.push_back({"pelvis", m_hat, 3.0, 0.80, {0.0, 0.32}});
  for (const char* side : {"l", "r"}) {
    std::string sfx = std::string("_") + side;
    s.segments.push_back({"thigh" + sfx, m_thigh, gyr(m_thigh, 0.323 * l_thigh), l_thigh, {0.0, -0.433 * l_thigh}});
    s.segments.push_back({"shank" + sfx, m_shank, gyr(m_shank, 0.302 * l_shank), l_shank, {0.0, -0.433 * l_shank}});
    s.segments.push_back({"foot" + sfx, m_foot, gyr(m_foot, 0.475 * l_foot), l_foot, {0.07, -0.035}});
  }
  for (const char* side : {"l", "r"}) {
    std::string sfx = std::string("_") + side;
    s.joints.push_back({"hip" + sfx, "pelvis", "thigh" + sfx, {0.0, 0.0}, deg(-40), deg(120), 300.0, 5.0, 1.0});
    s.joints.push_back({"knee" + sfx, "thigh" + sfx, "shank" + sfx, {0.0, -l_thigh}, deg(-5), deg(140), 300.0, 5.0, -1.0});
    s.joints.push_back({"ankle" + sfx, "shank" + sfx, "foot" + sfx, {0.0, -l_shank}, deg(-50), deg(30), 300.0, 5.0, 1.0});
  }
  for (const char* side : {"l", "r"}) {
    std::string sfx = std::string("_") + side;
    s.contacts.push_back({"heel" + sfx, "foot" + sfx, {-0.04, -0.048}, 0.02});
    s.contacts.push_back({"toe" + sfx, "foot" + sfx, {0.16, -0.048}, 0.02});
  }
  s.landmarks = {{"foot_l", "foot_l", {0.07, -0.035}},
                 {"foot_r", "foot_r", {0.07, -0.035}},
                 {"head", "pelvis", {0.0, 0.70}},
                 {"toe_l", "foot_l", {0.18, -0.05}},
                 {"toe_r", "foot_r", {0.18, -0.05}}};
  s.material = ContactMaterial{};
  s.total_mass = 0.0;
  for (const auto& seg : s.segments) s.total_mass += seg.mass;
  return s;
}

ExoDeviceSpec no_device() { return ExoDeviceSpec{}; }

ExoDeviceSpec hip_exo_device() {
  ExoDeviceSpec d;
  d.kind = DeviceKind::hip;
  d.name = "hip-exo";
  d.added_mass = {{"pelvis", 1.5}, {"thigh_l", 0.7}, {"thigh_r", 0.7}};
  d.assisted_joints = {"hip_l", "hip_r"};
  d.tau_max_per_kg = 1.0;
  d.cutoff_hz = 1.0;
  d.total_added_mass = 2.9;
  return d;
}

ExoDeviceSpec ankle_exo_device() {
  ExoDeviceSpec d;
  d.kind = DeviceKind::ankle;
  d.name = "ankle-exo";
  d.added_mass = {{"pelvis", 1.5}, {"shank_l", 1.0}, {"shank_r", 1.0}, {"foot_l", 0.2}, {"foot_r", 0.2}};
  d.assisted_joints = {"ankle_l", "ankle_r"};
  d.tau_max_per_kg = 1.0;
  d.cutoff_hz = 2.0;
  d.total_added_mass = 3.9;
  return d;
}

// ---------------------------------------------------------------------------
// JSON

void throw_missing_key(const char* key) {
  throw ConfigError(std::string("missing required key '") + key + "'");
}

void throw_bad_key(const char* key, const char* what) {
  throw ConfigError(std::string("invalid value for '") + key + "': " + what);
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse '" + path + "': " + e.what());
  }
}

void write_json_file(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

SkeletonSpec skeleton_from_json(const Json& j) {
  SkeletonSpec s;
  s.name = optional<std::string>(j, "name", s.name);
  s.root = optional<std::string>(j, "root", s.root);
  for (const auto& e : required<Json>(j, "segments"))
    s.segments.push_back({required<std::string>(e, "name"), required<double>(e, "mass_kg"),
                          required<double>(e, "inertia_kgm2"), required<double>(e, "length_m"),
                          vec2_from_json(e, "com_m")});
  for (const auto& e : required<Json>(j, "joints")) {
    JointSpec js;
    js.name = required<std::string>(e, "name");
    js.parent = required<std::string>(e, "parent");
    js.child = required<std::string>(e, "child");
    js.location = vec2_from_json(e, "location_m");
    js.lower = required<double>(e, "lower_rad");
    js.upper = required<double>(e, "upper_rad");
    js.limit_stiffness = required<double>(e, "limit_stiffness_Nm_per_rad");
    js.limit_damping = required<double>(e, "limit_damping_Nms_per_rad");
    js.axis_sign = optional<double>(e, "axis_sign", 1.0);
    s.joints.push_back(js);
  }
  for (const auto& e : optional<Json>(j, "contacts", Json::array()))
    s.contacts.push_back({required<std::string>(e, "name"), required<std::string>(e, "segment"),
                          vec2_from_json(e, "offset_m"), required<double>(e, "radius_m")});
  for (const auto& e : optional<Json>(j, "landmarks", Json::array()))
    s.landmarks.push_back({required<std::string>(e, "name"), required<std::string>(e, "segment"),
                           vec2_from_json(e, "offset_m")});
  if (j.contains("contact_material")) {
    const auto& m = j.at("contact_material");
    s.material.stiffness = required<double>(m, "stiffness");
    s.material.exponent = required<double>(m, "exponent");
    s.material.dissipation = required<double>(m, "dissipation_s_per_m");
    s.material.friction = required<double>(m, "friction");
    s.material.transition_velocity = required<double>(m, "transition_velocity_m_per_s");
  }
  s.total_mass = required<double>(j, "total_mass_kg");
  s.validate();
  return s;
}

Json skeleton_to_json(const SkeletonSpec& s) {
  Json j;
  j["schema"] = "gaitlab.skeleton/1";
  j["name"] = s.name;
  j["root"] = s.root;
  j["total_mass_kg"] = s.total_mass;
  for (const auto& e : s.segments)
    j["segments"].push_back({{"name", e.name}, {"mass_kg", e.mass}, {"inertia_kgm2", e.inertia},
                             {"length_m", e.length}, {"com_m", vec2_to_json(e.com)}});
  for (const auto& e : s.joints)
    j["joints"].push_back({{"name", e.name}, {"parent", e.parent}, {"child", e.child},
                           {"location_m", vec2_to_json(e.location)}, {"lower_rad", e.lower},
                           {"upper_rad", e.upper}, {"limit_stiffness_Nm_per_rad", e.limit_stiffness},
                           {"limit_damping_Nms_per_rad", e.limit_damping}, {"axis_sign", e.axis_sign}});
  for (const auto& e : s.contacts)
    j["contacts"].push_back({{"name", e.name}, {"segment", e.segment}, {"offset_m", vec2_to_json(e.offset)},
                             {"radius_m", e.radius}});
  for (const auto& e : s.landmarks)
    j["landmarks"].push_back({{"name", e.name}, {"segment", e.segment}, {"offset_m", vec2_to_json(e.offset)}});
  j["contact_material"] = {{"stiffness", s.material.stiffness},
                           {"exponent", s.material.exponent},
                           {"dissipation_s_per_m", s.material.dissipation},
                           {"friction", s.material.friction},
                           {"transition_velocity_m_per_s", s.material.transition_velocity}};
  return j;
}

ExoDeviceSpec device_from_json(const Json& j) {
  ExoDeviceSpec d;
  d.kind = device_kind_from_string(required<std::string>(j, "kind"));
  d.name = optional<std::string>(j, "name", std::string(to_string(d.kind)));
  d.added_mass = optional<std::map<std::string, double>>(j, "added_mass_kg", {});
  d.assisted_joints = optional<std::vector<std::string>>(j, "assisted_joints", {});
  d.tau_max = optional<std::map<std::string, double>>(j, "tau_max_Nm", {});
  d.tau_max_per_kg = optional<double>(j, "tau_max_Nm_per_kg", 0.0);
  d.cutoff_hz = optional<double>(j, "filter_cutoff_hz", 1.0);
  d.total_added_mass = optional<double>(j, "total_added_mass_kg", d.sum_added_mass());
  d.validate();
  return d;
}

Json device_to_json(const ExoDeviceSpec& d) {
  Json j;
  j["schema"] = "gaitlab.device/1";
  j["kind"] = std::string(to_string(d.kind));
  j["name"] = d.name;
  j["added_mass_kg"] = d.added_mass;
  j["assisted_joints"] = d.assisted_joints;
  j["tau_max_Nm"] = d.tau_max;
  j["tau_max_Nm_per_kg"] = d.tau_max_per_kg;
  j["filter_cutoff_hz"] = d.cutoff_hz;
  j["total_added_mass_kg"] = d.total_added_mass;
  return j;
}

SkeletonSpec load_skeleton(const std::string& path) { return skeleton_from_json(read_json_file(path)); }
void save_skeleton(const SkeletonSpec& spec, const std::string& path) { write_json_file(skeleton_to_json(spec), path); }
ExoDeviceSpec load_device(const std::string& path) { return device_from_json(read_json_file(path)); }
void save_device(const ExoDeviceSpec& spec, const std::string& path) { write_json_file(device_to_json(spec), path); }

}  // namespace gaitlab
