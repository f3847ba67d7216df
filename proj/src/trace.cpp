#include "gaitlab/trace.hpp"

#include <cmath>
#include <cstdio>

#include "gaitlab/errors.hpp"
#include "gaitlab/json_io.hpp"

namespace gaitlab {

void EpisodeTrace::validate() const {
  if (!(meta.control_period > 0.0)) throw DataError("trace: control period must be positive");
  if (!(meta.model_mass > 0.0)) throw DataError("trace: model mass must be positive");
  const size_t m = steps.empty() ? 0 : steps.front().excitation.size();
  for (size_t k = 0; k < steps.size(); ++k) {
    const auto& s = steps[k];
    const double expected = steps.front().time + k * meta.control_period;
    if (std::abs(s.time - expected) > 1e-9) throw DataError("trace: non-uniform time grid at step " + std::to_string(k));
    if (s.excitation.size() != m || s.activation.size() != m || s.rates.size() != m)
      throw DataError("trace: channel length mismatch at step " + std::to_string(k));
  }
}

std::vector<double> EpisodeTrace::muscle_power() const {
  std::vector<double> p;
  p.reserve(steps.size());
  for (const auto& s : steps) p.push_back(total_muscle_power(s.rates));
  return p;
}

std::string fingerprint(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EpisodeTrace begin_trace(const GaitEnv& env, std::string config_fingerprint) {
  EpisodeTrace t;
  t.meta.fingerprint = std::move(config_fingerprint);
  t.meta.speed = env.clip().speed;
  t.meta.phase = env.config().reward.phase;
  t.meta.device = env.model().device().name;
  for (int j = 0; j < kNumJoints; ++j)
    if (env.exo_limit()[j] > 0.0) t.meta.assisted.push_back(j);
  t.meta.mask = env.config().weakness;
  t.meta.model_mass = env.model().total_mass();
  t.meta.control_period = env.config().control_period();
  t.meta.start_time = env.start_time();
  return t;
}

void record_step(EpisodeTrace& trace, const GaitEnv& env, const StepResult& result) {
  TraceStep s;
  s.time = env.steps() * trace.meta.control_period;
  s.ref_time = env.reference_time();
  const auto& st = env.model_state();
  s.q = st.q;
  s.qd = st.qd;
  s.grf = st.grf;
  s.tau = env.mean_joint_moments();
  s.exo = env.exo_torque();
  s.excitation = env.applied_excitation();
  s.activation.reserve(env.num_muscles());
  for (const auto& m : env.muscle_states()) s.activation.push_back(m.activation);
  s.reward = result.reward;
  s.rates = env.metabolic_rates();
  trace.steps.push_back(std::move(s));
  if (result.terminated) {
    trace.meta.terminated = true;
    trace.meta.diagnostic = result.diagnostic;
  }
}

namespace {

template <typename V>
Json vec(const V& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

template <typename V>
void unvec(const Json& j, V& out) {
  if (!j.is_array() || static_cast<long>(j.size()) != static_cast<long>(out.size()))
    throw DataError("trace: vector length mismatch");
  for (size_t i = 0; i < j.size(); ++i) out[i] = j[i].get<double>();
}

}  // namespace

void save_trace(const EpisodeTrace& trace, const std::string& path) {
  Json j;
  j["schema"] = "gaitlab.trace/1";
  const auto& m = trace.meta;
  j["meta"] = {{"fingerprint", m.fingerprint}, {"speed_m_per_s", m.speed}, {"phase", std::string(to_string(m.phase))},
               {"device", m.device}, {"assisted", m.assisted}, {"mask", m.mask}, {"model_mass_kg", m.model_mass},
               {"control_period_s", m.control_period}, {"start_time_s", m.start_time},
               {"terminated", m.terminated}, {"diagnostic", m.diagnostic}};
  Json steps = Json::array();
  for (const auto& s : trace.steps) {
    Json rates = Json::array();
    for (const auto& r : s.rates)
      rates.push_back({r.activation_maintenance, r.shortening_lengthening, r.mechanical_work, r.total,
                       r.unclamped_total, r.muscle_mass});
    const auto& w = s.reward;
    steps.push_back({{"t", s.time}, {"ref_t", s.ref_time}, {"q", vec(s.q)}, {"qd", vec(s.qd)},
                     {"grf", {s.grf[0].x(), s.grf[0].y(), s.grf[1].x(), s.grf[1].y()}}, {"tau", vec(s.tau)},
                     {"exo", vec(s.exo)}, {"excitation", s.excitation}, {"activation", s.activation},
                     {"reward", {w.pos, w.vel, w.root, w.ee, w.torq, w.eff, w.smt, w.exo, w.total}},
                     {"rates", rates}});
  }
  j["steps"] = std::move(steps);
  write_json_file(j, path);
}

EpisodeTrace load_trace(const std::string& path) {
  const Json j = read_json_file(path);
  if (j.value("schema", "") != "gaitlab.trace/1") throw DataError(path + ": not a gaitlab trace");
  EpisodeTrace t;
  try {
    const auto& m = j.at("meta");
    t.meta.fingerprint = m.at("fingerprint").get<std::string>();
    t.meta.speed = m.at("speed_m_per_s").get<double>();
    t.meta.phase = reward_phase_from_string(m.at("phase").get<std::string>());
    t.meta.device = m.at("device").get<std::string>();
    t.meta.assisted = m.at("assisted").get<std::vector<int>>();
    t.meta.mask = m.at("mask").get<WeaknessMask>();
    t.meta.model_mass = m.at("model_mass_kg").get<double>();
    t.meta.control_period = m.at("control_period_s").get<double>();
    t.meta.start_time = m.at("start_time_s").get<double>();
    t.meta.terminated = m.at("terminated").get<bool>();
    t.meta.diagnostic = m.at("diagnostic").get<std::string>();
    for (const auto& js : j.at("steps")) {
      TraceStep s;
      s.time = js.at("t").get<double>();
      s.ref_time = js.at("ref_t").get<double>();
      unvec(js.at("q"), s.q);
      unvec(js.at("qd"), s.qd);
      const auto g = js.at("grf").get<std::vector<double>>();
      if (g.size() != 4) throw DataError("trace: grf needs 4 entries");
      s.grf = {Eigen::Vector2d(g[0], g[1]), Eigen::Vector2d(g[2], g[3])};
      unvec(js.at("tau"), s.tau);
      unvec(js.at("exo"), s.exo);
      s.excitation = js.at("excitation").get<std::vector<double>>();
      s.activation = js.at("activation").get<std::vector<double>>();
      const auto w = js.at("reward").get<std::vector<double>>();
      if (w.size() != 9) throw DataError("trace: reward needs 9 entries");
      s.reward = {w[0], w[1], w[2], w[3], w[4], w[5], w[6], w[7], w[8]};
      for (const auto& jr : js.at("rates")) {
        const auto r = jr.get<std::vector<double>>();
        if (r.size() != 6) throw DataError("trace: rates need 6 entries");
        s.rates.push_back({r[0], r[1], r[2], r[3], r[4], r[5]});
      }
      t.steps.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed trace: " + e.what());
  }
  t.validate();
  return t;
}

}  // namespace gaitlab
