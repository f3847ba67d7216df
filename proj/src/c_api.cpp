#include "gaitlab/c_api.h"

#include <cstring>
#include <exception>
#include <random>
#include <string>

#include "gaitlab/env.hpp"
#include "gaitlab/errors.hpp"
#include "gaitlab/run_config.hpp"
#include "gaitlab/trainer.hpp"

struct gl_env {
  gaitlab::GaitEnv env;
};

struct gl_policy {
  gaitlab::PolicyCheckpoint checkpoint;
  std::mt19937_64 rng;
};

namespace {

thread_local std::string last_error;

template <class F>
int guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return GL_OK;
  } catch (const gaitlab::ConfigError& e) {
    last_error = e.what();
    return GL_CONFIG_ERROR;
  } catch (const gaitlab::DataError& e) {
    last_error = e.what();
    return GL_DATA_ERROR;
  } catch (const std::exception& e) {
    last_error = e.what();
    return GL_ERROR;
  } catch (...) {
    last_error = "unknown error";
    return GL_ERROR;
  }
}

void need(const void* p, const char* what) {
  if (!p) throw gaitlab::ConfigError(std::string(what) + " is null");
}

gl_reward_terms to_c(const gaitlab::RewardBreakdown& r) {
  return {r.pos, r.vel, r.root, r.ee, r.torq, r.eff, r.smt, r.exo, r.total};
}

}  // namespace

extern "C" {

const char* gl_version(void) { return "0.1.0"; }

const char* gl_last_error(void) { return last_error.c_str(); }

int gl_env_make(const char* config_path, gl_env** out) {
  return guarded([&] {
    need(out, "output handle");
    *out = nullptr;
    need(config_path, "config path");
    const gaitlab::RunConfig rc = gaitlab::load_run_config(config_path);
    *out = new gl_env{gaitlab::GaitEnv(gaitlab::make_resources(rc), rc.env)};
  });
}

void gl_env_free(gl_env* env) { delete env; }

int gl_env_observation_dim(const gl_env* env) { return env ? env->env.observation_dim() : -1; }

int gl_env_action_dim(const gl_env* env) { return env ? env->env.action_dim() : -1; }

int gl_env_action_bounds(const gl_env* env, double* low, double* high) {
  return guarded([&] {
    need(env, "env");
    need(low, "low");
    need(high, "high");
    for (int i = 0; i < env->env.action_dim(); ++i) {
      low[i] = -1.0;
      high[i] = 1.0;
    }
  });
}

int gl_env_reset(gl_env* env, uint64_t seed, double* obs) {
  return guarded([&] {
    need(env, "env");
    need(obs, "observation buffer");
    const Eigen::VectorXd o = env->env.reset(seed);
    std::memcpy(obs, o.data(), sizeof(double) * o.size());
  });
}

int gl_env_step(gl_env* env, const double* action, double* obs, gl_step_info* info) {
  return guarded([&] {
    need(env, "env");
    need(action, "action");
    need(obs, "observation buffer");
    const gaitlab::StepResult r = env->env.step(std::span<const double>(action, env->env.action_dim()));
    std::memcpy(obs, r.observation.data(), sizeof(double) * r.observation.size());
    if (info) {
      info->reward = to_c(r.reward);
      info->terminated = r.terminated;
      info->truncated = r.truncated;
      info->action_clipped = r.action_clipped;
      info->physics_failure = !r.diagnostic.empty();
    }
  });
}

int gl_policy_load(const char* checkpoint_path, uint64_t seed, gl_policy** out) {
  return guarded([&] {
    need(out, "output handle");
    *out = nullptr;
    need(checkpoint_path, "checkpoint path");
    *out = new gl_policy{gaitlab::PolicyCheckpoint::load(checkpoint_path), std::mt19937_64(seed)};
  });
}

void gl_policy_free(gl_policy* policy) { delete policy; }

int gl_policy_observation_dim(const gl_policy* p) { return p ? p->checkpoint.obs_dim : -1; }

int gl_policy_action_dim(const gl_policy* p) { return p ? p->checkpoint.action_dim : -1; }

int gl_policy_act(gl_policy* p, const double* obs, int deterministic, double* action) {
  return guarded([&] {
    need(p, "policy");
    need(obs, "observation");
    need(action, "action buffer");
    const Eigen::Map<const Eigen::VectorXd> o(obs, p->checkpoint.obs_dim);
    const Eigen::MatrixXd a = p->checkpoint.agent->act(o, deterministic != 0, p->rng);
    std::memcpy(action, a.data(), sizeof(double) * a.size());
  });
}

}  // extern "C"
