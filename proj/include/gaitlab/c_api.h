#ifndef GAITLAB_C_API_H
#define GAITLAB_C_API_H

/* Plain C interface to the environment and to trained policies, for foreign
 * language bindings. All numeric buffers are contiguous float64 arrays owned
 * by the caller. Functions return GL_OK or an error code; the message of the
 * last error on the calling thread is available from gl_last_error(). */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
  GL_OK = 0,
  GL_ERROR = 1,        /* any other failure */
  GL_CONFIG_ERROR = 2, /* invalid configuration or call sequence */
  GL_DATA_ERROR = 3    /* unreadable or inconsistent data */
};

typedef struct gl_env gl_env;
typedef struct gl_policy gl_policy;

/* Reward terms of one step, in the order of the composite. */
typedef struct {
  double pos, vel, root, ee, torq, eff, smt, exo, total;
} gl_reward_terms;

typedef struct {
  gl_reward_terms reward;
  int terminated;
  int truncated;
  int action_clipped; /* some action entry lay outside [-1, 1] */
  int physics_failure;
} gl_step_info;

const char* gl_version(void);
const char* gl_last_error(void);

/* Builds an environment from a run configuration file. */
int gl_env_make(const char* config_path, gl_env** out);
void gl_env_free(gl_env* env);

int gl_env_observation_dim(const gl_env* env);
int gl_env_action_dim(const gl_env* env);
/* Action bounds, one entry per action dimension. */
int gl_env_action_bounds(const gl_env* env, double* low, double* high);

/* obs must hold gl_env_observation_dim doubles. */
int gl_env_reset(gl_env* env, uint64_t seed, double* obs);
/* action holds gl_env_action_dim doubles; obs receives the next observation. */
int gl_env_step(gl_env* env, const double* action, double* obs, gl_step_info* info);

/* Loads a checkpoint; `seed` drives stochastic actions. */
int gl_policy_load(const char* checkpoint_path, uint64_t seed, gl_policy** out);
void gl_policy_free(gl_policy* policy);
int gl_policy_observation_dim(const gl_policy* policy);
int gl_policy_action_dim(const gl_policy* policy);
/* Mean action when `deterministic` is nonzero. */
int gl_policy_act(gl_policy* policy, const double* obs, int deterministic, double* action);

#ifdef __cplusplus
}
#endif

#endif
