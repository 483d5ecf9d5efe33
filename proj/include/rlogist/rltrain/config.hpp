#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "rlogist/errors.hpp"

namespace rlogist::rltrain {

enum class Algorithm { ppo, reinforce };

inline std::string to_string(Algorithm a) { return a == Algorithm::ppo ? "ppo" : "reinforce"; }

inline Algorithm algorithm_from_string(const std::string& s) {
  if (s == "ppo") return Algorithm::ppo;
  if (s == "reinforce") return Algorithm::reinforce;
  throw ConfigError("unknown algorithm '" + s + "'");
}

struct PPOConfig {
  double clip_epsilon = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  std::size_t rollout_episodes = 16;
  std::size_t update_epochs = 4;
  std::size_t minibatch_size = 64;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double base_lr = 2.5e-4;
  double adam_epsilon = 1e-5;
  double max_grad_norm = 0.5;
  std::size_t total_episodes = 3000;
  bool normalize_advantages = true;
  // One Adam step on the summed loss; false steps policy and value with separate optimizers.
  bool joint_update = true;

  void validate() const {
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw ConfigError("clip_epsilon must lie in (0,1)");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0,1]");
    if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) throw ConfigError("gae_lambda must lie in (0,1]");
    if (rollout_episodes == 0) throw ConfigError("rollout_episodes must be positive");
    if (update_epochs == 0) throw ConfigError("update_epochs must be positive");
    if (minibatch_size == 0) throw ConfigError("minibatch_size must be positive");
    if (!(base_lr >= 0.0) || !(adam_epsilon > 0.0)) throw ConfigError("learning rate settings are invalid");
    if (value_coef < 0.0 || entropy_coef < 0.0 || max_grad_norm < 0.0) {
      throw ConfigError("loss coefficients must be non-negative");
    }
  }

  NLOHMANN_DEFINE_TYPE_INTRUSIVE_WITH_DEFAULT(PPOConfig, clip_epsilon, gamma, gae_lambda, rollout_episodes,
                                              update_epochs, minibatch_size, value_coef, entropy_coef, base_lr,
                                              adam_epsilon, max_grad_norm, total_episodes, normalize_advantages,
                                              joint_update)
};

}  // namespace rlogist::rltrain
