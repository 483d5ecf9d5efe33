#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "rlogist/errors.hpp"
#include "rlogist/numkernel/tensor.hpp"

namespace rlogist::rltrain {

// Everything needed to recompute the policy and value forward passes for one step.
struct Transition {
  std::size_t slide = 0;  // index into the slide list used for collection
  nk::Tensor<float> scan;
  std::vector<bool> observed;
  double progress = 0.0;
  std::size_t action = 0;
  double log_prob = 0.0;
  double reward = 0.0;
  std::optional<double> value;
  bool done = false;
  std::size_t episode = 0;

  std::vector<bool> legal() const {
    std::vector<bool> l(observed.size());
    for (std::size_t i = 0; i < l.size(); ++i) l[i] = !observed[i];
    return l;
  }
};

struct RolloutBuffer {
  std::vector<Transition> transitions;

  std::size_t size() const { return transitions.size(); }
  bool empty() const { return transitions.empty(); }

  std::vector<double> rewards() const {
    std::vector<double> r;
    for (const auto& t : transitions) r.push_back(t.reward);
    return r;
  }
  std::vector<bool> dones() const {
    std::vector<bool> d;
    for (const auto& t : transitions) d.push_back(t.done);
    return d;
  }
  std::vector<double> values() const {
    std::vector<double> v;
    for (std::size_t i = 0; i < transitions.size(); ++i) {
      if (!transitions[i].value) throw InvalidBufferError("transition " + std::to_string(i) + " has no value estimate");
      v.push_back(*transitions[i].value);
    }
    return v;
  }

  // Episodes contiguous, each closed by done, finite log-probabilities.
  void validate() const {
    for (std::size_t i = 0; i < transitions.size(); ++i) {
      const auto& t = transitions[i];
      if (!std::isfinite(t.log_prob)) throw InvalidBufferError("non-finite log-probability at " + std::to_string(i));
      if (!std::isfinite(t.reward)) throw InvalidBufferError("non-finite reward at " + std::to_string(i));
      if (i + 1 < transitions.size() && !t.done && transitions[i + 1].episode != t.episode) {
        throw InvalidBufferError("episode " + std::to_string(t.episode) + " is interrupted");
      }
      if (t.done && i + 1 < transitions.size() && transitions[i + 1].episode == t.episode) {
        throw InvalidBufferError("episode " + std::to_string(t.episode) + " continues after done");
      }
    }
    if (!transitions.empty() && !transitions.back().done) throw IncompleteEpisodeError("last episode has no terminal step");
  }
};

inline void require_complete(const std::vector<bool>& dones) {
  if (!dones.empty() && !dones.back()) throw IncompleteEpisodeError("buffer ends inside an episode");
}

// R_t = sum_{k>=t} gamma^{k-t} r_k within each episode.
inline std::vector<double> reward_to_go(const std::vector<double>& rewards, const std::vector<bool>& dones, double gamma) {
  if (rewards.size() != dones.size()) throw InvalidBufferError("rewards and done flags differ in length");
  require_complete(dones);
  std::vector<double> out(rewards.size());
  double running = 0.0;
  for (std::size_t k = rewards.size(); k-- > 0;) {
    if (dones[k]) running = 0.0;
    running = rewards[k] + gamma * running;
    out[k] = running;
  }
  return out;
}

// delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t);  A_t = sum_k (gamma lambda)^k delta_{t+k}.
inline std::vector<double> compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                                       const std::vector<bool>& dones, double gamma, double lambda) {
  if (values.size() != rewards.size()) throw InvalidBufferError("value estimates missing for some transitions");
  if (dones.size() != rewards.size()) throw InvalidBufferError("rewards and done flags differ in length");
  for (double v : values)
    if (!std::isfinite(v)) throw InvalidBufferError("non-finite value estimate");
  require_complete(dones);
  std::vector<double> adv(rewards.size());
  double running = 0.0;
  for (std::size_t k = rewards.size(); k-- > 0;) {
    const double next_value = dones[k] ? 0.0 : values[k + 1];
    const double delta = rewards[k] + gamma * next_value - values[k];
    running = delta + (dones[k] ? 0.0 : gamma * lambda * running);
    adv[k] = running;
  }
  return adv;
}

inline std::vector<double> reward_to_go(const RolloutBuffer& b, double gamma) {
  return reward_to_go(b.rewards(), b.dones(), gamma);
}

inline std::vector<double> compute_gae(const RolloutBuffer& b, double gamma, double lambda) {
  return compute_gae(b.rewards(), b.values(), b.dones(), gamma, lambda);
}

// Mean 0, standard deviation 1 (population); constant inputs map to zeros.
inline std::vector<double> normalize(std::vector<double> x) {
  if (x.empty()) return x;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(x.size()));
  for (double& v : x) v = (v - mean) / (sd + 1e-8);
  return x;
}

}  // namespace rlogist::rltrain
