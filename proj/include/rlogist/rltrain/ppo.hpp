#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "rlogist/errors.hpp"
#include "rlogist/nets/bundle.hpp"
#include "rlogist/nets/views.hpp"
#include "rlogist/numkernel/adam.hpp"
#include "rlogist/numkernel/random.hpp"
#include "rlogist/numkernel/tape.hpp"
#include "rlogist/rltrain/buffer.hpp"
#include "rlogist/rltrain/config.hpp"

namespace rlogist::rltrain {

using nk::Tape;
using nk::Var;

// g(eps, A) = (1+eps) A for A >= 0, (1-eps) A otherwise.
inline double clip_target(double epsilon, double advantage) {
  return advantage >= 0.0 ? (1.0 + epsilon) * advantage : (1.0 - epsilon) * advantage;
}

struct LossParts {
  Var total;
  double surrogate = 0.0;  // min(ratio A, g(eps, A))
  double value_error = 0.0;  // (V - R)^2
  double entropy = 0.0;
  double ratio = 1.0;
  double log_prob = 0.0;
};

// Log-probability of the stored action and the policy entropy, recorded on `tape`.
// Policy parameters take slots [0, P).
template <class T>
std::pair<Var, Var> record_policy_terms(Tape<T>& tape, const nk::Mlp<T>& policy, const Transition& tr) {
  const auto view = nets::policy_view<T>(tr.scan, tr.observed, tr.progress);
  Var logits = policy.record(tape, tape.constant(view), 0);
  Var logp = tape.masked_log_softmax(logits, tr.legal());
  Var chosen = tape.pick(logp, tr.action);
  Var entropy = tape.scale(tape.sum(tape.mul(tape.exp(logp), logp)), -1.0);
  return {chosen, entropy};
}

// Value prediction; value parameters take slots [value_slot, value_slot + V).
template <class T>
Var record_value(Tape<T>& tape, const nk::Mlp<T>& value, const Transition& tr, std::size_t value_slot) {
  return value.record(tape, tape.constant(nets::value_view<T>(tr.scan, tr.progress)), value_slot);
}

// Per-transition PPO loss
//   -min(r A, g(eps, A)) - c_ent H + c_v (V - R)^2,   r = exp(log pi(a|s) - log pi_k(a|s)).
template <class T>
LossParts record_ppo_loss(Tape<T>& tape, const nk::Mlp<T>& policy, const nk::Mlp<T>& value, const Transition& tr,
                          double advantage, double ret, const PPOConfig& config) {
  const auto [logp, entropy] = record_policy_terms(tape, policy, tr);
  Var ratio = tape.exp(tape.add_scalar(logp, -tr.log_prob));
  Var unclipped = tape.scale(ratio, advantage);
  Var clipped = tape.constant(nk::Tensor<T>(1, 1, static_cast<T>(clip_target(config.clip_epsilon, advantage))));
  Var surrogate = tape.minimum(unclipped, clipped);
  Var v = record_value(tape, value, tr, policy.params().size());
  Var verr = tape.square(tape.add_scalar(v, -ret));
  Var total = tape.add(tape.add(tape.scale(surrogate, -1.0), tape.scale(entropy, -config.entropy_coef)),
                       tape.scale(verr, config.value_coef));
  LossParts out;
  out.total = total;
  out.surrogate = static_cast<double>(tape.scalar(surrogate));
  out.value_error = static_cast<double>(tape.scalar(verr));
  out.entropy = static_cast<double>(tape.scalar(entropy));
  out.ratio = static_cast<double>(tape.scalar(ratio));
  out.log_prob = static_cast<double>(tape.scalar(logp));
  return out;
}

// Per-transition REINFORCE loss -log pi(a|s) (R - b).
template <class T>
LossParts record_reinforce_loss(Tape<T>& tape, const nk::Mlp<T>& policy, const Transition& tr, double ret,
                                double baseline) {
  const auto [logp, entropy] = record_policy_terms(tape, policy, tr);
  LossParts out;
  out.total = tape.scale(logp, -(ret - baseline));
  out.entropy = static_cast<double>(tape.scalar(entropy));
  out.log_prob = static_cast<double>(tape.scalar(logp));
  out.surrogate = out.log_prob * (ret - baseline);
  return out;
}

// Mean PPO surrogate min(r A, g(eps, A)) over the given transitions, without gradients.
template <class T>
double ppo_objective(const nk::Mlp<T>& policy, const RolloutBuffer& buffer, const std::vector<double>& advantages,
                     double epsilon) {
  if (buffer.empty()) throw InvalidBufferError("empty buffer");
  double acc = 0.0;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    Tape<T> tape;
    const auto [logp, entropy] = record_policy_terms(tape, policy, buffer.transitions[i]);
    const double ratio = std::exp(static_cast<double>(tape.scalar(logp)) - buffer.transitions[i].log_prob);
    acc += std::min(ratio * advantages[i], clip_target(epsilon, advantages[i]));
  }
  return acc / static_cast<double>(buffer.size());
}

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double first_minibatch_clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  std::size_t minibatches = 0;

  NLOHMANN_DEFINE_TYPE_INTRUSIVE_WITH_DEFAULT(UpdateStats, policy_loss, value_loss, entropy, clip_fraction,
                                              first_minibatch_clip_fraction, approx_kl, grad_norm, minibatches)
};

// Optimizer state for the agent networks. `joint` spans policy then value parameters.
struct AgentOptimizers {
  nk::AdamState<float> joint;
  nk::AdamState<float> policy;
  nk::AdamState<float> value;

  static AgentOptimizers make(nets::NetworkBundle<float>& nets, const PPOConfig& config) {
    AgentOptimizers o;
    o.joint = nk::make_adam(agent_refs(nets), config.base_lr, config.adam_epsilon);
    o.policy = nk::make_adam(nets.policy_refs(), config.base_lr, config.adam_epsilon);
    o.value = nk::make_adam(nets.value_refs(), config.base_lr, config.adam_epsilon);
    return o;
  }

  static nk::ParamRefs<float> agent_refs(nets::NetworkBundle<float>& nets) {
    auto r = nets.policy_refs();
    for (auto* p : nets.value_refs()) r.push_back(p);
    return r;
  }
};

namespace detail {

inline std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t size, nk::Rng& rng) {
  auto order = rng.permutation(n);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += size) out.emplace_back(order.begin() + s, order.begin() + std::min(n, s + size));
  return out;
}

// Applies joint or split Adam steps with global-norm clipping.
inline double apply_agent_step(nets::NetworkBundle<float>& nets, nk::Gradients<float>& grads, AgentOptimizers& opt,
                               const PPOConfig& config, double lr) {
  const std::size_t p = nets.policy.params().size();
  if (config.joint_update) {
    const double norm = nk::clip_global_norm(grads, config.max_grad_norm);
    opt.joint.learning_rate = lr;
    nk::adam_step(AgentOptimizers::agent_refs(nets), grads, opt.joint);
    return norm;
  }
  nk::Gradients<float> gp, gv;
  for (std::size_t k = 0; k < grads.slots.size(); ++k) (k < p ? gp.slots : gv.slots).push_back(grads.slots[k]);
  const double norm = std::sqrt(grads.squared_norm());
  nk::clip_global_norm(gp, config.max_grad_norm);
  nk::clip_global_norm(gv, config.max_grad_norm);
  opt.policy.learning_rate = lr;
  opt.value.learning_rate = lr;
  nk::adam_step(nets.policy_refs(), gp, opt.policy);
  nk::adam_step(nets.value_refs(), gv, opt.value);
  return norm;
}

}  // namespace detail

// update_epochs passes over shuffled minibatches of the clipped objective plus value regression.
inline UpdateStats ppo_update(nets::NetworkBundle<float>& nets, const RolloutBuffer& buffer,
                              const std::vector<double>& advantages, const std::vector<double>& returns,
                              const PPOConfig& config, AgentOptimizers& opt, double lr, std::uint64_t seed) {
  if (buffer.empty()) throw InvalidBufferError("empty buffer");
  if (advantages.size() != buffer.size() || returns.size() != buffer.size()) {
    throw InvalidBufferError("advantages or returns do not match the buffer");
  }
  nk::Rng rng(seed);
  UpdateStats stats;
  std::size_t transitions_seen = 0, clipped = 0;
  for (std::size_t epoch = 0; epoch < config.update_epochs; ++epoch) {
    for (const auto& mb : detail::minibatches(buffer.size(), config.minibatch_size, rng)) {
      std::vector<double> adv;
      for (auto i : mb) adv.push_back(advantages[i]);
      if (config.normalize_advantages && adv.size() > 1) adv = normalize(std::move(adv));

      nk::Gradients<float> grads;
      const double w = 1.0 / static_cast<double>(mb.size());
      std::size_t mb_clipped = 0;
      for (std::size_t k = 0; k < mb.size(); ++k) {
        const auto& tr = buffer.transitions[mb[k]];
        Tape<float> tape;
        const auto parts = record_ppo_loss(tape, nets.policy, nets.value, tr, adv[k], returns[mb[k]], config);
        const double total = static_cast<double>(tape.scalar(parts.total));
        if (!std::isfinite(total)) throw NumericError("non-finite PPO loss");
        tape.backward_into(parts.total, nk::Tensor<float>(1, 1, static_cast<float>(w)), grads);
        stats.policy_loss -= parts.surrogate;
        stats.value_loss += parts.value_error;
        stats.entropy += parts.entropy;
        stats.approx_kl += tr.log_prob - parts.log_prob;
        if (std::abs(parts.ratio - 1.0) > config.clip_epsilon) ++mb_clipped;
      }
      if (stats.minibatches == 0) stats.first_minibatch_clip_fraction = static_cast<double>(mb_clipped) / mb.size();
      clipped += mb_clipped;
      transitions_seen += mb.size();
      stats.grad_norm += detail::apply_agent_step(nets, grads, opt, config, lr);
      ++stats.minibatches;
    }
  }
  const double n = static_cast<double>(transitions_seen);
  stats.policy_loss /= n;
  stats.value_loss /= n;
  stats.entropy /= n;
  stats.approx_kl /= n;
  stats.clip_fraction = static_cast<double>(clipped) / n;
  stats.grad_norm /= static_cast<double>(stats.minibatches);
  return stats;
}

// One pass of vanilla policy gradient with the batch-mean return as baseline. Only the policy moves.
inline UpdateStats reinforce_update(nets::NetworkBundle<float>& nets, const RolloutBuffer& buffer,
                                    const std::vector<double>& returns, const PPOConfig& config,
                                    AgentOptimizers& opt, double lr, std::uint64_t seed) {
  if (buffer.empty()) throw InvalidBufferError("empty buffer");
  if (returns.size() != buffer.size()) throw InvalidBufferError("returns do not match the buffer");
  const double baseline = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
  nk::Rng rng(seed);
  UpdateStats stats;
  for (const auto& mb : detail::minibatches(buffer.size(), config.minibatch_size, rng)) {
    nk::Gradients<float> grads;
    const double w = 1.0 / static_cast<double>(mb.size());
    for (auto i : mb) {
      Tape<float> tape;
      const auto parts = record_reinforce_loss(tape, nets.policy, buffer.transitions[i], returns[i], baseline);
      if (!std::isfinite(static_cast<double>(tape.scalar(parts.total)))) throw NumericError("non-finite REINFORCE loss");
      tape.backward_into(parts.total, nk::Tensor<float>(1, 1, static_cast<float>(w)), grads);
      stats.policy_loss -= parts.surrogate;
      stats.entropy += parts.entropy;
    }
    const double norm = nk::clip_global_norm(grads, config.max_grad_norm);
    stats.grad_norm += norm;
    opt.policy.learning_rate = lr;
    nk::adam_step(nets.policy_refs(), grads, opt.policy);
    ++stats.minibatches;
  }
  const double n = static_cast<double>(buffer.size());
  stats.policy_loss /= n;
  stats.entropy /= n;
  stats.grad_norm /= static_cast<double>(stats.minibatches);
  return stats;
}

}  // namespace rlogist::rltrain
