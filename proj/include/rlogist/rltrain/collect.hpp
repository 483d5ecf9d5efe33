#pragma once

#include <cstdint>
#include <vector>

#include "rlogist/envmdp/env.hpp"
#include "rlogist/errors.hpp"
#include "rlogist/eval/strategy.hpp"
#include "rlogist/nets/bundle.hpp"
#include "rlogist/numkernel/random.hpp"
#include "rlogist/numkernel/softmax.hpp"
#include "rlogist/rltrain/buffer.hpp"
#include "rlogist/slidegen/bundle.hpp"

namespace rlogist::rltrain {

using slidegen::SlideBundle;

// How actions are chosen during collection. `uniform` ignores the policy (random-strategy baseline).
enum class Behaviour { policy, uniform };

// Final state of one collected episode; the classifier is fine-tuned on these.
struct EpisodeSummary {
  std::size_t slide = 0;
  nk::Tensor<float> final_scan;
  std::vector<bool> observed;
  int label = 0;
  double logit = 0.0;
  double episode_return = 0.0;
  std::size_t length = 0;
  std::size_t sub_reads = 0;
};

struct Rollouts {
  RolloutBuffer buffer;
  std::vector<EpisodeSummary> episodes;

  double mean_return() const {
    if (episodes.empty()) return 0.0;
    double s = 0.0;
    for (const auto& e : episodes) s += e.episode_return;
    return s / static_cast<double>(episodes.size());
  }
};

namespace detail {

inline std::vector<Transition> run_collect_episode(const nets::NetworkBundle<float>& nets, const SlideBundle& bundle,
                                                   std::size_t slide_index, const envmdp::EnvConfig& env_config,
                                                   nets::UpdaterVariant variant, Behaviour behaviour, nk::Rng& rng,
                                                   EpisodeSummary& summary) {
  const nets::NetDynamics dyn(nets, variant);
  auto state = envmdp::reset(bundle, env_config);
  std::vector<Transition> out;
  while (!state.done) {
    const auto legal = envmdp::legal_action_mask(state);
    Transition tr;
    tr.slide = slide_index;
    tr.scan = state.current_scan;
    tr.observed = state.observed;
    tr.progress = state.progress();
    const auto logits = nets::policy_logits(nets, state);
    const auto logp = nk::masked_log_softmax(std::span<const float>(logits.data()), legal);
    if (behaviour == Behaviour::policy) {
      std::vector<double> p(logp.size());
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = legal[i] ? std::exp(logp[i]) : 0.0;
      tr.action = rng.categorical(p);
    } else {
      tr.action = eval::detail::random_action(legal, rng);
    }
    tr.log_prob = logp[tr.action];
    tr.value = nets::value_estimate(nets, state);
    const auto r = envmdp::step(state, tr.action, dyn, env_config);
    tr.reward = r.reward;
    tr.done = r.done;
    summary.episode_return += r.reward;
    if (r.done) summary.logit = *r.logit;
    out.push_back(std::move(tr));
  }
  summary.slide = slide_index;
  summary.final_scan = state.current_scan;
  summary.observed = state.observed;
  summary.label = bundle.label;
  summary.length = state.t;
  summary.sub_reads = state.sub_reads;
  return out;
}

}  // namespace detail

// `count` episodes on slides drawn uniformly at random. Episode e uses seed
// derive_seed(seed, {e}) for both slide choice and actions, so the result does not depend on
// `workers`; episodes are merged in order and numbered from `first_episode`.
inline Rollouts collect_rollouts(const nets::NetworkBundle<float>& nets, const std::vector<const SlideBundle*>& slides,
                                 const envmdp::EnvConfig& env_config, nets::UpdaterVariant variant, std::size_t count,
                                 std::uint64_t seed, std::size_t first_episode = 0,
                                 Behaviour behaviour = Behaviour::policy, std::size_t workers = 1) {
  if (slides.empty()) throw NoDataError("no slides to collect episodes from");
  env_config.validate();
  std::vector<std::vector<Transition>> per_episode(count);
  std::vector<EpisodeSummary> summaries(count);
  eval::detail::parallel_for(count, workers, [&](std::size_t e) {
    nk::Rng rng(nk::derive_seed(seed, {e}));
    const std::size_t s = rng.uniform_index(slides.size());
    per_episode[e] = detail::run_collect_episode(nets, *slides[s], s, env_config, variant, behaviour, rng, summaries[e]);
  });
  Rollouts out;
  for (std::size_t e = 0; e < count; ++e) {
    for (auto& tr : per_episode[e]) {
      tr.episode = first_episode + e;
      out.buffer.transitions.push_back(std::move(tr));
    }
  }
  out.episodes = std::move(summaries);
  return out;
}

}  // namespace rlogist::rltrain
