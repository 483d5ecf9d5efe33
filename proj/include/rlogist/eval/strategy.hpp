#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rlogist/envmdp/env.hpp"
#include "rlogist/errors.hpp"
#include "rlogist/eval/auc.hpp"
#include "rlogist/nets/bundle.hpp"
#include "rlogist/numkernel/random.hpp"
#include "rlogist/numkernel/softmax.hpp"
#include "rlogist/slidegen/bundle.hpp"

namespace rlogist::eval {

using slidegen::SlideBundle;

enum class StrategyKind { learned, random, full_observation };

inline std::string to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::learned: return "learned";
    case StrategyKind::random: return "random";
    case StrategyKind::full_observation: return "full_observation";
  }
  return "learned";
}

inline StrategyKind strategy_from_string(const std::string& s) {
  if (s == "learned") return StrategyKind::learned;
  if (s == "random") return StrategyKind::random;
  if (s == "full_observation" || s == "full") return StrategyKind::full_observation;
  throw ConfigError("unknown strategy '" + s + "'");
}

struct StrategySpec {
  StrategyKind kind = StrategyKind::learned;
  std::string checkpoint;  // informational; the caller loads the networks
  std::uint64_t seed = 1;
  // Learned policy: argmax over legal actions, or sample from the masked softmax.
  bool greedy = true;
  std::string label;  // display name, defaults to the kind

  std::string name() const { return label.empty() ? to_string(kind) : label; }
};

struct TraceStep {
  std::size_t t = 0;
  std::size_t region = 0;
  double prob = 0.0;

  friend bool operator==(const TraceStep&, const TraceStep&) = default;
  NLOHMANN_DEFINE_TYPE_INTRUSIVE(TraceStep, t, region, prob)
};

struct PathTrace {
  std::string slide_id;
  int label = 0;
  std::vector<TraceStep> steps;
  double prediction = 0.0;
  double observed_fraction = 0.0;
  std::size_t n_regions = 0;
  std::size_t sub_reads = 0;

  friend bool operator==(const PathTrace&, const PathTrace&) = default;
  NLOHMANN_DEFINE_TYPE_INTRUSIVE(PathTrace, slide_id, label, steps, prediction, observed_fraction, n_regions,
                                 sub_reads)
};

struct MetricsReport {
  std::string strategy;
  std::size_t n_slides = 0;
  double accuracy = 0.0;
  std::optional<double> auc;
  double mean_observed_fraction = 0.0;
  double mean_sub_reads = 0.0;
  double mean_full_reads = 0.0;  // N*K*d, what full observation would read

  double read_ratio() const { return mean_full_reads > 0 ? mean_sub_reads / mean_full_reads : 0.0; }

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = {{"strategy", r.strategy},
       {"n_slides", r.n_slides},
       {"accuracy", r.accuracy},
       {"auc", r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr)},
       {"mean_observed_fraction", r.mean_observed_fraction},
       {"mean_sub_reads", r.mean_sub_reads},
       {"mean_full_reads", r.mean_full_reads},
       {"read_ratio", r.read_ratio()}};
}

// Episode result for one slide; per-step probabilities only when requested.
struct EpisodeOutcome {
  PathTrace trace;
  double logit = 0.0;
};

namespace detail {

inline std::size_t greedy_action(const nk::Tensor<float>& logits, const std::vector<bool>& legal) {
  std::size_t best = legal.size();
  for (std::size_t i = 0; i < legal.size(); ++i)
    if (legal[i] && (best == legal.size() || logits[i] > logits[best])) best = i;
  if (best == legal.size()) throw NoLegalActionError("no legal region left");
  return best;
}

inline std::size_t random_action(const std::vector<bool>& legal, nk::Rng& rng) {
  std::vector<std::size_t> open;
  for (std::size_t i = 0; i < legal.size(); ++i)
    if (legal[i]) open.push_back(i);
  if (open.empty()) throw NoLegalActionError("no legal region left");
  return open[rng.uniform_index(open.size())];
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results are written by index, so
// the outcome does not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

// One episode of `spec` on `bundle`. Full observation ignores the budget and reads every region
// in index order.
inline EpisodeOutcome run_episode(const StrategySpec& spec, const SlideBundle& bundle,
                                  const nets::NetworkBundle<float>& nets, const envmdp::EnvConfig& env_config,
                                  nets::UpdaterVariant variant, std::uint64_t episode_seed, bool record_probs) {
  auto config = env_config;
  if (spec.kind == StrategyKind::full_observation) config.budget_fraction = 1.0;
  const nets::NetDynamics dyn(nets, variant);
  auto state = envmdp::reset(bundle, config);
  nk::Rng rng(episode_seed);

  EpisodeOutcome out;
  out.trace.slide_id = bundle.slide_id;
  out.trace.label = bundle.label;
  out.trace.n_regions = bundle.n_regions;
  while (!state.done) {
    const auto legal = envmdp::legal_action_mask(state);
    std::size_t a = 0;
    switch (spec.kind) {
      case StrategyKind::full_observation:
        a = static_cast<std::size_t>(std::find(legal.begin(), legal.end(), true) - legal.begin());
        break;
      case StrategyKind::random: a = detail::random_action(legal, rng); break;
      case StrategyKind::learned: {
        const auto logits = nets::policy_logits(nets, state);
        if (spec.greedy) {
          a = detail::greedy_action(logits, legal);
        } else {
          const auto p = nk::masked_softmax(std::span<const float>(logits.data()), legal);
          a = rng.categorical(p);
        }
        break;
      }
    }
    const std::size_t t = state.t;
    const auto r = envmdp::step(state, a, dyn, config);
    TraceStep ts{t, a, 0.0};
    if (r.done) {
      out.logit = *r.logit;
      out.trace.prediction = *r.prediction;
      ts.prob = *r.prediction;
    } else if (record_probs) {
      ts.prob = nets::classify_slide(nets, state, config.classifier_sees_all);
    }
    out.trace.steps.push_back(ts);
  }
  out.trace.observed_fraction = envmdp::observed_fraction(state);
  out.trace.sub_reads = state.sub_reads;
  return out;
}

inline PathTrace run_episode_trace(const StrategySpec& spec, const SlideBundle& bundle,
                                   const nets::NetworkBundle<float>& nets, const envmdp::EnvConfig& env_config,
                                   nets::UpdaterVariant variant = nets::UpdaterVariant::local_and_global) {
  return run_episode(spec, bundle, nets, env_config, variant, nk::derive_seed(spec.seed, {0}), true).trace;
}

inline MetricsReport summarize(const std::string& name, const std::vector<EpisodeOutcome>& outcomes,
                               const std::vector<const SlideBundle*>& slides) {
  MetricsReport r;
  r.strategy = name;
  r.n_slides = outcomes.size();
  if (outcomes.empty()) throw NoDataError("no slides to evaluate");
  std::vector<ScoredLabel> scores;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& tr = outcomes[i].trace;
    const int predicted = tr.prediction >= 0.5 ? 1 : 0;
    correct += predicted == tr.label ? 1 : 0;
    // Ranking by logit avoids ties from probabilities saturating in float precision.
    scores.push_back({outcomes[i].logit, tr.label});
    r.mean_observed_fraction += tr.observed_fraction;
    r.mean_sub_reads += static_cast<double>(tr.sub_reads);
    r.mean_full_reads += static_cast<double>(slides[i]->n_regions * slides[i]->sub_patches * slides[i]->dim);
  }
  const double n = static_cast<double>(outcomes.size());
  r.accuracy = static_cast<double>(correct) / n;
  r.mean_observed_fraction /= n;
  r.mean_sub_reads /= n;
  r.mean_full_reads /= n;
  try {
    r.auc = compute_auc(scores);
  } catch (const UndefinedAucError&) {
    r.auc.reset();
  }
  return r;
}

// One episode per slide. Slide i uses seed derive_seed(spec.seed, {i}).
inline MetricsReport evaluate_strategy(const StrategySpec& spec, const std::vector<const SlideBundle*>& slides,
                                       const nets::NetworkBundle<float>& nets, const envmdp::EnvConfig& env_config,
                                       nets::UpdaterVariant variant, std::size_t workers = 1) {
  if (slides.empty()) throw NoDataError("no slides to evaluate");
  std::vector<EpisodeOutcome> outcomes(slides.size());
  detail::parallel_for(slides.size(), workers, [&](std::size_t i) {
    outcomes[i] = run_episode(spec, *slides[i], nets, env_config, variant, nk::derive_seed(spec.seed, {i}), false);
  });
  return summarize(spec.name(), outcomes, slides);
}

inline MetricsReport evaluate_strategy(const StrategySpec& spec, const std::vector<SlideBundle>& slides,
                                       const nets::NetworkBundle<float>& nets, const envmdp::EnvConfig& env_config,
                                       nets::UpdaterVariant variant, std::size_t workers = 1) {
  std::vector<const SlideBundle*> ptrs;
  for (const auto& b : slides) ptrs.push_back(&b);
  return evaluate_strategy(spec, ptrs, nets, env_config, variant, workers);
}

}  // namespace rlogist::eval
