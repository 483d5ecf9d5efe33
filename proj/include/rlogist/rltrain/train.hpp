#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlogist/envmdp/env.hpp"
#include "rlogist/errors.hpp"
#include "rlogist/eval/strategy.hpp"
#include "rlogist/nets/bundle.hpp"
#include "rlogist/nets/checkpoint.hpp"
#include "rlogist/nets/pretrain.hpp"
#include "rlogist/numkernel/adam.hpp"
#include "rlogist/rltrain/buffer.hpp"
#include "rlogist/rltrain/collect.hpp"
#include "rlogist/rltrain/config.hpp"
#include "rlogist/rltrain/ppo.hpp"

namespace rlogist::rltrain {

struct TrainConfig {
  PPOConfig ppo;
  envmdp::EnvConfig env;
  nets::UpdaterVariant variant = nets::UpdaterVariant::local_and_global;
  Algorithm algorithm = Algorithm::ppo;
  // Collect with uniformly random actions and leave the policy untouched; only the classifier
  // adapts. Used for the random-strategy baseline.
  bool uniform_behaviour = false;
  bool finetune_classifier = true;
  double classifier_lr = 3e-5;
  double classifier_weight_decay = 0.1;
  // Held-out evaluation cadence in episodes; 0 evaluates only at the start and the end.
  std::size_t eval_interval_episodes = 320;
  // Track the held-out AUC of the sampling policy rather than its argmax. An untrained scorer's
  // argmax already prefers high-norm rows, which would credit the threshold to luck.
  bool eval_greedy = false;
  std::optional<double> auc_threshold;
  std::uint64_t seed = 1;
  std::size_t workers = 1;

  void validate() const {
    ppo.validate();
    env.validate();
    if (!(classifier_lr >= 0.0) || !(classifier_weight_decay >= 0.0)) throw ConfigError("classifier settings are invalid");
    if (workers == 0) throw ConfigError("workers must be positive");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"ppo", c.ppo},
       {"env", c.env},
       {"variant", nets::to_string(c.variant)},
       {"algorithm", to_string(c.algorithm)},
       {"uniform_behaviour", c.uniform_behaviour},
       {"finetune_classifier", c.finetune_classifier},
       {"classifier_lr", c.classifier_lr},
       {"classifier_weight_decay", c.classifier_weight_decay},
       {"eval_interval_episodes", c.eval_interval_episodes},
       {"eval_greedy", c.eval_greedy},
       {"auc_threshold", c.auc_threshold ? nlohmann::json(*c.auc_threshold) : nlohmann::json(nullptr)},
       {"seed", c.seed},
       {"workers", c.workers}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (j.contains("ppo")) c.ppo = j.at("ppo").get<PPOConfig>();
  if (j.contains("env")) c.env = j.at("env").get<envmdp::EnvConfig>();
  c.variant = nets::variant_from_string(j.value("variant", nets::to_string(c.variant)));
  c.algorithm = algorithm_from_string(j.value("algorithm", to_string(c.algorithm)));
  c.uniform_behaviour = j.value("uniform_behaviour", c.uniform_behaviour);
  c.finetune_classifier = j.value("finetune_classifier", c.finetune_classifier);
  c.classifier_lr = j.value("classifier_lr", c.classifier_lr);
  c.classifier_weight_decay = j.value("classifier_weight_decay", c.classifier_weight_decay);
  c.eval_interval_episodes = j.value("eval_interval_episodes", c.eval_interval_episodes);
  c.eval_greedy = j.value("eval_greedy", c.eval_greedy);
  if (j.contains("auc_threshold") && !j.at("auc_threshold").is_null()) c.auc_threshold = j.at("auc_threshold").get<double>();
  c.seed = j.value("seed", c.seed);
  c.workers = j.value("workers", c.workers);
}

struct IterationRecord {
  std::size_t iteration = 0;
  std::size_t episodes = 0;  // cumulative, after this iteration
  double learning_rate = 0.0;
  double mean_return = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;  // mean pre-clip norm over update steps
  double classifier_loss = 0.0;
  std::optional<double> heldout_auc;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

inline void to_json(nlohmann::json& j, const IterationRecord& r) {
  j = {{"iteration", r.iteration},         {"episodes", r.episodes},       {"learning_rate", r.learning_rate},
       {"mean_return", r.mean_return},     {"policy_loss", r.policy_loss}, {"value_loss", r.value_loss},
       {"entropy", r.entropy},             {"clip_fraction", r.clip_fraction}, {"approx_kl", r.approx_kl},
       {"grad_norm", r.grad_norm},           {"classifier_loss", r.classifier_loss},
       {"heldout_auc", r.heldout_auc ? nlohmann::json(*r.heldout_auc) : nlohmann::json(nullptr)}};
}

inline void from_json(const nlohmann::json& j, IterationRecord& r) {
  r.iteration = j.at("iteration").get<std::size_t>();
  r.episodes = j.at("episodes").get<std::size_t>();
  r.learning_rate = j.at("learning_rate").get<double>();
  r.mean_return = j.at("mean_return").get<double>();
  r.policy_loss = j.at("policy_loss").get<double>();
  r.value_loss = j.at("value_loss").get<double>();
  r.entropy = j.at("entropy").get<double>();
  r.clip_fraction = j.at("clip_fraction").get<double>();
  r.approx_kl = j.at("approx_kl").get<double>();
  r.grad_norm = j.at("grad_norm").get<double>();
  r.classifier_loss = j.at("classifier_loss").get<double>();
  if (!j.at("heldout_auc").is_null()) r.heldout_auc = j.at("heldout_auc").get<double>();
}

struct TrainReport {
  std::optional<double> cold_start_auc;
  std::vector<IterationRecord> iterations;
  std::optional<double> auc_threshold;
  std::optional<std::size_t> episodes_to_threshold;

  // (episodes, auc) pairs including the cold start at 0 episodes.
  std::vector<std::pair<std::size_t, double>> auc_series() const {
    std::vector<std::pair<std::size_t, double>> out;
    if (cold_start_auc) out.emplace_back(0, *cold_start_auc);
    for (const auto& r : iterations)
      if (r.heldout_auc) out.emplace_back(r.episodes, *r.heldout_auc);
    return out;
  }

  std::optional<double> final_auc() const {
    const auto s = auc_series();
    if (s.empty()) return std::nullopt;
    return s.back().second;
  }

  // First evaluated episode count whose AUC reaches `threshold`.
  std::optional<std::size_t> first_reaching(double threshold) const {
    for (const auto& [episodes, auc] : auc_series())
      if (auc >= threshold) return episodes;
    return std::nullopt;
  }

  friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

inline void to_json(nlohmann::json& j, const TrainReport& r) {
  const auto opt = [](const auto& o) { return o ? nlohmann::json(*o) : nlohmann::json(nullptr); };
  j = {{"cold_start_auc", opt(r.cold_start_auc)},
       {"iterations", r.iterations},
       {"auc_threshold", opt(r.auc_threshold)},
       {"episodes_to_threshold", opt(r.episodes_to_threshold)}};
}

inline void from_json(const nlohmann::json& j, TrainReport& r) {
  if (!j.at("cold_start_auc").is_null()) r.cold_start_auc = j.at("cold_start_auc").get<double>();
  r.iterations = j.at("iterations").get<std::vector<IterationRecord>>();
  if (!j.at("auc_threshold").is_null()) r.auc_threshold = j.at("auc_threshold").get<double>();
  if (!j.at("episodes_to_threshold").is_null()) r.episodes_to_threshold = j.at("episodes_to_threshold").get<std::size_t>();
}

// One JSON object per line: a header line with the cold start, then one per iteration.
inline std::string report_jsonl(const TrainReport& r) {
  std::string out;
  nlohmann::json head = {{"kind", "start"},
                         {"cold_start_auc", r.cold_start_auc ? nlohmann::json(*r.cold_start_auc) : nlohmann::json(nullptr)}};
  out += head.dump() + "\n";
  for (const auto& it : r.iterations) {
    nlohmann::json j = it;
    j["kind"] = "iteration";
    out += j.dump() + "\n";
  }
  nlohmann::json tail = {{"kind", "summary"},
                         {"auc_threshold", r.auc_threshold ? nlohmann::json(*r.auc_threshold) : nlohmann::json(nullptr)},
                         {"episodes_to_threshold",
                          r.episodes_to_threshold ? nlohmann::json(*r.episodes_to_threshold) : nlohmann::json(nullptr)}};
  out += tail.dump() + "\n";
  return out;
}

// Everything training mutates. Saving and restoring this resumes a run bit-exactly.
struct TrainState {
  nets::NetworkBundle<float> nets;
  AgentOptimizers agent;
  nk::AdamState<float> classifier;
  std::size_t iteration = 0;
  std::size_t episodes = 0;
  TrainReport report;
  bool started = false;  // cold-start evaluation done
};

inline TrainState make_train_state(nets::NetworkBundle<float> nets, const TrainConfig& config) {
  TrainState s;
  s.nets = std::move(nets);
  s.agent = AgentOptimizers::make(s.nets, config.ppo);
  s.classifier = nk::make_adam(s.nets.classifier_refs(), config.classifier_lr);
  s.report.auc_threshold = config.auc_threshold;
  return s;
}

inline nets::Checkpoint train_state_checkpoint(const TrainState& s, const TrainConfig& config) {
  auto ck = nets::bundle_checkpoint(s.nets);
  ck.meta["kind"] = "train_state";
  ck.meta["train_config"] = config;
  ck.meta["iteration"] = s.iteration;
  ck.meta["episodes"] = s.episodes;
  ck.meta["started"] = s.started;
  ck.meta["report"] = s.report;
  nets::append_adam(ck, s.agent.joint, "agent");
  nets::append_adam(ck, s.agent.policy, "policy");
  nets::append_adam(ck, s.agent.value, "value");
  nets::append_adam(ck, s.classifier, "classifier");
  return ck;
}

inline std::pair<TrainState, TrainConfig> train_state_from_checkpoint(const nets::Checkpoint& ck) {
  if (ck.meta.value("kind", "") != "train_state") {
    throw FormatError(FormatErrorKind::invalid_value, "checkpoint does not hold a training state");
  }
  TrainState s;
  s.nets = nets::bundle_from_checkpoint(ck);
  s.agent.joint = nets::restore_adam(ck, "agent");
  s.agent.policy = nets::restore_adam(ck, "policy");
  s.agent.value = nets::restore_adam(ck, "value");
  s.classifier = nets::restore_adam(ck, "classifier");
  s.iteration = ck.meta.at("iteration").get<std::size_t>();
  s.episodes = ck.meta.at("episodes").get<std::size_t>();
  s.started = ck.meta.at("started").get<bool>();
  s.report = ck.meta.at("report").get<TrainReport>();
  return {std::move(s), ck.meta.at("train_config").get<TrainConfig>()};
}

inline void save_train_state(const TrainState& s, const TrainConfig& config, const std::filesystem::path& path) {
  nets::save_checkpoint(train_state_checkpoint(s, config), path);
}

inline std::pair<TrainState, TrainConfig> load_train_state(const std::filesystem::path& path) {
  return train_state_from_checkpoint(nets::load_checkpoint(path));
}

// One classifier gradient step per terminal state, in episode order. Returns the mean loss.
inline double finetune_classifier(nets::NetworkBundle<float>& nets, nk::AdamState<float>& adam,
                                  const std::vector<EpisodeSummary>& episodes, const envmdp::EnvConfig& env,
                                  double learning_rate, double weight_decay) {
  auto params = nets.classifier_refs();
  adam.learning_rate = learning_rate;
  double total = 0.0;
  for (const auto& e : episodes) {
    nk::Tape<float> tape;
    const auto view = nets::classifier_view<float>(e.final_scan, e.observed);
    const auto rec = nets.classifier.record(tape, tape.constant(view),
                                            nets::attention_mask(e.observed, env.classifier_sees_all), 0);
    const auto loss = tape.bce_with_logit(rec.logit, e.label);
    total += static_cast<double>(tape.scalar(loss));
    nk::Gradients<float> grads;
    tape.backward_into(loss, nk::Tensor<float>(1, 1, 1.0f), grads);
    if (weight_decay > 0.0) nets::add_weight_decay(params, grads, weight_decay);
    nk::adam_step(params, grads, adam);
  }
  return episodes.empty() ? 0.0 : total / static_cast<double>(episodes.size());
}

// Held-out AUC of the current agent: greedy policy, or uniform actions for the random baseline.
inline double heldout_auc(const TrainState& s, const TrainConfig& config, const std::vector<const SlideBundle*>& test) {
  eval::StrategySpec spec;
  spec.kind = config.uniform_behaviour ? eval::StrategyKind::random : eval::StrategyKind::learned;
  spec.seed = nk::derive_seed(config.seed, {0xe7a1});
  spec.greedy = config.eval_greedy;
  const auto m = eval::evaluate_strategy(spec, test, s.nets, config.env, config.variant, config.workers);
  if (!m.auc) throw UndefinedAucError("held-out slides contain a single class");
  return *m.auc;
}

struct TrainHooks {
  // Called after every iteration with the state as it would be checkpointed.
  std::function<void(const TrainState&)> on_iteration;
  // Stop once this many iterations exist in total (for interrupted/resumed runs).
  std::optional<std::size_t> stop_after_iteration;
  // Where to write the state when an iteration aborts on a numeric error.
  std::optional<std::filesystem::path> dump_path;
};

// Collect -> returns/advantages -> update -> classifier fine-tune -> periodic held-out evaluation.
inline TrainReport train(TrainState& state, const TrainConfig& config, const std::vector<const SlideBundle*>& train_slides,
                         const std::vector<const SlideBundle*>& test_slides, const TrainHooks& hooks = {}) {
  config.validate();
  if (train_slides.empty()) throw NoDataError("no training slides");
  if (test_slides.empty()) throw NoDataError("no held-out slides");
  const auto& ppo = config.ppo;

  if (!state.started) {
    state.report.auc_threshold = config.auc_threshold;
    state.report.cold_start_auc = heldout_auc(state, config, test_slides);
    if (config.auc_threshold && *state.report.cold_start_auc >= *config.auc_threshold) {
      state.report.episodes_to_threshold = 0;
    }
    state.started = true;
  }

  while (state.episodes < ppo.total_episodes) {
    if (hooks.stop_after_iteration && state.iteration >= *hooks.stop_after_iteration) break;
    const TrainState before = hooks.dump_path ? state : TrainState{};
    try {
      const std::size_t count = std::min(ppo.rollout_episodes, ppo.total_episodes - state.episodes);
      const std::uint64_t iter_seed = nk::derive_seed(config.seed, {0x7a11, state.iteration});
      const double progress = static_cast<double>(state.episodes) / static_cast<double>(ppo.total_episodes);
      const double lr = nk::linear_annealed_lr(ppo.base_lr, progress);
      const auto behaviour = config.uniform_behaviour ? Behaviour::uniform : Behaviour::policy;

      auto rollouts = collect_rollouts(state.nets, train_slides, config.env, config.variant, count,
                                       nk::derive_seed(iter_seed, {1}), state.episodes, behaviour, config.workers);
      rollouts.buffer.validate();

      IterationRecord rec;
      rec.iteration = state.iteration;
      rec.learning_rate = lr;
      rec.mean_return = rollouts.mean_return();
      if (!config.uniform_behaviour) {
        const auto returns = reward_to_go(rollouts.buffer, ppo.gamma);
        UpdateStats stats;
        if (config.algorithm == Algorithm::ppo) {
          const auto adv = compute_gae(rollouts.buffer, ppo.gamma, ppo.gae_lambda);
          stats = ppo_update(state.nets, rollouts.buffer, adv, returns, ppo, state.agent, lr,
                             nk::derive_seed(iter_seed, {2}));
        } else {
          stats = reinforce_update(state.nets, rollouts.buffer, returns, ppo, state.agent, lr,
                                   nk::derive_seed(iter_seed, {2}));
        }
        rec.policy_loss = stats.policy_loss;
        rec.value_loss = stats.value_loss;
        rec.entropy = stats.entropy;
        rec.clip_fraction = stats.clip_fraction;
        rec.approx_kl = stats.approx_kl;
        rec.grad_norm = stats.grad_norm;
      }
      if (config.finetune_classifier) {
        rec.classifier_loss = finetune_classifier(state.nets, state.classifier, rollouts.episodes, config.env,
                                                  config.classifier_lr, config.classifier_weight_decay);
      }

      const std::size_t prev = state.episodes;
      state.episodes += count;
      rec.episodes = state.episodes;
      const bool due = config.eval_interval_episodes > 0 &&
                       state.episodes / config.eval_interval_episodes > prev / config.eval_interval_episodes;
      if (due || state.episodes == ppo.total_episodes) {
        rec.heldout_auc = heldout_auc(state, config, test_slides);
        if (config.auc_threshold && !state.report.episodes_to_threshold && *rec.heldout_auc >= *config.auc_threshold) {
          state.report.episodes_to_threshold = state.episodes;
        }
      }
      state.report.iterations.push_back(rec);
      ++state.iteration;
    } catch (const NumericError&) {
      if (hooks.dump_path) save_train_state(before, config, *hooks.dump_path);
      throw;
    }
    if (hooks.on_iteration) hooks.on_iteration(state);
  }
  return state.report;
}

inline TrainReport train(TrainState& state, const TrainConfig& config, const std::vector<SlideBundle>& train_slides,
                         const std::vector<SlideBundle>& test_slides, const TrainHooks& hooks = {}) {
  std::vector<const SlideBundle*> a, b;
  for (const auto& s : train_slides) a.push_back(&s);
  for (const auto& s : test_slides) b.push_back(&s);
  return train(state, config, a, b, hooks);
}

}  // namespace rlogist::rltrain
