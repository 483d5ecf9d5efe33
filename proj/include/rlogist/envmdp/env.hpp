#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlogist/errors.hpp"
#include "rlogist/numkernel/tensor.hpp"
#include "rlogist/slidegen/bundle.hpp"

namespace rlogist::envmdp {

using slidegen::SlideBundle;

enum class RewardMode { final_only, instant };

inline std::string to_string(RewardMode m) { return m == RewardMode::final_only ? "final_only" : "instant"; }

inline RewardMode reward_mode_from_string(const std::string& s) {
  if (s == "final_only") return RewardMode::final_only;
  if (s == "instant") return RewardMode::instant;
  throw ConfigError("unknown reward mode '" + s + "'");
}

struct EnvConfig {
  double budget_fraction = 0.2;
  RewardMode reward_mode = RewardMode::final_only;
  double reward_clip_floor = -5.0;
  // When false the classifier attends only to observed regions (falls back to all before the
  // first observation).
  bool classifier_sees_all = true;

  void validate() const {
    if (!(budget_fraction > 0.0 && budget_fraction <= 1.0)) {
      throw ConfigError("budget fraction must lie in (0,1], got " + std::to_string(budget_fraction));
    }
    if (!(reward_clip_floor < 0.0) || !std::isfinite(reward_clip_floor)) {
      throw ConfigError("reward clip floor must be a finite negative number");
    }
  }
};

inline void to_json(nlohmann::json& j, const EnvConfig& c) {
  j = {{"budget_fraction", c.budget_fraction},
       {"reward_mode", to_string(c.reward_mode)},
       {"reward_clip_floor", c.reward_clip_floor},
       {"classifier_sees_all", c.classifier_sees_all}};
}

inline void from_json(const nlohmann::json& j, EnvConfig& c) {
  c.budget_fraction = j.value("budget_fraction", c.budget_fraction);
  c.reward_mode = reward_mode_from_string(j.value("reward_mode", to_string(c.reward_mode)));
  c.reward_clip_floor = j.value("reward_clip_floor", c.reward_clip_floor);
  c.classifier_sees_all = j.value("classifier_sees_all", c.classifier_sees_all);
}

// Number of regions observed per episode: ceil(fraction * n), at least one.
inline std::size_t budget_steps(std::size_t n_regions, double fraction) {
  const auto t = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n_regions) - 1e-12));
  return std::max<std::size_t>(1, std::min(t, n_regions));
}

struct EnvState {
  const SlideBundle* bundle = nullptr;
  nk::Tensor<float> current_scan;
  std::vector<bool> observed;
  std::vector<std::size_t> visited;
  std::size_t t = 0;
  std::size_t T = 0;
  bool done = false;
  // Sub-patch feature values fetched so far.
  std::size_t sub_reads = 0;

  std::size_t n_regions() const { return observed.size(); }
  double progress() const { return T == 0 ? 0.0 : static_cast<double>(t) / static_cast<double>(T); }
};

// Learned (or stub) pieces the transition depends on.
class Dynamics {
 public:
  virtual ~Dynamics() = default;
  // Replacement scan-level row for an observed region, from its K x d sub-patch features.
  virtual std::vector<float> local_update(const nk::Tensor<float>& sub) const = 0;
  // Rewrites the given rows of `scan` from the observed pair (v_a before update, v'_a).
  virtual void global_update(nk::Tensor<float>& scan, std::span<const std::size_t> rows,
                             std::span<const float> v_a, std::span<const float> v_a_new) const = 0;
  virtual bool global_is_identity() const { return false; }
  // Slide-level logit for the current state.
  virtual double classify_logit(const EnvState& state, bool sees_all) const = 0;
};

// Mean of sub-features, pass-through global update, constant logit.
class StubDynamics : public Dynamics {
 public:
  explicit StubDynamics(double logit = 0.0) : logit_(logit) {}

  std::vector<float> local_update(const nk::Tensor<float>& sub) const override {
    const auto m = nk::kernels::mean_rows(sub);
    return {m.data().begin(), m.data().end()};
  }
  void global_update(nk::Tensor<float>&, std::span<const std::size_t>, std::span<const float>,
                     std::span<const float>) const override {}
  bool global_is_identity() const override { return true; }
  double classify_logit(const EnvState&, bool) const override { return logit_; }

 private:
  double logit_;
};

inline double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// Binary cross-entropy from a logit, evaluated stably.
inline double cross_entropy_from_logit(double logit, int label) {
  const double softplus = logit > 0 ? logit + std::log1p(std::exp(-logit)) : std::log1p(std::exp(logit));
  return softplus - label * logit;
}

inline double clipped_reward(double logit, int label, double floor) {
  return std::max(-cross_entropy_from_logit(logit, label), floor);
}

struct StepResult {
  double reward = 0.0;
  bool done = false;
  std::size_t region = 0;
  std::optional<double> prediction;  // probability, set on the terminal step
  std::optional<double> logit;
};

inline EnvState reset(const SlideBundle& bundle, const EnvConfig& config) {
  config.validate();
  if (bundle.n_regions == 0) throw EmptySlideError("slide '" + bundle.slide_id + "' has no regions");
  EnvState s;
  s.bundle = &bundle;
  s.current_scan = bundle.scan_features;
  s.observed.assign(bundle.n_regions, false);
  s.T = budget_steps(bundle.n_regions, config.budget_fraction);
  return s;
}

inline std::vector<bool> legal_action_mask(const EnvState& state) {
  if (state.done) throw EpisodeFinishedError("episode is finished");
  std::vector<bool> legal(state.observed.size());
  for (std::size_t i = 0; i < legal.size(); ++i) legal[i] = !state.observed[i];
  return legal;
}

inline StepResult step(EnvState& state, std::size_t action, const Dynamics& dyn, const EnvConfig& config) {
  if (state.done) throw EpisodeFinishedError("episode is finished");
  if (action >= state.n_regions()) {
    throw IllegalActionError("region " + std::to_string(action) + " is out of range (N=" +
                             std::to_string(state.n_regions()) + ")");
  }
  if (state.observed[action]) throw IllegalActionError("region " + std::to_string(action) + " was already observed");
  const auto& b = *state.bundle;

  const auto sub = b.region_sub_tensor(action);
  state.sub_reads += sub.size();
  const auto row = state.current_scan.row(action);
  const std::vector<float> before(row.begin(), row.end());
  const auto after = dyn.local_update(sub);
  if (after.size() != b.dim) throw ShapeError("local update returned the wrong width");
  std::copy(after.begin(), after.end(), row.begin());

  if (!dyn.global_is_identity()) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < state.n_regions(); ++i)
      if (!state.observed[i] && i != action) rows.push_back(i);
    if (!rows.empty()) dyn.global_update(state.current_scan, rows, before, after);
  }

  state.observed[action] = true;
  state.visited.push_back(action);
  ++state.t;
  state.done = state.t == state.T;

  StepResult r;
  r.region = action;
  r.done = state.done;
  if (state.done || config.reward_mode == RewardMode::instant) {
    const double z = dyn.classify_logit(state, config.classifier_sees_all);
    if (!std::isfinite(z)) throw NumericError("classifier produced a non-finite logit");
    r.reward = clipped_reward(z, b.label, config.reward_clip_floor);
    if (state.done) {
      r.logit = z;
      r.prediction = sigmoid(z);
    }
  }
  return r;
}

inline double observed_fraction(const EnvState& state) {
  return static_cast<double>(state.t) / static_cast<double>(state.n_regions());
}

}  // namespace rlogist::envmdp
