#pragma once

#include <map>
#include <string>
#include <vector>

#include "rlogist/eval/compare.hpp"
#include "rlogist/eval/strategy.hpp"
#include "rlogist/rltrain/train.hpp"

namespace rlogist::eval {

struct AblationResult {
  ComparisonTable table;
  std::map<std::string, rltrain::TrainReport> reports;
  std::map<std::string, nets::NetworkBundle<float>> agents;
};

// Trains one agent per updater variant from the same pretrained bundle and seed, then evaluates
// each with its greedy policy on the held-out slides. Rows are named after the variants.
inline AblationResult ablate_updaters(const std::vector<const SlideBundle*>& train_slides,
                                      const std::vector<const SlideBundle*>& test_slides,
                                      const nets::NetworkBundle<float>& pretrained, const rltrain::TrainConfig& base,
                                      const std::vector<nets::UpdaterVariant>& variants) {
  if (variants.empty()) throw ConfigError("no updater variants to compare");
  AblationResult out;
  for (const auto variant : variants) {
    auto config = base;
    config.variant = variant;
    auto state = rltrain::make_train_state(pretrained, config);
    const auto name = nets::to_string(variant);
    out.reports[name] = rltrain::train(state, config, train_slides, test_slides);
    StrategySpec spec;
    spec.kind = StrategyKind::learned;
    spec.seed = config.seed;
    spec.label = name;
    out.table.rows.push_back(evaluate_strategy(spec, test_slides, state.nets, config.env, variant, config.workers));
    out.table.episodes_to_threshold[name] = out.reports[name].episodes_to_threshold;
    out.agents.emplace(name, std::move(state.nets));
  }
  add_pairwise_deltas(out.table);
  return out;
}

}  // namespace rlogist::eval
