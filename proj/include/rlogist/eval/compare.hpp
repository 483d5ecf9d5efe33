#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlogist/errors.hpp"
#include "rlogist/eval/strategy.hpp"

namespace rlogist::eval {

struct AucDelta {
  std::string a;
  std::string b;
  std::optional<double> delta;  // auc(a) - auc(b)
};

struct ComparisonTable {
  std::vector<MetricsReport> rows;
  std::vector<AucDelta> deltas;
  std::map<std::string, std::optional<std::size_t>> episodes_to_threshold;

  const MetricsReport& row(const std::string& name) const {
    for (const auto& r : rows)
      if (r.strategy == name) return r;
    throw ConfigError("no row named '" + name + "'");
  }
};

inline void to_json(nlohmann::json& j, const AucDelta& d) {
  j = {{"a", d.a}, {"b", d.b}, {"delta", d.delta ? nlohmann::json(*d.delta) : nlohmann::json(nullptr)}};
}

inline void to_json(nlohmann::json& j, const ComparisonTable& t) {
  j = {{"rows", t.rows}, {"deltas", t.deltas}};
  if (!t.episodes_to_threshold.empty()) {
    auto& e = j["episodes_to_threshold"];
    e = nlohmann::json::object();
    for (const auto& [k, v] : t.episodes_to_threshold) e[k] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  }
}

inline void add_pairwise_deltas(ComparisonTable& t) {
  t.deltas.clear();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t k = i + 1; k < t.rows.size(); ++k) {
      AucDelta d{t.rows[i].strategy, t.rows[k].strategy, std::nullopt};
      if (t.rows[i].auc && t.rows[k].auc) d.delta = *t.rows[i].auc - *t.rows[k].auc;
      t.deltas.push_back(d);
    }
  }
}

// A strategy together with the networks it runs on (learned strategies each bring their own).
struct StrategyEntry {
  StrategySpec spec;
  const nets::NetworkBundle<float>* nets = nullptr;
};

inline ComparisonTable compare_strategies(const std::vector<const SlideBundle*>& slides,
                                          const std::vector<StrategyEntry>& strategies,
                                          const envmdp::EnvConfig& env_config, nets::UpdaterVariant variant,
                                          std::size_t workers = 1) {
  if (strategies.size() < 2) throw ConfigError("comparison needs at least two strategies");
  ComparisonTable t;
  for (const auto& s : strategies) {
    if (!s.nets) throw ConfigError("strategy '" + s.spec.name() + "' has no networks");
    t.rows.push_back(evaluate_strategy(s.spec, slides, *s.nets, env_config, variant, workers));
  }
  add_pairwise_deltas(t);
  return t;
}

inline ComparisonTable compare_strategies(const std::vector<const SlideBundle*>& slides,
                                          const nets::NetworkBundle<float>& nets, const envmdp::EnvConfig& env_config,
                                          const std::vector<StrategySpec>& strategies, nets::UpdaterVariant variant,
                                          std::size_t workers = 1) {
  std::vector<StrategyEntry> entries;
  for (const auto& s : strategies) entries.push_back({s, &nets});
  return compare_strategies(slides, entries, env_config, variant, workers);
}

inline std::string format_table(const ComparisonTable& t) {
  std::size_t w = 8;
  for (const auto& r : t.rows) w = std::max(w, r.strategy.size());
  const auto num = [](std::optional<double> v) {
    char buf[32];
    if (!v) return std::string("n/a");
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return std::string(buf);
  };
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %8s  %8s  %8s  %10s  %12s\n", static_cast<int>(w), "strategy", "auc",
                "accuracy", "observed", "read_ratio", "episodes");
  out += line;
  for (const auto& r : t.rows) {
    std::string episodes = "-";
    if (auto it = t.episodes_to_threshold.find(r.strategy); it != t.episodes_to_threshold.end()) {
      episodes = it->second ? std::to_string(*it->second) : "not reached";
    }
    std::snprintf(line, sizeof line, "%-*s  %8s  %8.4f  %8.4f  %10.4f  %12s\n", static_cast<int>(w),
                  r.strategy.c_str(), num(r.auc).c_str(), r.accuracy, r.mean_observed_fraction, r.read_ratio(),
                  episodes.c_str());
    out += line;
  }
  for (const auto& d : t.deltas) out += "delta auc " + d.a + " - " + d.b + " = " + num(d.delta) + "\n";
  return out;
}

}  // namespace rlogist::eval
