#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlogist/errors.hpp"
#include "rlogist/io.hpp"
#include "rlogist/nets/arch.hpp"
#include "rlogist/nets/pretrain.hpp"
#include "rlogist/rltrain/train.hpp"
#include "rlogist/slidegen/config.hpp"

namespace rlogist::cli {

using nlohmann::json;

enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel log_level_from_env() {
  const char* v = std::getenv("RLOGIST_LOG");
  if (!v) return LogLevel::info;
  const std::string s(v);
  if (s == "error") return LogLevel::error;
  if (s == "debug") return LogLevel::debug;
  return LogLevel::info;
}

// Every tunable, nested by component. Keys are addressed with dots: "train.ppo.base_lr".
inline json default_settings() {
  rltrain::TrainConfig train;
  // Desk-scale preset: the default PPO step size barely moves the policy within a few thousand episodes.
  train.ppo.base_lr = 3e-3;
  return {{"seed", 1},
          {"workers", 1},
          {"gen", json(slidegen::GenConfig{})},
          {"data", {{"count", 600}, {"train_fraction", 2.0 / 3.0}}},
          {"arch", json(nets::NetArch{})},
          {"pretrain", {{"classifier", json(nets::ClassifierPretrainConfig{})},
                        {"updaters", json(nets::UpdaterPretrainConfig{})}}},
          {"train", json(train)},
          {"eval", {{"greedy", true}}}};
}

inline json::json_pointer dotted_pointer(const std::string& key) {
  if (key.empty()) throw ConfigError("empty configuration key");
  std::string p;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("malformed configuration key '" + key + "'");
    p += "/" + part;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return json::json_pointer(p);
}

// Interprets a command-line value as JSON when it parses, otherwise as a string.
inline json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return json(text);
  }
}

// Writes `value` at dotted `key`, which must already exist with a compatible type.
inline void set_key(json& settings, const std::string& key, const json& value) {
  const auto ptr = dotted_pointer(key);
  if (!settings.contains(ptr)) throw ConfigError("unknown configuration key '" + key + "'");
  auto& slot = settings[ptr];
  if (slot.is_object()) throw ConfigError("configuration key '" + key + "' names a section, not a value");
  const bool ok = (slot.is_number() && value.is_number()) || (slot.is_boolean() && value.is_boolean()) ||
                  (slot.is_string() && value.is_string()) || slot.is_null() || value.is_null();
  if (!ok) throw ConfigError("configuration key '" + key + "' expects " + std::string(slot.type_name()));
  if (slot.is_number_unsigned() && value.is_number_integer() && value.get<long long>() < 0) {
    throw ConfigError("configuration key '" + key + "' must be non-negative");
  }
  slot = value;
}

// Flat {"a.b": v} object from a config file; nested objects are also accepted and flattened.
inline std::vector<std::pair<std::string, json>> flat_entries(const json& j, const std::string& prefix = "") {
  if (!j.is_object()) throw ConfigError("configuration file must hold a JSON object");
  std::vector<std::pair<std::string, json>> out;
  for (const auto& [k, v] : j.items()) {
    const auto key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      for (auto& e : flat_entries(v, key)) out.push_back(std::move(e));
    } else {
      out.emplace_back(key, v);
    }
  }
  return out;
}

// Dotted view of the settings, for provenance files.
inline json flatten_dotted(const json& settings) {
  json out = json::object();
  const json flat = settings.flatten();
  for (const auto& [ptr, v] : flat.items()) {
    std::string key = ptr.substr(1);
    for (auto& c : key)
      if (c == '/') c = '.';
    out[key] = v;
  }
  return out;
}

struct Override {
  std::string key;
  json value;
  std::string source;  // "file" or "flag"
};

struct ResolvedSettings {
  json settings;
  std::vector<Override> applied;
};

// defaults <- config file <- flags, last writer wins. The global seed and worker count are
// propagated into every component that has its own unless that key was set explicitly.
inline ResolvedSettings resolve_settings(const std::optional<json>& file, const std::vector<Override>& flags) {
  ResolvedSettings r{default_settings(), {}};
  std::vector<Override> all;
  if (file) {
    for (auto& [k, v] : flat_entries(*file)) all.push_back({k, v, "file"});
  }
  for (const auto& f : flags) all.push_back(f);
  for (const auto& o : all) {
    set_key(r.settings, o.key, o.value);
    r.applied.push_back(o);
  }
  const auto explicitly_set = [&](const std::string& key) {
    for (const auto& o : all)
      if (o.key == key) return true;
    return false;
  };
  const json seed = r.settings["seed"];
  for (const char* key : {"gen.seed", "pretrain.classifier.seed", "pretrain.updaters.seed", "train.seed"}) {
    if (!explicitly_set(key)) r.settings[dotted_pointer(key)] = seed;
  }
  if (!explicitly_set("train.workers")) r.settings["train"]["workers"] = r.settings["workers"];

  // Type-check every section now so errors surface before any work starts.
  try {
    r.settings["gen"].get<slidegen::GenConfig>().validate();
    r.settings["arch"].get<nets::NetArch>().validate();
    r.settings["pretrain"]["classifier"].get<nets::ClassifierPretrainConfig>();
    r.settings["pretrain"]["updaters"].get<nets::UpdaterPretrainConfig>();
    r.settings["train"].get<rltrain::TrainConfig>().validate();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  const double frac = r.settings["data"]["train_fraction"].get<double>();
  if (!(frac > 0.0 && frac < 1.0)) throw ConfigError("data.train_fraction must lie in (0,1)");
  if (r.settings["workers"].get<long long>() < 1) throw ConfigError("workers must be at least 1");
  return r;
}

inline json read_config_file(const std::filesystem::path& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path.string() + "': " + e.what());
  }
}

// Budget presets 0.1/0.2/0.5 are ordinary values; anything in (0,1] is accepted.
inline double parse_budget(double b) {
  if (!(b > 0.0 && b <= 1.0)) throw ConfigError("budget must lie in (0,1], got " + std::to_string(b));
  return b;
}

}  // namespace rlogist::cli
