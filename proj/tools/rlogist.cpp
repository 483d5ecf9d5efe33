// rlogist: generate data, pretrain, train, evaluate and inspect budgeted region-selection agents.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rlogist/rlogist.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rlogist;

namespace {

cli::LogLevel g_level = cli::LogLevel::info;

template <class... Args>
void log(cli::LogLevel level, const char* fmt, Args... args) {
  if (level > g_level) return;
  static const char* names[] = {"error", "info", "debug"};
  std::fprintf(stderr, "[%s] ", names[static_cast<int>(level)]);
  if constexpr (sizeof...(Args) == 0) {
    std::fputs(fmt, stderr);
  } else {
    std::fprintf(stderr, fmt, args...);
  }
  std::fputc('\n', stderr);
}

struct Options {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string config;
  std::optional<std::size_t> workers;
  std::vector<std::string> sets;
  std::string manifest;
  std::string heldout;
  std::string checkpoint;
  std::optional<std::string> algo;
  std::optional<double> budget;
  std::optional<std::string> variant;
  std::optional<std::size_t> count;
  std::optional<std::size_t> episodes;
  std::string resume;
  std::string strategy = "learned";
  std::vector<std::string> strategies;
  std::string random_checkpoint;
  std::vector<std::string> variants;
  std::string slide;
  bool sampled = false;
};

json provenance(const std::string& command, const cli::ResolvedSettings& r) {
  json applied = json::array();
  for (const auto& o : r.applied) applied.push_back({{"key", o.key}, {"value", o.value}, {"source", o.source}});
  return {{"tool", "rlogist"},
          {"version", RLOGIST_VERSION},
          {"command", command},
          {"seed", r.settings["seed"]},
          {"overrides", applied},
          {"settings", cli::flatten_dotted(r.settings)}};
}

void write_json(const fs::path& path, const json& j) { io::write_file(path, j.dump(2) + "\n"); }

cli::ResolvedSettings resolve(const Options& o) {
  std::vector<cli::Override> flags;
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    flags.push_back({s.substr(0, eq), cli::parse_value(s.substr(eq + 1)), "flag"});
  }
  if (o.seed) flags.push_back({"seed", json(*o.seed), "flag"});
  if (o.workers) flags.push_back({"workers", json(*o.workers), "flag"});
  if (o.count) flags.push_back({"data.count", json(*o.count), "flag"});
  if (o.algo) flags.push_back({"train.algorithm", json(*o.algo), "flag"});
  if (o.budget) flags.push_back({"train.env.budget_fraction", json(cli::parse_budget(*o.budget)), "flag"});
  if (o.variant) flags.push_back({"train.variant", json(*o.variant), "flag"});
  if (o.episodes) flags.push_back({"train.ppo.total_episodes", json(*o.episodes), "flag"});
  std::optional<json> file;
  if (!o.config.empty()) file = cli::read_config_file(o.config);
  auto r = cli::resolve_settings(file, flags);
  for (const auto& a : r.applied) log(cli::LogLevel::debug, "override %s = %s (%s)", a.key.c_str(), a.value.dump().c_str(), a.source.c_str());
  return r;
}

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
  fs::create_directories(o.out);
  return o.out;
}

// Held-out manifest: explicit flag, else test.json beside the training manifest.
fs::path heldout_path(const Options& o) {
  if (!o.heldout.empty()) return o.heldout;
  const auto sibling = fs::path(o.manifest).parent_path() / "test.json";
  if (!fs::exists(sibling)) throw ConfigError("--heldout is required (no test.json next to the manifest)");
  return sibling;
}

std::vector<const slidegen::SlideBundle*> pointers(const std::vector<slidegen::SlideBundle>& v) {
  std::vector<const slidegen::SlideBundle*> out;
  for (const auto& b : v) out.push_back(&b);
  return out;
}

std::vector<slidegen::SlideBundle> load_slides(const fs::path& manifest) {
  const auto m = slidegen::load_manifest(manifest);
  auto slides = slidegen::load_bundles(m);
  log(cli::LogLevel::info, "loaded %zu slides from %s", slides.size(), manifest.string().c_str());
  return slides;
}

int cmd_generate(const Options& o) {
  const auto r = resolve(o);
  const auto out = require_out(o);
  const auto gen = r.settings["gen"].get<slidegen::GenConfig>();
  const auto count = r.settings["data"]["count"].get<std::size_t>();
  const auto frac = r.settings["data"]["train_fraction"].get<double>();
  const auto [train, test] = slidegen::generate_dataset(gen, count, frac, out);
  log(cli::LogLevel::info, "wrote %zu train / %zu test slides to %s", train.slides.size(), test.slides.size(), out.string().c_str());
  const auto cal = slidegen::calibrate(gen);
  write_json(out / "calibration.json", json(cal));
  write_json(out / "run_config.json", provenance("generate", r));
  std::cout << json(cal).dump(2) << "\n";
  return 0;
}

int cmd_pretrain(const Options& o) {
  if (o.manifest.empty()) throw ConfigError("--manifest is required");
  const auto r = resolve(o);
  const auto out = require_out(o);
  const auto train = load_slides(o.manifest);
  const auto test = load_slides(heldout_path(o));
  const auto seed = r.settings["seed"].get<std::uint64_t>();
  auto nets = nets::make_network_bundle<float>(r.settings["arch"].get<nets::NetArch>(), nk::derive_seed(seed, {0x9e7}));
  const auto cr = nets::pretrain_classifier(nets, train, test, r.settings["pretrain"]["classifier"].get<nets::ClassifierPretrainConfig>());
  log(cli::LogLevel::info, "classifier held-out auc %.4f", cr.heldout_auc);
  const auto ur = nets::pretrain_updaters(nets, train, test, r.settings["pretrain"]["updaters"].get<nets::UpdaterPretrainConfig>());
  log(cli::LogLevel::info, "f_global pair mse %.4f (identity %.4f)", ur.global_pair_mse, ur.identity_pair_mse);
  nets::save_network_bundle(nets, out / "pretrained.rlgn");
  const json report = {{"classifier", cr}, {"updaters", ur}, {"pair_improvement", ur.pair_improvement()}};
  write_json(out / "pretrain_report.json", report);
  write_json(out / "run_config.json", provenance("pretrain", r));
  std::cout << json{{"classifier_heldout_auc", cr.heldout_auc}, {"pair_improvement", ur.pair_improvement()}}.dump(2) << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  if (o.manifest.empty()) throw ConfigError("--manifest is required");
  const auto r = resolve(o);
  const auto out = require_out(o);
  const auto train_slides = load_slides(o.manifest);
  const auto test_slides = load_slides(heldout_path(o));

  rltrain::TrainState state;
  rltrain::TrainConfig config;
  if (!o.resume.empty()) {
    std::tie(state, config) = rltrain::load_train_state(o.resume);
    log(cli::LogLevel::info, "resuming at iteration %zu (%zu episodes); stored configuration takes precedence",
        state.iteration, state.episodes);
  } else {
    if (o.checkpoint.empty()) throw ConfigError("--checkpoint (pretrained networks) is required");
    config = r.settings["train"].get<rltrain::TrainConfig>();
    state = rltrain::make_train_state(nets::load_network_bundle(o.checkpoint), config);
  }

  rltrain::TrainHooks hooks;
  hooks.dump_path = out / "abort_state.rlgn";
  const auto t0 = std::chrono::steady_clock::now();
  hooks.on_iteration = [&](const rltrain::TrainState& s) {
    const auto& rec = s.report.iterations.back();
    if (rec.heldout_auc) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log(cli::LogLevel::info, "episodes %zu  return %.3f  entropy %.3f  held-out auc %.4f  (%.0fs)", rec.episodes,
          rec.mean_return, rec.entropy, *rec.heldout_auc, secs);
    } else {
      log(cli::LogLevel::debug, "iteration %zu  return %.3f  clip %.3f", rec.iteration, rec.mean_return, rec.clip_fraction);
    }
  };
  const auto report = rltrain::train(state, config, pointers(train_slides), pointers(test_slides), hooks);
  nets::save_network_bundle(state.nets, out / "agent.rlgn");
  rltrain::save_train_state(state, config, out / "train_state.rlgn");
  io::write_file(out / "train_report.jsonl", rltrain::report_jsonl(report));
  auto prov = provenance("train", r);
  prov["train_config"] = config;
  write_json(out / "run_config.json", prov);
  std::cout << json{{"cold_start_auc", report.cold_start_auc ? json(*report.cold_start_auc) : json(nullptr)},
                    {"final_auc", report.final_auc() ? json(*report.final_auc()) : json(nullptr)},
                    {"episodes", state.episodes}}
                   .dump(2)
            << "\n";
  return 0;
}

eval::StrategySpec strategy_spec(const std::string& name, const cli::ResolvedSettings& r, bool sampled) {
  eval::StrategySpec s;
  s.kind = eval::strategy_from_string(name);
  s.seed = r.settings["seed"].get<std::uint64_t>();
  s.greedy = r.settings["eval"]["greedy"].get<bool>() && !sampled;
  return s;
}

int cmd_eval(const Options& o) {
  if (o.manifest.empty() || o.checkpoint.empty()) throw ConfigError("--manifest and --checkpoint are required");
  const auto r = resolve(o);
  const auto out = require_out(o);
  const auto slides = load_slides(o.manifest);
  const auto nets = nets::load_network_bundle(o.checkpoint);
  const auto config = r.settings["train"].get<rltrain::TrainConfig>();
  const auto spec = strategy_spec(o.strategy, r, o.sampled);
  const auto m = eval::evaluate_strategy(spec, pointers(slides), nets, config.env, config.variant, config.workers);
  write_json(out / "metrics.json", m);
  write_json(out / "run_config.json", provenance("eval", r));
  std::cout << json(m).dump(2) << "\n";
  if (!m.auc) {
    log(cli::LogLevel::error, "auc is undefined: the manifest holds a single class (accuracy was still reported)");
    return 2;
  }
  return 0;
}

int cmd_compare(const Options& o) {
  if (o.manifest.empty() || o.checkpoint.empty()) throw ConfigError("--manifest and --checkpoint are required");
  const auto r = resolve(o);
  const auto out = require_out(o);
  const auto slides = load_slides(o.manifest);
  const auto nets = nets::load_network_bundle(o.checkpoint);
  std::optional<nets::NetworkBundle<float>> random_nets;
  if (!o.random_checkpoint.empty()) random_nets = nets::load_network_bundle(o.random_checkpoint);
  const auto config = r.settings["train"].get<rltrain::TrainConfig>();
  auto names = o.strategies;
  if (names.empty()) names = {"full_observation", "learned", "random"};
  std::vector<eval::StrategyEntry> entries;
  for (const auto& n : names) {
    auto spec = strategy_spec(n, r, o.sampled);
    const bool own = spec.kind == eval::StrategyKind::random && random_nets;
    entries.push_back({spec, own ? &*random_nets : &nets});
  }
  const auto table = eval::compare_strategies(pointers(slides), entries, config.env, config.variant, config.workers);
  write_json(out / "comparison.json", table);
  write_json(out / "run_config.json", provenance("compare", r));
  std::cout << eval::format_table(table);
  return 0;
}

int cmd_ablate(const Options& o) {
  if (o.manifest.empty() || o.checkpoint.empty()) throw ConfigError("--manifest and --checkpoint are required");
  const auto r = resolve(o);
  const auto out = require_out(o);
  const auto train_slides = load_slides(o.manifest);
  const auto test_slides = load_slides(heldout_path(o));
  const auto pretrained = nets::load_network_bundle(o.checkpoint);
  const auto config = r.settings["train"].get<rltrain::TrainConfig>();
  std::vector<nets::UpdaterVariant> variants;
  for (const auto& v : o.variants) variants.push_back(nets::variant_from_string(v));
  if (variants.empty()) {
    variants = {nets::UpdaterVariant::fixed, nets::UpdaterVariant::local_only, nets::UpdaterVariant::local_and_global};
  }
  const auto result = eval::ablate_updaters(pointers(train_slides), pointers(test_slides), pretrained, config, variants);
  json reports = json::object();
  for (const auto& [name, rep] : result.reports) reports[name] = rep;
  write_json(out / "ablation.json", {{"table", result.table}, {"reports", reports}});
  write_json(out / "run_config.json", provenance("ablate", r));
  std::cout << eval::format_table(result.table);
  return 0;
}

int cmd_trace(const Options& o) {
  if (o.manifest.empty() || o.checkpoint.empty()) throw ConfigError("--manifest and --checkpoint are required");
  const auto r = resolve(o);
  const auto out = require_out(o);
  const auto slides = load_slides(o.manifest);
  const auto nets = nets::load_network_bundle(o.checkpoint);
  const auto config = r.settings["train"].get<rltrain::TrainConfig>();
  const auto spec = strategy_spec(o.strategy, r, o.sampled);
  std::size_t written = 0;
  for (const auto& b : slides) {
    if (!o.slide.empty() && b.slide_id != o.slide) continue;
    const auto trace = eval::run_episode_trace(spec, b, nets, config.env, config.variant);
    eval::validate_trace(trace);
    eval::save_trace(trace, out / ("trace_" + b.slide_id + ".json"));
    eval::save_visit_pgm(trace, out / ("trace_" + b.slide_id + ".pgm"));
    ++written;
  }
  if (written == 0) throw NoDataError("no slide named '" + o.slide + "' in the manifest");
  write_json(out / "run_config.json", provenance("trace", r));
  log(cli::LogLevel::info, "wrote %zu traces to %s", written, out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  g_level = cli::log_level_from_env();
  CLI::App app{"Budgeted region selection for slide-level classification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", RLOGIST_VERSION);
  Options o;

  const auto common = [&](CLI::App* c) {
    c->add_option("--out", o.out, "Output directory");
    c->add_option("--seed", o.seed, "Global seed");
    c->add_option("--config", o.config, "JSON config file with dotted keys")->check(CLI::ExistingFile);
    c->add_option("--workers", o.workers, "Worker threads (1 is bit-deterministic)")->check(CLI::PositiveNumber);
    c->add_option("--set", o.sets, "Override a dotted configuration key: key=value");
  };
  const auto env_flags = [&](CLI::App* c) {
    c->add_option("--budget", o.budget, "Observation budget as a fraction of regions, in (0,1]");
    c->add_option("--variant", o.variant, "Feature updaters")->check(CLI::IsMember({"fixed", "local_only", "local_and_global"}));
  };

  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset and calibration report");
  common(gen);
  gen->add_option("--count", o.count, "Number of slides");

  auto* pre = app.add_subcommand("pretrain", "Pretrain the classifier and feature updaters");
  common(pre);
  pre->add_option("--manifest", o.manifest, "Training manifest")->check(CLI::ExistingFile);
  pre->add_option("--heldout", o.heldout, "Held-out manifest")->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "Train the observation policy");
  common(train);
  env_flags(train);
  train->add_option("--manifest", o.manifest, "Training manifest")->check(CLI::ExistingFile);
  train->add_option("--heldout", o.heldout, "Held-out manifest")->check(CLI::ExistingFile);
  train->add_option("--checkpoint", o.checkpoint, "Pretrained networks")->check(CLI::ExistingFile);
  train->add_option("--algo", o.algo, "Policy optimiser")->check(CLI::IsMember({"ppo", "reinforce"}));
  train->add_option("--episodes", o.episodes, "Total training episodes");
  train->add_option("--resume", o.resume, "Training state to resume from")->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "Evaluate one strategy");
  common(ev);
  env_flags(ev);
  ev->add_option("--manifest", o.manifest, "Evaluation manifest")->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", o.checkpoint, "Networks")->check(CLI::ExistingFile);
  ev->add_option("--strategy", o.strategy, "learned, random or full_observation")
      ->check(CLI::IsMember({"learned", "random", "full_observation"}));
  ev->add_flag("--sampled", o.sampled, "Sample actions from the learned policy instead of taking the argmax");

  auto* cmp = app.add_subcommand("compare", "Compare strategies on one manifest");
  common(cmp);
  env_flags(cmp);
  cmp->add_option("--manifest", o.manifest, "Evaluation manifest")->check(CLI::ExistingFile);
  cmp->add_option("--checkpoint", o.checkpoint, "Networks for the learned strategy")->check(CLI::ExistingFile);
  cmp->add_option("--random-checkpoint", o.random_checkpoint, "Networks for the random strategy")->check(CLI::ExistingFile);
  cmp->add_option("--strategies", o.strategies, "Strategies to compare")->delimiter(',');
  cmp->add_flag("--sampled", o.sampled, "Sample actions from the learned policy");

  auto* abl = app.add_subcommand("ablate", "Train and compare updater variants");
  common(abl);
  env_flags(abl);
  abl->add_option("--manifest", o.manifest, "Training manifest")->check(CLI::ExistingFile);
  abl->add_option("--heldout", o.heldout, "Held-out manifest")->check(CLI::ExistingFile);
  abl->add_option("--checkpoint", o.checkpoint, "Pretrained networks")->check(CLI::ExistingFile);
  abl->add_option("--algo", o.algo, "Policy optimiser")->check(CLI::IsMember({"ppo", "reinforce"}));
  abl->add_option("--episodes", o.episodes, "Training episodes per variant");
  abl->add_option("--variants", o.variants, "Variants to train")->delimiter(',');

  auto* tr = app.add_subcommand("trace", "Export observation paths");
  common(tr);
  env_flags(tr);
  tr->add_option("--manifest", o.manifest, "Manifest")->check(CLI::ExistingFile);
  tr->add_option("--checkpoint", o.checkpoint, "Networks")->check(CLI::ExistingFile);
  tr->add_option("--slide", o.slide, "Only this slide id");
  tr->add_option("--strategy", o.strategy, "learned, random or full_observation")
      ->check(CLI::IsMember({"learned", "random", "full_observation"}));
  tr->add_flag("--sampled", o.sampled, "Sample actions from the learned policy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_generate(o);
    if (pre->parsed()) return cmd_pretrain(o);
    if (train->parsed()) return cmd_train(o);
    if (ev->parsed()) return cmd_eval(o);
    if (cmp->parsed()) return cmd_compare(o);
    if (abl->parsed()) return cmd_ablate(o);
    if (tr->parsed()) return cmd_trace(o);
  } catch (const ConfigError& e) {
    log(cli::LogLevel::error, "%s", e.what());
    std::cerr << app.help();
    return 1;
  } catch (const std::exception& e) {
    log(cli::LogLevel::error, "%s", e.what());
    return 2;
  }
  return 1;
}
