#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rlogist/numkernel/random.hpp"
#include "rlogist/slidegen/bundle.hpp"
#include "rlogist/slidegen/config.hpp"
#include "rlogist/slidegen/manifest.hpp"

namespace rlogist::slidegen {

inline std::string slide_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "slide_%05zu", index);
  return buf;
}

// Draws one slide:
//   b ~ N(0, sigma_slide^2 I)                      slide latent
//   v_ij = b + z_ij * signal * e_0 + N(0, sigma_sub^2 I)
//   v_i  = mean_j v_ij + N(0, sigma_scan^2 I)
// Positive slides plant at least one positive region; inside it a fixed fraction of
// sub-patches carry z_ij = 1.
inline SlideBundle generate_slide(const GenConfig& config, std::uint64_t slide_seed,
                                  std::optional<std::uint8_t> forced_label = std::nullopt) {
  config.validate();
  nk::Rng rng(slide_seed);
  SlideBundle b;
  b.label = forced_label ? *forced_label : static_cast<std::uint8_t>(rng.bernoulli(config.class_balance));
  b.n_regions = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(config.min_regions), static_cast<std::int64_t>(config.max_regions)));
  b.sub_patches = config.sub_patches;
  b.dim = config.dim;

  const std::size_t n = b.n_regions, k = b.sub_patches, d = b.dim;
  std::vector<double> latent(d);
  for (auto& v : latent) v = config.sigma_slide * rng.normal();

  std::vector<std::uint8_t> truth(n, 0);
  if (b.label == 1) {
    const double frac = rng.uniform(config.min_positive_region_fraction, config.max_positive_region_fraction);
    const auto n_pos = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(frac * static_cast<double>(n))));
    for (auto i : rng.sample_without_replacement(n, n_pos)) truth[i] = 1;
  }
  const auto n_on = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(config.positive_subpatch_fraction * static_cast<double>(k))));

  b.scan_features = nk::Tensor<float>(n, d);
  b.sub_features.assign(n * k * d, 0.0f);
  std::vector<std::uint8_t> on(k);
  std::vector<double> mean(d);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(on.begin(), on.end(), 0);
    if (truth[i]) {
      for (auto j : rng.sample_without_replacement(k, n_on)) on[j] = 1;
    }
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      float* v = b.sub_features.data() + (i * k + j) * d;
      for (std::size_t c = 0; c < d; ++c) {
        double x = latent[c] + config.sigma_sub * rng.normal();
        if (on[j] && c == 0) x += config.class_signal;
        v[c] = static_cast<float>(x);
        mean[c] += v[c];
      }
    }
    for (std::size_t c = 0; c < d; ++c) {
      b.scan_features(i, c) =
          static_cast<float>(mean[c] / static_cast<double>(k) + config.sigma_scan * rng.normal());
    }
  }
  b.region_truth = std::move(truth);
  return b;
}

struct SplitBundles {
  std::vector<SlideBundle> train;
  std::vector<SlideBundle> test;
};

struct SplitPlan {
  std::vector<std::uint8_t> labels;      // by slide index
  std::vector<std::size_t> train_index;  // ascending
  std::vector<std::size_t> test_index;   // ascending
};

// Exact class counts, shuffled label order, per-class split.
inline SplitPlan plan_split(const GenConfig& config, std::size_t count, double split_ratio) {
  if (count < 2) throw GenerationError("dataset needs at least 2 slides");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw GenerationError("split ratio must lie in (0,1)");
  const auto n_pos = static_cast<std::size_t>(std::lround(config.class_balance * static_cast<double>(count)));
  SplitPlan plan;
  plan.labels.assign(count, 0);
  for (std::size_t i = 0; i < n_pos; ++i) plan.labels[i] = 1;
  nk::Rng rng(nk::derive_seed(config.seed, {0x1abe1ULL}));
  rng.shuffle(plan.labels);

  for (std::uint8_t cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < count; ++i)
      if (plan.labels[i] == cls) members.push_back(i);
    const auto n_train = static_cast<std::size_t>(std::lround(split_ratio * static_cast<double>(members.size())));
    if (members.size() < 2 || n_train == 0 || n_train == members.size()) {
      throw GenerationError("cannot stratify " + std::to_string(count) + " slides at split " +
                            std::to_string(split_ratio) + ": class " + std::to_string(cls) + " has " +
                            std::to_string(members.size()) + " members");
    }
    for (std::size_t m = 0; m < members.size(); ++m)
      (m < n_train ? plan.train_index : plan.test_index).push_back(members[m]);
  }
  std::sort(plan.train_index.begin(), plan.train_index.end());
  std::sort(plan.test_index.begin(), plan.test_index.end());
  return plan;
}

inline SlideBundle generate_indexed_slide(const GenConfig& config, std::size_t index, std::uint8_t label) {
  auto b = generate_slide(config, nk::derive_seed(config.seed, {index}), label);
  b.slide_id = slide_name(index);
  return b;
}

// In-memory stratified dataset.
inline SplitBundles generate_split(const GenConfig& config, std::size_t count, double split_ratio) {
  config.validate();
  const auto plan = plan_split(config, count, split_ratio);
  SplitBundles out;
  for (auto i : plan.train_index) out.train.push_back(generate_indexed_slide(config, i, plan.labels[i]));
  for (auto i : plan.test_index) out.test.push_back(generate_indexed_slide(config, i, plan.labels[i]));
  return out;
}

// Writes slides/<id>.rlgb, train.json, test.json and gen_config.json under out_dir.
inline std::pair<DatasetManifest, DatasetManifest> generate_dataset(const GenConfig& config, std::size_t count,
                                                                    double split_ratio,
                                                                    const std::filesystem::path& out_dir) {
  config.validate();
  const auto plan = plan_split(config, count, split_ratio);
  DatasetManifest train, test;
  train.config_digest = test.config_digest = config.digest();
  train.base_dir = test.base_dir = out_dir;
  auto emit = [&](std::size_t i, DatasetManifest& m) {
    const auto b = generate_indexed_slide(config, i, plan.labels[i]);
    const std::string rel = "slides/" + b.slide_id + ".rlgb";
    write_bundle(b, out_dir / rel);
    m.slides.push_back({b.slide_id, rel, b.label, b.n_regions});
  };
  for (auto i : plan.train_index) emit(i, train);
  for (auto i : plan.test_index) emit(i, test);
  save_manifest(train, out_dir / "train.json");
  save_manifest(test, out_dir / "test.json");
  io::write_file(out_dir / "gen_config.json", nlohmann::json(config).dump(2) + "\n");
  return {std::move(train), std::move(test)};
}

}  // namespace rlogist::slidegen
