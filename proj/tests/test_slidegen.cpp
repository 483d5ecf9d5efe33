#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "rlogist/slidegen.hpp"

namespace fs = std::filesystem;
using namespace rlogist;
using namespace rlogist::slidegen;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("rlogist_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

FormatErrorKind decode_error_kind(const std::string& bytes) {
  try {
    decode_bundle(bytes, "x");
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode did not throw";
  return FormatErrorKind::io;
}

}  // namespace

TEST(GenerateSlide, NegativeSlideHasNoSignal) {
  GenConfig c;
  c.sigma_sub = 0.0;
  c.sigma_scan = 0.0;
  c.sigma_slide = 0.0;
  const auto b = generate_slide(c, 11, 0);
  ASSERT_TRUE(b.region_truth);
  for (auto z : *b.region_truth) EXPECT_EQ(z, 0);
  for (float v : b.sub_features) EXPECT_EQ(v, 0.0f);
}

TEST(GenerateSlide, PositiveSlideCarriesSignalOnlyInTruthRegions) {
  GenConfig c;
  c.sigma_sub = 0.0;
  c.sigma_scan = 0.0;
  c.sigma_slide = 0.0;
  const auto b = generate_slide(c, 12, 1);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < b.n_regions; ++i) {
    const auto s = b.region_sub(i);
    std::size_t on = 0;
    for (std::size_t j = 0; j < b.sub_patches; ++j) {
      on += s[j * b.dim] == static_cast<float>(c.class_signal) ? 1 : 0;
      for (std::size_t k = 1; k < b.dim; ++k) EXPECT_EQ(s[j * b.dim + k], 0.0f);
    }
    if ((*b.region_truth)[i]) {
      ++positives;
      EXPECT_EQ(on, 8u);
    } else {
      EXPECT_EQ(on, 0u);
    }
  }
  EXPECT_GE(positives, 1u);
}

TEST(GenerateSlide, Deterministic) {
  GenConfig c;
  EXPECT_EQ(generate_slide(c, 99), generate_slide(c, 99));
  EXPECT_FALSE(generate_slide(c, 99) == generate_slide(c, 100));
}

TEST(GenerateSlide, TruthMatchesLabelOverManySlides) {
  GenConfig c;
  for (std::uint64_t s = 0; s < 300; ++s) {
    const auto b = generate_slide(c, s);
    std::size_t pos = 0;
    for (auto z : *b.region_truth) pos += z;
    if (b.label == 1) {
      EXPECT_GE(pos, 1u);
      EXPECT_LE(static_cast<double>(pos), std::max(1.0, std::round(0.20 * static_cast<double>(b.n_regions))));
    } else {
      EXPECT_EQ(pos, 0u);
    }
    EXPECT_GE(b.n_regions, c.min_regions);
    EXPECT_LE(b.n_regions, c.max_regions);
  }
}

// Sub-patch features of negative slides with no slide latent are pure N(0, sigma_sub^2).
TEST(GenerateSlide, NegativeSubFeatureMeanIsZero) {
  GenConfig c;
  c.sigma_slide = 0.0;
  std::vector<double> sum(c.dim, 0.0);
  std::size_t count = 0;
  for (std::uint64_t s = 0; count < 20000; ++s) {
    const auto b = generate_slide(c, 1000 + s, 0);
    for (std::size_t r = 0; r < b.n_regions * b.sub_patches; ++r) {
      for (std::size_t k = 0; k < b.dim; ++k) sum[k] += b.sub_features[r * b.dim + k];
      ++count;
    }
  }
  const double se = c.sigma_sub / std::sqrt(static_cast<double>(count));
  for (std::size_t k = 0; k < c.dim; ++k) EXPECT_LT(std::abs(sum[k] / static_cast<double>(count)), 3.0 * se) << k;
}

TEST(GenerateSlide, ScanNoiseVarianceMatchesSigmaScan) {
  for (double sigma : {0.55, 1.5}) {
    GenConfig c;
    c.sigma_scan = sigma;
    std::vector<double> sum(c.dim, 0.0), sq(c.dim, 0.0);
    std::size_t n = 0;
    for (std::uint64_t s = 0; n < 2000; ++s) {
      const auto b = generate_slide(c, 5000 + s);
      for (std::size_t i = 0; i < b.n_regions; ++i) {
        const auto m = b.region_mean(i);
        for (std::size_t k = 0; k < b.dim; ++k) {
          const double r = b.scan_features(i, k) - m[k];
          sum[k] += r;
          sq[k] += r * r;
        }
        ++n;
      }
    }
    for (std::size_t k = 0; k < c.dim; ++k) {
      const double mean = sum[k] / static_cast<double>(n);
      const double var = sq[k] / static_cast<double>(n) - mean * mean;
      EXPECT_NEAR(var / (sigma * sigma), 1.0, 0.2) << "dim " << k;
    }
  }
}

TEST(GenConfig, RejectsInvalid) {
  GenConfig c;
  c.min_regions = 10;
  c.max_regions = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  GenConfig d;
  d.positive_subpatch_fraction = 0.0;
  EXPECT_THROW(d.validate(), ConfigError);
  GenConfig e;
  e.sigma_scan = -1.0;
  EXPECT_THROW(e.validate(), ConfigError);
}

TEST(GenConfig, JsonRoundTripAndDigest) {
  GenConfig c;
  c.seed = 42;
  c.sigma_scan = 0.7;
  const auto back = nlohmann::json(c).get<GenConfig>();
  EXPECT_EQ(back.digest(), c.digest());
  GenConfig other;
  EXPECT_NE(other.digest(), c.digest());
  // Missing keys fall back to defaults.
  const auto partial = nlohmann::json::parse(R"({"dim": 8})").get<GenConfig>();
  EXPECT_EQ(partial.dim, 8u);
  EXPECT_EQ(partial.sub_patches, 16u);
}

TEST(Split, ExactCountsAndStratification) {
  GenConfig c;
  c.min_regions = 4;
  c.max_regions = 6;
  const auto plan = plan_split(c, 100, 0.8);
  std::size_t pos = 0;
  for (auto y : plan.labels) pos += y;
  EXPECT_EQ(pos, 50u);
  EXPECT_EQ(plan.train_index.size(), 80u);
  EXPECT_EQ(plan.test_index.size(), 20u);
  std::size_t train_pos = 0;
  for (auto i : plan.train_index) train_pos += plan.labels[i];
  EXPECT_EQ(train_pos, 40u);
  std::set<std::size_t> all(plan.train_index.begin(), plan.train_index.end());
  for (auto i : plan.test_index) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 100u);
}

TEST(Split, TooSmallToStratify) {
  GenConfig c;
  EXPECT_THROW(plan_split(c, 2, 0.5), GenerationError);
  EXPECT_THROW(plan_split(c, 1, 0.5), GenerationError);
  EXPECT_THROW(plan_split(c, 100, 1.0), GenerationError);
  EXPECT_NO_THROW(plan_split(c, 4, 0.5));
}

TEST(Bundle, RoundTripHundredRandom) {
  nk::Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    GenConfig c;
    c.dim = 1 + rng.uniform_index(8);
    c.sub_patches = 1 + rng.uniform_index(6);
    c.min_regions = 1 + rng.uniform_index(5);
    c.max_regions = c.min_regions + rng.uniform_index(10);
    auto b = generate_slide(c, rng.next_u64());
    b.slide_id = "s" + std::to_string(trial);
    if (trial % 3 == 0) b.region_truth.reset();
    const auto bytes = encode_bundle(b);
    EXPECT_EQ(bytes.size(), bundle_byte_size(b.n_regions, b.sub_patches, b.dim, b.region_truth.has_value()));
    const auto back = decode_bundle(bytes, b.slide_id);
    EXPECT_EQ(back, b);
    EXPECT_EQ(std::memcmp(back.sub_features.data(), b.sub_features.data(), 4 * b.sub_features.size()), 0);
  }
}

TEST(Bundle, HeaderLayoutIsLittleEndian) {
  GenConfig c;
  c.min_regions = c.max_regions = 3;
  c.dim = 2;
  c.sub_patches = 4;
  const auto bytes = encode_bundle(generate_slide(c, 1, 1));
  ASSERT_GE(bytes.size(), kBundleHeaderBytes);
  EXPECT_EQ(bytes.substr(0, 4), "RLGB");
  const unsigned char expected[] = {1, 0, 0, 0, 3, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 1, 1};
  for (std::size_t i = 0; i < sizeof expected; ++i) EXPECT_EQ(static_cast<unsigned char>(bytes[4 + i]), expected[i]) << i;
  EXPECT_EQ(bytes.size(), 22u + 4 * 3 * 2 + 4 * 3 * 4 * 2 + 3);
}

TEST(Bundle, FormatErrorsAreDistinct) {
  GenConfig c;
  c.min_regions = c.max_regions = 5;
  const auto good = encode_bundle(generate_slide(c, 2));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(decode_error_kind(bad_magic), FormatErrorKind::bad_magic);

  auto bad_version = good;
  bad_version[4] = 2;
  EXPECT_EQ(decode_error_kind(bad_version), FormatErrorKind::unsupported_version);

  EXPECT_EQ(decode_error_kind(good.substr(0, good.size() - 1)), FormatErrorKind::truncated);
  EXPECT_EQ(decode_error_kind(good.substr(0, 10)), FormatErrorKind::truncated);
  EXPECT_EQ(decode_error_kind(good + "zz"), FormatErrorKind::dimension_mismatch);

  auto zero_dim = good;
  zero_dim[16] = zero_dim[17] = zero_dim[18] = zero_dim[19] = 0;
  EXPECT_EQ(decode_error_kind(zero_dim), FormatErrorKind::dimension_mismatch);

  auto nan = good;
  const float q = std::nanf("");
  std::memcpy(nan.data() + kBundleHeaderBytes, &q, 4);
  EXPECT_EQ(decode_error_kind(nan), FormatErrorKind::invalid_value);
}

TEST(Bundle, TruncationMessageNamesByteCounts) {
  GenConfig c;
  c.min_regions = c.max_regions = 2;
  c.dim = 1;
  c.sub_patches = 1;
  const auto good = encode_bundle(generate_slide(c, 2, 0));
  ASSERT_EQ(good.size(), 22u + 8 + 8 + 2);
  try {
    decode_bundle(good.substr(0, 30), "cut");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("expected 40 bytes but found 30"), std::string::npos) << e.what();
  }
}

TEST(Bundle, FileRoundTripUsesStemAsId) {
  const auto dir = scratch_dir("bundle_file");
  GenConfig c;
  auto b = generate_slide(c, 4);
  b.slide_id = "abc";
  write_bundle(b, dir / "nested" / "abc.rlgb");
  EXPECT_EQ(read_bundle(dir / "nested" / "abc.rlgb"), b);
  EXPECT_THROW(read_bundle(dir / "missing.rlgb"), FormatError);
}

TEST(Dataset, WritesManifestsAndLoads) {
  const auto dir = scratch_dir("dataset");
  GenConfig c;
  c.min_regions = 4;
  c.max_regions = 8;
  const auto [train, test] = generate_dataset(c, 20, 0.8, dir);
  EXPECT_EQ(train.slides.size(), 16u);
  EXPECT_EQ(test.slides.size(), 4u);
  EXPECT_EQ(train.positives(), 8u);
  EXPECT_EQ(test.positives(), 2u);

  const auto loaded = load_manifest(dir / "train.json");
  EXPECT_EQ(loaded.slides, train.slides);
  EXPECT_EQ(loaded.config_digest, c.digest());
  const auto j = nlohmann::json::parse(io::read_file(dir / "test.json"));
  EXPECT_EQ(j.at("version"), 1);
  EXPECT_TRUE(j.at("slides").at(0).contains("n_regions"));

  std::set<std::string> ids;
  for (const auto& s : train.slides) ids.insert(s.id);
  for (const auto& s : test.slides) EXPECT_EQ(ids.count(s.id), 0u);

  const auto bundles = load_bundles(loaded);
  ASSERT_EQ(bundles.size(), 16u);
  EXPECT_EQ(bundles[0].slide_id, loaded.slides[0].id);
}

TEST(Dataset, DeterministicBytes) {
  GenConfig c;
  c.min_regions = 4;
  c.max_regions = 8;
  const auto a = scratch_dir("det_a"), b = scratch_dir("det_b");
  generate_dataset(c, 10, 0.6, a);
  generate_dataset(c, 10, 0.6, b);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    EXPECT_EQ(io::read_file(e.path()), io::read_file(b / rel)) << rel;
  }
}

TEST(Manifest, IntegrityChecks) {
  const auto dir = scratch_dir("manifest");
  GenConfig c;
  c.min_regions = 4;
  c.max_regions = 8;
  const auto [train, test] = generate_dataset(c, 10, 0.6, dir);

  fs::remove(dir / test.slides[0].path);
  EXPECT_THROW(load_manifest(dir / "test.json"), FormatError);

  auto dup = train;
  dup.slides.push_back(dup.slides[0]);
  save_manifest(dup, dir / "dup.json");
  EXPECT_THROW(load_manifest(dir / "dup.json"), FormatError);

  auto wrong = train;
  wrong.slides[0].n_regions += 1;
  save_manifest(wrong, dir / "wrong.json");
  EXPECT_THROW(load_manifest(dir / "wrong.json"), FormatError);

  GenConfig other = c;
  other.dim = 4;
  auto odd = generate_slide(other, 1);
  odd.slide_id = "odd";
  write_bundle(odd, dir / "slides/odd.rlgb");
  auto mixed = train;
  mixed.slides.push_back({"odd", "slides/odd.rlgb", odd.label, odd.n_regions});
  save_manifest(mixed, dir / "mixed.json");
  EXPECT_THROW(load_manifest(dir / "mixed.json"), FormatError);

  io::write_file(dir / "junk.json", "{not json");
  EXPECT_THROW(load_manifest(dir / "junk.json"), FormatError);

  DatasetManifest empty;
  EXPECT_THROW(load_bundles(empty), NoDataError);
}

TEST(Calibrate, NoInformationGapWithoutScanNoise) {
  GenConfig c;
  c.sigma_scan = 0.0;
  c.sigma_slide = 0.0;
  c.class_signal = 4.0;
  const auto r = calibrate(c);
  EXPECT_NEAR(r.oracle_auc_scan, r.oracle_auc_high, 0.01);
}

// A single 200-slide AUC has a standard error near 0.04, so the chance level is checked on a
// five-seed average.
TEST(Calibrate, NoSignalGivesChance) {
  double high = 0.0, scan = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    GenConfig c;
    c.class_signal = 0.0;
    c.seed = seed;
    const auto r = calibrate(c);
    high += r.oracle_auc_high / 5.0;
    scan += r.oracle_auc_scan / 5.0;
  }
  EXPECT_NEAR(high, 0.5, 0.05);
  EXPECT_NEAR(scan, 0.5, 0.05);
}

TEST(Calibrate, DefaultConfigInBand) {
  const auto r = calibrate(GenConfig{});
  EXPECT_GE(r.oracle_auc_high, 0.97);
  EXPECT_GE(r.oracle_auc_scan, 0.75);
  EXPECT_LE(r.oracle_auc_scan, 0.90);
}
