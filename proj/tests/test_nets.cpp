#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "rlogist/envmdp.hpp"
#include "rlogist/eval/auc.hpp"
#include "rlogist/nets.hpp"
#include "rlogist/slidegen.hpp"

namespace fs = std::filesystem;
using namespace rlogist;
using namespace rlogist::nets;

namespace {

envmdp::EnvState random_state(const SlideBundle& b, std::size_t observed, std::uint64_t seed) {
  envmdp::EnvConfig c;
  c.budget_fraction = 1.0;
  auto s = envmdp::reset(b, c);
  envmdp::StubDynamics dyn;
  nk::Rng rng(seed);
  for (auto a : rng.sample_without_replacement(b.n_regions, observed)) envmdp::step(s, a, dyn, c);
  return s;
}

nk::Tensor<float> permute_rows(const nk::Tensor<float>& x, const std::vector<std::size_t>& perm) {
  nk::Tensor<float> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto r = x.row(perm[i]);
    std::copy(r.begin(), r.end(), out.row(i).begin());
  }
  return out;
}

void jitter(nk::ParamRefs<float> refs, std::uint64_t seed, double scale) {
  nk::Rng rng(seed);
  for (auto* p : refs)
    for (auto& v : p->value.data()) v = static_cast<float>(v + rng.normal(0.0, scale));
}

// 400/200 split of the default generator, pretrained once for the whole suite.
struct Pretrained {
  slidegen::SplitBundles data;
  NetworkBundle<float> nets;
  ClassifierPretrainReport classifier;
  UpdaterPretrainReport updaters;
};

const Pretrained& pretrained() {
  static const Pretrained p = [] {
    Pretrained out;
    slidegen::GenConfig g;
    out.data = slidegen::generate_split(g, 600, 2.0 / 3.0);
    out.nets = make_network_bundle<float>(NetArch{}, 7);
    out.classifier = pretrain_classifier(out.nets, out.data.train, out.data.test, ClassifierPretrainConfig{});
    out.updaters = pretrain_updaters(out.nets, out.data.train, out.data.test, UpdaterPretrainConfig{});
    return out;
  }();
  return p;
}

}  // namespace

TEST(Arch, WidthsFollowDim) {
  NetArch a;
  a.dim = 5;
  EXPECT_EQ(a.policy_input(), 17u);
  EXPECT_EQ(a.value_input(), 11u);
  EXPECT_EQ(a.classifier_input(), 6u);
  EXPECT_EQ(a.global_input(), 15u);
  a.dim = 0;
  EXPECT_THROW(a.validate(), InvalidSpecError);
}

TEST(Views, PolicyViewLayout) {
  nk::Tensor<float> scan(2, 2, std::vector<float>{1, 4, 3, 2});
  const auto v = policy_view<double>(scan, {true, false}, 0.25);
  ASSERT_EQ(v.cols(), 8u);
  const std::vector<double> row0{1, 4, 2, 3, 3, 4, 1, 0.25};
  const std::vector<double> row1{3, 2, 2, 3, 3, 4, 0, 0.25};
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_DOUBLE_EQ(v(0, c), row0[c]);
    EXPECT_DOUBLE_EQ(v(1, c), row1[c]);
  }
}

TEST(Views, ClassifierViewIsCentred) {
  nk::Tensor<float> scan(3, 2, std::vector<float>{1, 2, 3, 4, 5, 9});
  const auto v = classifier_view<double>(scan, {false, true, false});
  EXPECT_DOUBLE_EQ(v(0, 0), -2.0);
  EXPECT_DOUBLE_EQ(v(2, 1), 4.0);
  EXPECT_DOUBLE_EQ(v(1, 2), 1.0);
  EXPECT_THROW(classifier_view<double>(scan, {true}), ShapeError);
}

TEST(Policy, PermutationEquivariant) {
  const auto nets = make_network_bundle<float>(NetArch{}, 11);
  slidegen::GenConfig g;
  const auto b = slidegen::generate_slide(g, 21);
  auto s = random_state(b, 5, 3);
  const auto logits = policy_logits(nets, s);
  nk::Rng rng(4);
  const auto perm = rng.permutation(b.n_regions);
  envmdp::EnvState p = s;
  p.current_scan = permute_rows(s.current_scan, perm);
  for (std::size_t i = 0; i < perm.size(); ++i) p.observed[i] = s.observed[perm[i]];
  const auto plog = policy_logits(nets, p);
  for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_NEAR(plog[i], logits[perm[i]], 1e-6);
}

TEST(Policy, IdenticalRowsGetEqualLogits) {
  const auto nets = make_network_bundle<float>(NetArch{}, 12);
  slidegen::GenConfig g;
  auto b = slidegen::generate_slide(g, 22);
  const auto r0 = b.scan_features.row_copy(0);
  std::copy(r0.begin(), r0.end(), b.scan_features.row(5).begin());
  auto s = envmdp::reset(b, envmdp::EnvConfig{});
  const auto logits = policy_logits(nets, s);
  EXPECT_NEAR(logits[0], logits[5], 1e-6);
}

TEST(Policy, InitialEntropyNearUniform) {
  NetArch arch;
  slidegen::GenConfig g;
  g.min_regions = 64;
  g.max_regions = 64;
  const double bound = 0.9 * std::log(64.0);
  double worst = 1e9;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto nets = make_network_bundle<float>(arch, seed);
    const auto b = slidegen::generate_slide(g, 1000 + seed);
    const auto s = envmdp::reset(b, envmdp::EnvConfig{});
    const auto logits = policy_logits(nets, s);
    const auto p = nk::masked_softmax(std::span<const float>(logits.data()), std::vector<bool>(64, true));
    double h = 0.0;
    for (double q : p)
      if (q > 0) h -= q * std::log(q);
    worst = std::min(worst, h);
  }
  EXPECT_GE(worst, bound);
}

TEST(Value, ZeroAtInitAndDeterministic) {
  const auto nets = make_network_bundle<float>(NetArch{}, 13);
  slidegen::GenConfig g;
  const auto b = slidegen::generate_slide(g, 23);
  const auto s = random_state(b, 4, 1);
  EXPECT_EQ(value_estimate(nets, s), 0.0);
  auto trained = nets;
  jitter(trained.value_refs(), 2, 0.1);
  EXPECT_EQ(value_estimate(trained, s), value_estimate(trained, s));
}

TEST(Value, RegressesToConstantReturn) {
  auto nets = make_network_bundle<float>(NetArch{}, 14);
  slidegen::GenConfig g;
  std::vector<SlideBundle> slides;
  for (std::uint64_t i = 0; i < 40; ++i) slides.push_back(slidegen::generate_slide(g, 300 + i));
  auto refs = nets.value_refs();
  auto adam = nk::make_adam(refs, 1e-3);
  nk::Rng rng(5);
  for (int step = 0; step < 400; ++step) {
    nk::Gradients<float> grads;
    for (int k = 0; k < 16; ++k) {
      const auto& b = slides[rng.uniform_index(slides.size())];
      const auto T = envmdp::budget_steps(b.n_regions, 0.2);
      const auto s = random_state(b, rng.uniform_index(T), rng.next_u64());
      nk::Tape<float> tape;
      const auto v = nets.value.record(tape, tape.constant(value_view<float>(s.current_scan, static_cast<double>(s.t) / T)), 0);
      const auto loss = tape.square(tape.add_scalar(v, 0.3));
      tape.backward_into(loss, nk::Tensor<float>(1, 1, 1.0f / 16), grads);
    }
    nk::adam_step(refs, grads, adam);
  }
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto& b = slides[i];
    const auto T = envmdp::budget_steps(b.n_regions, 0.2);
    auto s = random_state(b, T - 1, 77 + i);
    const double v = nets.value(value_view<float>(s.current_scan, static_cast<double>(T - 1) / T))[0];
    EXPECT_NEAR(v, -0.3, 0.05);
  }
}

TEST(Classifier, UniformAttentionOnIdenticalRows) {
  auto nets = make_network_bundle<float>(NetArch{}, 15);
  jitter(nets.classifier_refs(), 3, 0.05);
  nk::Tensor<float> x(9, nets.arch.classifier_input());
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) x(i, c) = 0.1f * static_cast<float>(c);
  const auto a = nets.classifier.attention(x, std::vector<bool>(9, true));
  for (double w : a) EXPECT_NEAR(w, 1.0 / 9.0, 1e-6);
}

TEST(Classifier, ProbabilityStrictlyInsideUnitInterval) {
  const auto nets = make_network_bundle<float>(NetArch{}, 16);
  slidegen::GenConfig g;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto b = slidegen::generate_slide(g, 400 + i);
    const auto s = random_state(b, i % 5, i);
    for (bool all : {true, false}) {
      const double p = classify_slide(nets, s, all);
      EXPECT_GT(p, 0.0);
      EXPECT_LT(p, 1.0);
    }
  }
}

TEST(Classifier, BalanceScalePreservesFunction) {
  auto nets = make_network_bundle<float>(NetArch{}, 17);
  jitter(nets.classifier_refs(), 4, 0.3);
  slidegen::GenConfig g;
  const auto b = slidegen::generate_slide(g, 31);
  const auto s = random_state(b, 3, 9);
  const double before = classify_logit(nets, s.current_scan, s.observed, true);
  nets.classifier.balance_scale();
  EXPECT_NEAR(classify_logit(nets, s.current_scan, s.observed, true), before, 1e-4 * (1.0 + std::abs(before)));
}

TEST(LocalUpdater, PermutationInvariant) {
  auto nets = make_network_bundle<float>(NetArch{}, 18);
  jitter(nets.local_refs(), 5, 0.2);
  slidegen::GenConfig g;
  const auto b = slidegen::generate_slide(g, 32);
  nk::Rng rng(6);
  for (std::size_t region = 0; region < 10; ++region) {
    const auto sub = b.region_sub_tensor(region);
    const auto out = nets.local(sub);
    const auto pout = nets.local(permute_rows(sub, rng.permutation(sub.rows())));
    for (std::size_t c = 0; c < out.size(); ++c) EXPECT_NEAR(pout[c], out[c], 1e-6);
  }
}

TEST(LocalUpdater, EqualRowsIndependentOfK) {
  auto nets = make_network_bundle<float>(NetArch{}, 19);
  jitter(nets.local_refs(), 6, 0.2);
  std::vector<float> c(16);
  for (std::size_t k = 0; k < c.size(); ++k) c[k] = 0.3f * static_cast<float>(k) - 2.0f;
  const auto one = nets.local(nk::Tensor<float>(1, 16, c));
  for (std::size_t K : {2u, 7u, 16u}) {
    nk::Tensor<float> sub(K, 16);
    for (std::size_t j = 0; j < K; ++j) std::copy(c.begin(), c.end(), sub.row(j).begin());
    const auto out = nets.local(sub);
    for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(out[k], one[k], 1e-5);
  }
}

TEST(LocalUpdater, EmptyRegionRejected) {
  const auto nets = make_network_bundle<float>(NetArch{}, 20);
  EXPECT_THROW(nets.local(nk::Tensor<float>(0, 16)), EmptyRegionError);
}

TEST(LocalUpdater, InitialOutputIsPlainMean) {
  const auto nets = make_network_bundle<float>(NetArch{}, 21);
  slidegen::GenConfig g;
  const auto b = slidegen::generate_slide(g, 33);
  for (std::size_t i = 0; i < b.n_regions; ++i) {
    const auto out = nets.local(b.region_sub_tensor(i));
    const auto mean = b.region_mean(i);
    for (std::size_t c = 0; c < b.dim; ++c) EXPECT_NEAR(out[c], mean[c], 1e-5);
  }
}

TEST(GlobalUpdater, IdentityAtInit) {
  const auto nets = make_network_bundle<float>(NetArch{}, 22);
  slidegen::GenConfig g;
  const auto b = slidegen::generate_slide(g, 34);
  auto scan = b.scan_features;
  std::vector<std::size_t> rows(b.n_regions - 1);
  std::iota(rows.begin(), rows.end(), 1);
  const auto va = scan.row_copy(0);
  const auto vnew = b.region_mean(0);
  nets.global.apply(scan, rows, va, vnew);
  EXPECT_EQ(scan, b.scan_features);
}

TEST(GlobalUpdater, Deterministic) {
  auto nets = make_network_bundle<float>(NetArch{}, 23);
  jitter(nets.global_refs(), 7, 0.1);
  slidegen::GenConfig g;
  const auto b = slidegen::generate_slide(g, 35);
  auto s1 = b.scan_features, s2 = b.scan_features;
  const std::vector<std::size_t> rows{1, 2, 3};
  nets.global.apply(s1, rows, b.scan_features.row_copy(0), b.region_mean(0));
  nets.global.apply(s2, rows, b.scan_features.row_copy(0), b.region_mean(0));
  EXPECT_EQ(s1, s2);
  EXPECT_NE(s1, b.scan_features);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto nets = make_network_bundle<float>(NetArch{}, 24);
  for (auto* p : nets.all_refs()) jitter({p}, 8 + p->value.size(), 0.1);
  const auto dir = fs::temp_directory_path() / "rlogist_test_nets";
  fs::create_directories(dir);
  save_network_bundle(nets, dir / "n.rlgn");
  const auto back = load_network_bundle(dir / "n.rlgn");
  EXPECT_TRUE(back == nets);
  slidegen::GenConfig g;
  const auto b = slidegen::generate_slide(g, 36);
  const auto s = random_state(b, 6, 2);
  EXPECT_EQ(policy_logits(back, s), policy_logits(nets, s));
  EXPECT_EQ(value_estimate(back, s), value_estimate(nets, s));
  EXPECT_EQ(classify_slide(back, s), classify_slide(nets, s));
  const auto bytes = io::read_file(dir / "n.rlgn");
  EXPECT_EQ(bytes.substr(0, 4), "RLGN");
  EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4), "x"), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3), "x"), FormatError);
}

TEST(Pretrain, SingleClassRejected) {
  slidegen::GenConfig g;
  std::vector<SlideBundle> train;
  for (std::uint64_t i = 0; i < 6; ++i) train.push_back(slidegen::generate_slide(g, 50 + i, std::uint8_t{1}));
  auto nets = make_network_bundle<float>(NetArch{}, 25);
  EXPECT_THROW(pretrain_classifier(nets, train, {}, ClassifierPretrainConfig{}), DegenerateLabelsError);
}

TEST(Pretrain, ClassifierLossDecreasesOverFirstEpochs) {
  slidegen::GenConfig g;
  const auto data = slidegen::generate_split(g, 500, 0.8);
  auto nets = make_network_bundle<float>(NetArch{}, 26);
  ClassifierPretrainConfig c;
  c.epochs = 3;
  c.learning_rate = 1e-3;
  // Unpenalised loss; the default L2 term keeps logits near zero through the first epochs.
  c.weight_decay = 0.0;
  const auto r = pretrain_classifier(nets, data.train, {}, c);
  ASSERT_EQ(r.epoch_losses.size(), 3u);
  EXPECT_LT(r.epoch_losses[1], r.epoch_losses[0]);
  EXPECT_LT(r.epoch_losses[2], r.epoch_losses[1]);
}

TEST(Pretrain, NoSignalGivesChanceAuc) {
  slidegen::GenConfig g;
  g.class_signal = 0.0;
  const auto data = slidegen::generate_split(g, 600, 0.5);
  auto nets = make_network_bundle<float>(NetArch{}, 27);
  ClassifierPretrainConfig c;
  c.epochs = 10;
  const auto r = pretrain_classifier(nets, data.train, data.test, c);
  EXPECT_NEAR(r.heldout_auc, 0.5, 0.05);
}

TEST(Pretrain, ClassifierAucInCalibrationBand) {
  const auto& p = pretrained();
  std::vector<eval::ScoredLabel> scores;
  for (const auto& b : p.data.test) {
    scores.push_back({classify_logit(p.nets, b.scan_features, std::vector<bool>(b.n_regions, false), true), b.label});
  }
  // Rank-sum AUC recomputed here by pair counting.
  double wins = 0.0, pairs = 0.0;
  for (const auto& a : scores)
    for (const auto& n : scores)
      if (a.label == 1 && n.label == 0) {
        wins += a.score > n.score ? 1.0 : a.score == n.score ? 0.5 : 0.0;
        pairs += 1.0;
      }
  const double auc = wins / pairs;
  EXPECT_NEAR(auc, p.classifier.heldout_auc, 1e-12);
  EXPECT_GE(auc, 0.75);
  EXPECT_LE(auc, 0.90);
}

TEST(Pretrain, LocalUpdaterTracksMean) {
  const auto& p = pretrained();
  double err = 0.0, norm = 0.0;
  for (const auto& b : p.data.test) {
    for (std::size_t i = 0; i < b.n_regions; ++i) {
      const auto out = p.nets.local(b.region_sub_tensor(i));
      const auto sub = b.region_sub(i);
      for (std::size_t c = 0; c < b.dim; ++c) {
        double m = 0.0;
        for (std::size_t j = 0; j < b.sub_patches; ++j) m += sub[j * b.dim + c];
        m /= static_cast<double>(b.sub_patches);
        err += (out[c] - m) * (out[c] - m);
        norm += m * m;
      }
    }
  }
  EXPECT_LE(std::sqrt(err / norm), 0.05);
  EXPECT_LE(p.updaters.local_heldout_relative_l2, 0.05);
}

TEST(Pretrain, GlobalUpdaterBeatsNoUpdateBaseline) {
  const auto& p = pretrained();
  // Independent paired comparison: observe the first region of each held-out slide.
  double g = 0.0, id = 0.0;
  for (const auto& b : p.data.test) {
    std::vector<std::size_t> rows(b.n_regions - 1);
    std::iota(rows.begin(), rows.end(), 1);
    auto scan = b.scan_features;
    const auto vnew = p.nets.local(b.region_sub_tensor(0));
    p.nets.global.apply(scan, rows, b.scan_features.row_copy(0), vnew);
    for (auto i : rows) {
      const auto target = p.nets.local(b.region_sub_tensor(i));
      for (std::size_t c = 0; c < b.dim; ++c) {
        g += std::pow(scan(i, c) - target[c], 2);
        id += std::pow(b.scan_features(i, c) - target[c], 2);
      }
    }
  }
  EXPECT_LE(g, 0.8 * id);
  EXPECT_LE(p.updaters.global_pair_mse, 0.8 * p.updaters.identity_pair_mse);
}

TEST(Pretrain, GlobalUpdaterHasNothingToInferWithoutSharedNoise) {
  slidegen::GenConfig g;
  g.sigma_slide = 0.0;
  g.sigma_scan = 0.0;
  const auto data = slidegen::generate_split(g, 240, 2.0 / 3.0);
  auto nets = make_network_bundle<float>(NetArch{}, 28);
  UpdaterPretrainConfig c;
  c.global_episodes = 300;
  const auto r = pretrain_updaters(nets, data.train, data.test, c);
  EXPECT_LT(std::abs(r.pair_improvement()), 0.1);
}
