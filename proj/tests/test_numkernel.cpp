#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "rlogist/numkernel.hpp"
#include "test_support.hpp"

using namespace rlogist;
using namespace rlogist::nk;

namespace {

// Hand-written dense chain used as an oracle for forward().
std::vector<double> reference_chain(const Mlp<double>& net, const std::vector<double>& x) {
  std::vector<double> h = x;
  for (std::size_t l = 0; l < net.spec().size(); ++l) {
    const auto& w = net.params()[2 * l].value;
    const auto& b = net.params()[2 * l + 1].value;
    std::vector<double> out(w.cols());
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double acc = b[j];
      for (std::size_t i = 0; i < w.rows(); ++i) acc += h[i] * w(i, j);
      switch (net.spec()[l].activation) {
        case Activation::identity: break;
        case Activation::relu: acc = std::max(0.0, acc); break;
        case Activation::tanh: acc = std::tanh(acc); break;
        case Activation::sigmoid: acc = 1.0 / (1.0 + std::exp(-acc)); break;
      }
      out[j] = acc;
    }
    h = std::move(out);
  }
  return h;
}

Tensor<double> random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor<double> t(r, c);
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

}  // namespace

TEST(BuildNetwork, DeterministicGivenSeed) {
  auto a = build_network<float>({{4, 1, Activation::identity}}, 7);
  auto b = build_network<float>({{4, 1, Activation::identity}}, 7);
  EXPECT_EQ(a, b);
}

TEST(BuildNetwork, ParameterCount) {
  auto net = build_network<float>({{2, 3, Activation::relu}, {3, 1, Activation::sigmoid}}, 1);
  EXPECT_EQ(net.params().scalar_count(), 13u);
}

TEST(BuildNetwork, EmptySpecRejected) {
  EXPECT_THROW(build_network<float>({}, 1), InvalidSpecError);
  EXPECT_THROW(build_network<float>({{2, 0, Activation::relu}}, 1), InvalidSpecError);
}

TEST(BuildNetwork, GlorotBoundsAndZeroBias) {
  auto net = build_network<float>({{10, 6, Activation::relu}}, 3);
  const double limit = std::sqrt(6.0 / 16.0);
  for (float w : net.params()[0].value.data()) EXPECT_LE(std::abs(w), limit);
  for (float b : net.params()[1].value.data()) EXPECT_EQ(b, 0.0f);
}

TEST(Forward, IdentityLayerIsIdentity) {
  auto net = build_network<float>({{3, 3, Activation::identity}}, 1);
  auto& w = net.params()[0].value;
  w.fill(0.0f);
  for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1.0f;
  Tensor<float> x(1, 3, std::vector<float>{1.5f, -2.0f, 0.25f});
  EXPECT_EQ(forward(net, x, false).output, x);
}

TEST(Forward, ZeroSigmoidLayerGivesHalf) {
  auto net = build_network<float>({{5, 2, Activation::sigmoid}}, 1);
  net.params()[0].value.fill(0.0f);
  Tensor<float> x(1, 5, std::vector<float>{3, -1, 8, 2, 0});
  const auto y = net(x);
  for (float v : y.data()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(Forward, MatchesHandComputedChain) {
  auto net = build_network<double>({{4, 5, Activation::tanh}, {5, 3, Activation::sigmoid}}, 99);
  Rng rng(5);
  for (auto& p : net.params())
    for (auto& v : p.value.data()) v = rng.normal(0.0, 0.5);
  std::vector<double> x{0.3, -1.2, 0.8, 2.0};
  const auto expected = reference_chain(net, x);
  const auto got = forward(net, Tensor<double>(1, 4, x), false).output;
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(got[j], expected[j], 1e-12);
}

TEST(Forward, RecordedAndUnrecordedAgreeBitwise) {
  auto net = build_network<float>({{6, 8, Activation::relu}, {8, 2, Activation::tanh}}, 4);
  Tensor<float> x(3, 6);
  Rng rng(2);
  for (auto& v : x.data()) v = static_cast<float>(rng.normal());
  auto rec = forward(net, x, true);
  EXPECT_TRUE(rec.tape.has_value());
  EXPECT_EQ(rec.output, forward(net, x, false).output);
  EXPECT_FALSE(forward(net, x, false).tape.has_value());
}

TEST(Forward, ShapeMismatch) {
  auto net = build_network<float>({{4, 2, Activation::relu}}, 1);
  EXPECT_THROW(net(Tensor<float>(1, 3)), ShapeError);
}

TEST(MaskedSoftmax, SymmetricLogits) {
  const auto p = masked_softmax(std::vector<double>{0.0, 0.0}, {true, true});
  EXPECT_NEAR(p[0], 0.5, 1e-15);
  EXPECT_NEAR(p[1], 0.5, 1e-15);
}

TEST(MaskedSoftmax, SingleLegalAction) {
  const auto p = masked_softmax(std::vector<double>{5.0, 1.0}, {false, true});
  EXPECT_LE(p[0], 1e-20);
  EXPECT_NEAR(p[1], 1.0, 1e-12);
}

TEST(MaskedSoftmax, UsesLargeNegativeConstant) {
  EXPECT_EQ(kMaskedLogit, -1.0e8);
  // A masked logit behaves exactly like a free logit of -1e8.
  const auto lp = masked_log_softmax(std::vector<double>{0.0, 3.0}, {true, false});
  EXPECT_NEAR(lp[1], -1.0e8, 1.0);
}

TEST(MaskedSoftmax, AllMaskedRejected) {
  EXPECT_THROW(masked_softmax(std::vector<double>{1.0, 2.0}, {false, false}), NoLegalActionError);
}

TEST(MaskedSoftmax, DistributionPropertyOnRandomInputs) {
  Rng rng(123);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(200);
    std::vector<float> logits(n);
    std::vector<bool> legal(n);
    for (std::size_t i = 0; i < n; ++i) {
      logits[i] = static_cast<float>(rng.normal(0.0, 20.0));
      legal[i] = rng.bernoulli(0.6);
    }
    legal[rng.uniform_index(n)] = true;
    const auto p = masked_softmax(logits, legal);
    double total = 0.0, masked = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_GE(p[i], 0.0);
      total += p[i];
      if (!legal[i]) masked += p[i];
    }
    ASSERT_NEAR(total, 1.0, 1e-9);
    ASSERT_LT(masked, 1e-12 * total);
  }
}

TEST(Backward, ConstantOutputGivesZeroGradient) {
  // relu of a negative pre-activation: the output is flat in every parameter.
  auto net = build_network<double>({{2, 1, Activation::relu}}, 1);
  net.params()[0].value.fill(-1.0);
  auto pass = forward(net, Tensor<double>(1, 2, std::vector<double>{1.0, 2.0}), true);
  auto g = backward(pass, Tensor<double>(1, 1, 1.0));
  for (const auto& s : g.slots)
    for (double v : s.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, SquareAtThreeIsSix) {
  Tensor<double> w(1, 1, 3.0);
  Tape<double> tape;
  auto y = tape.square(tape.parameter(w, 0));
  auto g = tape.backward(y, Tensor<double>(1, 1, 1.0));
  EXPECT_DOUBLE_EQ(g.slots[0][0], 6.0);
}

TEST(Backward, ReplayedTapeIsStale) {
  auto net = build_network<double>({{2, 2, Activation::tanh}}, 1);
  auto pass = forward(net, Tensor<double>(1, 2, 0.5), true);
  backward(pass, Tensor<double>(1, 2, 1.0));
  EXPECT_THROW(backward(pass, Tensor<double>(1, 2, 1.0)), StaleTapeError);
}

TEST(Backward, GradientShapesMatchParameters) {
  auto net = build_network<double>({{3, 4, Activation::relu}, {4, 2, Activation::identity}}, 8);
  auto pass = forward(net, Tensor<double>(2, 3, 1.0), true);
  auto g = backward(pass, Tensor<double>(2, 2, 1.0));
  ASSERT_EQ(g.slots.size(), net.params().size());
  for (std::size_t k = 0; k < g.slots.size(); ++k) EXPECT_EQ(g.slots[k].shape(), net.params()[k].value.shape());
}

TEST(Backward, TwoLayerFiniteDifferences) {
  auto net = build_network<double>({{3, 4, Activation::tanh}, {4, 2, Activation::sigmoid}}, 17);
  Rng rng(17);
  const auto x = random_tensor(2, 3, rng);
  const auto seed = random_tensor(2, 2, rng);
  auto pass = forward(net, x, true);
  const auto g = backward(pass, seed);
  auto loss = [&] {
    const auto y = net(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * seed[i];
    return s;
  };
  const auto r = test_support::finite_difference_check(refs(net.params()), g, loss);
  EXPECT_EQ(r.failures, 0u) << "worst " << r.worst_param << " rel " << r.worst_relative;
}

// Composite ops used by the attention networks, checked through the same oracle.
TEST(Backward, CompositeOpsFiniteDifferences) {
  Rng rng(31);
  ParamSet<double> ps;
  ps.add("A", random_tensor(5, 3, rng));
  ps.add("w", random_tensor(3, 1, rng));
  ps.add("v", random_tensor(1, 3, rng));
  const auto x = random_tensor(5, 3, rng);
  const std::vector<bool> legal{true, false, true, true, true};
  auto build = [&](Tape<double>& t) {
    auto A = t.parameter(ps[0].value, 0);
    auto w = t.parameter(ps[1].value, 1);
    auto v = t.parameter(ps[2].value, 2);
    auto X = t.constant(x);
    auto H = t.tanh(t.mul(t.add(X, A), t.sigmoid(A)));
    auto ctx = t.concat_cols({t.mean_rows(H), t.max_rows(H)});
    auto scores = t.matmul(t.sub(H, t.broadcast_rows(v, 5)), w);
    auto alpha = t.masked_softmax(scores, legal);
    auto pooled = t.matmul_tn(alpha, H);
    auto lp = t.masked_log_softmax(scores, legal);
    auto ent = t.sum(t.mul(t.exp(lp), lp));
    auto bce = t.bce_with_logit(t.sum(pooled), 1.0);
    auto clipped = t.minimum(t.clamp(t.pick(lp, 2), -1.5, -0.1), t.scale(t.pick(lp, 3), 0.5));
    return t.add(t.add(t.add(bce, ent), t.mean(t.square(ctx))), t.add_scalar(clipped, 0.3));
  };
  Tape<double> tape;
  auto out = build(tape);
  const auto g = tape.backward(out, Tensor<double>(1, 1, 1.0));
  auto loss = [&] {
    Tape<double> t;
    return t.scalar(build(t));
  };
  const auto r = test_support::finite_difference_check(refs(ps), g, loss);
  EXPECT_EQ(r.failures, 0u) << "worst " << r.worst_param << " rel " << r.worst_relative;
}

TEST(Backward, RandomNetworksMatchFiniteDifferences) {
  Rng rng(2024);
  const Activation acts[] = {Activation::identity, Activation::relu, Activation::tanh, Activation::sigmoid};
  std::size_t failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t depth = 1 + rng.uniform_index(3);
    std::vector<LayerSpec> spec;
    std::size_t width = 1 + rng.uniform_index(6);
    for (std::size_t l = 0; l < depth; ++l) {
      const std::size_t out = 1 + rng.uniform_index(6);
      spec.push_back({width, out, acts[rng.uniform_index(4)]});
      width = out;
    }
    auto net = build_network<double>(spec, rng.next_u64());
    // Nonzero biases keep pre-activations away from the relu kink at exactly zero.
    for (std::size_t k = 1; k < net.params().size(); k += 2)
      for (auto& b : net.params()[k].value.data()) b = rng.normal(0.0, 0.5);
    const auto x = random_tensor(1 + rng.uniform_index(3), spec.front().input_width, rng);
    const auto seed = random_tensor(x.rows(), width, rng);
    auto pass = forward(net, x, true);
    const auto g = backward(pass, seed);
    auto loss = [&] {
      const auto y = net(x);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * seed[i];
      return s;
    };
    const auto r = test_support::finite_difference_check(refs(net.params()), g, loss);
    EXPECT_EQ(r.failures, 0u) << "trial " << trial << " worst " << r.worst_param << " rel " << r.worst_relative;
    failures += r.failures;
  }
  EXPECT_EQ(failures, 0u);
}

TEST(Forward, NonFiniteInputRaises) {
  auto net = build_network<float>({{2, 2, Activation::relu}}, 1);
  Tensor<float> x(1, 2, std::vector<float>{1.0f, std::numeric_limits<float>::quiet_NaN()});
  EXPECT_THROW(net(x), NumericError);
  EXPECT_THROW(forward(net, x, true), NumericError);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto net = build_network<float>({{3, 2, Activation::relu}}, 4);
  const auto before = net.params();
  auto params = refs(net.params());
  auto state = make_adam(params, 1e-3);
  Gradients<float> g;
  g.slots = {Tensor<float>(3, 2), Tensor<float>(1, 2)};
  adam_step(params, g, state);
  EXPECT_EQ(state.step_count, 1u);
  EXPECT_EQ(net.params(), before);
}

TEST(Adam, FirstStepIsLearningRate) {
  ParamSet<double> ps;
  ps.add("w", Tensor<double>(1, 1, 1.0));
  auto params = refs(ps);
  auto state = make_adam(params, 0.001);
  Gradients<double> g;
  g.slots = {Tensor<double>(1, 1, 1.0)};
  adam_step(params, g, state);
  // m_hat = 1, v_hat = 1 after bias correction: step = lr / (1 + eps).
  EXPECT_NEAR(1.0 - ps[0].value[0], 0.001 / (1.0 + 1e-5), 1e-15);
  EXPECT_NEAR(1.0 - ps[0].value[0], 0.001, 1e-7);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParamSet<float> ps;
  ps.add("policy.W0", Tensor<float>(1, 1, 1.0f));
  auto params = refs(ps);
  auto state = make_adam(params, 0.001);
  Gradients<float> g;
  g.slots = {Tensor<float>(1, 1, std::numeric_limits<float>::infinity())};
  try {
    adam_step(params, g, state);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("policy.W0"), std::string::npos);
  }
  EXPECT_EQ(state.step_count, 0u);
}

TEST(Adam, LinearAnnealing) {
  EXPECT_DOUBLE_EQ(linear_annealed_lr(2.5e-4, 0.5), 1.25e-4);
  EXPECT_DOUBLE_EQ(linear_annealed_lr(2.5e-4, 0.0), 2.5e-4);
  EXPECT_DOUBLE_EQ(linear_annealed_lr(2.5e-4, 1.0), 0.0);
  for (int i = 0; i <= 100; ++i) {
    const double p = i / 100.0;
    EXPECT_NEAR(linear_annealed_lr(2.5e-4, p), 2.5e-4 * (1.0 - p), 1e-12);
  }
}

TEST(Adam, GlobalNormClip) {
  Gradients<double> g;
  g.slots = {Tensor<double>(1, 2, std::vector<double>{3.0, 4.0})};
  const double norm = clip_global_norm(g, 0.5);
  EXPECT_DOUBLE_EQ(norm, 5.0);
  EXPECT_NEAR(std::sqrt(g.squared_norm()), 0.5, 1e-6);
}

TEST(Rng, DeterministicStreams) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.normal(), b.normal());
    EXPECT_EQ(a.uniform_index(17), b.uniform_index(17));
  }
  EXPECT_NE(derive_seed(1, {2}), derive_seed(1, {3}));
}
