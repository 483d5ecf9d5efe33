#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlogist/errors.hpp"
#include "rlogist/numkernel/network.hpp"
#include "rlogist/numkernel/random.hpp"
#include "rlogist/numkernel/softmax.hpp"
#include "rlogist/numkernel/tape.hpp"

namespace rlogist::nets {

using nk::Tape;
using nk::Tensor;
using nk::Var;

// Records x W + b through a parameter pair stored at params[k], params[k+1].
template <class T>
Var record_dense(Tape<T>& tape, Var x, const nk::ParamSet<T>& params, std::size_t k, std::size_t slot_base) {
  Var w = tape.parameter(params[k].value, slot_base + k);
  Var b = tape.parameter(params[k + 1].value, slot_base + k + 1);
  return tape.add_row(tape.matmul(x, w), b);
}

// Gated-attention pooling classifier over per-region rows.
//   H = relu(X Wh + bh),  s = (tanh(H Wa + ba) * sigmoid(H Wg + bg)) w
//   alpha = masked softmax(s),  logit = (alpha^T H) Wo + bo
template <class T>
class GatedAttentionClassifier {
 public:
  struct Recorded {
    Var logit;
    Var attention;
  };

  GatedAttentionClassifier() = default;
  explicit GatedAttentionClassifier(nk::ParamSet<T> params) : params_(std::move(params)) {}

  static GatedAttentionClassifier init(std::size_t input, std::size_t hidden, std::size_t gate, std::uint64_t seed) {
    nk::Rng rng(seed);
    nk::ParamSet<T> p;
    p.add("cls.Wh", nk::glorot_uniform<T>(input, hidden, rng));
    p.add("cls.bh", Tensor<T>(1, hidden));
    p.add("cls.Wa", nk::glorot_uniform<T>(hidden, gate, rng));
    p.add("cls.ba", Tensor<T>(1, gate));
    p.add("cls.Wg", nk::glorot_uniform<T>(hidden, gate, rng));
    p.add("cls.bg", Tensor<T>(1, gate));
    p.add("cls.w", nk::glorot_uniform<T>(gate, 1, rng));
    p.add("cls.Wo", nk::glorot_uniform<T>(hidden, 1, rng));
    p.add("cls.bo", Tensor<T>(1, 1));
    return GatedAttentionClassifier(std::move(p));
  }

  nk::ParamSet<T>& params() noexcept { return params_; }
  const nk::ParamSet<T>& params() const noexcept { return params_; }
  std::size_t input_width() const { return params_[0].value.rows(); }

  Recorded record(Tape<T>& tape, Var x, const std::vector<bool>& attend, std::size_t slot_base) const {
    const auto& xv = tape.value(x);
    if (xv.cols() != input_width()) {
      throw ShapeError("classifier input width " + std::to_string(xv.cols()) + ", expected " +
                       std::to_string(input_width()));
    }
    if (attend.size() != xv.rows()) throw ShapeError("classifier attention mask length mismatch");
    Var h = tape.relu(record_dense(tape, x, params_, 0, slot_base));
    Var a = tape.tanh(record_dense(tape, h, params_, 2, slot_base));
    Var g = tape.sigmoid(record_dense(tape, h, params_, 4, slot_base));
    Var s = tape.matmul(tape.mul(a, g), tape.parameter(params_[6].value, slot_base + 6));
    Var alpha = tape.masked_softmax(s, attend);
    Var pooled = tape.matmul_tn(alpha, h);
    Var logit = record_dense(tape, pooled, params_, 7, slot_base);
    return {logit, alpha};
  }

  double logit(const Tensor<T>& x, const std::vector<bool>& attend) const {
    Tape<T> tape;
    const auto r = record(tape, tape.constant(x), attend, 0);
    return static_cast<double>(tape.scalar(r.logit));
  }

  std::vector<double> attention(const Tensor<T>& x, const std::vector<bool>& attend) const {
    Tape<T> tape;
    const auto r = record(tape, tape.constant(x), attend, 0);
    const auto& a = tape.value(r.attention);
    return {a.data().begin(), a.data().end()};
  }

  // Function-preserving rescale: H -> sH (relu is positively homogeneous), gate and output
  // weights -> 1/s, with s chosen so the first and last layers have equal RMS.
  void balance_scale() {
    auto rms = [](const Tensor<T>& t) {
      double s = 0.0;
      for (auto v : t.data()) s += static_cast<double>(v) * v;
      return std::sqrt(s / static_cast<double>(t.size()));
    };
    const double in = rms(params_[0].value), out = rms(params_[7].value);
    if (!(in > 0.0 && out > 0.0)) return;
    const double s = std::sqrt(out / in);
    for (std::size_t k : {0u, 1u})
      for (auto& v : params_[k].value.data()) v = static_cast<T>(v * s);
    for (std::size_t k : {2u, 4u, 7u})
      for (auto& v : params_[k].value.data()) v = static_cast<T>(v / s);
  }

  template <class U>
  GatedAttentionClassifier<U> cast() const {
    return GatedAttentionClassifier<U>(params_.template cast<U>());
  }

  friend bool operator==(const GatedAttentionClassifier& a, const GatedAttentionClassifier& b) {
    return a.params_ == b.params_;
  }

 private:
  nk::ParamSet<T> params_;
};

// Attention-pooled set network over a region's K sub-patch rows:
//   alpha = softmax(tanh(X Ws + bs) u),  p = alpha^T X,  out = p + head(p)
// u and the head's last layer start at zero, so the initial output is the plain mean.
template <class T>
class LocalUpdater {
 public:
  LocalUpdater() = default;
  explicit LocalUpdater(nk::ParamSet<T> params) : params_(std::move(params)) {}

  static LocalUpdater init(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
    nk::Rng rng(seed);
    nk::ParamSet<T> p;
    p.add("loc.Ws", nk::glorot_uniform<T>(dim, hidden, rng));
    p.add("loc.bs", Tensor<T>(1, hidden));
    p.add("loc.u", Tensor<T>(hidden, 1));
    p.add("loc.H0", nk::glorot_uniform<T>(dim, hidden, rng));
    p.add("loc.hb0", Tensor<T>(1, hidden));
    p.add("loc.H1", Tensor<T>(hidden, dim));
    p.add("loc.hb1", Tensor<T>(1, dim));
    return LocalUpdater(std::move(p));
  }

  nk::ParamSet<T>& params() noexcept { return params_; }
  const nk::ParamSet<T>& params() const noexcept { return params_; }
  std::size_t dim() const { return params_[0].value.rows(); }

  Var record(Tape<T>& tape, Var x, std::size_t slot_base) const {
    const auto& xv = tape.value(x);
    if (xv.rows() == 0) throw EmptyRegionError("local update over zero sub-patches");
    if (xv.cols() != dim()) {
      throw ShapeError("local updater input width " + std::to_string(xv.cols()) + ", expected " + std::to_string(dim()));
    }
    Var s = tape.tanh(record_dense(tape, x, params_, 0, slot_base));
    Var e = tape.matmul(s, tape.parameter(params_[2].value, slot_base + 2));
    Var alpha = tape.masked_softmax(e, std::vector<bool>(xv.rows(), true));
    Var pooled = tape.matmul_tn(alpha, x);
    Var h = tape.relu(record_dense(tape, pooled, params_, 3, slot_base));
    return tape.add(pooled, record_dense(tape, h, params_, 5, slot_base));
  }

  std::vector<T> operator()(const Tensor<T>& sub) const {
    if (sub.rows() == 0) throw EmptyRegionError("local update over zero sub-patches");
    Tape<T> tape;
    const auto& out = tape.value(record(tape, tape.constant(sub), 0));
    return {out.data().begin(), out.data().end()};
  }

  template <class U>
  LocalUpdater<U> cast() const {
    return LocalUpdater<U>(params_.template cast<U>());
  }

  friend bool operator==(const LocalUpdater& a, const LocalUpdater& b) { return a.params_ == b.params_; }

 private:
  nk::ParamSet<T> params_;
};

// Residual head on [v_i, v_a, v'_a]: out = v_i + mlp(.). The mlp's last layer starts at zero.
template <class T>
class GlobalUpdater {
 public:
  GlobalUpdater() = default;
  explicit GlobalUpdater(nk::Mlp<T> mlp) : mlp_(std::move(mlp)) {}

  static GlobalUpdater init(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
    auto mlp = nk::build_network<T>(
        {{3 * dim, hidden, nk::Activation::relu}, {hidden, dim, nk::Activation::identity}}, seed, "glob.");
    nk::scale_last_layer(mlp, 0.0);
    return GlobalUpdater(std::move(mlp));
  }

  nk::ParamSet<T>& params() noexcept { return mlp_.params(); }
  const nk::ParamSet<T>& params() const noexcept { return mlp_.params(); }
  const nk::Mlp<T>& mlp() const noexcept { return mlp_; }
  std::size_t dim() const { return mlp_.output_width(); }

  // Input rows [v_i, v_a, v'_a] for each listed row of `scan`.
  Tensor<T> assemble(const Tensor<float>& scan, std::span<const std::size_t> rows, std::span<const float> v_a,
                     std::span<const float> v_a_new) const {
    const std::size_t d = dim();
    if (scan.cols() != d || v_a.size() != d || v_a_new.size() != d) throw ShapeError("global updater width mismatch");
    Tensor<T> in(rows.size(), 3 * d);
    for (std::size_t m = 0; m < rows.size(); ++m) {
      auto o = in.row(m);
      const auto r = scan.row(rows[m]);
      for (std::size_t c = 0; c < d; ++c) {
        o[c] = static_cast<T>(r[c]);
        o[d + c] = static_cast<T>(v_a[c]);
        o[2 * d + c] = static_cast<T>(v_a_new[c]);
      }
    }
    return in;
  }

  // Applies the update in place to the listed rows.
  void apply(Tensor<float>& scan, std::span<const std::size_t> rows, std::span<const float> v_a,
             std::span<const float> v_a_new) const {
    const auto correction = mlp_(assemble(scan, rows, v_a, v_a_new));
    for (std::size_t m = 0; m < rows.size(); ++m) {
      auto r = scan.row(rows[m]);
      for (std::size_t c = 0; c < r.size(); ++c) r[c] = static_cast<float>(r[c] + correction(m, c));
    }
  }

  // Recorded form over an assembled input; the first d columns are v_i.
  Var record(Tape<T>& tape, const Tensor<T>& input, std::size_t slot_base) const {
    const std::size_t d = dim();
    Tensor<T> vi(input.rows(), d);
    for (std::size_t m = 0; m < input.rows(); ++m)
      for (std::size_t c = 0; c < d; ++c) vi(m, c) = input(m, c);
    return tape.add(tape.constant(std::move(vi)), mlp_.record(tape, tape.constant(input), slot_base));
  }

  template <class U>
  GlobalUpdater<U> cast() const {
    return GlobalUpdater<U>(mlp_.template cast<U>());
  }

  friend bool operator==(const GlobalUpdater& a, const GlobalUpdater& b) { return a.mlp_ == b.mlp_; }

 private:
  nk::Mlp<T> mlp_;
};

}  // namespace rlogist::nets
