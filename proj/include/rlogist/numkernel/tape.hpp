#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "rlogist/errors.hpp"
#include "rlogist/numkernel/softmax.hpp"
#include "rlogist/numkernel/tensor.hpp"

namespace rlogist::nk {

// Gradients indexed by parameter slot. Slots are assigned by whoever records the graph.
template <class T>
struct Gradients {
  std::vector<Tensor<T>> slots;

  void ensure(std::size_t slot, std::size_t rows, std::size_t cols) {
    if (slots.size() <= slot) slots.resize(slot + 1);
    if (slots[slot].size() == 0 && rows * cols > 0) slots[slot] = Tensor<T>(rows, cols);
  }

  void scale(double s) {
    for (auto& g : slots)
      for (auto& v : g.data()) v = static_cast<T>(v * s);
  }

  double squared_norm() const {
    double acc = 0.0;
    for (const auto& g : slots)
      for (auto v : g.data()) acc += static_cast<double>(v) * static_cast<double>(v);
    return acc;
  }
};

// Handle to a value recorded on a tape.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
};

// Records primitive operations in execution order and replays them in reverse once.
template <class T>
class Tape {
 public:
  static constexpr std::size_t kNoSlot = std::numeric_limits<std::size_t>::max();

  Tape() { nodes_.reserve(64); }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.external ? *n.external : n.value;
  }

  T scalar(Var v) const {
    const auto& t = value(v);
    if (t.size() != 1) throw ShapeError("scalar: value is " + t.shape_string());
    return t[0];
  }

  Var constant(Tensor<T> v) {
    Node n;
    n.op = Op::leaf;
    n.value = std::move(v);
    return push(std::move(n));
  }

  // References `p` without copying; `p` must outlive the tape.
  Var parameter(const Tensor<T>& p, std::size_t slot) {
    Node n;
    n.op = Op::leaf;
    n.external = &p;
    n.slot = slot;
    return push(std::move(n), false);
  }

  Var matmul(Var a, Var b) { return binary(Op::matmul, a, b, kernels::matmul(value(a), value(b))); }

  Var matmul_tn(Var a, Var b) { return binary(Op::matmul_tn, a, b, kernels::matmul_tn(value(a), value(b))); }

  Var add_row(Var x, Var bias) {
    Tensor<T> out = value(x);
    kernels::add_row_inplace(out, value(bias));
    return binary(Op::add_row, x, bias, std::move(out));
  }

  Var add(Var a, Var b) { return elementwise2(Op::add, a, b, [](T x, T y) { return static_cast<T>(x + y); }); }
  Var sub(Var a, Var b) { return elementwise2(Op::sub, a, b, [](T x, T y) { return static_cast<T>(x - y); }); }
  Var mul(Var a, Var b) { return elementwise2(Op::mul, a, b, [](T x, T y) { return static_cast<T>(x * y); }); }
  Var minimum(Var a, Var b) {
    return elementwise2(Op::minimum, a, b, [](T x, T y) { return x <= y ? x : y; });
  }

  Var scale(Var a, double s) {
    Node n = unary_node(Op::scale, a, [s](T x) { return static_cast<T>(x * s); });
    n.aux_scalar = s;
    return push(std::move(n));
  }

  Var add_scalar(Var a, double s) {
    return push(unary_node(Op::add_scalar, a, [s](T x) { return static_cast<T>(x + s); }));
  }

  Var relu(Var a) { return push(unary_node(Op::relu, a, [](T x) { return x > T(0) ? x : T(0); })); }
  Var tanh(Var a) { return push(unary_node(Op::tanh, a, [](T x) { return static_cast<T>(std::tanh(x)); })); }
  Var sigmoid(Var a) { return push(unary_node(Op::sigmoid, a, [](T x) { return sigmoid_value(x); })); }
  Var exp(Var a) { return push(unary_node(Op::exp, a, [](T x) { return static_cast<T>(std::exp(x)); })); }
  Var log(Var a) { return push(unary_node(Op::log, a, [](T x) { return static_cast<T>(std::log(x)); })); }
  Var square(Var a) { return push(unary_node(Op::square, a, [](T x) { return static_cast<T>(x * x); })); }

  Var clamp(Var a, double lo, double hi) {
    Node n = unary_node(Op::clamp, a, [lo, hi](T x) {
      return static_cast<T>(x < lo ? lo : (x > hi ? hi : x));
    });
    n.aux_lo = lo;
    n.aux_hi = hi;
    return push(std::move(n));
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t rows = value(parts[0]).rows();
    std::size_t cols = 0;
    for (auto p : parts) {
      if (value(p).rows() != rows) throw ShapeError("concat_cols: row mismatch");
      cols += value(p).cols();
    }
    Node n;
    n.op = Op::concat_cols;
    n.value = Tensor<T>(rows, cols);
    std::size_t offset = 0;
    for (auto p : parts) {
      const auto& src = value(p);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < src.cols(); ++c) n.value(r, offset + c) = src(r, c);
      offset += src.cols();
      n.inputs.push_back(p.id);
    }
    return push(std::move(n));
  }

  Var broadcast_rows(Var v, std::size_t rows) {
    const auto& src = value(v);
    if (src.rows() != 1) throw ShapeError("broadcast_rows: expects a 1xn row, got " + src.shape_string());
    Node n;
    n.op = Op::broadcast_rows;
    n.inputs = {v.id};
    n.value = Tensor<T>(rows, src.cols());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < src.cols(); ++c) n.value(r, c) = src[c];
    return push(std::move(n));
  }

  Var mean_rows(Var x) {
    Node n;
    n.op = Op::mean_rows;
    n.inputs = {x.id};
    n.value = kernels::mean_rows(value(x));
    return push(std::move(n));
  }

  Var max_rows(Var x) {
    Node n;
    n.op = Op::max_rows;
    n.inputs = {x.id};
    n.value = kernels::max_rows(value(x), &n.indices);
    return push(std::move(n));
  }

  Var sum(Var x) {
    double acc = 0.0;
    for (auto v : value(x).data()) acc += static_cast<double>(v);
    Node n;
    n.op = Op::sum;
    n.inputs = {x.id};
    n.value = Tensor<T>(1, 1, static_cast<T>(acc));
    return push(std::move(n));
  }

  Var mean(Var x) {
    const auto count = value(x).size();
    if (count == 0) throw ShapeError("mean: empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(count));
  }

  // Softmax over an n x 1 column; entries with legal[i] == false get kMaskedLogit.
  Var masked_softmax(Var logits, const std::vector<bool>& legal) {
    const auto& x = value(logits);
    if (x.cols() != 1) throw ShapeError("masked_softmax: expects an n x 1 column");
    const auto probs = nk::masked_softmax(std::span<const T>(x.data()), legal);
    Node n;
    n.op = Op::softmax;
    n.inputs = {logits.id};
    n.mask = legal;
    n.value = Tensor<T>(x.rows(), 1);
    for (std::size_t i = 0; i < probs.size(); ++i) n.value[i] = static_cast<T>(probs[i]);
    return push(std::move(n));
  }

  Var masked_log_softmax(Var logits, const std::vector<bool>& legal) {
    const auto& x = value(logits);
    if (x.cols() != 1) throw ShapeError("masked_log_softmax: expects an n x 1 column");
    const auto logp = nk::masked_log_softmax(std::span<const T>(x.data()), legal);
    Node n;
    n.op = Op::log_softmax;
    n.inputs = {logits.id};
    n.mask = legal;
    n.value = Tensor<T>(x.rows(), 1);
    n.aux_probs.resize(logp.size());
    for (std::size_t i = 0; i < logp.size(); ++i) {
      n.value[i] = static_cast<T>(logp[i]);
      n.aux_probs[i] = legal[i] ? std::exp(logp[i]) : 0.0;
    }
    return push(std::move(n));
  }

  Var pick(Var x, std::size_t row, std::size_t col = 0) {
    const auto& src = value(x);
    if (row >= src.rows() || col >= src.cols()) throw ShapeError("pick: index out of range");
    Node n;
    n.op = Op::pick;
    n.inputs = {x.id};
    n.indices = {row, col};
    n.value = Tensor<T>(1, 1, src(row, col));
    return push(std::move(n));
  }

  // Binary cross-entropy against a fixed label, from a logit: softplus(z) - y*z.
  Var bce_with_logit(Var logit, double label) {
    const auto& z = value(logit);
    if (z.size() != 1) throw ShapeError("bce_with_logit: expects a scalar logit");
    const double zv = static_cast<double>(z[0]);
    const double softplus = zv > 0 ? zv + std::log1p(std::exp(-zv)) : std::log1p(std::exp(zv));
    Node n;
    n.op = Op::bce_logit;
    n.inputs = {logit.id};
    n.aux_scalar = label;
    n.value = Tensor<T>(1, 1, static_cast<T>(softplus - label * zv));
    return push(std::move(n));
  }

  Gradients<T> backward(Var out, const Tensor<T>& seed) {
    Gradients<T> g;
    backward_into(out, seed, g);
    return g;
  }

  // Accumulates d(seed . out)/d(param) into `acc`.
  void backward_into(Var out, const Tensor<T>& seed, Gradients<T>& acc) {
    if (consumed_) throw StaleTapeError("backward: tape was already replayed");
    consumed_ = true;
    require_same_shape(value(out).shape(), seed.shape(), "backward seed");
    std::vector<Tensor<T>> grads(nodes_.size());
    grads[out.id] = seed;
    for (std::size_t k = out.id + 1; k-- > 0;) {
      if (grads[k].size() == 0) continue;
      Node& n = nodes_[k];
      if (n.op == Op::leaf) {
        if (n.slot != kNoSlot) {
          const auto& v = value(Var{k});
          acc.ensure(n.slot, v.rows(), v.cols());
          auto& dst = acc.slots[n.slot];
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(dst[i] + grads[k][i]);
        }
        continue;
      }
      propagate(k, grads);
      grads[k] = Tensor<T>();
    }
  }

 private:
  enum class Op {
    leaf, matmul, matmul_tn, add_row, add, sub, mul, minimum, scale, add_scalar, relu, tanh,
    sigmoid, exp, log, square, clamp, concat_cols, broadcast_rows, mean_rows, max_rows, sum,
    softmax, log_softmax, pick, bce_logit
  };

  struct Node {
    Op op = Op::leaf;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    std::size_t slot = kNoSlot;
    bool needs_grad = false;
    std::vector<std::size_t> indices;
    std::vector<bool> mask;
    std::vector<double> aux_probs;
    double aux_scalar = 0.0;
    double aux_lo = 0.0;
    double aux_hi = 0.0;
  };

  static T sigmoid_value(T x) {
    const double v = static_cast<double>(x);
    return static_cast<T>(v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)));
  }

  Var push(Node n, bool check = true) {
    if (consumed_) throw StaleTapeError("tape was already replayed; record a new forward pass");
    if (n.op == Op::leaf) {
      n.needs_grad = n.slot != kNoSlot;
    } else {
      for (auto i : n.inputs) n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
    }
    if (check && !n.value.all_finite()) {
      throw NumericError("non-finite value produced by tape op #" + std::to_string(nodes_.size()));
    }
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Var binary(Op op, Var a, Var b, Tensor<T> out) {
    Node n;
    n.op = op;
    n.inputs = {a.id, b.id};
    n.value = std::move(out);
    return push(std::move(n));
  }

  template <class F>
  Var elementwise2(Op op, Var a, Var b, F f) {
    const auto& x = value(a);
    const auto& y = value(b);
    require_same_shape(x.shape(), y.shape(), "elementwise");
    Tensor<T> out(x.rows(), x.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
    return binary(op, a, b, std::move(out));
  }

  template <class F>
  Node unary_node(Op op, Var a, F f) {
    const auto& x = value(a);
    Node n;
    n.op = op;
    n.inputs = {a.id};
    n.value = Tensor<T>(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = f(x[i]);
    return n;
  }

  void accumulate(std::vector<Tensor<T>>& grads, std::size_t id, const Tensor<T>& g) {
    if (!nodes_[id].needs_grad) return;
    auto& dst = grads[id];
    if (dst.size() == 0) {
      dst = g;
      return;
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(dst[i] + g[i]);
  }

  void propagate(std::size_t k, std::vector<Tensor<T>>& grads) {
    const Node& n = nodes_[k];
    const Tensor<T>& g = grads[k];
    const Tensor<T>& y = n.value;
    auto in = [&](std::size_t i) -> const Tensor<T>& { return value(Var{n.inputs[i]}); };
    auto needs = [&](std::size_t i) { return nodes_[n.inputs[i]].needs_grad; };
    auto map1 = [&](auto f) {
      const auto& x = in(0);
      Tensor<T> d(x.rows(), x.cols());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(f(i, x[i]));
      accumulate(grads, n.inputs[0], d);
    };

    switch (n.op) {
      case Op::leaf:
        break;
      case Op::matmul:
        if (needs(0)) accumulate(grads, n.inputs[0], kernels::matmul_nt(g, in(1)));
        if (needs(1)) accumulate(grads, n.inputs[1], kernels::matmul_tn(in(0), g));
        break;
      case Op::matmul_tn:
        // C = A^T B: dA = B dC^T, dB = A dC
        if (needs(0)) accumulate(grads, n.inputs[0], kernels::matmul_nt(in(1), g));
        if (needs(1)) accumulate(grads, n.inputs[1], kernels::matmul(in(0), g));
        break;
      case Op::add_row: {
        if (needs(0)) accumulate(grads, n.inputs[0], g);
        if (needs(1)) accumulate(grads, n.inputs[1], column_sums(g));
        break;
      }
      case Op::add:
        if (needs(0)) accumulate(grads, n.inputs[0], g);
        if (needs(1)) accumulate(grads, n.inputs[1], g);
        break;
      case Op::sub:
        if (needs(0)) accumulate(grads, n.inputs[0], g);
        if (needs(1)) {
          Tensor<T> d = g;
          for (auto& v : d.data()) v = -v;
          accumulate(grads, n.inputs[1], d);
        }
        break;
      case Op::mul: {
        const auto& a = in(0);
        const auto& b = in(1);
        if (needs(0)) {
          Tensor<T> d(a.rows(), a.cols());
          for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(g[i] * b[i]);
          accumulate(grads, n.inputs[0], d);
        }
        if (needs(1)) {
          Tensor<T> d(b.rows(), b.cols());
          for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(g[i] * a[i]);
          accumulate(grads, n.inputs[1], d);
        }
        break;
      }
      case Op::minimum: {
        const auto& a = in(0);
        const auto& b = in(1);
        Tensor<T> da(a.rows(), a.cols()), db(b.rows(), b.cols());
        for (std::size_t i = 0; i < a.size(); ++i) {
          if (a[i] <= b[i]) {
            da[i] = g[i];
          } else {
            db[i] = g[i];
          }
        }
        if (needs(0)) accumulate(grads, n.inputs[0], da);
        if (needs(1)) accumulate(grads, n.inputs[1], db);
        break;
      }
      case Op::scale:
        map1([&](std::size_t i, T) { return g[i] * n.aux_scalar; });
        break;
      case Op::add_scalar:
        accumulate(grads, n.inputs[0], g);
        break;
      case Op::relu:
        map1([&](std::size_t i, T x) { return x > T(0) ? g[i] : T(0); });
        break;
      case Op::tanh:
        map1([&](std::size_t i, T) { return g[i] * (T(1) - y[i] * y[i]); });
        break;
      case Op::sigmoid:
        map1([&](std::size_t i, T) { return g[i] * y[i] * (T(1) - y[i]); });
        break;
      case Op::exp:
        map1([&](std::size_t i, T) { return g[i] * y[i]; });
        break;
      case Op::log:
        map1([&](std::size_t i, T x) { return g[i] / x; });
        break;
      case Op::square:
        map1([&](std::size_t i, T x) { return g[i] * T(2) * x; });
        break;
      case Op::clamp:
        map1([&](std::size_t i, T x) {
          return (x < n.aux_lo || x > n.aux_hi) ? T(0) : g[i];
        });
        break;
      case Op::concat_cols: {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < n.inputs.size(); ++p) {
          const auto& src = in(p);
          if (nodes_[n.inputs[p]].needs_grad) {
            Tensor<T> d(src.rows(), src.cols());
            for (std::size_t r = 0; r < src.rows(); ++r)
              for (std::size_t c = 0; c < src.cols(); ++c) d(r, c) = g(r, offset + c);
            accumulate(grads, n.inputs[p], d);
          }
          offset += src.cols();
        }
        break;
      }
      case Op::broadcast_rows:
        accumulate(grads, n.inputs[0], column_sums(g));
        break;
      case Op::mean_rows: {
        const auto& x = in(0);
        Tensor<T> d(x.rows(), x.cols());
        const double inv = x.rows() ? 1.0 / static_cast<double>(x.rows()) : 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r)
          for (std::size_t c = 0; c < x.cols(); ++c) d(r, c) = static_cast<T>(g[c] * inv);
        accumulate(grads, n.inputs[0], d);
        break;
      }
      case Op::max_rows: {
        const auto& x = in(0);
        Tensor<T> d(x.rows(), x.cols());
        for (std::size_t c = 0; c < x.cols(); ++c) d(n.indices[c], c) = g[c];
        accumulate(grads, n.inputs[0], d);
        break;
      }
      case Op::sum:
        map1([&](std::size_t, T) { return g[0]; });
        break;
      case Op::softmax: {
        double dot = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) dot += static_cast<double>(g[i]) * static_cast<double>(y[i]);
        map1([&](std::size_t i, T) {
          return n.mask[i] ? static_cast<double>(y[i]) * (static_cast<double>(g[i]) - dot) : 0.0;
        });
        break;
      }
      case Op::log_softmax: {
        double total = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) total += static_cast<double>(g[i]);
        map1([&](std::size_t i, T) {
          return n.mask[i] ? static_cast<double>(g[i]) - n.aux_probs[i] * total : 0.0;
        });
        break;
      }
      case Op::pick: {
        const auto& x = in(0);
        Tensor<T> d(x.rows(), x.cols());
        d(n.indices[0], n.indices[1]) = g[0];
        accumulate(grads, n.inputs[0], d);
        break;
      }
      case Op::bce_logit:
        map1([&](std::size_t, T z) {
          return g[0] * (static_cast<double>(sigmoid_value(z)) - n.aux_scalar);
        });
        break;
    }
  }

  static Tensor<T> column_sums(const Tensor<T>& g) {
    Tensor<T> out(1, g.cols());
    std::vector<double> acc(g.cols(), 0.0);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) acc[c] += static_cast<double>(g(r, c));
    for (std::size_t c = 0; c < g.cols(); ++c) out[c] = static_cast<T>(acc[c]);
    return out;
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace rlogist::nk
