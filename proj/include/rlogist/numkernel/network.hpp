#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rlogist/errors.hpp"
#include "rlogist/numkernel/random.hpp"
#include "rlogist/numkernel/tape.hpp"
#include "rlogist/numkernel/tensor.hpp"

namespace rlogist::nk {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
};

// Ordered, named parameter collection. Order defines gradient slots.
template <class T>
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor<T> value) {
    params_.push_back({std::move(name), std::move(value)});
    return params_.size() - 1;
  }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  const Parameter<T>* find(std::string_view name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<U>());
    return out;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.params_.size() != b.params_.size()) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
      if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value)) return false;
    }
    return true;
  }

 private:
  std::vector<Parameter<T>> params_;
};

enum class Activation { identity, relu, tanh, sigmoid };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  throw InvalidSpecError("unknown activation '" + std::string(s) + "'");
}

struct LayerSpec {
  std::size_t input_width = 0;
  std::size_t output_width = 0;
  Activation activation = Activation::identity;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Glorot-uniform weights, zero biases.
template <class T>
Tensor<T> glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng, double gain = 1.0) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> w(fan_in, fan_out);
  for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-limit, limit));
  return w;
}

template <class T>
Tensor<T> apply_activation(Tensor<T> x, Activation act) {
  switch (act) {
    case Activation::identity:
      break;
    case Activation::relu:
      for (auto& v : x.data()) v = v > T(0) ? v : T(0);
      break;
    case Activation::tanh:
      for (auto& v : x.data()) v = static_cast<T>(std::tanh(v));
      break;
    case Activation::sigmoid:
      for (auto& v : x.data()) {
        const double d = static_cast<double>(v);
        v = static_cast<T>(d >= 0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d)));
      }
      break;
  }
  return x;
}

template <class T>
Var record_activation(Tape<T>& tape, Var x, Activation act) {
  switch (act) {
    case Activation::identity: return x;
    case Activation::relu: return tape.relu(x);
    case Activation::tanh: return tape.tanh(x);
    case Activation::sigmoid: return tape.sigmoid(x);
  }
  return x;
}

// Fully connected stack. Parameters are stored as W0, b0, W1, b1, ...
template <class T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<LayerSpec> spec, ParamSet<T> params) : spec_(std::move(spec)), params_(std::move(params)) {}

  const std::vector<LayerSpec>& spec() const noexcept { return spec_; }
  ParamSet<T>& params() noexcept { return params_; }
  const ParamSet<T>& params() const noexcept { return params_; }
  std::size_t input_width() const { return spec_.front().input_width; }
  std::size_t output_width() const { return spec_.back().output_width; }

  Tensor<T> operator()(const Tensor<T>& x) const {
    check_input(x);
    Tensor<T> h = x;
    for (std::size_t l = 0; l < spec_.size(); ++l) {
      h = kernels::matmul(h, params_[2 * l].value);
      kernels::add_row_inplace(h, params_[2 * l + 1].value);
      h = apply_activation(std::move(h), spec_[l].activation);
    }
    if (!h.all_finite()) throw NumericError("mlp forward produced a non-finite value");
    return h;
  }

  // Records the forward pass; parameter k receives gradient slot `slot_base + k`.
  Var record(Tape<T>& tape, Var x, std::size_t slot_base) const {
    check_input(tape.value(x));
    Var h = x;
    for (std::size_t l = 0; l < spec_.size(); ++l) {
      Var w = tape.parameter(params_[2 * l].value, slot_base + 2 * l);
      Var b = tape.parameter(params_[2 * l + 1].value, slot_base + 2 * l + 1);
      h = record_activation(tape, tape.add_row(tape.matmul(h, w), b), spec_[l].activation);
    }
    return h;
  }

  template <class U>
  Mlp<U> cast() const {
    return Mlp<U>(spec_, params_.template cast<U>());
  }

  friend bool operator==(const Mlp& a, const Mlp& b) { return a.spec_ == b.spec_ && a.params_ == b.params_; }

 private:
  void check_input(const Tensor<T>& x) const {
    if (spec_.empty()) throw InvalidSpecError("mlp has no layers");
    if (x.cols() != spec_.front().input_width) {
      throw ShapeError("mlp input width " + std::to_string(x.cols()) + ", expected " +
                       std::to_string(spec_.front().input_width));
    }
    if (!x.all_finite()) throw NumericError("mlp input contains a non-finite value");
  }

  std::vector<LayerSpec> spec_;
  ParamSet<T> params_;
};

inline void validate_layer_spec(const std::vector<LayerSpec>& spec) {
  if (spec.empty()) throw InvalidSpecError("layer spec is empty");
  for (std::size_t l = 0; l < spec.size(); ++l) {
    if (spec[l].input_width == 0 || spec[l].output_width == 0) {
      throw InvalidSpecError("layer " + std::to_string(l) + " has a zero width");
    }
    if (l > 0 && spec[l].input_width != spec[l - 1].output_width) {
      throw InvalidSpecError("layer " + std::to_string(l) + " input width does not chain");
    }
  }
}

template <class T = float>
Mlp<T> build_network(const std::vector<LayerSpec>& spec, std::uint64_t seed, std::string_view prefix = "") {
  validate_layer_spec(spec);
  Rng rng(seed);
  ParamSet<T> params;
  for (std::size_t l = 0; l < spec.size(); ++l) {
    const std::string idx = std::to_string(l);
    params.add(std::string(prefix) + "W" + idx, glorot_uniform<T>(spec[l].input_width, spec[l].output_width, rng));
    params.add(std::string(prefix) + "b" + idx, Tensor<T>(1, spec[l].output_width));
  }
  return Mlp<T>(spec, std::move(params));
}

// Zeroes (or rescales) the final layer; used for heads that must start as a no-op.
template <class T>
void scale_last_layer(Mlp<T>& mlp, double factor) {
  auto& p = mlp.params();
  const std::size_t last = p.size() - 2;
  for (auto& v : p[last].value.data()) v = static_cast<T>(v * factor);
  for (auto& v : p[last + 1].value.data()) v = static_cast<T>(v * factor);
}

template <class T>
struct ForwardPass {
  Tensor<T> output;
  std::optional<Tape<T>> tape;
  Var output_var;
};

template <class T>
ForwardPass<T> forward(const Mlp<T>& net, const Tensor<T>& input, bool record) {
  if (!record) return {net(input), std::nullopt, Var{}};
  ForwardPass<T> pass;
  pass.tape.emplace();
  Var x = pass.tape->constant(input);
  pass.output_var = net.record(*pass.tape, x, 0);
  pass.output = pass.tape->value(pass.output_var);
  return pass;
}

template <class T>
Gradients<T> backward(ForwardPass<T>& pass, const Tensor<T>& output_gradient) {
  if (!pass.tape) throw StaleTapeError("backward: forward pass was not recorded");
  return pass.tape->backward(pass.output_var, output_gradient);
}

}  // namespace rlogist::nk
