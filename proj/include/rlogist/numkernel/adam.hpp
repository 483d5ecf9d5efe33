#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rlogist/errors.hpp"
#include "rlogist/numkernel/network.hpp"
#include "rlogist/numkernel/tape.hpp"

namespace rlogist::nk {

template <class T>
struct AdamState {
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 2.5e-4;
  double epsilon = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
};

// Parameters are passed as pointers so several networks can share one optimizer.
template <class T>
using ParamRefs = std::vector<Parameter<T>*>;

template <class T>
ParamRefs<T> refs(ParamSet<T>& set) {
  ParamRefs<T> out;
  for (auto& p : set) out.push_back(&p);
  return out;
}

template <class T>
AdamState<T> make_adam(const ParamRefs<T>& params, double learning_rate, double epsilon = 1e-5) {
  AdamState<T> s;
  s.learning_rate = learning_rate;
  s.epsilon = epsilon;
  for (const auto* p : params) {
    s.first_moment.emplace_back(p->value.rows(), p->value.cols());
    s.second_moment.emplace_back(p->value.rows(), p->value.cols());
  }
  return s;
}

// Learning rate after a fraction `progress` of the schedule, decaying linearly to zero.
inline double linear_annealed_lr(double base_lr, double progress) {
  if (progress <= 0.0) return base_lr;
  if (progress >= 1.0) return 0.0;
  return base_lr * (1.0 - progress);
}

// Scales gradients so their global L2 norm is at most max_norm. Returns the pre-clip norm.
template <class T>
double clip_global_norm(Gradients<T>& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) grads.scale(max_norm / (norm + 1e-6));
  return norm;
}

template <class T>
void adam_step(const ParamRefs<T>& params, const Gradients<T>& grads, AdamState<T>& state) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (k < grads.slots.size() && grads.slots[k].size() != 0) {
      require_same_shape(grads.slots[k].shape(), params[k]->value.shape(), "adam_step gradient");
      if (!grads.slots[k].all_finite()) {
        throw NumericError("adam_step: non-finite gradient for parameter '" + params[k]->name + "'");
      }
    }
    require_same_shape(state.first_moment[k].shape(), params[k]->value.shape(), "adam_step moment");
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const bool has_grad = k < grads.slots.size() && grads.slots[k].size() != 0;
    auto& w = params[k]->value;
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has_grad ? static_cast<double>(grads.slots[k][i]) : 0.0;
      const double mi = state.beta1 * static_cast<double>(m[i]) + (1.0 - state.beta1) * g;
      const double vi = state.beta2 * static_cast<double>(v[i]) + (1.0 - state.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = state.learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + state.epsilon);
      w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
    }
  }
}

}  // namespace rlogist::nk
