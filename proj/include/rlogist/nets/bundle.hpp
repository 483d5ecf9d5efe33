#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlogist/envmdp/env.hpp"
#include "rlogist/nets/arch.hpp"
#include "rlogist/nets/layers.hpp"
#include "rlogist/nets/views.hpp"
#include "rlogist/numkernel/adam.hpp"
#include "rlogist/numkernel/network.hpp"

namespace rlogist::nets {

// Policy, value, classifier and the two feature updaters.
template <class T>
struct NetworkBundle {
  NetArch arch;
  nk::Mlp<T> policy;
  nk::Mlp<T> value;
  GatedAttentionClassifier<T> classifier;
  LocalUpdater<T> local;
  GlobalUpdater<T> global;

  nk::ParamRefs<T> policy_refs() { return nk::refs(policy.params()); }
  nk::ParamRefs<T> value_refs() { return nk::refs(value.params()); }
  nk::ParamRefs<T> classifier_refs() { return nk::refs(classifier.params()); }
  nk::ParamRefs<T> local_refs() { return nk::refs(local.params()); }
  nk::ParamRefs<T> global_refs() { return nk::refs(global.params()); }

  // Fixed order used by checkpoints.
  nk::ParamRefs<T> all_refs() {
    nk::ParamRefs<T> out;
    for (auto* set : {&policy.params(), &value.params(), &classifier.params(), &local.params(), &global.params()})
      for (auto& p : *set) out.push_back(&p);
    return out;
  }

  template <class U>
  NetworkBundle<U> cast() const {
    return {arch, policy.template cast<U>(), value.template cast<U>(), classifier.template cast<U>(),
            local.template cast<U>(), global.template cast<U>()};
  }

  friend bool operator==(const NetworkBundle& a, const NetworkBundle& b) {
    return a.arch == b.arch && a.policy == b.policy && a.value == b.value && a.classifier == b.classifier &&
           a.local == b.local && a.global == b.global;
  }
};

template <class T = float>
NetworkBundle<T> make_network_bundle(const NetArch& arch, std::uint64_t seed) {
  arch.validate();
  using nk::Activation;
  const std::size_t d = arch.dim;
  NetworkBundle<T> nets;
  nets.arch = arch;
  nets.policy = nk::build_network<T>(
      {{arch.policy_input(), arch.policy_hidden, Activation::relu}, {arch.policy_hidden, 1, Activation::identity}},
      nk::derive_seed(seed, {1}), "pol.");
  nk::scale_last_layer(nets.policy, arch.policy_output_scale);
  nets.value = nk::build_network<T>(
      {{arch.value_input(), arch.value_hidden, Activation::relu}, {arch.value_hidden, 1, Activation::identity}},
      nk::derive_seed(seed, {2}), "val.");
  nk::scale_last_layer(nets.value, 0.0);
  nets.classifier = GatedAttentionClassifier<T>::init(arch.classifier_input(), arch.classifier_hidden,
                                                      arch.classifier_gate, nk::derive_seed(seed, {3}));
  nets.local = LocalUpdater<T>::init(d, arch.local_hidden, nk::derive_seed(seed, {4}));
  nets.global = GlobalUpdater<T>::init(d, arch.global_hidden, nk::derive_seed(seed, {5}));
  return nets;
}

// Inference helpers on environment states.

inline nk::Tensor<float> policy_logits(const NetworkBundle<float>& nets, const envmdp::EnvState& s) {
  return nets.policy(policy_view<float>(s.current_scan, s.observed, s.progress()));
}

inline double value_estimate(const NetworkBundle<float>& nets, const envmdp::EnvState& s) {
  return static_cast<double>(nets.value(value_view<float>(s.current_scan, s.progress()))[0]);
}

inline double classify_logit(const NetworkBundle<float>& nets, const nk::Tensor<float>& scan,
                             const std::vector<bool>& observed, bool sees_all) {
  return nets.classifier.logit(classifier_view<float>(scan, observed), attention_mask(observed, sees_all));
}

inline double classify_slide(const NetworkBundle<float>& nets, const envmdp::EnvState& s, bool sees_all = true) {
  return envmdp::sigmoid(classify_logit(nets, s.current_scan, s.observed, sees_all));
}

enum class UpdaterVariant { fixed, local_only, local_and_global };

inline std::string to_string(UpdaterVariant v) {
  switch (v) {
    case UpdaterVariant::fixed: return "fixed";
    case UpdaterVariant::local_only: return "local_only";
    case UpdaterVariant::local_and_global: return "local_and_global";
  }
  return "fixed";
}

inline UpdaterVariant variant_from_string(const std::string& s) {
  if (s == "fixed") return UpdaterVariant::fixed;
  if (s == "local_only") return UpdaterVariant::local_only;
  if (s == "local_and_global") return UpdaterVariant::local_and_global;
  throw ConfigError("unknown updater variant '" + s + "'");
}

// Environment dynamics backed by a network bundle.
//   fixed:            observed row <- raw sub-feature mean, others untouched
//   local_only:       observed row <- f_local, others untouched
//   local_and_global: observed row <- f_local, unobserved rows <- f_global
class NetDynamics : public envmdp::Dynamics {
 public:
  NetDynamics(const NetworkBundle<float>& nets, UpdaterVariant variant) : nets_(&nets), variant_(variant) {}

  std::vector<float> local_update(const nk::Tensor<float>& sub) const override {
    if (variant_ == UpdaterVariant::fixed) {
      const auto m = nk::kernels::mean_rows(sub);
      return {m.data().begin(), m.data().end()};
    }
    return nets_->local(sub);
  }

  void global_update(nk::Tensor<float>& scan, std::span<const std::size_t> rows, std::span<const float> v_a,
                     std::span<const float> v_a_new) const override {
    if (variant_ == UpdaterVariant::local_and_global) nets_->global.apply(scan, rows, v_a, v_a_new);
  }

  bool global_is_identity() const override { return variant_ != UpdaterVariant::local_and_global; }

  double classify_logit(const envmdp::EnvState& s, bool sees_all) const override {
    return nets::classify_logit(*nets_, s.current_scan, s.observed, sees_all);
  }

  UpdaterVariant variant() const { return variant_; }

 private:
  const NetworkBundle<float>* nets_;
  UpdaterVariant variant_;
};

}  // namespace rlogist::nets
