#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <tuple>
#include <utility>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "rlogist/envmdp/env.hpp"
#include "rlogist/errors.hpp"
#include "rlogist/eval/auc.hpp"
#include "rlogist/nets/bundle.hpp"
#include "rlogist/numkernel/adam.hpp"
#include "rlogist/slidegen/bundle.hpp"

namespace rlogist::nets {

using slidegen::SlideBundle;

struct ClassifierPretrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  // L2 penalty coefficient added to the gradient of every weight matrix.
  double weight_decay = 0.1;
  // Every k-th training slide is held back; the epoch with the lowest validation loss is kept.
  // Zero or one disables selection.
  std::size_t validation_stride = 0;
  // Refit the output layer's scale and offset on the training slides after training. Strong
  // weight decay keeps the ranking but shrinks logits towards zero.
  bool platt_scaling = true;
  std::uint64_t seed = 1;

  NLOHMANN_DEFINE_TYPE_INTRUSIVE_WITH_DEFAULT(ClassifierPretrainConfig, epochs, batch_size, learning_rate, weight_decay,
                                              validation_stride, platt_scaling, seed)
};

struct ClassifierPretrainReport {
  std::vector<double> epoch_losses;
  std::vector<double> epoch_validation_losses;
  std::size_t selected_epoch = 0;
  double platt_scale = 1.0;
  double platt_offset = 0.0;
  double heldout_auc = 0.0;
  double heldout_loss = 0.0;

  NLOHMANN_DEFINE_TYPE_INTRUSIVE_WITH_DEFAULT(ClassifierPretrainReport, epoch_losses, epoch_validation_losses,
                                              selected_epoch, platt_scale, platt_offset, heldout_auc, heldout_loss)
};

struct UpdaterPretrainConfig {
  std::size_t local_steps = 300;
  std::size_t local_batch = 32;
  double local_learning_rate = 1e-3;
  // f_global is trained along random observation paths: each step's unobserved rows form a
  // minibatch, then the state advances with the current f_global. When false every minibatch
  // is drawn from a fresh, never-updated state.
  bool recursive = true;
  std::size_t global_episodes = 600;
  double global_learning_rate = 1e-3;
  double rollout_budget = 0.5;
  std::uint64_t seed = 1;

  NLOHMANN_DEFINE_TYPE_INTRUSIVE_WITH_DEFAULT(UpdaterPretrainConfig, local_steps, local_batch, local_learning_rate,
                                              recursive, global_episodes, global_learning_rate, rollout_budget, seed)
};

struct UpdaterPretrainReport {
  std::vector<double> local_losses;  // per 50 steps
  double local_heldout_relative_l2 = 0.0;
  std::vector<double> global_losses;  // per 50 episodes
  // Held-out, freshly reset states: MSE of f_global output and of v_i itself against f_local(subs_i).
  double global_pair_mse = 0.0;
  double identity_pair_mse = 0.0;
  // Same comparison after random observation paths of length ceil(rollout_budget * N).
  double global_rollout_mse = 0.0;
  double identity_rollout_mse = 0.0;

  double pair_improvement() const { return identity_pair_mse > 0 ? 1.0 - global_pair_mse / identity_pair_mse : 0.0; }

  NLOHMANN_DEFINE_TYPE_INTRUSIVE_WITH_DEFAULT(UpdaterPretrainReport, local_losses, local_heldout_relative_l2,
                                              global_losses, global_pair_mse, identity_pair_mse, global_rollout_mse,
                                              identity_rollout_mse)
};

namespace detail {

inline void require_both_labels(const std::vector<SlideBundle>& slides) {
  std::size_t pos = 0;
  for (const auto& b : slides) pos += b.label;
  if (pos == 0 || pos == slides.size()) throw DegenerateLabelsError("training slides contain a single class");
}

}  // namespace detail

// grads += decay * W for matrix-shaped parameters (biases and vectors are left alone).
inline void add_weight_decay(const nk::ParamRefs<float>& params, nk::Gradients<float>& grads, double decay) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& w = params[k]->value;
    if (w.rows() < 2 || w.cols() < 2) continue;
    grads.ensure(k, w.rows(), w.cols());
    auto& g = grads.slots[k];
    for (std::size_t i = 0; i < w.size(); ++i) g[i] = static_cast<float>(g[i] + decay * w[i]);
  }
}

// Scale a and offset c minimising the cross-entropy of sigmoid(a z + c), by Newton's method.
inline std::pair<double, double> fit_platt(const std::vector<double>& z, const std::vector<int>& y) {
  double a = 1.0, c = 0.0;
  for (int it = 0; it < 50; ++it) {
    double ga = 0, gc = 0, haa = 1e-9, hac = 0, hcc = 1e-9;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double p = envmdp::sigmoid(a * z[i] + c), r = p - y[i], w = p * (1 - p);
      ga += r * z[i];
      gc += r;
      haa += w * z[i] * z[i];
      hac += w * z[i];
      hcc += w;
    }
    const double det = haa * hcc - hac * hac;
    if (!(std::abs(det) > 1e-300)) break;
    const double da = (hcc * ga - hac * gc) / det, dc = (haa * gc - hac * ga) / det;
    a -= da;
    c -= dc;
    if (std::abs(da) + std::abs(dc) < 1e-12) break;
  }
  if (!std::isfinite(a) || !std::isfinite(c) || a <= 0.0) return {1.0, 0.0};
  return {a, c};
}

// Mean cross-entropy and AUC of the classifier on unobserved slides.
inline std::pair<double, double> classifier_loss_auc(const NetworkBundle<float>& nets,
                                                     const std::vector<const SlideBundle*>& slides) {
  double loss = 0.0;
  std::vector<eval::ScoredLabel> scores;
  for (const auto* b : slides) {
    const double z = classify_logit(nets, b->scan_features, std::vector<bool>(b->n_regions, false), true);
    scores.push_back({z, b->label});
    loss += envmdp::cross_entropy_from_logit(z, b->label) / static_cast<double>(slides.size());
  }
  return {loss, eval::compute_auc(scores)};
}

// Cold-start classifier: trained on raw scan features with nothing observed.
inline ClassifierPretrainReport pretrain_classifier(NetworkBundle<float>& nets, const std::vector<SlideBundle>& train,
                                                    const std::vector<SlideBundle>& heldout,
                                                    const ClassifierPretrainConfig& config) {
  if (train.empty()) throw NoDataError("no training slides");
  detail::require_both_labels(train);
  std::vector<const SlideBundle*> fit, validation;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const bool hold = config.validation_stride > 1 && i % config.validation_stride == config.validation_stride - 1;
    (hold ? validation : fit).push_back(&train[i]);
  }
  const auto positives = [](const std::vector<const SlideBundle*>& v) {
    std::size_t n = 0;
    for (const auto* b : v) n += b->label;
    return n;
  };
  if (!validation.empty() && (positives(validation) == 0 || positives(validation) == validation.size())) {
    validation.clear();
    fit.clear();
    for (const auto& b : train) fit.push_back(&b);
  }

  auto params = nets.classifier_refs();
  auto adam = nk::make_adam(params, config.learning_rate);
  nk::Rng rng(nk::derive_seed(config.seed, {0xc1a5}));

  std::vector<nk::Tensor<float>> views;
  for (const auto* b : fit) views.push_back(classifier_view<float>(b->scan_features, std::vector<bool>(b->n_regions, false)));

  ClassifierPretrainReport report;
  auto best = nets.classifier;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(fit.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      nk::Gradients<float> grads;
      const float weight = 1.0f / static_cast<float>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const auto* b = fit[order[k]];
        nk::Tape<float> tape;
        const auto rec = nets.classifier.record(tape, tape.constant(views[order[k]]), std::vector<bool>(b->n_regions, true), 0);
        const auto loss = tape.bce_with_logit(rec.logit, b->label);
        epoch_loss += tape.scalar(loss);
        tape.backward_into(loss, nk::Tensor<float>(1, 1, weight), grads);
      }
      if (config.weight_decay > 0.0) add_weight_decay(params, grads, config.weight_decay);
      nk::adam_step(params, grads, adam);
    }
    report.epoch_losses.push_back(epoch_loss / static_cast<double>(fit.size()));
    if (!validation.empty()) {
      const double vloss = classifier_loss_auc(nets, validation).first;
      report.epoch_validation_losses.push_back(vloss);
      if (vloss < best_loss) {
        best_loss = vloss;
        best = nets.classifier;
        report.selected_epoch = epoch + 1;
      }
    }
  }
  if (!validation.empty()) {
    nets.classifier = best;
  } else {
    report.selected_epoch = config.epochs;
  }

  if (config.platt_scaling) {
    std::vector<double> z;
    std::vector<int> y;
    for (const auto* b : fit) {
      z.push_back(classify_logit(nets, b->scan_features, std::vector<bool>(b->n_regions, false), true));
      y.push_back(b->label);
    }
    std::tie(report.platt_scale, report.platt_offset) = fit_platt(z, y);
    auto& wo = nets.classifier.params()[7].value;
    auto& bo = nets.classifier.params()[8].value;
    for (auto& w : wo.data()) w = static_cast<float>(w * report.platt_scale);
    bo[0] = static_cast<float>(bo[0] * report.platt_scale + report.platt_offset);
    nets.classifier.balance_scale();
  }

  if (!heldout.empty()) {
    std::vector<const SlideBundle*> h;
    for (const auto& b : heldout) h.push_back(&b);
    std::tie(report.heldout_loss, report.heldout_auc) = classifier_loss_auc(nets, h);
  }
  return report;
}

// f_local(subs_i) for every region of a slide.
inline nk::Tensor<float> local_targets(const NetworkBundle<float>& nets, const SlideBundle& b) {
  nk::Tensor<float> out(b.n_regions, b.dim);
  for (std::size_t i = 0; i < b.n_regions; ++i) {
    const auto v = nets.local(b.region_sub_tensor(i));
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

// Phase 1 regresses f_local onto the plain sub-feature mean and freezes it. Phase 2 fits
// f_global so f_global(v_i, v_a, f_local(subs_a)) approximates f_local(subs_i).
inline UpdaterPretrainReport pretrain_updaters(NetworkBundle<float>& nets, const std::vector<SlideBundle>& train,
                                               const std::vector<SlideBundle>& heldout,
                                               const UpdaterPretrainConfig& config) {
  if (train.empty()) throw NoDataError("no training slides");
  UpdaterPretrainReport report;

  // Phase 1.
  {
    auto params = nets.local_refs();
    auto adam = nk::make_adam(params, config.local_learning_rate);
    nk::Rng rng(nk::derive_seed(config.seed, {0x10ca1}));
    double window = 0.0;
    for (std::size_t step = 0; step < config.local_steps; ++step) {
      nk::Gradients<float> grads;
      const float weight = 1.0f / static_cast<float>(config.local_batch);
      for (std::size_t k = 0; k < config.local_batch; ++k) {
        const auto& b = train[rng.uniform_index(train.size())];
        const auto region = rng.uniform_index(b.n_regions);
        const auto sub = b.region_sub_tensor(region);
        nk::Tape<float> tape;
        const auto out = nets.local.record(tape, tape.constant(sub), 0);
        const auto target = tape.constant(nk::kernels::mean_rows(sub));
        const auto loss = tape.mean(tape.square(tape.sub(out, target)));
        window += tape.scalar(loss) / static_cast<double>(config.local_batch);
        tape.backward_into(loss, nk::Tensor<float>(1, 1, weight), grads);
      }
      nk::adam_step(params, grads, adam);
      if ((step + 1) % 50 == 0) {
        report.local_losses.push_back(window / 50.0);
        window = 0.0;
      }
    }
    double err = 0.0, norm = 0.0;
    for (const auto& b : heldout.empty() ? train : heldout) {
      for (std::size_t i = 0; i < b.n_regions; ++i) {
        const auto out = nets.local(b.region_sub_tensor(i));
        const auto mean = b.region_mean(i);
        for (std::size_t c = 0; c < b.dim; ++c) {
          err += (out[c] - mean[c]) * (out[c] - mean[c]);
          norm += static_cast<double>(mean[c]) * mean[c];
        }
      }
    }
    report.local_heldout_relative_l2 = norm > 0 ? std::sqrt(err / norm) : std::sqrt(err);
  }

  // Phase 2.
  std::vector<nk::Tensor<float>> targets;
  for (const auto& b : train) targets.push_back(local_targets(nets, b));
  {
    auto params = nets.global_refs();
    auto adam = nk::make_adam(params, config.global_learning_rate);
    nk::Rng rng(nk::derive_seed(config.seed, {0x610ba1}));
    double window = 0.0;
    std::size_t window_events = 0;
    for (std::size_t episode = 0; episode < config.global_episodes; ++episode) {
      const auto idx = rng.uniform_index(train.size());
      const auto& b = train[idx];
      const auto steps = envmdp::budget_steps(b.n_regions, config.rollout_budget);
      const auto path = rng.sample_without_replacement(b.n_regions, std::min(steps, b.n_regions - 1));
      nk::Tensor<float> scan = b.scan_features;
      std::vector<bool> observed(b.n_regions, false);
      for (auto a : path) {
        if (!config.recursive) {
          scan = b.scan_features;
          std::fill(observed.begin(), observed.end(), false);
        }
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < b.n_regions; ++i)
          if (!observed[i] && i != a) rows.push_back(i);
        const auto va = scan.row_copy(a);
        const auto va_new = targets[idx].row_copy(a);

        const auto input = nets.global.assemble(scan, rows, va, va_new);
        nk::Tensor<float> target(rows.size(), b.dim);
        for (std::size_t m = 0; m < rows.size(); ++m) {
          const auto t = targets[idx].row(rows[m]);
          std::copy(t.begin(), t.end(), target.row(m).begin());
        }
        nk::Tape<float> tape;
        const auto out = nets.global.record(tape, input, 0);
        const auto loss = tape.mean(tape.square(tape.sub(out, tape.constant(std::move(target)))));
        window += tape.scalar(loss);
        ++window_events;
        auto grads = tape.backward(loss, nk::Tensor<float>(1, 1, 1.0f));
        nk::adam_step(params, grads, adam);

        nets.global.apply(scan, rows, va, va_new);
        std::copy(va_new.begin(), va_new.end(), scan.row(a).begin());
        observed[a] = true;
      }
      if ((episode + 1) % 50 == 0) {
        report.global_losses.push_back(window / static_cast<double>(std::max<std::size_t>(1, window_events)));
        window = 0.0;
        window_events = 0;
      }
    }
  }

  // Held-out comparison against the no-update baseline.
  const auto& eval_set = heldout.empty() ? train : heldout;
  nk::Rng rng(nk::derive_seed(config.seed, {0xe7a1}));
  double g_pair = 0.0, i_pair = 0.0, g_roll = 0.0, i_roll = 0.0;
  std::size_t n_pair = 0, n_roll = 0;
  for (const auto& b : eval_set) {
    const auto target = local_targets(nets, b);
    // Fresh state, one observed region.
    {
      const auto a = rng.uniform_index(b.n_regions);
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < b.n_regions; ++i)
        if (i != a) rows.push_back(i);
      if (!rows.empty()) {
        nk::Tensor<float> scan = b.scan_features;
        nets.global.apply(scan, rows, b.scan_features.row_copy(a), target.row_copy(a));
        for (auto i : rows) {
          for (std::size_t c = 0; c < b.dim; ++c) {
            const double dg = scan(i, c) - target(i, c), di = b.scan_features(i, c) - target(i, c);
            g_pair += dg * dg;
            i_pair += di * di;
          }
        }
        n_pair += rows.size() * b.dim;
      }
    }
    // Random observation path.
    {
      const auto steps = std::min(envmdp::budget_steps(b.n_regions, config.rollout_budget), b.n_regions - 1);
      const auto path = rng.sample_without_replacement(b.n_regions, steps);
      nk::Tensor<float> scan = b.scan_features;
      std::vector<bool> observed(b.n_regions, false);
      for (auto a : path) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < b.n_regions; ++i)
          if (!observed[i] && i != a) rows.push_back(i);
        const auto va = scan.row_copy(a);
        const auto va_new = target.row_copy(a);
        nets.global.apply(scan, rows, va, va_new);
        std::copy(va_new.begin(), va_new.end(), scan.row(a).begin());
        observed[a] = true;
      }
      for (std::size_t i = 0; i < b.n_regions; ++i) {
        if (observed[i]) continue;
        for (std::size_t c = 0; c < b.dim; ++c) {
          const double dg = scan(i, c) - target(i, c), di = b.scan_features(i, c) - target(i, c);
          g_roll += dg * dg;
          i_roll += di * di;
        }
        n_roll += b.dim;
      }
    }
  }
  report.global_pair_mse = n_pair ? g_pair / static_cast<double>(n_pair) : 0.0;
  report.identity_pair_mse = n_pair ? i_pair / static_cast<double>(n_pair) : 0.0;
  report.global_rollout_mse = n_roll ? g_roll / static_cast<double>(n_roll) : 0.0;
  report.identity_rollout_mse = n_roll ? i_roll / static_cast<double>(n_roll) : 0.0;
  return report;
}

}  // namespace rlogist::nets
