#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mhui/data.hpp"
#include "mhui/error.hpp"
#include "mhui/model.hpp"
#include "mhui/nn.hpp"
#include "mhui/rng.hpp"

namespace mhui {

struct TrainConfig {
  std::size_t backbone_epochs = 60;
  double backbone_lr_max = 7.5e-4;
  double cycle_frac = 0.7;
  std::size_t head_epochs = 30;
  double head_lr = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const {
    require(backbone_epochs >= 1 && head_epochs >= 1, ErrorKind::config, "epoch counts must be >= 1");
    require(backbone_lr_max > 0.0 && head_lr > 0.0, ErrorKind::config, "learning rates must be > 0");
    require(cycle_frac > 0.0 && cycle_frac <= 1.0, ErrorKind::config, "cycle_frac must lie in (0, 1]");
    require(batch_size >= 1, ErrorKind::config, "batch_size must be >= 1");
  }
};

/// Number of epochs covered by the triangular part of the schedule.
inline std::size_t cycle_epochs(const TrainConfig& cfg) {
  const auto n = static_cast<std::size_t>(
      std::llround(cfg.cycle_frac * static_cast<double>(cfg.backbone_epochs)));
  return std::clamp<std::size_t>(n, 1, cfg.backbone_epochs);
}

/// 1-cycle schedule: 0.1*max -> max over the first half of the cycle, back to
/// 0.1*max over the second half, then a linear tail down to 0.01*max at the
/// last epoch.
inline double one_cycle_lr(std::size_t epoch, const TrainConfig& cfg) {
  require(epoch < cfg.backbone_epochs, ErrorKind::out_of_range,
          "epoch " + std::to_string(epoch) + " outside schedule of " +
              std::to_string(cfg.backbone_epochs));
  const double lr_max = cfg.backbone_lr_max;
  const double cycle = static_cast<double>(cycle_epochs(cfg));
  const double half = cycle / 2.0;
  const double e = static_cast<double>(epoch);
  if (e < half) return lr_max * (0.1 + 0.9 * e / half);
  if (e < cycle) return lr_max * (1.0 - 0.9 * (e - half) / half);
  const double tail = static_cast<double>(cfg.backbone_epochs - 1) - cycle;
  if (tail <= 0.0) return 0.1 * lr_max;
  return lr_max * (0.1 - 0.09 * (e - cycle) / tail);
}

namespace detail {

inline void check_training_set(const MultiHeadNet& net, const Dataset& data) {
  require(data.size() >= 1, ErrorKind::empty_input, "training set is empty");
  require(data.features.size() == data.size(), ErrorKind::count_mismatch, "feature/label count mismatch");
  require(data.dim == net.input_dim(), ErrorKind::dimension_mismatch,
          "dataset dim " + std::to_string(data.dim) + " != net input_dim " +
              std::to_string(net.input_dim()));
  for (std::size_t y : data.labels)
    require(y < net.classes(), ErrorKind::out_of_range, "label exceeds the net's class count");
}

/// Mini-batch Adam over (inputs, labels) for one parameter stack. Returns the
/// mean per-sample loss of each epoch.
template <typename LrFn>
std::vector<double> fit_stack(const MutableLayerView& params, const std::vector<Vector>& inputs,
                              const std::vector<std::size_t>& labels, std::size_t epochs,
                              std::size_t batch_size, LrFn&& lr_for_epoch, Rng& rng) {
  LayerView view(params.begin(), params.end());
  AdamState adam = AdamState::for_layers(params);
  std::vector<std::size_t> order(inputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> history;
  history.reserve(epochs);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const double lr = lr_for_epoch(epoch);
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      Gradients batch = Gradients::zeros_like(view);
      for (std::size_t k = start; k < end; ++k) {
        auto fb = forward_backward(view, inputs[order[k]], labels[order[k]]);
        loss_sum += fb.loss;
        batch.accumulate(fb.grads);
      }
      batch.scale(1.0 / static_cast<double>(end - start));
      adam_step(params, batch, adam, lr);
    }
    history.push_back(loss_sum / static_cast<double>(order.size()));
  }
  return history;
}

}  // namespace detail

/// Phase one: trains every block plus the final head on the final head's
/// cross-entropy under the 1-cycle schedule. Heads 1..N-1 are untouched.
/// Returns the mean training loss of each epoch.
inline std::vector<double> train_backbone(MultiHeadNet& net, const Dataset& train, const TrainConfig& cfg) {
  detail::check_training_set(net, train);
  require(cfg.backbone_lr_max >= 0.0 && cfg.batch_size >= 1, ErrorKind::invalid_argument,
          "invalid backbone training config");
  Rng rng(derive_seed(cfg.seed, 0xBAC0));
  return detail::fit_stack(net.backbone_parameters(), train.features, train.labels, cfg.backbone_epochs,
                           cfg.batch_size, [&](std::size_t e) { return one_cycle_lr(e, cfg); }, rng);
}

/// Trains head n (1 <= n < N) alone on frozen trunk features.
inline std::vector<double> train_head(MultiHeadNet& net, std::size_t n, const std::vector<Vector>& features,
                                      const std::vector<std::size_t>& labels, const TrainConfig& cfg) {
  require(n >= 1 && n < net.num_heads(), ErrorKind::out_of_range, "train_head: head id out of range");
  Rng rng(derive_seed(cfg.seed, 0x4EAD0000ULL + n));
  return detail::fit_stack(mutable_view_of(net.head(n)), features, labels, cfg.head_epochs, cfg.batch_size,
                           [&](std::size_t) { return cfg.head_lr; }, rng);
}

/// Phase two: heads 1..N-1 in order, each trained independently at the fixed
/// head learning rate on the frozen output of its block. Blocks and head N
/// are never written. Element n-1 of the result is head n's loss history.
inline std::vector<std::vector<double>> train_heads(MultiHeadNet& net, const Dataset& train,
                                                    const TrainConfig& cfg) {
  detail::check_training_set(net, train);
  require(cfg.head_lr >= 0.0 && cfg.batch_size >= 1, ErrorKind::invalid_argument,
          "invalid head training config");
  const std::size_t heads = net.num_heads();
  std::vector<std::vector<Vector>> features(heads - 1);
  for (const auto& x : train.features) {
    auto trunk = net.trunk_activations(x);
    for (std::size_t n = 1; n < heads; ++n) features[n - 1].push_back(std::move(trunk[n - 1]));
  }
  std::vector<std::vector<double>> histories;
  for (std::size_t n = 1; n < heads; ++n)
    histories.push_back(train_head(net, n, features[n - 1], train.labels, cfg));
  return histories;
}

/// Fraction of samples whose argmax prediction of head n matches the label.
inline double head_accuracy(const MultiHeadNet& net, std::size_t n, const Dataset& data) {
  require(data.size() >= 1, ErrorKind::empty_input, "accuracy of an empty dataset");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto trunk = net.trunk_activations(data.features[i]);
    if (argmax(head_output(net.head(n), trunk[n - 1])) == data.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

inline std::vector<double> all_head_accuracies(const MultiHeadNet& net, const Dataset& data) {
  std::vector<std::size_t> hits(net.num_heads(), 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto pred = predict_all_heads(net, data.features[i]);
    for (std::size_t h = 0; h < pred.rows.size(); ++h)
      if (argmax(pred.rows[h]) == data.labels[i]) ++hits[h];
  }
  std::vector<double> acc;
  for (std::size_t h : hits) acc.push_back(static_cast<double>(h) / static_cast<double>(data.size()));
  return acc;
}

inline double final_accuracy(const MultiHeadNet& net, const Dataset& data) {
  return head_accuracy(net, net.num_heads(), data);
}

}  // namespace mhui
