#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mhui/error.hpp"
#include "mhui/nn.hpp"
#include "mhui/rng.hpp"

namespace mhui {

/// Shape of a multi-head net. Block n (1-based) is `block_depth` dense+relu
/// layers ending at width block_widths[n-1]; every head is
/// dense+relu(head_hidden) followed by dense(classes) and a softmax.
struct Architecture {
  std::size_t input_dim = 0;
  std::size_t classes = 0;
  std::vector<std::size_t> block_widths;
  std::size_t block_depth = 1;
  std::size_t head_hidden = 0;

  std::size_t num_heads() const noexcept { return block_widths.size(); }

  void validate() const {
    require(input_dim >= 1, ErrorKind::invalid_argument, "input_dim must be >= 1");
    require(classes >= 2, ErrorKind::invalid_argument, "need at least 2 classes");
    require(block_widths.size() >= 2, ErrorKind::invalid_argument,
            "need at least 2 blocks (one head per block, variance needs 2 samples)");
    require(block_depth >= 1, ErrorKind::invalid_argument, "block_depth must be >= 1");
    require(head_hidden >= 1, ErrorKind::invalid_argument, "head_hidden must be >= 1");
    for (std::size_t w : block_widths)
      require(w >= 1, ErrorKind::invalid_argument, "block widths must be >= 1");
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Per-head normalized predictions for one input: row h is the softmax output
/// of head head_ids[h]. Head ids are 1-based and ascending.
struct PredictionSet {
  std::vector<Vector> rows;
  std::vector<std::size_t> head_ids;

  std::size_t num_rows() const noexcept { return rows.size(); }
  std::size_t classes() const noexcept { return rows.empty() ? 0 : rows.front().size(); }

  /// Throws unless H >= 2, ids are ascending and every row is on the simplex.
  void validate(double tol = 1e-9) const {
    require(rows.size() == head_ids.size(), ErrorKind::shape_mismatch,
            "prediction rows and head ids differ in count");
    require(rows.size() >= 2, ErrorKind::invalid_argument,
            "a prediction set needs at least 2 heads");
    for (std::size_t h = 0; h < rows.size(); ++h) {
      require(rows[h].size() == classes() && classes() >= 1, ErrorKind::shape_mismatch,
              "prediction rows have different class counts");
      require(head_ids[h] >= 1 && (h == 0 || head_ids[h] > head_ids[h - 1]),
              ErrorKind::invalid_argument, "head ids must be 1-based and strictly ascending");
      double total = 0.0;
      for (double p : rows[h]) {
        require(std::isfinite(p) && p >= -tol, ErrorKind::numeric, "negative or non-finite probability");
        total += p;
      }
      require(std::abs(total - 1.0) <= tol, ErrorKind::numeric,
              "row for head " + std::to_string(head_ids[h]) + " is not on the simplex");
    }
  }

  friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

/// Backbone blocks f_1..f_N with a classifier head g_n after every block.
/// Head N is the network's own classifier.
class MultiHeadNet {
 public:
  MultiHeadNet() = default;

  /// Zero-initialized parameters with the given architecture.
  explicit MultiHeadNet(Architecture arch) : arch_(std::move(arch)) {
    arch_.validate();
    std::size_t width = arch_.input_dim;
    for (std::size_t n = 0; n < arch_.num_heads(); ++n) {
      LayerStack block;
      for (std::size_t d = 0; d < arch_.block_depth; ++d) {
        block.emplace_back(width, arch_.block_widths[n], Activation::relu);
        width = arch_.block_widths[n];
      }
      blocks_.push_back(std::move(block));
      LayerStack head;
      head.emplace_back(width, arch_.head_hidden, Activation::relu);
      head.emplace_back(arch_.head_hidden, arch_.classes, Activation::identity);
      heads_.push_back(std::move(head));
    }
  }

  static MultiHeadNet initialized(Architecture arch, std::uint64_t seed) {
    MultiHeadNet net(std::move(arch));
    Rng rng(derive_seed(seed, 0x1417));
    for (auto& block : net.blocks_)
      for (auto& layer : block) layer.initialize(rng);
    for (auto& head : net.heads_)
      for (auto& layer : head) layer.initialize(rng);
    return net;
  }

  const Architecture& architecture() const noexcept { return arch_; }
  std::size_t num_heads() const noexcept { return arch_.num_heads(); }
  std::size_t input_dim() const noexcept { return arch_.input_dim; }
  std::size_t classes() const noexcept { return arch_.classes; }

  /// 1-based accessors.
  LayerStack& block(std::size_t n) { return blocks_.at(n - 1); }
  const LayerStack& block(std::size_t n) const { return blocks_.at(n - 1); }
  LayerStack& head(std::size_t n) { return heads_.at(n - 1); }
  const LayerStack& head(std::size_t n) const { return heads_.at(n - 1); }

  /// Output of every block, computed in one pass through the trunk.
  std::vector<Vector> trunk_activations(std::span<const double> x) const {
    require(x.size() == arch_.input_dim, ErrorKind::dimension_mismatch,
            "input has " + std::to_string(x.size()) + " features, net expects " +
                std::to_string(arch_.input_dim));
    std::vector<Vector> outs;
    outs.reserve(blocks_.size());
    Vector cur(x.begin(), x.end());
    for (const auto& block : blocks_) {
      for (const auto& layer : block) cur = dense_forward(layer, cur);
      outs.push_back(cur);
    }
    return outs;
  }

  /// f_1..f_N followed by g_N: the path the final prediction and FGSM use.
  LayerView final_path() const {
    LayerView v;
    for (const auto& block : blocks_)
      for (const auto& layer : block) v.push_back(&layer);
    for (const auto& layer : heads_.back()) v.push_back(&layer);
    return v;
  }

  /// Parameters updated by backbone training: every block and head N.
  MutableLayerView backbone_parameters() {
    MutableLayerView v;
    for (auto& block : blocks_)
      for (auto& layer : block) v.push_back(&layer);
    for (auto& layer : heads_.back()) v.push_back(&layer);
    return v;
  }

  friend bool operator==(const MultiHeadNet&, const MultiHeadNet&) = default;

 private:
  Architecture arch_;
  std::vector<LayerStack> blocks_;
  std::vector<LayerStack> heads_;
};

inline Vector head_output(const LayerStack& head, std::span<const double> features) {
  return softmax(forward(view_of(head), features));
}

/// Normalized predictions of every head, sharing one trunk pass.
inline PredictionSet predict_all_heads(const MultiHeadNet& net, std::span<const double> x) {
  const auto trunk = net.trunk_activations(x);
  PredictionSet out;
  out.rows.reserve(net.num_heads());
  for (std::size_t n = 1; n <= net.num_heads(); ++n) {
    out.rows.push_back(head_output(net.head(n), trunk[n - 1]));
    out.head_ids.push_back(n);
  }
  return out;
}

inline Vector predict_final(const MultiHeadNet& net, std::span<const double> x) {
  const auto trunk = net.trunk_activations(x);
  return head_output(net.head(net.num_heads()), trunk.back());
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace mhui
