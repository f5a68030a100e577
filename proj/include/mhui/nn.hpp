#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mhui/error.hpp"
#include "mhui/rng.hpp"
#include "mhui/tensor.hpp"

namespace mhui {

enum class Activation { relu, identity };

/// y = activation(W x + b), W stored (out_dim x in_dim).
struct DenseLayer {
  Tensor weights;
  Tensor bias;
  Activation activation = Activation::identity;

  DenseLayer() = default;

  DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation act)
      : weights({out_dim, in_dim}), bias({out_dim}), activation(act) {}

  DenseLayer(Tensor w, Tensor b, Activation act)
      : weights(std::move(w)), bias(std::move(b)), activation(act) {
    require(weights.rank() == 2 && bias.rank() == 1 && weights.rows() == bias.size(),
            ErrorKind::shape_mismatch, "dense layer weight rows must equal bias length");
  }

  std::size_t in_dim() const noexcept { return weights.cols(); }
  std::size_t out_dim() const noexcept { return weights.rows(); }

  /// He-uniform weights for relu layers, Glorot-uniform otherwise; zero bias.
  void initialize(Rng& rng) {
    const double fan_in = static_cast<double>(in_dim());
    const double fan_out = static_cast<double>(out_dim());
    const double limit = activation == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                        : std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : weights.values()) w = rng.uniform(-limit, limit);
    bias.fill(0.0);
  }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

using LayerStack = std::vector<DenseLayer>;
/// Non-owning ordered view over layers that may live in different stacks
/// (e.g. the backbone blocks followed by the final head).
using LayerView = std::vector<const DenseLayer*>;
using MutableLayerView = std::vector<DenseLayer*>;

inline LayerView view_of(const LayerStack& stack) {
  LayerView v;
  v.reserve(stack.size());
  for (const auto& l : stack) v.push_back(&l);
  return v;
}

inline MutableLayerView mutable_view_of(LayerStack& stack) {
  MutableLayerView v;
  v.reserve(stack.size());
  for (auto& l : stack) v.push_back(&l);
  return v;
}

namespace detail {

inline void affine(const DenseLayer& layer, std::span<const double> x, std::span<double> out) {
  const std::size_t in = layer.in_dim();
  for (std::size_t r = 0; r < layer.out_dim(); ++r) {
    const double* w = layer.weights.row(r).data();
    double acc = layer.bias[r];
    for (std::size_t c = 0; c < in; ++c) acc += w[c] * x[c];
    out[r] = acc;
  }
}

inline void activate(Activation act, std::span<double> v) noexcept {
  if (act == Activation::relu)
    for (double& z : v) z = z > 0.0 ? z : 0.0;
}

}  // namespace detail

inline Vector dense_forward(const DenseLayer& layer, std::span<const double> x) {
  require(x.size() == layer.in_dim(), ErrorKind::dimension_mismatch,
          "dense_forward: input has " + std::to_string(x.size()) + " values, layer expects " +
              std::to_string(layer.in_dim()));
  Vector out(layer.out_dim());
  detail::affine(layer, x, out);
  detail::activate(layer.activation, out);
  return out;
}

/// Runs x through every layer of the view in order.
inline Vector forward(const LayerView& stack, std::span<const double> x) {
  Vector cur(x.begin(), x.end());
  for (const DenseLayer* layer : stack) cur = dense_forward(*layer, cur);
  return cur;
}

inline Vector softmax(std::span<const double> z) {
  require(!z.empty(), ErrorKind::empty_input, "softmax of an empty vector");
  require(all_finite(z), ErrorKind::numeric, "softmax input is not finite");
  const double zmax = *std::max_element(z.begin(), z.end());
  Vector p(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - zmax);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

inline constexpr double kProbabilityFloor = 1e-12;

inline double cross_entropy(std::span<const double> p, std::size_t label) {
  require(label < p.size(), ErrorKind::out_of_range,
          "label " + std::to_string(label) + " outside [0, " + std::to_string(p.size()) + ")");
  return -std::log(std::max(p[label], kProbabilityFloor));
}

struct LayerGradient {
  Tensor weights;
  Tensor bias;
};

/// Gradients mirroring a layer view, plus the gradient w.r.t. the input.
struct Gradients {
  std::vector<LayerGradient> layers;
  Vector input_grad;

  static Gradients zeros_like(const LayerView& stack) {
    Gradients g;
    g.layers.reserve(stack.size());
    for (const DenseLayer* l : stack) g.layers.push_back({Tensor(l->weights.shape()), Tensor(l->bias.shape())});
    g.input_grad.assign(stack.empty() ? 0 : stack.front()->in_dim(), 0.0);
    return g;
  }

  void accumulate(const Gradients& other) {
    require(other.layers.size() == layers.size(), ErrorKind::shape_mismatch,
            "gradient layer count mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      auto dst_w = layers[i].weights.values();
      auto src_w = other.layers[i].weights.values();
      for (std::size_t k = 0; k < dst_w.size(); ++k) dst_w[k] += src_w[k];
      auto dst_b = layers[i].bias.values();
      auto src_b = other.layers[i].bias.values();
      for (std::size_t k = 0; k < dst_b.size(); ++k) dst_b[k] += src_b[k];
    }
    for (std::size_t k = 0; k < input_grad.size() && k < other.input_grad.size(); ++k)
      input_grad[k] += other.input_grad[k];
  }

  void scale(double s) noexcept {
    for (auto& lg : layers) {
      for (double& v : lg.weights.values()) v *= s;
      for (double& v : lg.bias.values()) v *= s;
    }
    for (double& v : input_grad) v *= s;
  }
};

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

namespace detail {

inline void check_chain(const LayerView& stack, std::size_t input_size) {
  require(!stack.empty(), ErrorKind::empty_input, "empty layer stack");
  std::size_t width = input_size;
  for (const DenseLayer* l : stack) {
    require(l->in_dim() == width, ErrorKind::dimension_mismatch,
            "layer expects " + std::to_string(l->in_dim()) + " inputs, got " + std::to_string(width));
    width = l->out_dim();
  }
}

/// Softmax + cross-entropy on top of the stack, then reverse-mode sweep.
/// Parameter gradients are skipped when `with_params` is false.
inline LossAndGradients backprop(const LayerView& stack, std::span<const double> x,
                                 std::size_t label, bool with_params) {
  check_chain(stack, x.size());
  const std::size_t depth = stack.size();

  // acts[0] = x, acts[i+1] = output of layer i (post-activation).
  std::vector<Vector> acts(depth + 1);
  std::vector<Vector> pre(depth);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t i = 0; i < depth; ++i) {
    pre[i].resize(stack[i]->out_dim());
    affine(*stack[i], acts[i], pre[i]);
    acts[i + 1] = pre[i];
    activate(stack[i]->activation, acts[i + 1]);
  }

  const Vector p = softmax(acts[depth]);
  LossAndGradients out;
  out.loss = cross_entropy(p, label);

  Vector delta(p.size(), 0.0);  // d loss / d logits
  if (p[label] >= kProbabilityFloor) {
    delta = p;
    delta[label] -= 1.0;
  }  // below the floor the loss is locally constant

  if (with_params) {
    out.grads.layers.resize(depth);
  }
  for (std::size_t i = depth; i-- > 0;) {
    const DenseLayer& layer = *stack[i];
    if (layer.activation == Activation::relu)
      for (std::size_t r = 0; r < delta.size(); ++r)
        if (!(pre[i][r] > 0.0)) delta[r] = 0.0;

    if (with_params) {
      Tensor gw(layer.weights.shape());
      for (std::size_t r = 0; r < layer.out_dim(); ++r) {
        if (delta[r] == 0.0) continue;
        auto row = gw.row(r);
        for (std::size_t c = 0; c < layer.in_dim(); ++c) row[c] = delta[r] * acts[i][c];
      }
      out.grads.layers[i] = {std::move(gw), Tensor({layer.out_dim()}, delta)};
    }

    Vector prev(layer.in_dim(), 0.0);
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      if (delta[r] == 0.0) continue;
      const double* w = layer.weights.row(r).data();
      for (std::size_t c = 0; c < layer.in_dim(); ++c) prev[c] += w[c] * delta[r];
    }
    delta = std::move(prev);
  }
  out.grads.input_grad = std::move(delta);
  return out;
}

}  // namespace detail

/// Loss of softmax(stack(x)) against `label` and its exact gradients w.r.t.
/// every parameter of the stack and w.r.t. x.
inline LossAndGradients forward_backward(const LayerView& stack, std::span<const double> x,
                                         std::size_t label) {
  return detail::backprop(stack, x, label, true);
}

inline LossAndGradients forward_backward(const LayerStack& stack, std::span<const double> x,
                                         std::size_t label) {
  return detail::backprop(view_of(stack), x, label, true);
}

/// d loss / d x only.
inline Vector input_gradient(const LayerView& stack, std::span<const double> x, std::size_t label) {
  return detail::backprop(stack, x, label, false).grads.input_grad;
}

struct AdamState {
  std::vector<LayerGradient> first;
  std::vector<LayerGradient> second;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_layers(const MutableLayerView& params) {
    AdamState s;
    for (const DenseLayer* l : params) {
      s.first.push_back({Tensor(l->weights.shape()), Tensor(l->bias.shape())});
      s.second.push_back({Tensor(l->weights.shape()), Tensor(l->bias.shape())});
    }
    return s;
  }
};

namespace detail {

inline void adam_update(std::span<double> param, std::span<const double> grad,
                        std::span<double> m, std::span<double> v, const AdamState& s,
                        double lr, double c1, double c2) {
  for (std::size_t k = 0; k < param.size(); ++k) {
    m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * grad[k];
    v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * grad[k] * grad[k];
    const double m_hat = m[k] / c1;
    const double v_hat = v[k] / c2;
    param[k] -= lr * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
}

}  // namespace detail

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(const MutableLayerView& params, const Gradients& grads, AdamState& state,
                      double lr) {
  require(lr >= 0.0, ErrorKind::invalid_argument, "learning rate must be non-negative");
  require(params.size() == grads.layers.size() && params.size() == state.first.size() &&
              params.size() == state.second.size(),
          ErrorKind::shape_mismatch, "adam_step: parameter/gradient/state layer counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const DenseLayer& l = *params[i];
    require(grads.layers[i].weights.same_shape(l.weights) && grads.layers[i].bias.same_shape(l.bias) &&
                state.first[i].weights.same_shape(l.weights) &&
                state.second[i].weights.same_shape(l.weights),
            ErrorKind::shape_mismatch, "adam_step: shapes do not mirror layer " + std::to_string(i));
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    detail::adam_update(params[i]->weights.values(), grads.layers[i].weights.values(),
                        state.first[i].weights.values(), state.second[i].weights.values(), state,
                        lr, c1, c2);
    detail::adam_update(params[i]->bias.values(), grads.layers[i].bias.values(),
                        state.first[i].bias.values(), state.second[i].bias.values(), state, lr,
                        c1, c2);
  }
}

}  // namespace mhui
