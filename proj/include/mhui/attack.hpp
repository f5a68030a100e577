#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mhui/data.hpp"
#include "mhui/error.hpp"
#include "mhui/model.hpp"
#include "mhui/nn.hpp"

namespace mhui {

struct AttackConfig {
  std::vector<double> eps_grid;
  double domain_lo = 0.0;
  double domain_hi = 1.0;

  /// eps/20 for n = 1..20.
  static std::vector<double> twentieths_grid() {
    std::vector<double> g;
    for (int n = 1; n <= 20; ++n) g.push_back(n / 20.0);
    return g;
  }

  void validate() const {
    require(!eps_grid.empty(), ErrorKind::config, "eps grid is empty");
    for (std::size_t i = 0; i < eps_grid.size(); ++i) {
      require(std::isfinite(eps_grid[i]) && eps_grid[i] >= 0.0, ErrorKind::config,
              "eps values must be finite and >= 0");
      require(i == 0 || eps_grid[i] > eps_grid[i - 1], ErrorKind::config,
              "eps grid must be strictly ascending");
    }
    require(domain_lo < domain_hi, ErrorKind::config, "domain_lo must be < domain_hi");
  }
};

inline double sign_of(double g) noexcept { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

/// Untargeted single-step FGSM on the final head:
/// clip(x + eps * sign(d CE(g_N(f(x)), label) / dx), lo, hi).
inline Vector fgsm(const MultiHeadNet& net, std::span<const double> x, std::size_t true_label, double eps,
                   double lo = 0.0, double hi = 1.0) {
  require(x.size() == net.input_dim(), ErrorKind::dimension_mismatch,
          "fgsm: input has " + std::to_string(x.size()) + " features, net expects " +
              std::to_string(net.input_dim()));
  require(std::isfinite(eps) && eps >= 0.0, ErrorKind::invalid_argument, "fgsm: eps must be >= 0");
  require(lo < hi, ErrorKind::invalid_argument, "fgsm: empty domain");
  for (double v : x)
    require(v >= lo && v <= hi, ErrorKind::out_of_range, "fgsm: input outside the domain bounds");
  require(true_label < net.classes(), ErrorKind::out_of_range, "fgsm: label out of range");

  Vector adv(x.begin(), x.end());
  if (eps == 0.0) return adv;
  const Vector grad = input_gradient(net.final_path(), x, true_label);
  for (std::size_t k = 0; k < adv.size(); ++k) adv[k] = std::clamp(adv[k] + eps * sign_of(grad[k]), lo, hi);
  return adv;
}

struct AttackedSet {
  double epsilon = 0.0;
  Dataset data;
};

/// One attacked copy of `clean` per grid value; labels are carried over.
inline std::vector<AttackedSet> attack_batch(const MultiHeadNet& net, const Dataset& clean,
                                             const AttackConfig& cfg) {
  cfg.validate();
  std::vector<Vector> grads;
  grads.reserve(clean.size());
  const LayerView path = net.final_path();
  for (std::size_t i = 0; i < clean.size(); ++i) {
    require(clean.features[i].size() == net.input_dim(), ErrorKind::dimension_mismatch,
            "attack_batch: sample width differs from net input_dim");
    require(clean.labels[i] < net.classes(), ErrorKind::out_of_range, "attack_batch: label out of range");
    for (double v : clean.features[i])
      require(v >= cfg.domain_lo && v <= cfg.domain_hi, ErrorKind::out_of_range,
              "attack_batch: input outside the domain bounds");
    grads.push_back(input_gradient(path, clean.features[i], clean.labels[i]));
  }

  std::vector<AttackedSet> out;
  out.reserve(cfg.eps_grid.size());
  for (double eps : cfg.eps_grid) {
    AttackedSet set{eps, clean};
    if (eps > 0.0)
      for (std::size_t i = 0; i < clean.size(); ++i)
        for (std::size_t k = 0; k < clean.dim; ++k)
          set.data.features[i][k] = std::clamp(clean.features[i][k] + eps * sign_of(grads[i][k]),
                                               cfg.domain_lo, cfg.domain_hi);
    out.push_back(std::move(set));
  }
  return out;
}

}  // namespace mhui
