#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mhui/error.hpp"
#include "mhui/model.hpp"

namespace mhui {

/// Empirical first and (unbiased) second moments of the head predictions.
struct Moments {
  Vector mean;
  Vector var;
};

struct DirichletEstimate {
  Vector alpha;
  double alpha0 = 0.0;
  Vector mode;
  bool clamped = false;
};

struct UncertaintyScores {
  double max_p = 0.0;
  double ent = 0.0;
};

enum class Metric { max_p, ent, mean_max_p, mean_ent };

inline const char* metric_name(Metric m) {
  switch (m) {
    case Metric::max_p: return "max_p";
    case Metric::ent: return "ent";
    case Metric::mean_max_p: return "mean_max_p";
    case Metric::mean_ent: return "mean_ent";
  }
  return "?";
}

inline Metric parse_metric(const std::string& s) {
  if (s == "max_p") return Metric::max_p;
  if (s == "ent") return Metric::ent;
  if (s == "mean_max_p") return Metric::mean_max_p;
  if (s == "mean_ent") return Metric::mean_ent;
  throw Error(ErrorKind::config, "unknown metric '" + s + "'");
}

// Guard constants for the moment inversion.
inline constexpr double kVarianceFloor = 1e-12;
inline constexpr double kAlphaFloor = 1.0 + 1e-6;
inline constexpr double kAlpha0Cap = 1e6;

/// Rows of `pred` whose head id is in `subset`, kept in ascending head order.
inline PredictionSet select_heads(const PredictionSet& pred, std::vector<std::size_t> subset) {
  require(!subset.empty(), ErrorKind::invalid_argument, "empty subset");
  require(subset.size() >= 2, ErrorKind::invalid_argument, "subset needs at least 2 heads");
  std::sort(subset.begin(), subset.end());
  require(std::adjacent_find(subset.begin(), subset.end()) == subset.end(), ErrorKind::invalid_argument,
          "duplicate head id in subset");
  PredictionSet out;
  for (std::size_t id : subset) {
    auto it = std::find(pred.head_ids.begin(), pred.head_ids.end(), id);
    require(it != pred.head_ids.end(), ErrorKind::out_of_range, "unknown head id " + std::to_string(id));
    out.rows.push_back(pred.rows[static_cast<std::size_t>(it - pred.head_ids.begin())]);
    out.head_ids.push_back(id);
  }
  return out;
}

/// Mean (1/H) and unbiased variance (1/(H-1)) per class.
inline Moments sample_moments(const PredictionSet& pred) {
  const std::size_t h = pred.num_rows();
  require(h >= 2, ErrorKind::invalid_argument, "moments need at least 2 prediction rows");
  const std::size_t c = pred.classes();
  Moments m{Vector(c, 0.0), Vector(c, 0.0)};
  for (const auto& row : pred.rows) {
    require(row.size() == c, ErrorKind::shape_mismatch, "prediction rows differ in length");
    for (std::size_t k = 0; k < c; ++k) m.mean[k] += row[k];
  }
  for (double& v : m.mean) v /= static_cast<double>(h);
  for (const auto& row : pred.rows)
    for (std::size_t k = 0; k < c; ++k) m.var[k] += (row[k] - m.mean[k]) * (row[k] - m.mean[k]);
  for (double& v : m.var) v /= static_cast<double>(h - 1);
  return m;
}

/// Mode m_c = (alpha_c - 1) / (alpha_0 - C); requires every alpha_c > 1.
inline Vector dirichlet_mode(std::span<const double> alpha, double alpha0) {
  const double denom = alpha0 - static_cast<double>(alpha.size());
  Vector m(alpha.size());
  for (std::size_t k = 0; k < alpha.size(); ++k) m[k] = (alpha[k] - 1.0) / denom;
  return m;
}

/// Moment matching: with E[y] = alpha / alpha0 and
/// Var[y]_c = mean_c (1 - mean_c) / (alpha0 + 1), each class gives its own
/// estimate s_c = mean_c (1 - mean_c) / var_c - 1 of alpha0. Classes with
/// var_c <= 1e-12 or s_c <= 0 are skipped and the rest are averaged, then
/// clamped to [C (1 + 1e-6), 1e6]. With no usable class alpha0 falls back to
/// 1e6 (all variances vanish: the heads agree) or to C (over-dispersed).
/// Finally alpha_c = mean_c * alpha0, floored at 1 + 1e-6 so the mode exists.
inline DirichletEstimate fit_dirichlet(const Moments& mom) {
  const std::size_t c = mom.mean.size();
  require(c >= 2 && mom.var.size() == c, ErrorKind::shape_mismatch, "moments need matching C >= 2 vectors");
  double total = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    require(std::isfinite(mom.mean[k]) && std::isfinite(mom.var[k]), ErrorKind::numeric,
            "moments are not finite");
    require(mom.mean[k] >= -1e-6 && mom.var[k] >= 0.0, ErrorKind::invalid_argument,
            "negative mean or variance component");
    total += mom.mean[k];
  }
  require(std::abs(total - 1.0) <= 1e-6, ErrorKind::invalid_argument, "mean is off the simplex");

  const double classes = static_cast<double>(c);
  DirichletEstimate est;
  double sum_s = 0.0;
  std::size_t qualifying = 0;
  bool all_degenerate = true;
  for (std::size_t k = 0; k < c; ++k) {
    if (mom.var[k] <= kVarianceFloor) continue;
    all_degenerate = false;
    const double s = mom.mean[k] * (1.0 - mom.mean[k]) / mom.var[k] - 1.0;
    if (s > 0.0) {
      sum_s += s;
      ++qualifying;
    }
  }
  if (qualifying < c) est.clamped = true;

  double alpha0;
  if (qualifying > 0) {
    alpha0 = sum_s / static_cast<double>(qualifying);
    const double clipped = std::clamp(alpha0, classes * kAlphaFloor, kAlpha0Cap);
    if (clipped != alpha0) est.clamped = true;
    alpha0 = clipped;
  } else {
    alpha0 = all_degenerate ? kAlpha0Cap : classes;
  }

  est.alpha.resize(c);
  est.alpha0 = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    double a = mom.mean[k] * alpha0;
    if (a < kAlphaFloor) {
      a = kAlphaFloor;
      est.clamped = true;
    }
    est.alpha[k] = a;
    est.alpha0 += a;
  }
  est.mode = dirichlet_mode(est.alpha, est.alpha0);
  return est;
}

namespace detail {

inline UncertaintyScores scores_of(std::span<const double> m) {
  UncertaintyScores s;
  s.max_p = *std::max_element(m.begin(), m.end());
  for (double v : m)
    if (v > 0.0) s.ent -= v * std::log(v);
  return s;
}

}  // namespace detail

/// Max.P. and entropy of the fitted mode vector.
inline UncertaintyScores uncertainty_scores(const DirichletEstimate& est) { return detail::scores_of(est.mode); }

/// Same scores computed on the Dirichlet mean alpha / alpha0 instead of the mode.
inline UncertaintyScores mean_uncertainty_scores(const DirichletEstimate& est) {
  Vector mean(est.alpha.size());
  for (std::size_t k = 0; k < mean.size(); ++k) mean[k] = est.alpha[k] / est.alpha0;
  return detail::scores_of(mean);
}

/// Score where larger means "more likely attacked": entropy as-is, max
/// probability negated.
inline double adversarial_score(const DirichletEstimate& est, Metric metric) {
  switch (metric) {
    case Metric::max_p: return -uncertainty_scores(est).max_p;
    case Metric::ent: return uncertainty_scores(est).ent;
    case Metric::mean_max_p: return -mean_uncertainty_scores(est).max_p;
    case Metric::mean_ent: return mean_uncertainty_scores(est).ent;
  }
  return 0.0;
}

inline DirichletEstimate fit_prediction_set(const PredictionSet& pred, const std::vector<std::size_t>& subset) {
  return fit_dirichlet(sample_moments(select_heads(pred, subset)));
}

/// predict_all_heads -> select_heads -> sample_moments -> fit_dirichlet ->
/// uncertainty_scores.
inline UncertaintyScores ui_pipeline(const MultiHeadNet& net, std::span<const double> x,
                                     const std::vector<std::size_t>& subset) {
  return uncertainty_scores(fit_prediction_set(predict_all_heads(net, x), subset));
}

// PredictionSet CSV: header "head_id,p0,...,p{C-1}", one row per head.

inline void write_prediction_csv(std::ostream& os, const PredictionSet& pred) {
  os << "head_id";
  for (std::size_t k = 0; k < pred.classes(); ++k) os << ",p" << k;
  os << '\n';
  char buf[32];
  for (std::size_t h = 0; h < pred.num_rows(); ++h) {
    os << pred.head_ids[h];
    for (double p : pred.rows[h]) {
      std::snprintf(buf, sizeof buf, "%.17g", p);
      os << ',' << buf;
    }
    os << '\n';
  }
}

inline PredictionSet read_prediction_csv(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorKind::truncated, "prediction CSV has no header");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  require(header.size() >= 3 && header[0] == "head_id", ErrorKind::bad_magic,
          "prediction CSV header must start with head_id and list >= 2 classes");
  for (std::size_t k = 1; k < header.size(); ++k)
    require(header[k] == "p" + std::to_string(k - 1), ErrorKind::bad_magic,
            "unexpected prediction CSV column '" + header[k] + "'");
  const std::size_t c = header.size() - 1;

  PredictionSet pred;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    require(cells.size() == c + 1, ErrorKind::shape_mismatch, "prediction CSV row has wrong column count");
    try {
      pred.head_ids.push_back(std::stoull(cells[0]));
      Vector row;
      for (std::size_t k = 1; k <= c; ++k) row.push_back(std::stod(cells[k]));
      pred.rows.push_back(std::move(row));
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::numeric, "unparseable prediction CSV row: " + line);
    }
  }
  pred.validate(1e-6);
  return pred;
}

inline void save_prediction_csv(const PredictionSet& pred, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
  write_prediction_csv(os, pred);
}

inline PredictionSet load_prediction_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
  return read_prediction_csv(is);
}

}  // namespace mhui
