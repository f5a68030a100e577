#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mhui/error.hpp"

namespace mhui {

enum class SampleLabel { clean, adversarial };

/// `score` is oriented so that larger means "more likely adversarial".
struct ScoredSample {
  double score = 0.0;
  SampleLabel label = SampleLabel::clean;
};

namespace detail {

inline void count_labels(std::span<const ScoredSample> samples, std::size_t& n_adv, std::size_t& n_clean) {
  n_adv = n_clean = 0;
  for (const auto& s : samples) {
    require(std::isfinite(s.score), ErrorKind::numeric, "non-finite detection score");
    (s.label == SampleLabel::adversarial ? n_adv : n_clean)++;
  }
  require(n_adv > 0 && n_clean > 0, ErrorKind::invalid_argument, "need both clean and adversarial samples");
}

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

/// Mann-Whitney AUROC: P(adversarial score > clean score) + 0.5 P(tie),
/// computed exactly from midranks in O(n log n).
inline double auroc(std::span<const ScoredSample> samples) {
  std::size_t n_adv, n_clean;
  detail::count_labels(samples, n_adv, n_clean);
  std::vector<double> scores;
  scores.reserve(samples.size());
  for (const auto& s : samples) scores.push_back(s.score);
  const auto ranks = detail::midranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].label == SampleLabel::adversarial) rank_sum += ranks[i];
  const double na = static_cast<double>(n_adv);
  const double nc = static_cast<double>(n_clean);
  return (rank_sum - na * (na + 1.0) / 2.0) / (na * nc);
}

struct Threshold {
  double value = 0.0;
  double youden_j = 0.0;
};

/// Picks the threshold maximizing Youden's J = TPR - FPR among midpoints of
/// adjacent distinct scores (ties go to the smaller threshold). When every
/// score is equal the single score itself is returned with J = 0.
inline Threshold calibrate_threshold(std::span<const ScoredSample> validation) {
  std::size_t n_adv, n_clean;
  detail::count_labels(validation, n_adv, n_clean);
  std::vector<const ScoredSample*> sorted;
  for (const auto& s : validation) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->score < b->score; });

  Threshold best{sorted.front()->score, 0.0};
  // J is compared through its exact integer numerator
  // tp * n_clean - fp * n_adv so equal J values tie exactly.
  bool have_candidate = false;
  long long best_num = 0;
  // Sweep upward: after consuming every sample with score <= current value,
  // the remaining ones are the predicted positives of the next midpoint.
  std::size_t below_adv = 0, below_clean = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double v = sorted[i]->score;
    while (i < sorted.size() && sorted[i]->score == v) {
      (sorted[i]->label == SampleLabel::adversarial ? below_adv : below_clean)++;
      ++i;
    }
    if (i == sorted.size()) break;
    const double w = sorted[i]->score;
    double t = v + 0.5 * (w - v);
    if (!(t < w)) t = v;  // adjacent doubles: the midpoint rounds up to w
    const auto tp = static_cast<long long>(n_adv - below_adv);
    const auto fp = static_cast<long long>(n_clean - below_clean);
    const long long num = tp * static_cast<long long>(n_clean) - fp * static_cast<long long>(n_adv);
    if (!have_candidate || num > best_num) {
      best_num = num;
      best = {t, static_cast<double>(tp) / static_cast<double>(n_adv) -
                     static_cast<double>(fp) / static_cast<double>(n_clean)};
      have_candidate = true;
    }
  }
  return best;
}

/// Attacked iff score > threshold.
inline bool detect(double score, double threshold) noexcept { return score > threshold; }

/// Spearman rank correlation (midranks for ties); 0 when either side is constant.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && a.size() >= 2, ErrorKind::invalid_argument,
          "spearman needs two equal-length series of length >= 2");
  const auto ra = detail::midranks(a);
  const auto rb = detail::midranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// One row of the detection / ablation CSV.
struct DetectionReport {
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  std::string metric;
  std::string head_subset;
  double auroc = 0.0;
  double clean_accuracy = 0.0;
  double adversarial_accuracy = 0.0;
};

inline constexpr const char* kDetectionCsvHeader = "seed,epsilon,metric,head_subset,auroc,clean_acc,adv_acc";

inline std::string format_real(double v, const char* fmt = "%.12g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

inline std::string to_csv_row(const DetectionReport& r) {
  return std::to_string(r.seed) + ',' + format_real(r.epsilon, "%.6g") + ',' + r.metric + ',' + r.head_subset +
         ',' + format_real(r.auroc) + ',' + format_real(r.clean_accuracy) + ',' +
         format_real(r.adversarial_accuracy);
}

}  // namespace mhui
