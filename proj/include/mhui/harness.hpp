#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mhui/attack.hpp"
#include "mhui/checkpoint.hpp"
#include "mhui/config.hpp"
#include "mhui/data.hpp"
#include "mhui/dirichlet.hpp"
#include "mhui/eval.hpp"
#include "mhui/model.hpp"
#include "mhui/train.hpp"

namespace mhui::harness {

namespace fs = std::filesystem;

// Files written under the output directory.
inline constexpr const char* kHeadAccuracyCsvHeader = "seed,head_id,accuracy";
inline constexpr const char* kTrainLogCsvHeader = "seed,phase,head_id,epoch,loss";
inline constexpr const char* kAttackCsvHeader = "seed,epsilon,clean_acc,adv_acc,max_linf";
inline constexpr const char* kPlotCsvHeader = "source,metric,head_subset,epsilon,auroc_mean,auroc_std,n_seeds";

inline fs::path checkpoint_path(const fs::path& out, std::uint64_t seed) {
  return out / "checkpoints" / ("seed_" + std::to_string(seed) + ".ckpt");
}

/// Run seeds s, s+1, ..., s+n-1.
inline std::vector<std::uint64_t> seed_list(const ExperimentConfig& cfg, std::size_t n) {
  require(n >= 1, ErrorKind::config, "--seeds must be >= 1");
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < n; ++i) seeds.push_back(cfg.seed + i);
  return seeds;
}

struct SeedData {
  Dataset train;
  Dataset test;
};

/// Everything is re-seeded per run: blob placement, sampling and the split.
inline SeedData make_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  Dataset all;
  if (cfg.data.kind == DataKind::blobs) {
    all = gen_blobs(cfg.data.classes, cfg.data.n_per_class, cfg.data.dim, cfg.data.spread, seed);
  } else {
    all = load_idx(cfg.data.images, cfg.data.labels, cfg.data.max_n);
    for (std::size_t y : all.labels)
      require(y < cfg.data.classes, ErrorKind::config, "IDX label exceeds data.classes");
    all.classes = cfg.data.classes;
  }
  auto [train, test] = split(all, cfg.data.train_frac, seed);
  return {std::move(train), std::move(test)};
}

inline Architecture architecture_for(const ExperimentConfig& cfg, const Dataset& data) {
  Architecture a;
  a.input_dim = data.dim;
  a.classes = data.classes;
  a.block_widths = cfg.model.blocks;
  a.block_depth = cfg.model.block_depth;
  a.head_hidden = cfg.model.head_hidden;
  return a;
}

struct TrainResult {
  MultiHeadNet net;
  std::vector<double> backbone_loss;
  std::vector<std::vector<double>> head_loss;
  std::vector<double> head_accuracy;  // on the test split, heads 1..N
};

inline TrainResult train_seed(const ExperimentConfig& cfg, std::uint64_t seed, const SeedData& data) {
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  TrainResult r;
  r.net = MultiHeadNet::initialized(architecture_for(cfg, data.train), seed);
  r.backbone_loss = train_backbone(r.net, data.train, tc);
  r.head_loss = train_heads(r.net, data.train, tc);
  r.head_accuracy = all_head_accuracies(r.net, data.test);
  return r;
}

namespace detail {

inline void ensure_parent(const fs::path& path) {
  if (!path.has_parent_path()) return;
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  require(!ec, ErrorKind::io, "cannot create " + path.parent_path().string());
}

inline std::ofstream open_out(const fs::path& path) {
  ensure_parent(path);
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
  return os;
}

inline void finish(std::ofstream& os, const fs::path& path) {
  os.flush();
  require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
}

inline std::string real17(double v) { return format_real(v, "%.17g"); }

}  // namespace detail

inline void cmd_gen_data(const ExperimentConfig& cfg, std::size_t seeds, const fs::path& out) {
  for (auto seed : seed_list(cfg, seeds)) {
    const auto data = make_data(cfg, seed);
    const auto dir = out / "data";
    detail::ensure_parent(dir / "x");
    write_dataset_csv(data.train, dir / ("seed_" + std::to_string(seed) + "_train.csv"));
    write_dataset_csv(data.test, dir / ("seed_" + std::to_string(seed) + "_test.csv"));
  }
}

/// Trains one net per seed; writes checkpoints/seed_<s>.ckpt, train_log.csv
/// and head_accuracy.csv (N rows per seed).
inline void cmd_train(const ExperimentConfig& cfg, std::size_t seeds, const fs::path& out) {
  const auto seed_ids = seed_list(cfg, seeds);
  std::vector<std::pair<std::uint64_t, TrainResult>> results;
  for (auto seed : seed_ids) results.emplace_back(seed, train_seed(cfg, seed, make_data(cfg, seed)));

  for (const auto& [seed, r] : results) {
    const auto ckpt = checkpoint_path(out, seed);
    detail::ensure_parent(ckpt);
    save_checkpoint(r.net, ckpt);
  }

  const auto log_path = out / "train_log.csv";
  auto log = detail::open_out(log_path);
  log << kTrainLogCsvHeader << '\n';
  const auto acc_path = out / "head_accuracy.csv";
  auto acc = detail::open_out(acc_path);
  acc << kHeadAccuracyCsvHeader << '\n';
  for (const auto& [seed, r] : results) {
    const std::size_t n_heads = r.net.num_heads();
    for (std::size_t e = 0; e < r.backbone_loss.size(); ++e)
      log << seed << ",backbone," << n_heads << ',' << e << ',' << detail::real17(r.backbone_loss[e]) << '\n';
    for (std::size_t h = 0; h < r.head_loss.size(); ++h)
      for (std::size_t e = 0; e < r.head_loss[h].size(); ++e)
        log << seed << ",head," << h + 1 << ',' << e << ',' << detail::real17(r.head_loss[h][e]) << '\n';
    for (std::size_t h = 0; h < r.head_accuracy.size(); ++h)
      acc << seed << ',' << h + 1 << ',' << format_real(r.head_accuracy[h]) << '\n';
  }
  detail::finish(log, log_path);
  detail::finish(acc, acc_path);
}

/// Loads the checkpoint of `seed` and checks it against the configured
/// architecture.
inline MultiHeadNet load_seed_net(const ExperimentConfig& cfg, std::uint64_t seed, const SeedData& data,
                                  const fs::path& out) {
  const auto path = checkpoint_path(out, seed);
  require(fs::exists(path), ErrorKind::io, "missing checkpoint " + path.string() + " (run train first)");
  MultiHeadNet net = load_checkpoint(path);
  require(net.architecture() == architecture_for(cfg, data.train), ErrorKind::config,
          "checkpoint " + path.string() + " does not match the configured architecture");
  return net;
}

inline double linf_distance(const Dataset& a, const Dataset& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a.dim; ++k) m = std::max(m, std::abs(a.features[i][k] - b.features[i][k]));
  return m;
}

inline void cmd_attack(const ExperimentConfig& cfg, std::size_t seeds, const fs::path& out) {
  std::vector<std::string> rows;
  for (auto seed : seed_list(cfg, seeds)) {
    const auto data = make_data(cfg, seed);
    const auto net = load_seed_net(cfg, seed, data, out);
    const double clean_acc = final_accuracy(net, data.test);
    for (const auto& set : attack_batch(net, data.test, cfg.attack))
      rows.push_back(std::to_string(seed) + ',' + format_real(set.epsilon, "%.6g") + ',' + format_real(clean_acc) +
                     ',' + format_real(final_accuracy(net, set.data)) + ',' +
                     format_real(linf_distance(set.data, data.test)));
  }
  const auto path = out / "attack.csv";
  auto os = detail::open_out(path);
  os << kAttackCsvHeader << '\n';
  for (const auto& r : rows) os << r << '\n';
  detail::finish(os, path);
}

/// Detection rows for one trained net: for every eps, metric and head subset,
/// AUROC of clean-vs-attacked scores plus final-head accuracies.
inline std::vector<DetectionReport> detect_seed(const ExperimentConfig& cfg, const MultiHeadNet& net,
                                                const Dataset& test, std::uint64_t seed,
                                                const std::vector<HeadSubset>& subsets) {
  std::vector<std::vector<std::size_t>> resolved;
  for (const auto& s : subsets) resolved.push_back(s.resolve(net.num_heads()));

  // scores[subset][metric][sample]
  using ScoreTable = std::vector<std::vector<std::vector<double>>>;
  auto score_set = [&](const Dataset& ds, std::size_t& correct) {
    ScoreTable table(resolved.size(), std::vector<std::vector<double>>(cfg.ui.metrics.size()));
    correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto pred = predict_all_heads(net, ds.features[i]);
      if (argmax(pred.rows.back()) == ds.labels[i]) ++correct;
      for (std::size_t s = 0; s < resolved.size(); ++s) {
        const auto est = fit_prediction_set(pred, resolved[s]);
        for (std::size_t m = 0; m < cfg.ui.metrics.size(); ++m)
          table[s][m].push_back(adversarial_score(est, cfg.ui.metrics[m]));
      }
    }
    return table;
  };

  std::size_t clean_correct = 0;
  const ScoreTable clean = score_set(test, clean_correct);
  const double clean_acc = static_cast<double>(clean_correct) / static_cast<double>(test.size());

  std::vector<DetectionReport> rows;
  for (const auto& set : attack_batch(net, test, cfg.attack)) {
    std::size_t adv_correct = 0;
    const ScoreTable adv = score_set(set.data, adv_correct);
    const double adv_acc = static_cast<double>(adv_correct) / static_cast<double>(test.size());
    for (std::size_t m = 0; m < cfg.ui.metrics.size(); ++m) {
      for (std::size_t s = 0; s < resolved.size(); ++s) {
        std::vector<ScoredSample> samples;
        samples.reserve(2 * test.size());
        for (double v : clean[s][m]) samples.push_back({v, SampleLabel::clean});
        for (double v : adv[s][m]) samples.push_back({v, SampleLabel::adversarial});
        rows.push_back({seed, set.epsilon, metric_name(cfg.ui.metrics[m]), HeadSubset::label(resolved[s]),
                        auroc(samples), clean_acc, adv_acc});
      }
    }
  }
  return rows;
}

namespace detail {

inline void run_detection(const ExperimentConfig& cfg, std::size_t seeds, const fs::path& out,
                          const std::vector<HeadSubset>& subsets, const fs::path& csv) {
  std::vector<DetectionReport> rows;
  for (auto seed : seed_list(cfg, seeds)) {
    const auto data = make_data(cfg, seed);
    const auto net = load_seed_net(cfg, seed, data, out);
    for (auto& r : detect_seed(cfg, net, data.test, seed, subsets)) {
      require(std::isfinite(r.auroc), ErrorKind::numeric, "non-finite AUROC");
      rows.push_back(std::move(r));
    }
  }
  auto os = open_out(csv);
  os << kDetectionCsvHeader << '\n';
  for (const auto& r : rows) os << to_csv_row(r) << '\n';
  finish(os, csv);
}

}  // namespace detail

/// detection.csv over the configured ui.subsets.
inline void cmd_detect(const ExperimentConfig& cfg, std::size_t seeds, const fs::path& out) {
  detail::run_detection(cfg, seeds, out, cfg.ui.subsets, out / "detection.csv");
}

/// ablation.csv over the head-combination subsets.
inline void cmd_ablate(const ExperimentConfig& cfg, std::size_t seeds, const fs::path& out) {
  detail::run_detection(cfg, seeds, out, cfg.ablation_subsets(), out / "ablation.csv");
}

/// Parsed detection CSV (header checked).
inline std::vector<DetectionReport> read_detection_csv(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line == kDetectionCsvHeader, ErrorKind::io,
          path.string() + " does not start with the detection CSV header");
  std::vector<DetectionReport> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) c.push_back(cell);
    require(c.size() == 7, ErrorKind::io, "malformed row in " + path.string() + ": " + line);
    try {
      rows.push_back({std::stoull(c[0]), std::stod(c[1]), c[2], c[3], std::stod(c[4]), std::stod(c[5]),
                      std::stod(c[6])});
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::io, "unparseable row in " + path.string() + ": " + line);
    }
  }
  return rows;
}

struct SeriesPoint {
  std::string source;
  std::string metric;
  std::string head_subset;
  double epsilon = 0.0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

/// Mean and population standard deviation (divisor n) over seeds, grouped by
/// (metric, head subset, epsilon). Series keep their first-appearance order
/// and each series is contiguous, in epsilon order. A repeated
/// (seed, metric, head subset, epsilon) row is an io error (malformed file).
inline std::vector<SeriesPoint> aggregate(const std::string& source, const std::vector<DetectionReport>& rows) {
  std::vector<SeriesPoint> points;
  std::vector<std::vector<double>> values;
  std::map<std::tuple<std::string, std::string, double>, std::size_t> index;
  std::set<std::tuple<std::uint64_t, std::string, std::string, double>> seen;
  for (const auto& r : rows) {
    require(seen.emplace(r.seed, r.metric, r.head_subset, r.epsilon).second, ErrorKind::io,
            source + " has a repeated row for seed " + std::to_string(r.seed) + ", " + r.metric + ", heads " +
                r.head_subset);
    const auto key = std::make_tuple(r.metric, r.head_subset, r.epsilon);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, points.size()).first;
      points.push_back({source, r.metric, r.head_subset, r.epsilon, 0.0, 0.0, 0});
      values.emplace_back();
    }
    values[it->second].push_back(r.auroc);
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& v = values[i];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    points[i].mean = mean;
    points[i].std = std::sqrt(var);
    points[i].n = v.size();
  }
  std::vector<std::pair<std::string, std::string>> series_order;
  for (const auto& p : points) {
    const auto key = std::make_pair(p.metric, p.head_subset);
    if (std::find(series_order.begin(), series_order.end(), key) == series_order.end()) series_order.push_back(key);
  }
  auto rank = [&](const SeriesPoint& p) {
    return std::find(series_order.begin(), series_order.end(), std::make_pair(p.metric, p.head_subset)) -
           series_order.begin();
  };
  std::stable_sort(points.begin(), points.end(), [&](const SeriesPoint& a, const SeriesPoint& b) {
    if (rank(a) != rank(b)) return rank(a) < rank(b);
    return a.epsilon < b.epsilon;
  });
  return points;
}

/// Reads detection.csv / ablation.csv from `run_dir`, writes plot_data.csv
/// (AUROC-vs-eps series, mean and population std over seeds) and
/// summary.txt. Returns the summary text.
inline std::string cmd_report(const fs::path& run_dir) {
  std::vector<SeriesPoint> points;
  for (const char* source : {"detection", "ablation"}) {
    const auto path = run_dir / (std::string(source) + ".csv");
    if (!fs::exists(path)) continue;
    const auto agg = aggregate(source, read_detection_csv(path));
    points.insert(points.end(), agg.begin(), agg.end());
  }
  require(!points.empty(), ErrorKind::io, "no detection.csv or ablation.csv under " + run_dir.string());

  const auto plot_path = run_dir / "plot_data.csv";
  auto plot = detail::open_out(plot_path);
  plot << "# auroc_std is the population standard deviation (divisor n_seeds)\n";
  plot << kPlotCsvHeader << '\n';
  for (const auto& p : points)
    plot << p.source << ',' << p.metric << ',' << p.head_subset << ',' << format_real(p.epsilon, "%.6g") << ','
         << format_real(p.mean) << ',' << format_real(p.std) << ',' << p.n << '\n';
  detail::finish(plot, plot_path);

  std::ostringstream text;
  std::string current;
  for (const auto& p : points) {
    const std::string series = p.source + " " + p.metric + " heads " + p.head_subset;
    if (series != current) {
      text << series << " (n_seeds=" << p.n << ")\n";
      current = series;
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "  eps=%-6.3g auroc=%.4f +- %.4f\n", p.epsilon, p.mean, p.std);
    text << buf;
  }
  const auto summary_path = run_dir / "summary.txt";
  auto summary = detail::open_out(summary_path);
  summary << text.str();
  detail::finish(summary, summary_path);
  return text.str();
}

}  // namespace mhui::harness
