// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   ./acceptance            all criteria
//   ./acceptance 2 4        selected criteria

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "digest.hpp"
#include "mhui/mhui.hpp"
#include "oracles.hpp"

using namespace mhui;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradients of random stacks against central finite differences.

Outcome gradient_exactness() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(20240611);
  std::uniform_int_distribution<std::size_t> in_dim(2, 6), depth(2, 4), classes(2, 5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  std::size_t checked = 0, redraws = 0;
  for (int s = 0; s < 20; ++s) {
    const std::size_t d = in_dim(gen);
    const std::size_t c = classes(gen);
    auto stack = oracle::random_stack(gen, d, depth(gen), 8, c);
    Vector x(d);
    // a relu unit within h of its kink has no derivative for FD to estimate
    do {
      for (double& v : x) v = u(gen);
      ++redraws;
    } while (oracle::min_relu_margin(stack, x) < 1e-4);
    --redraws;
    const std::size_t label = gen() % c;
    const auto fb = forward_backward(stack, x, label);
    auto loss = [&] { return oracle::stack_loss(stack, x, label); };
    for (std::size_t l = 0; l < stack.size(); ++l) {
      auto w = stack[l].weights.values();
      for (std::size_t k = 0; k < w.size(); ++k, ++checked)
        worst = std::max(worst, oracle::relative_error(fb.grads.layers[l].weights[k],
                                                       oracle::central_difference(w[k], 1e-6, loss)));
      auto b = stack[l].bias.values();
      for (std::size_t k = 0; k < b.size(); ++k, ++checked)
        worst = std::max(worst, oracle::relative_error(fb.grads.layers[l].bias[k],
                                                       oracle::central_difference(b[k], 1e-6, loss)));
    }
    for (std::size_t k = 0; k < x.size(); ++k, ++checked)
      worst = std::max(worst, oracle::relative_error(fb.grads.input_grad[k],
                                                     oracle::central_difference(x[k], 1e-6, loss)));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && secs < 10.0,
          std::to_string(checked) + " components, max rel err " + fmt("%.2e", worst) + " (< 1e-5), " +
              std::to_string(redraws) + " inputs redrawn off relu kinks, " + fmt("%.2f s", secs) + " (< 10 s)"};
}

// ---------------------------------------------------------------------------
// 2. fit_dirichlet on exact analytic moments.

Outcome estimator_round_trip() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> a(1.1, 50.0);
  std::uniform_int_distribution<std::size_t> cls(2, 10);
  double worst = 0.0;
  std::size_t clamps = 0;
  for (int t = 0; t < 100; ++t) {
    Vector alpha(cls(gen));
    for (double& v : alpha) v = a(gen);
    Moments m;
    oracle::dirichlet_moments(alpha, m.mean, m.var);
    const auto est = fit_dirichlet(m);
    if (est.clamped) ++clamps;
    for (std::size_t c = 0; c < alpha.size(); ++c)
      worst = std::max(worst, std::abs(est.alpha[c] - alpha[c]) / alpha[c]);
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-9 && clamps == 0 && secs < 1.0,
          "max rel err " + fmt("%.2e", worst) + " (< 1e-9), clamps " + std::to_string(clamps) + ", " +
              fmt("%.3f s", secs) + " (< 1 s)"};
}

// ---------------------------------------------------------------------------
// 3. fit_dirichlet on sample moments of Gamma-sampled Dir(2, 5, 3).

Outcome estimator_recovery() {
  const auto t0 = Clock::now();
  const Vector truth{2, 5, 3};
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PredictionSet p;
    p.rows = oracle::dirichlet_draws(truth, 10000, seed);
    for (std::size_t h = 0; h < p.rows.size(); ++h) p.head_ids.push_back(h + 1);
    const auto est = fit_dirichlet(sample_moments(p));
    for (std::size_t c = 0; c < 3; ++c) worst = std::max(worst, std::abs(est.alpha[c] - truth[c]) / truth[c]);
  }
  const double secs = seconds_since(t0);
  return {worst <= 0.10 && secs < 5.0,
          "5 seeds x 10000 draws, max rel err " + fmt("%.4f", worst) + " (<= 0.10), " + fmt("%.2f s", secs) +
              " (< 5 s)"};
}

// ---------------------------------------------------------------------------
// 4. Rank AUROC against O(n^2) pair counting.

Outcome auroc_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(99);
  std::uniform_int_distribution<std::size_t> size(2, 200);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> level(0, 7);
  double worst = 0.0;
  std::size_t ties = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = size(gen);
    std::vector<ScoredSample> s;
    for (std::size_t i = 0; i < n; ++i) {
      const bool adv = i == 0 || (i != 1 && u(gen) < 0.5);
      const double score = u(gen) < 0.4 ? level(gen) / 7.0 : u(gen) + (adv ? 0.2 : 0.0);
      s.push_back({score, adv ? SampleLabel::adversarial : SampleLabel::clean});
    }
    std::set<double> distinct;
    for (const auto& x : s) distinct.insert(x.score);
    ties += s.size() - distinct.size();
    worst = std::max(worst, std::abs(auroc(s) - oracle::brute_force_auroc(s)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && ties > 0 && secs < 5.0,
          "100 sets, " + std::to_string(ties) + " tied scores, max |diff| " + fmt("%.2e", worst) + " (<= 1e-12), " +
              fmt("%.3f s", secs) + " (< 5 s)"};
}

// ---------------------------------------------------------------------------
// 5-9 share one default-config run over 5 seeds.

struct DeskRun {
  fs::path dir;
  ExperimentConfig cfg;
  std::vector<DetectionReport> detection;
  std::vector<DetectionReport> ablation;
  std::map<std::size_t, std::vector<double>> head_acc;  // head id -> per-seed accuracies
  double seconds = 0.0;
  std::string error;
};

constexpr std::size_t kSeeds = 5;

DeskRun desk_run(const fs::path& dir) {
  DeskRun r;
  r.dir = dir;
  try {
    r.cfg = load_config(fs::path(MHUI_SOURCE_DIR) / "configs" / "default.cfg");
    fs::remove_all(dir);
    const auto t0 = Clock::now();
    harness::cmd_train(r.cfg, kSeeds, dir);
    harness::cmd_detect(r.cfg, kSeeds, dir);
    r.seconds = seconds_since(t0);
    harness::cmd_ablate(r.cfg, kSeeds, dir);
    r.detection = harness::read_detection_csv(dir / "detection.csv");
    r.ablation = harness::read_detection_csv(dir / "ablation.csv");
    std::ifstream acc(dir / "head_accuracy.csv");
    std::string line;
    std::getline(acc, line);
    while (std::getline(acc, line)) {
      std::stringstream ss(line);
      std::string seed, head, value;
      std::getline(ss, seed, ',');
      std::getline(ss, head, ',');
      std::getline(ss, value, ',');
      r.head_acc[std::stoul(head)].push_back(std::stod(value));
    }
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? NAN : s / static_cast<double>(v.size());
}

/// Mean over seeds of `field` for rows matching metric/subset/eps.
double seed_mean(const std::vector<DetectionReport>& rows, const std::string& metric, const std::string& subset,
                 double eps, double DetectionReport::*field) {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.metric == metric && r.head_subset == subset && r.epsilon == eps) v.push_back(r.*field);
  return mean_of(v);
}

Outcome desk_end_to_end(const DeskRun& run) {
  if (!run.error.empty()) return {false, "run failed: " + run.error};
  const auto& grid = run.cfg.attack.eps_grid;
  const double max_eps = grid.back();
  const std::string all = "1+2+3+4";

  double min_clean = 1.0;
  for (const auto& r : run.detection) min_clean = std::min(min_clean, r.clean_accuracy);
  const double adv_acc = seed_mean(run.detection, "ent", all, max_eps, &DetectionReport::adversarial_accuracy);
  const double ent_auc = seed_mean(run.detection, "ent", all, max_eps, &DetectionReport::auroc);

  std::map<std::string, double> rho;
  for (const char* metric : {"max_p", "ent"}) {
    std::vector<double> curve;
    for (double e : grid) curve.push_back(seed_mean(run.detection, metric, all, e, &DetectionReport::auroc));
    rho[metric] = spearman(grid, curve);
  }

  const bool ok_clean = min_clean >= 0.95;
  const bool ok_adv = adv_acc < 0.60;
  const bool ok_auc = ent_auc >= 0.80;
  const bool ok_rho = rho["max_p"] > 0.0 && rho["ent"] > 0.0;
  const bool ok_time = run.seconds < 180.0;
  auto mark = [](bool b) { return b ? "ok" : "MISS"; };
  std::string d = "min clean acc " + fmt("%.4f", min_clean) + " (>= 0.95) " + mark(ok_clean) + "; adv acc at eps=" +
                  fmt("%g", max_eps) + " " + fmt("%.4f", adv_acc) + " (< 0.60) " + mark(ok_adv) +
                  "; mean ent AUROC at max eps " + fmt("%.4f", ent_auc) + " (>= 0.80) " + mark(ok_auc) +
                  "; spearman(eps, AUROC) max_p " + fmt("%+.3f", rho["max_p"]) + " ent " + fmt("%+.3f", rho["ent"]) +
                  " (> 0) " + mark(ok_rho) + "; train+detect " + fmt("%.1f s", run.seconds) + " (< 180 s) " +
                  mark(ok_time);
  return {ok_clean && ok_adv && ok_auc && ok_rho && ok_time, d};
}

Outcome null_epsilon(const DeskRun& run) {
  if (!run.error.empty()) return {false, "run failed: " + run.error};
  double lo = 1.0, hi = 0.0;
  std::size_t n = 0;
  for (const auto& r : run.detection)
    if (r.epsilon == 0.0) {
      lo = std::min(lo, r.auroc);
      hi = std::max(hi, r.auroc);
      ++n;
    }
  return {n == 2 * kSeeds && lo >= 0.45 && hi <= 0.55,
          std::to_string(n) + " eps=0 rows (both metrics), AUROC in [" + fmt("%.4f", lo) + ", " + fmt("%.4f", hi) +
              "] (within [0.45, 0.55])"};
}

Outcome head_depth_trend(const DeskRun& run) {
  if (!run.error.empty()) return {false, "run failed: " + run.error};
  std::vector<double> means;
  for (const auto& [head, v] : run.head_acc) {
    if (v.size() != kSeeds) return {false, "head " + std::to_string(head) + " has " + std::to_string(v.size()) + " seeds"};
    means.push_back(mean_of(v));
  }
  bool ok = means.size() == run.cfg.model.blocks.size();
  std::string d = "mean head accuracy";
  for (std::size_t n = 0; n < means.size(); ++n) {
    d += " " + fmt("%.4f", means[n]);
    if (n > 0 && means[n] < means[n - 1] - 0.03) ok = false;
  }
  return {ok, d + " (each >= previous - 0.03)"};
}

Outcome ablation_direction(const DeskRun& run) {
  if (!run.error.empty()) return {false, "run failed: " + run.error};
  const double max_eps = run.cfg.attack.eps_grid.back();
  bool ok = true;
  std::string d;
  for (const char* metric : {"max_p", "ent"}) {
    const double all = seed_mean(run.ablation, metric, "1+2+3+4", max_eps, &DetectionReport::auroc);
    const double deep = seed_mean(run.ablation, metric, "3+4", max_eps, &DetectionReport::auroc);
    ok = ok && std::isfinite(all) && std::isfinite(deep) && all >= deep - 0.02;
    d += std::string(d.empty() ? "" : "; ") + metric + " all-heads " + fmt("%.4f", all) + " vs deep-half " +
         fmt("%.4f", deep) + " (>= deep - 0.02)";
  }
  return {ok, d};
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism(const DeskRun& first, const DeskRun& second) {
  if (!first.error.empty() || !second.error.empty()) return {false, "run failed"};
  std::vector<std::string> files{"detection.csv", "ablation.csv", "train_log.csv", "head_accuracy.csv"};
  for (std::size_t s = 0; s < kSeeds; ++s) files.push_back("checkpoints/seed_" + std::to_string(s) + ".ckpt");
  std::size_t bytes = 0;
  for (const auto& f : files) {
    const auto a = file_bytes(first.dir / f);
    if (a.empty() || a != file_bytes(second.dir / f)) return {false, f + " differs between runs"};
    bytes += a.size();
  }
  return {true, std::to_string(files.size()) + " files, " + std::to_string(bytes) + " bytes identical across runs"};
}

// ---------------------------------------------------------------------------
// 10. SHA-256 of blocks and final head across train_heads.

Outcome freeze_contract() {
  const auto cfg = load_config(fs::path(MHUI_SOURCE_DIR) / "configs" / "default.cfg");
  const auto data = harness::make_data(cfg, 0);
  auto net = MultiHeadNet::initialized(harness::architecture_for(cfg, data.train), 0);
  TrainConfig tc = cfg.train;
  tc.backbone_epochs = 10;
  train_backbone(net, data.train, tc);
  const auto before = testutil::frozen_digest(net);
  testutil::Sha256 heads_before;
  for (std::size_t n = 1; n < net.num_heads(); ++n) heads_before.update(net.head(n));
  const auto hb = heads_before.hex();
  train_heads(net, data.train, tc);
  const auto after = testutil::frozen_digest(net);
  testutil::Sha256 heads_after;
  for (std::size_t n = 1; n < net.num_heads(); ++n) heads_after.update(net.head(n));
  const bool heads_trained = heads_after.hex() != hb;
  return {before == after && heads_trained,
          "sha256 " + before.substr(0, 16) + "... -> " + after.substr(0, 16) + "...; heads 1..N-1 " +
              (heads_trained ? "changed" : "UNCHANGED")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto want = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };

  const fs::path base = fs::temp_directory_path() / ("mhui_acceptance_" + std::to_string(::getpid()));
  DeskRun first, second;
  const bool need_run = want(5) || want(6) || want(7) || want(8) || want(9);
  if (need_run) first = desk_run(base / "run1");
  if (want(9)) second = desk_run(base / "run2");

  const std::vector<std::pair<int, std::pair<std::string, std::function<Outcome()>>>> criteria{
      {1, {"gradient exactness", gradient_exactness}},
      {2, {"estimator round-trip", estimator_round_trip}},
      {3, {"estimator statistical recovery", estimator_recovery}},
      {4, {"AUROC oracle equivalence", auroc_equivalence}},
      {5, {"end-to-end desk run", [&] { return desk_end_to_end(first); }}},
      {6, {"eps=0 null check", [&] { return null_epsilon(first); }}},
      {7, {"head-depth trend", [&] { return head_depth_trend(first); }}},
      {8, {"ablation direction", [&] { return ablation_direction(first); }}},
      {9, {"determinism", [&] { return determinism(first, second); }}},
      {10, {"freeze contract", freeze_contract}},
  };

  int failures = 0;
  for (const auto& [id, named] : criteria) {
    if (!want(id)) continue;
    Outcome o;
    try {
      o = named.second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("[%s] %2d %-32s %s\n", o.pass ? "PASS" : "FAIL", id, named.first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(base);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
