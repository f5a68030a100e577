// mhui: train multi-head nets, attack them with FGSM and score the attacks
// with Dirichlet moment-matched uncertainty.
//
//   mhui train  --config cfg.txt --seeds 5 --out runs/a
//   mhui detect --config cfg.txt --seeds 5 --out runs/a
//   mhui report --out runs/a
//
// Exit codes: 0 success, 2 config error, 3 IO error, 4 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mhui/config.hpp"
#include "mhui/error.hpp"
#include "mhui/harness.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(mhui::ErrorKind kind) {
  using mhui::ErrorKind;
  switch (kind) {
    case ErrorKind::config:
      return kExitConfig;
    case ErrorKind::io:
    case ErrorKind::bad_magic:
    case ErrorKind::unsupported_version:
    case ErrorKind::truncated:
    case ErrorKind::shape_mismatch:
    case ErrorKind::count_mismatch:
      return kExitIo;
    default:
      return kExitNumeric;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-head uncertainty inference for FGSM attack detection"};
  app.require_subcommand(1);

  std::string config_path;
  std::size_t seeds = 5;
  std::string out_dir;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (key = value lines)")->required();
    cmd->add_option("--seeds", seeds, "number of runs, seeds s..s+N-1")->check(CLI::PositiveNumber);
    cmd->add_option("--out", out_dir, "output directory (overrides output_dir)");
  };

  auto* gen = app.add_subcommand("gen-data", "write the train/test splits as CSV");
  auto* train = app.add_subcommand("train", "train backbone then heads; write checkpoints");
  auto* attack = app.add_subcommand("attack", "FGSM accuracy over the eps grid");
  auto* detect = app.add_subcommand("detect", "AUROC of uncertainty-based attack detection");
  auto* ablate = app.add_subcommand("ablate", "detection over head combinations");
  for (auto* cmd : {gen, train, attack, detect, ablate}) add_common(cmd);

  auto* report = app.add_subcommand("report", "aggregate detection CSVs over seeds");
  std::string run_dir;
  report->add_option("run_dir", run_dir, "run directory");
  report->add_option("--out", out_dir, "run directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) {
      const std::string dir = !run_dir.empty() ? run_dir : out_dir;
      if (dir.empty()) throw mhui::Error(mhui::ErrorKind::config, "report needs a run directory");
      std::cout << mhui::harness::cmd_report(dir);
      return 0;
    }

    const auto cfg = mhui::load_config(config_path);
    const std::filesystem::path out = out_dir.empty() ? cfg.output_dir : out_dir;
    if (gen->parsed()) mhui::harness::cmd_gen_data(cfg, seeds, out);
    if (train->parsed()) mhui::harness::cmd_train(cfg, seeds, out);
    if (attack->parsed()) mhui::harness::cmd_attack(cfg, seeds, out);
    if (detect->parsed()) mhui::harness::cmd_detect(cfg, seeds, out);
    if (ablate->parsed()) mhui::harness::cmd_ablate(cfg, seeds, out);
    return 0;
  } catch (const mhui::Error& e) {
    std::cerr << "mhui: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "mhui: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "mhui: " << e.what() << '\n';
    return kExitNumeric;
  }
}
