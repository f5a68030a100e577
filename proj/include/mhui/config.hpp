#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mhui/attack.hpp"
#include "mhui/dirichlet.hpp"
#include "mhui/error.hpp"
#include "mhui/train.hpp"

namespace mhui {

enum class DataKind { blobs, idx };

struct DataConfig {
  DataKind kind = DataKind::blobs;
  std::size_t classes = 3;
  std::size_t n_per_class = 400;
  std::size_t dim = 20;
  double spread = 0.08;
  double train_frac = 0.7;
  std::string images;
  std::string labels;
  std::size_t max_n = 0;
};

struct ModelConfig {
  std::vector<std::size_t> blocks{64, 48, 32, 24};
  std::size_t block_depth = 1;
  std::size_t head_hidden = 32;
};

/// A named group of 1-based head ids, e.g. "1+2+4".
struct HeadSubset {
  std::vector<std::size_t> heads;  // empty means "all heads"

  std::vector<std::size_t> resolve(std::size_t num_heads) const {
    std::vector<std::size_t> ids = heads;
    if (ids.empty())
      for (std::size_t n = 1; n <= num_heads; ++n) ids.push_back(n);
    for (std::size_t id : ids)
      require(id >= 1 && id <= num_heads, ErrorKind::config,
              "head id " + std::to_string(id) + " exceeds the net's " + std::to_string(num_heads) + " heads");
    require(ids.size() >= 2, ErrorKind::config, "head subsets need at least 2 heads");
    return ids;
  }

  static std::string label(const std::vector<std::size_t>& ids) {
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? "+" : "") + std::to_string(ids[i]);
    return s;
  }

  friend bool operator==(const HeadSubset&, const HeadSubset&) = default;
};

/// The five head combinations of the head-combination ablation, rescaled from
/// ten heads to `n`: shallow + final, deep half, deeper majority,
/// shallow half + final, all heads. For n = 10 this gives {1-3,10}, {7-10},
/// {4-10}, {1-6,10}, {1-10}. For small n some coincide; repeats are dropped.
inline std::vector<HeadSubset> default_ablation_subsets(std::size_t n) {
  auto count = [n](double frac) {
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(frac * static_cast<double>(n))), 1,
                                   n - 1);
  };
  auto first_plus_final = [&](std::size_t k) {
    HeadSubset s;
    for (std::size_t i = 1; i <= k; ++i) s.heads.push_back(i);
    s.heads.push_back(n);
    return s;
  };
  auto last = [&](std::size_t k) {
    HeadSubset s;
    for (std::size_t i = n - std::max<std::size_t>(k, 2) + 1; i <= n; ++i) s.heads.push_back(i);
    return s;
  };
  HeadSubset all;
  for (std::size_t i = 1; i <= n; ++i) all.heads.push_back(i);
  std::vector<HeadSubset> out;
  for (auto& s : {first_plus_final(count(0.3)), last(count(0.4)), last(count(0.7)), first_plus_final(count(0.6)), all})
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  return out;
}

struct UiConfig {
  std::vector<Metric> metrics{Metric::max_p, Metric::ent};
  std::vector<HeadSubset> subsets{HeadSubset{}};
  std::vector<HeadSubset> ablation_subsets;  // empty: default_ablation_subsets(N)
};

inline std::vector<double> default_eps_grid() {
  std::vector<double> g{0.0};
  for (double e : AttackConfig::twentieths_grid()) g.push_back(e);
  return g;
}

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  AttackConfig attack{default_eps_grid(), 0.0, 1.0};
  UiConfig ui;

  void validate() const {
    if (data.kind == DataKind::blobs) {
      require(data.classes >= 2, ErrorKind::config, "data.classes must be >= 2");
      require(data.dim >= 2, ErrorKind::config, "data.dim must be >= 2");
      require(data.n_per_class >= 1, ErrorKind::config, "data.n_per_class must be >= 1");
      require(data.spread >= 0.0 && std::isfinite(data.spread), ErrorKind::config, "data.spread must be >= 0");
    } else {
      require(!data.images.empty() && !data.labels.empty(), ErrorKind::config,
              "idx data needs data.images and data.labels");
      require(data.classes >= 2, ErrorKind::config, "data.classes must be >= 2");
    }
    require(data.train_frac > 0.0 && data.train_frac < 1.0, ErrorKind::config, "data.train_frac must lie in (0, 1)");
    require(model.blocks.size() >= 2, ErrorKind::config, "model.blocks needs at least 2 blocks");
    for (std::size_t w : model.blocks) require(w >= 1, ErrorKind::config, "block widths must be >= 1");
    require(model.block_depth >= 1, ErrorKind::config, "model.block_depth must be >= 1");
    require(model.head_hidden >= 1, ErrorKind::config, "model.head_hidden must be >= 1");
    train.validate();
    attack.validate();
    require(!ui.metrics.empty(), ErrorKind::config, "ui.metrics is empty");
    require(!ui.subsets.empty(), ErrorKind::config, "ui.subsets is empty");
    for (const auto& m : ui.metrics)
      require(std::count(ui.metrics.begin(), ui.metrics.end(), m) == 1, ErrorKind::config,
              "ui.metrics lists a metric twice");
    auto distinct = [&](const std::vector<HeadSubset>& list, const char* key) {
      std::vector<std::vector<std::size_t>> seen;
      for (const auto& s : list) {
        auto r = s.resolve(model.blocks.size());
        require(std::find(seen.begin(), seen.end(), r) == seen.end(), ErrorKind::config,
                std::string(key) + " lists the same heads twice");
        seen.push_back(std::move(r));
      }
    };
    distinct(ui.subsets, "ui.subsets");
    distinct(ui.ablation_subsets, "ui.ablation_subsets");
  }

  std::vector<HeadSubset> ablation_subsets() const {
    return ui.ablation_subsets.empty() ? default_ablation_subsets(model.blocks.size()) : ui.ablation_subsets;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && p == v.data() + v.size(), ErrorKind::config,
          key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  require(used == v.size() && used > 0 && std::isfinite(out), ErrorKind::config,
          key + ": expected a real number, got '" + v + "'");
  return out;
}

/// "all" or ids/ranges joined by commas, e.g. "1-3,10".
inline HeadSubset parse_subset(const std::string& key, const std::string& text) {
  HeadSubset s;
  if (text == "all") return s;
  for (const auto& part : split_list(text, ',')) {
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      s.heads.push_back(parse_uint(key, part));
    } else {
      const auto lo = parse_uint(key, trim(part.substr(0, dash)));
      const auto hi = parse_uint(key, trim(part.substr(dash + 1)));
      require(lo <= hi, ErrorKind::config, key + ": descending range '" + part + "'");
      for (auto i = lo; i <= hi; ++i) s.heads.push_back(i);
    }
  }
  std::sort(s.heads.begin(), s.heads.end());
  require(std::adjacent_find(s.heads.begin(), s.heads.end()) == s.heads.end(), ErrorKind::config,
          key + ": duplicate head id in '" + text + "'");
  require(s.heads.size() >= 2, ErrorKind::config, key + ": subset '" + text + "' has fewer than 2 heads");
  return s;
}

inline std::vector<HeadSubset> parse_subsets(const std::string& key, const std::string& text) {
  std::vector<HeadSubset> out;
  for (const auto& item : split_list(text, ';')) out.push_back(parse_subset(key, item));
  require(!out.empty(), ErrorKind::config, key + " is empty");
  return out;
}

}  // namespace detail

/// Parses "key = value" lines ('#' starts a comment). Keys are dotted
/// (data.kind, train.head_lr, ...); unknown or repeated keys are errors.
/// The result is validated before it is returned.
inline ExperimentConfig parse_config(const std::string& text) {
  using namespace detail;
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::istringstream is(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::config,
            "line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    require(seen.insert(key).second, ErrorKind::config, "duplicate key " + key);
    require(!v.empty(), ErrorKind::config, key + " has an empty value");

    if (key == "seed") cfg.seed = parse_uint(key, v);
    else if (key == "output_dir") cfg.output_dir = v;
    else if (key == "data.kind") {
      if (v == "blobs") cfg.data.kind = DataKind::blobs;
      else if (v == "idx") cfg.data.kind = DataKind::idx;
      else throw Error(ErrorKind::config, "data.kind must be blobs or idx, got '" + v + "'");
    }
    else if (key == "data.classes") cfg.data.classes = parse_uint(key, v);
    else if (key == "data.n_per_class") cfg.data.n_per_class = parse_uint(key, v);
    else if (key == "data.dim") cfg.data.dim = parse_uint(key, v);
    else if (key == "data.spread") cfg.data.spread = parse_real(key, v);
    else if (key == "data.train_frac") cfg.data.train_frac = parse_real(key, v);
    else if (key == "data.images") cfg.data.images = v;
    else if (key == "data.labels") cfg.data.labels = v;
    else if (key == "data.max_n") cfg.data.max_n = parse_uint(key, v);
    else if (key == "model.blocks") {
      cfg.model.blocks.clear();
      for (const auto& w : split_list(v, ',')) cfg.model.blocks.push_back(parse_uint(key, w));
    }
    else if (key == "model.block_depth") cfg.model.block_depth = parse_uint(key, v);
    else if (key == "model.head_hidden") cfg.model.head_hidden = parse_uint(key, v);
    else if (key == "train.backbone_epochs") cfg.train.backbone_epochs = parse_uint(key, v);
    else if (key == "train.backbone_lr_max") cfg.train.backbone_lr_max = parse_real(key, v);
    else if (key == "train.cycle_frac") cfg.train.cycle_frac = parse_real(key, v);
    else if (key == "train.head_epochs") cfg.train.head_epochs = parse_uint(key, v);
    else if (key == "train.head_lr") cfg.train.head_lr = parse_real(key, v);
    else if (key == "train.batch_size") cfg.train.batch_size = parse_uint(key, v);
    else if (key == "attack.eps_grid") {
      cfg.attack.eps_grid.clear();
      if (v == "twentieths") {
        cfg.attack.eps_grid = AttackConfig::twentieths_grid();
      } else {
        for (const auto& e : split_list(v, ',')) cfg.attack.eps_grid.push_back(parse_real(key, e));
      }
    }
    else if (key == "attack.domain_lo") cfg.attack.domain_lo = parse_real(key, v);
    else if (key == "attack.domain_hi") cfg.attack.domain_hi = parse_real(key, v);
    else if (key == "ui.metrics") {
      cfg.ui.metrics.clear();
      for (const auto& m : split_list(v, ',')) cfg.ui.metrics.push_back(parse_metric(m));
    }
    else if (key == "ui.subsets") cfg.ui.subsets = parse_subsets(key, v);
    else if (key == "ui.ablation_subsets") {
      if (v == "default") cfg.ui.ablation_subsets.clear();
      else cfg.ui.ablation_subsets = parse_subsets(key, v);
    }
    else throw Error(ErrorKind::config, "unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

}  // namespace mhui
