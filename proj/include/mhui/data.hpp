#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mhui/error.hpp"
#include "mhui/rng.hpp"
#include "mhui/tensor.hpp"

namespace mhui {

/// Labelled feature vectors; features live in [0, 1] unless stated otherwise.
struct Dataset {
  std::vector<Vector> features;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;
  std::size_t dim = 0;

  std::size_t size() const noexcept { return labels.size(); }

  void validate(double lo = 0.0, double hi = 1.0) const {
    require(!labels.empty(), ErrorKind::empty_input, "dataset is empty");
    require(features.size() == labels.size(), ErrorKind::count_mismatch,
            "feature and label counts differ");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      require(labels[i] < classes, ErrorKind::out_of_range, "label out of range");
      require(features[i].size() == dim, ErrorKind::dimension_mismatch, "feature width differs from dim");
      for (double v : features[i])
        require(v >= lo && v <= hi, ErrorKind::out_of_range, "feature outside domain bounds");
    }
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Isotropic Gaussian blobs, one per class, clipped to [0, 1]. Centers are
/// drawn in [0.2, 0.8]^D and re-drawn (up to 1000 times each) until every
/// pair is at least 4*spread apart. Samples are emitted class by class.
inline Dataset gen_blobs(std::size_t classes, std::size_t n_per_class, std::size_t dim, double spread,
                         std::uint64_t seed) {
  require(classes >= 2, ErrorKind::invalid_argument, "gen_blobs: need at least 2 classes");
  require(dim >= 2, ErrorKind::invalid_argument, "gen_blobs: need dim >= 2");
  require(n_per_class >= 1, ErrorKind::invalid_argument, "gen_blobs: need n_per_class >= 1");
  require(spread >= 0.0 && std::isfinite(spread), ErrorKind::invalid_argument,
          "gen_blobs: spread must be finite and >= 0");

  Rng rng(derive_seed(seed, 0xB10B));
  const double min_dist = 4.0 * spread;
  std::vector<Vector> centers;
  for (std::size_t c = 0; c < classes; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      Vector cand(dim);
      for (double& v : cand) v = rng.uniform(0.2, 0.8);
      placed = std::all_of(centers.begin(), centers.end(), [&](const Vector& other) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) d2 += (cand[k] - other[k]) * (cand[k] - other[k]);
        return std::sqrt(d2) >= min_dist;
      });
      if (placed) centers.push_back(std::move(cand));
    }
    require(placed, ErrorKind::numeric,
            "gen_blobs: could not place center " + std::to_string(c) + " after 1000 retries");
  }

  Dataset ds;
  ds.classes = classes;
  ds.dim = dim;
  ds.features.reserve(classes * n_per_class);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      Vector x(dim);
      for (std::size_t k = 0; k < dim; ++k)
        x[k] = std::clamp(centers[c][k] + spread * rng.normal(), 0.0, 1.0);
      ds.features.push_back(std::move(x));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                               const std::string& what) {
  require(buf.size() >= offset + 4, ErrorKind::truncated, what + ": header cut short");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Parses an IDX (MNIST-style) image/label pair from memory. Pixels are
/// scaled by 1/255; at most max_n samples are kept (0 means all).
inline Dataset parse_idx(const std::vector<unsigned char>& images, const std::vector<unsigned char>& labels,
                         std::size_t max_n) {
  require(detail::read_be32(images, 0, "images") == kIdxImagesMagic, ErrorKind::bad_magic,
          "images file magic is not 0x00000803");
  require(detail::read_be32(labels, 0, "labels") == kIdxLabelsMagic, ErrorKind::bad_magic,
          "labels file magic is not 0x00000801");
  const std::size_t n_images = detail::read_be32(images, 4, "images");
  const std::size_t rows = detail::read_be32(images, 8, "images");
  const std::size_t cols = detail::read_be32(images, 12, "images");
  const std::size_t n_labels = detail::read_be32(labels, 4, "labels");
  require(n_images == n_labels, ErrorKind::count_mismatch,
          std::to_string(n_images) + " images but " + std::to_string(n_labels) + " labels");
  require(rows > 0 && cols > 0, ErrorKind::shape_mismatch, "image dimensions must be positive");

  const std::size_t dim = rows * cols;
  require(images.size() >= 16 + n_images * dim, ErrorKind::truncated, "images file cut short");
  require(labels.size() >= 8 + n_labels, ErrorKind::truncated, "labels file cut short");

  const std::size_t n = max_n == 0 ? n_images : std::min(n_images, max_n);
  require(n >= 1, ErrorKind::empty_input, "IDX files hold no samples");

  Dataset ds;
  ds.dim = dim;
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Vector x(dim);
    for (std::size_t k = 0; k < dim; ++k) x[k] = images[16 + i * dim + k] / 255.0;
    ds.features.push_back(std::move(x));
    ds.labels.push_back(labels[8 + i]);
    max_label = std::max<std::size_t>(max_label, labels[8 + i]);
  }
  ds.classes = std::max<std::size_t>(2, max_label + 1);
  return ds;
}

inline Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        std::size_t max_n) {
  return parse_idx(detail::read_file(images_path), detail::read_file(labels_path), max_n);
}

/// Seeded shuffle, then the first round(train_frac * n) shuffled samples go
/// to the training part. Each part keeps the original relative order.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_frac, std::uint64_t seed) {
  require(train_frac > 0.0 && train_frac < 1.0, ErrorKind::invalid_argument,
          "train_frac must lie in (0, 1)");
  const std::size_t n = ds.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  require(n_train >= 1 && n_train < n, ErrorKind::invalid_argument,
          "split of " + std::to_string(n) + " samples leaves an empty side");

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, 0x5917));
  rng.shuffle(idx);
  std::vector<std::size_t> train_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  auto take = [&](const std::vector<std::size_t>& which) {
    Dataset part;
    part.classes = ds.classes;
    part.dim = ds.dim;
    for (std::size_t i : which) {
      part.features.push_back(ds.features[i]);
      part.labels.push_back(ds.labels[i]);
    }
    return part;
  };
  return {take(train_idx), take(test_idx)};
}

/// CSV dump: header "label,x0,...,x{D-1}", values printed with %.17g.
inline void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
  os << "label";
  for (std::size_t k = 0; k < ds.dim; ++k) os << ",x" << k;
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << ds.labels[i];
    for (double v : ds.features[i]) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
  require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
}

}  // namespace mhui
