#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mhui/error.hpp"
#include "mhui/model.hpp"

namespace mhui {

// Checkpoint text format (UTF-8, '\n' line endings):
//
//   MHUI-CKPT
//   format_version 1
//   input_dim <D>
//   classes <C>
//   block_depth <d>
//   block_widths <w_1> ... <w_N>
//   head_hidden <h>
//   <name> <dim>x<dim>... <value> <value> ...      one line per tensor
//
// Tensor lines appear in the order block.<n>.<layer>.{weights,bias} for every
// block, then head.<n>.<layer>.{weights,bias} for every head. Values are C99
// hexadecimal floating literals ("%a") so a load restores every bit.

inline constexpr const char* kCheckpointMagic = "MHUI-CKPT";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline std::string shape_token(const std::vector<std::size_t>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

inline void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  os << name << ' ' << shape_token(t.shape());
  for (double v : t.values()) os << ' ' << hex_double(v);
  os << '\n';
}

template <typename Fn>
void for_each_named_layer(const MultiHeadNet& net, Fn&& fn) {
  for (std::size_t n = 1; n <= net.num_heads(); ++n)
    for (std::size_t l = 0; l < net.block(n).size(); ++l)
      fn("block." + std::to_string(n) + "." + std::to_string(l), n, l, true);
  for (std::size_t n = 1; n <= net.num_heads(); ++n)
    for (std::size_t l = 0; l < net.head(n).size(); ++l)
      fn("head." + std::to_string(n) + "." + std::to_string(l), n, l, false);
}

class LineReader {
 public:
  explicit LineReader(std::istream& is) : is_(is) {}

  std::string next(const char* what) {
    std::string line;
    if (!std::getline(is_, line)) throw Error(ErrorKind::truncated, std::string("missing ") + what);
    return line;
  }

 private:
  std::istream& is_;
};

inline std::size_t header_value(LineReader& in, const std::string& key) {
  std::istringstream ls(in.next(key.c_str()));
  std::string k;
  long long v = -1;
  ls >> k >> v;
  require(k == key && ls && v >= 0, ErrorKind::shape_mismatch, "malformed header line for " + key);
  return static_cast<std::size_t>(v);
}

inline void read_tensor(LineReader& in, const std::string& name, Tensor& t) {
  const std::string line = in.next(name.c_str());
  std::istringstream ls(line);
  std::string got_name, got_shape;
  ls >> got_name >> got_shape;
  require(got_name == name, ErrorKind::shape_mismatch,
          "expected tensor " + name + ", found '" + got_name + "'");
  require(got_shape == shape_token(t.shape()), ErrorKind::shape_mismatch,
          "tensor " + name + " has shape " + got_shape + ", architecture implies " +
              shape_token(t.shape()));
  std::string tok;
  std::size_t i = 0;
  while (ls >> tok) {
    require(i < t.size(), ErrorKind::shape_mismatch, "tensor " + name + " has extra values");
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    require(end != tok.c_str() && *end == '\0', ErrorKind::truncated,
            "unparseable value '" + tok + "' in " + name);
    t[i++] = v;
  }
  require(i == t.size(), ErrorKind::truncated,
          "tensor " + name + " holds " + std::to_string(i) + " of " + std::to_string(t.size()) +
              " values");
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const MultiHeadNet& net) {
  const Architecture& a = net.architecture();
  os << kCheckpointMagic << '\n' << "format_version " << kCheckpointVersion << '\n';
  os << "input_dim " << a.input_dim << '\n' << "classes " << a.classes << '\n';
  os << "block_depth " << a.block_depth << '\n' << "block_widths";
  for (std::size_t w : a.block_widths) os << ' ' << w;
  os << '\n' << "head_hidden " << a.head_hidden << '\n';
  detail::for_each_named_layer(net, [&](const std::string& base, std::size_t n, std::size_t l, bool is_block) {
    const DenseLayer& layer = is_block ? net.block(n)[l] : net.head(n)[l];
    detail::write_tensor(os, base + ".weights", layer.weights);
    detail::write_tensor(os, base + ".bias", layer.bias);
  });
}

inline MultiHeadNet read_checkpoint(std::istream& is) {
  detail::LineReader in(is);
  std::string magic = in.next("magic");
  if (!magic.empty() && magic.back() == '\r') magic.pop_back();
  require(magic == kCheckpointMagic, ErrorKind::bad_magic, "not an MHUI checkpoint");
  {
    std::istringstream ls(in.next("format_version"));
    std::string k;
    int v = -1;
    ls >> k >> v;
    require(k == "format_version", ErrorKind::shape_mismatch, "malformed format_version line");
    require(v == kCheckpointVersion, ErrorKind::unsupported_version,
            "format_version " + std::to_string(v));
  }
  Architecture a;
  a.input_dim = detail::header_value(in, "input_dim");
  a.classes = detail::header_value(in, "classes");
  a.block_depth = detail::header_value(in, "block_depth");
  {
    std::istringstream ls(in.next("block_widths"));
    std::string k;
    ls >> k;
    require(k == "block_widths", ErrorKind::shape_mismatch, "malformed block_widths line");
    long long w;
    while (ls >> w) {
      require(w > 0, ErrorKind::shape_mismatch, "block width must be positive");
      a.block_widths.push_back(static_cast<std::size_t>(w));
    }
  }
  a.head_hidden = detail::header_value(in, "head_hidden");
  try {
    a.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::shape_mismatch, e.what());
  }

  MultiHeadNet net(a);
  detail::for_each_named_layer(net, [&](const std::string& base, std::size_t n, std::size_t l, bool is_block) {
    DenseLayer& layer = is_block ? net.block(n)[l] : net.head(n)[l];
    detail::read_tensor(in, base + ".weights", layer.weights);
    detail::read_tensor(in, base + ".bias", layer.bias);
  });
  return net;
}

inline void save_checkpoint(const MultiHeadNet& net, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
  write_checkpoint(os, net);
  os.flush();
  require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
}

inline MultiHeadNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
  return read_checkpoint(is);
}

}  // namespace mhui
