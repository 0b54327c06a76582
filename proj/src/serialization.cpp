#include "vnas/serialization.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "vnas/fusion.hpp"

namespace vnas {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");
static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559,
              "checkpoint format assumes IEEE-754 binary64");

namespace {

constexpr char kMagic[8] = {'V', 'N', 'A', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;
// sanity bounds so a corrupt header cannot trigger huge allocations
constexpr std::uint64_t kMaxTensors = 1u << 20;
constexpr std::uint32_t kMaxNameLen = 4096;
constexpr std::uint32_t kMaxRank = 16;

template <typename T>
void write_raw(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  VNAS_CHECK(in.good(), IoError, "checkpoint stream truncated");
  return v;
}

}  // namespace

void atomic_write_file(const std::string& path,
                       const std::function<void(std::ostream&)>& emit) {
  const std::string tmp = path + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    VNAS_CHECK(out.is_open(), IoError, "cannot open '" + tmp + "' for write");
    emit(out);
    out.flush();
    VNAS_CHECK(out.good(), IoError, "write to '" + tmp + "' failed");
  }
  VNAS_CHECK(std::rename(tmp.c_str(), path.c_str()) == 0, IoError,
             "cannot move '" + tmp + "' into place");
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  VNAS_CHECK(in.is_open(), IoError, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  VNAS_CHECK(!in.bad(), IoError, "read from '" + path + "' failed");
  return buf.str();
}

void write_tensors(std::ostream& out,
                   const std::vector<NamedTensor>& tensors) {
  out.write(kMagic, sizeof(kMagic));
  write_raw<std::uint32_t>(out, kCkptVersion);
  write_raw<std::uint64_t>(out, tensors.size());
  for (const auto& t : tensors) {
    VNAS_CHECK(!t.name.empty() && t.name.size() <= kMaxNameLen, ValueError,
               "tensor name length out of range");
    VNAS_CHECK(t.shape.size() <= kMaxRank, ValueError, "tensor rank too big");
    VNAS_CHECK(shape_numel(t.shape) == static_cast<std::int64_t>(t.data.size()),
               ShapeError, "tensor '" + t.name + "' data/shape mismatch");
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) write_raw<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
}

std::vector<NamedTensor> read_tensors(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  VNAS_CHECK(in.good() && std::memcmp(magic, kMagic, sizeof(magic)) == 0,
             IoError, "not a checkpoint file (bad magic)");
  const auto version = read_raw<std::uint32_t>(in);
  VNAS_CHECK(version == kCkptVersion, IoError,
             "unsupported checkpoint version " + std::to_string(version));
  const auto count = read_raw<std::uint64_t>(in);
  VNAS_CHECK(count <= kMaxTensors, IoError, "implausible tensor count");
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = read_raw<std::uint32_t>(in);
    VNAS_CHECK(name_len >= 1 && name_len <= kMaxNameLen, IoError,
               "implausible tensor name length");
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    VNAS_CHECK(in.good(), IoError, "checkpoint stream truncated");
    const auto rank = read_raw<std::uint32_t>(in);
    VNAS_CHECK(rank <= kMaxRank, IoError, "implausible tensor rank");
    t.shape.resize(rank);
    for (auto& d : t.shape) {
      const auto v = read_raw<std::uint64_t>(in);
      VNAS_CHECK(v >= 1 && v <= (1u << 30), IoError, "implausible dimension");
      d = static_cast<std::int64_t>(v);
    }
    const auto n = shape_numel(t.shape);
    t.data.resize(static_cast<std::size_t>(n));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    VNAS_CHECK(in.good(), IoError, "checkpoint stream truncated");
    tensors.push_back(std::move(t));
  }
  return tensors;
}

void save_checkpoint(const std::string& path, const QNetwork& net) {
  std::vector<NamedTensor> tensors;
  net.for_each_param([&](const std::string& name, const Tensor& t) {
    tensors.push_back(
        {name, t.shape(), std::vector<double>(t.data(), t.data() + t.numel())});
  });
  atomic_write_file(path,
               [&](std::ostream& out) { write_tensors(out, tensors); });
}

void load_checkpoint(const std::string& path, QNetwork& net) {
  std::ifstream in(path, std::ios::binary);
  VNAS_CHECK(in.is_open(), IoError, "cannot open '" + path + "'");
  auto tensors = read_tensors(in);
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) {
    VNAS_CHECK(by_name.emplace(t.name, &t).second, IoError,
               "duplicate tensor '" + t.name + "' in checkpoint");
  }
  std::size_t matched = 0;
  net.for_each_param([&](const std::string& name, Tensor& t) {
    auto it = by_name.find(name);
    VNAS_CHECK(it != by_name.end(), NameError,
               "checkpoint is missing tensor '" + name + "'");
    VNAS_CHECK(it->second->shape == t.shape(), ShapeError,
               "checkpoint tensor '" + name + "' has shape " +
                   shape_str(it->second->shape) + ", network expects " +
                   shape_str(t.shape()));
    std::copy(it->second->data.begin(), it->second->data.end(), t.data());
    ++matched;
  });
  VNAS_CHECK(matched == by_name.size(), NameError,
             "checkpoint carries " + std::to_string(by_name.size()) +
                 " tensors, network has " + std::to_string(matched));
}

namespace {

void emit_ints(std::ostream& out, const std::string& key,
               const std::vector<int>& vals) {
  out << key;
  for (int v : vals) out << ' ' << v;
  out << '\n';
}

void emit_doubles(std::ostream& out, const std::string& key,
                  const std::vector<double>& vals) {
  out << key;
  for (double v : vals) out << ' ' << format_double(v);
  out << '\n';
}

// Key/value view of the parsed file: keys must be unique, and every key
// must be consumed exactly once by the loader.
class FieldMap {
 public:
  explicit FieldMap(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (first) {
        header_ = line;
        first = false;
        continue;
      }
      const auto sp = line.find(' ');
      const std::string key = line.substr(0, sp);
      const std::string rest =
          sp == std::string::npos ? std::string() : line.substr(sp + 1);
      VNAS_CHECK(!key.empty(), ConfigError, "malformed line '" + line + "'");
      VNAS_CHECK(fields_.emplace(key, rest).second, ConfigError,
                 "duplicate key '" + key + "'");
    }
  }

  const std::string& header() const { return header_; }

  std::string take(const std::string& key) {
    auto it = fields_.find(key);
    VNAS_CHECK(it != fields_.end(), ConfigError,
               "missing key '" + key + "'");
    std::string v = std::move(it->second);
    fields_.erase(it);
    return v;
  }

  void expect_empty() const {
    VNAS_CHECK(fields_.empty(), ConfigError,
               "unknown key '" + fields_.begin()->first + "'");
  }

 private:
  std::string header_;
  std::map<std::string, std::string> fields_;
};

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> parts;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) parts.push_back(tok);
  return parts;
}

int parse_int(const std::string& s) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("not an integer: '" + s + "'");
  }
  VNAS_CHECK(pos == s.size(), ConfigError, "not an integer: '" + s + "'");
  return v;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> vals;
  for (const auto& tok : split_ws(s)) vals.push_back(parse_int(tok));
  return vals;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> vals;
  for (const auto& tok : split_ws(s)) vals.push_back(parse_double(tok));
  return vals;
}

}  // namespace

std::string architecture_to_text(const ArchitectureSpec& spec) {
  spec.validate();
  std::ostringstream out;
  out << "vnas-architecture " << spec.version << '\n';
  out << "seed " << spec.seed << '\n';
  out << "iterations " << spec.iterations << '\n';
  const auto& c = spec.config;
  out << "config.image_size " << c.image_size << '\n';
  out << "config.image_channels " << c.image_channels << '\n';
  out << "config.action_dim " << c.action_dim << '\n';
  out << "config.num_sites " << c.num_sites << '\n';
  emit_ints(out, "config.conv_channels", c.conv_channels);
  emit_ints(out, "config.conv_ksize", c.conv_ksize);
  emit_ints(out, "config.conv_stride", c.conv_stride);
  emit_ints(out, "config.dilated_rates", c.dilated_rates);
  out << "config.dilated_channels " << c.dilated_channels << '\n';
  out << "config.dilated_ksize " << c.dilated_ksize << '\n';
  out << "config.dilated_stride " << c.dilated_stride << '\n';
  out << "config.head_hidden " << c.head_hidden << '\n';
  for (int i = 1; i <= c.num_sites; ++i) {
    const auto idx = static_cast<std::size_t>(i - 1);
    const std::string p = "site." + std::to_string(i);
    out << p << ".op " << merge_op_name(spec.site_ops[idx]) << '\n';
    out << p << ".edges";
    for (const auto& e : spec.site_edges[idx])
      out << ' ' << e.peer << ':' << format_double(e.weight);
    out << '\n';
    emit_doubles(out, p + ".mix_logits", spec.final_mix_logits[idx]);
    emit_doubles(out, p + ".edge_logits", spec.final_edge_logits[idx]);
  }
  return out.str();
}

namespace {

ArchitectureSpec architecture_from_text_impl(const std::string& text) {
  FieldMap fields(text);
  const auto head = split_ws(fields.header());
  VNAS_CHECK(head.size() == 2 && head[0] == "vnas-architecture", ConfigError,
             "not an architecture file");
  ArchitectureSpec spec;
  spec.version = parse_int(head[1]);
  VNAS_CHECK(spec.version == 1, ConfigError,
             "unsupported architecture version " + head[1]);
  {
    const std::string s = fields.take("seed");
    std::size_t pos = 0;
    try {
      spec.seed = std::stoull(s, &pos);
    } catch (const std::exception&) {
      throw ConfigError("not a seed: '" + s + "'");
    }
    VNAS_CHECK(pos == s.size(), ConfigError, "not a seed: '" + s + "'");
  }
  spec.iterations = parse_int(fields.take("iterations"));
  auto& c = spec.config;
  c.image_size = parse_int(fields.take("config.image_size"));
  c.image_channels = parse_int(fields.take("config.image_channels"));
  c.action_dim = parse_int(fields.take("config.action_dim"));
  c.num_sites = parse_int(fields.take("config.num_sites"));
  c.conv_channels = parse_ints(fields.take("config.conv_channels"));
  c.conv_ksize = parse_ints(fields.take("config.conv_ksize"));
  c.conv_stride = parse_ints(fields.take("config.conv_stride"));
  c.dilated_rates = parse_ints(fields.take("config.dilated_rates"));
  c.dilated_channels = parse_int(fields.take("config.dilated_channels"));
  c.dilated_ksize = parse_int(fields.take("config.dilated_ksize"));
  c.dilated_stride = parse_int(fields.take("config.dilated_stride"));
  c.head_hidden = parse_int(fields.take("config.head_hidden"));
  VNAS_CHECK(c.num_sites >= 1 && c.num_sites <= 64, ConfigError,
             "implausible site count");
  for (int i = 1; i <= c.num_sites; ++i) {
    const std::string p = "site." + std::to_string(i);
    spec.site_ops.push_back(merge_op_from_name(fields.take(p + ".op")));
    std::vector<RetainedEdge> edges;
    for (const auto& tok : split_ws(fields.take(p + ".edges"))) {
      const auto colon = tok.rfind(':');
      VNAS_CHECK(colon != std::string::npos && colon > 0, ConfigError,
                 "malformed edge '" + tok + "'");
      edges.push_back(
          {tok.substr(0, colon), parse_double(tok.substr(colon + 1))});
    }
    spec.site_edges.push_back(std::move(edges));
    spec.final_mix_logits.push_back(
        parse_doubles(fields.take(p + ".mix_logits")));
    spec.final_edge_logits.push_back(
        parse_doubles(fields.take(p + ".edge_logits")));
  }
  fields.expect_empty();
  spec.validate();
  return spec;
}

}  // namespace

ArchitectureSpec architecture_from_text(const std::string& text) {
  try {
    return architecture_from_text_impl(text);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    // normalize parse-level failures (bad floats, unknown op names) to the
    // one error type a caller has to handle for malformed files
    throw ConfigError(std::string("architecture file invalid: ") + e.what());
  }
}

void save_architecture(const std::string& path,
                       const ArchitectureSpec& spec) {
  const std::string text = architecture_to_text(spec);
  atomic_write_file(path, [&](std::ostream& out) { out << text; });
}

ArchitectureSpec load_architecture(const std::string& path) {
  return architecture_from_text(read_file_bytes(path));
}

}  // namespace vnas
