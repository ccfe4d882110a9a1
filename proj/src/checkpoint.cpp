#include "qppo/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace qppo {

namespace {

constexpr std::string_view kMagic = "qppo-checkpoint";
constexpr int kVersion = 1;
constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string encode_doubles(const Eigen::MatrixXd& m) {
  std::string bytes(static_cast<std::size_t>(m.size()) * 8, '\0');
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(m.data()[i]);
    for (int b = 0; b < 8; ++b) bytes[static_cast<std::size_t>(i) * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  return base64_encode(bytes);
}

Eigen::MatrixXd decode_doubles(std::string_view text, Eigen::Index rows, Eigen::Index cols) {
  const std::string bytes = base64_decode(text);
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * 8)
    throw ConfigError("checkpoint: tensor payload length does not match its shape");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= std::uint64_t(static_cast<unsigned char>(bytes[static_cast<std::size_t>(i) * 8 + b])) << (8 * b);
    m.data()[i] = std::bit_cast<double>(bits);
  }
  return m;
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t n = (std::uint32_t(static_cast<unsigned char>(bytes[i])) << 16) |
                            (std::uint32_t(static_cast<unsigned char>(bytes[i + 1])) << 8) |
                            std::uint32_t(static_cast<unsigned char>(bytes[i + 2]));
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t n = std::uint32_t(static_cast<unsigned char>(bytes[i])) << 16;
    if (rest == 2) n |= std::uint32_t(static_cast<unsigned char>(bytes[i + 1])) << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += rest == 2 ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (std::size_t i = 0; i < kAlphabet.size(); ++i) lookup[static_cast<unsigned char>(kAlphabet[i])] = int(i);
  if (text.size() % 4 != 0) throw ConfigError("base64: length is not a multiple of 4");

  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t n = 0;
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
        n <<= 6;
        continue;
      }
      const int v = lookup[static_cast<unsigned char>(c)];
      if (v < 0 || pad > 0) throw ConfigError("base64: invalid character");
      n = (n << 6) | std::uint32_t(v);
    }
    out += static_cast<char>((n >> 16) & 0xFF);
    if (pad < 2) out += static_cast<char>((n >> 8) & 0xFF);
    if (pad < 1) out += static_cast<char>(n & 0xFF);
  }
  return out;
}

void TensorDocument::put_tensor(const std::string& name, const Eigen::MatrixXd& value) {
  if (has(name)) throw UsageError("checkpoint: duplicate entry " + name);
  index_[name] = entries_.size();
  entries_.push_back({"tensor", name, {}, value, 0});
}

void TensorDocument::put_u64(const std::string& name, std::uint64_t value) {
  if (has(name)) throw UsageError("checkpoint: duplicate entry " + name);
  index_[name] = entries_.size();
  entries_.push_back({"u64", name, {}, {}, value});
}

void TensorDocument::put_mlp(const std::string& name, const Mlp& mlp) {
  validate(mlp);
  if (has(name)) throw UsageError("checkpoint: duplicate entry " + name);
  index_[name] = entries_.size();
  entries_.push_back({"mlp", name, mlp.layer_sizes, {}, 0});
  for (int l = 0; l < mlp.num_layers(); ++l) {
    put_tensor(name + ".W" + std::to_string(l), mlp.weights[l]);
    put_tensor(name + ".b" + std::to_string(l), mlp.biases[l]);
  }
}

bool TensorDocument::has(const std::string& name) const { return index_.contains(name); }

const TensorDocument::Entry& TensorDocument::find(const std::string& name, std::string_view kind) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("checkpoint: missing entry " + name);
  const Entry& e = entries_[it->second];
  if (e.kind != kind) throw ConfigError("checkpoint: entry " + name + " is a " + e.kind + ", expected " + std::string(kind));
  return e;
}

Eigen::MatrixXd TensorDocument::tensor(const std::string& name) const { return find(name, "tensor").tensor; }

Eigen::VectorXd TensorDocument::vector(const std::string& name) const {
  const auto& t = find(name, "tensor").tensor;
  if (t.cols() != 1) throw ConfigError("checkpoint: entry " + name + " is not a column vector");
  return t.col(0);
}

std::uint64_t TensorDocument::u64(const std::string& name) const { return find(name, "u64").u64; }

Mlp TensorDocument::mlp(const std::string& name) const {
  const auto& e = find(name, "mlp");
  Mlp p;
  p.layer_sizes = e.sizes;
  for (std::size_t l = 0; l + 1 < e.sizes.size(); ++l) {
    p.weights.push_back(tensor(name + ".W" + std::to_string(l)));
    p.biases.push_back(vector(name + ".b" + std::to_string(l)));
  }
  validate(p);
  return p;
}

void TensorDocument::write(std::ostream& out) const {
  out << kMagic << ' ' << kVersion << '\n';
  for (const auto& e : entries_) {
    if (e.kind == "mlp") {
      out << "mlp " << e.name << ' ' << e.sizes.size();
      for (int s : e.sizes) out << ' ' << s;
      out << '\n';
    } else if (e.kind == "tensor") {
      out << "tensor " << e.name << ' ' << e.tensor.rows() << ' ' << e.tensor.cols() << ' '
          << (e.tensor.size() == 0 ? std::string("-") : encode_doubles(e.tensor)) << '\n';
    } else {
      out << "u64 " << e.name << ' ' << e.u64 << '\n';
    }
  }
  out << "end\n";
}

TensorDocument TensorDocument::read(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic) throw ConfigError("checkpoint: bad header");
  if (version != kVersion) throw ConfigError("checkpoint: unsupported version " + std::to_string(version));

  TensorDocument doc;
  std::vector<std::string> mlps;
  std::string kind;
  while (in >> kind) {
    if (kind == "end") {
      for (const auto& name : mlps) (void)doc.mlp(name);  // tensors present and shaped
      return doc;
    }
    std::string name;
    in >> name;
    if (kind == "mlp") {
      std::size_t count = 0;
      in >> count;
      std::vector<int> sizes(count);
      for (auto& s : sizes) in >> s;
      if (doc.has(name)) throw ConfigError("checkpoint: duplicate entry " + name);
      doc.index_[name] = doc.entries_.size();
      doc.entries_.push_back({"mlp", name, std::move(sizes), {}, 0});
      mlps.push_back(name);
    } else if (kind == "tensor") {
      Eigen::Index rows = 0, cols = 0;
      std::string payload;
      in >> rows >> cols >> payload;
      if (!in || rows < 0 || cols < 0) throw ConfigError("checkpoint: malformed tensor line for " + name);
      doc.put_tensor(name, payload == "-" ? Eigen::MatrixXd(rows, cols) : decode_doubles(payload, rows, cols));
    } else if (kind == "u64") {
      std::uint64_t v = 0;
      in >> v;
      doc.put_u64(name, v);
    } else {
      throw ConfigError("checkpoint: unknown entry kind '" + kind + "'");
    }
    if (!in) throw ConfigError("checkpoint: truncated entry " + name);
  }
  throw ConfigError("checkpoint: missing end marker");
}

void TensorDocument::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("checkpoint: cannot open " + path + " for writing");
  write(out);
}

TensorDocument TensorDocument::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open " + path);
  return read(in);
}

}  // namespace qppo
