#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "qppo/mlp.hpp"

namespace qppo {

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// Versioned text container of named tensors.
///
///   qppo-checkpoint 1
///   mlp <name> <count> <size0> <size1> ...
///   tensor <name> <rows> <cols> <base64 of little-endian float64, column-major>
///   u64 <name> <decimal>
///   end
///
/// An `mlp` line declares layer sizes; its tensors follow as <name>.W<l> and
/// <name>.b<l>. Payloads are raw IEEE-754 bytes, so round trips are bit-exact.
class TensorDocument {
 public:
  void put_tensor(const std::string& name, const Eigen::MatrixXd& value);
  void put_u64(const std::string& name, std::uint64_t value);
  void put_mlp(const std::string& name, const Mlp& mlp);

  bool has(const std::string& name) const;
  Eigen::MatrixXd tensor(const std::string& name) const;
  Eigen::VectorXd vector(const std::string& name) const;
  std::uint64_t u64(const std::string& name) const;
  Mlp mlp(const std::string& name) const;

  void write(std::ostream& out) const;
  static TensorDocument read(std::istream& in);

  void save(const std::string& path) const;
  static TensorDocument load(const std::string& path);

 private:
  struct Entry {
    std::string kind;
    std::string name;
    std::vector<int> sizes;
    Eigen::MatrixXd tensor;
    std::uint64_t u64 = 0;
  };
  const Entry& find(const std::string& name, std::string_view kind) const;

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace qppo
