#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fctf::ckpt {

inline constexpr std::uint32_t kFormatVersion = 1;

/// Named-tensor container. On disk: "FCTF", u32 version, u32 entry count,
/// then per entry (u32 name length, name, u8 dtype, u32 rank, i64 dims,
/// u64 offset, u64 byte count), then the little-endian payloads. Entries are
/// stored in name order so identical contents give identical bytes.
class TensorArchive {
 public:
  void put(const std::string& name, const torch::Tensor& t);
  void put_string(const std::string& name, const std::string& value);
  void put_int(const std::string& name, std::int64_t value);

  [[nodiscard]] bool has(const std::string& name) const { return entries_.count(name) != 0; }
  /// Throws PreconditionError when the entry is missing.
  [[nodiscard]] const torch::Tensor& get(const std::string& name) const;
  [[nodiscard]] std::string get_string(const std::string& name) const;
  [[nodiscard]] std::int64_t get_int(const std::string& name) const;
  [[nodiscard]] std::vector<std::string> names() const;
  [[nodiscard]] std::vector<std::string> names_with_prefix(const std::string& prefix) const;

  [[nodiscard]] std::vector<std::uint8_t> to_bytes() const;
  static TensorArchive from_bytes(const std::vector<std::uint8_t>& bytes);
  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  std::map<std::string, torch::Tensor> entries_;
};

/// Stores every parameter and buffer of a module as prefix + "/" + name.
void put_module(TensorArchive& ar, const std::string& prefix, const torch::nn::Module& module);
/// Copies archived values into a module. Missing entries or shape mismatches
/// throw PreconditionError naming the offending tensor.
void get_module(const TensorArchive& ar, const std::string& prefix, torch::nn::Module& module);

/// Adam moments and step counts, keyed by the owning module's parameter names.
void put_adam(TensorArchive& ar, const std::string& prefix, const torch::nn::Module& module, torch::optim::Adam& opt);
void get_adam(const TensorArchive& ar, const std::string& prefix, const torch::nn::Module& module, torch::optim::Adam& opt);

/// FNV-1a of the serialised archive.
std::uint64_t checksum(const TensorArchive& ar);

}  // namespace fctf::ckpt
