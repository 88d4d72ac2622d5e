#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "csiqa/errors.hpp"
#include "csiqa/numerics/tensor.hpp"

namespace csiqa::pipeline {

class CheckpointError : public InputError {
 public:
  using InputError::InputError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointChecksumError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

// Ordered list of named binary records.
//
// File layout, little-endian:
//   "CSIQ"  u32 version  u32 record_count
//   record_count x { u32 name_len, name, u64 blob_len, blob }
//   u32 CRC-32 of every preceding byte
//
// Tensor blobs are u32 rank, rank x u64 extents, then IEEE-754 doubles.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, std::string blob);
  void put_text(const std::string& name, const std::string& text) { put(name, text); }
  void put_tensor(const std::string& name, const nn::Tensor& tensor);
  void put_u64(const std::string& name, std::uint64_t value);
  void put_f64(const std::string& name, double value);

  bool contains(const std::string& name) const;
  const std::string& get(const std::string& name) const;  // throws CheckpointError if absent
  std::string text(const std::string& name) const { return get(name); }
  nn::Tensor tensor(const std::string& name) const;
  std::uint64_t u64(const std::string& name) const;
  double f64(const std::string& name) const;

  const std::vector<std::pair<std::string, std::string>>& records() const { return records_; }

  std::string serialize() const;
  // Either returns a complete checkpoint or throws; never partial state.
  static Checkpoint deserialize(std::string_view bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> records_;
};

std::string encode_tensor(const nn::Tensor& t);
nn::Tensor decode_tensor(std::string_view blob);

}  // namespace csiqa::pipeline
