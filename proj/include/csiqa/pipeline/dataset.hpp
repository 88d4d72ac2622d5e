#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "csiqa/errors.hpp"
#include "csiqa/numerics/tensor.hpp"

namespace csiqa::pipeline {

struct ManifestRecord {
  std::string path;
  double mos = 0.0;
  std::size_t line = 0;  // 1-based line in the CSV
};

struct Manifest {
  std::vector<ManifestRecord> records;
};

struct ManifestIssue {
  std::size_t line;
  std::string message;
};

// Every bad row of a manifest, reported together.
class ManifestError : public InputError {
 public:
  explicit ManifestError(std::vector<ManifestIssue> issues);
  const std::vector<ManifestIssue>& issues() const { return issues_; }

 private:
  std::vector<ManifestIssue> issues_;
};

// CSV with header `path,mos`, UTF-8, LF line endings.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Seeded 8:2 train/test split by count; validation is a seeded 10% of the
// train share (rounded, never emptying train).
DatasetSplit split_dataset(std::size_t count, std::uint64_t seed, double validation_fraction = 0.1);

struct Sample {
  nn::Tensor image;  // [1,H,W] luminance
  double mos = 0.0;
  std::string name;
};

// Loads the selected records; image paths are taken relative to the current
// directory.
std::vector<Sample> load_samples(const Manifest& manifest, const std::vector<std::size_t>& indices);
std::vector<Sample> load_samples(const Manifest& manifest);

}  // namespace csiqa::pipeline
