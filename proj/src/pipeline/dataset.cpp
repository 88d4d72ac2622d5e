#include "csiqa/pipeline/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <system_error>

#include "csiqa/pipeline/config.hpp"
#include "csiqa/pipeline/image_io.hpp"

namespace csiqa::pipeline {

namespace {

std::string describe(const std::vector<ManifestIssue>& issues) {
  std::ostringstream os;
  os << "manifest has " << issues.size() << " bad row(s)";
  for (const auto& i : issues) os << "\n  line " << i.line << ": " << i.message;
  return os.str();
}

}  // namespace

ManifestError::ManifestError(std::vector<ManifestIssue> issues)
    : InputError(describe(issues)), issues_(std::move(issues)) {}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open manifest " + path.string());
  Manifest m;
  std::vector<ManifestIssue> issues;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      issues.push_back({lineno, "CRLF line ending (LF required)"});
      line.pop_back();
    }
    if (!header_seen) {
      if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      if (line != "path,mos") issues.push_back({lineno, "header must be 'path,mos'"});
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      issues.push_back({lineno, "expected 'path,mos'"});
      continue;
    }
    ManifestRecord rec;
    rec.path = line.substr(0, comma);
    rec.line = lineno;
    const std::string mos = line.substr(comma + 1);
    auto res = std::from_chars(mos.data(), mos.data() + mos.size(), rec.mos);
    if (rec.path.empty()) {
      issues.push_back({lineno, "empty image path"});
    } else if (res.ec != std::errc{} || res.ptr != mos.data() + mos.size() || !std::isfinite(rec.mos)) {
      issues.push_back({lineno, "mos '" + mos + "' is not a finite number"});
    } else {
      m.records.push_back(std::move(rec));
    }
  }
  if (!header_seen) issues.push_back({1, "empty manifest (missing 'path,mos' header)"});
  if (!issues.empty()) throw ManifestError(std::move(issues));
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path.string() + " for writing");
  f << "path,mos\n";
  for (const auto& r : manifest.records) f << r.path << ',' << format_double(r.mos) << '\n';
  if (!f) throw InputError("failed writing " + path.string());
}

DatasetSplit split_dataset(std::size_t count, std::uint64_t seed, double validation_fraction) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::lround(0.8 * static_cast<double>(count)));
  DatasetSplit s;
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  auto n_val = static_cast<std::size_t>(std::lround(validation_fraction * static_cast<double>(n_train)));
  if (n_val >= n_train) n_val = n_train > 0 ? n_train - 1 : 0;
  s.validation.assign(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(train.begin() + static_cast<std::ptrdiff_t>(n_val), train.end());
  return s;
}

std::vector<Sample> load_samples(const Manifest& manifest, const std::vector<std::size_t>& indices) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    const auto& r = manifest.records.at(i);
    out.push_back({read_luminance(r.path), r.mos, r.path});
  }
  return out;
}

std::vector<Sample> load_samples(const Manifest& manifest) {
  std::vector<std::size_t> all(manifest.records.size());
  std::iota(all.begin(), all.end(), 0);
  return load_samples(manifest, all);
}

}  // namespace csiqa::pipeline
