#include "csiqa/pipeline/config.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>
#include <system_error>

#include "csiqa/csm.hpp"
#include "csiqa/errors.hpp"

namespace csiqa::pipeline {

std::string to_string(Variant v) { return v == Variant::cl_iqa ? "cl-iqa" : "cs-iqa"; }

Variant parse_variant(const std::string& text) {
  if (text == "cl-iqa") return Variant::cl_iqa;
  if (text == "cs-iqa") return Variant::cs_iqa;
  throw ContractError("unknown variant '" + text + "' (expected cl-iqa or cs-iqa)");
}

double RatioMode::default_ratio() const {
  if (ratios.empty()) throw ContractError("ratio set is empty");
  return arbitrary ? *std::max_element(ratios.begin(), ratios.end()) : ratios.front();
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ContractError("config key '" + key + "': not a number: '" + text + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ContractError("config key '" + key + "': not a non-negative integer: '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ContractError("config key '" + key + "': expected true/false, got '" + text + "'");
}

std::size_t padded_side(std::size_t side, std::size_t unit) { return (side + unit - 1) / unit * unit; }

}  // namespace

std::size_t ModelConfig::max_tokens() const {
  const std::size_t side = max_side / block_size;
  return side * side;
}

encoder::VitConfig ModelConfig::vit() const { return {depth, heads, embed_dim, hidden()}; }

encoder::SstmConfig ModelConfig::sstm() const { return {window, alpha, alpha_learnable, sstm_modules}; }

void ModelConfig::validate() const {
  if (block_size == 0) throw ContractError("block_size must be positive");
  vit().validate();
  sstm().validate();
  if (ratio_mode.ratios.empty()) throw ContractError("ratio set is empty");
  for (double r : ratio_mode.ratios) csm::measurement_rows(r, block_size);
  if (!ratio_mode.arbitrary && ratio_mode.ratios.size() != 1) {
    throw ContractError("fixed ratio mode takes exactly one ratio");
  }
  if (variant == Variant::cs_iqa) {
    const std::size_t rows = csm::measurement_rows(ratio_mode.default_ratio(), block_size);
    if (rows > embed_dim) {
      throw ContractError("cs-iqa needs ceil(ratio*B^2) = " + std::to_string(rows) +
                          " <= embed_dim = " + std::to_string(embed_dim));
    }
  }
  if (crop_size < block_size) throw ContractError("crop_size must be at least block_size");
  const std::size_t side = padded_side(crop_size, block_size * window);
  if (side > max_side) {
    throw ContractError("crop_size " + std::to_string(crop_size) + " pads to " + std::to_string(side) +
                        ", beyond max_side " + std::to_string(max_side));
  }
}

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os << "variant=" << to_string(variant) << '\n'
     << "block_size=" << block_size << '\n'
     << "embed_dim=" << embed_dim << '\n'
     << "depth=" << depth << '\n'
     << "heads=" << heads << '\n'
     << "ff_hidden=" << ff_hidden << '\n'
     << "window=" << window << '\n'
     << "alpha=" << format_double(alpha) << '\n'
     << "alpha_learnable=" << (alpha_learnable ? "true" : "false") << '\n'
     << "sstm_modules=" << sstm_modules << '\n'
     << "ratio_mode=" << (ratio_mode.arbitrary ? "arbitrary" : "fixed") << '\n'
     << "ratios=";
  for (std::size_t i = 0; i < ratio_mode.ratios.size(); ++i) {
    if (i) os << ',';
    os << format_double(ratio_mode.ratios[i]);
  }
  os << '\n'
     << "crop_size=" << crop_size << '\n'
     << "max_side=" << max_side << '\n'
     << "seed=" << seed << '\n';
  return os.str();
}

ModelConfig ModelConfig::parse(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ContractError("config line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  ModelConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "variant") c.variant = parse_variant(v);
    else if (k == "block_size") c.block_size = parse_uint(k, v);
    else if (k == "embed_dim") c.embed_dim = parse_uint(k, v);
    else if (k == "depth") c.depth = parse_uint(k, v);
    else if (k == "heads") c.heads = parse_uint(k, v);
    else if (k == "ff_hidden") c.ff_hidden = parse_uint(k, v);
    else if (k == "window") c.window = parse_uint(k, v);
    else if (k == "alpha") c.alpha = parse_double(k, v);
    else if (k == "alpha_learnable") c.alpha_learnable = parse_bool(k, v);
    else if (k == "sstm_modules") c.sstm_modules = parse_uint(k, v);
    else if (k == "ratio_mode") {
      if (v != "fixed" && v != "arbitrary") throw ContractError("ratio_mode must be fixed or arbitrary");
      c.ratio_mode.arbitrary = v == "arbitrary";
    } else if (k == "ratios") {
      c.ratio_mode.ratios.clear();
      std::istringstream rs(v);
      std::string item;
      while (std::getline(rs, item, ',')) c.ratio_mode.ratios.push_back(parse_double(k, item));
    } else if (k == "crop_size") c.crop_size = parse_uint(k, v);
    else if (k == "max_side") c.max_side = parse_uint(k, v);
    else if (k == "seed") c.seed = parse_uint(k, v);
    else throw ContractError("unknown config key '" + k + "'");
  }
  return c;
}

ModelConfig ModelConfig::desk_scale() { return ModelConfig{}; }

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.block_size = 16;
  c.embed_dim = 768;
  c.depth = 12;
  c.heads = 12;
  c.window = 7;
  c.crop_size = 224;
  c.max_side = 448;
  return c;
}

}  // namespace csiqa::pipeline
