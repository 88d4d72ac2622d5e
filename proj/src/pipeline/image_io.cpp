#include "csiqa/pipeline/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "csiqa/csm.hpp"
#include "csiqa/errors.hpp"

namespace csiqa::pipeline {

namespace {

// Reads one header token, skipping whitespace and '#' comments.
std::string header_token(const std::string& buf, std::size_t& pos, const std::filesystem::path& path) {
  while (pos < buf.size()) {
    const unsigned char c = static_cast<unsigned char>(buf[pos]);
    if (c == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(c)) {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos])) && buf[pos] != '#') ++pos;
  if (start == pos) throw InputError(path.string() + ": truncated PNM header");
  return buf.substr(start, pos - start);
}

std::size_t header_number(const std::string& buf, std::size_t& pos, const std::filesystem::path& path) {
  const std::string tok = header_token(buf, pos, path);
  if (!std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); }) || tok.size() > 9) {
    throw InputError(path.string() + ": bad PNM header field '" + tok + "'");
  }
  return std::stoul(tok);
}

void write_pnm(const std::filesystem::path& path, const nn::Tensor& image, std::size_t channels,
               const char* magic) {
  if (image.rank() != 3 || image.dim(0) != channels) {
    throw ContractError(std::string(magic) + " output needs a [" + std::to_string(channels) +
                        ",H,W] image, got " + nn::shape_str(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2), plane = h * w;
  std::string out = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const auto v = image.data();
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < channels; ++c) {
      const double x = std::clamp(v[c * plane + i], 0.0, 1.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(x * 255.0))));
    }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw InputError("failed writing " + path.string());
}

}  // namespace

nn::Tensor read_pnm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open image " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6')) {
    throw InputError(path.string() + ": not a binary PGM (P5) or PPM (P6) file");
  }
  const std::size_t channels = buf[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  const std::size_t w = header_number(buf, pos, path);
  const std::size_t h = header_number(buf, pos, path);
  const std::size_t maxval = header_number(buf, pos, path);
  if (w == 0 || h == 0) throw InputError(path.string() + ": zero image extent");
  if (maxval != 255) throw InputError(path.string() + ": only maxval 255 is supported, got " + std::to_string(maxval));
  if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos]))) {
    throw InputError(path.string() + ": malformed PNM header");
  }
  ++pos;  // single whitespace before the raster
  const std::size_t plane = w * h;
  if (buf.size() - pos < plane * channels) throw InputError(path.string() + ": truncated pixel data");
  std::vector<double> px(plane * channels);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < channels; ++c)
      px[c * plane + i] = static_cast<unsigned char>(buf[pos + i * channels + c]) / 255.0;
  return nn::Tensor::from({channels, h, w}, std::move(px));
}

nn::Tensor read_luminance(const std::filesystem::path& path) { return csm::to_luminance(read_pnm(path)); }

void write_pgm(const std::filesystem::path& path, const nn::Tensor& image) { write_pnm(path, image, 1, "P5"); }

void write_ppm(const std::filesystem::path& path, const nn::Tensor& image) { write_pnm(path, image, 3, "P6"); }

}  // namespace csiqa::pipeline
