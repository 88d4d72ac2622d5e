#include "csiqa/pipeline/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace csiqa::pipeline {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'S', 'I', 'Q'};

template <class T>
void append(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(std::string_view data, std::size_t limit) : data_(data), limit_(limit) {}

  template <class T>
  T read() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view bytes(std::uint64_t n) {
    need(n);
    auto v = data_.substr(pos_, n);
    pos_ += n;
    return v;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > limit_ - pos_) throw CheckpointTruncatedError("checkpoint truncated at byte " + std::to_string(pos_));
  }

  std::string_view data_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string encode_tensor(const nn::Tensor& t) {
  std::string out;
  append<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) append<std::uint64_t>(out, e);
  for (double v : t.data()) append<double>(out, v);
  return out;
}

nn::Tensor decode_tensor(std::string_view blob) {
  Reader r(blob, blob.size());
  const auto rank = r.read<std::uint32_t>();
  if (rank == 0 || rank > 8) throw CheckpointError("tensor blob has invalid rank " + std::to_string(rank));
  nn::Shape shape(rank);
  std::uint64_t n = 1;
  for (auto& e : shape) {
    e = r.read<std::uint64_t>();
    if (e == 0 || e > (std::uint64_t{1} << 32)) throw CheckpointError("tensor blob has invalid extent");
    n *= e;
  }
  if (blob.size() - r.pos() != n * sizeof(double)) throw CheckpointError("tensor blob size does not match its shape");
  std::vector<double> v(n);
  std::memcpy(v.data(), blob.data() + r.pos(), n * sizeof(double));
  return nn::Tensor::from(std::move(shape), std::move(v));
}

void Checkpoint::put(const std::string& name, std::string blob) {
  for (auto& rec : records_) {
    if (rec.first == name) {
      rec.second = std::move(blob);
      return;
    }
  }
  records_.emplace_back(name, std::move(blob));
}

void Checkpoint::put_tensor(const std::string& name, const nn::Tensor& tensor) { put(name, encode_tensor(tensor)); }

void Checkpoint::put_u64(const std::string& name, std::uint64_t value) {
  std::string b;
  append(b, value);
  put(name, std::move(b));
}

void Checkpoint::put_f64(const std::string& name, double value) {
  std::string b;
  append(b, value);
  put(name, std::move(b));
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& rec : records_)
    if (rec.first == name) return true;
  return false;
}

const std::string& Checkpoint::get(const std::string& name) const {
  for (const auto& rec : records_)
    if (rec.first == name) return rec.second;
  throw CheckpointError("checkpoint has no record '" + name + "'");
}

nn::Tensor Checkpoint::tensor(const std::string& name) const { return decode_tensor(get(name)); }

std::uint64_t Checkpoint::u64(const std::string& name) const {
  const auto& b = get(name);
  if (b.size() != 8) throw CheckpointError("record '" + name + "' is not a u64");
  std::uint64_t v;
  std::memcpy(&v, b.data(), 8);
  return v;
}

double Checkpoint::f64(const std::string& name) const {
  const auto& b = get(name);
  if (b.size() != 8) throw CheckpointError("record '" + name + "' is not a double");
  double v;
  std::memcpy(&v, b.data(), 8);
  return v;
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic, 4);
  append<std::uint32_t>(out, kVersion);
  append<std::uint32_t>(out, static_cast<std::uint32_t>(records_.size()));
  for (const auto& [name, blob] : records_) {
    append<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    append<std::uint64_t>(out, blob.size());
    out += blob;
  }
  append<std::uint32_t>(out, crc_of(out));
  return out;
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    if (bytes.size() < 4 && std::string_view(kMagic, 4).starts_with(bytes)) {
      throw CheckpointTruncatedError("checkpoint truncated inside the magic");
    }
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  if (bytes.size() < 16) throw CheckpointTruncatedError("checkpoint shorter than its fixed header");
  const std::size_t body_end = bytes.size() - 4;
  Reader r(bytes, body_end);
  r.bytes(4);
  const auto version = r.read<std::uint32_t>();
  if (version != kVersion) {
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) + ", expected " +
                                 std::to_string(kVersion));
  }
  const auto count = r.read<std::uint32_t>();
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.read<std::uint32_t>();
    std::string name(r.bytes(name_len));
    const auto blob_len = r.read<std::uint64_t>();
    std::string blob(r.bytes(blob_len));
    ck.records_.emplace_back(std::move(name), std::move(blob));
  }
  if (r.pos() != body_end) throw CheckpointChecksumError("checkpoint has unexpected bytes after its records");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body_end, 4);
  if (stored != crc_of(bytes.substr(0, body_end))) throw CheckpointChecksumError("checkpoint CRC-32 mismatch");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InputError("failed writing " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace csiqa::pipeline
