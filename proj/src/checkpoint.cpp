#include "checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "errors.hpp"

namespace retarget {
namespace {

constexpr std::string_view kMagic = "RTGTCKPT";
constexpr uint8_t kFloat32 = 0;
constexpr uint8_t kInt64 = 1;

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xFF));
    u = static_cast<U>(u >> 8);
  }
}

template <typename T>
void put_array(std::string& out, const T* data, size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    out.append(reinterpret_cast<const char*>(data), count * sizeof(T));
  } else {
    using Bits = std::conditional_t<sizeof(T) == 4, uint32_t, uint64_t>;
    for (size_t i = 0; i < count; ++i) put(out, std::bit_cast<Bits>(data[i]));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i));
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::string_view take(size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  template <typename T>
  void get_array(T* data, size_t count) {
    need(count * sizeof(T));
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(data, bytes_.data() + pos_, count * sizeof(T));
      pos_ += count * sizeof(T);
    } else {
      using Bits = std::conditional_t<sizeof(T) == 4, uint32_t, uint64_t>;
      for (size_t i = 0; i < count; ++i) data[i] = std::bit_cast<T>(get<Bits>());
    }
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) const {
    if (bytes_.size() - pos_ < n) throw ChecksumError("checkpoint is truncated");
  }
  std::string_view bytes_;
  size_t pos_ = 0;
};

uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<size_t>(bytes.size() - offset, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + offset), chunk);
    offset += chunk;
  }
  return static_cast<uint32_t>(crc);
}

}  // namespace

const torch::Tensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

const torch::Tensor& Checkpoint::require(std::string_view name) const {
  if (const auto* t = find(name)) return *t;
  throw InvalidArgument("checkpoint has no tensor '" + std::string(name) + "'");
}

std::vector<NamedTensor> Checkpoint::with_prefix(std::string_view prefix) const {
  std::vector<NamedTensor> out;
  for (const auto& t : tensors) {
    if (t.name.starts_with(prefix)) out.push_back({t.name.substr(prefix.size()), t.value});
  }
  return out;
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  std::string out(kMagic);
  put<uint32_t>(out, checkpoint.format_version);

  const nlohmann::json meta{{"config", to_json(checkpoint.config)},
                            {"iteration", checkpoint.iteration},
                            {"rng_state", checkpoint.rng_state},
                            {"extra", checkpoint.extra}};
  const auto meta_text = meta.dump();
  put<uint64_t>(out, meta_text.size());
  out += meta_text;

  put<uint32_t>(out, static_cast<uint32_t>(checkpoint.tensors.size()));
  for (const auto& [name, value] : checkpoint.tensors) {
    put<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out += name;
    const auto t = value.detach().contiguous().cpu();
    uint8_t dtype = 0;
    if (t.scalar_type() == torch::kFloat32) dtype = kFloat32;
    else if (t.scalar_type() == torch::kInt64) dtype = kInt64;
    else throw InvalidArgument("checkpoint tensor '" + name + "' must be float32 or int64");
    put<uint8_t>(out, dtype);
    put<uint32_t>(out, static_cast<uint32_t>(t.dim()));
    for (int64_t d : t.sizes()) put<int64_t>(out, d);
    const auto n = static_cast<size_t>(t.numel());
    if (dtype == kFloat32) put_array(out, t.data_ptr<float>(), n);
    else put_array(out, t.data_ptr<int64_t>(), n);
  }
  put<uint32_t>(out, crc_of(out));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw ChecksumError("not a checkpoint file (bad magic)");
  }
  const auto body = bytes.substr(0, bytes.size() - 4);
  Reader trailer(bytes.substr(bytes.size() - 4));
  if (trailer.get<uint32_t>() != crc_of(body)) throw ChecksumError("checkpoint checksum mismatch");

  Reader in(body);
  in.take(kMagic.size());
  Checkpoint c;
  c.format_version = in.get<uint32_t>();
  if (c.format_version != Checkpoint::kFormatVersion) {
    throw ChecksumError("unsupported checkpoint format version " + std::to_string(c.format_version));
  }
  const auto meta_len = in.get<uint64_t>();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in.take(meta_len));
    c.config = apply_config(ModelConfig{}, meta.at("config"));
    c.iteration = meta.at("iteration").get<int64_t>();
    c.rng_state = meta.at("rng_state").get<std::string>();
    c.extra = meta.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ChecksumError(std::string("checkpoint metadata is malformed: ") + e.what());
  }

  const auto count = in.get<uint32_t>();
  c.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name(in.take(in.get<uint32_t>()));
    const auto dtype = in.get<uint8_t>();
    const auto ndim = in.get<uint32_t>();
    if (ndim > 8) throw ChecksumError("checkpoint tensor '" + name + "' has too many dims");
    std::vector<int64_t> dims(ndim);
    int64_t numel = 1;
    for (auto& d : dims) {
      d = in.get<int64_t>();
      if (d < 0) throw ChecksumError("checkpoint tensor '" + name + "' has a negative dim");
      numel *= d;
    }
    torch::Tensor t;
    if (dtype == kFloat32) {
      t = torch::empty(dims, torch::kFloat32);
      in.get_array(t.data_ptr<float>(), static_cast<size_t>(numel));
    } else if (dtype == kInt64) {
      t = torch::empty(dims, torch::kInt64);
      in.get_array(t.data_ptr<int64_t>(), static_cast<size_t>(numel));
    } else {
      throw ChecksumError("checkpoint tensor '" + name + "' has unknown dtype");
    }
    c.tensors.push_back({std::move(name), std::move(t)});
  }
  if (!in.done()) throw ChecksumError("checkpoint has trailing bytes");
  return c;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace retarget
