#include "vpx/tdf.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "vpx/common.hpp"

namespace vpx {
namespace {

constexpr char kMagic[4] = {'T', 'D', 'F', '1'};
constexpr std::uint8_t kDtypeF32 = 0;

void put_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

void put_u16(std::ostream& os, std::uint16_t v) {
  put_u8(os, static_cast<std::uint8_t>(v & 0xFF));
  put_u8(os, static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) put_u8(os, static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint8_t get_u8(std::istream& is, const char* what) {
  int c = is.get();
  check(c != std::char_traits<char>::eof(), std::string("truncated record while reading ") + what);
  return static_cast<std::uint8_t>(c);
}

std::uint16_t get_u16(std::istream& is, const char* what) {
  std::uint16_t lo = get_u8(is, what);
  std::uint16_t hi = get_u8(is, what);
  return static_cast<std::uint16_t>(lo | (hi << 8));
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(get_u8(is, what)) << (8 * i);
  return v;
}

}  // namespace

void write_tdf(std::ostream& os, const Tensor& t) {
  check(t.rank() >= 1, "refusing to serialize a rank-0 tensor");
  check(t.rank() <= 255, "tensor rank " + std::to_string(t.rank()) + " exceeds the format limit");
  os.write(kMagic, 4);
  put_u8(os, kDtypeF32);
  put_u8(os, static_cast<std::uint8_t>(t.rank()));
  for (int d : t.shape) {
    check(d > 0, "tensor extent must be positive, got " + std::to_string(d));
    put_u32(os, static_cast<std::uint32_t>(d));
  }
  // Host is little-endian on every supported target; write floats raw.
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  check(os.good(), "stream failure while writing tensor payload");
}

Tensor read_tdf(std::istream& is) {
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  check(is.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0,
        "bad magic, not a tensor record");
  const std::uint8_t dtype = get_u8(is, "dtype");
  check(dtype == kDtypeF32, "unsupported dtype code " + std::to_string(dtype));
  const int rank = get_u8(is, "rank");
  check(rank >= 1, "rank-0 tensor record is invalid");
  std::vector<int> shape(rank);
  std::int64_t n = 1;
  for (int i = 0; i < rank; ++i) {
    const std::uint32_t e = get_u32(is, "extent");
    check(e > 0 && e <= static_cast<std::uint32_t>(std::numeric_limits<int>::max()),
          "extent " + std::to_string(e) + " on axis " + std::to_string(i) + " is out of range");
    shape[i] = static_cast<int>(e);
    n *= shape[i];
    check(n <= (std::int64_t(1) << 34), "tensor payload implausibly large");
  }
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  check(is.gcount() == static_cast<std::streamsize>(t.data.size() * sizeof(float)),
        "truncated payload, expected " + std::to_string(t.numel()) + " floats");
  return t;
}

void save_tdf(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  check(os.is_open(), "cannot open " + path + " for writing");
  write_tdf(os, t);
  os.close();
  check(os.good(), "write to " + path + " failed");
}

Tensor load_tdf(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.is_open(), "cannot open " + path + " for reading");
  return read_tdf(is);
}

void write_archive(std::ostream& os, const TensorArchive& entries) {
  check(entries.size() <= std::numeric_limits<std::uint32_t>::max(), "too many archive entries");
  put_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    check(!name.empty(), "archive entry name must be non-empty");
    check(name.size() <= std::numeric_limits<std::uint16_t>::max(),
          "archive entry name too long: " + name);
    put_u16(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tdf(os, tensor);
  }
  check(os.good(), "stream failure while writing archive");
}

TensorArchive read_archive(std::istream& is) {
  const std::uint32_t count = get_u32(is, "entry count");
  TensorArchive entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = get_u16(is, "entry name length");
    check(len > 0, "archive entry " + std::to_string(i) + " has an empty name");
    std::string name(len, '\0');
    is.read(name.data(), len);
    check(is.gcount() == static_cast<std::streamsize>(len),
          "truncated name in archive entry " + std::to_string(i));
    entries.emplace_back(std::move(name), read_tdf(is));
  }
  return entries;
}

void save_archive(const std::string& path, const TensorArchive& entries) {
  std::ofstream os(path, std::ios::binary);
  check(os.is_open(), "cannot open " + path + " for writing");
  write_archive(os, entries);
  os.close();
  check(os.good(), "write to " + path + " failed");
}

TensorArchive load_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.is_open(), "cannot open " + path + " for reading");
  return read_archive(is);
}

const Tensor* find_entry(const TensorArchive& entries, const std::string& name) {
  for (const auto& [n, t] : entries) {
    if (n == name) return &t;
  }
  return nullptr;
}

}  // namespace vpx
