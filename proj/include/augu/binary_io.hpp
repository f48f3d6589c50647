#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "augu/errors.hpp"

namespace augu::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for large buffers.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    c = ::crc32(c, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(c);
}

// Append-only little-endian buffer.
class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void magic(std::string_view m) { bytes(m.data(), m.size()); }
  template <class T>
  void pod(T v) {
    bytes(&v, sizeof v);
  }
  template <class T>
  void array(std::span<const T> v) {
    bytes(v.data(), v.size_bytes());
  }

  /// Appends the CRC32 of everything written so far and writes the file.
  void finish(const std::filesystem::path& path) {
    const std::uint32_t c = crc32(buf_);
    pod(c);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw DataError("write failed for " + path.string());
  }

  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  /// Loads the file and verifies its CRC32 trailer.
  explicit Reader(const std::filesystem::path& path) : name_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + name_);
    buf_.assign(std::istreambuf_iterator<char>(in), {});
    if (buf_.size() < 4) throw DataError(name_ + ": truncated file");
    std::uint32_t stored;
    std::memcpy(&stored, buf_.data() + buf_.size() - 4, 4);
    end_ = buf_.size() - 4;
    if (crc32(std::span<const std::uint8_t>(buf_.data(), end_)) != stored) {
      throw DataError(name_ + ": CRC32 mismatch");
    }
  }

  void expect_magic(std::string_view m) {
    need(m.size());
    if (std::string_view(reinterpret_cast<const char*>(buf_.data() + pos_), m.size()) != m) {
      throw DataError(name_ + ": bad magic, expected " + std::string(m));
    }
    pos_ += m.size();
  }
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  template <class T>
  void array(std::span<T> out) {
    need(out.size_bytes());
    std::memcpy(out.data(), buf_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }
  void expect_end() const {
    if (pos_ != end_) throw DataError(name_ + ": " + std::to_string(end_ - pos_) + " trailing bytes");
  }
  const std::string& name() const { return name_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw DataError(name_ + ": truncated file");
  }

  std::string name_;
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

}  // namespace augu::io
