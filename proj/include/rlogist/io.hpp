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

#include "rlogist/errors.hpp"

namespace rlogist::io {

// Little-endian byte sink.
class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f32s(std::span<const float> vs) {
    if constexpr (std::endian::native == std::endian::little) {
      const auto* p = reinterpret_cast<const char*>(vs.data());
      buf_.insert(buf_.end(), p, p + vs.size_bytes());
    } else {
      for (float v : vs) f32(v);
    }
  }

  const std::string& buffer() const noexcept { return buf_; }

 private:
  std::string buf_;
};

// Little-endian byte source; running past the end raises a truncation error.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string context) : data_(data), context_(std::move(context)) {}

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  void require(std::size_t n, std::size_t expected_total) const {
    if (remaining() < n) {
      throw FormatError(FormatErrorKind::truncated,
                        context_ + ": truncated file, expected " + std::to_string(expected_total) +
                            " bytes but found " + std::to_string(data_.size()));
    }
  }

  std::string_view bytes(std::size_t n) {
    require(n, pos_ + n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint32_t u32() {
    auto b = bytes(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto b = bytes(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  void f32s(std::span<float> out) {
    auto b = bytes(out.size_bytes());
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), b.data(), b.size());
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k)
          v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[4 * i + k])) << (8 * k);
        out[i] = std::bit_cast<float>(v);
      }
    }
  }

 private:
  std::string_view data_;
  std::string context_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::io, "cannot open '" + path.string() + "' for reading");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw FormatError(FormatErrorKind::io, "write failed for '" + path.string() + "'");
}

// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xfu];
    h >>= 4;
  }
  return out;
}

}  // namespace rlogist::io
