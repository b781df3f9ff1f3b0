#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace simnet {

/// Malformed or truncated file; `offset` is the byte position where decoding
/// failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

std::string read_file(const std::filesystem::path& path);

/// Little-endian encoder into a byte buffer.
class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.append(s); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }

  const std::string& data() const { return buf_; }
  void write_file(const std::filesystem::path& path) const;

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

/// Little-endian decoder over an in-memory file; every read checks bounds.
class ByteReader {
 public:
  explicit ByteReader(std::string data) : buf_(std::move(data)) {}

  std::string bytes(std::size_t n, const char* what);
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get(4, what)); }
  std::uint64_t u64(const char* what) { return get(8, what); }
  double f64(const char* what) { return std::bit_cast<double>(get(8, what)); }

  std::uint64_t offset() const { return pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  std::uint64_t get(int n, const char* what);
  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace simnet
