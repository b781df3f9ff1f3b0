#include "simnet/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace simnet {

void ByteWriter::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string ByteReader::bytes(std::size_t n, const char* what) {
  if (buf_.size() - pos_ < n) throw FormatError(std::string("truncated ") + what, pos_);
  std::string out = buf_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::uint64_t ByteReader::get(int n, const char* what) {
  if (buf_.size() - pos_ < static_cast<std::size_t>(n)) throw FormatError(std::string("truncated ") + what, pos_);
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
  pos_ += n;
  return v;
}

}  // namespace simnet
