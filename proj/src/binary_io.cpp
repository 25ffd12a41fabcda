#include "annp/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "annp/error.hpp"

namespace annp {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::uint64_t fnv1a(const std::uint8_t *data, std::size_t size) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

void BinaryWriter::bytes(const void *p, std::size_t n) {
  const auto *b = static_cast<const std::uint8_t *>(p);
  buf_.insert(buf_.end(), b, b + n);
}
void BinaryWriter::u32(std::uint32_t v) { bytes(&v, 4); }
void BinaryWriter::u64(std::uint64_t v) { bytes(&v, 8); }
void BinaryWriter::f64(double v) { bytes(&v, 8); }
void BinaryWriter::str(const std::string &s) {
  u64(s.size());
  bytes(s.data(), s.size());
}

void BinaryWriter::write_with_checksum(const std::filesystem::path &path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InvalidArgument("cannot write " + path.string());
  const std::uint64_t h = fnv1a(buf_.data(), buf_.size());
  os.write(reinterpret_cast<const char *>(buf_.data()),
           static_cast<std::streamsize>(buf_.size()));
  os.write(reinterpret_cast<const char *>(&h), 8);
  if (!os) throw InvalidArgument("write failed for " + path.string());
}

BinaryReader BinaryReader::open_with_checksum(const std::filesystem::path &path) {
  BinaryReader r;
  r.path_ = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(r.path_, 0, "cannot open file");
  r.buf_.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  if (r.buf_.size() < 8) r.fail("file too short");
  r.end_ = r.buf_.size() - 8;
  std::uint64_t stored = 0;
  std::memcpy(&stored, r.buf_.data() + r.end_, 8);
  if (stored != fnv1a(r.buf_.data(), r.end_)) r.fail("checksum mismatch");
  return r;
}

void BinaryReader::bytes(void *p, std::size_t n) {
  if (end_ - pos_ < n) fail("unexpected end of data");
  std::memcpy(p, buf_.data() + pos_, n);
  pos_ += n;
}
std::uint8_t BinaryReader::u8() {
  std::uint8_t v;
  bytes(&v, 1);
  return v;
}
std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  bytes(&v, 4);
  return v;
}
std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  bytes(&v, 8);
  return v;
}
double BinaryReader::f64() {
  double v;
  bytes(&v, 8);
  return v;
}
std::string BinaryReader::str() {
  const std::uint64_t n = count(1);
  std::string s(n, '\0');
  bytes(s.data(), n);
  return s;
}

std::uint64_t BinaryReader::count(std::size_t min_bytes_each) {
  const std::uint64_t n = u64();
  if (min_bytes_each > 0 && n > (end_ - pos_) / min_bytes_each) {
    fail("element count exceeds file size");
  }
  return n;
}

void BinaryReader::expect_end() {
  if (pos_ != end_) fail("trailing bytes");
}

void BinaryReader::fail(const std::string &what) const {
  throw ParseError(path_, 0, what);
}

}  // namespace annp
