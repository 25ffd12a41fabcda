#pragma once

// Little-endian binary encoding with a trailing FNV-1a checksum, shared by the
// index and checkpoint formats.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace annp {

std::uint64_t fnv1a(const std::uint8_t *data, std::size_t size);

class BinaryWriter {
 public:
  void bytes(const void *p, std::size_t n);
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(const std::string &s);

  // Appends the checksum of the buffer and writes it to `path`.
  void write_with_checksum(const std::filesystem::path &path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

class BinaryReader {
 public:
  // Reads the whole file and verifies the trailing checksum; throws
  // ParseError on I/O failure, truncation or mismatch.
  static BinaryReader open_with_checksum(const std::filesystem::path &path);

  void bytes(void *p, std::size_t n);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  // Reads an element count and checks that `min_bytes_each` * count bytes
  // remain, so corrupt counts fail before allocating.
  std::uint64_t count(std::size_t min_bytes_each);
  void expect_end();
  std::size_t remaining() const { return end_ - pos_; }
  [[noreturn]] void fail(const std::string &what) const;

 private:
  std::string path_;
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

}  // namespace annp
