#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dmv::io {

// Little-endian binary encoder used by the versioned artifact formats.
class Writer {
 public:
  void bytes(std::string_view raw);
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  // u32 length prefix followed by the raw bytes.
  void str(std::string_view s);

  const std::string& buffer() const noexcept { return buf_; }
  std::string release() noexcept { return std::move(buf_); }

 private:
  std::string buf_;
};

// Bounds-checked decoder; every read past the end throws Errc::kIoFailure.
class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::string_view bytes(std::size_t n);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  bool at_end() const noexcept { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
bool parse_double(std::string_view text, double& out);

}  // namespace dmv::io
