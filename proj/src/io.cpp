#include "dmv/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include "dmv/error.hpp"

namespace dmv {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kMissingColumn: return "MissingColumn";
    case Errc::kRowArityMismatch: return "RowArityMismatch";
    case Errc::kIoFailure: return "IoFailure";
    case Errc::kInvalidSchema: return "InvalidSchema";
    case Errc::kInvalidValue: return "InvalidValue";
    case Errc::kUnparseableGeolocation: return "UnparseableGeolocation";
    case Errc::kOutOfRange: return "OutOfRange";
    case Errc::kAllMissing: return "AllMissing";
    case Errc::kZeroVariance: return "ZeroVariance";
    case Errc::kRowCountMismatch: return "RowCountMismatch";
    case Errc::kAuthMissing: return "AuthMissing";
    case Errc::kProviderError: return "ProviderError";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kEmptyMatrix: return "EmptyMatrix";
    case Errc::kNonFiniteInput: return "NonFiniteInput";
    case Errc::kBadMagic: return "BadMagic";
    case Errc::kVersionUnsupported: return "VersionUnsupported";
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kEmpty: return "Empty";
    case Errc::kBadK: return "BadK";
    case Errc::kDivisionByZero: return "DivisionByZero";
    case Errc::kInvalidConfig: return "InvalidConfig";
    case Errc::kMissingArtifact: return "MissingArtifact";
  }
  return "Unknown";
}

}  // namespace dmv

namespace dmv::io {

namespace {

template <typename T>
void put_le(std::string& buf, T v) {
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
  }
  buf.append(reinterpret_cast<const char*>(raw), sizeof(T));
}

template <typename T>
T get_le(std::string_view raw) {
  unsigned char tmp[sizeof(T)];
  std::memcpy(tmp, raw.data(), sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(tmp[i], tmp[sizeof(T) - 1 - i]);
  }
  T v;
  std::memcpy(&v, tmp, sizeof(T));
  return v;
}

}  // namespace

void Writer::bytes(std::string_view raw) { buf_.append(raw); }
void Writer::u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
void Writer::u32(std::uint32_t v) { put_le(buf_, v); }
void Writer::u64(std::uint64_t v) { put_le(buf_, v); }
void Writer::f64(double v) { put_le(buf_, std::bit_cast<std::uint64_t>(v)); }

void Writer::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

std::string_view Reader::bytes(std::size_t n) {
  if (n > remaining()) {
    throw Error(Errc::kIoFailure, "truncated input: wanted " + std::to_string(n) + " bytes at offset " +
                                      std::to_string(pos_));
  }
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t Reader::u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
std::uint32_t Reader::u32() { return get_le<std::uint32_t>(bytes(4)); }
std::uint64_t Reader::u64() { return get_le<std::uint64_t>(bytes(8)); }
double Reader::f64() { return std::bit_cast<double>(get_le<std::uint64_t>(bytes(8))); }

std::string Reader::str() {
  const auto n = u32();
  return std::string(bytes(n));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(Errc::kIoFailure, "read failed: " + path.string());
  return std::move(ss).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIoFailure, "cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error(Errc::kIoFailure, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(Errc::kIoFailure, "rename to " + path.string() + " failed");
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

}  // namespace dmv::io
