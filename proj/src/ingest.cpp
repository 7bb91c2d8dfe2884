#include "dmv/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <ostream>
#include <set>
#include <sstream>

#include "dmv/error.hpp"
#include "dmv/io.hpp"

namespace dmv {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

constexpr std::string_view kTableMagic = "DMVT1";
constexpr std::uint32_t kTableVersion = 1;

}  // namespace

std::string_view role_name(ColumnRole role) {
  switch (role) {
    case ColumnRole::kCategorical: return "categorical";
    case ColumnRole::kNumerical: return "numerical";
    case ColumnRole::kText: return "text";
    case ColumnRole::kGeolocation: return "geolocation";
    case ColumnRole::kTarget: return "target";
    case ColumnRole::kIgnored: return "ignored";
  }
  return "ignored";
}

std::optional<ColumnRole> parse_role(std::string_view text) {
  const auto t = lower(trim(text));
  for (auto role : {ColumnRole::kCategorical, ColumnRole::kNumerical, ColumnRole::kText,
                    ColumnRole::kGeolocation, ColumnRole::kTarget, ColumnRole::kIgnored}) {
    if (t == role_name(role)) return role;
  }
  return std::nullopt;
}

ColumnSchema::ColumnSchema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
  std::set<std::string> seen;
  int targets = 0;
  int geos = 0;
  for (const auto& c : columns_) {
    if (c.name.empty()) throw Error(Errc::kInvalidSchema, "empty column name");
    if (!seen.insert(c.name).second) throw Error(Errc::kInvalidSchema, "duplicate column '" + c.name + "'");
    if (c.role == ColumnRole::kTarget) ++targets;
    if (c.role == ColumnRole::kGeolocation) ++geos;
    if ((c.name == "latitude" || c.name == "longitude") && c.role != ColumnRole::kIgnored) {
      throw Error(Errc::kInvalidSchema,
                  "column '" + c.name + "' collides with the derived geolocation features");
    }
  }
  if (targets != 1) throw Error(Errc::kInvalidSchema, "schema needs exactly one target column");
  if (geos != 1) throw Error(Errc::kInvalidSchema, "schema needs exactly one geolocation column");
}

ColumnSchema ColumnSchema::cdc_default() {
  using R = ColumnRole;
  return ColumnSchema({
      {"rowid", R::kIgnored},
      {"yearstart", R::kNumerical},
      {"yearend", R::kNumerical},
      {"locationabbr", R::kCategorical},
      {"locationdesc", R::kCategorical},
      {"datasource", R::kCategorical},
      {"class", R::kCategorical},
      {"topic", R::kCategorical},
      {"question", R::kCategorical},
      {"data_value_unit", R::kIgnored},
      {"datavaluetypeid", R::kIgnored},
      {"data_value_type", R::kIgnored},
      {"data_value", R::kTarget},
      // Alternate value and confidence limits restate the target.
      {"data_value_alt", R::kIgnored},
      {"data_value_footnote", R::kIgnored},
      {"low_confidence_limit", R::kIgnored},
      {"high_confidence_limit", R::kIgnored},
      {"stratificationcategory1", R::kCategorical},
      {"stratification1", R::kCategorical},
      {"stratificationcategory2", R::kCategorical},
      {"stratification2", R::kCategorical},
      {"geolocation", R::kGeolocation},
      // ID columns mirror their text columns; redundancy elimination removes them.
      {"classid", R::kCategorical},
      {"topicid", R::kCategorical},
      {"questionid", R::kCategorical},
      {"locationid", R::kCategorical},
      {"stratificationcategoryid1", R::kCategorical},
      {"stratificationid1", R::kCategorical},
      {"stratificationcategoryid2", R::kCategorical},
      {"stratificationid2", R::kCategorical},
      {"linespread", R::kCategorical},
  });
}

ColumnSchema ColumnSchema::parse(std::string_view text) {
  std::vector<ColumnSpec> cols;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(Errc::kInvalidSchema, "line " + std::to_string(line_no) + ": expected `name = role`");
    }
    const auto name = lower(trim(line.substr(0, eq)));
    const auto role = parse_role(line.substr(eq + 1));
    if (!role) {
      throw Error(Errc::kInvalidSchema,
                  "line " + std::to_string(line_no) + ": unknown role '" + std::string(trim(line.substr(eq + 1))) + "'");
    }
    cols.push_back({name, *role});
  }
  return ColumnSchema(std::move(cols));
}

ColumnSchema ColumnSchema::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

std::string ColumnSchema::to_text() const {
  std::string out;
  for (const auto& c : columns_) {
    out += c.name;
    out += " = ";
    out += role_name(c.role);
    out += '\n';
  }
  return out;
}

std::optional<std::size_t> ColumnSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ColumnSchema::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw Error(Errc::kMissingColumn, std::string(name));
}

const std::string& ColumnSchema::target() const {
  for (const auto& c : columns_) {
    if (c.role == ColumnRole::kTarget) return c.name;
  }
  throw Error(Errc::kInvalidSchema, "no target column");
}

const std::string& ColumnSchema::geolocation() const {
  for (const auto& c : columns_) {
    if (c.role == ColumnRole::kGeolocation) return c.name;
  }
  throw Error(Errc::kInvalidSchema, "no geolocation column");
}

std::vector<std::string> ColumnSchema::names_with_role(ColumnRole role) const {
  std::vector<std::string> out;
  for (const auto& c : columns_) {
    if (c.role == role) out.push_back(c.name);
  }
  return out;
}

std::vector<Cell> RawTable::column(std::string_view name) const {
  const auto idx = schema.index_of(name);
  std::vector<Cell> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[idx]);
  return out;
}

std::vector<std::vector<std::string>> parse_csv_records(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  if (text.starts_with("\xEF\xBB\xBF")) i = 3;

  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };

  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw Error(Errc::kIoFailure, "unterminated quoted field at end of input");
  if (field_started || !record.empty()) end_record();

  // Blank lines carry no data.
  std::erase_if(records, [](const auto& r) { return r.size() == 1 && r.front().empty(); });
  return records;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos && !field.empty() &&
      field.front() != ' ' && field.back() != ' ') {
    return std::string(field);
  }
  if (field.empty()) return {};
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

RawTable read_csv(std::istream& in, const ColumnSchema& schema) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) throw Error(Errc::kIoFailure, "read failed");

  // Track the physical line each record starts on for diagnostics.
  std::vector<std::size_t> record_lines;
  {
    std::size_t line = 1;
    bool in_quotes = false;
    bool at_record_start = true;
    for (char c : text) {
      if (at_record_start && c != '\n' && c != '\r') {
        record_lines.push_back(line);
        at_record_start = false;
      }
      if (c == '"') in_quotes = !in_quotes;
      if (c == '\n') {
        ++line;
        if (!in_quotes) at_record_start = true;
      }
    }
  }

  auto records = parse_csv_records(text);
  if (records.empty()) throw Error(Errc::kIoFailure, "missing header row");

  const auto& header = records.front();
  std::vector<std::optional<std::size_t>> source_for(schema.size());
  for (std::size_t h = 0; h < header.size(); ++h) {
    if (auto idx = schema.find(lower(trim(header[h])))) source_for[*idx] = h;
  }
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (!source_for[c]) throw Error(Errc::kMissingColumn, "CSV header lacks column '" + schema.columns()[c].name + "'");
  }

  const auto target_idx = schema.index_of(schema.target());
  RawTable table{schema, {}};
  table.rows.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const auto line = r < record_lines.size() ? record_lines[r] : r + 1;
    if (rec.size() != header.size()) {
      throw Error(Errc::kRowArityMismatch, "line " + std::to_string(line) + ": expected " +
                                               std::to_string(header.size()) + " fields, got " +
                                               std::to_string(rec.size()));
    }
    Row row(schema.size());
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const auto& raw = rec[*source_for[c]];
      if (!raw.empty()) row[c] = raw;
    }
    if (const auto& t = row[target_idx]) {
      double v = 0.0;
      if (!io::parse_double(*t, v) || !std::isfinite(v)) {
        throw Error(Errc::kInvalidValue,
                    "line " + std::to_string(line) + ": target '" + *t + "' is not a finite number");
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

RawTable load_csv(const std::filesystem::path& path, const ColumnSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIoFailure, "cannot open " + path.string());
  return read_csv(in, schema);
}

void write_csv(const RawTable& table, std::ostream& out) {
  const auto& cols = table.schema.columns();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c) out << ',';
    out << csv_escape(cols[c].name);
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      if (row[c]) out << csv_escape(*row[c]);
    }
    out << '\n';
  }
}

GeoPoint parse_geolocation(std::string_view cell) {
  const std::string original(cell);
  auto s = trim(cell);
  auto fail = [&]() -> GeoPoint { throw Error(Errc::kUnparseableGeolocation, original); };
  if (s.empty()) return fail();

  double first = 0.0;
  double second = 0.0;
  bool wkt = false;
  if (lower(s.substr(0, std::min<std::size_t>(5, s.size()))) == "point") {
    wkt = true;
    s = trim(s.substr(5));
    if (s.size() < 2 || s.front() != '(' || s.back() != ')') return fail();
    auto inner = trim(s.substr(1, s.size() - 2));
    const auto sp = inner.find_first_of(" \t");
    if (sp == std::string_view::npos) return fail();
    if (!io::parse_double(inner.substr(0, sp), first) || !io::parse_double(trim(inner.substr(sp)), second)) {
      return fail();
    }
  } else {
    if (s.size() < 2 || s.front() != '(' || s.back() != ')') return fail();
    auto inner = s.substr(1, s.size() - 2);
    const auto comma = inner.find(',');
    if (comma == std::string_view::npos) return fail();
    if (!io::parse_double(inner.substr(0, comma), first) || !io::parse_double(inner.substr(comma + 1), second)) {
      return fail();
    }
  }
  if (!std::isfinite(first) || !std::isfinite(second)) return fail();
  // WKT lists longitude first; the tuple form is (lat, lon).
  const GeoPoint p = wkt ? GeoPoint{second, first} : GeoPoint{first, second};
  if (!(p.latitude >= -90.0 && p.latitude <= 90.0)) {
    throw Error(Errc::kOutOfRange, "latitude " + io::format_double(p.latitude) + " in '" + original + "'");
  }
  if (!(p.longitude >= -180.0 && p.longitude <= 180.0)) {
    throw Error(Errc::kOutOfRange, "longitude " + io::format_double(p.longitude) + " in '" + original + "'");
  }
  return p;
}

std::string format_wkt(const GeoPoint& point) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "POINT (%.6f %.6f)", point.longitude, point.latitude);
  return buf;
}

ColumnPartition partition_columns(const RawTable& table) {
  const auto& schema = table.schema;
  ColumnPartition p;
  p.categorical = schema.names_with_role(ColumnRole::kCategorical);
  p.numerical = schema.names_with_role(ColumnRole::kNumerical);
  p.text = schema.names_with_role(ColumnRole::kText);
  p.geolocation = schema.geolocation();
  p.target = schema.target();
  return p;
}

std::vector<std::optional<double>> target_values(const RawTable& table) {
  const auto idx = table.schema.index_of(table.schema.target());
  std::vector<std::optional<double>> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    double v = 0.0;
    if (row[idx] && io::parse_double(*row[idx], v) && std::isfinite(v)) {
      out.emplace_back(v);
    } else {
      out.emplace_back(std::nullopt);
    }
  }
  return out;
}

std::vector<std::size_t> labeled_rows(const RawTable& table) {
  const auto y = target_values(table);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i]) out.push_back(i);
  }
  return out;
}

std::string serialize_table(const RawTable& table) {
  io::Writer w;
  w.bytes(kTableMagic);
  w.u32(kTableVersion);
  w.u64(table.schema.size());
  for (const auto& c : table.schema.columns()) {
    w.str(c.name);
    w.u8(static_cast<std::uint8_t>(c.role));
  }
  w.u64(table.rows.size());
  for (const auto& row : table.rows) {
    for (const auto& cell : row) {
      w.u8(cell ? 1 : 0);
      if (cell) w.str(*cell);
    }
  }
  return w.release();
}

RawTable deserialize_table(std::string_view bytes) {
  if (bytes.size() < kTableMagic.size() || bytes.substr(0, kTableMagic.size()) != kTableMagic) {
    throw Error(Errc::kBadMagic, "not a DMVT1 table artifact");
  }
  io::Reader r(bytes.substr(kTableMagic.size()));
  if (r.remaining() < 4) throw Error(Errc::kVersionUnsupported, "truncated version field");
  if (const auto v = r.u32(); v != kTableVersion) {
    throw Error(Errc::kVersionUnsupported, "table version " + std::to_string(v));
  }
  const auto ncols = r.u64();
  std::vector<ColumnSpec> cols;
  for (std::uint64_t c = 0; c < ncols; ++c) {
    auto name = r.str();
    const auto role = r.u8();
    if (role > static_cast<std::uint8_t>(ColumnRole::kIgnored)) throw Error(Errc::kIoFailure, "bad role byte");
    cols.push_back({std::move(name), static_cast<ColumnRole>(role)});
  }
  RawTable t{ColumnSchema(std::move(cols)), {}};
  const auto nrows = r.u64();
  for (std::uint64_t i = 0; i < nrows; ++i) {
    Row row(ncols);
    for (std::uint64_t c = 0; c < ncols; ++c) {
      if (r.u8()) row[c] = r.str();
    }
    t.rows.push_back(std::move(row));
  }
  if (!r.at_end()) throw Error(Errc::kIoFailure, "trailing bytes after table");
  return t;
}

void save_table(const RawTable& table, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_table(table));
}

RawTable load_table(const std::filesystem::path& path) { return deserialize_table(io::read_file(path)); }

}  // namespace dmv
