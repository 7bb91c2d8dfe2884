#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dmv {

enum class ColumnRole { kCategorical, kNumerical, kText, kGeolocation, kTarget, kIgnored };

std::string_view role_name(ColumnRole role);
std::optional<ColumnRole> parse_role(std::string_view text);

struct ColumnSpec {
  std::string name;
  ColumnRole role = ColumnRole::kIgnored;

  bool operator==(const ColumnSpec&) const = default;
};

// Ordered column declarations. Construction validates: names unique, exactly
// one target, exactly one geolocation column, and no feature column may be
// called "latitude" or "longitude" (those names belong to the geolocation
// group).
class ColumnSchema {
 public:
  ColumnSchema() = default;
  explicit ColumnSchema(std::vector<ColumnSpec> columns);

  // The shipped 31-column CDC healthy-aging layout.
  static ColumnSchema cdc_default();

  // Line-oriented `name = role` pairs; `#` starts a comment.
  static ColumnSchema parse(std::string_view text);
  static ColumnSchema load(const std::filesystem::path& path);
  std::string to_text() const;

  const std::vector<ColumnSpec>& columns() const noexcept { return columns_; }
  std::size_t size() const noexcept { return columns_.size(); }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;  // throws MissingColumn
  const std::string& target() const;
  const std::string& geolocation() const;
  std::vector<std::string> names_with_role(ColumnRole role) const;

  bool operator==(const ColumnSchema&) const = default;

 private:
  std::vector<ColumnSpec> columns_;
};

using Cell = std::optional<std::string>;
using Row = std::vector<Cell>;

struct RawTable {
  ColumnSchema schema;
  std::vector<Row> rows;

  std::size_t row_count() const noexcept { return rows.size(); }
  std::size_t column_count() const noexcept { return schema.size(); }
  std::vector<Cell> column(std::string_view name) const;

  bool operator==(const RawTable&) const = default;
};

// CSV (RFC 4180 quoting) with a required header row. Header names are matched
// to the schema case-insensitively and reordered to schema order; CSV columns
// absent from the schema are skipped. Empty cells become missing.
RawTable read_csv(std::istream& in, const ColumnSchema& schema);
RawTable load_csv(const std::filesystem::path& path, const ColumnSchema& schema);
void write_csv(const RawTable& table, std::ostream& out);

// Splits one CSV document into records of raw fields.
std::vector<std::vector<std::string>> parse_csv_records(std::string_view text);
std::string csv_escape(std::string_view field);

struct GeoPoint {
  double latitude = 0.0;
  double longitude = 0.0;

  bool operator==(const GeoPoint&) const = default;
};

// Accepts WKT `POINT (<lon> <lat>)` and the tuple form `(<lat>, <lon>)`.
GeoPoint parse_geolocation(std::string_view cell);
// WKT with six decimals.
std::string format_wkt(const GeoPoint& point);

struct ColumnPartition {
  std::vector<std::string> categorical;
  std::vector<std::string> numerical;
  std::vector<std::string> text;
  std::string geolocation;
  std::string target;
};

// Names in schema order. The target never appears in a feature set.
ColumnPartition partition_columns(const RawTable& table);

// Parsed target per row; missing or blank cells are nullopt.
std::vector<std::optional<double>> target_values(const RawTable& table);
std::vector<std::size_t> labeled_rows(const RawTable& table);

// `table.dmv` artifact (magic DMVT1).
std::string serialize_table(const RawTable& table);
RawTable deserialize_table(std::string_view bytes);
void save_table(const RawTable& table, const std::filesystem::path& path);
RawTable load_table(const std::filesystem::path& path);

}  // namespace dmv
