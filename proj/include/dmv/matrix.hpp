#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dmv {

inline constexpr const char* kGroupGeolocation = "geolocation";
inline constexpr const char* kGroupNumeric = "numeric";
inline constexpr const char* kGroupEmbedding = "embedding";
inline constexpr const char* kOneHotGroupPrefix = "onehot:";

// Dense row-major n x d design matrix with named, group-tagged columns and
// the paired regression target.
struct FeatureMatrix {
  std::vector<std::string> column_names;
  std::size_t rows = 0;
  std::vector<double> values;
  std::vector<double> target;
  std::map<std::string, std::string> group_tags;
  std::vector<std::string> warnings;

  std::size_t cols() const noexcept { return column_names.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values).subspan(r * cols(), cols());
  }
};

// Per-row embedding vectors aligned with the rows of a RawTable.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<double> values;

  std::size_t rows() const noexcept { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values).subspan(r * dim, dim);
  }
};

}  // namespace dmv
