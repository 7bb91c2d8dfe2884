#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dmv/ingest.hpp"
#include "dmv/matrix.hpp"

namespace dmv {

enum class NumericImpute : std::uint8_t { kMean, kMedian };
enum class CategoricalImpute : std::uint8_t { kMode, kUnknown };
enum class ScalerKind : std::uint8_t { kMinMax, kZScore };

inline constexpr std::string_view kUnknownCategory = "Unknown";

struct ImputationPolicy {
  NumericImpute numeric = NumericImpute::kMedian;
  CategoricalImpute categorical = CategoricalImpute::kUnknown;

  bool operator==(const ImputationPolicy&) const = default;
};

std::string_view to_string(NumericImpute p);
std::string_view to_string(CategoricalImpute p);
std::string_view to_string(ScalerKind k);
NumericImpute parse_numeric_impute(std::string_view text);
CategoricalImpute parse_categorical_impute(std::string_view text);
ScalerKind parse_scaler_kind(std::string_view text);

// Mean or median of the present entries. Throws AllMissing if none.
double numeric_fill_value(std::span<const std::optional<double>> column, NumericImpute policy);
std::vector<double> impute_numeric(std::span<const std::optional<double>> column, NumericImpute policy);

// Mode (ties to the lexicographically smallest value) or "Unknown".
std::string categorical_fill_value(std::span<const Cell> column, CategoricalImpute policy);
std::vector<std::string> impute_categorical(std::span<const Cell> column, CategoricalImpute policy);

// Sample Pearson correlation. Throws ZeroVariance for a constant input.
double pearson(std::span<const double> x, std::span<const double> y);

// Bin of each value among `bins` equal-frequency bins: floor(bins * r / n)
// where r counts values strictly below it, so tied values share a bin.
std::vector<std::size_t> equal_frequency_bins(std::span<const double> y, std::size_t bins);

// Plug-in mutual information (nats) between labels x and y binned into
// `bins` equal-frequency bins.
double mutual_information(std::span<const std::string> x, std::span<const double> y, std::size_t bins);

struct RedundancyResult {
  std::vector<std::string> kept;
  std::vector<std::pair<std::string, std::string>> dropped;  // (dropped, kept partner)
};

// Drops one column of every pair whose values map one-to-one over `rows`
// (missing counts as its own value). The name containing "id" goes first,
// otherwise the lexicographically later name.
RedundancyResult drop_redundant(const RawTable& table, std::span<const std::string> columns,
                                std::span<const std::size_t> rows);
RedundancyResult drop_redundant(const RawTable& table, std::span<const std::string> columns);

using ScoreTable = std::map<std::string, double>;

// Union over methods of each method's top-k names by |score| (ties by
// name). "latitude" and "longitude" are always kept; embedding columns
// bypass selection altogether.
std::set<std::string> select_features(const std::map<std::string, ScoreTable>& scores_by_method, std::size_t k);

// Sorted distinct values, plus "Unknown" when requested.
std::vector<std::string> fit_one_hot(std::span<const std::string> column, bool with_unknown);

struct OneHotBlock {
  std::size_t width = 0;
  std::vector<double> values;  // rows x width
  std::size_t unseen = 0;      // rows that fell back to all zeros
};

OneHotBlock apply_one_hot(std::span<const std::string> vocabulary, std::span<const std::string> column);

// (min, max) for min-max scaling, (mean, std) for z-scoring.
struct ScalerEntry {
  ScalerKind kind = ScalerKind::kMinMax;
  double a = 0.0;
  double b = 0.0;

  bool operator==(const ScalerEntry&) const = default;
};

ScalerEntry fit_scaler(std::span<const double> column, ScalerKind kind = ScalerKind::kMinMax);
// Min-max maps to [0, 1] and clips; a constant fitted column maps to 0.
std::vector<double> apply_scaler(const ScalerEntry& entry, std::span<const double> column);

using EncoderState = std::map<std::string, std::vector<std::string>>;
using ScalerState = std::map<std::string, ScalerEntry>;

struct PreprocessConfig {
  ImputationPolicy imputation;
  ScalerKind scaler = ScalerKind::kMinMax;
  std::size_t selection_k = 10;
  std::size_t mi_bins = 10;
  std::size_t selection_trees = 25;
  bool drop_redundant = true;
  std::uint64_t seed = 42;

  bool operator==(const PreprocessConfig&) const = default;
};

// Everything fitted on a training split.
struct PreprocessState {
  PreprocessConfig config;
  std::vector<std::string> categorical;  // selected, ascending
  std::vector<std::string> numerical;    // selected, ascending
  std::map<std::string, std::string> categorical_fill;
  std::map<std::string, double> numeric_fill;  // includes latitude / longitude
  EncoderState encoder;
  ScalerState scaler;  // selected numerics plus latitude / longitude
  std::vector<std::pair<std::string, std::string>> dropped_redundant;
  std::vector<std::string> dropped_empty;  // feature columns with no values in training
  std::map<std::string, ScoreTable> scores;

  bool operator==(const PreprocessState&) const = default;
};

// Fits imputation, redundancy elimination, selection, encoder and scaler on
// `train_rows` only. Rows without a target are skipped.
PreprocessState fit_preprocessor(const RawTable& table, std::span<const std::size_t> train_rows,
                                 const PreprocessConfig& config);

// Column layout: one-hot blocks (by column name), scaled numerics (by name),
// latitude and longitude, embedding dims e0..e(D-1). Columns whose group tag
// is in `excluded_groups` are left out; nothing else changes. `embeddings`,
// when given, must be aligned with the table's rows. Every row needs a
// target.
FeatureMatrix assemble_matrix(const RawTable& table, std::span<const std::size_t> rows,
                              const PreprocessState& state, const EmbeddingTable* embeddings,
                              const std::set<std::string>& excluded_groups);
FeatureMatrix assemble_matrix(const RawTable& table, std::span<const std::size_t> rows,
                              const PreprocessState& state, const EmbeddingTable* embeddings, bool include_geo);

// Latitude / longitude per row; missing cells are nullopt.
std::vector<std::optional<GeoPoint>> geolocations(const RawTable& table);

// `DMVP1` preprocessing state file.
std::string serialize_preprocess(const PreprocessState& state);
PreprocessState deserialize_preprocess(std::string_view bytes);
void save_preprocess(const PreprocessState& state, const std::filesystem::path& path);
PreprocessState load_preprocess(const std::filesystem::path& path);

}  // namespace dmv
