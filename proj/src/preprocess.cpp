#include "dmv/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "dmv/error.hpp"
#include "dmv/forest.hpp"
#include "dmv/io.hpp"

namespace dmv {

namespace {

constexpr std::string_view kPrepMagic = "DMVP1";
constexpr std::uint32_t kPrepVersion = 1;
constexpr std::string_view kMissingToken = "\x1f<missing>";

bool contains_id(std::string_view name) {
  for (std::size_t i = 0; i + 1 < name.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(name[i])) == 'i' &&
        std::tolower(static_cast<unsigned char>(name[i + 1])) == 'd') {
      return true;
    }
  }
  return false;
}

std::optional<double> parse_numeric_cell(const Cell& cell, std::string_view column, std::size_t row) {
  if (!cell) return std::nullopt;
  double v = 0.0;
  if (!io::parse_double(*cell, v) || !std::isfinite(v)) {
    throw Error(Errc::kInvalidValue,
                "column '" + std::string(column) + "', row " + std::to_string(row) + ": '" + *cell + "' is not numeric");
  }
  return v;
}

// (dropped, kept) for a bijective pair.
std::pair<std::string, std::string> drop_order(const std::string& a, const std::string& b) {
  const bool a_id = contains_id(a);
  const bool b_id = contains_id(b);
  if (a_id != b_id) return a_id ? std::pair{a, b} : std::pair{b, a};
  return a < b ? std::pair{b, a} : std::pair{a, b};
}

}  // namespace

std::string_view to_string(NumericImpute p) { return p == NumericImpute::kMean ? "mean" : "median"; }
std::string_view to_string(CategoricalImpute p) { return p == CategoricalImpute::kMode ? "mode" : "unknown"; }
std::string_view to_string(ScalerKind k) { return k == ScalerKind::kMinMax ? "minmax" : "zscore"; }

NumericImpute parse_numeric_impute(std::string_view text) {
  if (text == "mean") return NumericImpute::kMean;
  if (text == "median") return NumericImpute::kMedian;
  throw Error(Errc::kInvalidConfig, "numeric imputation must be mean|median, got '" + std::string(text) + "'");
}

CategoricalImpute parse_categorical_impute(std::string_view text) {
  if (text == "mode") return CategoricalImpute::kMode;
  if (text == "unknown" || text == "unknown_category") return CategoricalImpute::kUnknown;
  throw Error(Errc::kInvalidConfig, "categorical imputation must be mode|unknown, got '" + std::string(text) + "'");
}

ScalerKind parse_scaler_kind(std::string_view text) {
  if (text == "minmax") return ScalerKind::kMinMax;
  if (text == "zscore") return ScalerKind::kZScore;
  throw Error(Errc::kInvalidConfig, "scaler must be minmax|zscore, got '" + std::string(text) + "'");
}

double numeric_fill_value(std::span<const std::optional<double>> column, NumericImpute policy) {
  std::vector<double> present;
  for (const auto& v : column) {
    if (v) present.push_back(*v);
  }
  if (present.empty()) throw Error(Errc::kAllMissing, "numeric column has no values");
  if (policy == NumericImpute::kMean) {
    return std::accumulate(present.begin(), present.end(), 0.0) / static_cast<double>(present.size());
  }
  std::sort(present.begin(), present.end());
  const auto n = present.size();
  return n % 2 == 1 ? present[n / 2] : (present[n / 2 - 1] + present[n / 2]) / 2.0;
}

std::vector<double> impute_numeric(std::span<const std::optional<double>> column, NumericImpute policy) {
  const double fill = numeric_fill_value(column, policy);
  std::vector<double> out;
  out.reserve(column.size());
  for (const auto& v : column) out.push_back(v.value_or(fill));
  return out;
}

std::string categorical_fill_value(std::span<const Cell> column, CategoricalImpute policy) {
  if (policy == CategoricalImpute::kUnknown) return std::string(kUnknownCategory);
  std::map<std::string, std::size_t> counts;
  for (const auto& c : column) {
    if (c) ++counts[*c];
  }
  if (counts.empty()) throw Error(Errc::kAllMissing, "categorical column has no values");
  // std::map iterates ascending, so the first maximum is the smallest name.
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

std::vector<std::string> impute_categorical(std::span<const Cell> column, CategoricalImpute policy) {
  const auto fill = categorical_fill_value(column, policy);
  std::vector<std::string> out;
  out.reserve(column.size());
  for (const auto& c : column) out.push_back(c.value_or(fill));
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(Errc::kLengthMismatch, "pearson inputs differ in length");
  if (x.size() < 2) throw Error(Errc::kEmpty, "pearson needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw Error(Errc::kZeroVariance, "pearson input is constant");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<std::size_t> equal_frequency_bins(std::span<const double> y, std::size_t bins) {
  const std::size_t n = y.size();
  std::vector<std::size_t> out(n, 0);
  if (n == 0 || bins < 2) return out;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
  std::size_t below = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && y[order[i]] != y[order[i - 1]]) below = i;
    out[order[i]] = std::min(bins - 1, bins * below / n);
  }
  return out;
}

double mutual_information(std::span<const std::string> x, std::span<const double> y, std::size_t bins) {
  if (x.size() != y.size()) throw Error(Errc::kLengthMismatch, "mutual_information inputs differ in length");
  const std::size_t n = x.size();
  if (n == 0 || bins < 2) return 0.0;
  const auto ybin = equal_frequency_bins(y, bins);

  std::unordered_map<std::string_view, std::size_t> label_code;
  std::vector<std::size_t> xcode(n);
  for (std::size_t i = 0; i < n; ++i) {
    xcode[i] = label_code.try_emplace(x[i], label_code.size()).first->second;
  }
  const std::size_t nx = label_code.size();
  std::vector<double> joint(nx * bins, 0.0);
  std::vector<double> px(nx, 0.0);
  std::vector<double> py(bins, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    joint[xcode[i] * bins + ybin[i]] += 1.0;
    px[xcode[i]] += 1.0;
    py[ybin[i]] += 1.0;
  }
  const double nd = static_cast<double>(n);
  double mi = 0.0;
  for (std::size_t a = 0; a < nx; ++a) {
    for (std::size_t b = 0; b < bins; ++b) {
      const double c = joint[a * bins + b];
      if (c > 0.0) mi += (c / nd) * std::log(c * nd / (px[a] * py[b]));
    }
  }
  return std::max(0.0, mi);
}

RedundancyResult drop_redundant(const RawTable& table, std::span<const std::string> columns) {
  std::vector<std::size_t> rows(table.row_count());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return drop_redundant(table, columns, rows);
}

RedundancyResult drop_redundant(const RawTable& table, std::span<const std::string> columns,
                                std::span<const std::size_t> rows) {
  const std::size_t c = columns.size();
  // Integer codes per column for the selected rows.
  std::vector<std::vector<std::size_t>> codes(c);
  std::vector<std::size_t> cardinality(c);
  for (std::size_t j = 0; j < c; ++j) {
    const auto idx = table.schema.index_of(columns[j]);
    std::unordered_map<std::string, std::size_t> dict;
    codes[j].reserve(rows.size());
    for (auto r : rows) {
      const auto& cell = table.rows[r][idx];
      const std::string key = cell ? *cell : std::string(kMissingToken);
      codes[j].push_back(dict.try_emplace(key, dict.size()).first->second);
    }
    cardinality[j] = dict.size();
  }

  auto functional = [&](std::size_t a, std::size_t b) {
    std::vector<std::size_t> image(cardinality[a], static_cast<std::size_t>(-1));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto& slot = image[codes[a][i]];
      if (slot == static_cast<std::size_t>(-1)) {
        slot = codes[b][i];
      } else if (slot != codes[b][i]) {
        return false;
      }
    }
    return true;
  };

  std::vector<std::vector<bool>> bijective(c, std::vector<bool>(c, false));
  for (std::size_t a = 0; a < c; ++a) {
    for (std::size_t b = a + 1; b < c; ++b) {
      if (cardinality[a] == cardinality[b] && functional(a, b) && functional(b, a)) {
        bijective[a][b] = bijective[b][a] = true;
      }
    }
  }

  std::vector<bool> alive(c, true);
  RedundancyResult out;
  for (;;) {
    std::optional<std::tuple<bool, std::string, std::string, std::size_t>> pick;
    for (std::size_t a = 0; a < c; ++a) {
      for (std::size_t b = a + 1; b < c; ++b) {
        if (!alive[a] || !alive[b] || !bijective[a][b]) continue;
        auto [drop, keep] = drop_order(columns[a], columns[b]);
        const std::size_t drop_idx = drop == columns[a] ? a : b;
        std::tuple<bool, std::string, std::string, std::size_t> cand{!contains_id(drop), drop, keep, drop_idx};
        if (!pick || cand < *pick) pick = std::move(cand);
      }
    }
    if (!pick) break;
    alive[std::get<3>(*pick)] = false;
    out.dropped.emplace_back(std::get<1>(*pick), std::get<2>(*pick));
  }
  for (std::size_t j = 0; j < c; ++j) {
    if (alive[j]) out.kept.push_back(columns[j]);
  }
  return out;
}

std::set<std::string> select_features(const std::map<std::string, ScoreTable>& scores_by_method, std::size_t k) {
  std::set<std::string> out{"latitude", "longitude"};
  for (const auto& [method, scores] : scores_by_method) {
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& [name, score] : scores) {
      ranked.emplace_back(std::isnan(score) ? 0.0 : std::abs(score), name);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) out.insert(ranked[i].second);
  }
  return out;
}

std::vector<std::string> fit_one_hot(std::span<const std::string> column, bool with_unknown) {
  std::set<std::string> vocab(column.begin(), column.end());
  if (with_unknown) vocab.insert(std::string(kUnknownCategory));
  return {vocab.begin(), vocab.end()};
}

OneHotBlock apply_one_hot(std::span<const std::string> vocabulary, std::span<const std::string> column) {
  OneHotBlock block;
  block.width = vocabulary.size();
  block.values.assign(column.size() * block.width, 0.0);
  const auto unknown = std::lower_bound(vocabulary.begin(), vocabulary.end(), kUnknownCategory);
  const bool has_unknown = unknown != vocabulary.end() && *unknown == kUnknownCategory;
  for (std::size_t r = 0; r < column.size(); ++r) {
    auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), column[r]);
    if (it == vocabulary.end() || *it != column[r]) {
      if (!has_unknown) {
        ++block.unseen;
        continue;
      }
      it = unknown;
    }
    block.values[r * block.width + static_cast<std::size_t>(it - vocabulary.begin())] = 1.0;
  }
  return block;
}

ScalerEntry fit_scaler(std::span<const double> column, ScalerKind kind) {
  ScalerEntry e{kind, 0.0, 0.0};
  if (column.empty()) return e;
  if (kind == ScalerKind::kMinMax) {
    const auto [lo, hi] = std::minmax_element(column.begin(), column.end());
    e.a = *lo;
    e.b = *hi;
  } else {
    const double n = static_cast<double>(column.size());
    e.a = std::accumulate(column.begin(), column.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : column) ss += (v - e.a) * (v - e.a);
    e.b = std::sqrt(ss / n);
  }
  return e;
}

namespace {

double scale_one(const ScalerEntry& e, double v) {
  if (e.kind == ScalerKind::kMinMax) {
    if (!(e.b > e.a)) return 0.0;
    return std::clamp((v - e.a) / (e.b - e.a), 0.0, 1.0);
  }
  if (!(e.b > 0.0)) return 0.0;
  return (v - e.a) / e.b;
}

}  // namespace

std::vector<double> apply_scaler(const ScalerEntry& entry, std::span<const double> column) {
  std::vector<double> out;
  out.reserve(column.size());
  for (double v : column) out.push_back(scale_one(entry, v));
  return out;
}

std::vector<std::optional<GeoPoint>> geolocations(const RawTable& table) {
  const auto idx = table.schema.index_of(table.schema.geolocation());
  std::vector<std::optional<GeoPoint>> out;
  out.reserve(table.row_count());
  for (const auto& row : table.rows) {
    if (row[idx]) {
      out.emplace_back(parse_geolocation(*row[idx]));
    } else {
      out.emplace_back(std::nullopt);
    }
  }
  return out;
}

namespace {

std::vector<std::optional<double>> numeric_column(const RawTable& table, const std::string& name,
                                                  std::span<const std::size_t> rows) {
  const auto idx = table.schema.index_of(name);
  std::vector<std::optional<double>> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(parse_numeric_cell(table.rows[r][idx], name, r));
  return out;
}

std::vector<Cell> cell_column(const RawTable& table, const std::string& name, std::span<const std::size_t> rows) {
  const auto idx = table.schema.index_of(name);
  std::vector<Cell> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(table.rows[r][idx]);
  return out;
}

}  // namespace

PreprocessState fit_preprocessor(const RawTable& table, std::span<const std::size_t> train_rows,
                                 const PreprocessConfig& config) {
  const auto targets = target_values(table);
  std::vector<std::size_t> rows;
  std::vector<double> y;
  for (auto r : train_rows) {
    if (targets.at(r)) {
      rows.push_back(r);
      y.push_back(*targets[r]);
    }
  }
  if (rows.empty()) throw Error(Errc::kEmpty, "no labeled training rows");

  const auto part = partition_columns(table);
  PreprocessState st;
  st.config = config;

  // Imputation statistics.
  std::vector<std::string> numerics;
  for (const auto& name : part.numerical) {
    const auto col = numeric_column(table, name, rows);
    if (std::none_of(col.begin(), col.end(), [](const auto& v) { return v.has_value(); })) {
      st.dropped_empty.push_back(name);
      continue;
    }
    st.numeric_fill[name] = numeric_fill_value(col, config.imputation.numeric);
    numerics.push_back(name);
  }
  {
    const auto geo = geolocations(table);
    std::vector<std::optional<double>> lat;
    std::vector<std::optional<double>> lon;
    for (auto r : rows) {
      lat.push_back(geo[r] ? std::optional(geo[r]->latitude) : std::nullopt);
      lon.push_back(geo[r] ? std::optional(geo[r]->longitude) : std::nullopt);
    }
    st.numeric_fill["latitude"] = numeric_fill_value(lat, config.imputation.numeric);
    st.numeric_fill["longitude"] = numeric_fill_value(lon, config.imputation.numeric);
  }
  std::vector<std::string> categoricals;
  for (const auto& name : part.categorical) {
    const auto col = cell_column(table, name, rows);
    const bool empty = std::none_of(col.begin(), col.end(), [](const auto& c) { return c.has_value(); });
    if (empty && config.imputation.categorical == CategoricalImpute::kMode) {
      st.dropped_empty.push_back(name);
      continue;
    }
    st.categorical_fill[name] = categorical_fill_value(col, config.imputation.categorical);
    categoricals.push_back(name);
  }

  if (config.drop_redundant) {
    auto red = drop_redundant(table, categoricals, rows);
    categoricals = std::move(red.kept);
    st.dropped_redundant = std::move(red.dropped);
  }

  // Encoder and scaler over every surviving column; selection narrows them.
  const bool with_unknown = config.imputation.categorical == CategoricalImpute::kUnknown;
  for (const auto& name : categoricals) {
    const auto col = impute_categorical(cell_column(table, name, rows), config.imputation.categorical);
    st.encoder[name] = fit_one_hot(col, with_unknown);
  }
  for (const auto& name : numerics) {
    const auto col = impute_numeric(numeric_column(table, name, rows), config.imputation.numeric);
    st.scaler[name] = fit_scaler(col, config.scaler);
  }
  {
    const auto geo = geolocations(table);
    std::vector<double> lat;
    std::vector<double> lon;
    for (auto r : rows) {
      lat.push_back(geo[r] ? geo[r]->latitude : st.numeric_fill["latitude"]);
      lon.push_back(geo[r] ? geo[r]->longitude : st.numeric_fill["longitude"]);
    }
    st.scaler["latitude"] = fit_scaler(lat, config.scaler);
    st.scaler["longitude"] = fit_scaler(lon, config.scaler);
  }

  // Scores: correlation for numerics, mutual information for categoricals,
  // forest importance for both.
  auto& corr = st.scores["correlation"];
  for (const auto& name : numerics) {
    const auto col = impute_numeric(numeric_column(table, name, rows), config.imputation.numeric);
    try {
      corr[name] = std::abs(pearson(col, y));
    } catch (const Error&) {
      corr[name] = 0.0;
    }
  }
  auto& mi = st.scores["mutual_information"];
  for (const auto& name : categoricals) {
    const auto col = impute_categorical(cell_column(table, name, rows), config.imputation.categorical);
    mi[name] = mutual_information(col, y, config.mi_bins);
  }
  st.categorical = categoricals;
  std::sort(st.categorical.begin(), st.categorical.end());
  st.numerical = numerics;
  std::sort(st.numerical.begin(), st.numerical.end());

  if (config.selection_trees > 0 && rows.size() >= 2 && !(st.categorical.empty() && st.numerical.empty())) {
    const auto X = assemble_matrix(table, rows, st, nullptr, std::set<std::string>{kGroupGeolocation});
    ForestConfig fc;
    fc.n_estimators = config.selection_trees;
    fc.random_state = config.seed;
    fc.n_jobs = 1;
    const auto model = fit_forest(X, fc);
    auto& fi = st.scores["forest_importance"];
    for (const auto& name : st.categorical) fi[name] = 0.0;
    for (const auto& name : st.numerical) fi[name] = 0.0;
    for (std::size_t j = 0; j < X.cols(); ++j) {
      const auto& tag = X.group_tags.at(X.column_names[j]);
      const std::string source =
          tag.starts_with(kOneHotGroupPrefix) ? tag.substr(std::string_view(kOneHotGroupPrefix).size()) : X.column_names[j];
      fi[source] += model.importances()[j];
    }
  }

  const auto selected = select_features(st.scores, config.selection_k);
  auto keep_selected = [&](std::vector<std::string>& names) {
    std::erase_if(names, [&](const std::string& n) { return !selected.contains(n); });
  };
  keep_selected(st.categorical);
  keep_selected(st.numerical);
  std::erase_if(st.encoder, [&](const auto& kv) { return !selected.contains(kv.first); });
  std::erase_if(st.scaler, [&](const auto& kv) { return !selected.contains(kv.first); });
  return st;
}

FeatureMatrix assemble_matrix(const RawTable& table, std::span<const std::size_t> rows,
                              const PreprocessState& state, const EmbeddingTable* embeddings, bool include_geo) {
  std::set<std::string> excluded;
  if (!include_geo) excluded.insert(kGroupGeolocation);
  return assemble_matrix(table, rows, state, embeddings, excluded);
}

FeatureMatrix assemble_matrix(const RawTable& table, std::span<const std::size_t> rows,
                              const PreprocessState& state, const EmbeddingTable* embeddings,
                              const std::set<std::string>& excluded_groups) {
  if (embeddings && embeddings->dim > 0 && embeddings->rows() != table.row_count()) {
    throw Error(Errc::kRowCountMismatch, std::to_string(embeddings->rows()) + " embedding rows for " +
                                             std::to_string(table.row_count()) + " table rows");
  }
  FeatureMatrix m;
  m.rows = rows.size();

  struct CatBlock {
    std::size_t column;
    const std::string* fill;
    const std::vector<std::string>* vocab;
  };
  struct NumCol {
    std::size_t column;
    double fill;
    const ScalerEntry* scaler;
  };
  std::vector<CatBlock> cats;
  std::vector<std::pair<std::string, NumCol>> nums;

  for (const auto& name : state.categorical) {
    const std::string group = kOneHotGroupPrefix + name;
    if (excluded_groups.contains(group)) continue;
    const auto& vocab = state.encoder.at(name);
    cats.push_back({table.schema.index_of(name), &state.categorical_fill.at(name), &vocab});
    for (const auto& v : vocab) {
      m.column_names.push_back(name + "=" + v);
      m.group_tags[m.column_names.back()] = group;
    }
  }
  if (!excluded_groups.contains(kGroupNumeric)) {
    for (const auto& name : state.numerical) {
      nums.emplace_back(name, NumCol{table.schema.index_of(name), state.numeric_fill.at(name), &state.scaler.at(name)});
      m.column_names.push_back(name);
      m.group_tags[name] = kGroupNumeric;
    }
  }
  const bool geo = !excluded_groups.contains(kGroupGeolocation);
  if (geo) {
    for (const char* name : {"latitude", "longitude"}) {
      m.column_names.emplace_back(name);
      m.group_tags[name] = kGroupGeolocation;
    }
  }
  const std::size_t dim =
      (embeddings && !excluded_groups.contains(kGroupEmbedding)) ? embeddings->dim : 0;
  for (std::size_t e = 0; e < dim; ++e) {
    m.column_names.push_back("e" + std::to_string(e));
    m.group_tags[m.column_names.back()] = kGroupEmbedding;
  }

  const std::size_t d = m.column_names.size();
  m.values.assign(m.rows * d, 0.0);
  m.target.resize(m.rows);
  const auto target_idx = table.schema.index_of(table.schema.target());
  const auto geo_idx = table.schema.index_of(table.schema.geolocation());
  std::map<std::string, std::size_t> unseen;

  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto r = rows[i];
    const auto& row = table.rows.at(r);
    double t = 0.0;
    if (!row[target_idx] || !io::parse_double(*row[target_idx], t) || !std::isfinite(t)) {
      throw Error(Errc::kInvalidValue, "row " + std::to_string(r) + " has no usable target");
    }
    m.target[i] = t;
    double* out = &m.values[i * d];
    std::size_t col = 0;
    for (const auto& blk : cats) {
      const std::string& v = row[blk.column] ? *row[blk.column] : *blk.fill;
      const std::string_view value = v;
      const OneHotBlock oh = apply_one_hot(*blk.vocab, std::span<const std::string>(&v, 1));
      std::copy(oh.values.begin(), oh.values.end(), out + col);
      if (oh.unseen) ++unseen[table.schema.columns()[blk.column].name + "='" + std::string(value) + "'"];
      col += blk.vocab->size();
    }
    for (const auto& [name, nc] : nums) {
      const auto v = parse_numeric_cell(row[nc.column], name, r);
      out[col++] = scale_one(*nc.scaler, v.value_or(nc.fill));
    }
    if (geo) {
      std::optional<GeoPoint> p;
      if (row[geo_idx]) p = parse_geolocation(*row[geo_idx]);
      out[col++] = scale_one(state.scaler.at("latitude"), p ? p->latitude : state.numeric_fill.at("latitude"));
      out[col++] = scale_one(state.scaler.at("longitude"), p ? p->longitude : state.numeric_fill.at("longitude"));
    }
    if (dim > 0) {
      const auto e = embeddings->row(r);
      std::copy(e.begin(), e.end(), out + col);
    }
  }
  for (const auto& [what, count] : unseen) {
    m.warnings.push_back("unseen category " + what + " in " + std::to_string(count) + " row(s); encoded as all zeros");
  }
  return m;
}

std::string serialize_preprocess(const PreprocessState& st) {
  io::Writer w;
  w.bytes(kPrepMagic);
  w.u32(kPrepVersion);
  const auto& c = st.config;
  w.u8(static_cast<std::uint8_t>(c.imputation.numeric));
  w.u8(static_cast<std::uint8_t>(c.imputation.categorical));
  w.u8(static_cast<std::uint8_t>(c.scaler));
  w.u64(c.selection_k);
  w.u64(c.mi_bins);
  w.u64(c.selection_trees);
  w.u8(c.drop_redundant ? 1 : 0);
  w.u64(c.seed);

  auto names = [&](const std::vector<std::string>& v) {
    w.u64(v.size());
    for (const auto& s : v) w.str(s);
  };
  names(st.categorical);
  names(st.numerical);
  w.u64(st.categorical_fill.size());
  for (const auto& [k, v] : st.categorical_fill) {
    w.str(k);
    w.str(v);
  }
  w.u64(st.numeric_fill.size());
  for (const auto& [k, v] : st.numeric_fill) {
    w.str(k);
    w.f64(v);
  }
  w.u64(st.encoder.size());
  for (const auto& [k, vocab] : st.encoder) {
    w.str(k);
    names(vocab);
  }
  w.u64(st.scaler.size());
  for (const auto& [k, e] : st.scaler) {
    w.str(k);
    w.u8(static_cast<std::uint8_t>(e.kind));
    w.f64(e.a);
    w.f64(e.b);
  }
  w.u64(st.dropped_redundant.size());
  for (const auto& [dropped, kept] : st.dropped_redundant) {
    w.str(dropped);
    w.str(kept);
  }
  names(st.dropped_empty);
  w.u64(st.scores.size());
  for (const auto& [method, table] : st.scores) {
    w.str(method);
    w.u64(table.size());
    for (const auto& [k, v] : table) {
      w.str(k);
      w.f64(v);
    }
  }
  return w.release();
}

PreprocessState deserialize_preprocess(std::string_view bytes) {
  if (bytes.size() < kPrepMagic.size() || bytes.substr(0, kPrepMagic.size()) != kPrepMagic) {
    throw Error(Errc::kBadMagic, "not a DMVP1 preprocessing file");
  }
  io::Reader r(bytes.substr(kPrepMagic.size()));
  if (r.remaining() < 4) throw Error(Errc::kVersionUnsupported, "missing format version");
  if (const auto v = r.u32(); v != kPrepVersion) {
    throw Error(Errc::kVersionUnsupported, "preprocessing format version " + std::to_string(v));
  }
  PreprocessState st;
  auto& c = st.config;
  auto enum_byte = [&](std::uint8_t max) {
    const auto b = r.u8();
    if (b > max) throw Error(Errc::kIoFailure, "bad enum byte in preprocessing file");
    return b;
  };
  c.imputation.numeric = static_cast<NumericImpute>(enum_byte(1));
  c.imputation.categorical = static_cast<CategoricalImpute>(enum_byte(1));
  c.scaler = static_cast<ScalerKind>(enum_byte(1));
  c.selection_k = r.u64();
  c.mi_bins = r.u64();
  c.selection_trees = r.u64();
  c.drop_redundant = r.u8() != 0;
  c.seed = r.u64();

  auto count = [&] {
    const auto n = r.u64();
    if (n > r.remaining()) throw Error(Errc::kIoFailure, "count exceeds file size");
    return n;
  };
  auto names = [&] {
    std::vector<std::string> v(count());
    for (auto& s : v) s = r.str();
    return v;
  };
  st.categorical = names();
  st.numerical = names();
  for (auto n = count(); n > 0; --n) {
    auto k = r.str();
    st.categorical_fill[k] = r.str();
  }
  for (auto n = count(); n > 0; --n) {
    auto k = r.str();
    st.numeric_fill[k] = r.f64();
  }
  for (auto n = count(); n > 0; --n) {
    auto k = r.str();
    st.encoder[k] = names();
  }
  for (auto n = count(); n > 0; --n) {
    auto k = r.str();
    ScalerEntry e;
    e.kind = static_cast<ScalerKind>(enum_byte(1));
    e.a = r.f64();
    e.b = r.f64();
    st.scaler[k] = e;
  }
  for (auto n = count(); n > 0; --n) {
    auto dropped = r.str();
    auto kept = r.str();
    st.dropped_redundant.emplace_back(std::move(dropped), std::move(kept));
  }
  st.dropped_empty = names();
  for (auto n = count(); n > 0; --n) {
    auto method = r.str();
    auto& table = st.scores[method];
    for (auto m = count(); m > 0; --m) {
      auto k = r.str();
      table[k] = r.f64();
    }
  }
  if (!r.at_end()) throw Error(Errc::kIoFailure, "trailing bytes after preprocessing state");
  return st;
}

void save_preprocess(const PreprocessState& state, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_preprocess(state));
}

PreprocessState load_preprocess(const std::filesystem::path& path) {
  return deserialize_preprocess(io::read_file(path));
}

}  // namespace dmv
