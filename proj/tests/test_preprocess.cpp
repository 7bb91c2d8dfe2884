#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <sstream>

#include "dmv/error.hpp"
#include "dmv/preprocess.hpp"
#include "dmv/synth.hpp"
#include "support/oracles.hpp"
#include "support/util.hpp"

using namespace dmv;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::kEmpty;
}

std::vector<std::optional<double>> opt(std::initializer_list<double> v, std::initializer_list<std::size_t> gaps) {
  std::vector<std::optional<double>> out(v.begin(), v.end());
  for (auto g : gaps) out[g].reset();
  return out;
}

// Two categoricals (3 and 2 levels), one numeric, geolocation, target.
RawTable toy_table(std::size_t n) {
  RawTable t{ColumnSchema::parse("a = categorical\nb = categorical\nx = numerical\ng = geolocation\ny = target\n"),
             {}};
  const char* as[] = {"red", "green", "blue"};
  const char* bs[] = {"on", "off"};
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>((i * 7) % 11);
    const double lat = 30.0 + static_cast<double>((i * 13) % 17);
    const double lon = -120.0 + static_cast<double>((i * 5) % 9);
    const double y = x + (i % 3) * 4.0 + lat * 0.5;
    t.rows.push_back({std::string(as[i % 3]), std::string(bs[(i / 3) % 2]), std::to_string(x),
                      format_wkt({lat, lon}), std::to_string(y)});
  }
  return t;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

PreprocessConfig mode_config() {
  PreprocessConfig c;
  c.imputation.categorical = CategoricalImpute::kMode;
  c.selection_trees = 5;
  return c;
}

}  // namespace

TEST_CASE("numeric imputation") {
  CHECK(impute_numeric(opt({1, 0, 3}, {1}), NumericImpute::kMean) == std::vector<double>{1, 2, 3});
  CHECK(impute_numeric(opt({1, 0, 3, 100}, {1}), NumericImpute::kMedian) == std::vector<double>{1, 3, 3, 100});
  CHECK(impute_numeric(opt({5, 5}, {}), NumericImpute::kMedian) == std::vector<double>{5, 5});
  CHECK(numeric_fill_value(opt({4, 1, 3, 2}, {}), NumericImpute::kMedian) == 2.5);
  CHECK(code_of([] { numeric_fill_value(opt({1, 2}, {0, 1}), NumericImpute::kMean); }) == Errc::kAllMissing);
}

TEST_CASE("imputation keeps present values and fills every gap") {
  oracle::SplitMix rng{31};
  for (int t = 0; t < 50; ++t) {
    std::vector<std::optional<double>> col(1 + rng.next() % 40);
    for (auto& v : col) {
      if (rng.next() % 3) v = static_cast<double>(rng.next() % 100);
    }
    if (!col[0]) col[0] = 1.0;
    for (auto policy : {NumericImpute::kMean, NumericImpute::kMedian}) {
      const auto out = impute_numeric(col, policy);
      REQUIRE(out.size() == col.size());
      for (std::size_t i = 0; i < col.size(); ++i) {
        if (col[i]) CHECK(out[i] == *col[i]);
        CHECK(std::isfinite(out[i]));
      }
    }
  }
}

TEST_CASE("categorical imputation") {
  const std::vector<Cell> aa{std::string("A"), std::string("A"), std::nullopt};
  CHECK(impute_categorical(aa, CategoricalImpute::kMode) == std::vector<std::string>{"A", "A", "A"});
  const std::vector<Cell> ab{std::string("A"), std::string("B"), std::nullopt};
  CHECK(impute_categorical(ab, CategoricalImpute::kUnknown) == std::vector<std::string>{"A", "B", "Unknown"});
  const std::vector<Cell> ba{std::string("B"), std::string("A"), std::nullopt};
  CHECK(impute_categorical(ba, CategoricalImpute::kMode) == std::vector<std::string>{"B", "A", "A"});
  const std::vector<Cell> none{std::nullopt};
  CHECK(code_of([&] { categorical_fill_value(none, CategoricalImpute::kMode); }) == Errc::kAllMissing);
  CHECK(parse_categorical_impute("unknown_category") == CategoricalImpute::kUnknown);
}

TEST_CASE("pearson correlation") {
  CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}) == doctest::Approx(1.0));
  CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{6, 4, 2}) == doctest::Approx(-1.0));
  CHECK(pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}) == doctest::Approx(0.8));
  CHECK(code_of([] { pearson(std::vector<double>{1, 1}, std::vector<double>{1, 2}); }) == Errc::kZeroVariance);
  CHECK(code_of([] { pearson(std::vector<double>{1}, std::vector<double>{1}); }) == Errc::kEmpty);

  oracle::SplitMix rng{8};
  auto u = [&] { return static_cast<double>(rng.next() >> 11) * 0x1.0p-53; };
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(3 + rng.next() % 50);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = u();
      y[i] = x[i] * (t % 5 - 2) + u();
    }
    const double r = pearson(x, y);
    CHECK(std::fabs(r) <= 1.0);
    CHECK(std::fabs(r - pearson(y, x)) <= 1e-12);
    std::vector<double> ax(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) ax[i] = 3.0 * x[i] + 7.0;
    CHECK(std::fabs(r - pearson(ax, y)) <= 1e-12);
  }
}

TEST_CASE("equal-frequency bins") {
  CHECK(equal_frequency_bins(std::vector<double>{4, 1, 3, 2}, 2) == std::vector<std::size_t>{1, 0, 1, 0});
  const auto tied = equal_frequency_bins(std::vector<double>{1, 1, 1, 2}, 2);
  CHECK(tied == std::vector<std::size_t>{0, 0, 0, 1});
}

TEST_CASE("mutual information") {
  // Perfect dependence, two balanced bins.
  std::vector<double> y;
  std::vector<std::string> x;
  for (int i = 0; i < 100; ++i) {
    y.push_back(i);
    x.push_back(i < 50 ? "lo" : "hi");
  }
  CHECK(mutual_information(x, y, 2) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  std::vector<std::string> constant(100, "c");
  CHECK(mutual_information(constant, y, 10) == 0.0);

  // Labels equal to the bin: MI equals the entropy of the bin histogram.
  oracle::SplitMix rng{3};
  std::vector<double> yy(997);
  for (auto& v : yy) v = static_cast<double>(rng.next() % 40);
  const auto bins = equal_frequency_bins(yy, 7);
  std::vector<std::string> labels;
  std::map<std::size_t, double> hist;
  for (auto b : bins) {
    labels.push_back("b" + std::to_string(b));
    hist[b] += 1;
  }
  double h = 0;
  for (const auto& [_, c] : hist) h -= c / yy.size() * std::log(c / yy.size());
  CHECK(mutual_information(labels, yy, 7) == doctest::Approx(h).epsilon(1e-12));

  std::vector<double> ry(10000);
  std::vector<std::string> rx(10000);
  for (std::size_t i = 0; i < ry.size(); ++i) {
    ry[i] = static_cast<double>(rng.next() % 100000);
    rx[i] = "l" + std::to_string(rng.next() % 4);
  }
  const double mi = mutual_information(rx, ry, 10);
  CHECK(mi >= 0.0);
  CHECK(mi <= 0.05);
}

TEST_CASE("redundancy elimination") {
  RawTable t{ColumnSchema::parse("question = categorical\nquestionid = categorical\nother = categorical\n"
                                 "g = geolocation\ny = target\n"),
             {}};
  const char* qs[] = {"q one", "q two", "q three"};
  const char* ids[] = {"Q1", "Q2", "Q3"};
  for (int i = 0; i < 9; ++i) {
    t.rows.push_back({std::string(qs[i % 3]), std::string(ids[i % 3]), std::string(i < 5 ? "x" : "z"),
                      std::string("(1, 1)"), std::string("1")});
  }
  const std::vector<std::string> cols{"question", "questionid", "other"};
  const auto r = drop_redundant(t, cols);
  CHECK(r.kept == std::vector<std::string>{"question", "other"});
  REQUIRE(r.dropped.size() == 1);
  CHECK(r.dropped[0] == std::pair<std::string, std::string>{"questionid", "question"});

  const std::vector<std::string> independent{"question", "other"};
  CHECK(drop_redundant(t, independent).dropped.empty());

  RawTable tri{ColumnSchema::parse("a = categorical\nb = categorical\nc_id = categorical\ng = geolocation\n"
                                   "y = target\n"),
               {}};
  for (int i = 0; i < 5; ++i) {
    tri.rows.push_back({"a" + std::to_string(i % 3), "b" + std::to_string(i % 3), "c" + std::to_string(i % 3),
                        std::string("(1, 1)"), std::string("1")});
  }
  const std::vector<std::string> abc{"a", "b", "c_id"};
  const auto rt = drop_redundant(tri, abc);
  CHECK(rt.kept == std::vector<std::string>{"a"});
  REQUIRE(rt.dropped.size() == 2);
  CHECK(rt.dropped[0].first == "c_id");
  CHECK(rt.dropped[1] == std::pair<std::string, std::string>{"b", "a"});
}

TEST_CASE("feature selection") {
  CHECK(select_features({{"m", {{"a", 0.9}, {"b", 0.1}}}}, 1) == std::set<std::string>{"a", "latitude", "longitude"});
  CHECK(select_features({{"m1", {{"a", 0.9}, {"b", 0.1}}}, {"m2", {{"a", 0.1}, {"b", 0.8}}}}, 1) ==
        std::set<std::string>{"a", "b", "latitude", "longitude"});
  CHECK(select_features({{"m", {{"b", 0.5}, {"a", 0.5}}}}, 1) == std::set<std::string>{"a", "latitude", "longitude"});
  CHECK(select_features({{"m", {{"a", -0.9}, {"b", 0.5}}}}, 1) == std::set<std::string>{"a", "latitude", "longitude"});
}

TEST_CASE("one-hot encoding") {
  const std::vector<std::string> train{"B", "A", "B"};
  const auto vocab = fit_one_hot(train, true);
  CHECK(vocab == std::vector<std::string>{"A", "B", "Unknown"});
  CHECK(apply_one_hot(vocab, std::vector<std::string>{"B"}).values == std::vector<double>{0, 1, 0});
  const auto unseen_unknown = apply_one_hot(vocab, std::vector<std::string>{"C"});
  CHECK(unseen_unknown.values == std::vector<double>{0, 0, 1});
  CHECK(unseen_unknown.unseen == 0);

  const auto plain = fit_one_hot(train, false);
  const auto unseen = apply_one_hot(plain, std::vector<std::string>{"C"});
  CHECK(unseen.values == std::vector<double>{0, 0});
  CHECK(unseen.unseen == 1);

  const std::vector<std::string> mixed{"A", "zzz", "B", "A"};
  const auto block = apply_one_hot(vocab, mixed);
  for (std::size_t r = 0; r < mixed.size(); ++r) {
    double s = 0;
    for (std::size_t c = 0; c < block.width; ++c) s += block.values[r * block.width + c];
    CHECK(s == 1.0);
  }
}

TEST_CASE("scaling") {
  const auto e = fit_scaler(std::vector<double>{0, 5, 10});
  CHECK(apply_scaler(e, std::vector<double>{0, 5, 10}) == std::vector<double>{0, 0.5, 1});
  CHECK(apply_scaler(e, std::vector<double>{12, -3}) == std::vector<double>{1, 0});
  const auto c = fit_scaler(std::vector<double>{3, 3});
  CHECK(apply_scaler(c, std::vector<double>{3, 3}) == std::vector<double>{0, 0});
  const auto z = fit_scaler(std::vector<double>{1, 3}, ScalerKind::kZScore);
  CHECK(apply_scaler(z, std::vector<double>{1, 3}) == std::vector<double>{-1, 1});
}

TEST_CASE("assembled layout and group exclusion") {
  const auto t = toy_table(60);
  const auto rows = iota(60);
  const auto st = fit_preprocessor(t, rows, mode_config());
  CHECK(st.categorical == std::vector<std::string>{"a", "b"});
  CHECK(st.numerical == std::vector<std::string>{"x"});

  EmbeddingTable emb{8, std::vector<double>(60 * 8)};
  for (std::size_t i = 0; i < emb.values.size(); ++i) emb.values[i] = static_cast<double>(i % 13) / 13.0;
  const auto full = assemble_matrix(t, rows, st, &emb, true);
  CHECK(full.cols() == 16);
  CHECK(full.column_names[0] == "a=blue");
  CHECK(full.column_names[5] == "x");
  CHECK(full.column_names[6] == "latitude");
  CHECK(full.column_names[7] == "longitude");
  CHECK(full.column_names[8] == "e0");
  CHECK(full.group_tags.at("a=red") == "onehot:a");
  CHECK(full.group_tags.at("e7") == "embedding");

  const auto nogeo = assemble_matrix(t, rows, st, &emb, false);
  REQUIRE(nogeo.cols() == full.cols() - 2);
  for (std::size_t r = 0; r < full.rows; ++r) {
    std::size_t k = 0;
    for (std::size_t c = 0; c < full.cols(); ++c) {
      if (full.group_tags.at(full.column_names[c]) == kGroupGeolocation) continue;
      CHECK(nogeo.column_names[k] == full.column_names[c]);
      CHECK(std::memcmp(&nogeo.values[r * nogeo.cols() + k], &full.values[r * full.cols() + c], sizeof(double)) == 0);
      ++k;
    }
  }
  CHECK(full.target == nogeo.target);

  const auto empty = assemble_matrix(t, std::vector<std::size_t>{}, st, &emb, true);
  CHECK(empty.rows == 0);
  CHECK(empty.column_names == full.column_names);

  const auto no_emb = assemble_matrix(t, rows, st, &emb, std::set<std::string>{kGroupEmbedding});
  CHECK(no_emb.cols() == 8);

  EmbeddingTable short_emb{8, std::vector<double>(8 * 10)};
  CHECK(code_of([&] { assemble_matrix(t, rows, st, &short_emb, true); }) == Errc::kRowCountMismatch);
}

TEST_CASE("scaled training columns span [0, 1]") {
  const auto t = toy_table(45);
  const auto rows = iota(45);
  const auto st = fit_preprocessor(t, rows, mode_config());
  const auto X = assemble_matrix(t, rows, st, nullptr, true);
  for (std::size_t c = 0; c < X.cols(); ++c) {
    double lo = 1e300;
    double hi = -1e300;
    for (std::size_t r = 0; r < X.rows; ++r) {
      lo = std::min(lo, X.at(r, c));
      hi = std::max(hi, X.at(r, c));
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
  }
}

TEST_CASE("fitted state depends only on training rows") {
  auto t = toy_table(40);
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < 30; ++i) train.push_back(i);
  const auto before = fit_preprocessor(t, train, mode_config());
  for (std::size_t i = 30; i < 40; ++i) {
    t.rows[i][0] = std::string("purple");
    t.rows[i][2] = std::string("9999");
    t.rows[i][4] = std::string("-1e6");
  }
  const auto after = fit_preprocessor(t, train, mode_config());
  CHECK(after == before);

  const std::vector<std::size_t> test{35};
  const auto X = assemble_matrix(t, test, after, nullptr, true);
  CHECK(X.at(0, 0) + X.at(0, 1) + X.at(0, 2) == 0.0);
  CHECK(X.warnings.size() == 1);
  CHECK(X.at(0, 5) == 1.0);
}

TEST_CASE("rows without a target are skipped when fitting") {
  auto t = toy_table(30);
  t.rows[3][4].reset();
  const auto st = fit_preprocessor(t, iota(30), mode_config());
  CHECK(code_of([&] { assemble_matrix(t, std::vector<std::size_t>{3}, st, nullptr, true); }) == Errc::kInvalidValue);
}

TEST_CASE("planted columns survive selection on the synthetic table") {
  const auto t = synthesize_cdc(600, 42);
  const auto st = fit_preprocessor(t, labeled_rows(t), PreprocessConfig{});
  auto has = [](const std::vector<std::string>& v, const char* n) { return std::find(v.begin(), v.end(), n) != v.end(); };
  CHECK((has(st.categorical, "question") || has(st.categorical, "topic")));
  CHECK(has(st.categorical, "stratification1"));
  CHECK(has(st.numerical, "yearstart"));
  for (const auto& [dropped, kept] : st.dropped_redundant) CHECK(dropped != kept);
  CHECK_FALSE(has(st.categorical, "questionid"));
  CHECK_FALSE(has(st.categorical, "topicid"));
  CHECK(st.scores.at("forest_importance").size() > 0);
}

TEST_CASE("preprocessing state round-trips") {
  const auto t = synthesize_cdc(200, 5);
  PreprocessConfig c;
  c.selection_trees = 5;
  c.imputation.numeric = NumericImpute::kMean;
  const auto st = fit_preprocessor(t, labeled_rows(t), c);
  const auto bytes = serialize_preprocess(st);
  CHECK(deserialize_preprocess(bytes) == st);
  const auto dir = testutil::scratch_dir("prep_io");
  save_preprocess(st, dir / "p.dmvp");
  CHECK(load_preprocess(dir / "p.dmvp") == st);
  std::string bad = bytes;
  bad[1] = '?';
  CHECK(code_of([&] { deserialize_preprocess(bad); }) == Errc::kBadMagic);
  CHECK(code_of([&] { deserialize_preprocess(bytes.substr(0, bytes.size() - 1)); }) == Errc::kIoFailure);
}
