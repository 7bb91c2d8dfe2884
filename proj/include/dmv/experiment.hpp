#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "dmv/eval.hpp"
#include "dmv/forest.hpp"
#include "dmv/ingest.hpp"
#include "dmv/matrix.hpp"
#include "dmv/preprocess.hpp"

namespace dmv {

// Pipeline variants. Baseline has no embedding columns.
enum class Method : std::uint8_t { kBaseline, kLocalEmbed, kRemoteEmbed };

std::string_view to_string(Method m);
Method parse_method(std::string_view text);

struct ExperimentConfig {
  PreprocessConfig preprocess;
  ForestConfig forest;
  std::uint64_t seed = 42;  // fold and hold-out shuffles
  double holdout_fraction = 0.2;
};

struct Evaluation {
  Metrics metrics;
  std::vector<std::size_t> rows;  // table row of each test prediction
  std::vector<double> y;
  std::vector<double> y_hat;
  std::size_t width = 0;  // columns in the training matrix
};

// Trains and scores methods on splits of one table. Preprocessing is refit on
// every training split; results are memoized so paired runs that share a
// split (for example the with-group half of an ablation) are computed once.
class Experiment {
 public:
  Experiment(const RawTable& table, ExperimentConfig config, std::map<Method, EmbeddingTable> embeddings);

  const RawTable& table() const noexcept { return *table_; }
  const ExperimentConfig& config() const noexcept { return config_; }
  // Rows with a target, ascending. Splits index into this list.
  const std::vector<std::size_t>& labeled() const noexcept { return labeled_; }
  bool has_method(Method m) const;

  HoldoutSplit holdout() const;  // table row indices
  FoldAssignment folds(std::size_t k) const;  // over positions in labeled()

  const PreprocessState& preprocess(std::span<const std::size_t> train_rows);
  void remember_preprocess(std::span<const std::size_t> train_rows, PreprocessState state);

  FeatureMatrix matrix(Method m, std::span<const std::size_t> rows, std::span<const std::size_t> train_rows,
                       const std::set<std::string>& excluded);
  ForestModel fit(Method m, std::span<const std::size_t> train_rows, const std::set<std::string>& excluded);

  Evaluation evaluate(Method m, std::span<const std::size_t> train_rows, std::span<const std::size_t> test_rows,
                      const std::set<std::string>& excluded);
  // Records an evaluation computed elsewhere, for example from a saved model.
  void remember_evaluation(Method m, std::span<const std::size_t> train_rows, std::span<const std::size_t> test_rows,
                           const std::set<std::string>& excluded, Evaluation evaluation);
  CvResult cross_validate(Method m, std::size_t k, const std::set<std::string>& excluded);

  std::size_t fits() const noexcept { return fits_; }

 private:
  using EvalKey = std::tuple<Method, std::set<std::string>, std::vector<std::size_t>, std::vector<std::size_t>>;

  const EmbeddingTable* embeddings_for(Method m) const;

  const RawTable* table_;
  ExperimentConfig config_;
  std::map<Method, EmbeddingTable> embeddings_;
  std::vector<std::size_t> labeled_;
  std::map<std::vector<std::size_t>, std::unique_ptr<PreprocessState>> prep_memo_;
  std::map<EvalKey, Evaluation> eval_memo_;
  std::size_t fits_ = 0;
};

}  // namespace dmv
