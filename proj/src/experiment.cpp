#include "dmv/experiment.hpp"

#include <algorithm>

#include "dmv/error.hpp"

namespace dmv {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kBaseline:
      return "baseline";
    case Method::kLocalEmbed:
      return "local-embed";
    case Method::kRemoteEmbed:
      return "remote-embed";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "baseline") return Method::kBaseline;
  if (text == "local-embed") return Method::kLocalEmbed;
  if (text == "remote-embed") return Method::kRemoteEmbed;
  throw Error(Errc::kInvalidConfig, "unknown method '" + std::string(text) + "'");
}

Experiment::Experiment(const RawTable& table, ExperimentConfig config, std::map<Method, EmbeddingTable> embeddings)
    : table_(&table), config_(std::move(config)), embeddings_(std::move(embeddings)), labeled_(labeled_rows(table)) {
  config_.forest.validate();
  for (const auto& [m, e] : embeddings_) {
    if (m == Method::kBaseline) throw Error(Errc::kInvalidConfig, "baseline takes no embeddings");
    if (e.rows() != table.row_count()) {
      throw Error(Errc::kRowCountMismatch, std::string(to_string(m)) + " embeddings have " +
                                               std::to_string(e.rows()) + " rows, table has " +
                                               std::to_string(table.row_count()));
    }
  }
  if (labeled_.size() < 2) throw Error(Errc::kEmpty, "fewer than two labeled rows");
}

bool Experiment::has_method(Method m) const { return m == Method::kBaseline || embeddings_.contains(m); }

const EmbeddingTable* Experiment::embeddings_for(Method m) const {
  if (m == Method::kBaseline) return nullptr;
  auto it = embeddings_.find(m);
  if (it == embeddings_.end()) {
    throw Error(Errc::kMissingArtifact, "no embeddings loaded for " + std::string(to_string(m)));
  }
  return &it->second;
}

HoldoutSplit Experiment::holdout() const {
  auto split = holdout_split(labeled_.size(), config_.holdout_fraction, config_.seed);
  for (auto& i : split.train) i = labeled_[i];
  for (auto& i : split.test) i = labeled_[i];
  return split;
}

FoldAssignment Experiment::folds(std::size_t k) const { return kfold_indices(labeled_.size(), k, config_.seed); }

const PreprocessState& Experiment::preprocess(std::span<const std::size_t> train_rows) {
  std::vector<std::size_t> key(train_rows.begin(), train_rows.end());
  auto& slot = prep_memo_[key];
  if (!slot) slot = std::make_unique<PreprocessState>(fit_preprocessor(*table_, train_rows, config_.preprocess));
  return *slot;
}

void Experiment::remember_preprocess(std::span<const std::size_t> train_rows, PreprocessState state) {
  std::vector<std::size_t> key(train_rows.begin(), train_rows.end());
  prep_memo_[key] = std::make_unique<PreprocessState>(std::move(state));
}

FeatureMatrix Experiment::matrix(Method m, std::span<const std::size_t> rows, std::span<const std::size_t> train_rows,
                                 const std::set<std::string>& excluded) {
  const auto* emb = embeddings_for(m);
  return assemble_matrix(*table_, rows, preprocess(train_rows), emb, excluded);
}

ForestModel Experiment::fit(Method m, std::span<const std::size_t> train_rows, const std::set<std::string>& excluded) {
  const auto X = matrix(m, train_rows, train_rows, excluded);
  ++fits_;
  return fit_forest(X, config_.forest);
}

Evaluation Experiment::evaluate(Method m, std::span<const std::size_t> train_rows,
                                std::span<const std::size_t> test_rows, const std::set<std::string>& excluded) {
  EvalKey key{m, excluded, {train_rows.begin(), train_rows.end()}, {test_rows.begin(), test_rows.end()}};
  if (auto it = eval_memo_.find(key); it != eval_memo_.end()) return it->second;

  const auto X_train = matrix(m, train_rows, train_rows, excluded);
  const auto X_test = matrix(m, test_rows, train_rows, excluded);
  ++fits_;
  const auto model = fit_forest(X_train, config_.forest);

  Evaluation out;
  out.rows.assign(test_rows.begin(), test_rows.end());
  out.y = X_test.target;
  out.y_hat = model.predict(X_test);
  out.metrics = compute_metrics(out.y, out.y_hat);
  out.width = X_train.cols();
  eval_memo_.emplace(std::move(key), out);
  return out;
}

void Experiment::remember_evaluation(Method m, std::span<const std::size_t> train_rows,
                                     std::span<const std::size_t> test_rows, const std::set<std::string>& excluded,
                                     Evaluation evaluation) {
  EvalKey key{m, excluded, {train_rows.begin(), train_rows.end()}, {test_rows.begin(), test_rows.end()}};
  eval_memo_[std::move(key)] = std::move(evaluation);
}

CvResult Experiment::cross_validate(Method m, std::size_t k, const std::set<std::string>& excluded) {
  const auto assignment = folds(k);
  std::vector<Metrics> per_fold;
  per_fold.reserve(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    for (std::size_t p = 0; p < labeled_.size(); ++p) {
      (assignment.fold_of[p] == f ? test : train).push_back(labeled_[p]);
    }
    per_fold.push_back(evaluate(m, train, test, excluded).metrics);
  }
  return summarize_folds(std::move(per_fold));
}

}  // namespace dmv
