#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dmv/matrix.hpp"

namespace dmv {

struct MaxFeatures {
  enum class Kind : std::uint8_t { kAll, kSqrt, kCount };
  Kind kind = Kind::kAll;
  std::size_t count = 0;

  static MaxFeatures all() { return {}; }
  static MaxFeatures sqrt() { return {Kind::kSqrt, 0}; }
  static MaxFeatures fixed(std::size_t k) { return {Kind::kCount, k}; }

  // Number of candidate features per node for a matrix of width d.
  std::size_t resolve(std::size_t d) const;
  std::string to_string() const;
  static MaxFeatures parse(std::string_view text);

  bool operator==(const MaxFeatures&) const = default;
};

// Defaults follow the baseline configuration: 100 trees, unlimited depth,
// min split 2, min leaf 1, every feature considered at each node, bootstrap
// on, random_state 42.
struct ForestConfig {
  std::size_t n_estimators = 100;
  std::optional<std::size_t> max_depth;
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  MaxFeatures max_features;
  bool bootstrap = true;
  std::uint64_t random_state = 42;
  // 0 = all hardware threads. Has no effect on the fitted model.
  std::size_t n_jobs = 0;

  void validate() const;
};

// One node of a flattened tree. Children are indices into the owning tree's
// node vector; rows with x[feature] <= threshold go left.
struct TreeNode {
  bool is_leaf = true;
  double value = 0.0;
  std::uint64_t n = 0;
  std::uint32_t feature = 0;
  double threshold = 0.0;
  double impurity_decrease = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  double predict(std::span<const double> x) const;
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::size_t depth() const;

 private:
  std::vector<TreeNode> nodes_;
};

class ForestModel {
 public:
  ForestModel() = default;
  ForestModel(std::vector<RegressionTree> trees, ForestConfig config, std::vector<std::string> feature_names,
              std::vector<double> importances);

  // Mean of per-tree leaf values. Throws DimensionMismatch on width mismatch.
  double predict(std::span<const double> x) const;
  std::vector<double> predict(const FeatureMatrix& X) const;

  // MDI importances by feature name: non-negative, summing to 1, or all zero
  // when no tree ever split.
  std::map<std::string, double> feature_importances() const;

  const std::vector<RegressionTree>& trees() const noexcept { return trees_; }
  const ForestConfig& config() const noexcept { return config_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const std::vector<double>& importances() const noexcept { return importances_; }

 private:
  std::vector<RegressionTree> trees_;
  ForestConfig config_;
  std::vector<std::string> feature_names_;
  std::vector<double> importances_;
};

// Bagged CART regression trees. Tree t draws from SplitMix64(random_state ^ t):
// first n bootstrap indices as next() % n, then (when max_features < d) the
// per-node feature subsets. Split search scans midpoints between consecutive
// distinct values and maximizes n_L * n_R / n * (mean_L - mean_R)^2, which is
// the weighted variance reduction; ties keep the lowest feature index, then
// the lowest threshold.
ForestModel fit_forest(const FeatureMatrix& X, const ForestConfig& config);
// Same, restricted to the given rows of X.
ForestModel fit_forest(const FeatureMatrix& X, std::span<const std::size_t> rows, const ForestConfig& config);

// `DMVF1` model file.
std::string serialize_model(const ForestModel& model);
ForestModel deserialize_model(std::string_view bytes);
void save_model(const ForestModel& model, const std::filesystem::path& path);
ForestModel load_model(const std::filesystem::path& path);

}  // namespace dmv
