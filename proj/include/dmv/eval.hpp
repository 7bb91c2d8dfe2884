#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dmv/forest.hpp"
#include "dmv/matrix.hpp"

namespace dmv {

// r2 and evs are NaN when the evaluated targets have zero variance (for
// example a single-row fold); the free functions below throw instead.
struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
  double evs = 0.0;

  bool operator==(const Metrics&) const = default;
};

double mse(std::span<const double> y, std::span<const double> y_hat);
double mae(std::span<const double> y, std::span<const double> y_hat);
// 1 - SS_res / SS_tot. Throws ZeroVariance when y is constant.
double r2(std::span<const double> y, std::span<const double> y_hat);
// 1 - Var(y - y_hat) / Var(y), population variances.
double evs(std::span<const double> y, std::span<const double> y_hat);
Metrics compute_metrics(std::span<const double> y, std::span<const double> y_hat);

struct FoldAssignment {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;

  std::vector<std::vector<std::size_t>> folds() const;
  // Everything outside fold `f`, ascending.
  std::vector<std::size_t> training_indices(std::size_t f) const;
  bool operator==(const FoldAssignment&) const = default;
};

// Shuffle 0..n-1 with SplitMix64(seed), then deal contiguous chunks; the
// first n % k folds get one extra element. Requires 2 <= k <= n.
FoldAssignment kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed);

struct HoldoutSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Same shuffle as kfold_indices; the first round(n * test_fraction) shuffled
// indices form the test set. Both halves are returned sorted.
HoldoutSplit holdout_split(std::size_t n, double test_fraction, std::uint64_t seed);

struct CvResult {
  std::vector<Metrics> per_fold;
  Metrics mean;
  Metrics std;  // population standard deviation across folds

  bool operator==(const CvResult&) const = default;
};

// Mean and population std per metric, skipping NaN entries.
CvResult summarize_folds(std::vector<Metrics> per_fold);

// Evaluates one fold: train and test are indices into 0..n-1.
using FoldEvaluator =
    std::function<Metrics(std::span<const std::size_t> train, std::span<const std::size_t> test, std::size_t fold)>;

CvResult cross_validate(std::size_t n, std::size_t k, std::uint64_t seed, const FoldEvaluator& evaluate);

// Forest CV over an already assembled matrix. The pipeline-level variant,
// which refits preprocessing per fold, lives in Experiment.
CvResult cross_validate(const FeatureMatrix& matrix, const ForestConfig& config, std::size_t k, std::uint64_t seed);

struct ResidualRecord {
  std::size_t index = 0;
  double y = 0.0;
  double y_hat = 0.0;
  double residual = 0.0;
};

std::vector<ResidualRecord> residuals(std::span<const double> y, std::span<const double> y_hat);
std::string residuals_csv(std::span<const ResidualRecord> records);
void export_residuals(std::span<const ResidualRecord> records, const std::filesystem::path& path);

}  // namespace dmv
