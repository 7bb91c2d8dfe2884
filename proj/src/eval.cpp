#include "dmv/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dmv/error.hpp"
#include "dmv/io.hpp"
#include "dmv/rng.hpp"

namespace dmv {

namespace {

void check_pair(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) {
    throw Error(Errc::kLengthMismatch, std::to_string(y.size()) + " targets vs " + std::to_string(y_hat.size()) +
                                           " predictions");
  }
  if (y.empty()) throw Error(Errc::kEmpty, "no observations");
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sum_sq_dev(std::span<const double> y) {
  const double m = mean_of(y);
  double ss = 0.0;
  for (double v : y) ss += (v - m) * (v - m);
  return ss;
}

}  // namespace

double mse(std::span<const double> y, std::span<const double> y_hat) {
  check_pair(y, y_hat);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
  return s / static_cast<double>(y.size());
}

double mae(std::span<const double> y, std::span<const double> y_hat) {
  check_pair(y, y_hat);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - y_hat[i]);
  return s / static_cast<double>(y.size());
}

double r2(std::span<const double> y, std::span<const double> y_hat) {
  check_pair(y, y_hat);
  const double ss_tot = sum_sq_dev(y);
  if (!(ss_tot > 0.0)) throw Error(Errc::kZeroVariance, "target is constant");
  double ss_res = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
  return 1.0 - ss_res / ss_tot;
}

double evs(std::span<const double> y, std::span<const double> y_hat) {
  check_pair(y, y_hat);
  const double ss_tot = sum_sq_dev(y);
  if (!(ss_tot > 0.0)) throw Error(Errc::kZeroVariance, "target is constant");
  std::vector<double> resid(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) resid[i] = y[i] - y_hat[i];
  // Both variances share the 1/n factor.
  return 1.0 - sum_sq_dev(resid) / ss_tot;
}

Metrics compute_metrics(std::span<const double> y, std::span<const double> y_hat) {
  Metrics m;
  m.mse = mse(y, y_hat);
  m.mae = mae(y, y_hat);
  if (sum_sq_dev(y) > 0.0) {
    m.r2 = r2(y, y_hat);
    m.evs = evs(y, y_hat);
  } else {
    m.r2 = std::numeric_limits<double>::quiet_NaN();
    m.evs = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

std::vector<std::vector<std::size_t>> FoldAssignment::folds() const {
  std::vector<std::vector<std::size_t>> out(k);
  for (std::size_t i = 0; i < fold_of.size(); ++i) out[fold_of[i]].push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::training_indices(std::size_t f) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != f) out.push_back(i);
  }
  return out;
}

FoldAssignment kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > n) {
    throw Error(Errc::kBadK, "k=" + std::to_string(k) + " must satisfy 2 <= k <= n=" + std::to_string(n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  SplitMix64 rng(seed);
  shuffle(std::span<std::size_t>(perm), rng);

  FoldAssignment a{k, std::vector<std::size_t>(n)};
  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    for (std::size_t j = 0; j < size; ++j) a.fold_of[perm[pos++]] = f;
  }
  return a;
}

HoldoutSplit holdout_split(std::size_t n, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(Errc::kInvalidConfig, "holdout fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  SplitMix64 rng(seed);
  shuffle(std::span<std::size_t>(perm), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  if (n_test == 0 || n_test >= n) throw Error(Errc::kInvalidConfig, "holdout split leaves an empty side");
  HoldoutSplit s;
  s.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

CvResult summarize_folds(std::vector<Metrics> per_fold) {
  CvResult out;
  out.per_fold = std::move(per_fold);
  auto stats = [&](double Metrics::*field, double& mean, double& sd) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& m : out.per_fold) {
      if (!std::isnan(m.*field)) {
        sum += m.*field;
        ++count;
      }
    }
    if (count == 0) {
      mean = sd = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (const auto& m : out.per_fold) {
      if (!std::isnan(m.*field)) ss += (m.*field - mean) * (m.*field - mean);
    }
    sd = std::sqrt(ss / static_cast<double>(count));
  };
  stats(&Metrics::mse, out.mean.mse, out.std.mse);
  stats(&Metrics::mae, out.mean.mae, out.std.mae);
  stats(&Metrics::r2, out.mean.r2, out.std.r2);
  stats(&Metrics::evs, out.mean.evs, out.std.evs);
  return out;
}

CvResult cross_validate(std::size_t n, std::size_t k, std::uint64_t seed, const FoldEvaluator& evaluate) {
  const auto assignment = kfold_indices(n, k, seed);
  const auto folds = assignment.folds();
  std::vector<Metrics> per_fold;
  per_fold.reserve(k);
  for (std::size_t f = 0; f < k; ++f) {
    const auto train = assignment.training_indices(f);
    per_fold.push_back(evaluate(train, folds[f], f));
  }
  return summarize_folds(std::move(per_fold));
}

CvResult cross_validate(const FeatureMatrix& matrix, const ForestConfig& config, std::size_t k, std::uint64_t seed) {
  return cross_validate(matrix.rows, k, seed,
                        [&](std::span<const std::size_t> train, std::span<const std::size_t> test, std::size_t) {
                          const auto model = fit_forest(matrix, train, config);
                          std::vector<double> y;
                          std::vector<double> y_hat;
                          for (auto r : test) {
                            y.push_back(matrix.target[r]);
                            y_hat.push_back(model.predict(matrix.row(r)));
                          }
                          return compute_metrics(y, y_hat);
                        });
}

std::vector<ResidualRecord> residuals(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) throw Error(Errc::kLengthMismatch, "residuals need equal lengths");
  std::vector<ResidualRecord> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = {i, y[i], y_hat[i], y[i] - y_hat[i]};
  return out;
}

std::string residuals_csv(std::span<const ResidualRecord> records) {
  std::string out = "index,y,y_hat,residual\n";
  for (const auto& r : records) {
    out += std::to_string(r.index);
    out += ',';
    out += io::format_double(r.y);
    out += ',';
    out += io::format_double(r.y_hat);
    out += ',';
    out += io::format_double(r.residual);
    out += '\n';
  }
  return out;
}

void export_residuals(std::span<const ResidualRecord> records, const std::filesystem::path& path) {
  io::write_file_atomic(path, residuals_csv(records));
}

}  // namespace dmv
