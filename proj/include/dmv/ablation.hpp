#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dmv/eval.hpp"
#include "dmv/experiment.hpp"

namespace dmv {

// 100 * (without - with) / with. Throws DivisionByZero when with == 0.
double percent_change(double with_value, double without_value);
// Half away from zero, two decimals.
double round2(double value);

// Per-metric percent change; a metric whose with-value is zero or NaN comes
// back NaN instead of throwing.
Metrics percent_change(const Metrics& with, const Metrics& without);

struct AblationSpec {
  std::map<std::string, std::set<std::string>> groups;  // name -> group tags
  std::vector<Method> methods;
  std::vector<std::size_t> cv_ks;  // empty: hold-out only

  static AblationSpec geolocation(std::vector<Method> methods, std::vector<std::size_t> cv_ks = {});
};

struct AblationCell {
  Method method = Method::kBaseline;
  std::string group;
  std::string protocol;  // "holdout" or "cv_k<k>" (fold means)
  Metrics with;
  Metrics without;
  Metrics change_pct;  // raw, unrounded
  std::size_t width_with = 0;
  std::size_t width_without = 0;
};

struct AblationResult {
  std::vector<AblationCell> cells;  // method, group, protocol order
};

// Group tags must name a group present in the method's feature matrix
// ("geolocation", "numeric", "embedding" or "onehot:<column>"); an empty group
// is allowed. Each pair of runs shares the split, the fold assignment and the
// per-tree random streams.
AblationResult run_ablation(Experiment& experiment, const AblationSpec& spec);

}  // namespace dmv
