#include "dmv/ablation.hpp"

#include <cmath>
#include <limits>

#include "dmv/error.hpp"

namespace dmv {

double percent_change(double with_value, double without_value) {
  if (with_value == 0.0) throw Error(Errc::kDivisionByZero, "percent change relative to a zero value");
  return 100.0 * (without_value - with_value) / with_value;
}

double round2(double value) { return std::round(value * 100.0) / 100.0; }

namespace {

double safe_change(double with_value, double without_value) {
  if (with_value == 0.0 || std::isnan(with_value) || std::isnan(without_value)) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return percent_change(with_value, without_value);
}

}  // namespace

Metrics percent_change(const Metrics& with, const Metrics& without) {
  return {safe_change(with.mse, without.mse), safe_change(with.mae, without.mae), safe_change(with.r2, without.r2),
          safe_change(with.evs, without.evs)};
}

AblationSpec AblationSpec::geolocation(std::vector<Method> methods, std::vector<std::size_t> cv_ks) {
  AblationSpec spec;
  spec.groups["geolocation"] = {kGroupGeolocation};
  spec.methods = std::move(methods);
  spec.cv_ks = std::move(cv_ks);
  return spec;
}

AblationResult run_ablation(Experiment& experiment, const AblationSpec& spec) {
  if (spec.methods.empty()) throw Error(Errc::kInvalidConfig, "ablation needs at least one method");
  const auto split = experiment.holdout();

  for (const auto m : spec.methods) {
    const auto X = experiment.matrix(m, split.train, split.train, {});
    std::set<std::string> tags;
    for (const auto& [_, tag] : X.group_tags) tags.insert(tag);
    for (const auto& [name, group] : spec.groups) {
      for (const auto& tag : group) {
        if (!tags.contains(tag)) {
          throw Error(Errc::kInvalidConfig, "group '" + name + "' names tag '" + tag + "' absent from the " +
                                                std::string(to_string(m)) + " feature matrix");
        }
      }
    }
  }

  AblationResult result;
  for (const auto m : spec.methods) {
    for (const auto& [name, group] : spec.groups) {
      const auto with = experiment.evaluate(m, split.train, split.test, {});
      const auto without = experiment.evaluate(m, split.train, split.test, group);
      result.cells.push_back({m, name, "holdout", with.metrics, without.metrics,
                              percent_change(with.metrics, without.metrics), with.width, without.width});
      for (const auto k : spec.cv_ks) {
        const auto cv_with = experiment.cross_validate(m, k, {});
        const auto cv_without = experiment.cross_validate(m, k, group);
        result.cells.push_back({m, name, "cv_k" + std::to_string(k), cv_with.mean, cv_without.mean,
                                percent_change(cv_with.mean, cv_without.mean), with.width, without.width});
      }
    }
  }
  return result;
}

}  // namespace dmv
