// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dmv/ablation.hpp"
#include "dmv/config.hpp"
#include "dmv/eval.hpp"
#include "dmv/forest.hpp"
#include "dmv/io.hpp"
#include "dmv/pipeline.hpp"
#include "json.hpp"
#include "support/oracles.hpp"
#include "support/util.hpp"

using namespace dmv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail.clear();
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += why;
  }
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// Published (with, without, change) triples for the MSE, MAE and R2 tables.
struct Published {
  const char* label;
  double with;
  double without;
  double change;
};

Outcome ac1() {
  const auto t0 = Clock::now();
  Outcome o;
  const Published rows[] = {
      {"MSE baseline", 0.0221, 0.0239, 8.14},   {"MSE Llama3-70B", 0.93e-9, 1.59e-9, 70.97},
      {"MSE GPT-4o", 1.24e-9, 1.87e-9, 50.70},  {"MAE baseline", 0.0846, 0.0868, 2.60},
      {"MAE Llama3-70B", 5.81e-7, 7.47e-7, 28.57}, {"MAE GPT-4o", 6.21e-7, 8.29e-7, 33.47},
      {"R2 baseline", 0.9781, 0.9762, -0.19},
  };
  std::vector<std::string> matched;
  for (const auto& r : rows) {
    const double got = round2(percent_change(r.with, r.without));
    if (std::fabs(got - r.change) > 1e-9) {
      o.fail(std::string(r.label) + " " + fmt(got) + " vs published " + fmt(r.change));
    } else {
      matched.push_back(r.label);
    }
  }
  // Published as -6.6e-8% and -8.6e-8% from inputs rounded to 0.9999: sign only.
  for (const char* label : {"R2 Llama3-70B", "R2 GPT-4o"}) {
    const double got = percent_change(0.9999, 0.9999);
    if (got > 0.0) o.fail(std::string(label) + " sign " + fmt(got));
  }
  const double t = seconds_since(t0);
  if (t >= 1.0) o.fail("runtime " + fmt(t) + " s");
  if (o.pass) o.detail = "7/7 changes match to two decimals, R2 signs consistent, " + fmt(t * 1e3, 3) + " ms";
  else o.detail += " (" + std::to_string(matched.size()) + "/7 match)";
  return o;
}

Outcome ac2() {
  const auto t0 = Clock::now();
  Outcome o;
  oracle::SplitMix rng{20240601};
  std::size_t single_checked = 0;
  std::size_t forest_checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = 2 + rng.next() % 29;
    const auto d = 1 + rng.next() % 4;
    const auto ds = oracle::random_integer_dataset(rng, n, d, 1 + rng.next() % 6);
    const auto X = testutil::to_matrix(ds);

    ForestConfig single;
    single.n_estimators = 1;
    single.bootstrap = false;
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const oracle::RefTree ref(ds, all);
    const auto m1 = fit_forest(X, single);
    for (const auto& x : ds.x) {
      const double a = m1.predict(x);
      const double b = ref.predict(x);
      if (std::fabs(a - b) > 1e-12 * std::max(1.0, std::fabs(b))) {
        o.fail("trial " + std::to_string(trial) + " single tree " + fmt(a, 17) + " vs " + fmt(b, 17));
      }
      ++single_checked;
    }

    ForestConfig bag;
    bag.n_estimators = 10;
    bag.random_state = 1000 + static_cast<std::uint64_t>(trial);
    const auto m10 = fit_forest(X, bag);
    const oracle::RefForest ref10(ds, 10, bag.random_state, true);
    for (const auto& x : ds.x) {
      if (m10.predict(x) != ref10.predict(x)) o.fail("trial " + std::to_string(trial) + " 10-tree forest differs");
      ++forest_checked;
    }
  }
  const double t = seconds_since(t0);
  if (t >= 60.0) o.fail("runtime " + fmt(t) + " s");
  if (o.pass) {
    o.detail = "50 datasets, " + std::to_string(single_checked) + " single-tree and " +
               std::to_string(forest_checked) + " forest predictions agree, " + fmt(t, 3) + " s";
  }
  return o;
}

Outcome ac3() {
  Outcome o;
  oracle::SplitMix rng{777};
  auto uniform = [&] { return static_cast<double>(rng.next() >> 11) * 0x1.0p-53; };
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.next() % 200;
    std::vector<double> y(n);
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = uniform() * 20 - 10;
      p[i] = t % 10 == 0 ? y[i] : y[i] + (uniform() - 0.5) * (t % 7 + 1);
    }
    const auto got = compute_metrics(y, p);
    const auto want = oracle::metrics(y, p);
    for (const auto& [g, w] : {std::pair{got.mse, want.mse}, std::pair{got.mae, want.mae},
                               std::pair{got.r2, want.r2}, std::pair{got.evs, want.evs}}) {
      const double err = std::fabs(g - static_cast<double>(w));
      worst = std::max(worst, err);
      if (err > 1e-12) o.fail("pair " + std::to_string(t) + " error " + fmt(err));
    }
    if (!(got.evs >= got.r2)) o.fail("pair " + std::to_string(t) + " EVS < R2");
    if (!(got.mae <= std::sqrt(got.mse))) o.fail("pair " + std::to_string(t) + " MAE > sqrt(MSE)");
    if ((got.r2 == 1.0) != (got.mse == 0.0)) o.fail("pair " + std::to_string(t) + " R2=1 vs MSE=0");
  }
  if (o.pass) o.detail = "100 pairs, max abs error " + fmt(worst, 3) + ", identities hold";
  return o;
}

Outcome ac4() {
  Outcome o;
  for (std::size_t n : {10, 1000, 10000}) {
    for (std::size_t k : {5, 10}) {
      const auto a = kfold_indices(n, k, 42);
      const auto folds = a.folds();
      std::vector<int> seen(n, 0);
      std::size_t lo = n;
      std::size_t hi = 0;
      for (const auto& f : folds) {
        for (auto i : f) ++seen[i];
        lo = std::min(lo, f.size());
        hi = std::max(hi, f.size());
      }
      const std::string where = "n=" + std::to_string(n) + " k=" + std::to_string(k);
      if (folds.size() != k) o.fail(where + " fold count");
      for (int c : seen) {
        if (c != 1) {
          o.fail(where + " not a partition");
          break;
        }
      }
      if (hi - lo > 1) o.fail(where + " sizes differ by " + std::to_string(hi - lo));
      if (!(kfold_indices(n, k, 42) == a)) o.fail(where + " not reproducible");
    }
  }
  if (o.pass) o.detail = "6 (n, k) cases: disjoint, covering, balanced, reproducible";
  return o;
}

struct SmokeRun {
  bool ok = false;
  std::string error;
  double seconds = 0.0;
  fs::path out;
};

SmokeRun smoke_run(const fs::path& out, std::size_t jobs) {
  SmokeRun r;
  r.out = out;
  const auto t0 = Clock::now();
  try {
    auto config = load_run_config(fs::path(DMV_SOURCE_DIR) / "configs" / "smoke.ini");
    config.output_dir = out;
    config.forest.n_jobs = jobs;
    Pipeline p(config);
    p.run_all();
    r.ok = true;
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.seconds = seconds_since(t0);
  return r;
}

Outcome ac5(const SmokeRun& run) {
  Outcome o;
  if (!run.ok) {
    o.fail("pipeline failed: " + run.error);
    return o;
  }
  if (run.seconds >= 120.0) o.fail("runtime " + fmt(run.seconds) + " s");
  const auto report = json::parse(io::read_file(run.out / kReportFile));
  std::string r2s;
  for (const auto& [method, metrics] : report["holdout"].items()) {
    const double r2 = metrics["r2"].get<double>();
    r2s += (r2s.empty() ? "" : ", ") + method + " R2 " + fmt(r2, 4);
    if (!(r2 >= 0.9)) o.fail(method + " hold-out R2 " + fmt(r2));
  }
  std::size_t cells = 0;
  for (const auto& [method, groups] : report["ablation"].items()) {
    for (const auto& [protocol, cell] : groups["geolocation"].items()) {
      ++cells;
      const double with = cell["with"]["mse"].get<double>();
      const double without = cell["without"]["mse"].get<double>();
      if (!(without > with)) o.fail(method + " " + protocol + " MSE without " + fmt(without) + " <= with " + fmt(with));
    }
  }
  if (report["holdout"].size() < 2) o.fail("expected baseline and local-embed in the report");
  if (cells == 0) o.fail("no geolocation ablation cells");
  if (o.pass) {
    o.detail = fmt(run.seconds, 3) + " s, " + r2s + ", MSE_without > MSE_with in " + std::to_string(cells) + " cells";
  }
  return o;
}

Outcome ac6(const SmokeRun& a, const SmokeRun& b) {
  Outcome o;
  if (!a.ok || !b.ok) {
    o.fail("pipeline failed: " + a.error + b.error);
    return o;
  }
  if (io::read_file(a.out / kModelFile) != io::read_file(b.out / kModelFile)) o.fail("model.dmvf differs");
  auto ra = json::parse(io::read_file(a.out / kReportFile));
  auto rb = json::parse(io::read_file(b.out / kReportFile));
  ra.erase("timing");
  rb.erase("timing");
  if (ra.dump(2) != rb.dump(2)) o.fail("report.json differs outside timing");
  if (o.pass) o.detail = "model.dmvf and report.json (minus timing) byte-identical at n_jobs 1 and 3";
  return o;
}

Outcome ac7() {
  Outcome o;
  std::string readme;
  try {
    readme = io::read_file(fs::path(DMV_SOURCE_DIR) / "README.md");
  } catch (const std::exception& e) {
    o.fail(e.what());
    return o;
  }
  for (const char* needle : {"not reproducible", "0.93e-9", "0.9999", "284K"}) {
    if (readme.find(needle) == std::string::npos) o.fail(std::string("README lacks '") + needle + "'");
  }
  if (o.pass) {
    o.detail = "README states the absolute MSE ~0.93e-9 / R2 0.9999 are not reproducible at desk scale; "
               "oracle and property checks stand in";
  }
  return o;
}

void report(int id, const Outcome& o, bool& all) {
  std::printf("AC%d %s: %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
  all = all && o.pass;
}

}  // namespace

int main() {
  bool all = true;
  report(1, ac1(), all);
  report(2, ac2(), all);
  report(3, ac3(), all);
  report(4, ac4(), all);
  const auto root = testutil::scratch_dir("acceptance");
  const auto first = smoke_run(root / "run_jobs1", 1);
  report(5, ac5(first), all);
  const auto second = smoke_run(root / "run_jobs3", 3);
  report(6, ac6(first, second), all);
  report(7, ac7(), all);
  return all ? 0 : 1;
}
