#include "dmv/forest.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "dmv/error.hpp"
#include "dmv/io.hpp"
#include "dmv/rng.hpp"

namespace dmv {

std::size_t MaxFeatures::resolve(std::size_t d) const {
  switch (kind) {
    case Kind::kAll: return d;
    case Kind::kSqrt:
      return std::clamp<std::size_t>(static_cast<std::size_t>(std::sqrt(static_cast<double>(d))), 1, d);
    case Kind::kCount: return std::clamp<std::size_t>(count, 1, d);
  }
  return d;
}

std::string MaxFeatures::to_string() const {
  switch (kind) {
    case Kind::kAll: return "all";
    case Kind::kSqrt: return "sqrt";
    case Kind::kCount: return std::to_string(count);
  }
  return "all";
}

MaxFeatures MaxFeatures::parse(std::string_view text) {
  // `auto` is the historical regression default, meaning every feature.
  if (text == "all" || text == "auto" || text == "none") return all();
  if (text == "sqrt") return sqrt();
  std::size_t k = 0;
  for (char c : text) {
    if (c < '0' || c > '9') throw Error(Errc::kInvalidConfig, "max_features: '" + std::string(text) + "'");
    k = k * 10 + static_cast<std::size_t>(c - '0');
  }
  if (text.empty() || k == 0) throw Error(Errc::kInvalidConfig, "max_features must be >= 1");
  return fixed(k);
}

void ForestConfig::validate() const {
  if (n_estimators < 1) throw Error(Errc::kInvalidConfig, "n_estimators must be >= 1");
  if (min_samples_split < 2) throw Error(Errc::kInvalidConfig, "min_samples_split must be >= 2");
  if (min_samples_leaf < 1) throw Error(Errc::kInvalidConfig, "min_samples_leaf must be >= 1");
  if (max_features.kind == MaxFeatures::Kind::kCount && max_features.count < 1) {
    throw Error(Errc::kInvalidConfig, "max_features must be >= 1");
  }
}

double RegressionTree::predict(std::span<const double> x) const {
  std::uint32_t i = 0;
  while (!nodes_[i].is_leaf) {
    const auto& node = nodes_[i];
    i = x[node.feature] <= node.threshold ? node.left : node.right;
  }
  return nodes_[i].value;
}

std::size_t RegressionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::size_t best = 0;
  std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (!nodes_[i].is_leaf) {
      stack.emplace_back(nodes_[i].left, d + 1);
      stack.emplace_back(nodes_[i].right, d + 1);
    }
  }
  return best;
}

ForestModel::ForestModel(std::vector<RegressionTree> trees, ForestConfig config,
                         std::vector<std::string> feature_names, std::vector<double> importances)
    : trees_(std::move(trees)),
      config_(config),
      feature_names_(std::move(feature_names)),
      importances_(std::move(importances)) {}

double ForestModel::predict(std::span<const double> x) const {
  if (x.size() != feature_names_.size()) {
    throw Error(Errc::kDimensionMismatch, "row has " + std::to_string(x.size()) + " features, model expects " +
                                              std::to_string(feature_names_.size()));
  }
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict(x);
  return sum / static_cast<double>(trees_.size());
}

std::vector<double> ForestModel::predict(const FeatureMatrix& X) const {
  if (X.cols() != feature_names_.size()) {
    throw Error(Errc::kDimensionMismatch, "matrix has " + std::to_string(X.cols()) + " columns, model expects " +
                                              std::to_string(feature_names_.size()));
  }
  std::vector<double> out(X.rows);
  for (std::size_t r = 0; r < X.rows; ++r) out[r] = predict(X.row(r));
  return out;
}

std::map<std::string, double> ForestModel::feature_importances() const {
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < feature_names_.size(); ++i) out[feature_names_[i]] = importances_[i];
  return out;
}

namespace {

// Column-major copy of the training rows plus a per-feature presort shared by
// every tree of one fit.
struct TrainingData {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> columns;  // d blocks of n
  std::vector<double> y;
  std::vector<std::uint32_t> order;  // d blocks of n row ids, ascending by value then id

  double x(std::size_t f, std::uint32_t i) const { return columns[f * n + i]; }
};

TrainingData prepare(const FeatureMatrix& X, std::span<const std::size_t> rows) {
  TrainingData data;
  data.n = rows.size();
  data.d = X.cols();
  if (data.n == 0 || data.d == 0) throw Error(Errc::kEmptyMatrix, "cannot fit on an empty matrix");
  if (data.n > std::numeric_limits<std::uint32_t>::max()) throw Error(Errc::kInvalidValue, "too many rows");
  data.columns.resize(data.n * data.d);
  data.y.resize(data.n);
  for (std::size_t i = 0; i < data.n; ++i) {
    const auto r = rows[i];
    const double t = X.target[r];
    if (!std::isfinite(t)) throw Error(Errc::kNonFiniteInput, "target row " + std::to_string(r));
    data.y[i] = t;
    const auto src = X.row(r);
    for (std::size_t f = 0; f < data.d; ++f) {
      if (!std::isfinite(src[f])) {
        throw Error(Errc::kNonFiniteInput, "row " + std::to_string(r) + ", column '" + X.column_names[f] + "'");
      }
      data.columns[f * data.n + i] = src[f];
    }
  }
  data.order.resize(data.n * data.d);
  for (std::size_t f = 0; f < data.d; ++f) {
    auto first = data.order.begin() + static_cast<std::ptrdiff_t>(f * data.n);
    std::iota(first, first + static_cast<std::ptrdiff_t>(data.n), 0U);
    const double* col = &data.columns[f * data.n];
    std::stable_sort(first, first + static_cast<std::ptrdiff_t>(data.n),
                     [col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
  }
  return data;
}

struct BuildTask {
  std::uint32_t begin;
  std::uint32_t end;
  std::size_t depth;
  std::int64_t parent;
  bool is_left;
};

RegressionTree grow_tree(const TrainingData& data, const ForestConfig& cfg, std::uint64_t tree_index) {
  const std::size_t n = data.n;
  const std::size_t d = data.d;
  SplitMix64 rng(cfg.random_state ^ tree_index);

  // Bootstrap multiplicities; duplicates are carried as integer weights.
  std::vector<std::uint32_t> weight(n, cfg.bootstrap ? 0U : 1U);
  if (cfg.bootstrap) {
    for (std::size_t k = 0; k < n; ++k) ++weight[rng.below(n)];
  }
  std::size_t m = 0;
  for (auto w : weight) m += w > 0 ? 1 : 0;

  // Per-feature sorted lists of in-sample rows. Every node owns the same
  // [begin, end) range in each list.
  std::vector<std::uint32_t> sorted(d * m);
  for (std::size_t f = 0; f < d; ++f) {
    std::size_t pos = 0;
    const std::uint32_t* ord = &data.order[f * n];
    for (std::size_t i = 0; i < n; ++i) {
      if (weight[ord[i]] > 0) sorted[f * m + pos++] = ord[i];
    }
  }

  const std::size_t k = cfg.max_features.resolve(d);
  std::vector<std::uint32_t> feature_pool(d);
  std::iota(feature_pool.begin(), feature_pool.end(), 0U);
  std::vector<std::uint32_t> candidates;
  std::vector<std::uint8_t> goes_left(n, 0);
  std::vector<std::uint32_t> scratch(m);
  const double min_leaf = static_cast<double>(cfg.min_samples_leaf);

  std::vector<TreeNode> nodes;
  std::vector<BuildTask> stack;
  stack.push_back({0, static_cast<std::uint32_t>(m), 0, -1, false});

  while (!stack.empty()) {
    const BuildTask task = stack.back();
    stack.pop_back();
    const auto idx = static_cast<std::uint32_t>(nodes.size());
    nodes.emplace_back();
    if (task.parent >= 0) {
      auto& parent = nodes[static_cast<std::size_t>(task.parent)];
      (task.is_left ? parent.left : parent.right) = idx;
    }

    std::uint64_t total_w = 0;
    double total_s = 0.0;
    double y_min = std::numeric_limits<double>::infinity();
    double y_max = -std::numeric_limits<double>::infinity();
    for (std::uint32_t i = task.begin; i < task.end; ++i) {
      const auto r = sorted[i];
      total_w += weight[r];
      total_s += static_cast<double>(weight[r]) * data.y[r];
      y_min = std::min(y_min, data.y[r]);
      y_max = std::max(y_max, data.y[r]);
    }
    const double wd = static_cast<double>(total_w);
    {
      auto& node = nodes.back();
      node.n = total_w;
      node.value = total_s / wd;
    }

    const bool splittable = total_w >= cfg.min_samples_split && (!cfg.max_depth || task.depth < *cfg.max_depth) &&
                            y_min < y_max && wd >= 2.0 * min_leaf;
    if (!splittable) continue;

    candidates.clear();
    if (k < d) {
      for (std::size_t j = 0; j < k; ++j) {
        const auto pick = j + static_cast<std::size_t>(rng.below(d - j));
        std::swap(feature_pool[j], feature_pool[pick]);
      }
      candidates.assign(feature_pool.begin(), feature_pool.begin() + static_cast<std::ptrdiff_t>(k));
      std::sort(candidates.begin(), candidates.end());
    } else {
      candidates = feature_pool;
    }

    double best_gain = 0.0;
    std::int64_t best_feature = -1;
    double best_threshold = 0.0;
    for (const auto f : candidates) {
      const std::uint32_t* s = &sorted[f * m];
      if (data.x(f, s[task.begin]) == data.x(f, s[task.end - 1])) continue;
      std::uint64_t wl = 0;
      double sl = 0.0;
      for (std::uint32_t i = task.begin; i + 1 < task.end; ++i) {
        const auto r = s[i];
        wl += weight[r];
        sl += static_cast<double>(weight[r]) * data.y[r];
        const double xv = data.x(f, r);
        const double xn = data.x(f, s[i + 1]);
        if (!(xv < xn)) continue;
        const double nl = static_cast<double>(wl);
        const double nr = static_cast<double>(total_w - wl);
        if (nl < min_leaf) continue;
        if (nr < min_leaf) break;
        const double diff = sl / nl - (total_s - sl) / nr;
        const double gain = nl * nr / wd * (diff * diff);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          double mid = std::midpoint(xv, xn);
          if (mid >= xn) mid = xv;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) continue;

    const auto bf = static_cast<std::size_t>(best_feature);
    std::uint32_t left_count = 0;
    for (std::uint32_t i = task.begin; i < task.end; ++i) {
      const auto r = sorted[bf * m + i];
      goes_left[r] = data.x(bf, r) <= best_threshold ? 1 : 0;
      left_count += goes_left[r];
    }
    for (std::size_t f = 0; f < d; ++f) {
      std::uint32_t* s = &sorted[f * m];
      std::uint32_t l = task.begin;
      std::uint32_t rpos = 0;
      for (std::uint32_t i = task.begin; i < task.end; ++i) {
        if (goes_left[s[i]]) {
          s[l++] = s[i];
        } else {
          scratch[rpos++] = s[i];
        }
      }
      std::copy_n(scratch.begin(), rpos, s + l);
    }

    auto& node = nodes[idx];
    node.is_leaf = false;
    node.feature = static_cast<std::uint32_t>(bf);
    node.threshold = best_threshold;
    node.impurity_decrease = best_gain;
    const std::uint32_t mid = task.begin + left_count;
    stack.push_back({mid, task.end, task.depth + 1, idx, false});
    stack.push_back({task.begin, mid, task.depth + 1, idx, true});
  }
  return RegressionTree(std::move(nodes));
}

std::vector<double> compute_importances(const std::vector<RegressionTree>& trees, std::size_t d) {
  std::vector<double> imp(d, 0.0);
  for (const auto& t : trees) {
    for (const auto& node : t.nodes()) {
      if (!node.is_leaf) imp[node.feature] += node.impurity_decrease;
    }
  }
  const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
  if (total > 0.0) {
    for (auto& v : imp) v /= total;
  }
  return imp;
}

}  // namespace

ForestModel fit_forest(const FeatureMatrix& X, const ForestConfig& config) {
  std::vector<std::size_t> rows(X.rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return fit_forest(X, rows, config);
}

ForestModel fit_forest(const FeatureMatrix& X, std::span<const std::size_t> rows, const ForestConfig& config) {
  config.validate();
  if (X.target.size() != X.rows || X.values.size() != X.rows * X.cols()) {
    throw Error(Errc::kDimensionMismatch, "feature matrix shape is inconsistent");
  }
  const TrainingData data = prepare(X, rows);

  std::vector<RegressionTree> trees(config.n_estimators);
  std::size_t workers = config.n_jobs == 0 ? std::max(1U, std::thread::hardware_concurrency()) : config.n_jobs;
  workers = std::min(workers, trees.size());

  if (workers <= 1) {
    for (std::size_t t = 0; t < trees.size(); ++t) trees[t] = grow_tree(data, config, t);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    {
      std::vector<std::jthread> pool;
      pool.reserve(workers);
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t t = next++; t < trees.size(); t = next++) {
            try {
              trees[t] = grow_tree(data, config, t);
            } catch (...) {
              std::lock_guard lock(failure_mu);
              if (!failure) failure = std::current_exception();
            }
          }
        });
      }
    }
    if (failure) std::rethrow_exception(failure);
  }

  auto importances = compute_importances(trees, data.d);
  return ForestModel(std::move(trees), config, X.column_names, std::move(importances));
}

namespace {

constexpr std::string_view kModelMagic = "DMVF1";
constexpr std::uint32_t kModelVersion = 1;

void write_subtree(io::Writer& w, const RegressionTree& tree, std::uint32_t root) {
  std::vector<std::uint32_t> stack{root};
  while (!stack.empty()) {
    const auto& node = tree.nodes()[stack.back()];
    stack.pop_back();
    w.u8(node.is_leaf ? 1 : 0);
    if (node.is_leaf) {
      w.f64(node.value);
      w.u64(node.n);
    } else {
      w.u32(node.feature);
      w.f64(node.threshold);
      w.f64(node.impurity_decrease);
      w.f64(node.value);
      w.u64(node.n);
      stack.push_back(node.right);
      stack.push_back(node.left);
    }
  }
}

RegressionTree read_tree(io::Reader& r, std::uint64_t node_count, std::size_t n_features) {
  std::vector<TreeNode> nodes;
  nodes.reserve(node_count);
  // (parent, is_left) slots awaiting a child, in preorder.
  std::vector<std::pair<std::int64_t, bool>> pending{{-1, false}};
  for (std::uint64_t i = 0; i < node_count; ++i) {
    if (pending.empty()) throw Error(Errc::kIoFailure, "tree has more nodes than its structure allows");
    const auto [parent, is_left] = pending.back();
    pending.pop_back();
    const auto idx = static_cast<std::uint32_t>(nodes.size());
    TreeNode node;
    node.is_leaf = r.u8() != 0;
    if (node.is_leaf) {
      node.value = r.f64();
      node.n = r.u64();
    } else {
      node.feature = r.u32();
      node.threshold = r.f64();
      node.impurity_decrease = r.f64();
      node.value = r.f64();
      node.n = r.u64();
      if (node.feature >= n_features) throw Error(Errc::kIoFailure, "split feature index out of range");
    }
    nodes.push_back(node);
    if (parent >= 0) {
      auto& p = nodes[static_cast<std::size_t>(parent)];
      (is_left ? p.left : p.right) = idx;
    }
    if (!node.is_leaf) {
      pending.emplace_back(idx, false);
      pending.emplace_back(idx, true);
    }
  }
  if (!pending.empty()) throw Error(Errc::kIoFailure, "tree structure is incomplete");
  return RegressionTree(std::move(nodes));
}

}  // namespace

std::string serialize_model(const ForestModel& model) {
  io::Writer w;
  w.bytes(kModelMagic);
  w.u32(kModelVersion);
  const auto& c = model.config();
  w.u64(c.n_estimators);
  w.u8(c.max_depth ? 1 : 0);
  w.u64(c.max_depth.value_or(0));
  w.u64(c.min_samples_split);
  w.u64(c.min_samples_leaf);
  w.u8(static_cast<std::uint8_t>(c.max_features.kind));
  w.u64(c.max_features.count);
  w.u8(c.bootstrap ? 1 : 0);
  w.u64(c.random_state);
  w.u64(model.feature_names().size());
  for (const auto& name : model.feature_names()) w.str(name);
  for (double v : model.importances()) w.f64(v);
  w.u64(model.trees().size());
  for (const auto& tree : model.trees()) {
    w.u64(tree.nodes().size());
    write_subtree(w, tree, 0);
  }
  return w.release();
}

ForestModel deserialize_model(std::string_view bytes) {
  if (bytes.size() < kModelMagic.size() || bytes.substr(0, kModelMagic.size()) != kModelMagic) {
    throw Error(Errc::kBadMagic, "not a DMVF1 model file");
  }
  io::Reader r(bytes.substr(kModelMagic.size()));
  if (r.remaining() < 4) throw Error(Errc::kVersionUnsupported, "missing format version");
  if (const auto v = r.u32(); v != kModelVersion) {
    throw Error(Errc::kVersionUnsupported, "model format version " + std::to_string(v));
  }
  ForestConfig c;
  c.n_estimators = r.u64();
  const bool has_depth = r.u8() != 0;
  const auto depth = r.u64();
  if (has_depth) c.max_depth = depth;
  c.min_samples_split = r.u64();
  c.min_samples_leaf = r.u64();
  const auto mf_kind = r.u8();
  if (mf_kind > static_cast<std::uint8_t>(MaxFeatures::Kind::kCount)) throw Error(Errc::kIoFailure, "bad max_features");
  c.max_features.kind = static_cast<MaxFeatures::Kind>(mf_kind);
  c.max_features.count = r.u64();
  c.bootstrap = r.u8() != 0;
  c.random_state = r.u64();

  const auto nf = r.u64();
  if (nf > r.remaining()) throw Error(Errc::kIoFailure, "feature count exceeds file size");
  std::vector<std::string> names;
  names.reserve(nf);
  for (std::uint64_t i = 0; i < nf; ++i) names.push_back(r.str());
  std::vector<double> imp(nf);
  for (auto& v : imp) v = r.f64();

  const auto nt = r.u64();
  if (nt != c.n_estimators) throw Error(Errc::kIoFailure, "tree count does not match n_estimators");
  std::vector<RegressionTree> trees;
  trees.reserve(nt);
  for (std::uint64_t t = 0; t < nt; ++t) {
    const auto nn = r.u64();
    if (nn == 0 || nn > r.remaining()) throw Error(Errc::kIoFailure, "bad node count");
    trees.push_back(read_tree(r, nn, nf));
  }
  if (!r.at_end()) throw Error(Errc::kIoFailure, "trailing bytes after model");
  return ForestModel(std::move(trees), c, std::move(names), std::move(imp));
}

void save_model(const ForestModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_model(model));
}

ForestModel load_model(const std::filesystem::path& path) { return deserialize_model(io::read_file(path)); }

}  // namespace dmv
