#include "dmv/config.hpp"

#include <charconv>

#include "dmv/error.hpp"
#include "dmv/io.hpp"

namespace dmv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string where(std::string_view section, std::string_view key) {
  return "[" + std::string(section) + "] " + std::string(key);
}

std::uint64_t to_u64(std::string_view section, std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw Error(Errc::kInvalidConfig, where(section, key) + ": expected a non-negative integer, got '" +
                                          std::string(v) + "'");
  }
  return out;
}

double to_f64(std::string_view section, std::string_view key, std::string_view v) {
  double out = 0.0;
  if (!io::parse_double(v, out)) {
    throw Error(Errc::kInvalidConfig, where(section, key) + ": expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::string_view section, std::string_view key, std::string_view v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw Error(Errc::kInvalidConfig, where(section, key) + ": expected true or false, got '" + std::string(v) + "'");
}

std::vector<std::size_t> to_list(std::string_view section, std::string_view key, std::string_view v) {
  std::vector<std::size_t> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(to_u64(section, key, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, std::string_view v) {
  std::filesystem::path p{std::string(v)};
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

IniSections parse_ini(std::string_view text) {
  IniSections out;
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw Error(Errc::kInvalidConfig, "line " + std::to_string(line_no) + ": unterminated section header");
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      out[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(Errc::kInvalidConfig, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = std::string(trim(line.substr(0, eq)));
    if (key.empty()) throw Error(Errc::kInvalidConfig, "line " + std::to_string(line_no) + ": empty key");
    if (section.empty()) {
      throw Error(Errc::kInvalidConfig, "line " + std::to_string(line_no) + ": key outside a section");
    }
    out[section][key] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  preprocess.seed = value;
  embed.seed = value;
  forest.random_state = value;
}

void RunConfig::validate() const {
  forest.validate();
  embed.validate();
  if (cv_ks.empty()) throw Error(Errc::kInvalidConfig, "[eval] cv_k needs at least one value");
  for (auto k : cv_ks) {
    if (k < 2) throw Error(Errc::kInvalidConfig, "[eval] cv_k values must be >= 2");
  }
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw Error(Errc::kInvalidConfig, "[eval] holdout_fraction must lie in (0, 1)");
  }
  if (preprocess.selection_k < 1) throw Error(Errc::kInvalidConfig, "[preprocess] selection_k must be >= 1");
  if (preprocess.mi_bins < 2) throw Error(Errc::kInvalidConfig, "[preprocess] mi_bins must be >= 2");
  if (data_path.empty()) throw Error(Errc::kInvalidConfig, "[data] path is required");
  std::error_code ec;
  if (!std::filesystem::is_regular_file(data_path, ec)) {
    throw Error(Errc::kInvalidConfig, "[data] path does not exist: " + data_path.string());
  }
  if (schema_path && !std::filesystem::is_regular_file(*schema_path, ec)) {
    throw Error(Errc::kInvalidConfig, "[data] schema does not exist: " + schema_path->string());
  }
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig c;
  std::optional<std::uint64_t> seed;
  for (const auto& [section, entries] : parse_ini(text)) {
    for (const auto& [key, v] : entries) {
      const auto bad_key = [&] { throw Error(Errc::kInvalidConfig, "unknown key " + where(section, key)); };
      if (section == "data") {
        if (key == "path") c.data_path = resolve(base_dir, v);
        else if (key == "schema") c.schema_path = resolve(base_dir, v);
        else bad_key();
      } else if (section == "preprocess") {
        if (key == "numeric_imputation") c.preprocess.imputation.numeric = parse_numeric_impute(v);
        else if (key == "categorical_imputation") c.preprocess.imputation.categorical = parse_categorical_impute(v);
        else if (key == "selection_k") c.preprocess.selection_k = to_u64(section, key, v);
        else if (key == "scaler") c.preprocess.scaler = parse_scaler_kind(v);
        else if (key == "mi_bins") c.preprocess.mi_bins = to_u64(section, key, v);
        else if (key == "selection_trees") c.preprocess.selection_trees = to_u64(section, key, v);
        else if (key == "drop_redundant") c.preprocess.drop_redundant = to_bool(section, key, v);
        else bad_key();
      } else if (section == "embed") {
        if (key == "provider") c.embed.kind = parse_provider_kind(v);
        else if (key == "endpoint") c.embed.endpoint = v;
        else if (key == "model") c.embed.model_id = v;
        else if (key == "dimension") c.embed.dimension = to_u64(section, key, v);
        else if (key == "batch_size") c.embed.batch_size = to_u64(section, key, v);
        else if (key == "max_retries") c.embed.max_retries = to_u64(section, key, v);
        else if (key == "timeout") c.embed.timeout_seconds = to_f64(section, key, v);
        else if (key == "api_key_env") c.embed.api_key_env = v;
        else if (key == "concurrency") c.embed.concurrency = to_u64(section, key, v);
        else if (key == "backoff_base") c.embed.backoff_base_seconds = to_f64(section, key, v);
        else if (key == "api_key") {
          throw Error(Errc::kInvalidConfig, "[embed] api_key is not accepted; name an environment variable with "
                                            "api_key_env");
        } else bad_key();
      } else if (section == "forest") {
        if (key == "n_estimators") c.forest.n_estimators = to_u64(section, key, v);
        else if (key == "max_depth") {
          if (v == "none" || v == "None") c.forest.max_depth.reset();
          else c.forest.max_depth = to_u64(section, key, v);
        } else if (key == "min_samples_split") c.forest.min_samples_split = to_u64(section, key, v);
        else if (key == "min_samples_leaf") c.forest.min_samples_leaf = to_u64(section, key, v);
        else if (key == "max_features") c.forest.max_features = MaxFeatures::parse(v);
        else if (key == "bootstrap") c.forest.bootstrap = to_bool(section, key, v);
        else if (key == "n_jobs") c.forest.n_jobs = to_u64(section, key, v);
        else bad_key();
      } else if (section == "eval") {
        if (key == "cv_k") c.cv_ks = to_list(section, key, v);
        else if (key == "holdout_fraction") c.holdout_fraction = to_f64(section, key, v);
        else if (key == "seed") seed = to_u64(section, key, v);
        else if (key == "include_geo") c.include_geo = to_bool(section, key, v);
        else bad_key();
      } else if (section == "output") {
        if (key == "dir") c.output_dir = resolve(base_dir, v);
        else bad_key();
      } else {
        throw Error(Errc::kInvalidConfig, "unknown section [" + section + "]");
      }
    }
  }
  c.set_seed(seed.value_or(42));
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    throw Error(Errc::kInvalidConfig, "cannot read config " + path.string());
  }
  return parse_run_config(text, path.parent_path());
}

}  // namespace dmv
