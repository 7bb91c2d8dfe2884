#include "dmv/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include "dmv/ablation.hpp"
#include "dmv/embed.hpp"
#include "dmv/forest.hpp"
#include "dmv/io.hpp"
#include "dmv/plots.hpp"

namespace dmv {

using nlohmann::json;

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::kMissingArtifact:
    case Errc::kInvalidConfig:
    case Errc::kInvalidSchema:
    case Errc::kMissingColumn:
    case Errc::kRowArityMismatch:
    case Errc::kInvalidValue:
    case Errc::kUnparseableGeolocation:
    case Errc::kOutOfRange:
    case Errc::kAuthMissing:
      return 1;
    default:
      return 2;
  }
}

Method provider_method(const RunConfig& config) {
  return config.embed.kind == ProviderKind::kLocal ? Method::kLocalEmbed : Method::kRemoteEmbed;
}

json to_json(const Metrics& m) { return {{"mse", m.mse}, {"mae", m.mae}, {"r2", m.r2}, {"evs", m.evs}}; }

json to_json(const CvResult& cv) {
  json folds = json::array();
  for (const auto& m : cv.per_fold) folds.push_back(to_json(m));
  return {{"mean", to_json(cv.mean)}, {"std", to_json(cv.std)}, {"per_fold", folds}};
}

json config_echo(const RunConfig& c) {
  json forest = {{"n_estimators", c.forest.n_estimators},
                 {"max_depth", c.forest.max_depth ? json(*c.forest.max_depth) : json(nullptr)},
                 {"min_samples_split", c.forest.min_samples_split},
                 {"min_samples_leaf", c.forest.min_samples_leaf},
                 {"max_features", c.forest.max_features.to_string()},
                 {"bootstrap", c.forest.bootstrap},
                 {"random_state", c.forest.random_state}};
  json embed = {{"provider", std::string(to_string(c.embed.kind))},
                {"model", c.embed.effective_model_id()},
                {"batch_size", c.embed.batch_size},
                {"max_retries", c.embed.max_retries},
                {"timeout", c.embed.timeout_seconds},
                {"api_key_env", c.embed.api_key_env},
                {"concurrency", c.embed.concurrency}};
  if (c.embed.kind == ProviderKind::kLocal) embed["dimension"] = c.embed.dimension;
  if (c.embed.kind == ProviderKind::kRemote) embed["endpoint"] = c.embed.endpoint;
  json prep = {{"numeric_imputation", std::string(to_string(c.preprocess.imputation.numeric))},
               {"categorical_imputation", std::string(to_string(c.preprocess.imputation.categorical))},
               {"scaler", std::string(to_string(c.preprocess.scaler))},
               {"selection_k", c.preprocess.selection_k},
               {"mi_bins", c.preprocess.mi_bins},
               {"selection_trees", c.preprocess.selection_trees},
               {"drop_redundant", c.preprocess.drop_redundant}};
  json eval = {{"cv_k", c.cv_ks},
               {"holdout_fraction", c.holdout_fraction},
               {"seed", c.seed},
               {"include_geo", c.include_geo}};
  json data = {{"path", c.data_path.filename().string()},
               {"schema", c.schema_path ? json(c.schema_path->filename().string()) : json("cdc-default")}};
  return {{"data", data}, {"preprocess", prep}, {"embed", embed}, {"forest", forest}, {"eval", eval}};
}

namespace {

const char* producer(std::string_view artifact) {
  if (artifact == kTableFile) return "ingest";
  if (artifact == kPrepFile) return "preprocess";
  if (artifact == kCacheFile) return "embed";
  if (artifact == kModelFile) return "train";
  return "evaluate";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> list_artifacts(const std::filesystem::path& out) {
  std::vector<std::string> files{kReportFile};
  std::error_code ec;
  for (auto it = std::filesystem::recursive_directory_iterator(out, ec);
       !ec && it != std::filesystem::recursive_directory_iterator(); it.increment(ec)) {
    if (!it->is_regular_file()) continue;
    const auto rel = std::filesystem::relative(it->path(), out).generic_string();
    if (rel == kReportFile || rel.ends_with(".tmp")) continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  return files;
}

json dataset_summary(const RawTable& table) {
  json missing = json::object();
  json roles = json::object();
  const auto n = table.row_count();
  for (std::size_t c = 0; c < table.column_count(); ++c) {
    std::size_t gaps = 0;
    for (const auto& row : table.rows) gaps += row[c] ? 0 : 1;
    const auto& spec = table.schema.columns()[c];
    missing[spec.name] = n == 0 ? 0.0 : static_cast<double>(gaps) / static_cast<double>(n);
    roles[spec.name] = std::string(role_name(spec.role));
  }
  return {{"rows", n}, {"labeled", labeled_rows(table).size()}, {"missing_rate", missing}, {"roles", roles}};
}

json preprocessing_summary(const PreprocessState& s) {
  json redundant = json::array();
  for (const auto& [drop, keep] : s.dropped_redundant) redundant.push_back({{"dropped", drop}, {"kept", keep}});
  json scores = json::object();
  for (const auto& [method, table] : s.scores) {
    json t = json::object();
    for (const auto& [name, v] : table) t[name] = v;
    scores[method] = t;
  }
  json encoder = json::object();
  for (const auto& [name, vocab] : s.encoder) encoder[name] = vocab;
  return {{"selected_categorical", s.categorical},
          {"selected_numerical", s.numerical},
          {"dropped_redundant", redundant},
          {"dropped_empty", s.dropped_empty},
          {"scores", scores},
          {"categorical_fill", s.categorical_fill},
          {"numeric_fill", s.numeric_fill},
          {"encoder", encoder}};
}

json ablation_json(const AblationResult& result) {
  json out = json::object();
  for (const auto& cell : result.cells) {
    json rounded = to_json(cell.change_pct);
    for (auto& [_, v] : rounded.items()) {
      if (v.is_number()) v = round2(v.get<double>());
    }
    out[std::string(to_string(cell.method))][cell.group][cell.protocol] = {
        {"with", to_json(cell.with)},
        {"without", to_json(cell.without)},
        {"change_pct", rounded},
        {"change_pct_raw", to_json(cell.change_pct)},
        {"width_with", cell.width_with},
        {"width_without", cell.width_without}};
  }
  return out;
}

std::string ablation_csv(const AblationResult& result) {
  std::string s = "method,group,protocol,metric,with,without,change_pct\n";
  static const char* names[] = {"mse", "mae", "r2", "evs"};
  for (const auto& cell : result.cells) {
    const double w[] = {cell.with.mse, cell.with.mae, cell.with.r2, cell.with.evs};
    const double wo[] = {cell.without.mse, cell.without.mae, cell.without.r2, cell.without.evs};
    const double ch[] = {cell.change_pct.mse, cell.change_pct.mae, cell.change_pct.r2, cell.change_pct.evs};
    for (int i = 0; i < 4; ++i) {
      s += std::string(to_string(cell.method)) + "," + csv_escape(cell.group) + "," + cell.protocol + "," +
           names[i] + "," + io::format_double(w[i]) + "," + io::format_double(wo[i]) + "," +
           io::format_double(ch[i]) + "\n";
    }
  }
  return s;
}

}  // namespace

Pipeline::Pipeline(RunConfig config) : config_(std::move(config)) { config_.validate(); }

Pipeline::~Pipeline() = default;

void Pipeline::require(const char* artifact) const {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path(artifact), ec)) {
    throw Error(Errc::kMissingArtifact, path(artifact).string() + " not found; run `dmv " + producer(artifact) +
                                            "` first");
  }
}

const RawTable& Pipeline::table() {
  if (!table_) {
    require(kTableFile);
    table_ = load_table(path(kTableFile));
  }
  return *table_;
}

HoldoutSplit Pipeline::holdout() {
  const auto labeled = labeled_rows(table());
  auto split = holdout_split(labeled.size(), config_.holdout_fraction, config_.seed);
  for (auto& i : split.train) i = labeled[i];
  for (auto& i : split.test) i = labeled[i];
  return split;
}

std::set<std::string> Pipeline::excluded() const {
  if (config_.include_geo) return {};
  return {kGroupGeolocation};
}

EmbeddingTable Pipeline::provider_embeddings() {
  require(kCacheFile);
  const EmbeddingCache cache(path(kCacheFile));
  const auto columns = default_text_columns(table().schema);
  return embeddings_from_cache(table(), columns, config_.embed, cache);
}

Experiment& Pipeline::experiment() {
  if (experiment_) return *experiment_;
  require(kPrepFile);
  auto state = load_preprocess(path(kPrepFile));
  if (!(state.config == config_.preprocess)) {
    throw Error(Errc::kInvalidConfig, path(kPrepFile).string() +
                                          " was fitted with different preprocessing settings; rerun `dmv preprocess`");
  }
  std::map<Method, EmbeddingTable> embeddings;
  embeddings.emplace(provider_method(config_), provider_embeddings());
  ExperimentConfig ec{config_.preprocess, config_.forest, config_.seed, config_.holdout_fraction};
  experiment_ = std::make_unique<Experiment>(table(), ec, std::move(embeddings));
  experiment_->remember_preprocess(holdout().train, std::move(state));
  return *experiment_;
}

json Pipeline::load_report() const {
  require(kReportFile);
  try {
    return json::parse(io::read_file(path(kReportFile)));
  } catch (const json::exception& e) {
    throw Error(Errc::kIoFailure, path(kReportFile).string() + ": " + e.what());
  }
}

void Pipeline::finish_report(json& report, const std::string& stage, double seconds) {
  stage_seconds_[stage] = seconds;
  json& timing = report["timing"];
  if (!timing.is_object()) timing = json::object();
  for (const auto& [name, s] : stage_seconds_) timing["stage_seconds"][name] = s;
  timing["finished_at"] = utc_now();
  report["artifacts"] = list_artifacts(config_.output_dir);
  io::write_file_atomic(path(kReportFile), report.dump(2) + "\n");
}

void Pipeline::ingest() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto schema = config_.schema_path ? ColumnSchema::load(*config_.schema_path) : ColumnSchema::cdc_default();
  auto table = load_csv(config_.data_path, schema);
  save_table(table, path(kTableFile));
  table_ = std::move(table);
  experiment_.reset();
  stage_seconds_["ingest"] = seconds_since(t0);
}

void Pipeline::preprocess() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto split = holdout();
  auto state = fit_preprocessor(table(), split.train, config_.preprocess);
  save_preprocess(state, path(kPrepFile));
  if (experiment_) experiment_->remember_preprocess(split.train, std::move(state));
  stage_seconds_["preprocess"] = seconds_since(t0);
}

void Pipeline::embed() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& t = table();
  const auto final_path = path(kCacheFile);
  auto tmp = final_path;
  tmp += ".tmp";
  std::filesystem::create_directories(config_.output_dir);
  std::error_code ec;
  std::filesystem::remove(tmp, ec);
  if (std::filesystem::exists(final_path)) std::filesystem::copy_file(final_path, tmp);
  try {
    EmbeddingCache cache(tmp);
    embed_table(t, default_text_columns(t.schema), config_.embed, cache);
  } catch (...) {
    std::filesystem::remove(tmp, ec);
    throw;
  }
  if (!std::filesystem::exists(tmp)) std::ofstream(tmp).close();
  std::filesystem::rename(tmp, final_path);
  experiment_.reset();
  stage_seconds_["embed"] = seconds_since(t0);
}

void Pipeline::train() {
  const auto t0 = std::chrono::steady_clock::now();
  require(kTableFile);
  require(kPrepFile);
  require(kCacheFile);
  auto& exp = experiment();
  const auto model = exp.fit(provider_method(config_), holdout().train, excluded());
  save_model(model, path(kModelFile));
  stage_seconds_["train"] = seconds_since(t0);
}

void Pipeline::evaluate() {
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto* a : {kTableFile, kPrepFile, kCacheFile, kModelFile}) require(a);
  auto& exp = experiment();
  const auto split = holdout();
  const auto ex = excluded();
  const auto provider = provider_method(config_);

  {
    const auto model = load_model(path(kModelFile));
    const auto X_test = exp.matrix(provider, split.test, split.train, ex);
    if (model.feature_names() != X_test.column_names) {
      throw Error(Errc::kInvalidConfig, path(kModelFile).string() +
                                            " does not match the current feature layout; rerun `dmv train`");
    }
    Evaluation ev;
    ev.rows = split.test;
    ev.y = X_test.target;
    ev.y_hat = model.predict(X_test);
    ev.metrics = compute_metrics(ev.y, ev.y_hat);
    ev.width = X_test.cols();
    exp.remember_evaluation(provider, split.train, split.test, ex, std::move(ev));
  }

  json holdout_json = json::object();
  json cv_json = json::object();
  json widths = json::object();
  PlotData plots;
  for (const auto m : {Method::kBaseline, provider}) {
    const auto ev = exp.evaluate(m, split.train, split.test, ex);
    const std::string name(to_string(m));
    holdout_json[name] = to_json(ev.metrics);
    holdout_json[name]["n_test"] = ev.rows.size();
    widths[name] = ev.width;
    plots.holdout[m] = ev.metrics;
    auto records = residuals(ev.y, ev.y_hat);
    for (std::size_t i = 0; i < records.size(); ++i) records[i].index = ev.rows[i];
    plots.residuals[m] = std::move(records);
    for (const auto k : config_.cv_ks) {
      cv_json[name]["k" + std::to_string(k)] = to_json(exp.cross_validate(m, k, ex));
    }
  }
  for (const auto& g : geolocations(table())) {
    if (!g) continue;
    plots.latitude.push_back(g->latitude);
    plots.longitude.push_back(g->longitude);
  }
  emit_plots(plots, config_.output_dir);

  json report = json::object();
  report["config"] = config_echo(config_);
  report["dataset"] = dataset_summary(table());
  report["preprocessing"] = preprocessing_summary(exp.preprocess(split.train));
  report["preprocessing"]["train_rows"] = split.train.size();
  report["preprocessing"]["test_rows"] = split.test.size();
  report["preprocessing"]["matrix_width"] = widths;
  report["holdout"] = holdout_json;
  report["cross_validation"] = cv_json;
  finish_report(report, "evaluate", seconds_since(t0));
}

void Pipeline::ablate() {
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto* a : {kTableFile, kPrepFile, kCacheFile, kModelFile, kReportFile}) require(a);
  auto report = load_report();
  auto& exp = experiment();
  const auto spec = AblationSpec::geolocation({Method::kBaseline, provider_method(config_)}, config_.cv_ks);
  const auto result = run_ablation(exp, spec);

  io::write_file_atomic(config_.output_dir / "plots" / "ablation.csv", ablation_csv(result));
  PlotData plots;
  plots.ablation = &result;
  emit_plots(plots, config_.output_dir);

  report["ablation"] = ablation_json(result);
  finish_report(report, "ablate", seconds_since(t0));
}

void Pipeline::run_all() {
  ingest();
  preprocess();
  embed();
  train();
  evaluate();
  ablate();
}

}  // namespace dmv
