#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dmv/config.hpp"
#include "dmv/error.hpp"
#include "dmv/experiment.hpp"
#include "dmv/ingest.hpp"
#include "dmv/preprocess.hpp"
#include "json.hpp"

namespace dmv {

inline constexpr const char* kTableFile = "table.dmv";
inline constexpr const char* kPrepFile = "prep.dmvp";
inline constexpr const char* kCacheFile = "embeddings.cache";
inline constexpr const char* kModelFile = "model.dmvf";
inline constexpr const char* kReportFile = "report.json";

// 1 for bad input, configuration or a missing artifact; 2 otherwise.
int exit_code_for(Errc code);

// Method trained with the configured embedding provider.
Method provider_method(const RunConfig& config);

// Runs pipeline stages against `config.output_dir`. Each stage reads the
// artifacts of earlier stages from disk and throws MissingArtifact naming the
// file when one is absent. Stages run on one Pipeline share fitted results.
class Pipeline {
 public:
  explicit Pipeline(RunConfig config);
  ~Pipeline();

  void ingest();
  void preprocess();
  void embed();
  void train();
  void evaluate();
  void ablate();
  void run_all();

  const RunConfig& config() const noexcept { return config_; }
  std::filesystem::path path(const char* artifact) const { return config_.output_dir / artifact; }

 private:
  void require(const char* artifact) const;
  const RawTable& table();
  HoldoutSplit holdout();
  std::set<std::string> excluded() const;
  EmbeddingTable provider_embeddings();
  Experiment& experiment();
  nlohmann::json load_report() const;
  void finish_report(nlohmann::json& report, const std::string& stage, double seconds);

  RunConfig config_;
  std::optional<RawTable> table_;
  std::unique_ptr<Experiment> experiment_;
  std::map<std::string, double> stage_seconds_;
};

// JSON views used by the report.
nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const CvResult& cv);
nlohmann::json config_echo(const RunConfig& config);

}  // namespace dmv
