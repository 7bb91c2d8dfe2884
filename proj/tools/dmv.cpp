#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "dmv/config.hpp"
#include "dmv/error.hpp"
#include "dmv/ingest.hpp"
#include "dmv/io.hpp"
#include "dmv/pipeline.hpp"
#include "dmv/synth.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> provider;
  std::optional<std::size_t> jobs;
  bool no_geo = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Run configuration file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Seed for every stochastic component (overrides [eval] seed)");
  cmd->add_option("--out", o.out, "Output directory for artifacts (overrides [output] dir)");
  cmd->add_option("--provider", o.provider, "Embedding provider: local or remote")
      ->check(CLI::IsMember({"local", "remote"}));
  cmd->add_option("--jobs", o.jobs, "Worker threads for forest training; 0 uses every core");
  cmd->add_flag("--no-geo", o.no_geo, "Leave latitude and longitude out of trained models");
}

dmv::RunConfig resolve(const Overrides& o) {
  auto config = dmv::load_run_config(o.config);
  if (o.seed) config.set_seed(*o.seed);
  if (o.out) config.output_dir = *o.out;
  if (o.provider) config.embed.kind = dmv::parse_provider_kind(*o.provider);
  if (o.jobs) config.forest.n_jobs = *o.jobs;
  if (o.no_geo) config.include_geo = false;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dmv: tabular risk-score pipeline with text embeddings, random forest and geolocation ablation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Overrides o;
  struct Stage {
    const char* name;
    const char* help;
    void (dmv::Pipeline::*fn)();
  };
  const Stage stages[] = {
      {"ingest", "Read the CSV under the schema and write table.dmv", &dmv::Pipeline::ingest},
      {"preprocess", "Fit imputation, selection, encoding and scaling on the hold-out training rows; write prep.dmvp",
       &dmv::Pipeline::preprocess},
      {"embed", "Embed each row's text and update embeddings.cache", &dmv::Pipeline::embed},
      {"train", "Fit the forest for the configured provider and write model.dmvf", &dmv::Pipeline::train},
      {"evaluate", "Hold-out and cross-validated metrics, residuals and plots; write report.json",
       &dmv::Pipeline::evaluate},
      {"ablate", "With/without geolocation study; add it to report.json and plots", &dmv::Pipeline::ablate},
      {"run", "All stages in order", &dmv::Pipeline::run_all},
  };
  const Stage* chosen = nullptr;
  for (const auto& s : stages) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, o);
    cmd->callback([&chosen, &s] { chosen = &s; });
  }

  std::string synth_out;
  std::size_t synth_rows = 1000;
  std::uint64_t synth_seed = 42;
  bool synth_chosen = false;
  auto* synth = app.add_subcommand("synth", "Write the synthetic CDC-shaped CSV with a planted target");
  synth->add_option("--out", synth_out, "Destination CSV")->required();
  synth->add_option("--rows", synth_rows, "Row count")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->callback([&] { synth_chosen = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (synth_chosen) {
      const auto table = dmv::synthesize_cdc(synth_rows, synth_seed);
      std::ostringstream csv;
      dmv::write_csv(table, csv);
      dmv::io::write_file_atomic(synth_out, csv.str());
      std::cerr << "wrote " << synth_rows << " rows to " << synth_out << "\n";
      return 0;
    }
    dmv::Pipeline pipeline(resolve(o));
    (pipeline.*(chosen->fn))();
    std::cerr << chosen->name << ": done (" << pipeline.config().output_dir.string() << ")\n";
    return 0;
  } catch (const dmv::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return dmv::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
