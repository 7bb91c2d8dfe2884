#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dmv/ablation.hpp"
#include "dmv/eval.hpp"
#include "dmv/experiment.hpp"

namespace dmv {

std::string xml_escape(std::string_view text);

struct ScatterSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<double> x;
  std::vector<double> y;
  bool zero_line = false;  // horizontal reference at y = 0
};

// Bars are drawn as <rect class="bar" data-group=.. data-series=..>.
struct BarChartSpec {
  std::string title;
  std::string y_label;
  std::vector<std::string> groups;
  std::vector<std::string> series;
  std::vector<std::vector<double>> values;  // [group][series]
};

std::string scatter_svg(const ScatterSpec& spec);
std::string bar_chart_svg(const BarChartSpec& spec);
std::string bar_chart_csv(const BarChartSpec& spec);

struct PlotData {
  std::vector<double> latitude;
  std::vector<double> longitude;
  std::map<Method, Metrics> holdout;
  std::map<Method, std::vector<ResidualRecord>> residuals;
  const AblationResult* ablation = nullptr;
};

// Writes plots/*.svg with a backing plots/*.csv each and returns the written
// paths relative to `outdir`, sorted. Ablation charts use hold-out cells.
std::vector<std::string> emit_plots(const PlotData& data, const std::filesystem::path& outdir);

}  // namespace dmv
