#include "dmv/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dmv/error.hpp"
#include "dmv/ingest.hpp"
#include "dmv/io.hpp"

namespace dmv {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 420;
constexpr double kLeft = 70;
constexpr double kRight = 20;
constexpr double kTop = 40;
constexpr double kBottom = 60;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Range {
  double lo;
  double hi;
};

Range finite_range(const std::vector<double>& v) {
  double lo = INFINITY;
  double hi = -INFINITY;
  for (double x : v) {
    if (!std::isfinite(x)) continue;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!(lo <= hi)) return {0.0, 1.0};
  if (lo == hi) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::string header(const std::string& title) {
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
       "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + xml_escape(title) +
       "</text>\n";
  return s;
}

std::string axes(const std::string& x_label, const std::string& y_label, Range yr) {
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  std::string s;
  s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y0) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y1) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    const double py = y0 - (y0 - y1) * i / 4.0;
    s += "<text x=\"" + num(x0 - 6) + "\" y=\"" + num(py + 4) + "\" text-anchor=\"end\">" + tick(v) + "</text>\n";
  }
  s += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"" + num(kHeight - 15) + "\" text-anchor=\"middle\">" +
       xml_escape(x_label) + "</text>\n";
  s += "<text x=\"16\" y=\"" + num((y0 + y1) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       num((y0 + y1) / 2) + ")\">" + xml_escape(y_label) + "</text>\n";
  return s;
}

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948"};

void write(const std::filesystem::path& outdir, const std::string& rel, const std::string& contents,
           std::vector<std::string>& written) {
  io::write_file_atomic(outdir / rel, contents);
  written.push_back(rel);
}

std::string metric_value_name(std::size_t i) {
  static const char* names[] = {"mse", "mae", "r2", "evs"};
  return names[i];
}

double metric_at(const Metrics& m, std::size_t i) {
  switch (i) {
    case 0:
      return m.mse;
    case 1:
      return m.mae;
    case 2:
      return m.r2;
    default:
      return m.evs;
  }
}

}  // namespace

std::string xml_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      case '\'':
        out += "&apos;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string scatter_svg(const ScatterSpec& spec) {
  if (spec.x.size() != spec.y.size()) throw Error(Errc::kLengthMismatch, "scatter x and y differ in length");
  const Range xr = finite_range(spec.x);
  Range yr = finite_range(spec.y);
  if (spec.zero_line) {
    yr.lo = std::min(yr.lo, 0.0);
    yr.hi = std::max(yr.hi, 0.0);
  }
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  auto px = [&](double v) { return x0 + (v - xr.lo) / (xr.hi - xr.lo) * (x1 - x0); };
  auto py = [&](double v) { return y0 - (v - yr.lo) / (yr.hi - yr.lo) * (y0 - y1); };

  std::string s = header(spec.title);
  s += axes(spec.x_label, spec.y_label, yr);
  for (int i = 0; i <= 4; ++i) {
    const double v = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    s += "<text x=\"" + num(px(v)) + "\" y=\"" + num(y0 + 16) + "\" text-anchor=\"middle\">" + tick(v) +
         "</text>\n";
  }
  if (spec.zero_line) {
    s += "<line class=\"zero\" x1=\"" + num(x0) + "\" y1=\"" + num(py(0)) + "\" x2=\"" + num(x1) + "\" y2=\"" +
         num(py(0)) + "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  }
  s += "<g fill=\"#4e79a7\" fill-opacity=\"0.6\">\n";
  for (std::size_t i = 0; i < spec.x.size(); ++i) {
    if (!std::isfinite(spec.x[i]) || !std::isfinite(spec.y[i])) continue;
    s += "<circle class=\"point\" cx=\"" + num(px(spec.x[i])) + "\" cy=\"" + num(py(spec.y[i])) + "\" r=\"2.5\"/>\n";
  }
  s += "</g>\n</svg>\n";
  return s;
}

std::string bar_chart_svg(const BarChartSpec& spec) {
  if (spec.values.size() != spec.groups.size()) throw Error(Errc::kLengthMismatch, "bar chart group count");
  std::vector<double> all{0.0};
  for (const auto& g : spec.values) {
    if (g.size() != spec.series.size()) throw Error(Errc::kLengthMismatch, "bar chart series count");
    all.insert(all.end(), g.begin(), g.end());
  }
  Range yr = finite_range(all);
  yr.lo = std::min(yr.lo, 0.0);
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  auto py = [&](double v) { return y0 - (v - yr.lo) / (yr.hi - yr.lo) * (y0 - y1); };

  std::string s = header(spec.title);
  s += axes("", spec.y_label, yr);
  const double slot = (x1 - x0) / std::max<std::size_t>(spec.groups.size(), 1);
  const double bar = slot * 0.7 / std::max<std::size_t>(spec.series.size(), 1);
  for (std::size_t g = 0; g < spec.groups.size(); ++g) {
    const double gx = x0 + slot * g + slot * 0.15;
    s += "<g class=\"group\" data-group=\"" + xml_escape(spec.groups[g]) + "\">\n";
    for (std::size_t k = 0; k < spec.series.size(); ++k) {
      const double v = spec.values[g][k];
      const double top = std::isfinite(v) ? py(std::max(v, 0.0)) : py(0);
      const double bottom = std::isfinite(v) ? py(std::min(v, 0.0)) : py(0);
      s += "<rect class=\"bar\" data-group=\"" + xml_escape(spec.groups[g]) + "\" data-series=\"" +
           xml_escape(spec.series[k]) + "\" x=\"" + num(gx + bar * k) + "\" y=\"" + num(top) + "\" width=\"" +
           num(bar * 0.95) + "\" height=\"" + num(bottom - top) + "\" fill=\"" + kPalette[k % 6] + "\"><title>" +
           xml_escape(spec.groups[g] + " / " + spec.series[k] + ": " + io::format_double(v)) + "</title></rect>\n";
    }
    s += "<text x=\"" + num(x0 + slot * (g + 0.5)) + "\" y=\"" + num(y0 + 16) + "\" text-anchor=\"middle\">" +
         xml_escape(spec.groups[g]) + "</text>\n</g>\n";
  }
  for (std::size_t k = 0; k < spec.series.size(); ++k) {
    const double lx = x1 - 110;
    const double ly = kTop + 4 + 16.0 * k;
    s += "<rect x=\"" + num(lx) + "\" y=\"" + num(ly) + "\" width=\"10\" height=\"10\" fill=\"" + kPalette[k % 6] +
         "\"/>\n<text x=\"" + num(lx + 14) + "\" y=\"" + num(ly + 9) + "\">" + xml_escape(spec.series[k]) +
         "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string bar_chart_csv(const BarChartSpec& spec) {
  std::string s = "group";
  for (const auto& name : spec.series) s += "," + csv_escape(name);
  s += "\n";
  for (std::size_t g = 0; g < spec.groups.size(); ++g) {
    s += csv_escape(spec.groups[g]);
    for (double v : spec.values[g]) s += "," + io::format_double(v);
    s += "\n";
  }
  return s;
}

std::vector<std::string> emit_plots(const PlotData& data, const std::filesystem::path& outdir) {
  std::vector<std::string> written;

  if (!data.latitude.empty()) {
    ScatterSpec geo{"Distribution of geolocation", "longitude", "latitude", data.longitude, data.latitude, false};
    write(outdir, "plots/geolocation.svg", scatter_svg(geo), written);
    std::string csv = "latitude,longitude\n";
    for (std::size_t i = 0; i < data.latitude.size(); ++i) {
      csv += io::format_double(data.latitude[i]) + "," + io::format_double(data.longitude[i]) + "\n";
    }
    write(outdir, "plots/geolocation.csv", csv, written);
  }

  if (!data.holdout.empty()) {
    BarChartSpec perf{"Model performance comparison (hold-out)", "value", {}, {"mse", "mae", "r2", "evs"}, {}};
    for (const auto& [m, metrics] : data.holdout) {
      perf.groups.emplace_back(to_string(m));
      perf.values.push_back({metrics.mse, metrics.mae, metrics.r2, metrics.evs});
    }
    write(outdir, "plots/performance.svg", bar_chart_svg(perf), written);
    write(outdir, "plots/performance.csv", bar_chart_csv(perf), written);
  }

  for (const auto& [m, records] : data.residuals) {
    ScatterSpec spec{"Residuals: " + std::string(to_string(m)), "predicted", "residual", {}, {}, true};
    for (const auto& r : records) {
      spec.x.push_back(r.y_hat);
      spec.y.push_back(r.residual);
    }
    const std::string stem = "plots/residuals_" + std::string(to_string(m));
    write(outdir, stem + ".svg", scatter_svg(spec), written);
    write(outdir, stem + ".csv", residuals_csv(records), written);
  }

  if (data.ablation != nullptr) {
    std::map<std::string, std::vector<const AblationCell*>> by_group;
    for (const auto& cell : data.ablation->cells) {
      if (cell.protocol == "holdout") by_group[cell.group].push_back(&cell);
    }
    for (const auto& [group, cells] : by_group) {
      for (std::size_t i = 0; i < 4; ++i) {
        const auto metric = metric_value_name(i);
        BarChartSpec spec{metric + " with and without " + group, metric, {}, {"with", "without"}, {}};
        for (const auto* cell : cells) {
          spec.groups.emplace_back(to_string(cell->method));
          spec.values.push_back({metric_at(cell->with, i), metric_at(cell->without, i)});
        }
        const std::string stem = "plots/ablation_" + group + "_" + metric;
        write(outdir, stem + ".svg", bar_chart_svg(spec), written);
        write(outdir, stem + ".csv", bar_chart_csv(spec), written);
      }
    }
  }

  std::sort(written.begin(), written.end());
  return written;
}

}  // namespace dmv
