#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccad/active_loop.hpp"

namespace ccad {

struct MeanStd {
  double mean = 0;
  double std = 0;  // population standard deviation
  std::size_t n = 0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  m.n = v.size();
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.std += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(m.std / static_cast<double>(v.size()));
  return m;
}

/// Per-cycle aggregate of one strategy over seeds.
struct CycleSummary {
  int cycle_index = 0;
  MeanStd labeled_count;
  MeanStd map_50;
  MeanStd cumulative_tp;  // true-positive instances selected up to and including this cycle
  std::optional<MeanStd> background_to_positive;
};

struct StrategySummary {
  std::string label;
  std::vector<std::uint64_t> seeds;
  std::vector<CycleSummary> cycles;
  std::map<std::uint64_t, int> gaps;  // seed -> first missing cycle, for runs shorter than the longest
};

/// Records of one strategy, keyed by seed.
using SeedRecords = std::map<std::uint64_t, std::vector<CycleRecord>>;

/// Aggregates over the seeds that reached each cycle; shorter runs are listed in `gaps`.
inline StrategySummary summarize(const std::string& label, const SeedRecords& runs) {
  StrategySummary s;
  s.label = label;
  std::size_t cycles = 0;
  for (const auto& [seed, recs] : runs) {
    s.seeds.push_back(seed);
    cycles = std::max(cycles, recs.size());
  }
  for (const auto& [seed, recs] : runs)
    if (recs.size() < cycles) s.gaps[seed] = static_cast<int>(recs.size());
  std::map<std::uint64_t, long> cum;
  for (std::size_t p = 0; p < cycles; ++p) {
    std::vector<double> labeled, map, tp, ratio;
    for (const auto& [seed, recs] : runs) {
      if (p >= recs.size()) continue;
      const auto& r = recs[p];
      cum[seed] += r.true_positive_instances_selected;
      labeled.push_back(r.labeled_count);
      map.push_back(r.map_50);
      tp.push_back(static_cast<double>(cum[seed]));
      if (r.committee) ratio.push_back(r.committee->background_to_positive);
    }
    CycleSummary c;
    c.cycle_index = static_cast<int>(p);
    c.labeled_count = mean_std(labeled);
    c.map_50 = mean_std(map);
    c.cumulative_tp = mean_std(tp);
    if (!ratio.empty()) c.background_to_positive = mean_std(ratio);
    s.cycles.push_back(c);
  }
  return s;
}

inline json to_json_value(const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}, {"n", m.n}}; }

inline json summary_to_json(const std::vector<StrategySummary>& all) {
  json out = json::object();
  for (const auto& s : all) {
    json cycles = json::array();
    for (const auto& c : s.cycles) {
      json j{{"cycle_index", c.cycle_index},
             {"labeled_count", to_json_value(c.labeled_count)},
             {"map_50", to_json_value(c.map_50)},
             {"cumulative_tp", to_json_value(c.cumulative_tp)}};
      if (c.background_to_positive) j["background_to_positive"] = to_json_value(*c.background_to_positive);
      cycles.push_back(j);
    }
    json gaps = json::array();
    for (const auto& [seed, first_missing] : s.gaps) gaps.push_back({{"seed", seed}, {"first_missing_cycle", first_missing}});
    out[s.label] = {{"seeds", s.seeds}, {"cycles", cycles}, {"gaps", gaps}};
  }
  return out;
}

/// Loads <run_dir>/<label>/seed_<s>/cycle_records.jsonl for every strategy found.
inline std::map<std::string, SeedRecords> load_run_tree(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw ConfigError("no run directory at " + run_dir.string());
  std::map<std::string, SeedRecords> out;
  static const std::regex seed_re("seed_([0-9]+)");
  for (const auto& strat : fs::directory_iterator(run_dir)) {
    if (!strat.is_directory()) continue;
    for (const auto& seed_dir : fs::directory_iterator(strat.path())) {
      std::smatch m;
      const std::string name = seed_dir.path().filename().string();
      if (!seed_dir.is_directory() || !std::regex_match(name, m, seed_re)) continue;
      const fs::path rec = seed_dir.path() / "cycle_records.jsonl";
      if (!fs::exists(rec)) continue;
      auto recs = read_cycle_records(rec);
      if (!recs.empty()) out[strat.path().filename().string()][std::stoull(m[1].str())] = std::move(recs);
    }
  }
  if (out.empty()) throw ConfigError("no cycle records under " + run_dir.string());
  return out;
}

// ---- SVG ------------------------------------------------------------------

struct Series {
  std::string label;
  std::vector<double> x, mean, std;
};

namespace detail {

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  return colors[i % 7];
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace detail

/// Line chart with mean +/- std bands.
inline std::string render_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                              const std::string& y_label) {
  const double w = 640, h = 420, left = 70, right = 170, top = 40, bottom = 55;
  double x0 = 1e300, x1 = -1e300, y0 = 0, y1 = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.mean[i] - s.std[i]);
      y1 = std::max(y1, s.mean[i] + s.std[i]);
    }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y1 = y0 + 1;
  y1 += 0.05 * (y1 - y0);
  const double pw = w - left - right, ph = h - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  for (int t = 0; t <= 5; ++t) {
    const double yv = y0 + (y1 - y0) * t / 5.0, xv = x0 + (x1 - x0) * t / 5.0;
    os << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << py(yv) << "\" y2=\"" << py(yv)
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << detail::fmt(yv)
       << "</text>\n";
    os << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << detail::fmt(xv)
       << "</text>\n";
  }
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  os << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << y_label
     << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* c = detail::palette(k);
    if (s.x.empty()) continue;
    std::ostringstream band, line;
    for (std::size_t i = 0; i < s.x.size(); ++i) band << px(s.x[i]) << ',' << py(s.mean[i] + s.std[i]) << ' ';
    for (std::size_t i = s.x.size(); i-- > 0;) band << px(s.x[i]) << ',' << py(s.mean[i] - s.std[i]) << ' ';
    for (std::size_t i = 0; i < s.x.size(); ++i) line << px(s.x[i]) << ',' << py(s.mean[i]) << ' ';
    os << "<polygon points=\"" << band.str() << "\" fill=\"" << c << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    os << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.mean[i]) << "\" r=\"3\" fill=\"" << c << "\"/>\n";
    const double ly = top + 10 + 20.0 * static_cast<double>(k);
    os << "<line x1=\"" << left + pw + 12 << "\" x2=\"" << left + pw + 32 << "\" y1=\"" << ly << "\" y2=\"" << ly
       << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">" << s.label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline std::string render_ablation_table(const std::vector<StrategySummary>& all) {
  std::ostringstream os;
  os << "| strategy | seeds | final labeled | final mAP@0.5 (mean +/- std) | cumulative TP instances | bg/pos discrepancy (cycle 0) |\n";
  os << "|---|---|---|---|---|---|\n";
  char buf[256];
  for (const auto& s : all) {
    if (s.cycles.empty()) continue;
    const auto& last = s.cycles.back();
    std::string ratio = "-";
    if (s.cycles.front().background_to_positive) {
      std::snprintf(buf, sizeof buf, "%.4f", s.cycles.front().background_to_positive->mean);
      ratio = buf;
    }
    std::snprintf(buf, sizeof buf, "| %s | %zu | %.0f | %.2f +/- %.2f | %.1f | %s |\n", s.label.c_str(), s.seeds.size(),
                  last.labeled_count.mean, 100 * last.map_50.mean, 100 * last.map_50.std, last.cumulative_tp.mean,
                  ratio.c_str());
    os << buf;
  }
  for (const auto& s : all)
    for (const auto& [seed, first_missing] : s.gaps)
      os << "\nGap: " << s.label << " seed " << seed << " has no records from cycle " << first_missing << " on.";
  if (std::any_of(all.begin(), all.end(), [](const auto& s) { return !s.gaps.empty(); })) os << '\n';
  return os.str();
}

/// Writes summary.json, learning_curve.svg, tp_counts.svg and ablation.md into out_dir.
inline std::vector<StrategySummary> write_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
  std::map<std::string, SeedRecords> tree;
  for (const auto& d : run_dirs)
    for (auto& [label, runs] : load_run_tree(d))
      for (auto& [seed, recs] : runs) tree[label][seed] = std::move(recs);
  std::vector<StrategySummary> all;
  for (const auto& [label, runs] : tree) all.push_back(summarize(label, runs));
  fs::create_directories(out_dir);

  std::vector<Series> map_series, tp_series;
  for (const auto& s : all) {
    Series m{s.label, {}, {}, {}}, t{s.label, {}, {}, {}};
    for (const auto& c : s.cycles) {
      m.x.push_back(c.labeled_count.mean);
      m.mean.push_back(100 * c.map_50.mean);
      m.std.push_back(100 * c.map_50.std);
      t.x.push_back(c.cycle_index);
      t.mean.push_back(c.cumulative_tp.mean);
      t.std.push_back(c.cumulative_tp.std);
    }
    map_series.push_back(m);
    tp_series.push_back(t);
  }
  write_file_atomic(out_dir / "summary.json", summary_to_json(all).dump(2) + "\n");
  write_file_atomic(out_dir / "learning_curve.svg",
                    render_svg(map_series, "mAP@0.5 vs labeled images", "labeled images", "mAP@0.5 (%)"));
  write_file_atomic(out_dir / "tp_counts.svg", render_svg(tp_series, "Cumulative true-positive instances selected",
                                                          "cycle", "positive anchors in selected images"));
  write_file_atomic(out_dir / "ablation.md", render_ablation_table(all));
  return all;
}

}  // namespace ccad
