// Copyright 2026 The fpreg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fpreg/error.hpp"
#include "fpreg/pipeline.hpp"

namespace fpreg {
namespace {

double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail(ErrorKind::kFormat, "train log: bad number '" + s + "'");
  return v;
}

struct Run {
  std::string name;
  double lambda = std::nan("");
  std::vector<EvalRecord> log;
};

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Gap-versus-iteration line plot, one polyline per run.
std::string render_gap_svg(const std::vector<Run>& runs) {
  constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 180, kTop = 30, kBottom = 50;
  double x_max = 1.0, y_min = 0.0, y_max = 0.0;
  bool first = true;
  for (const auto& r : runs)
    for (const auto& e : r.log) {
      const double gap = e.test_loss - e.train_loss;
      x_max = std::max(x_max, static_cast<double>(e.iteration));
      if (first) {
        y_min = y_max = gap;
        first = false;
      }
      y_min = std::min(y_min, gap);
      y_max = std::max(y_max, gap);
    }
  if (y_max - y_min < 1e-12) {
    y_min -= 0.5;
    y_max += 0.5;
  }
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + pw * x / x_max; };
  auto py = [&](double y) { return kTop + ph * (1.0 - (y - y_min) / (y_max - y_min)); };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(kW, 0) + "\" height=\"" +
       fixed(kH, 0) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fixed(kLeft) + "\" y=\"20\" font-size=\"14\">test loss - train loss</text>\n";
  s += "<line x1=\"" + fixed(kLeft) + "\" y1=\"" + fixed(kTop + ph) + "\" x2=\"" + fixed(kLeft + pw) +
       "\" y2=\"" + fixed(kTop + ph) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fixed(kLeft) + "\" y1=\"" + fixed(kTop) + "\" x2=\"" + fixed(kLeft) + "\" y2=\"" +
       fixed(kTop + ph) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x_max * t / 4.0, yv = y_min + (y_max - y_min) * t / 4.0;
    s += "<text x=\"" + fixed(px(xv)) + "\" y=\"" + fixed(kTop + ph + 18) +
         "\" font-size=\"11\" text-anchor=\"middle\">" + fixed(xv, 0) + "</text>\n";
    s += "<text x=\"" + fixed(kLeft - 6) + "\" y=\"" + fixed(py(yv) + 4) +
         "\" font-size=\"11\" text-anchor=\"end\">" + fixed(yv, 3) + "</text>\n";
  }
  s += "<text x=\"" + fixed(kLeft + pw / 2) + "\" y=\"" + fixed(kH - 10) +
       "\" font-size=\"12\" text-anchor=\"middle\">iteration</text>\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const char* color = kColors[i % 8];
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t e = 0; e < runs[i].log.size(); ++e) {
      const auto& rec = runs[i].log[e];
      if (e) s += ' ';
      s += fixed(px(static_cast<double>(rec.iteration))) + "," + fixed(py(rec.test_loss - rec.train_loss));
    }
    s += "\"/>\n";
    const double ly = kTop + 16.0 * static_cast<double>(i);
    s += "<line x1=\"" + fixed(kLeft + pw + 10) + "\" y1=\"" + fixed(ly) + "\" x2=\"" +
         fixed(kLeft + pw + 30) + "\" y2=\"" + fixed(ly) + "\" stroke=\"" + color + "\"/>\n";
    std::string label = runs[i].name;
    if (!std::isnan(runs[i].lambda)) label += " (lambda=" + format_real17(runs[i].lambda) + ")";
    s += "<text x=\"" + fixed(kLeft + pw + 34) + "\" y=\"" + fixed(ly + 4) + "\" font-size=\"11\">" +
         label + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace

std::vector<EvalRecord> parse_train_log_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("iteration,train_loss,test_loss,test_acc", 0) != 0)
    fail(ErrorKind::kFormat, "train log: missing header");
  std::vector<EvalRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string col;
    while (std::getline(ls, col, ',')) cols.push_back(col);
    if (cols.size() < 4) fail(ErrorKind::kFormat, "train log: short row '" + line + "'");
    EvalRecord r;
    r.iteration = static_cast<std::size_t>(parse_double(cols[0]));
    r.train_loss = parse_double(cols[1]);
    r.test_loss = parse_double(cols[2]);
    r.test_accuracy = parse_double(cols[3]);
    out.push_back(r);
  }
  return out;
}

ReportSummary build_report(const std::filesystem::path& logs_dir, const std::filesystem::path& out_dir) {
  if (!std::filesystem::is_directory(logs_dir))
    fail(ErrorKind::kIo, "'" + logs_dir.string() + "' is not a directory");
  std::vector<Run> runs;
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(logs_dir))
    if (e.is_directory() && std::filesystem::exists(e.path() / "train_log.csv")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    Run r;
    r.name = d.filename().string();
    const auto bytes = read_file_bytes(d / "train_log.csv");
    r.log = parse_train_log_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    if (std::filesystem::exists(d / "run_config.json")) {
      const auto cb = read_file_bytes(d / "run_config.json");
      try {
        const auto j = nlohmann::json::parse(cb.begin(), cb.end());
        if (j.contains("lambda")) r.lambda = j["lambda"].get<double>();
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::kFormat, (d / "run_config.json").string() + ": " + e.what());
      }
    }
    runs.push_back(std::move(r));
  }
  if (runs.empty()) fail(ErrorKind::kEmpty, "no run directories with train_log.csv under '" + logs_dir.string() + "'");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create '" + out_dir.string() + "': " + ec.message());

  ReportSummary s;
  for (const auto& r : runs) {
    s.runs.push_back(r.name);
    std::string csv = "iteration,train_loss,test_loss,gap\n";
    for (const auto& e : r.log)
      csv += std::to_string(e.iteration) + "," + format_real17(e.train_loss) + "," +
             format_real17(e.test_loss) + "," + format_real17(e.test_loss - e.train_loss) + "\n";
    s.gap_csv.push_back("gap_" + r.name + ".csv");
    write_text_file(out_dir / s.gap_csv.back(), csv);
  }

  // Iterations evaluated by every run.
  std::map<std::size_t, std::size_t> seen;
  for (const auto& r : runs) {
    std::set<std::size_t> its;
    for (const auto& e : r.log) its.insert(e.iteration);
    for (auto it : its) ++seen[it];
  }
  for (const auto& [it, n] : seen)
    if (n == runs.size()) s.aligned_iterations.push_back(it);

  // Baseline: the first run (by name) trained without the regulariser.
  const Run* baseline = nullptr;
  for (const auto& r : runs)
    if (!std::isnan(r.lambda) && r.lambda == 0.0) {
      baseline = &r;
      break;
    }
  auto at = [](const Run& r, std::size_t it) -> const EvalRecord* {
    for (const auto& e : r.log)
      if (e.iteration == it) return &e;
    return nullptr;
  };

  std::string table = "iteration,run,lambda,train_loss,test_loss,gap,gap_minus_baseline\n";
  for (auto it : s.aligned_iterations)
    for (const auto& r : runs) {
      const EvalRecord* e = at(r, it);
      const double gap = e->test_loss - e->train_loss;
      table += std::to_string(it) + "," + r.name + "," + (std::isnan(r.lambda) ? "" : format_real17(r.lambda)) +
               "," + format_real17(e->train_loss) + "," + format_real17(e->test_loss) + "," + format_real17(gap) + ",";
      if (baseline) {
        const EvalRecord* b = at(*baseline, it);
        table += format_real17(gap - (b->test_loss - b->train_loss));
      }
      table += "\n";
    }
  s.comparison_csv = "comparison.csv";
  write_text_file(out_dir / s.comparison_csv, table);
  s.plot_svg = "gap_curves.svg";
  write_text_file(out_dir / s.plot_svg, render_gap_svg(runs));
  return s;
}

}  // namespace fpreg
