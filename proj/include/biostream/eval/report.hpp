#pragma once

// Report files: JSON, CSV of per-window HR pairs, and plain SVG charts.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "biostream/error.hpp"
#include "biostream/eval/scenarios.hpp"

namespace biostream::eval {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw io_error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw io_error("write failed: " + path.string());
}

inline std::string format_number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string window_csv(const PpgScenarioReport& r) {
  std::ostringstream os;
  os << "window,start_s,hr_ppg,hr_ecg,hr_truth\n";
  const auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (const auto& win : r.windows)
    os << win.index << ',' << format_number(r.window_s * static_cast<double>(win.index)) << ',' << opt(win.hr_ppg)
       << ',' << opt(win.hr_ecg) << ',' << opt(win.hr_truth) << '\n';
  return os.str();
}

namespace svg {

struct Canvas {
  double width = 640, height = 420;
  double left = 70, right = 20, top = 40, bottom = 60;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  std::ostringstream body;

  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }

  void text(double x, double y, const std::string& s, const char* anchor = "middle", int size = 12) {
    body << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
         << "\" font-family=\"sans-serif\">" << s << "</text>\n";
  }
  void line(double xa, double ya, double xb, double yb, const char* stroke, const char* dash = nullptr) {
    body << "<line x1=\"" << xa << "\" y1=\"" << ya << "\" x2=\"" << xb << "\" y2=\"" << yb << "\" stroke=\"" << stroke
         << '"';
    if (dash) body << " stroke-dasharray=\"" << dash << '"';
    body << "/>\n";
  }
  void axes(const std::string& title, const std::string& xlabel, const std::string& ylabel) {
    line(left, height - bottom, width - right, height - bottom, "black");
    line(left, top, left, height - bottom, "black");
    for (int i = 0; i <= 4; ++i) {
      const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
      char b[32];
      std::snprintf(b, sizeof b, "%.3g", xv);
      text(px(xv), height - bottom + 16, b);
      std::snprintf(b, sizeof b, "%.3g", yv);
      text(left - 6, py(yv) + 4, b, "end");
    }
    text(width / 2, 24, title, "middle", 14);
    text(width / 2, height - 18, xlabel);
    body << "<text x=\"18\" y=\"" << height / 2 << "\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         << "transform=\"rotate(-90 18 " << height / 2 << ")\">" << ylabel << "</text>\n";
  }
  std::string str() const {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << body.str() << "</svg>\n";
    return os.str();
  }
};

inline std::pair<double, double> padded(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.08 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace svg

inline std::string bland_altman_svg(const BlandAltmanReport& ba, const std::string& title) {
  svg::Canvas c;
  double xmin = 1e300, xmax = -1e300, ymin = std::min(ba.loa_low, 0.0), ymax = std::max(ba.loa_high, 0.0);
  for (const auto& p : ba.points) {
    xmin = std::min(xmin, p.mean);
    xmax = std::max(xmax, p.mean);
    ymin = std::min(ymin, p.difference);
    ymax = std::max(ymax, p.difference);
  }
  if (ba.points.empty()) xmin = 0, xmax = 1;
  std::tie(c.x0, c.x1) = svg::padded(xmin, xmax);
  std::tie(c.y0, c.y1) = svg::padded(ymin, ymax);
  c.axes(title, "mean of PPG and ECG HR (BPM)", "PPG - ECG (BPM)");
  c.line(c.px(c.x0), c.py(ba.bias), c.px(c.x1), c.py(ba.bias), "steelblue");
  c.line(c.px(c.x0), c.py(ba.loa_high), c.px(c.x1), c.py(ba.loa_high), "firebrick", "6,4");
  c.line(c.px(c.x0), c.py(ba.loa_low), c.px(c.x1), c.py(ba.loa_low), "firebrick", "6,4");
  char b[64];
  std::snprintf(b, sizeof b, "bias %.2f", ba.bias);
  c.text(c.px(c.x1) - 4, c.py(ba.bias) - 4, b, "end", 11);
  std::snprintf(b, sizeof b, "+1.96 SD %.2f", ba.loa_high);
  c.text(c.px(c.x1) - 4, c.py(ba.loa_high) - 4, b, "end", 11);
  std::snprintf(b, sizeof b, "-1.96 SD %.2f", ba.loa_low);
  c.text(c.px(c.x1) - 4, c.py(ba.loa_low) - 4, b, "end", 11);
  for (const auto& p : ba.points)
    c.body << "<circle cx=\"" << c.px(p.mean) << "\" cy=\"" << c.py(p.difference) << "\" r=\"4\" fill=\"black\"/>\n";
  return c.str();
}

struct Bar {
  std::string label;
  double value = 0.0;
};

inline std::string bar_chart_svg(const std::vector<Bar>& bars, const std::string& title, const std::string& ylabel) {
  svg::Canvas c;
  double ymax = 0.0;
  for (const auto& b : bars) ymax = std::max(ymax, b.value);
  c.x0 = 0;
  c.x1 = std::max<double>(1.0, static_cast<double>(bars.size()));
  c.y0 = 0;
  c.y1 = ymax > 0 ? ymax * 1.2 : 1.0;
  c.axes(title, "", ylabel);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double xa = c.px(static_cast<double>(i) + 0.2), xb = c.px(static_cast<double>(i) + 0.8);
    const double ya = c.py(bars[i].value), yb = c.py(0);
    c.body << "<rect x=\"" << xa << "\" y=\"" << ya << "\" width=\"" << xb - xa << "\" height=\"" << yb - ya
           << "\" fill=\"" << (i % 2 ? "darkorange" : "steelblue") << "\"/>\n";
    c.text((xa + xb) / 2, c.height - c.bottom + 32, bars[i].label, "middle", 11);
    char b[32];
    std::snprintf(b, sizeof b, "%.3f", bars[i].value);
    c.text((xa + xb) / 2, ya - 4, b, "middle", 11);
  }
  return c.str();
}

inline std::vector<std::filesystem::path> write_ppg_report(const std::vector<PpgScenarioReport>& reports,
                                                           const std::filesystem::path& dir, bool plot) {
  std::vector<std::filesystem::path> written;
  nlohmann::json all = nlohmann::json::array();
  for (const auto& r : reports) {
    const std::string stem = "ppg_" + r.scenario + (r.anc ? "_anc" : "_noanc");
    write_text_file(dir / (stem + ".csv"), window_csv(r));
    written.push_back(dir / (stem + ".csv"));
    if (plot && r.bland_altman) {
      write_text_file(dir / (stem + "_bland_altman.svg"),
                      bland_altman_svg(*r.bland_altman, r.scenario + (r.anc ? " with ANC" : " without ANC")));
      written.push_back(dir / (stem + "_bland_altman.svg"));
    }
    all.push_back(to_json(r));
  }
  write_text_file(dir / "ppg_report.json", all.dump(2) + "\n");
  written.push_back(dir / "ppg_report.json");
  return written;
}

inline std::vector<std::filesystem::path> write_gaze_report(const GazeScenarioReport& r, const std::filesystem::path& dir,
                                                            bool plot) {
  std::vector<std::filesystem::path> written;
  write_text_file(dir / "gaze_report.json", to_json(r).dump(2) + "\n");
  written.push_back(dir / "gaze_report.json");
  std::ostringstream csv;
  csv << "trial,pre_accuracy_deg,post_accuracy_deg,pre_precision_deg,post_precision_deg\n";
  for (std::size_t i = 0; i < r.trials.size(); ++i) {
    const auto& t = r.trials[i];
    csv << i << ',' << format_number(t.pre_accuracy_deg) << ',' << format_number(t.post_accuracy_deg) << ','
        << format_number(t.pre_precision_deg) << ',' << format_number(t.post_precision_deg) << '\n';
  }
  write_text_file(dir / "gaze_trials.csv", csv.str());
  written.push_back(dir / "gaze_trials.csv");
  if (plot) {
    std::vector<Bar> acc, prec;
    for (std::size_t i = 0; i < r.trials.size(); ++i) {
      acc.push_back({"T" + std::to_string(i + 1) + " pre", r.trials[i].pre_accuracy_deg});
      acc.push_back({"T" + std::to_string(i + 1) + " post", r.trials[i].post_accuracy_deg});
      prec.push_back({"T" + std::to_string(i + 1) + " pre", r.trials[i].pre_precision_deg});
      prec.push_back({"T" + std::to_string(i + 1) + " post", r.trials[i].post_precision_deg});
    }
    write_text_file(dir / "gaze_accuracy.svg", bar_chart_svg(acc, "Gaze accuracy", "degrees"));
    write_text_file(dir / "gaze_precision.svg", bar_chart_svg(prec, "Gaze precision", "degrees"));
    written.push_back(dir / "gaze_accuracy.svg");
    written.push_back(dir / "gaze_precision.svg");
  }
  return written;
}

}  // namespace biostream::eval
