/*
 * Copyright 2026 The MFF Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Static SVG figures: reliability diagram, confidence histogram and the
// MC-dropout accuracy histogram.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mff/calibration.hpp"
#include "mff/common.hpp"
#include "mff/mc_dropout.hpp"

namespace mff {

namespace svg {

inline constexpr double kWidth = 480, kHeight = 400;
inline constexpr double kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
inline constexpr double kPlotW = kWidth - kLeft - kRight, kPlotH = kHeight - kTop - kBottom;

inline std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

class Canvas {
 public:
  explicit Canvas(const std::string& title) {
    out_ = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", kWidth) + "\" height=\"" +
           fmt("%.0f", kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out_ += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    text(kWidth / 2, 22, title, "middle", 15);
  }

  // Data coordinates: x in [x0, x1], y in [0, y1].
  void set_range(double x0, double x1, double y1) {
    x0_ = x0;
    x1_ = x1;
    y1_ = y1;
  }
  double px(double x) const { return kLeft + (x - x0_) / (x1_ - x0_) * kPlotW; }
  double py(double y) const { return kTop + kPlotH - y / y1_ * kPlotH; }

  void rect(double x0, double y0, double x1, double y1, const std::string& fill, double opacity = 1.0) {
    const double l = px(x0), r = px(x1), t = py(std::max(y0, y1)), b = py(std::min(y0, y1));
    out_ += "<rect x=\"" + fmt("%.2f", l) + "\" y=\"" + fmt("%.2f", t) + "\" width=\"" + fmt("%.2f", r - l) +
            "\" height=\"" + fmt("%.2f", b - t) + "\" fill=\"" + fill + "\" fill-opacity=\"" + fmt("%.2f", opacity) +
            "\" stroke=\"black\" stroke-width=\"0.5\"/>\n";
  }
  void line(double x0, double y0, double x1, double y1, const std::string& stroke, bool dashed = false) {
    out_ += "<line x1=\"" + fmt("%.2f", px(x0)) + "\" y1=\"" + fmt("%.2f", py(y0)) + "\" x2=\"" + fmt("%.2f", px(x1)) +
            "\" y2=\"" + fmt("%.2f", py(y1)) + "\" stroke=\"" + stroke + "\" stroke-width=\"1.5\"" +
            (dashed ? " stroke-dasharray=\"5,4\"" : "") + "/>\n";
  }
  void text(double x, double y, const std::string& s, const char* anchor = "start", double size = 12) {
    out_ += "<text x=\"" + fmt("%.2f", x) + "\" y=\"" + fmt("%.2f", y) + "\" text-anchor=\"" + anchor +
            "\" font-size=\"" + fmt("%.0f", size) + "\">" + s + "</text>\n";
  }
  void axes(const std::string& xlabel, const std::string& ylabel, int xticks, int yticks) {
    line(x0_, 0, x1_, 0, "black");
    line(x0_, 0, x0_, y1_, "black");
    for (int i = 0; i <= xticks; ++i) {
      const double v = x0_ + (x1_ - x0_) * i / xticks;
      text(px(v), py(0) + 16, fmt("%.2f", v), "middle", 10);
    }
    for (int i = 0; i <= yticks; ++i) {
      const double v = y1_ * i / yticks;
      text(px(x0_) - 6, py(v) + 4, fmt(y1_ >= 10 ? "%.0f" : "%.1f", v), "end", 10);
    }
    text(kLeft + kPlotW / 2, kHeight - 12, xlabel, "middle");
    out_ += "<text transform=\"translate(16," + fmt("%.2f", kTop + kPlotH / 2) +
            ") rotate(-90)\" text-anchor=\"middle\">" + ylabel + "</text>\n";
  }
  void legend(double y, const std::string& color, const std::string& label) {
    out_ += "<rect x=\"" + fmt("%.2f", kLeft + 12) + "\" y=\"" + fmt("%.2f", y - 10) +
            "\" width=\"12\" height=\"12\" fill=\"" + color + "\"/>\n";
    text(kLeft + 30, y, label);
  }

  std::string finish() { return out_ + "</svg>\n"; }

 private:
  std::string out_;
  double x0_ = 0, x1_ = 1, y1_ = 1;
};

}  // namespace svg

/// Per-bin accuracy bars (red) with the gap to mean confidence (blue).
inline std::string reliability_diagram_svg(const CalibrationReport& r, const std::string& title) {
  svg::Canvas c(title);
  c.set_range(0, 1, 1);
  for (const auto& b : r.bins) {
    if (b.count == 0) continue;
    c.rect(b.lower, 0, b.upper, b.accuracy, "#d62728", 0.85);
    c.rect(b.lower, b.accuracy, b.upper, b.avg_confidence, "#1f77b4", 0.45);
  }
  c.line(0, 0, 1, 1, "gray", true);
  c.axes("confidence", "accuracy", 5, 5);
  c.legend(svg::kTop + 14, "#d62728", "outputs");
  c.legend(svg::kTop + 32, "#1f77b4", "gap");
  c.text(svg::kLeft + 12, svg::kTop + 54, "ECE = " + svg::fmt("%.2f", r.ece_percent));
  return c.finish();
}

/// Fraction of samples per confidence bin plus accuracy and mean-confidence lines.
inline std::string confidence_histogram_svg(const ConfidenceHistogram& h, const std::string& title) {
  std::size_t n = 0;
  for (auto k : h.counts) n += k;
  svg::Canvas c(title);
  c.set_range(0, 1, 1);
  for (std::size_t b = 0; b < h.counts.size(); ++b)
    c.rect(h.edges[b], 0, h.edges[b + 1], static_cast<double>(h.counts[b]) / static_cast<double>(std::max<std::size_t>(n, 1)),
           "#1f77b4", 0.85);
  c.line(h.accuracy, 0, h.accuracy, 1, "#2ca02c", true);
  c.line(h.avg_confidence, 0, h.avg_confidence, 1, "#d62728", true);
  c.axes("confidence", "% of samples", 5, 5);
  c.legend(svg::kTop + 14, "#2ca02c", "accuracy " + svg::fmt("%.3f", h.accuracy));
  c.legend(svg::kTop + 32, "#d62728", "avg confidence " + svg::fmt("%.3f", h.avg_confidence));
  return c.finish();
}

/// Histogram of per-pass accuracies with the ensemble accuracy marked.
inline std::string mc_histogram_svg(const AccuracyHistogram& h, double ensemble_accuracy, const std::string& title) {
  const std::size_t peak = *std::max_element(h.counts.begin(), h.counts.end());
  const double lo = std::min(h.edges.front(), ensemble_accuracy), hi = std::max(h.edges.back(), ensemble_accuracy);
  const double pad = (hi - lo) * 0.05;
  svg::Canvas c(title);
  c.set_range(lo - pad, hi + pad, static_cast<double>(std::max<std::size_t>(peak, 1)) * 1.15);
  for (std::size_t b = 0; b < h.counts.size(); ++b)
    c.rect(h.edges[b], 0, h.edges[b + 1], static_cast<double>(h.counts[b]), "#1f77b4", 0.85);
  c.line(ensemble_accuracy, 0, ensemble_accuracy, static_cast<double>(std::max<std::size_t>(peak, 1)) * 1.1, "#d62728",
         true);
  c.axes("per-pass accuracy", "passes", 4, 4);
  c.legend(svg::kTop + 14, "#d62728", "ensemble " + svg::fmt("%.4f", ensemble_accuracy));
  return c.finish();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace mff
