#pragma once

// Minimal SVG figure writer for the static result plots (P-V loop overlays
// and per-mesh displacement summaries). No external rendering dependencies.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "cgfenet/common.hpp"

namespace cgfenet {

class SvgFigure {
 public:
  SvgFigure(std::string title, std::string xlabel, std::string ylabel)
      : title_(std::move(title)),
        xlabel_(std::move(xlabel)),
        ylabel_(std::move(ylabel)) {}

  void add_line(const std::vector<double>& x, const std::vector<double>& y,
                const std::string& color, const std::string& label,
                bool close = false) {
    check(x.size() == y.size() && !x.empty(), "SvgFigure: bad series");
    series_.push_back({x, y, color, label, close});
  }

  void add_bars(const std::vector<std::string>& names,
                const std::vector<double>& values, const std::string& color,
                const std::string& label) {
    check(names.size() == values.size() && !values.empty(),
          "SvgFigure: bad bar series");
    bar_names_ = names;
    bars_.push_back({values, color, label});
  }

  void save(const std::filesystem::path& path) const {
    const double w = 720, h = 480;
    const double ml = 70, mr = 20, mt = 40, mb = 55;
    const double pw = w - ml - mr, ph = h - mt - mb;

    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& s : series_)
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (first) {
          xmin = xmax = s.x[i];
          ymin = ymax = s.y[i];
          first = false;
        }
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    for (const auto& b : bars_)
      for (const double v : b.values) {
        if (first) {
          ymin = 0;
          ymax = v;
          first = false;
        }
        ymin = std::min(ymin, 0.0);
        ymax = std::max(ymax, v);
      }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double xpad = 0.05 * (xmax - xmin), ypad = 0.07 * (ymax - ymin);
    xmin -= xpad;
    xmax += xpad;
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

    std::ostringstream svg;
    svg << std::setprecision(6);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
        << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h
        << "\">\n";
    svg << "<rect width=\"" << w << "\" height=\"" << h
        << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-size=\"16\" font-family=\"sans-serif\">" << title_
        << "</text>\n";

    // axes
    svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw
        << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
      const double xv = xmin + (xmax - xmin) * i / 5.0;
      const double yv = ymin + (ymax - ymin) * i / 5.0;
      svg << "<line x1=\"" << px(xv) << "\" y1=\"" << mt + ph << "\" x2=\""
          << px(xv) << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"black\"/>\n";
      svg << "<text x=\"" << px(xv) << "\" y=\"" << mt + ph + 20
          << "\" text-anchor=\"middle\" font-size=\"11\" "
             "font-family=\"sans-serif\">"
          << format_tick(xv) << "</text>\n";
      svg << "<line x1=\"" << ml - 5 << "\" y1=\"" << py(yv) << "\" x2=\""
          << ml << "\" y2=\"" << py(yv) << "\" stroke=\"black\"/>\n";
      svg << "<text x=\"" << ml - 8 << "\" y=\"" << py(yv) + 4
          << "\" text-anchor=\"end\" font-size=\"11\" "
             "font-family=\"sans-serif\">"
          << format_tick(yv) << "</text>\n";
    }
    svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << h - 12
        << "\" text-anchor=\"middle\" font-size=\"13\" "
           "font-family=\"sans-serif\">"
        << xlabel_ << "</text>\n";
    svg << "<text x=\"18\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" "
           "font-family=\"sans-serif\" transform=\"rotate(-90 18 "
        << mt + ph / 2 << ")\">" << ylabel_ << "</text>\n";

    // bars
    if (!bars_.empty()) {
      const std::size_t groups = bar_names_.size();
      const double group_w = pw / static_cast<double>(groups);
      const double bar_w = group_w / (static_cast<double>(bars_.size()) + 1);
      for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t b = 0; b < bars_.size(); ++b) {
          const double v = bars_[b].values[g];
          const double x0 = ml + group_w * static_cast<double>(g) +
                            bar_w * (static_cast<double>(b) + 0.5);
          const double y0 = py(std::max(v, 0.0));
          const double hgt = std::abs(py(0.0) - py(v));
          svg << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\""
              << bar_w * 0.9 << "\" height=\"" << hgt << "\" fill=\""
              << bars_[b].color << "\"/>\n";
        }
        svg << "<text x=\"" << ml + group_w * (static_cast<double>(g) + 0.5)
            << "\" y=\"" << mt + ph + 34
            << "\" text-anchor=\"middle\" font-size=\"10\" "
               "font-family=\"sans-serif\">"
            << bar_names_[g] << "</text>\n";
      }
    }

    // lines
    for (const auto& s : series_) {
      svg << "<polyline fill=\"none\" stroke=\"" << s.color
          << "\" stroke-width=\"1.6\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        svg << px(s.x[i]) << "," << py(s.y[i]) << " ";
      if (s.close && !s.x.empty()) svg << px(s.x[0]) << "," << py(s.y[0]);
      svg << "\"/>\n";
    }

    // legend
    double ly = mt + 12;
    for (const auto& s : series_) {
      svg << "<line x1=\"" << ml + pw - 150 << "\" y1=\"" << ly << "\" x2=\""
          << ml + pw - 122 << "\" y2=\"" << ly << "\" stroke=\"" << s.color
          << "\" stroke-width=\"2\"/>\n";
      svg << "<text x=\"" << ml + pw - 116 << "\" y=\"" << ly + 4
          << "\" font-size=\"12\" font-family=\"sans-serif\">" << s.label
          << "</text>\n";
      ly += 18;
    }
    for (const auto& b : bars_) {
      svg << "<rect x=\"" << ml + pw - 150 << "\" y=\"" << ly - 8
          << "\" width=\"24\" height=\"10\" fill=\"" << b.color << "\"/>\n";
      svg << "<text x=\"" << ml + pw - 116 << "\" y=\"" << ly + 2
          << "\" font-size=\"12\" font-family=\"sans-serif\">" << b.label
          << "</text>\n";
      ly += 18;
    }
    svg << "</svg>\n";

    std::ofstream out(path);
    check(out.good(), "SvgFigure: cannot open " + path.string());
    out << svg.str();
    check(out.good(), "SvgFigure: write failed");
  }

 private:
  struct Series {
    std::vector<double> x, y;
    std::string color, label;
    bool close = false;
  };
  struct Bars {
    std::vector<double> values;
    std::string color, label;
  };

  static std::string format_tick(double v) {
    std::ostringstream s;
    if (std::abs(v) >= 1000 || (std::abs(v) < 0.01 && v != 0.0))
      s << std::scientific << std::setprecision(1) << v;
    else
      s << std::fixed << std::setprecision(std::abs(v) < 10 ? 2 : 1) << v;
    return s.str();
  }

  std::string title_, xlabel_, ylabel_;
  std::vector<Series> series_;
  std::vector<Bars> bars_;
  std::vector<std::string> bar_names_;
};

}  // namespace cgfenet
