#include "layerinfo/run/figures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "layerinfo/error.hpp"
#include "layerinfo/run/cache.hpp"

namespace layerinfo::run {
namespace {

constexpr double kWidth = 640, kHeight = 400, kLeft = 70, kRight = 170, kTop = 40, kBottom = 50;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

struct Series {
  std::string label;
  std::vector<double> x, y;
};

// Axis-aligned plot area mapping data coordinates to pixels.
class Canvas {
 public:
  Canvas(std::string title, std::string xlabel, std::string ylabel, double x0, double x1, double y0, double y1)
      : x0_(x0), x1_(x1 > x0 ? x1 : x0 + 1), y0_(y0), y1_(y1 > y0 ? y1 : y0 + 1) {
    body_ += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) +
             "</text>\n";
    body_ += "<text x=\"" + num(kLeft + plot_w() / 2) + "\" y=\"" + num(kHeight - 10) +
             "\" text-anchor=\"middle\" font-size=\"12\">" + escape(xlabel) + "</text>\n";
    body_ += "<text x=\"16\" y=\"" + num(kTop + plot_h() / 2) + "\" transform=\"rotate(-90 16 " +
             num(kTop + plot_h() / 2) + ")\" text-anchor=\"middle\" font-size=\"12\">" + escape(ylabel) + "</text>\n";
    body_ += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(plot_w()) + "\" height=\"" +
             num(plot_h()) + "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double yv = y0_ + (y1_ - y0_) * i / 4.0;
      body_ += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(py(yv) + 4) +
               "\" text-anchor=\"end\" font-size=\"10\">" + num(yv) + "</text>\n";
    }
  }

  double px(double x) const { return kLeft + (x - x0_) / (x1_ - x0_) * plot_w(); }
  double py(double y) const { return kTop + plot_h() - (y - y0_) / (y1_ - y0_) * plot_h(); }
  static double plot_w() { return kWidth - kLeft - kRight; }
  static double plot_h() { return kHeight - kTop - kBottom; }

  void x_tick(double x, const std::string& label) {
    body_ += "<text x=\"" + num(px(x)) + "\" y=\"" + num(kTop + plot_h() + 15) +
             "\" text-anchor=\"middle\" font-size=\"10\">" + escape(label) + "</text>\n";
  }
  void polyline(const Series& s, const char* color) {
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) pts += num(px(s.x[i])) + "," + num(py(s.y[i])) + " ";
    body_ += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      body_ += "<circle cx=\"" + num(px(s.x[i])) + "\" cy=\"" + num(py(s.y[i])) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
  }
  void bar(double x_left, double x_right, double y, const char* color, double opacity) {
    const double top = py(std::max(y, y0_ < 0 ? 0.0 : y0_));
    const double base = py(y0_ < 0 && y1_ > 0 ? 0.0 : y0_);
    const double yb = std::min(top, py(y));
    body_ += "<rect x=\"" + num(px(x_left)) + "\" y=\"" + num(std::min(yb, base)) + "\" width=\"" +
             num(px(x_right) - px(x_left)) + "\" height=\"" + num(std::abs(base - py(y))) + "\" fill=\"" + color +
             "\" fill-opacity=\"" + num(opacity) + "\"/>\n";
  }
  void legend(const std::vector<std::string>& labels) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double y = kTop + 10 + 18.0 * static_cast<double>(i);
      body_ += "<rect x=\"" + num(kWidth - kRight + 10) + "\" y=\"" + num(y - 9) + "\" width=\"12\" height=\"12\" fill=\"" +
               kPalette[i % 8] + "\"/>\n";
      body_ += "<text x=\"" + num(kWidth - kRight + 28) + "\" y=\"" + num(y + 1) + "\" font-size=\"11\">" +
               escape(labels[i]) + "</text>\n";
    }
  }
  std::string svg() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
           "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
           body_ + "</svg>\n";
  }

 private:
  double x0_, x1_, y0_, y1_;
  std::string body_;
};

std::string group_label(const std::string& tmpl, bool answerable) {
  return tmpl + (answerable ? " / answerable" : " / unanswerable");
}

bool label_of(const EvalReport& r, const std::string& id) {
  const auto it = r.answerable.find(id);
  return it != r.answerable.end() && it->second;
}

std::pair<double, double> range_of(const std::vector<Series>& series, bool include_zero) {
  double lo = include_zero ? 0.0 : INFINITY, hi = include_zero ? 0.0 : -INFINITY;
  for (const auto& s : series) {
    for (double v : s.y) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  const double pad = (hi - lo) * 0.05 + 1e-12;
  return {lo - pad, hi + pad};
}

std::filesystem::path write(const std::filesystem::path& dir, const std::string& name, const std::string& content,
                            std::vector<std::filesystem::path>& out) {
  const auto path = dir / name;
  write_file_atomic(path, content);
  out.push_back(path);
  return path;
}

// Per-layer means of `pick(profile)` for every (template, class) group.
std::vector<Series> layer_means(const EvalReport& r, bool cumulative) {
  std::map<std::pair<std::string, bool>, std::map<int, std::pair<double, std::size_t>>> acc;
  for (const auto& p : r.profiles) {
    const auto values = cumulative ? li::cumulative_profile(p) : p.i_layer;
    auto& g = acc[{p.template_id, label_of(r, p.example_id)}];
    for (std::size_t i = 0; i < p.layer_ids.size(); ++i) {
      g[p.layer_ids[i]].first += values[i];
      g[p.layer_ids[i]].second += 1;
    }
  }
  std::vector<Series> out;
  for (const auto& [key, layers] : acc) {
    Series s;
    s.label = group_label(key.first, key.second);
    for (const auto& [layer, sum_n] : layers) {
      s.x.push_back(layer);
      s.y.push_back(sum_n.first / static_cast<double>(sum_n.second));
    }
    out.push_back(std::move(s));
  }
  return out;
}

void layer_figure(const EvalReport& r, bool cumulative, const std::filesystem::path& dir,
                  std::vector<std::filesystem::path>& out) {
  if (r.profiles.empty()) throw InsufficientData("report holds no LI profiles for a per-layer figure");
  const auto series = layer_means(r, cumulative);
  const std::string name = cumulative ? "cumulative" : "per_layer";
  std::string csv = "series,layer," + std::string(cumulative ? "mean_cumulative_li" : "mean_i_layer") + "\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      csv += csv_field(s.label) + "," + std::to_string(static_cast<int>(s.x[i])) + "," + format_double(s.y[i]) + "\n";
    }
  }
  write(dir, name + ".csv", csv, out);
  double x0 = INFINITY, x1 = -INFINITY;
  for (const auto& s : series) {
    for (double x : s.x) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
    }
  }
  const auto [y0, y1] = range_of(series, true);
  Canvas c(cumulative ? "Cumulative usable information" : "Usable information per layer", "layer",
           cumulative ? "cumulative LI (bits/token)" : "I_l (bits/token)", x0 - 0.5, x1 + 0.5, y0, y1);
  for (int l = static_cast<int>(x0); l <= static_cast<int>(x1); ++l) c.x_tick(l, std::to_string(l));
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < series.size(); ++i) {
    c.polyline(series[i], kPalette[i % 8]);
    labels.push_back(series[i].label);
  }
  c.legend(labels);
  write(dir, name + ".svg", c.svg(), out);
}

void distribution_figure(const EvalReport& r, const std::filesystem::path& dir,
                         std::vector<std::filesystem::path>& out) {
  std::map<std::pair<std::string, bool>, std::vector<std::pair<std::string, double>>> groups;
  for (const auto& s : r.scores) {
    if (s.method == "li") groups[{s.template_id, s.answerable}].emplace_back(s.example_id, s.value);
  }
  if (groups.empty()) throw InsufficientData("report holds no LI scores for a distribution figure");
  std::string csv = "series,example_id,li\n";
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& [key, items] : groups) {
    for (const auto& [id, v] : items) {
      csv += csv_field(group_label(key.first, key.second)) + "," + csv_field(id) + "," + format_double(v) + "\n";
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  write(dir, "distribution.csv", csv, out);

  constexpr int kBins = 20;
  if (hi <= lo) hi = lo + 1e-9;
  const double width = (hi - lo) / kBins;
  std::vector<Series> hist;
  double ymax = 0.0;
  for (const auto& [key, items] : groups) {
    Series s;
    s.label = group_label(key.first, key.second);
    std::vector<double> counts(kBins, 0.0);
    for (const auto& [id, v] : items) counts[std::min(kBins - 1, static_cast<int>((v - lo) / width))] += 1.0;
    for (int b = 0; b < kBins; ++b) {
      s.x.push_back(lo + width * b);
      s.y.push_back(counts[b] / static_cast<double>(items.size()));
      ymax = std::max(ymax, s.y.back());
    }
    hist.push_back(std::move(s));
  }
  Canvas c("Distribution of LI", "LI (bits/token)", "fraction of examples", lo, hi, 0.0, ymax * 1.05);
  for (int i = 0; i <= 4; ++i) c.x_tick(lo + (hi - lo) * i / 4.0, num(lo + (hi - lo) * i / 4.0));
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    for (std::size_t b = 0; b < hist[i].x.size(); ++b) {
      c.bar(hist[i].x[b], hist[i].x[b] + width, hist[i].y[b], kPalette[i % 8], 0.45);
    }
    labels.push_back(hist[i].label);
  }
  c.legend(labels);
  write(dir, "distribution.svg", c.svg(), out);
}

void auroc_figure(const EvalReport& r, const std::filesystem::path& dir, std::vector<std::filesystem::path>& out) {
  std::vector<std::pair<std::string, double>> bars;
  std::string csv = "method,template,auroc\n";
  for (const auto& m : r.methods) {
    if (!m.auroc) continue;
    bars.emplace_back(m.method + " @ " + m.template_id, *m.auroc);
    csv += csv_field(m.method) + "," + csv_field(m.template_id) + "," + format_double(*m.auroc) + "\n";
  }
  if (bars.empty()) throw InsufficientData("report holds no defined AUROC values");
  write(dir, "bar_auroc.csv", csv, out);
  Canvas c("AUROC by method", "", "AUROC", 0.0, static_cast<double>(bars.size()), 0.0, 1.0);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < bars.size(); ++i) {
    c.bar(static_cast<double>(i) + 0.15, static_cast<double>(i) + 0.85, bars[i].second, kPalette[i % 8], 0.9);
    c.x_tick(static_cast<double>(i) + 0.5, num(bars[i].second));
    labels.push_back(bars[i].first);
  }
  c.legend(labels);
  write(dir, "bar_auroc.svg", c.svg(), out);
}

}  // namespace

std::string to_string(FigureKind kind) {
  switch (kind) {
    case FigureKind::distribution: return "distribution";
    case FigureKind::per_layer: return "per_layer";
    case FigureKind::cumulative: return "cumulative";
    case FigureKind::bar_auroc: return "bar_auroc";
  }
  return "distribution";
}

FigureKind parse_figure_kind(std::string_view name) {
  for (auto k : {FigureKind::distribution, FigureKind::per_layer, FigureKind::cumulative, FigureKind::bar_auroc}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown figure kind '" + std::string(name) + "'");
}

std::vector<std::filesystem::path> emit_figures(const EvalReport& report, const std::set<FigureKind>& kinds,
                                                const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  std::filesystem::create_directories(dir);
  for (FigureKind k : kinds) {
    switch (k) {
      case FigureKind::distribution: distribution_figure(report, dir, out); break;
      case FigureKind::per_layer: layer_figure(report, false, dir, out); break;
      case FigureKind::cumulative: layer_figure(report, true, dir, out); break;
      case FigureKind::bar_auroc: auroc_figure(report, dir, out); break;
    }
  }
  return out;
}

}  // namespace layerinfo::run
