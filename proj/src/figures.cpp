#include "tsxai/figures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace tsxai::figures {
namespace {

constexpr const char* kFont = "font-family=\"Helvetica,Arial,sans-serif\"";

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  auto mix = [t](int x, int y) { return static_cast<int>(std::lround(x + (y - x) * t)); };
  return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}

template <std::size_t N>
Rgb ramp(const std::array<Rgb, N>& stops, double t) {
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  const double pos = t * static_cast<double>(N - 1);
  const auto i = std::min(static_cast<std::size_t>(pos), N - 2);
  return lerp(stops[i], stops[i + 1], pos - static_cast<double>(i));
}

class Document {
 public:
  Document(double width, double height) : width_(width) {
    out_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
         << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
         << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\">\n"
         << "<rect x=\"0\" y=\"0\" width=\"" << num(width) << "\" height=\"" << num(height) << "\" fill=\"#ffffff\"/>\n";
  }

  void title(const std::string& text) { this->text(width_ / 2, 22, text, 15, "middle", "bold"); }

  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& extra = "") {
    out_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
         << "\" fill=\"" << fill << '"' << (extra.empty() ? "" : " " + extra) << "/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0) {
    out_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
         << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << "\"/>\n";
  }

  void circle(double cx, double cy, double r, const std::string& fill, const std::string& stroke = "none") {
    out_ << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"" << num(r) << "\" fill=\"" << fill
         << "\" stroke=\"" << stroke << "\"/>\n";
  }

  void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill, const std::string& stroke,
               double opacity) {
    out_ << "<polygon points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) out_ << (i ? " " : "") << num(pts[i].first) << ',' << num(pts[i].second);
    out_ << "\" fill=\"" << fill << "\" fill-opacity=\"" << num(opacity) << "\" stroke=\"" << stroke
         << "\" stroke-width=\"2.00\"/>\n";
  }

  void text(double x, double y, const std::string& s, double size = 11, const std::string& anchor = "start",
            const std::string& weight = "normal", double rotate = 0.0, const std::string& fill = "#000000") {
    out_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" " << kFont << " font-size=\"" << num(size)
         << "\" text-anchor=\"" << anchor << "\" font-weight=\"" << weight << "\" fill=\"" << fill << '"';
    if (rotate != 0.0) out_ << " transform=\"rotate(" << num(rotate) << ' ' << num(x) << ' ' << num(y) << ")\"";
    out_ << '>' << xml_escape(s) << "</text>\n";
  }

  void raw(const std::string& s) { out_ << s; }

  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  double width_;
  std::ostringstream out_;
};

std::pair<double, double> min_max(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi};
}

}  // namespace

std::string Rgb::hex() const {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

Rgb sequential(double t) {
  static constexpr std::array<Rgb, 5> stops = {
      Rgb{68, 1, 84}, Rgb{59, 82, 139}, Rgb{33, 145, 140}, Rgb{94, 201, 98}, Rgb{253, 231, 37}};
  return ramp(stops, t);
}

Rgb diverging(double t) {
  static constexpr std::array<Rgb, 3> stops = {Rgb{33, 102, 172}, Rgb{247, 247, 247}, Rgb{178, 24, 43}};
  return ramp(stops, (t + 1.0) / 2.0);
}

std::string xml_escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string bar_chart(const std::string& title, const std::vector<std::string>& labels, std::span<const double> values,
                      const std::vector<bool>& highlight) {
  if (labels.size() != values.size()) throw std::invalid_argument("bar_chart: labels and values differ in length");
  const double left = 60, top = 40, plot_h = 260, bar_w = 28, gap = 8;
  const double width = left + static_cast<double>(values.size()) * (bar_w + gap) + 30;
  Document doc(width, top + plot_h + 60);
  doc.title(title);
  const double hi = std::max(min_max(values).second, 1e-300);
  doc.line(left, top + plot_h, width - 20, top + plot_h, "#333333");
  doc.line(left, top, left, top + plot_h, "#333333");
  for (int k = 0; k <= 4; ++k) {
    const double y = top + plot_h * (1.0 - k / 4.0);
    doc.line(left - 4, y, left, y, "#333333");
    doc.text(left - 6, y + 4, label_value(hi * k / 4.0), 9, "end");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double h = plot_h * std::max(values[i], 0.0) / hi;
    const double x = left + gap + static_cast<double>(i) * (bar_w + gap);
    const bool mark = i < highlight.size() && highlight[i];
    doc.rect(x, top + plot_h - h, bar_w, h, mark ? "#d95f02" : "#3b528b");
    doc.text(x + bar_w / 2, top + plot_h + 14, labels[i], 10, "middle");
  }
  return doc.finish();
}

double idw_value(double x, double y, std::span<const double> values, std::span<const ScalpPoint> points) {
  if (values.size() != points.size() || values.empty()) throw std::invalid_argument("idw: values and points differ");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d2 = (x - points[i].x) * (x - points[i].x) + (y - points[i].y) * (y - points[i].y);
    if (d2 < 1e-18) return values[i];
    num += values[i] / d2;
    den += 1.0 / d2;
  }
  return num / den;
}

std::string topomap(const std::string& title, std::span<const double> values, const std::vector<std::string>& names,
                    std::span<const ScalpPoint> points, std::size_t grid) {
  if (values.size() != names.size()) throw std::invalid_argument("topomap: names and values differ in length");
  if (grid < 2) throw std::invalid_argument("topomap: grid too small");
  const double size = 360, margin = 40, radius = size / 2 - 10;
  const double cx = margin + size / 2, cy = margin + size / 2;
  Document doc(size + 2 * margin + 60, size + 2 * margin);
  doc.title(title);
  const auto [lo, hi] = min_max(values);
  const double span = hi - lo;
  auto normalized = [&](double v) { return span > 0.0 ? (v - lo) / span : 0.5; };
  const double cell = 2.0 * radius / static_cast<double>(grid);
  for (std::size_t gy = 0; gy < grid; ++gy) {
    for (std::size_t gx = 0; gx < grid; ++gx) {
      const double ux = -1.0 + (static_cast<double>(gx) + 0.5) * 2.0 / static_cast<double>(grid);
      const double uy = 1.0 - (static_cast<double>(gy) + 0.5) * 2.0 / static_cast<double>(grid);
      if (ux * ux + uy * uy > 1.0) continue;
      const double v = idw_value(ux, uy, values, points);
      doc.rect(cx - radius + static_cast<double>(gx) * cell, cy - radius + static_cast<double>(gy) * cell, cell + 0.3,
               cell + 0.3, sequential(normalized(v)).hex());
    }
  }
  doc.raw("<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(radius) +
          "\" fill=\"none\" stroke=\"#222222\" stroke-width=\"2.00\"/>\n");
  doc.polygon({{cx - 12, cy - radius + 1}, {cx, cy - radius - 14}, {cx + 12, cy - radius + 1}}, "none", "#222222", 0.0);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double px = cx + points[i].x * radius, py = cy - points[i].y * radius;
    doc.circle(px, py, 3, "#000000");
    doc.text(px, py - 6, names[i], 9, "middle");
  }
  const double bar_x = margin + size + 20;
  for (int k = 0; k < 50; ++k)
    doc.rect(bar_x, cy + radius - (k + 1) * (2 * radius / 50), 14, 2 * radius / 50 + 0.3, sequential(k / 49.0).hex());
  doc.text(bar_x + 18, cy - radius + 8, label_value(hi), 9);
  doc.text(bar_x + 18, cy + radius, label_value(lo), 9);
  return doc.finish();
}

std::string heatmap(const std::string& title, const std::vector<std::string>& rows, const std::vector<std::string>& cols,
                    const std::vector<std::vector<double>>& values, double lo, double hi) {
  if (values.size() != rows.size()) throw std::invalid_argument("heatmap: row count mismatch");
  for (const auto& r : values)
    if (r.size() != cols.size()) throw std::invalid_argument("heatmap: column count mismatch");
  const double left = 110, top = 70, cell = 56;
  Document doc(left + cell * static_cast<double>(cols.size()) + 30, top + cell * static_cast<double>(rows.size()) + 30);
  doc.title(title);
  const bool signed_scale = lo < 0.0;
  for (std::size_t j = 0; j < cols.size(); ++j)
    doc.text(left + cell * (static_cast<double>(j) + 0.5), top - 10, cols[j], 10, "middle");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double y = top + cell * static_cast<double>(i);
    doc.text(left - 8, y + cell / 2 + 4, rows[i], 10, "end");
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const double v = values[i][j];
      const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      const Rgb c = signed_scale ? diverging(2.0 * t - 1.0) : sequential(t);
      const double x = left + cell * static_cast<double>(j);
      doc.rect(x, y, cell, cell, c.hex(), "stroke=\"#ffffff\"");
      const bool dark = (c.r * 299 + c.g * 587 + c.b * 114) / 1000 < 128;
      doc.text(x + cell / 2, y + cell / 2 + 4, label_value(v), 10, "middle", "normal", 0.0,
               dark ? "#ffffff" : "#000000");
    }
  }
  return doc.finish();
}

std::string radar(const std::string& title, const std::vector<std::string>& axes,
                  const std::map<std::string, std::vector<double>>& series) {
  if (axes.size() < 3) throw std::invalid_argument("radar: need at least three axes");
  static constexpr std::array<const char*, 8> palette = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                                                         "#66a61e", "#e6ab02", "#a6761d", "#666666"};
  const double r = 150, cx = 230, cy = 220;
  Document doc(600, 430);
  doc.title(title);
  const double n = static_cast<double>(axes.size());
  auto at = [&](std::size_t k, double v) {
    const double a = -M_PI / 2 + 2 * M_PI * static_cast<double>(k) / n;
    return std::pair{cx + r * v * std::cos(a), cy + r * v * std::sin(a)};
  };
  for (int ring = 1; ring <= 4; ++ring) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < axes.size(); ++k) pts.push_back(at(k, ring / 4.0));
    doc.polygon(pts, "none", "#cccccc", 0.0);
  }
  for (std::size_t k = 0; k < axes.size(); ++k) {
    const auto [x, y] = at(k, 1.0);
    doc.line(cx, cy, x, y, "#cccccc");
    const auto [lx, ly] = at(k, 1.12);
    doc.text(lx, ly + 4, axes[k], 11, "middle");
  }
  std::size_t s = 0;
  for (const auto& [name, values] : series) {
    if (values.size() != axes.size()) throw std::invalid_argument("radar: series '" + name + "' has wrong length");
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < values.size(); ++k) pts.push_back(at(k, std::clamp(values[k], 0.0, 1.0)));
    const char* colour = palette[s % palette.size()];
    doc.polygon(pts, colour, colour, 0.15);
    doc.rect(440, 60 + 20 * static_cast<double>(s), 12, 12, colour);
    doc.text(458, 70 + 20 * static_cast<double>(s), name, 11);
    ++s;
  }
  return doc.finish();
}

std::string consensus_chart(const std::vector<ConsensusEntry>& entries, const std::vector<std::string>& names) {
  const double left = 60, top = 40, plot_h = 260, bar_w = 28, gap = 8;
  const double width = left + static_cast<double>(entries.size()) * (bar_w + gap) + 140;
  Document doc(width, top + plot_h + 60);
  doc.title("Consensus channel ranking");
  doc.line(left, top + plot_h, width - 130, top + plot_h, "#333333");
  doc.line(left, top, left, top + plot_h, "#333333");
  for (int k = 0; k <= 4; ++k) {
    const double y = top + plot_h * (1.0 - k / 4.0);
    doc.text(left - 6, y + 4, label_value(k / 4.0), 9, "end");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.channel >= names.size()) throw std::invalid_argument("consensus_chart: channel index out of range");
    const double x = left + gap + static_cast<double>(i) * (bar_w + gap);
    const double h = plot_h * std::clamp(e.score, 0.0, 1.0);
    doc.rect(x, top + plot_h - h, bar_w, h, "#3b528b");
    doc.circle(x + bar_w / 2, top + plot_h * (1.0 - std::clamp(e.confidence, 0.0, 1.0)), 4, "#d95f02", "#ffffff");
    doc.text(x + bar_w / 2, top + plot_h + 14, names[e.channel], 10, "middle");
  }
  doc.rect(width - 120, 60, 12, 12, "#3b528b");
  doc.text(width - 102, 70, "consensus", 11);
  doc.circle(width - 114, 96, 4, "#d95f02");
  doc.text(width - 102, 100, "confidence", 11);
  return doc.finish();
}

}  // namespace tsxai::figures
