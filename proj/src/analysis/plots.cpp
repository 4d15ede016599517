#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "pai/analysis.hpp"

namespace pai {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 60, kRight = 170, kTop = 30, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string color(std::size_t i) { return kPalette[i % (sizeof kPalette / sizeof kPalette[0])]; }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

class Canvas {
 public:
  Canvas(double x0, double x1, double y0, double y1) : x0_(x0), x1_(x1), y0_(y0), y1_(y1) {
    if (x1_ <= x0_) x1_ = x0_ + 1.0;
    if (y1_ <= y0_) y1_ = y0_ + 1.0;
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(kWidth) << "\" height=\"" << fmt(kHeight)
         << "\" viewBox=\"0 0 " << fmt(kWidth) << ' ' << fmt(kHeight) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }

  double px(double x) const { return kLeft + (x - x0_) / (x1_ - x0_) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0_) / (y1_ - y0_) * (kHeight - kTop - kBottom); }

  void frame(const std::string& xlabel, const std::string& ylabel, const std::string& title) {
    out_ << "<rect x=\"" << fmt(kLeft) << "\" y=\"" << fmt(kTop) << "\" width=\"" << fmt(kWidth - kLeft - kRight)
         << "\" height=\"" << fmt(kHeight - kTop - kBottom) << "\" fill=\"none\" stroke=\"black\"/>\n";
    text(kLeft + (kWidth - kLeft - kRight) / 2, kHeight - 12, xlabel, "middle");
    out_ << "<text x=\"14\" y=\"" << fmt(kTop + (kHeight - kTop - kBottom) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
         << fmt(kTop + (kHeight - kTop - kBottom) / 2) << ")\">" << escape(ylabel) << "</text>\n";
    text(kLeft + (kWidth - kLeft - kRight) / 2, 18, title, "middle");
  }

  void xtick(double x, const std::string& label) {
    const double X = px(x);
    line(X, py(y0_), X, py(y0_) + 5, "black");
    text(X, py(y0_) + 17, label, "middle");
  }
  void ytick(double y, const std::string& label) {
    const double Y = py(y);
    line(kLeft - 5, Y, kLeft, Y, "black");
    line(kLeft, Y, kWidth - kRight, Y, "#e0e0e0");
    text(kLeft - 8, Y + 4, label, "end");
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke, const std::string& dash = "") {
    out_ << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2) << "\" y2=\"" << fmt(y2)
         << "\" stroke=\"" << stroke << "\"";
    if (!dash.empty()) out_ << " stroke-dasharray=\"" << dash << "\"";
    out_ << "/>\n";
  }
  void text(double x, double y, const std::string& s, const char* anchor) {
    out_ << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" text-anchor=\"" << anchor << "\">" << escape(s)
         << "</text>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, const std::string& dash = "") {
    out_ << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << stroke << "\"";
    if (!dash.empty()) out_ << " stroke-dasharray=\"" << dash << "\"";
    out_ << " points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) out_ << (i ? " " : "") << fmt(px(pts[i].first)) << ',' << fmt(py(pts[i].second));
    out_ << "\"/>\n";
  }
  void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill) {
    out_ << "<polygon fill=\"" << fill << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) out_ << (i ? " " : "") << fmt(px(pts[i].first)) << ',' << fmt(py(pts[i].second));
    out_ << "\"/>\n";
  }
  void marker(double x, double y, const std::string& fill) {
    out_ << "<circle cx=\"" << fmt(px(x)) << "\" cy=\"" << fmt(py(y)) << "\" r=\"3\" fill=\"" << fill << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill) {
    out_ << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(w) << "\" height=\"" << fmt(h)
         << "\" fill=\"" << fill << "\"/>\n";
  }
  void legend(std::size_t row, const std::string& label, const std::string& stroke, const std::string& dash = "") {
    const double x = kWidth - kRight + 12;
    const double y = kTop + 10 + 16 * static_cast<double>(row);
    line(x, y, x + 18, y, stroke, dash);
    text(x + 24, y + 4, label, "start");
  }

  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  double x0_, x1_, y0_, y1_;
  std::ostringstream out_;
};

struct Point {
  double x = 0.0;
  std::vector<double> ys;
};

}  // namespace

std::string accuracy_plot_svg(const csv::Table& results) {
  const std::size_t c_kind = results.column("kind");
  const std::size_t c_method = results.column("method");
  const std::size_t c_kept = results.column("kept_fraction");
  const std::size_t c_acc = results.column("test_acc");
  const std::size_t c_status = results.column("status");

  std::vector<std::string> methods;
  std::map<std::string, std::map<double, Point>> series;
  for (std::size_t r = 0; r < results.rows.size(); ++r) {
    const auto& row = results.rows[r];
    if (row[c_kind] != "run" || row[c_status] != "ok") continue;
    const double kept = csv::to_double(row[c_kept], r + 1);
    const double acc = csv::to_double(row[c_acc], r + 1);
    if (!(kept > 0.0)) throw csv::ParseError(r + 1, "kept_fraction must be > 0");
    if (!series.count(row[c_method])) methods.push_back(row[c_method]);
    Point& p = series[row[c_method]][kept];
    p.x = kept;
    p.ys.push_back(acc);
  }

  double xmin = 1.0, xmax = 1.0;
  for (const auto& [name, pts] : series) {
    for (const auto& [x, p] : pts) xmin = std::min(xmin, x);
  }
  const double lx0 = std::floor(std::log10(xmin));
  const double lx1 = std::ceil(std::log10(xmax));
  Canvas cv(lx0, lx1 == lx0 ? lx0 + 1 : lx1, 0.0, 1.0);
  cv.frame("kept fraction (log scale)", "test accuracy", "accuracy vs kept fraction");
  for (double d = lx0; d <= lx1 + 1e-9; d += 1.0) {
    std::ostringstream label;
    label << std::pow(10.0, d);
    cv.xtick(d, label.str());
  }
  for (int i = 0; i <= 5; ++i) cv.ytick(i / 5.0, fmt(i / 5.0));

  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    const std::string col = color(mi);
    const auto& pts = series[methods[mi]];
    std::vector<std::pair<double, double>> mean_line, upper, lower;
    for (const auto& [x, p] : pts) {
      const double mu = mean_of(p.ys);
      const double sd = sample_std(p.ys);
      mean_line.emplace_back(std::log10(x), mu);
      if (p.ys.size() >= 2) {
        upper.emplace_back(std::log10(x), std::min(1.0, mu + sd));
        lower.emplace_back(std::log10(x), std::max(0.0, mu - sd));
      }
    }
    if (upper.size() >= 2) {
      std::vector<std::pair<double, double>> band(upper.begin(), upper.end());
      band.insert(band.end(), lower.rbegin(), lower.rend());
      cv.polygon(band, col);
    }
    if (mean_line.size() >= 2) cv.polyline(mean_line, col);
    for (const auto& [x, y] : mean_line) cv.marker(x, y, col);
    cv.legend(mi, methods[mi], col);
  }
  return cv.finish();
}

std::string density_plot_svg(const std::vector<LabeledProfile>& profiles) {
  const std::vector<ConsistencyRow> rows = consistency(profiles);
  std::vector<std::string> labels;
  std::size_t layers = 0;
  for (const auto& r : rows) {
    const std::string label = r.method + " @" + csv::num(r.kept_fraction);
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(label);
    layers = std::max(layers, r.layer + 1);
  }
  Canvas cv(0.0, static_cast<double>(std::max<std::size_t>(layers, 1)), 0.0, 1.0);
  cv.frame("layer", "fraction of remaining weights", "per-layer density");
  for (std::size_t l = 0; l < layers; ++l) cv.xtick(static_cast<double>(l) + 0.5, std::to_string(l));
  for (int i = 0; i <= 5; ++i) cv.ytick(i / 5.0, fmt(i / 5.0));
  const double group = cv.px(1.0) - cv.px(0.0);
  const double bar = labels.empty() ? 0.0 : group * 0.8 / static_cast<double>(labels.size());
  for (const auto& r : rows) {
    const std::string label = r.method + " @" + csv::num(r.kept_fraction);
    const auto li = static_cast<std::size_t>(std::find(labels.begin(), labels.end(), label) - labels.begin());
    const double x = cv.px(static_cast<double>(r.layer)) + group * 0.1 + bar * static_cast<double>(li);
    const double y = cv.py(r.mean_fraction);
    cv.rect(x, y, bar, cv.py(0.0) - y, color(li));
  }
  for (std::size_t li = 0; li < labels.size(); ++li) cv.legend(li, labels[li], color(li));
  return cv.finish();
}

std::string trace_plot_svg(const std::vector<std::pair<std::string, PruneTrace>>& traces) {
  double tmax = 1.0, ymax = 1.0;
  for (const auto& [name, tr] : traces) {
    tmax = std::max(tmax, static_cast<double>(tr.steps.size()));
    for (const auto& s : tr.steps) ymax = std::max({ymax, static_cast<double>(s.pruned), static_cast<double>(s.recovered)});
  }
  Canvas cv(0.0, tmax, 0.0, ymax);
  cv.frame("iteration", "weights", "pruned (solid) and recovered (dashed) per iteration");
  for (int i = 0; i <= 4; ++i) cv.xtick(tmax * i / 4.0, fmt(tmax * i / 4.0));
  for (int i = 0; i <= 4; ++i) cv.ytick(ymax * i / 4.0, fmt(ymax * i / 4.0));
  for (std::size_t i = 0; i < traces.size(); ++i) {
    std::vector<std::pair<double, double>> pruned, recovered;
    for (const auto& s : traces[i].second.steps) {
      pruned.emplace_back(static_cast<double>(s.t) + 1.0, static_cast<double>(s.pruned));
      recovered.emplace_back(static_cast<double>(s.t) + 1.0, static_cast<double>(s.recovered));
    }
    if (pruned.size() >= 2) {
      cv.polyline(pruned, color(i));
      cv.polyline(recovered, color(i), "4 3");
    } else {
      for (const auto& [x, y] : pruned) cv.marker(x, y, color(i));
    }
    cv.legend(i, traces[i].first, color(i));
  }
  return cv.finish();
}

std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& results_csv,
                                             const std::filesystem::path& out_dir) {
  const csv::Table table = csv::read_file(results_csv.string());
  // Validates the schema even when there is nothing to draw.
  for (const char* col : {"kind", "method", "kept_fraction", "test_acc", "status"}) table.column(col);
  const std::size_t c_kind = table.column("kind");
  const bool any = std::any_of(table.rows.begin(), table.rows.end(),
                               [&](const std::vector<std::string>& r) { return r[c_kind] == "run"; });
  if (!any) return {};
  const std::string svg = accuracy_plot_svg(table);
  std::filesystem::create_directories(out_dir);
  const auto path = out_dir / "accuracy.svg";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << svg;
  return {path};
}

}  // namespace pai
