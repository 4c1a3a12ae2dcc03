#include "bood/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "bood/error.hpp"

namespace bood {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 50.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
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

// Data-to-pixel mapping; SVG y grows downwards.
struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const { return kMargin + (x - x0) / (x1 - x0) * (kWidth - 2 * kMargin); }
  double py(double y) const { return kHeight - kMargin - (y - y0) / (y1 - y0) * (kHeight - 2 * kMargin); }

  static Frame around(double x0, double x1, double y0, double y1) {
    auto widen = [](double& lo, double& hi) {
      if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
      }
      const double pad = 0.05 * (hi - lo);
      lo -= pad;
      hi += pad;
    };
    widen(x0, x1);
    widen(y0, y1);
    return {x0, x1, y0, y1};
  }
};

class Svg {
 public:
  Svg() {
    os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }

  void axes(const Frame& f, const std::string& title, const std::string& xl, const std::string& yl) {
    os_ << "<g stroke=\"#444\" stroke-width=\"1\">"
        << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\"" << kWidth - kMargin
        << "\" y2=\"" << kHeight - kMargin << "\"/>"
        << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\""
        << kHeight - kMargin << "\"/></g>\n";
    text(kWidth / 2, 25, title, "middle", 16);
    text(kWidth / 2, kHeight - 10, xl, "middle", 12);
    text(kMargin, kHeight - kMargin + 15, label(f.x0), "start", 10);
    text(kWidth - kMargin, kHeight - kMargin + 15, label(f.x1), "end", 10);
    text(kMargin - 5, kHeight - kMargin, label(f.y0), "end", 10);
    text(kMargin - 5, kMargin + 10, label(f.y1), "end", 10);
    os_ << "<text x=\"15\" y=\"" << kHeight / 2 << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
        << kHeight / 2 << ")\">" << xml_escape(yl) << "</text>\n";
  }

  void text(double x, double y, const std::string& s, const char* anchor, int size) {
    os_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
        << "\" font-family=\"sans-serif\">" << xml_escape(s) << "</text>\n";
  }

  void circle(double x, double y, double r, const std::string& fill, const std::string& extra = "") {
    os_ << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << num(r) << "\" fill=\"" << fill << "\""
        << extra << "/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& fill, double opacity) {
    os_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
        << "\" fill=\"" << fill << "\" fill-opacity=\"" << opacity << "\"/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double width) {
    os_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << width << "\" points=\"";
    for (const auto& [x, y] : pts) os_ << num(x) << ',' << num(y) << ' ';
    os_ << "\"/>\n";
  }

  void save(const std::filesystem::path& path) {
    os_ << "</svg>\n";
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << os_.str();
    if (!f) throw IoError("write failed for " + path.string());
  }

 private:
  std::ostringstream os_;
};

}  // namespace

std::vector<std::string> class_palette(std::size_t n) {
  static const std::vector<std::string> base = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < base.size()) {
      out.push_back(base[i]);
    } else {
      // Golden-angle hues beyond the fixed palette.
      char buf[32];
      std::snprintf(buf, sizeof buf, "hsl(%d,65%%,45%%)", static_cast<int>(std::fmod(i * 137.508, 360.0)));
      out.emplace_back(buf);
    }
  }
  return out;
}

Projection2d Projection2d::fit(const Matrix& rows) {
  if (rows.rows() < 1) throw std::invalid_argument("cannot project an empty set");
  Projection2d p;
  p.mean = rows.colwise().mean().transpose();
  if (rows.cols() == 2) {
    p.basis = Matrix::Identity(2, 2);
    p.mean.setZero();
    return p;
  }
  if (rows.cols() < 2) throw DimensionError("need at least 2 dimensions to plot");
  const Matrix centered = rows.rowwise() - p.mean.transpose();
  Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  p.basis = svd.matrixV().leftCols(2);
  // Fix the sign so the projection is reproducible.
  for (Eigen::Index c = 0; c < 2; ++c) {
    Eigen::Index arg = 0;
    p.basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (p.basis(arg, c) < 0) p.basis.col(c) *= -1.0;
  }
  return p;
}

Matrix Projection2d::apply(const Matrix& rows) const {
  return (rows.rowwise() - mean.transpose()) * basis;
}

Eigen::Vector2d Projection2d::apply(const Vector& row) const { return basis.transpose() * (row - mean); }

void plot_latent2d(const Latent2dPlot& plot, const std::filesystem::path& path) {
  if (plot.points.cols() != 2) throw DimensionError("latent2d needs 2-D points");
  if (plot.points.rows() == 0) throw std::invalid_argument("latent2d: no points");
  if (plot.labels.size() != static_cast<std::size_t>(plot.points.rows())) throw DimensionError("label count mismatch");
  double x0 = plot.points.col(0).minCoeff(), x1 = plot.points.col(0).maxCoeff();
  double y0 = plot.points.col(1).minCoeff(), y1 = plot.points.col(1).maxCoeff();
  for (const auto& t : plot.trajectories) {
    for (const auto& p : t) {
      x0 = std::min(x0, p.x());
      x1 = std::max(x1, p.x());
      y0 = std::min(y0, p.y());
      y1 = std::max(y1, p.y());
    }
  }
  const auto f = Frame::around(x0, x1, y0, y1);
  const auto colors = class_palette(std::max(plot.class_count, std::size_t{1}));
  Svg svg;
  svg.axes(f, plot.title, "component 1", "component 2");
  for (Eigen::Index i = 0; i < plot.points.rows(); ++i) {
    const auto y = plot.labels[static_cast<std::size_t>(i)];
    svg.circle(f.px(plot.points(i, 0)), f.py(plot.points(i, 1)), 2.0, colors[y % colors.size()],
               " fill-opacity=\"0.5\"");
  }
  for (const auto& t : plot.trajectories) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : t) pts.emplace_back(f.px(p.x()), f.py(p.y()));
    svg.polyline(pts, "black", 0.8);
    if (!pts.empty()) svg.circle(pts.back().first, pts.back().second, 2.5, "black");
  }
  for (auto i : plot.highlighted) {
    const auto r = static_cast<Eigen::Index>(i);
    svg.circle(f.px(plot.points(r, 0)), f.py(plot.points(r, 1)), 4.0, "none",
               " stroke=\"black\" stroke-width=\"1.5\"");
  }
  for (std::size_t k = 0; k < plot.class_count; ++k) {
    const double y = kMargin + 14.0 * static_cast<double>(k);
    svg.circle(kWidth - kMargin + 8, y - 4, 4, colors[k]);
    svg.text(kWidth - kMargin + 15, y, std::to_string(k), "start", 10);
  }
  svg.save(path);
}

void plot_score_hist(const std::vector<double>& id_scores,
                     const std::vector<std::pair<std::string, std::vector<double>>>& ood_scores,
                     const std::filesystem::path& path, std::size_t bins, const std::string& title) {
  if (id_scores.empty()) throw std::invalid_argument("score_hist: empty ID score set");
  if (ood_scores.empty()) throw std::invalid_argument("score_hist: no OOD score sets");
  for (const auto& [name, s] : ood_scores) {
    if (s.empty()) throw std::invalid_argument("score_hist: empty score set '" + name + "'");
  }
  if (bins < 1) throw std::invalid_argument("score_hist: need at least one bin");
  double lo = *std::min_element(id_scores.begin(), id_scores.end());
  double hi = *std::max_element(id_scores.begin(), id_scores.end());
  for (const auto& [_, s] : ood_scores) {
    lo = std::min(lo, *std::min_element(s.begin(), s.end()));
    hi = std::max(hi, *std::max_element(s.begin(), s.end()));
  }
  if (!(hi > lo)) hi = lo + 1.0;
  auto histogram = [&](const std::vector<double>& s) {
    std::vector<double> h(bins, 0.0);
    for (double v : s) {
      auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
      h[std::min(b, bins - 1)] += 1.0 / static_cast<double>(s.size());
    }
    return h;
  };
  std::vector<std::pair<std::string, std::vector<double>>> hists{{"ID", histogram(id_scores)}};
  for (const auto& [name, s] : ood_scores) hists.emplace_back(name, histogram(s));
  double top = 0.0;
  for (const auto& [_, h] : hists) top = std::max(top, *std::max_element(h.begin(), h.end()));
  const Frame f{lo, hi, 0.0, top > 0 ? top * 1.05 : 1.0};
  const auto colors = class_palette(hists.size());
  Svg svg;
  svg.axes(f, title, "score", "fraction");
  const double bw = (hi - lo) / static_cast<double>(bins);
  for (std::size_t k = 0; k < hists.size(); ++k) {
    const auto& h = hists[k].second;
    for (std::size_t b = 0; b < bins; ++b) {
      if (h[b] <= 0.0) continue;
      const double xl = f.px(lo + bw * static_cast<double>(b));
      const double xr = f.px(lo + bw * static_cast<double>(b + 1));
      svg.rect(xl, f.py(h[b]), xr - xl, f.py(0.0) - f.py(h[b]), colors[k], 0.35);
    }
    svg.rect(kWidth - kMargin - 120, kMargin + 14.0 * static_cast<double>(k) - 9, 10, 10, colors[k], 0.8);
    svg.text(kWidth - kMargin - 105, kMargin + 14.0 * static_cast<double>(k), hists[k].first, "start", 10);
  }
  svg.save(path);
}

void plot_sweep_line(const std::string& x_label, const std::vector<double>& x,
                     const std::vector<SweepSeries>& series, const std::filesystem::path& path) {
  if (x.empty() || series.empty()) throw std::invalid_argument("sweep plot needs data");
  double y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
  for (const auto& s : series) {
    if (s.y.size() != x.size()) throw DimensionError("sweep series '" + s.name + "' length mismatch");
    for (double v : s.y) {
      if (std::isfinite(v)) {
        y0 = std::min(y0, v);
        y1 = std::max(y1, v);
      }
    }
  }
  if (!std::isfinite(y0)) {
    y0 = 0.0;
    y1 = 1.0;
  }
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const auto f = Frame::around(*xmin, *xmax, y0, y1);
  const auto colors = class_palette(series.size());
  Svg svg;
  svg.axes(f, "sweep over " + x_label, x_label, "metric");
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(series[k].y[i])) continue;
      pts.emplace_back(f.px(x[i]), f.py(series[k].y[i]));
      svg.circle(pts.back().first, pts.back().second, 3.0, colors[k]);
    }
    svg.polyline(pts, colors[k], 1.5);
    svg.text(kWidth - kMargin - 100, kMargin + 14.0 * static_cast<double>(k), series[k].name, "start", 10);
    svg.circle(kWidth - kMargin - 108, kMargin + 14.0 * static_cast<double>(k) - 4, 4, colors[k]);
  }
  svg.save(path);
}

}  // namespace bood
