#include "crvae/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "crvae/csv.hpp"
#include "crvae/image.hpp"

namespace crvae {
namespace {

const char* kPalette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44",
                          "#66ccee", "#aa3377", "#bbbbbb", "#222222"};
constexpr int kPaletteSize = 8;

std::string xml_escape(const std::string& s) {
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

std::string fmt(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

struct AxisScale {
  double lo = 0, hi = 1;
  std::vector<double> ticks;
};

AxisScale nice_scale(double lo, double hi) {
  AxisScale s;
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double span = hi - lo;
  const double raw_step = span / 5;
  const double mag = std::pow(10.0, std::floor(std::log10(raw_step)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (mag * m >= raw_step) {
      step = mag * m;
      break;
    }
  s.lo = std::floor(lo / step) * step;
  s.hi = std::ceil(hi / step) * step;
  for (double t = s.lo; t <= s.hi + step / 2; t += step) s.ticks.push_back(t);
  return s;
}

void open_svg(std::ofstream& out, int w, int h, const std::vector<std::string>& comments) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\" font-family=\"sans-serif\">\n";
  for (const auto& c : comments) out << "<!-- " << xml_escape(c) << " -->\n";
  out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
}

}  // namespace

void svg_line_chart(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<Series>& series, const std::vector<std::string>& comments) {
  if (series.empty()) throw ContractViolation("line chart: no series");
  const int W = 720, H = 440, ml = 80, mr = 160, mt = 50, mb = 60;
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
  double ylo = xlo, yhi = -xlo;
  for (const auto& s : series)
    for (size_t i = 0; i < s.xs.size(); ++i) {
      xlo = std::min(xlo, s.xs[i]);
      xhi = std::max(xhi, s.xs[i]);
      ylo = std::min(ylo, s.ys[i]);
      yhi = std::max(yhi, s.ys[i]);
    }
  AxisScale xs = nice_scale(xlo, xhi), ys = nice_scale(ylo, yhi);
  auto px = [&](double x) { return ml + (x - xs.lo) / (xs.hi - xs.lo) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - ys.lo) / (ys.hi - ys.lo) * (H - mt - mb); };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("plot: cannot write " + path);
  open_svg(out, W, H, comments);
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << xml_escape(title) << "</text>\n";
  // axes + grid
  for (double t : xs.ticks) {
    out << "<line x1=\"" << px(t) << "\" y1=\"" << py(ys.lo) << "\" x2=\"" << px(t) << "\" y2=\""
        << py(ys.hi) << "\" stroke=\"#eeeeee\"/>\n";
    out << "<text x=\"" << px(t) << "\" y=\"" << H - mb + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(t) << "</text>\n";
  }
  for (double t : ys.ticks) {
    out << "<line x1=\"" << px(xs.lo) << "\" y1=\"" << py(t) << "\" x2=\"" << px(xs.hi)
        << "\" y2=\"" << py(t) << "\" stroke=\"#eeeeee\"/>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << py(t) + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(t) << "</text>\n";
  }
  out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
      << H - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 16
      << "\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(x_label) << "</text>\n";
  out << "<text x=\"20\" y=\"" << (mt + H - mb) / 2 << "\" text-anchor=\"middle\" font-size=\""
      << 13 << "\" transform=\"rotate(-90 20 " << (mt + H - mb) / 2 << ")\">"
      << xml_escape(y_label) << "</text>\n";
  // series + legend
  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % kPaletteSize];
    std::ostringstream pts;
    for (size_t i = 0; i < series[s].xs.size(); ++i)
      pts << px(series[s].xs[i]) << "," << py(series[s].ys[i]) << " ";
    out << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\"/>\n";
    const int ly = mt + 18 * static_cast<int>(s);
    out << "<line x1=\"" << W - mr + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - mr + 34
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - mr + 40 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">"
        << xml_escape(series[s].name) << "</text>\n";
  }
  out << "</svg>\n";
}

void svg_scatter(const std::string& path, const std::string& title,
                 const std::vector<double>& xs_v, const std::vector<double>& ys_v,
                 const std::vector<int>& cluster_ids, const std::vector<std::string>& comments) {
  if (xs_v.size() != ys_v.size() || xs_v.size() != cluster_ids.size())
    throw ContractViolation("scatter: length mismatch");
  if (xs_v.empty()) throw ContractViolation("scatter: no points");
  const int W = 640, H = 520, ml = 70, mr = 120, mt = 50, mb = 50;
  AxisScale xs = nice_scale(*std::min_element(xs_v.begin(), xs_v.end()),
                            *std::max_element(xs_v.begin(), xs_v.end()));
  AxisScale ys = nice_scale(*std::min_element(ys_v.begin(), ys_v.end()),
                            *std::max_element(ys_v.begin(), ys_v.end()));
  auto px = [&](double x) { return ml + (x - xs.lo) / (xs.hi - xs.lo) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - ys.lo) / (ys.hi - ys.lo) * (H - mt - mb); };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("plot: cannot write " + path);
  open_svg(out, W, H, comments);
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << xml_escape(title) << "</text>\n";
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\""
      << H - mt - mb << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (size_t i = 0; i < xs_v.size(); ++i) {
    const char* color = kPalette[((cluster_ids[i] % kPaletteSize) + kPaletteSize) % kPaletteSize];
    out << "<circle cx=\"" << px(xs_v[i]) << "\" cy=\"" << py(ys_v[i])
        << "\" r=\"4\" fill=\"" << color << "\" fill-opacity=\"0.8\"/>\n";
  }
  std::vector<int> seen;
  for (int c : cluster_ids)
    if (std::find(seen.begin(), seen.end(), c) == seen.end()) seen.push_back(c);
  std::sort(seen.begin(), seen.end());
  for (size_t s = 0; s < seen.size(); ++s) {
    const char* color = kPalette[((seen[s] % kPaletteSize) + kPaletteSize) % kPaletteSize];
    const int ly = mt + 18 * static_cast<int>(s);
    out << "<circle cx=\"" << W - mr + 16 << "\" cy=\"" << ly << "\" r=\"5\" fill=\"" << color
        << "\"/>\n";
    out << "<text x=\"" << W - mr + 28 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">cluster "
        << seen[s] << "</text>\n";
  }
  out << "</svg>\n";
}

namespace {

// diverging blue -> white -> red over [lo, hi]
void heat_color(double v, double lo, double hi, int& r, int& g, int& b) {
  double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
  t = std::clamp(t, 0.0, 1.0);
  if (t < 0.5) {
    double u = t / 0.5;
    r = static_cast<int>(59 + u * (255 - 59));
    g = static_cast<int>(76 + u * (255 - 76));
    b = static_cast<int>(192 + u * (255 - 192));
  } else {
    double u = (t - 0.5) / 0.5;
    r = static_cast<int>(255 - u * (255 - 180));
    g = static_cast<int>(255 - u * (255 - 4));
    b = static_cast<int>(255 - u * (255 - 38));
  }
}

}  // namespace

void svg_heatmap(const std::string& path, const std::string& title,
                 const std::vector<std::string>& row_names,
                 const std::vector<std::string>& col_names, const Matd& values,
                 const std::vector<std::string>& comments) {
  if (values.rows() == 0 || values.cols() == 0) throw ContractViolation("heatmap: empty matrix");
  if (static_cast<Eigen::Index>(row_names.size()) != values.rows() ||
      static_cast<Eigen::Index>(col_names.size()) != values.cols())
    throw ContractViolation("heatmap: name/shape mismatch");
  const int cell_w = 92, cell_h = 48, ml = 170, mt = 90, mr = 30, mb = 30;
  const int W = ml + cell_w * static_cast<int>(values.cols()) + mr;
  const int H = mt + cell_h * static_cast<int>(values.rows()) + mb;
  const double lo = std::min(values.minCoeff(), -1e-12);
  const double hi = std::max(values.maxCoeff(), 1e-12);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("plot: cannot write " + path);
  open_svg(out, W, H, comments);
  out << "<text x=\"" << W / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">"
      << xml_escape(title) << "</text>\n";
  for (Eigen::Index j = 0; j < values.cols(); ++j)
    out << "<text x=\"" << ml + cell_w * j + cell_w / 2 << "\" y=\"" << mt - 10
        << "\" text-anchor=\"middle\" font-size=\"12\">"
        << xml_escape(col_names[static_cast<size_t>(j)]) << "</text>\n";
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    out << "<text x=\"" << ml - 10 << "\" y=\"" << mt + cell_h * i + cell_h / 2 + 4
        << "\" text-anchor=\"end\" font-size=\"12\">"
        << xml_escape(row_names[static_cast<size_t>(i)]) << "</text>\n";
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      int r, g, b;
      heat_color(values(i, j), lo, hi, r, g, b);
      out << "<rect x=\"" << ml + cell_w * j << "\" y=\"" << mt + cell_h * i << "\" width=\""
          << cell_w << "\" height=\"" << cell_h << "\" fill=\"rgb(" << r << "," << g << "," << b
          << ")\" stroke=\"white\"/>\n";
      const bool dark = (r + g + b) < 380;
      out << "<text x=\"" << ml + cell_w * j + cell_w / 2 << "\" y=\""
          << mt + cell_h * i + cell_h / 2 + 4 << "\" text-anchor=\"middle\" font-size=\"12\""
          << (dark ? " fill=\"white\"" : "") << ">" << csv::format_fixed(values(i, j), 4)
          << "</text>\n";
    }
  out << "</svg>\n";
}

void ppm_heatmap(const std::string& path, const Matd& values,
                 const std::vector<std::string>& comments) {
  if (values.rows() == 0 || values.cols() == 0) throw ContractViolation("heatmap: empty matrix");
  const int cell = 32;
  ImageBuf img(cell * static_cast<int>(values.rows()), cell * static_cast<int>(values.cols()));
  const double lo = std::min(values.minCoeff(), -1e-12);
  const double hi = std::max(values.maxCoeff(), 1e-12);
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      int r, g, b;
      heat_color(values(i, j), lo, hi, r, g, b);
      for (int y = 0; y < cell; ++y)
        for (int x = 0; x < cell; ++x) {
          img.at(static_cast<int>(i) * cell + y, static_cast<int>(j) * cell + x, 0) = r / 255.0;
          img.at(static_cast<int>(i) * cell + y, static_cast<int>(j) * cell + x, 1) = g / 255.0;
          img.at(static_cast<int>(i) * cell + y, static_cast<int>(j) * cell + x, 2) = b / 255.0;
        }
    }
  // write, then splice the comment lines into the PPM header
  write_ppm(path, img);
  if (!comments.empty()) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream body;
    body << in.rdbuf();
    std::string data = body.str();
    in.close();
    size_t nl = data.find('\n');  // after "P6"
    std::string head = data.substr(0, nl + 1);
    for (const auto& c : comments) head += "# " + c + "\n";
    std::ofstream out(path, std::ios::binary);
    out << head << data.substr(nl + 1);
  }
}

}  // namespace crvae
