#include "factr/eval/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace factr::eval::svg {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string header(int width, int height) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) + " " +
         std::to_string(height) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

// white -> dark blue
std::string shade(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255 - 227 * t));
  const int g = static_cast<int>(std::lround(255 - 196 * t));
  const int b = static_cast<int>(std::lround(255 - 125 * t));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::string escape(const std::string& text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string line_chart(const std::string& title, const std::vector<Series>& series, int width,
                       int height) {
  const double left = 60, right = 20, top = 30, bottom = 40;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  const double pw = width - left - right, ph = height - top - bottom;
  auto x = [&](std::size_t i) { return left + (n > 1 ? pw * static_cast<double>(i) / static_cast<double>(n - 1) : 0); };
  auto y = [&](double v) { return top + ph * (hi - v) / (hi - lo); };

  std::ostringstream os;
  os << header(width, height);
  os << "<text x=\"" << num(left) << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
     << escape(title) << "</text>\n";
  os << "<g stroke=\"#999\" stroke-width=\"1\" fill=\"none\">\n";
  os << "<line x1=\"" << num(left) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(left + pw) << "\" y2=\""
     << num(top + ph) << "\"/>\n";
  os << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\""
     << num(top + ph) << "\"/>\n</g>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"10\" fill=\"#333\">\n";
  os << "<text x=\"4\" y=\"" << num(top + 4) << "\">" << num(hi) << "</text>\n";
  os << "<text x=\"4\" y=\"" << num(top + ph) << "\">" << num(lo) << "</text>\n";
  os << "<text x=\"" << num(left) << "\" y=\"" << num(height - 22.0) << "\">0</text>\n";
  os << "<text x=\"" << num(left + pw - 20) << "\" y=\"" << num(height - 22.0) << "\">" << (n ? n - 1 : 0)
     << "</text>\n</g>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    os << "<polyline class=\"series\" data-label=\"" << escape(s.label) << "\" fill=\"none\" stroke=\""
       << escape(s.color) << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.values.size(); ++i) os << (i ? " " : "") << num(x(i)) << ',' << num(y(s.values[i]));
    os << "\"/>\n";
    const double lx = left + 10 + 120 * static_cast<double>(k);
    os << "<rect x=\"" << num(lx) << "\" y=\"" << num(height - 14.0) << "\" width=\"10\" height=\"4\" fill=\""
       << escape(s.color) << "\"/>\n";
    os << "<text x=\"" << num(lx + 14) << "\" y=\"" << num(height - 9.0)
       << "\" font-family=\"sans-serif\" font-size=\"10\">" << escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string heatmap(const std::string& title, const std::vector<double>& values, std::size_t rows,
                    std::size_t cols, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels, double lo, double hi) {
  if (lo == hi && !values.empty()) {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
  }
  const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
  const double cell = std::clamp(480.0 / static_cast<double>(std::max(rows, cols)), 6.0, 36.0);
  const double left = 70, top = 40;
  const int width = static_cast<int>(left + cell * static_cast<double>(cols) + 20);
  const int height = static_cast<int>(top + cell * static_cast<double>(rows) + 40);

  std::ostringstream os;
  os << header(width, height);
  os << "<text x=\"" << num(left) << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
     << escape(title) << "</text>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"10\" fill=\"#333\">\n";
  for (std::size_t r = 0; r < rows && r < row_labels.size(); ++r)
    os << "<text x=\"4\" y=\"" << num(top + cell * (static_cast<double>(r) + 0.7)) << "\">"
       << escape(row_labels[r]) << "</text>\n";
  for (std::size_t c = 0; c < cols && c < col_labels.size(); ++c)
    os << "<text x=\"" << num(left + cell * static_cast<double>(c)) << "\" y=\""
       << num(top + cell * static_cast<double>(rows) + 14) << "\">" << escape(col_labels[c]) << "</text>\n";
  os << "</g>\n<g class=\"cells\">\n";
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = values[r * cols + c];
      os << "<rect x=\"" << num(left + cell * static_cast<double>(c)) << "\" y=\""
         << num(top + cell * static_cast<double>(r)) << "\" width=\"" << num(cell) << "\" height=\""
         << num(cell) << "\" fill=\"" << shade((v - lo) / span) << "\"><title>" << num(v)
         << "</title></rect>\n";
    }
  os << "</g>\n</svg>\n";
  return os.str();
}

}  // namespace factr::eval::svg
