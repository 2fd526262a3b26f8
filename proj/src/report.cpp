#include "disteval/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace disteval {

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string csv_field(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

void Table::add_row(std::vector<std::string> row) {
  if (row.size() != header.size()) {
    throw std::invalid_argument("table row has " + std::to_string(row.size()) + " fields, header has " +
                                std::to_string(header.size()));
  }
  rows.push_back(std::move(row));
}

std::string Table::to_csv() const {
  std::string out;
  const auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += csv_field(fields[i]);
    }
    out += "\r\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

double order_statistic(const std::vector<double>& sorted, double q) {
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

Quartiles quartiles(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("quartiles of an empty sample");
  std::sort(values.begin(), values.end());
  return {order_statistic(values, 0.25), order_statistic(values, 0.5), order_statistic(values, 0.75)};
}

double median(std::vector<double> values) { return quartiles(std::move(values)).median; }

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope needs two or more pairs");
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("loglog_slope needs positive values");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw std::invalid_argument("loglog_slope: all x values coincide");
  return sxy / sxx;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
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

std::string fixed(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << v;
  return os.str();
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

}  // namespace

std::string loglog_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                       std::span<const PlotSeries> series) {
  constexpr double width = 640, height = 420, left = 70, right = 160, top = 40, bottom = 50;
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!(s.x[i] > 0.0) || !(s.y[i] > 0.0)) continue;
      x_lo = std::min(x_lo, std::log10(s.x[i]));
      x_hi = std::max(x_hi, std::log10(s.x[i]));
      y_lo = std::min(y_lo, std::log10(s.y[i]));
      y_hi = std::max(y_hi, std::log10(s.y[i]));
    }
  }
  if (!std::isfinite(x_lo)) x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  x_lo = std::floor(x_lo), x_hi = std::max(std::ceil(x_hi), x_lo + 1);
  y_lo = std::floor(y_lo), y_hi = std::max(std::ceil(y_hi), y_lo + 1);
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  const auto px = [&](double lx) { return left + (lx - x_lo) / (x_hi - x_lo) * plot_w; };
  const auto py = [&](double ly) { return top + (y_hi - ly) / (y_hi - y_lo) * plot_h; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << fixed(left + plot_w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
     << xml_escape(title) << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double d = x_lo; d <= x_hi + 1e-9; d += 1.0) {
    os << "<line x1=\"" << fixed(px(d)) << "\" y1=\"" << top << "\" x2=\"" << fixed(px(d)) << "\" y2=\""
       << top + plot_h << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << fixed(px(d)) << "\" y=\"" << top + plot_h + 16 << "\" text-anchor=\"middle\">1e"
       << static_cast<int>(d) << "</text>\n";
  }
  for (double d = y_lo; d <= y_hi + 1e-9; d += 1.0) {
    os << "<line x1=\"" << left << "\" y1=\"" << fixed(py(d)) << "\" x2=\"" << left + plot_w << "\" y2=\""
       << fixed(py(d)) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << fixed(py(d) + 4) << "\" text-anchor=\"end\">1e"
       << static_cast<int>(d) << "</text>\n";
  }
  os << "<text x=\"" << fixed(left + plot_w / 2) << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
     << xml_escape(x_label) << "</text>\n";
  os << "<text transform=\"translate(18," << fixed(top + plot_h / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
     << xml_escape(y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!(s.x[i] > 0.0) || !(s.y[i] > 0.0)) continue;
      if (!first) os << ' ';
      os << fixed(px(std::log10(s.x[i]))) << ',' << fixed(py(std::log10(s.y[i])));
      first = false;
    }
    os << "\"/>\n";
    const double ly = top + 14 + 18 * static_cast<double>(k);
    os << "<line x1=\"" << left + plot_w + 10 << "\" y1=\"" << fixed(ly - 4) << "\" x2=\"" << left + plot_w + 30
       << "\" y2=\"" << fixed(ly - 4) << "\" stroke=\"" << colour << "\" stroke-width=\"1.5\"/>\n";
    os << "<text x=\"" << left + plot_w + 34 << "\" y=\"" << fixed(ly) << "\">" << xml_escape(s.label)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace disteval
