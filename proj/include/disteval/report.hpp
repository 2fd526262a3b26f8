#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace disteval {

/// Shortest decimal form that parses back to the same double.
std::string format_number(double x);

/// Rectangular table written as RFC-4180 CSV (CRLF line ends, fields quoted
/// only when they contain a comma, quote, CR or LF).
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::string to_csv() const;
};

std::string csv_field(std::string_view field);

void write_text_file(const std::filesystem::path& path, std::string_view content);

struct Quartiles {
  double q1;
  double median;
  double q3;
};

/// Linear interpolation between order statistics (the "type 7" rule).
Quartiles quartiles(std::vector<double> values);
double median(std::vector<double> values);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Standalone SVG line chart on log-log axes with decade ticks. Nonpositive
/// points are skipped.
std::string loglog_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                       std::span<const PlotSeries> series);

}  // namespace disteval
