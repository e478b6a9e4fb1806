#pragma once

#include <string>
#include <vector>

namespace factr::eval::svg {

struct Series {
  std::string label;
  std::string color;
  std::vector<double> values;
};

/// Line chart of equally spaced series sharing one x axis.
std::string line_chart(const std::string& title, const std::vector<Series>& series,
                       int width = 720, int height = 300);

/// Heatmap of a row-major matrix. Colour scale spans [lo, hi]; pass
/// lo == hi to scale to the matrix range.
std::string heatmap(const std::string& title, const std::vector<double>& values, std::size_t rows,
                    std::size_t cols, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels, double lo = 0, double hi = 0);

/// Escapes text for element content and attribute values.
std::string escape(const std::string& text);

}  // namespace factr::eval::svg
