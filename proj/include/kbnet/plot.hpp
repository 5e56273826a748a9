#pragma once

#include <string>
#include <vector>

namespace kbnet {

// Minimal line-chart renderer (white background, grid, markers, numeric tick
// labels in a builtin 5x7 font), written as an 8-bit RGB PNG.
void save_line_plot(const std::string& path, const std::string& x_label,
                    const std::string& y_label, const std::vector<double>& x,
                    const std::vector<double>& y);

}  // namespace kbnet
