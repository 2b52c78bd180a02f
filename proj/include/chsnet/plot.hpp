#pragma once

#include <filesystem>
#include <optional>
#include <opencv2/core.hpp>
#include <string>
#include <vector>

#include "chsnet/density_map.hpp"

namespace chsnet {

struct Panel {
  std::string label;
  double count = 0.0;
  cv::Mat image;  // CV_8UC3
};

// Color-mapped rendering of a density map at the given pixel size, scaled by
// its own maximum. An all-zero map renders as the colormap's zero color.
cv::Mat colorize(const DensityMap& map, int width, int height);

// "<label> <count to 1 decimal>"
std::string caption(const std::string& label, double count);

// Input image followed by one panel per map, each captioned with its count.
std::vector<Panel> make_panels(const cv::Mat& input, double true_count,
                               const std::vector<std::pair<std::string, DensityMap>>& maps);

// Concatenates the panels side by side with captions drawn above each.
cv::Mat compose(const std::vector<Panel>& panels);

// Writes <stem>.png and appends one row per panel to <dir>/captions.csv.
std::filesystem::path write_panel_set(const std::filesystem::path& dir, const std::string& stem,
                                      const std::vector<Panel>& panels);

}  // namespace chsnet
