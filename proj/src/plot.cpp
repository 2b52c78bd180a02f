#include "chsnet/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "chsnet/error.hpp"

namespace chsnet {

namespace {
constexpr int kCaptionHeight = 22;
}

cv::Mat colorize(const DensityMap& map, int width, int height) {
  require(map.height > 0 && map.width > 0, ErrorKind::shape, "cannot plot an empty map");
  cv::Mat gray(map.height, map.width, CV_8UC1);
  const double peak = *std::max_element(map.cells.begin(), map.cells.end());
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) {
      const double v = peak > 0.0 ? std::max(0.0, map.at(y, x)) / peak : 0.0;
      gray.at<unsigned char>(y, x) = cv::saturate_cast<unsigned char>(v * 255.0);
    }
  cv::Mat big, color;
  cv::resize(gray, big, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
  cv::applyColorMap(big, color, cv::COLORMAP_JET);
  return color;
}

std::string caption(const std::string& label, double count) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", count);
  return label + " " + buf;
}

std::vector<Panel> make_panels(const cv::Mat& input, double true_count,
                               const std::vector<std::pair<std::string, DensityMap>>& maps) {
  require(!input.empty() && input.type() == CV_8UC3, ErrorKind::format,
          "plot input must be a 3-channel 8-bit image");
  std::vector<Panel> panels;
  panels.push_back({"input", true_count, input.clone()});
  for (const auto& [label, map] : maps)
    panels.push_back({label, total_count(map), colorize(map, input.cols, input.rows)});
  return panels;
}

cv::Mat compose(const std::vector<Panel>& panels) {
  require(!panels.empty(), ErrorKind::invalid_argument, "no panels to compose");
  std::vector<cv::Mat> columns;
  for (const auto& p : panels) {
    cv::Mat column(p.image.rows + kCaptionHeight, p.image.cols, CV_8UC3, cv::Scalar(255, 255, 255));
    p.image.copyTo(column(cv::Rect(0, kCaptionHeight, p.image.cols, p.image.rows)));
    cv::putText(column, caption(p.label, p.count), cv::Point(3, kCaptionHeight - 7),
                cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    columns.push_back(column);
  }
  cv::Mat out;
  cv::hconcat(columns, out);
  return out;
}

std::filesystem::path write_panel_set(const std::filesystem::path& dir, const std::string& stem,
                                      const std::vector<Panel>& panels) {
  std::filesystem::create_directories(dir);
  const auto path = dir / (stem + ".png");
  require(cv::imwrite(path.string(), compose(panels)), ErrorKind::io,
          "cannot write " + path.string());
  const auto csv = dir / "captions.csv";
  const bool fresh = !std::filesystem::exists(csv);
  std::ofstream out(csv, std::ios::app);
  require(out.good(), ErrorKind::io, "cannot write " + csv.string());
  if (fresh) out << "panel_set,panel,count,caption\n";
  for (const auto& p : panels) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", p.count);
    out << stem << ',' << p.label << ',' << buf << ',' << caption(p.label, p.count) << '\n';
  }
  return path;
}

}  // namespace chsnet
