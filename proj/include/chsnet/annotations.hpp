#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chsnet/density_map.hpp"

namespace chsnet {

// One line of an annotation file:
//   {"image": "images/0003.png", "width": 128, "height": 128, "points": [[x, y], ...]}
// `width`/`height` are optional; when absent they are left at 0 and the
// dataset loader fills them from the decoded image.
struct AnnotationRecord {
  std::string image;
  PointAnnotations annotations;
  bool operator==(const AnnotationRecord&) const = default;
};

// Errors carry "<source>:<line>: " prefixes.
AnnotationRecord parse_annotation_record(std::string_view line, std::string_view source,
                                         int line_number);
std::string format_annotation_record(const AnnotationRecord& record);

std::vector<AnnotationRecord> read_annotation_file(const std::filesystem::path& path);
void write_annotation_file(const std::filesystem::path& path,
                           std::span<const AnnotationRecord> records);

}  // namespace chsnet
