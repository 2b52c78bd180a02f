#include "chsnet/annotations.hpp"

#include <fstream>
#include <json.hpp>

#include "chsnet/error.hpp"

namespace chsnet {

using nlohmann::json;

AnnotationRecord parse_annotation_record(std::string_view line, std::string_view source,
                                         int line_number) {
  const std::string where = std::string(source) + ":" + std::to_string(line_number) + ": ";
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::format, where + "malformed JSON (" + e.what() + ")");
  }
  require(doc.is_object(), ErrorKind::format, where + "record must be an object");
  require(doc.contains("image") && doc["image"].is_string(), ErrorKind::format,
          where + "missing string field 'image'");
  require(doc.contains("points") && doc["points"].is_array(), ErrorKind::format,
          where + "missing array field 'points'");

  AnnotationRecord record;
  record.image = doc["image"].get<std::string>();
  for (const char* key : {"width", "height"}) {
    if (!doc.contains(key)) continue;
    require(doc[key].is_number_integer() && doc[key].get<long long>() > 0, ErrorKind::format,
            where + "'" + key + "' must be a positive integer");
  }
  record.annotations.image_width = doc.value("width", 0);
  record.annotations.image_height = doc.value("height", 0);

  const auto& points = doc["points"];
  record.annotations.points.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    require(p.is_array() && p.size() == 2 && p[0].is_number() && p[1].is_number(),
            ErrorKind::format, where + "point " + std::to_string(i) + " is not [x, y]");
    record.annotations.points.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  if (record.annotations.image_width > 0 && record.annotations.image_height > 0) {
    try {
      record.annotations.validate();
    } catch (const Error& e) {
      fail(ErrorKind::format, where + e.what());
    }
  }
  return record;
}

std::string format_annotation_record(const AnnotationRecord& record) {
  json doc;
  doc["image"] = record.image;
  if (record.annotations.image_width > 0) doc["width"] = record.annotations.image_width;
  if (record.annotations.image_height > 0) doc["height"] = record.annotations.image_height;
  json points = json::array();
  for (const Point& p : record.annotations.points) points.push_back({p.x, p.y});
  doc["points"] = std::move(points);
  return doc.dump();
}

std::vector<AnnotationRecord> read_annotation_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open annotation file " + path.string());
  std::vector<AnnotationRecord> records;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    records.push_back(parse_annotation_record(line, path.string(), line_number));
  }
  return records;
}

void write_annotation_file(const std::filesystem::path& path,
                           std::span<const AnnotationRecord> records) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::io, "cannot open " + path.string() + " for writing");
  for (const auto& record : records) out << format_annotation_record(record) << '\n';
  require(out.good(), ErrorKind::io, "failed writing " + path.string());
}

}  // namespace chsnet
