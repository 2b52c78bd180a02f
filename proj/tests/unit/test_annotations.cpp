#include <doctest.h>

#include <fstream>

#include "chsnet/annotations.hpp"
#include "chsnet/error.hpp"
#include "support.hpp"

using namespace chsnet;

TEST_SUITE("annotations") {
  TEST_CASE("parses a record") {
    const auto r = parse_annotation_record(
        R"({"image": "images/0001.png", "width": 64, "height": 32, "points": [[1.5, 2], [60, 31.9]]})", "a.jsonl", 1);
    CHECK(r.image == "images/0001.png");
    CHECK(r.annotations.image_width == 64);
    REQUIRE(r.annotations.count() == 2);
    CHECK(r.annotations.points[0] == Point{1.5, 2.0});
  }

  TEST_CASE("format and parse round-trip") {
    AnnotationRecord r{"images/x.png", {{{0.1, 0.2}, {3.0000000000000004, 7}}, 16, 16}};
    CHECK(parse_annotation_record(format_annotation_record(r), "x", 1) == r);
  }

  TEST_CASE("malformed records carry their line number") {
    const char* bad[] = {
        R"({"image": "a.png", "points": [[1, 2, 3]]})",
        R"({"points": []})",
        R"({"image": "a.png", "points": [["x", 1]]})",
        R"({"image": "a.png", "width": 8, "height": 8, "points": [[9, 1]]})",
        R"(not json)",
    };
    for (const char* line : bad) {
      try {
        parse_annotation_record(line, "train.jsonl", 7);
        FAIL("accepted: " << line);
      } catch (const Error& e) {
        CHECK(std::string(e.what()).rfind("train.jsonl:7: ", 0) == 0);
      }
    }
  }

  TEST_CASE("files skip blank lines and report the failing line") {
    testing::TempDir dir("ann");
    const auto path = dir.path / "a.jsonl";
    std::ofstream(path) << R"({"image": "a.png", "points": []})" << "\n\n"
                        << R"({"image": "b.png", "points": [[1, 1]]})" << "\n";
    CHECK(read_annotation_file(path).size() == 2);
    std::ofstream(path, std::ios::app) << "{\n";
    try {
      read_annotation_file(path);
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find(":4: ") != std::string::npos);
    }
  }
}
