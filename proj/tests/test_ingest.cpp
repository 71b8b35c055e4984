#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include <unistd.h>

#include "hal/ingest.hpp"

using namespace hal;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("hal_ingest_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("HSEQ minimal instance is 16 bytes and parses") {
  TempDir tmp;
  const auto path = tmp.path / "one.hseq";
  core::Matrix m(1, 1);
  m << 0.5;
  ingest::write_matrix(path, m);
  CHECK(fs::file_size(path) == 16);
  auto back = ingest::read_matrix(path);
  CHECK(back.rows() == 1);
  CHECK(back.cols() == 1);
  CHECK(back(0, 0) == 0.5);
}

TEST_CASE("HSEQ round trip is bitwise exact") {
  TempDir tmp;
  rng::Rng r(8);
  core::Matrix m(13, 7);
  for (int i = 0; i < 13; ++i)
    for (int j = 0; j < 7; ++j) m(i, j) = r.normal();
  const auto p1 = tmp.path / "a.hseq";
  const auto p2 = tmp.path / "b.hseq";
  ingest::write_matrix(p1, m);
  ingest::write_matrix(p2, ingest::read_matrix(p1));
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("HSEQ error paths") {
  TempDir tmp;
  SUBCASE("bad magic") {
    const auto path = tmp.path / "bad.hseq";
    std::ofstream(path, std::ios::binary) << "XXXXrest-of-file-................";
    CHECK_THROWS_AS(ingest::read_matrix(path), std::invalid_argument);
  }
  SUBCASE("truncated payload") {
    const auto path = tmp.path / "trunc.hseq";
    core::Matrix m(2, 2);
    m.setOnes();
    ingest::write_matrix(path, m);
    fs::resize_file(path, fs::file_size(path) - 3);
    CHECK_THROWS_AS(ingest::read_matrix(path), std::invalid_argument);
  }
  SUBCASE("trailing bytes") {
    const auto path = tmp.path / "extra.hseq";
    core::Matrix m(1, 1);
    m.setOnes();
    ingest::write_matrix(path, m);
    std::ofstream(path, std::ios::binary | std::ios::app) << "JUNK";
    CHECK_THROWS_AS(ingest::read_matrix(path), std::invalid_argument);
  }
  SUBCASE("nonfinite entry is reported with its index") {
    const auto path = tmp.path / "nan.hseq";
    std::ofstream out(path, std::ios::binary);
    out.write("HSEQ", 4);
    std::uint32_t one = 1, two = 2;
    out.write(reinterpret_cast<char*>(&one), 4);
    out.write(reinterpret_cast<char*>(&two), 4);
    float vals[2] = {1.0f, std::numeric_limits<float>::quiet_NaN()};
    out.write(reinterpret_cast<char*>(vals), 8);
    out.close();
    CHECK_THROWS_WITH_AS(ingest::read_matrix(path),
                         doctest::Contains("nonfinite value at (0,1)"), std::invalid_argument);
  }
}

TEST_CASE("frame labels and transcripts") {
  TempDir tmp;
  ingest::ClassMap classes{{"bg", "walk", "pour"}};

  SUBCASE("names map to ids, trailing newline tolerated") {
    const auto path = tmp.path / "v.labels";
    std::ofstream(path) << "bg\npour\npour\n";
    CHECK(ingest::read_frame_labels(path, classes) == std::vector<int>{0, 2, 2});
  }
  SUBCASE("unknown class names the line") {
    const auto path = tmp.path / "v.labels";
    std::ofstream(path) << "bg\nfly\n";
    CHECK_THROWS_WITH_AS(ingest::read_frame_labels(path, classes),
                         doctest::Contains("unknown class name 'fly' at line 2"),
                         std::invalid_argument);
  }
  SUBCASE("empty file errors") {
    const auto path = tmp.path / "v.labels";
    std::ofstream(path) << "";
    CHECK_THROWS(ingest::read_frame_labels(path, classes));
  }
  SUBCASE("transcript adjacency") {
    const auto path = tmp.path / "v.transcript";
    std::ofstream(path) << "bg\npour\nbg\n";
    auto tr = ingest::read_transcript(path, classes);
    CHECK(tr.entries == std::vector<int>{0, 2, 0});

    const auto rep = tmp.path / "rep.transcript";
    std::ofstream(rep) << "pour\npour\n";
    CHECK_THROWS(ingest::read_transcript(rep, classes, false));
    CHECK_NOTHROW(ingest::read_transcript(rep, classes, true));

    const auto single = tmp.path / "one.transcript";
    std::ofstream(single) << "walk\n";
    CHECK(ingest::read_transcript(single, classes).size() == 1);
  }
}

TEST_CASE("load_split") {
  TempDir tmp;
  ingest::ClassMap classes{{"bg", "a"}};
  ingest::write_class_map(tmp.path / "classes.txt", classes);

  core::Matrix feats(3, 2);
  feats << 1, 2, 3, 4, 5, 6;
  for (const char* id : {"v0", "v1"}) {
    ingest::write_matrix(tmp.path / (std::string(id) + ".hseq"), feats);
    std::ofstream(tmp.path / (std::string(id) + ".labels")) << "bg\na\na\n";
    std::ofstream(tmp.path / (std::string(id) + ".transcript")) << "bg\na\n";
  }
  std::ofstream(tmp.path / "train.index")
      << "v0\tv0.hseq\tv0.labels\tv0.transcript\n"
      << "v1\tv1.hseq\tv1.labels\tv1.transcript\n";

  SUBCASE("valid index loads in order") {
    auto idx = ingest::load_split(tmp.path / "train.index");
    REQUIRE(idx.entries.size() == 2);
    CHECK(idx.entries[0].video_id == "v0");
    CHECK(idx.entries[1].video_id == "v1");
    CHECK(idx.class_map.size() == 2);
    auto seq = ingest::load_sequence(idx.entries[0], idx.class_map);
    CHECK(seq.features.T() == 3);
    CHECK(seq.gt_labels == std::vector<int>{0, 1, 1});
    CHECK_FALSE(seq.latents.has_value());
  }
  SUBCASE("duplicate video id errors") {
    std::ofstream(tmp.path / "dup.index")
        << "v0\tv0.hseq\tv0.labels\tv0.transcript\n"
        << "v0\tv0.hseq\tv0.labels\tv0.transcript\n";
    CHECK_THROWS(ingest::load_split(tmp.path / "dup.index"));
  }
  SUBCASE("missing file errors") {
    std::ofstream(tmp.path / "missing.index") << "v9\tv9.hseq\tv9.labels\tv9.transcript\n";
    CHECK_THROWS(ingest::load_split(tmp.path / "missing.index"));
  }
  SUBCASE("length mismatch truncates unless strict") {
    std::ofstream(tmp.path / "v0.labels") << "bg\na\na\nbg\na\n";  // labels longer
    auto idx = ingest::load_split(tmp.path / "train.index");
    auto seq = ingest::load_sequence(idx.entries[0], idx.class_map, /*strict=*/false);
    CHECK(seq.features.T() == 3);
    CHECK(seq.gt_labels.size() == 3);
    CHECK_THROWS(ingest::load_sequence(idx.entries[0], idx.class_map, /*strict=*/true));
  }
}

TEST_CASE("raw float32 converter") {
  TempDir tmp;
  const auto raw = tmp.path / "feat.raw";
  {
    std::ofstream out(raw, std::ios::binary);
    float vals[6] = {1, 2, 3, 4, 5, 6};
    out.write(reinterpret_cast<char*>(vals), sizeof(vals));
  }
  const auto hseq = tmp.path / "feat.hseq";
  ingest::convert_raw_to_hseq(raw, hseq, 3);
  auto m = ingest::read_matrix(hseq);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m(1, 2) == 6.0);
  CHECK_THROWS(ingest::convert_raw_to_hseq(raw, hseq, 4));  // size not divisible
}
