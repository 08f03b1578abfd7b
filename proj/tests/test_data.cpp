// Copyright 2026 The tgazsr Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <set>

#include "support.hpp"
#include "tgazsr/data.hpp"
#include "tgazsr/png_io.hpp"

using namespace tgazsr;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ErrorCode load_error(const std::filesystem::path& p) {
  try {
    load_manifest(p);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("manifest loaded");
  return ErrorCode::io;
}

// Two 2x2 images in a fresh directory.
std::filesystem::path two_image_dir(const std::string& name) {
  const auto dir = test::temp_dir(name);
  const ImageShape s{3, 2, 2};
  write_png_rgb(dir / "a.png", std::vector<double>(12, 0.0), s);
  write_png_rgb(dir / "b.png", std::vector<double>(12, 1.0), s);
  return dir;
}

}  // namespace

TEST_CASE("two-entry manifest") {
  const auto dir = two_image_dir("manifest_ok");
  write_text(dir / "m.json",
             R"({"classes": ["cat", "dog"], "image_size": [2, 2], "entries": [["a.png", 0], ["b.png", 1]]})");
  const DatasetManifest m = load_manifest(dir / "m.json");
  CHECK(m.entries.size() == 2);
  const Dataset d = load_dataset(m);
  CHECK(d.size() == 2);
  CHECK(d.labels == std::vector<int>{0, 1});
  CHECK(d.class_names == std::vector<std::string>{"cat", "dog"});
  CHECK(d.pixels(0, 5) == 0.0);
  CHECK(d.pixels(1, 11) == 1.0);
}

TEST_CASE("manifest errors") {
  const auto dir = two_image_dir("manifest_bad");
  write_text(dir / "range.json",
             R"({"classes": ["cat", "dog"], "image_size": [2, 2], "entries": [["a.png", 0], ["b.png", 2]]})");
  CHECK(load_error(dir / "range.json") == ErrorCode::label_out_of_range);
  write_text(dir / "neg.json",
             R"({"classes": ["cat"], "image_size": [2, 2], "entries": [["a.png", -1]]})");
  CHECK(load_error(dir / "neg.json") == ErrorCode::label_out_of_range);
  write_text(dir / "empty.json", R"({"classes": ["cat"], "image_size": [2, 2], "entries": []})");
  CHECK(load_error(dir / "empty.json") == ErrorCode::empty_dataset);
  write_text(dir / "gone.json",
             R"({"classes": ["cat"], "image_size": [2, 2], "entries": [["nope.png", 0]]})");
  CHECK(load_error(dir / "gone.json") == ErrorCode::missing_file);
  CHECK(load_error(dir / "absent.json") == ErrorCode::missing_file);
  write_text(dir / "syntax.json", R"({"classes": ["cat"], )");
  CHECK(load_error(dir / "syntax.json") == ErrorCode::malformed_manifest);
  write_text(dir / "entry.json", R"({"classes": ["cat"], "image_size": [2, 2], "entries": [["a.png"]]})");
  CHECK(load_error(dir / "entry.json") == ErrorCode::malformed_manifest);
  write_text(dir / "size.json", R"({"classes": ["cat"], "image_size": [2], "entries": [["a.png", 0]]})");
  CHECK(load_error(dir / "size.json") == ErrorCode::malformed_manifest);
  write_text(dir / "geom.json", R"({"classes": ["cat"], "image_size": [4, 4], "entries": [["a.png", 0]]})");
  CHECK_THROWS_AS(load_dataset(load_manifest(dir / "geom.json")), Error);
}

TEST_CASE("manifest round trip is byte-identical") {
  const auto dir = two_image_dir("manifest_rt");
  DatasetManifest m;
  m.root = dir;
  m.class_names = {"cat", "dog \"big\""};
  m.height = m.width = 2;
  m.entries = {{"a.png", 1}, {"b.png", 0}};
  const std::string text = write_manifest(m);
  save_manifest(dir / "m.json", m);
  CHECK(slurp(dir / "m.json") == text);
  const DatasetManifest back = load_manifest(dir / "m.json");
  CHECK(back.class_names == m.class_names);
  CHECK(back.entries == m.entries);
  CHECK(write_manifest(back) == text);
}

TEST_CASE("synthetic shapes are deterministic") {
  const Dataset a = synthetic_dataset("shapes", 20, 5);
  const Dataset b = synthetic_dataset("shapes", 20, 5);
  const Dataset c = synthetic_dataset("shapes", 20, 6);
  CHECK(a.pixels == b.pixels);
  CHECK(a.labels == b.labels);
  CHECK_FALSE(a.pixels == c.pixels);
  CHECK(a.class_names == std::vector<std::string>{"disk", "square", "triangle", "plus"});
  for (double v : a.pixels.data) CHECK((v >= 0.0 && v <= 1.0));
  CHECK(std::set<int>(a.labels.begin(), a.labels.end()).size() == 4);
  CHECK_THROWS_AS(synthetic_dataset("digits", 4, 0), Error);
  CHECK_THROWS_AS(synthetic_dataset("shapes", 0, 0), Error);
}

TEST_CASE("held-out shape classes") {
  ShapesOptions held;
  held.first_class = 4;
  const Dataset d = synthetic_dataset("shapes", 8, 1, held);
  CHECK(d.class_names == std::vector<std::string>{"ring", "bar", "diamond", "cross"});
  CHECK(d.labels[5] == 1);
  CHECK(d.id != synthetic_dataset("shapes", 8, 1).id);
  held.first_class = 5;
  CHECK_THROWS_AS(synthetic_dataset("shapes", 8, 1, held), Error);
}

TEST_CASE("seeded batching") {
  const Dataset d = synthetic_dataset("shapes", 10, 2);
  const BatchSequence s = batches(d, 4, 7, true);
  REQUIRE(s.size() == 3);
  CHECK(s[2].size() == 2);
  std::multiset<double> seen;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const ImageBatch b = s[i];
    for (std::size_t r = 0; r < b.size(); ++r) seen.insert(b.pixels(r, 0) + 10.0 * b.labels[r]);
  }
  std::multiset<double> want;
  for (std::size_t r = 0; r < d.size(); ++r) want.insert(d.pixels(r, 0) + 10.0 * d.labels[r]);
  CHECK(seen == want);
  CHECK(sample_order(10, 7, true) == sample_order(10, 7, true));
  CHECK_FALSE(sample_order(10, 7, true) == sample_order(10, 8, true));
  const std::vector<std::size_t> plain = sample_order(4, 7, false);
  CHECK(plain == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(batches(d, 4, 0, false)[0].labels == std::vector<int>{0, 1, 2, 3});
  CHECK_THROWS_AS(batches(d, 0, 0, false), Error);
}

TEST_CASE("png round trip at 8 bits") {
  const auto dir = test::temp_dir("png_rt");
  const ImageShape s{3, 3, 5};
  std::vector<double> px(s.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(i * 7 % 256) / 255.0;
  write_png_rgb(dir / "x.png", px, s);
  ImageShape got;
  const Tensor back = read_png_rgb(dir / "x.png", got);
  CHECK(got == s);
  for (std::size_t i = 0; i < px.size(); ++i) CHECK(std::abs(back.data[i] - px[i]) < 1e-12);
  CHECK_THROWS_AS(read_png_rgb(dir / "missing.png", got), Error);
}
