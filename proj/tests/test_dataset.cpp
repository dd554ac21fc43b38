/**
 * Copyright 2026 The WordRec Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "test_util.hpp"
#include "wordrec/dataset.hpp"
#include "wordrec/synth.hpp"

using namespace wordrec;
namespace fs = std::filesystem;
using dataset::WordSample;

namespace {

WordSample make_sample(const std::u32string& text, const std::string& id) {
  WordSample s;
  s.image = Image(4, 4, 200);
  s.transcript = text;
  s.source_id = id;
  return s;
}

/// Two pages: 3 + 2 word entries, page0 grayscale and page1 RGB.
fs::path write_two_page_manifest(const fs::path& dir) {
  Image page0(60, 150, 255);
  for (int r = 10; r < 30; ++r)
    for (int c = 5; c < 45; ++c) page0.at(r, c) = static_cast<uint8_t>(r + c);
  png::write_gray(dir / "page0.png", page0);

  std::vector<uint8_t> rgb(static_cast<size_t>(40) * 120 * 3);
  Rng rng(3);
  for (auto& b : rgb) b = static_cast<uint8_t>(rng.int_in(0, 255));
  testutil::write_rgb_png(dir / "page1.png", 40, 120, rgb);

  testutil::write_file(dir / "manifest.json", R"({
    "pages": [
      {"image": "page0.png", "words": [
        {"bbox": [5, 10, 40, 20], "text": "abc"},
        {"bbox": [0, 0, 150, 60], "text": "de"},
        {"bbox": [100, 30, 20, 25], "text": "f"}
      ]},
      {"image": "page1.png", "words": [
        {"bbox": [2, 3, 30, 20], "text": "gh"},
        {"bbox": [50, 5, 60, 30], "text": "ij"}
      ]}
    ]
  })");
  return dir / "manifest.json";
}

}  // namespace

TEST_CASE("manifest with two pages yields five word entries") {
  fs::path dir = testutil::fresh_dir("wordrec_ds_manifest");
  auto pages = dataset::load_manifest(write_two_page_manifest(dir));
  REQUIRE(pages.size() == 2);
  size_t words = 0;
  for (const auto& p : pages) words += p.words.size();
  REQUIRE(words == 5);
}

TEST_CASE("a page with an empty word list is accepted") {
  fs::path dir = testutil::fresh_dir("wordrec_ds_empty_words");
  png::write_gray(dir / "p.png", Image(10, 10, 255));
  testutil::write_file(dir / "m.json",
                       R"({"pages": [{"image": "p.png", "words": []}]})");
  auto pages = dataset::load_manifest(dir / "m.json");
  REQUIRE(pages.size() == 1);
  REQUIRE(pages[0].words.empty());
  REQUIRE(dataset::extract_words(pages).empty());
}

TEST_CASE("manifest schema violations carry page and field context") {
  fs::path dir = testutil::fresh_dir("wordrec_ds_bad");
  png::write_gray(dir / "p.png", Image(10, 10, 255));

  testutil::write_file(dir / "zero_width.json",
                       R"({"pages": [{"image": "p.png", "words": [{"bbox": [0,0,0,5], "text": "a"}]}]})");
  REQUIRE_THROWS_WITH(dataset::load_manifest(dir / "zero_width.json"),
                      Catch::Matchers::ContainsSubstring("pages[0].words[0].bbox"));

  testutil::write_file(dir / "oob.json",
                       R"({"pages": [{"image": "p.png", "words": [{"bbox": [8,8,5,5], "text": "a"}]}]})");
  REQUIRE_THROWS_WITH(dataset::load_manifest(dir / "oob.json"),
                      Catch::Matchers::ContainsSubstring("outside"));

  testutil::write_file(dir / "empty_text.json",
                       R"({"pages": [{"image": "p.png", "words": [{"bbox": [0,0,5,5], "text": ""}]}]})");
  REQUIRE_THROWS_WITH(dataset::load_manifest(dir / "empty_text.json"),
                      Catch::Matchers::ContainsSubstring("non-empty"));

  testutil::write_file(dir / "missing_image.json",
                       R"({"pages": [{"image": "nope.png", "words": []}]})");
  REQUIRE_THROWS_WITH(dataset::load_manifest(dir / "missing_image.json"),
                      Catch::Matchers::ContainsSubstring("not found"));

  REQUIRE_THROWS(dataset::load_manifest(dir / "does_not_exist.json"));
}

TEST_CASE("extract_words crops exactly to the bbox") {
  fs::path dir = testutil::fresh_dir("wordrec_ds_extract");
  auto pages = dataset::load_manifest(write_two_page_manifest(dir));
  auto samples = dataset::extract_words(pages);
  REQUIRE(samples.size() == 5);
  REQUIRE(samples[0].image.rows == 20);
  REQUIRE(samples[0].image.cols == 40);
  REQUIRE(samples[0].source_id == "page0.png#0");

  // Full-page bbox reproduces the page.
  Image page0 = png::read_gray(dir / "page0.png");
  REQUIRE(samples[1].image == page0);
}

TEST_CASE("rgb pages collapse to the per-pixel channel mean") {
  fs::path dir = testutil::fresh_dir("wordrec_ds_rgb");
  const int rows = 20, cols = 30;
  std::vector<uint8_t> rgb(static_cast<size_t>(rows) * cols * 3);
  Rng rng(9);
  for (auto& b : rgb) b = static_cast<uint8_t>(rng.int_in(0, 255));
  testutil::write_rgb_png(dir / "p.png", rows, cols, rgb);
  testutil::write_file(dir / "m.json",
                       R"({"pages": [{"image": "p.png", "words": [{"bbox": [0,0,30,20], "text": "x"}]}]})");
  auto samples = dataset::extract_words(dataset::load_manifest(dir / "m.json"));
  REQUIRE(samples.size() == 1);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const uint8_t* px = &rgb[(static_cast<size_t>(r) * cols + c) * 3];
      double mean = (static_cast<double>(px[0]) + px[1] + px[2]) / 3.0;
      REQUIRE(samples[0].image.at(r, c) == clamp_u8(mean));
    }
}

TEST_CASE("length filter keeps at-most-ten and is order preserving") {
  std::vector<WordSample> in;
  in.push_back(make_sample(U"abcdefghijk", "a"));  // 11: dropped
  in.push_back(make_sample(U"abcdefghij", "b"));   // 10: kept
  in.push_back(make_sample(U"x", "c"));
  auto out = dataset::filter_by_length(in);
  REQUIRE(out.size() == 2);
  REQUIRE(out[0].source_id == "b");
  REQUIRE(out[1].source_id == "c");
  REQUIRE(dataset::filter_by_length({}).empty());
}

TEST_CASE("filtering is idempotent") {
  Rng rng(4);
  std::vector<WordSample> in;
  for (int i = 0; i < 50; ++i) {
    std::u32string t;
    int len = static_cast<int>(rng.int_in(1, 14));
    for (int k = 0; k < len; ++k)
      t.push_back(static_cast<char32_t>(U'a' + rng.int_in(0, 5)));
    in.push_back(make_sample(t, "s" + std::to_string(i)));
  }
  auto once = dataset::filter_by_length(in);
  auto twice = dataset::filter_by_length(once);
  REQUIRE(once.size() == twice.size());
  for (size_t i = 0; i < once.size(); ++i)
    REQUIRE(once[i].source_id == twice[i].source_id);
}

TEST_CASE("charset is the sorted symbol union with blank one past the end") {
  auto cs = dataset::build_charset({make_sample(U"ab", "1"), make_sample(U"bc", "2")});
  REQUIRE(cs.size() == 3);
  REQUIRE(cs.blank_id() == 3);
  REQUIRE(cs.symbols() == std::vector<char32_t>{U'a', U'b', U'c'});

  auto single = dataset::build_charset({make_sample(U"aaa", "1")});
  REQUIRE(single.size() == 1);

  REQUIRE_THROWS(dataset::build_charset({}));
}

TEST_CASE("charset construction is order invariant") {
  std::vector<WordSample> v = {make_sample(U"cab", "1"), make_sample(U"bd", "2"),
                               make_sample(U"aa", "3")};
  std::vector<WordSample> w = {v[2], v[0], v[1]};
  REQUIRE(dataset::build_charset(v) == dataset::build_charset(w));
}

TEST_CASE("encode and decode are mutually inverse") {
  dataset::Charset cs({U'a', U'b', U'c'});
  REQUIRE(cs.decode(cs.encode(U"abc")) == U"abc");
  REQUIRE(cs.encode(U"").empty());
  REQUIRE_THROWS(cs.encode(U"xyz"));
  REQUIRE_THROWS(cs.decode({3}));   // blank is not decodable
  REQUIRE_THROWS(cs.decode({-1}));
  for (int i = 0; i < cs.size(); ++i)
    REQUIRE(cs.encode_symbol(cs.decode_id(i)) == i);
}

TEST_CASE("split sizes follow the floor rule") {
  auto make_n = [](int n) {
    std::vector<WordSample> v;
    for (int i = 0; i < n; ++i) v.push_back(make_sample(U"a", "s" + std::to_string(i)));
    return v;
  };
  auto s100 = dataset::split_dataset(make_n(100), 1);
  REQUIRE(s100.train.size() == 70);
  REQUIRE(s100.val.size() == 15);
  REQUIRE(s100.test.size() == 15);

  auto s10 = dataset::split_dataset(make_n(10), 1);
  REQUIRE(s10.train.size() == 7);
  REQUIRE(s10.val.size() == 1);
  REQUIRE(s10.test.size() == 2);

  REQUIRE_THROWS(dataset::split_dataset(make_n(2), 1));
}

TEST_CASE("splits partition the corpus and track the targets") {
  Rng rng(6);
  for (int n : {3, 13, 47, 99, 256}) {
    std::vector<WordSample> v;
    for (int i = 0; i < n; ++i) v.push_back(make_sample(U"a", "s" + std::to_string(i)));
    auto sp = dataset::split_dataset(v, 42);
    REQUIRE(sp.train.size() + sp.val.size() + sp.test.size() == static_cast<size_t>(n));
    std::set<std::string> all(sp.train.begin(), sp.train.end());
    all.insert(sp.val.begin(), sp.val.end());
    all.insert(sp.test.begin(), sp.test.end());
    REQUIRE(all.size() == static_cast<size_t>(n));  // disjoint and exhaustive
    REQUIRE(std::abs(static_cast<double>(sp.train.size()) - 0.70 * n) < 1.0);
    REQUIRE(std::abs(static_cast<double>(sp.val.size()) - 0.15 * n) < 1.0);
    // The test share absorbs both floor remainders, so its slack is 2.
    REQUIRE(std::abs(static_cast<double>(sp.test.size()) - 0.15 * n) < 2.0);
  }
}

TEST_CASE("same seed gives identical assignments, different seeds differ") {
  std::vector<WordSample> v;
  for (int i = 0; i < 40; ++i) v.push_back(make_sample(U"a", "s" + std::to_string(i)));
  auto a = dataset::split_dataset(v, 5);
  auto b = dataset::split_dataset(v, 5);
  REQUIRE(a.train == b.train);
  REQUIRE(a.val == b.val);
  REQUIRE(a.test == b.test);
  auto c = dataset::split_dataset(v, 6);
  REQUIRE(a.train != c.train);
}

TEST_CASE("every split transcript encodes against the corpus charset") {
  synth::SynthConfig cfg;
  cfg.alphabet_size = 12;
  cfg.word_count = 60;
  cfg.seed = 3;
  auto [samples, charset] = synth::synth_corpus(cfg);
  auto filtered = dataset::filter_by_length(samples);
  auto split = dataset::split_dataset(filtered, 11);
  std::map<std::string, const WordSample*> by_id;
  for (const auto& s : filtered) by_id[s.source_id] = &s;
  for (const auto* ids : {&split.train, &split.val, &split.test})
    for (const std::string& id : *ids)
      REQUIRE_NOTHROW(charset.encode(by_id.at(id)->transcript));
}

TEST_CASE("charset and split files round trip") {
  dataset::Charset cs({U'a', U'b', static_cast<char32_t>(0x0985)});
  REQUIRE(dataset::charset_from_json(dataset::charset_to_json(cs)) == cs);

  dataset::SplitAssignment sp;
  sp.seed = 77;
  sp.train = {"a", "b"};
  sp.val = {"c"};
  sp.test = {"d"};
  auto back = dataset::split_from_json(split_to_json(sp));
  REQUIRE(back.seed == 77);
  REQUIRE(back.train == sp.train);
  REQUIRE(back.val == sp.val);
  REQUIRE(back.test == sp.test);
}

TEST_CASE("synthetic corpus covers the alphabet deterministically") {
  synth::SynthConfig cfg;
  cfg.alphabet_size = 20;
  cfg.word_count = 500;
  cfg.seed = 0;
  auto [samples, charset] = synth::synth_corpus(cfg);
  REQUIRE(samples.size() == 500);
  REQUIRE(charset.size() == 20);
  for (const auto& s : samples) {
    REQUIRE(s.transcript.size() >= 2);
    REQUIRE(s.transcript.size() <= 8);
  }

  auto [again, charset2] = synth::synth_corpus(cfg);
  REQUIRE(charset2 == charset);
  for (size_t i = 0; i < samples.size(); ++i) {
    REQUIRE(again[i].image == samples[i].image);  // bit-identical renders
    REQUIRE(again[i].transcript == samples[i].transcript);
  }
}

TEST_CASE("distinct symbols render distinct glyph patterns") {
  synth::SynthConfig cfg;
  std::vector<Image> glyphs;
  for (int i = 0; i < 26; ++i) glyphs.push_back(synth::render_glyph(i, cfg));
  for (size_t i = 0; i < glyphs.size(); ++i) {
    int ink = 0;
    for (uint8_t px : glyphs[i].data) ink += (px < 255);
    REQUIRE(ink > 0);
    for (size_t j = i + 1; j < glyphs.size(); ++j) {
      int diff = 0;
      for (size_t k = 0; k < glyphs[i].data.size(); ++k)
        diff += (glyphs[i].data[k] != glyphs[j].data[k]);
      REQUIRE(diff > 0);
    }
  }
}

TEST_CASE("synthetic pages ingest back to the same crops") {
  fs::path dir = testutil::fresh_dir("wordrec_ds_synthpages");
  synth::SynthConfig cfg;
  cfg.alphabet_size = 6;
  cfg.word_count = 10;
  cfg.seed = 5;
  fs::path manifest = synth::write_synth_dataset(cfg, dir, 4);
  auto samples = dataset::extract_words(dataset::load_manifest(manifest));
  auto [direct, charset] = synth::synth_corpus(cfg);
  REQUIRE(samples.size() == direct.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    REQUIRE(samples[i].image == direct[i].image);
    REQUIRE(samples[i].transcript == direct[i].transcript);
  }
}
