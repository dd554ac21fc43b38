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
#ifndef WORDREC_DATASET_HPP_
#define WORDREC_DATASET_HPP_

// Page-manifest ingestion: load and validate page records, crop word
// samples, filter by transcript length, build the character set and cut
// the deterministic 70/15/15 split.
//
// Manifest schema:
//   {"pages":[{"image":"<path>","words":[{"bbox":[x,y,w,h],"text":"..."}]}]}
// bbox integers, top-left origin, y downward; image paths are resolved
// relative to the manifest file.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wordrec/image.hpp"
#include "wordrec/png.hpp"
#include "wordrec/rng.hpp"
#include "wordrec/utf8.hpp"

namespace wordrec::dataset {

struct BBox {
  int x = 0, y = 0, w = 0, h = 0;
};

struct WordEntry {
  BBox bbox;
  std::u32string text;
};

struct PageRecord {
  std::filesystem::path image_path;  // resolved against the manifest dir
  std::string image_ref;             // path string as written in the manifest
  std::vector<WordEntry> words;
};

struct WordSample {
  Image image;
  std::u32string transcript;
  std::string source_id;  // "<image_ref>#<word index>"
};

/// Ordered alphabet plus an implicit blank at index size().
class Charset {
 public:
  Charset() = default;
  explicit Charset(std::vector<char32_t> symbols) : symbols_(std::move(symbols)) {
    for (size_t i = 0; i < symbols_.size(); ++i) {
      if (i > 0 && symbols_[i] <= symbols_[i - 1])
        throw std::invalid_argument("charset symbols must be sorted and unique");
      index_[symbols_[i]] = static_cast<int>(i);
    }
  }

  int size() const { return static_cast<int>(symbols_.size()); }
  int blank_id() const { return size(); }
  const std::vector<char32_t>& symbols() const { return symbols_; }

  int encode_symbol(char32_t c) const {
    auto it = index_.find(c);
    if (it == index_.end())
      throw std::invalid_argument("symbol U+" + std::to_string(static_cast<uint32_t>(c)) +
                                  " not in charset");
    return it->second;
  }

  char32_t decode_id(int id) const {
    if (id < 0 || id >= size())
      throw std::invalid_argument("label id " + std::to_string(id) + " out of range");
    return symbols_[static_cast<size_t>(id)];
  }

  std::vector<int> encode(std::u32string_view text) const {
    std::vector<int> out;
    out.reserve(text.size());
    for (char32_t c : text) out.push_back(encode_symbol(c));
    return out;
  }

  std::u32string decode(const std::vector<int>& ids) const {
    std::u32string out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(decode_id(id));
    return out;
  }

  friend bool operator==(const Charset& a, const Charset& b) {
    return a.symbols_ == b.symbols_;
  }

 private:
  std::vector<char32_t> symbols_;
  std::map<char32_t, int> index_;
};

struct SplitAssignment {
  uint64_t seed = 0;
  std::vector<std::string> train, val, test;
};

// ---------------------------------------------------------------------
// Manifest loading.
// ---------------------------------------------------------------------

namespace detail {

inline int require_int(const nlohmann::json& j, const std::string& ctx) {
  if (!j.is_number_integer())
    throw std::runtime_error("manifest " + ctx + ": expected an integer");
  return j.get<int>();
}

}  // namespace detail

inline std::vector<PageRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("manifest not found: " + path.string());
  nlohmann::json doc;
  try {
    f >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest " + path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("pages") || !doc["pages"].is_array())
    throw std::runtime_error("manifest " + path.string() + ": missing \"pages\" array");

  const std::filesystem::path base = path.parent_path();
  std::vector<PageRecord> pages;
  for (size_t pi = 0; pi < doc["pages"].size(); ++pi) {
    const nlohmann::json& pj = doc["pages"][pi];
    const std::string pctx = "pages[" + std::to_string(pi) + "]";
    if (!pj.is_object() || !pj.contains("image") || !pj["image"].is_string())
      throw std::runtime_error("manifest " + pctx + ".image: expected a path string");
    PageRecord page;
    page.image_ref = pj["image"].get<std::string>();
    page.image_path = base / page.image_ref;
    if (!std::filesystem::exists(page.image_path))
      throw std::runtime_error("manifest " + pctx + ".image: file not found: " +
                               page.image_path.string());
    png::PngInfo info = png::read_info(page.image_path);

    if (!pj.contains("words") || !pj["words"].is_array())
      throw std::runtime_error("manifest " + pctx + ".words: expected an array");
    for (size_t wi = 0; wi < pj["words"].size(); ++wi) {
      const nlohmann::json& wj = pj["words"][wi];
      const std::string wctx = pctx + ".words[" + std::to_string(wi) + "]";
      if (!wj.is_object() || !wj.contains("bbox") || !wj["bbox"].is_array() ||
          wj["bbox"].size() != 4)
        throw std::runtime_error("manifest " + wctx + ".bbox: expected [x,y,w,h]");
      WordEntry entry;
      entry.bbox.x = detail::require_int(wj["bbox"][0], wctx + ".bbox[0]");
      entry.bbox.y = detail::require_int(wj["bbox"][1], wctx + ".bbox[1]");
      entry.bbox.w = detail::require_int(wj["bbox"][2], wctx + ".bbox[2]");
      entry.bbox.h = detail::require_int(wj["bbox"][3], wctx + ".bbox[3]");
      if (entry.bbox.w <= 0 || entry.bbox.h <= 0)
        throw std::runtime_error("manifest " + wctx +
                                 ".bbox: width and height must be positive");
      if (entry.bbox.x < 0 || entry.bbox.y < 0 ||
          entry.bbox.x + entry.bbox.w > info.width ||
          entry.bbox.y + entry.bbox.h > info.height)
        throw std::runtime_error("manifest " + wctx + ".bbox: outside the " +
                                 std::to_string(info.width) + "x" +
                                 std::to_string(info.height) + " page image");
      if (!wj.contains("text") || !wj["text"].is_string())
        throw std::runtime_error("manifest " + wctx + ".text: expected a string");
      entry.text = utf8_decode(wj["text"].get<std::string>());
      if (entry.text.empty())
        throw std::runtime_error("manifest " + wctx + ".text: must be non-empty");
      page.words.push_back(std::move(entry));
    }
    pages.push_back(std::move(page));
  }
  return pages;
}

/// Crops one sample per word entry; page images are collapsed to
/// grayscale by channel mean if needed.
inline std::vector<WordSample> extract_words(const std::vector<PageRecord>& pages) {
  std::vector<WordSample> out;
  std::set<std::string> seen;
  for (const PageRecord& page : pages) {
    Image gray = png::read_gray(page.image_path);
    for (size_t wi = 0; wi < page.words.size(); ++wi) {
      const WordEntry& w = page.words[wi];
      WordSample s;
      s.image = crop(gray, w.bbox.x, w.bbox.y, w.bbox.w, w.bbox.h);
      s.transcript = w.text;
      s.source_id = page.image_ref + "#" + std::to_string(wi);
      if (!seen.insert(s.source_id).second)
        throw std::runtime_error("duplicate sample id: " + s.source_id);
      out.push_back(std::move(s));
    }
  }
  return out;
}

/// Keeps samples whose transcript has at most max_word_len symbols.
inline std::vector<WordSample> filter_by_length(std::vector<WordSample> samples,
                                                int max_word_len = 10) {
  std::erase_if(samples, [max_word_len](const WordSample& s) {
    return static_cast<int>(s.transcript.size()) > max_word_len;
  });
  return samples;
}

/// Sorted set of every code point appearing in any transcript.
inline Charset build_charset(const std::vector<WordSample>& samples) {
  if (samples.empty())
    throw std::invalid_argument("cannot build a charset from zero samples");
  std::set<char32_t> set;
  for (const WordSample& s : samples)
    for (char32_t c : s.transcript) set.insert(c);
  return Charset(std::vector<char32_t>(set.begin(), set.end()));
}

/// Deterministic shuffle by seed, then a contiguous cut:
/// floor(0.70*N) train, floor(0.15*N) val, remainder test.
inline SplitAssignment split_dataset(const std::vector<WordSample>& samples,
                                     uint64_t seed) {
  const size_t n = samples.size();
  if (n < 3) throw std::invalid_argument("need at least 3 samples to split");
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const WordSample& s : samples) ids.push_back(s.source_id);
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(ids);
  const size_t n_train = n * 7 / 10;
  const size_t n_val = n * 3 / 20;
  SplitAssignment out;
  out.seed = seed;
  out.train.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
  out.val.assign(ids.begin() + static_cast<long>(n_train),
                 ids.begin() + static_cast<long>(n_train + n_val));
  out.test.assign(ids.begin() + static_cast<long>(n_train + n_val), ids.end());
  return out;
}

// ---------------------------------------------------------------------
// Artifact files.
// ---------------------------------------------------------------------

inline nlohmann::json charset_to_json(const Charset& cs) {
  nlohmann::json arr = nlohmann::json::array();
  for (char32_t c : cs.symbols()) arr.push_back(static_cast<uint32_t>(c));
  return arr;
}

inline Charset charset_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw std::invalid_argument("charset file must be a JSON array");
  std::vector<char32_t> symbols;
  for (const auto& e : arr) symbols.push_back(static_cast<char32_t>(e.get<uint32_t>()));
  return Charset(std::move(symbols));
}

inline nlohmann::ordered_json split_to_json(const SplitAssignment& sp) {
  nlohmann::ordered_json j;
  j["seed"] = sp.seed;
  j["train"] = sp.train;
  j["val"] = sp.val;
  j["test"] = sp.test;
  return j;
}

inline SplitAssignment split_from_json(const nlohmann::json& j) {
  SplitAssignment sp;
  sp.seed = j.at("seed").get<uint64_t>();
  sp.train = j.at("train").get<std::vector<std::string>>();
  sp.val = j.at("val").get<std::vector<std::string>>();
  sp.test = j.at("test").get<std::vector<std::string>>();
  return sp;
}

}  // namespace wordrec::dataset

#endif  // WORDREC_DATASET_HPP_
