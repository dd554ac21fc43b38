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
#ifndef WORDREC_SYNTH_HPP_
#define WORDREC_SYNTH_HPP_

// Desk-scale synthetic corpus: every alphabet symbol gets a fixed
// procedural stroke pattern, words are rendered as a horizontal glyph
// sequence with small seeded jitter (translation <= 2px, thickness
// +-1px) on a white canvas. The generator is what lets the full
// pipeline be exercised without a real handwriting dataset.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wordrec/dataset.hpp"
#include "wordrec/image.hpp"
#include "wordrec/imageproc.hpp"
#include "wordrec/png.hpp"
#include "wordrec/rng.hpp"
#include "wordrec/utf8.hpp"

namespace wordrec::synth {

struct SynthConfig {
  int alphabet_size = 20;
  int word_count = 500;
  int len_min = 2, len_max = 8;
  double canvas_noise_sigma = 3.0;
  uint64_t seed = 0;
  // Glyph geometry.
  int glyph_rows = 32, glyph_cols = 20, margin = 4;

  void validate() const {
    if (alphabet_size < 2) throw std::invalid_argument("alphabet size must be >= 2");
    if (word_count < 1) throw std::invalid_argument("word count must be >= 1");
    if (len_min < 1 || len_max < len_min)
      throw std::invalid_argument("bad word length range");
    if (canvas_noise_sigma < 0) throw std::invalid_argument("noise sigma must be >= 0");
  }
};

/// Symbol i is rendered as code point 'a' + i.
inline char32_t symbol_codepoint(int index) {
  return static_cast<char32_t>(U'a' + static_cast<char32_t>(index));
}

namespace detail {

inline void draw_segment(Image& img, double x0, double y0, double x1, double y1,
                         double radius, uint8_t ink) {
  int rlo = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - radius - 1)));
  int rhi = std::min(img.rows - 1, static_cast<int>(std::ceil(std::max(y0, y1) + radius + 1)));
  int clo = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - radius - 1)));
  int chi = std::min(img.cols - 1, static_cast<int>(std::ceil(std::max(x0, x1) + radius + 1)));
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  for (int r = rlo; r <= rhi; ++r) {
    for (int c = clo; c <= chi; ++c) {
      double t = len2 > 0 ? ((c - x0) * dx + (r - y0) * dy) / len2 : 0.0;
      t = std::min(std::max(t, 0.0), 1.0);
      double px = x0 + t * dx, py = y0 + t * dy;
      double d2 = (c - px) * (c - px) + (r - py) * (r - py);
      if (d2 <= radius * radius) img.at(r, c) = std::min(img.at(r, c), ink);
    }
  }
}

struct Stroke {
  double x0, y0, x1, y1;
};

/// Fixed per-symbol strokes: four distinct segments between anchor
/// points of a lattice inside the glyph box, drawn from a stream seeded
/// only by the symbol index.
inline std::vector<Stroke> glyph_strokes(int symbol_index, const SynthConfig& cfg) {
  Rng rng(derive_seed(0x676c797068u, "glyph", static_cast<uint64_t>(symbol_index)));
  const int nx = 5, ny = 7;
  const double x_lo = 2.0, x_hi = cfg.glyph_cols - 3.0;
  const double y_lo = 2.0, y_hi = cfg.glyph_rows - 3.0;
  auto anchor_x = [&](int i) { return x_lo + (x_hi - x_lo) * i / (nx - 1); };
  auto anchor_y = [&](int j) { return y_lo + (y_hi - y_lo) * j / (ny - 1); };
  std::vector<Stroke> strokes;
  for (int s = 0; s < 4; ++s) {
    int a = static_cast<int>(rng.int_in(0, nx * ny - 1));
    int b = a;
    while (b == a) b = static_cast<int>(rng.int_in(0, nx * ny - 1));
    strokes.push_back({anchor_x(a % nx), anchor_y(a / nx), anchor_x(b % nx), anchor_y(b / nx)});
  }
  return strokes;
}

}  // namespace detail

/// Unjittered reference render of one glyph (test hook for pattern
/// distinctness).
inline Image render_glyph(int symbol_index, const SynthConfig& cfg, int dx = 0,
                          int dy = 0, double thickness = 2.0) {
  Image img(cfg.glyph_rows, cfg.glyph_cols, 255);
  for (const detail::Stroke& s : detail::glyph_strokes(symbol_index, cfg))
    detail::draw_segment(img, s.x0 + dx, s.y0 + dy, s.x1 + dx, s.y1 + dy,
                         thickness / 2.0, 20);
  return img;
}

/// Renders a word as a horizontal glyph sequence with per-glyph jitter.
inline Image render_word(const std::vector<int>& symbol_indices, const SynthConfig& cfg,
                         Rng& rng) {
  const int rows = cfg.glyph_rows + 2 * cfg.margin;
  const int cols = static_cast<int>(symbol_indices.size()) * cfg.glyph_cols + 2 * cfg.margin;
  Image img(rows, cols, 255);
  for (size_t i = 0; i < symbol_indices.size(); ++i) {
    int dx = cfg.margin + static_cast<int>(i) * cfg.glyph_cols +
             static_cast<int>(rng.int_in(-2, 2));
    int dy = cfg.margin + static_cast<int>(rng.int_in(-2, 2));
    double thickness = 2.0 + static_cast<double>(rng.int_in(-1, 1));
    for (const detail::Stroke& s : detail::glyph_strokes(symbol_indices[i], cfg))
      detail::draw_segment(img, s.x0 + dx, s.y0 + dy, s.x1 + dx, s.y1 + dy,
                           thickness / 2.0, 20);
  }
  if (cfg.canvas_noise_sigma > 0)
    img = imageproc::gaussian_noise(img, cfg.canvas_noise_sigma, rng);
  return img;
}

/// Deterministic corpus; transcripts are drawn uniformly and the whole
/// draw is resampled until every alphabet symbol appears.
inline std::pair<std::vector<dataset::WordSample>, dataset::Charset> synth_corpus(
    const SynthConfig& cfg) {
  cfg.validate();
  for (int attempt = 0; attempt < 100; ++attempt) {
    Rng rng(derive_seed(cfg.seed, "synth_corpus", static_cast<uint64_t>(attempt)));
    std::vector<dataset::WordSample> samples;
    std::set<int> used;
    for (int i = 0; i < cfg.word_count; ++i) {
      int len = static_cast<int>(rng.int_in(cfg.len_min, cfg.len_max));
      std::vector<int> syms(static_cast<size_t>(len));
      std::u32string transcript;
      for (int k = 0; k < len; ++k) {
        syms[static_cast<size_t>(k)] = static_cast<int>(rng.int_in(0, cfg.alphabet_size - 1));
        used.insert(syms[static_cast<size_t>(k)]);
        transcript.push_back(symbol_codepoint(syms[static_cast<size_t>(k)]));
      }
      dataset::WordSample s;
      s.image = render_word(syms, cfg, rng);
      s.transcript = std::move(transcript);
      s.source_id = "synth#" + std::to_string(i);
      samples.push_back(std::move(s));
    }
    if (static_cast<int>(used.size()) == cfg.alphabet_size) {
      dataset::Charset charset = dataset::build_charset(samples);
      return {std::move(samples), std::move(charset)};
    }
  }
  throw std::runtime_error("could not cover the alphabet; corpus too small");
}

/// Lays word crops out on page canvases and writes pages plus a
/// manifest, so the file-based ingestion path can run on synthetic data.
inline std::filesystem::path write_synth_dataset(const SynthConfig& cfg,
                                                 const std::filesystem::path& out_dir,
                                                 int words_per_page = 12) {
  if (words_per_page < 1) throw std::invalid_argument("words_per_page must be >= 1");
  auto [samples, charset] = synth_corpus(cfg);
  (void)charset;
  std::filesystem::create_directories(out_dir / "pages");

  const int grid_cols = 3;
  const int cell_w = cfg.len_max * cfg.glyph_cols + 2 * cfg.margin + 12;
  const int cell_h = cfg.glyph_rows + 2 * cfg.margin + 12;
  const int grid_rows = (words_per_page + grid_cols - 1) / grid_cols;

  nlohmann::ordered_json pages = nlohmann::ordered_json::array();
  for (size_t start = 0; start < samples.size(); start += words_per_page) {
    size_t count = std::min<size_t>(words_per_page, samples.size() - start);
    Image page(grid_rows * cell_h + 12, grid_cols * cell_w + 12, 255);
    nlohmann::ordered_json words = nlohmann::ordered_json::array();
    for (size_t k = 0; k < count; ++k) {
      const dataset::WordSample& s = samples[start + k];
      int gx = 12 + static_cast<int>(k % grid_cols) * cell_w;
      int gy = 12 + static_cast<int>(k / grid_cols) * cell_h;
      blit(page, s.image, gx, gy);
      words.push_back({{"bbox", {gx, gy, s.image.cols, s.image.rows}},
                       {"text", utf8_encode(s.transcript)}});
    }
    std::string name = "pages/page" + std::to_string(start / words_per_page) + ".png";
    png::write_gray(out_dir / name, page);
    pages.push_back({{"image", name}, {"words", words}});
  }

  nlohmann::ordered_json manifest;
  manifest["pages"] = pages;
  std::filesystem::path mpath = out_dir / "manifest.json";
  std::ofstream f(mpath);
  f << manifest.dump(2) << "\n";
  if (!f) throw std::runtime_error("failed to write " + mpath.string());
  return mpath;
}

}  // namespace wordrec::synth

#endif  // WORDREC_SYNTH_HPP_
