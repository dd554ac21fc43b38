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
#ifndef WORDREC_IMAGE_HPP_
#define WORDREC_IMAGE_HPP_

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace wordrec {

/// 8-bit grayscale image, row-major, 0 = black, 255 = white.
struct Image {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> data;

  Image() = default;
  Image(int r, int c, uint8_t fill = 0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("negative image dims");
  }

  bool empty() const { return rows == 0 || cols == 0; }

  uint8_t& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  uint8_t at(int r, int c) const {
    return data[static_cast<size_t>(r) * cols + c];
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

/// Crops [y, y+h) x [x, x+w); the rectangle must lie inside the image.
inline Image crop(const Image& src, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > src.cols ||
      y + h > src.rows)
    throw std::out_of_range("crop rectangle outside image");
  Image out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out.at(r, c) = src.at(y + r, x + c);
  return out;
}

/// Copies src into dst with its top-left corner at (x, y).
inline void blit(Image& dst, const Image& src, int x, int y) {
  if (x < 0 || y < 0 || x + src.cols > dst.cols || y + src.rows > dst.rows)
    throw std::out_of_range("blit rectangle outside destination");
  for (int r = 0; r < src.rows; ++r)
    for (int c = 0; c < src.cols; ++c) dst.at(y + r, x + c) = src.at(r, c);
}

inline uint8_t clamp_u8(double v) {
  if (v < 0.0) return 0;
  if (v > 255.0) return 255;
  return static_cast<uint8_t>(v + 0.5);
}

}  // namespace wordrec

#endif  // WORDREC_IMAGE_HPP_
