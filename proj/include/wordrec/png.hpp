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
#ifndef WORDREC_PNG_HPP_
#define WORDREC_PNG_HPP_

// Minimal PNG codec on top of zlib: 8-bit gray/RGB/RGBA, non-interlaced.
// Enough for page images, word crops and contact sheets; anything fancier
// is rejected with a clear error.

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wordrec/image.hpp"

namespace wordrec::png {

namespace detail {

inline void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

inline uint32_t get_be32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

inline void append_chunk(std::vector<uint8_t>& out, const char type[4],
                         const std::vector<uint8_t>& payload) {
  put_be32(out, static_cast<uint32_t>(payload.size()));
  size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  uint32_t crc = static_cast<uint32_t>(
      ::crc32(0, out.data() + crc_start, static_cast<uInt>(4 + payload.size())));
  put_be32(out, crc);
}

inline uint8_t paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<uint8_t>(a);
  if (pb <= pc) return static_cast<uint8_t>(b);
  return static_cast<uint8_t>(c);
}

inline const uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

}  // namespace detail

struct PngInfo {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 gray, 2 gray+alpha, 3 RGB, 4 RGBA
};

/// Decoded pixel data, 8 bits per channel, interleaved, row-major.
struct Decoded {
  int rows = 0;
  int cols = 0;
  int channels = 0;
  std::vector<uint8_t> data;
};

inline std::vector<uint8_t> encode_gray(const Image& img) {
  if (img.empty()) throw std::invalid_argument("cannot encode empty image");
  std::vector<uint8_t> out(detail::kSignature, detail::kSignature + 8);

  std::vector<uint8_t> ihdr;
  detail::put_be32(ihdr, static_cast<uint32_t>(img.cols));
  detail::put_be32(ihdr, static_cast<uint32_t>(img.rows));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // color type: grayscale
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace
  detail::append_chunk(out, "IHDR", ihdr);

  // Filter type 0 on every scanline; zlib at a fixed level keeps the
  // output byte-stable for identical input.
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(img.rows) * (1 + img.cols));
  for (int r = 0; r < img.rows; ++r) {
    raw.push_back(0);
    raw.insert(raw.end(), img.data.begin() + static_cast<size_t>(r) * img.cols,
               img.data.begin() + static_cast<size_t>(r + 1) * img.cols);
  }
  uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> idat(bound);
  if (::compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("zlib compression failed");
  idat.resize(bound);
  detail::append_chunk(out, "IDAT", idat);
  detail::append_chunk(out, "IEND", {});
  return out;
}

inline void write_gray(const std::filesystem::path& path, const Image& img) {
  std::vector<uint8_t> bytes = encode_gray(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

namespace detail {

inline std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open image: " + path.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(f),
                              std::istreambuf_iterator<char>());
}

struct Header {
  PngInfo info;
  int color_type = 0;
};

inline Header parse_header(const std::vector<uint8_t>& bytes,
                           const std::filesystem::path& path) {
  if (bytes.size() < 8 + 25 || std::memcmp(bytes.data(), kSignature, 8) != 0)
    throw std::runtime_error("not a PNG file: " + path.string());
  const uint8_t* p = bytes.data() + 8;
  uint32_t len = get_be32(p);
  if (len != 13 || std::memcmp(p + 4, "IHDR", 4) != 0)
    throw std::runtime_error("malformed PNG (missing IHDR): " + path.string());
  const uint8_t* d = p + 8;
  Header h;
  h.info.width = static_cast<int>(get_be32(d));
  h.info.height = static_cast<int>(get_be32(d + 4));
  int bit_depth = d[8];
  h.color_type = d[9];
  int interlace = d[12];
  if (bit_depth != 8)
    throw std::runtime_error("unsupported PNG bit depth (want 8): " + path.string());
  if (interlace != 0)
    throw std::runtime_error("interlaced PNG not supported: " + path.string());
  switch (h.color_type) {
    case 0: h.info.channels = 1; break;
    case 2: h.info.channels = 3; break;
    case 4: h.info.channels = 2; break;
    case 6: h.info.channels = 4; break;
    default:
      throw std::runtime_error("unsupported PNG color type: " + path.string());
  }
  if (h.info.width <= 0 || h.info.height <= 0)
    throw std::runtime_error("bad PNG dimensions: " + path.string());
  return h;
}

}  // namespace detail

/// Reads width/height/channels from the IHDR without decompressing pixels.
inline PngInfo read_info(const std::filesystem::path& path) {
  return detail::parse_header(detail::read_file(path), path).info;
}

inline Decoded read(const std::filesystem::path& path) {
  std::vector<uint8_t> bytes = detail::read_file(path);
  detail::Header h = detail::parse_header(bytes, path);
  const int bpp = h.info.channels;
  const int W = h.info.width, H = h.info.height;

  std::vector<uint8_t> zdata;
  size_t pos = 8;
  while (pos + 12 <= bytes.size()) {
    uint32_t len = detail::get_be32(&bytes[pos]);
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    if (pos + 12 + len > bytes.size())
      throw std::runtime_error("truncated PNG chunk: " + path.string());
    if (std::memcmp(type, "IDAT", 4) == 0) {
      zdata.insert(zdata.end(), &bytes[pos + 8], &bytes[pos + 8] + len);
    } else if (std::memcmp(type, "PLTE", 4) == 0) {
      throw std::runtime_error("palette PNG not supported: " + path.string());
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (zdata.empty()) throw std::runtime_error("PNG has no IDAT: " + path.string());

  size_t raw_size = static_cast<size_t>(H) * (1 + static_cast<size_t>(W) * bpp);
  std::vector<uint8_t> raw(raw_size);
  uLongf out_len = static_cast<uLongf>(raw_size);
  int rc = ::uncompress(raw.data(), &out_len, zdata.data(), static_cast<uLong>(zdata.size()));
  if (rc != Z_OK || out_len != raw_size)
    throw std::runtime_error("PNG inflate failed: " + path.string());

  Decoded img;
  img.rows = H;
  img.cols = W;
  img.channels = bpp;
  img.data.assign(static_cast<size_t>(H) * W * bpp, 0);

  const size_t stride = static_cast<size_t>(W) * bpp;
  for (int r = 0; r < H; ++r) {
    const uint8_t* src = &raw[static_cast<size_t>(r) * (stride + 1)];
    uint8_t filter = src[0];
    ++src;
    uint8_t* cur = &img.data[static_cast<size_t>(r) * stride];
    const uint8_t* up = r > 0 ? &img.data[static_cast<size_t>(r - 1) * stride] : nullptr;
    for (size_t i = 0; i < stride; ++i) {
      int a = i >= static_cast<size_t>(bpp) ? cur[i - bpp] : 0;
      int b = up ? up[i] : 0;
      int c = (up && i >= static_cast<size_t>(bpp)) ? up[i - bpp] : 0;
      int x = src[i];
      switch (filter) {
        case 0: cur[i] = static_cast<uint8_t>(x); break;
        case 1: cur[i] = static_cast<uint8_t>(x + a); break;
        case 2: cur[i] = static_cast<uint8_t>(x + b); break;
        case 3: cur[i] = static_cast<uint8_t>(x + (a + b) / 2); break;
        case 4: cur[i] = static_cast<uint8_t>(x + detail::paeth(a, b, c)); break;
        default:
          throw std::runtime_error("bad PNG filter type: " + path.string());
      }
    }
  }
  return img;
}

/// Collapses a decoded image to grayscale via the mean of its color
/// channels (alpha ignored).
inline Image to_gray_mean(const Decoded& d) {
  Image out(d.rows, d.cols);
  int color_ch = (d.channels == 2) ? 1 : (d.channels == 4 ? 3 : d.channels);
  for (int r = 0; r < d.rows; ++r) {
    for (int c = 0; c < d.cols; ++c) {
      const uint8_t* px = &d.data[(static_cast<size_t>(r) * d.cols + c) * d.channels];
      double sum = 0;
      for (int k = 0; k < color_ch; ++k) sum += px[k];
      out.at(r, c) = clamp_u8(sum / color_ch);
    }
  }
  return out;
}

/// Reads any supported PNG as grayscale (channel mean for color inputs).
inline Image read_gray(const std::filesystem::path& path) {
  return to_gray_mean(read(path));
}

}  // namespace wordrec::png

#endif  // WORDREC_PNG_HPP_
