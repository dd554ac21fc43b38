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
#ifndef WORDREC_IMAGEPROC_HPP_
#define WORDREC_IMAGEPROC_HPP_

// Canvas reshaping, [-1, 1] normalization and the augmentation policies
// applied to raw word crops before resize + normalize. All geometric
// transforms are inverse-mapped displacement warps with bilinear
// sampling and white fill; every policy with its null parameters is the
// identity, and everything is deterministic under a seed.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wordrec/image.hpp"
#include "wordrec/rng.hpp"

namespace wordrec::imageproc {

inline constexpr int kCanvasRows = 50;
inline constexpr int kCanvasCols = 200;
inline constexpr uint8_t kFill = 255;  // background is white

// ---------------------------------------------------------------------
// Resize and normalize.
// ---------------------------------------------------------------------

/// Bilinear resample with half-pixel centers and edge clamping.
inline Image resize_bilinear(const Image& src, int out_rows, int out_cols) {
  if (src.empty()) throw std::invalid_argument("cannot resize empty image");
  if (out_rows < 1 || out_cols < 1)
    throw std::invalid_argument("target size must be positive");
  Image out(out_rows, out_cols);
  const double sy = static_cast<double>(src.rows) / out_rows;
  const double sx = static_cast<double>(src.cols) / out_cols;
  for (int r = 0; r < out_rows; ++r) {
    double fy = (r + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(src.rows - 1));
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, src.rows - 1);
    double wy = fy - y0;
    for (int c = 0; c < out_cols; ++c) {
      double fx = (c + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(src.cols - 1));
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, src.cols - 1);
      double wx = fx - x0;
      double v = (1 - wy) * ((1 - wx) * src.at(y0, x0) + wx * src.at(y0, x1)) +
                 wy * ((1 - wx) * src.at(y1, x0) + wx * src.at(y1, x1));
      out.at(r, c) = clamp_u8(v);
    }
  }
  return out;
}

/// Stretch to the fixed 50x200 canvas; aspect ratio is not preserved.
inline Image resize_to_canvas(const Image& src) {
  return resize_bilinear(src, kCanvasRows, kCanvasCols);
}

/// The scalar intensity map behind normalize(): x/127.5 - 1.
inline double normalize_intensity(double x) { return x / 127.5 - 1.0; }

/// Maps 0..255 intensities to [-1, 1] elementwise.
inline Eigen::MatrixXd normalize(const Image& img) {
  Eigen::MatrixXd out(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c)
      out(r, c) = normalize_intensity(static_cast<double>(img.at(r, c)));
  return out;
}

// ---------------------------------------------------------------------
// Displacement-field warping.
// ---------------------------------------------------------------------

/// Per-pixel source offsets: output (r, c) samples (r + dy, c + dx).
struct DisplacementField {
  Eigen::MatrixXd dx, dy;
};

inline double sample_bilinear(const Image& img, double fy, double fx, uint8_t fill) {
  if (fy < 0.0 || fy > img.rows - 1 || fx < 0.0 || fx > img.cols - 1)
    return fill;
  int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
  int y1 = std::min(y0 + 1, img.rows - 1), x1 = std::min(x0 + 1, img.cols - 1);
  double wy = fy - y0, wx = fx - x0;
  return (1 - wy) * ((1 - wx) * img.at(y0, x0) + wx * img.at(y0, x1)) +
         wy * ((1 - wx) * img.at(y1, x0) + wx * img.at(y1, x1));
}

inline Image warp_by_field(const Image& img, const DisplacementField& field,
                           uint8_t fill = kFill) {
  if (field.dx.rows() != img.rows || field.dx.cols() != img.cols ||
      field.dy.rows() != img.rows || field.dy.cols() != img.cols)
    throw std::invalid_argument("displacement field shape mismatch");
  Image out(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c)
      out.at(r, c) =
          clamp_u8(sample_bilinear(img, r + field.dy(r, c), c + field.dx(r, c), fill));
  return out;
}

// ---------------------------------------------------------------------
// The seven policies.
// ---------------------------------------------------------------------

enum class Orientation { kHorizontal, kVertical };

struct CutoutParams {
  int count_min = 1, count_max = 3;
  double span_frac_min = 0.10, span_frac_max = 0.20;  // along the box's long side
  double thick_frac_min = 0.04, thick_frac_max = 0.10;
};

/// Erases `count` boxes (intensity 0). Horizontal boxes are wide and
/// short, vertical ones narrow and tall.
inline Image cutout(const Image& img, Orientation orientation, const CutoutParams& p,
                    Rng& rng) {
  if (p.count_min < 0 || p.count_max < p.count_min)
    throw std::invalid_argument("bad cutout box count range");
  if (p.span_frac_max > 1.0 || p.thick_frac_max > 1.0)
    throw std::invalid_argument("cutout box exceeds image");
  Image out = img;
  int count = static_cast<int>(rng.int_in(p.count_min, p.count_max));
  for (int i = 0; i < count; ++i) {
    double span = rng.uniform(p.span_frac_min, p.span_frac_max);
    double thick = rng.uniform(p.thick_frac_min, p.thick_frac_max);
    int bw, bh;
    if (orientation == Orientation::kHorizontal) {
      bw = std::max(1, static_cast<int>(std::lround(span * img.cols)));
      bh = std::max(1, static_cast<int>(std::lround(thick * img.rows)));
    } else {
      bw = std::max(1, static_cast<int>(std::lround(thick * img.cols)));
      bh = std::max(1, static_cast<int>(std::lround(span * img.rows)));
    }
    bw = std::min(bw, img.cols);
    bh = std::min(bh, img.rows);
    int x = static_cast<int>(rng.int_in(0, img.cols - bw));
    int y = static_cast<int>(rng.int_in(0, img.rows - bh));
    for (int r = y; r < y + bh; ++r)
      for (int c = x; c < x + bw; ++c) out.at(r, c) = 0;
  }
  return out;
}

/// Additive Gaussian noise, clamped to [0, 255].
inline Image gaussian_noise(const Image& img, double sigma, Rng& rng) {
  if (sigma < 0) throw std::invalid_argument("sigma must be >= 0");
  Image out = img;
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c)
      out.at(r, c) = clamp_u8(img.at(r, c) + rng.normal(0.0, sigma));
  return out;
}

/// Affine warp about the image center: scale, rotate, then shift by the
/// given fraction of each dimension. Inverse-mapped, bilinear, white fill.
inline Image warp_affine(const Image& img, double shift_x_frac, double shift_y_frac,
                         double scale, double angle_deg, uint8_t fill = kFill) {
  if (scale <= 0) throw std::invalid_argument("scale must be positive");
  Image out(img.rows, img.cols);
  const double cy = (img.rows - 1) / 2.0, cx = (img.cols - 1) / 2.0;
  const double tx = shift_x_frac * img.cols, ty = shift_y_frac * img.rows;
  const double rad = angle_deg * std::numbers::pi / 180.0;
  const double ca = std::cos(rad), sa = std::sin(rad);
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      double vx = c - cx - tx, vy = r - cy - ty;
      double sx = (ca * vx + sa * vy) / scale + cx;
      double sy = (-sa * vx + ca * vy) / scale + cy;
      out.at(r, c) = clamp_u8(sample_bilinear(img, sy, sx, fill));
    }
  }
  return out;
}

struct ShiftScaleRotateParams {
  double shift_limit = 0.06;  // fraction of each dimension
  double scale_min = 0.9, scale_max = 1.1;
  double rotate_limit = 5.0;  // degrees
};

inline Image shift_scale_rotate(const Image& img, const ShiftScaleRotateParams& p,
                                Rng& rng) {
  double sx = rng.uniform(-p.shift_limit, p.shift_limit);
  double sy = rng.uniform(-p.shift_limit, p.shift_limit);
  double sc = rng.uniform(p.scale_min, p.scale_max);
  double ang = rng.uniform(-p.rotate_limit, p.rotate_limit);
  return warp_affine(img, sx, sy, sc, ang);
}

/// Radial lens model: a point at normalized radius r (r = 1 at the
/// half-diagonal) samples from radius r*(1 + k*r^2).
inline DisplacementField optical_distortion_field(int rows, int cols, double k) {
  DisplacementField f{Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Zero(rows, cols)};
  const double cy = (rows - 1) / 2.0, cx = (cols - 1) / 2.0;
  const double half_diag = std::sqrt(cx * cx + cy * cy);
  if (half_diag == 0.0) return f;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double vx = c - cx, vy = r - cy;
      double rn = std::sqrt(vx * vx + vy * vy) / half_diag;
      double m = k * rn * rn;  // src = v * (1 + k r^2)
      f.dx(r, c) = vx * m;
      f.dy(r, c) = vy * m;
    }
  }
  return f;
}

inline Image optical_distortion(const Image& img, double k) {
  return warp_by_field(img, optical_distortion_field(img.rows, img.cols, k));
}

/// Lattice of (cells+1)^2 nodes over the image; interior nodes get
/// uniform offsets in [-magnitude, magnitude], borders stay anchored;
/// the field is bilinearly interpolated between nodes.
inline DisplacementField grid_distortion_field(int rows, int cols, int cells,
                                               double magnitude, Rng& rng) {
  if (cells < 1) throw std::invalid_argument("cells must be >= 1");
  if (magnitude < 0) throw std::invalid_argument("magnitude must be >= 0");
  const int n = cells + 1;
  Eigen::MatrixXd node_dx = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd node_dy = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n - 1; ++i) {
    for (int j = 1; j < n - 1; ++j) {
      node_dx(i, j) = rng.uniform(-magnitude, magnitude);
      node_dy(i, j) = rng.uniform(-magnitude, magnitude);
    }
  }
  DisplacementField f{Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Zero(rows, cols)};
  for (int r = 0; r < rows; ++r) {
    double gy = rows > 1 ? static_cast<double>(r) / (rows - 1) * cells : 0.0;
    int i0 = std::min(static_cast<int>(gy), cells - 1);
    double wy = gy - i0;
    for (int c = 0; c < cols; ++c) {
      double gx = cols > 1 ? static_cast<double>(c) / (cols - 1) * cells : 0.0;
      int j0 = std::min(static_cast<int>(gx), cells - 1);
      double wx = gx - j0;
      f.dx(r, c) = (1 - wy) * ((1 - wx) * node_dx(i0, j0) + wx * node_dx(i0, j0 + 1)) +
                   wy * ((1 - wx) * node_dx(i0 + 1, j0) + wx * node_dx(i0 + 1, j0 + 1));
      f.dy(r, c) = (1 - wy) * ((1 - wx) * node_dy(i0, j0) + wx * node_dy(i0, j0 + 1)) +
                   wy * ((1 - wx) * node_dy(i0 + 1, j0) + wx * node_dy(i0 + 1, j0 + 1));
    }
  }
  return f;
}

inline Image grid_distortion(const Image& img, int cells, double magnitude, Rng& rng) {
  return warp_by_field(img, grid_distortion_field(img.rows, img.cols, cells, magnitude, rng));
}

/// Regular grid every `grid_step` pixels; every node gets a Gaussian
/// N(0, sigma^2) offset and the field interpolates between nodes.
inline DisplacementField affine_jitter_field(int rows, int cols, int grid_step,
                                             double sigma, Rng& rng) {
  if (grid_step < 1) throw std::invalid_argument("grid step must be >= 1");
  if (sigma < 0) throw std::invalid_argument("sigma must be >= 0");
  const int ni = rows / grid_step + 2, nj = cols / grid_step + 2;
  Eigen::MatrixXd node_dx(ni, nj), node_dy(ni, nj);
  for (int i = 0; i < ni; ++i) {
    for (int j = 0; j < nj; ++j) {
      node_dx(i, j) = rng.normal(0.0, sigma);
      node_dy(i, j) = rng.normal(0.0, sigma);
    }
  }
  DisplacementField f{Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Zero(rows, cols)};
  for (int r = 0; r < rows; ++r) {
    int i0 = r / grid_step;
    double wy = static_cast<double>(r % grid_step) / grid_step;
    for (int c = 0; c < cols; ++c) {
      int j0 = c / grid_step;
      double wx = static_cast<double>(c % grid_step) / grid_step;
      f.dx(r, c) = (1 - wy) * ((1 - wx) * node_dx(i0, j0) + wx * node_dx(i0, j0 + 1)) +
                   wy * ((1 - wx) * node_dx(i0 + 1, j0) + wx * node_dx(i0 + 1, j0 + 1));
      f.dy(r, c) = (1 - wy) * ((1 - wx) * node_dy(i0, j0) + wx * node_dy(i0, j0 + 1)) +
                   wy * ((1 - wx) * node_dy(i0 + 1, j0) + wx * node_dy(i0 + 1, j0 + 1));
    }
  }
  return f;
}

inline Image affine_jitter(const Image& img, int grid_step, double sigma, Rng& rng) {
  return warp_by_field(img, affine_jitter_field(img.rows, img.cols, grid_step, sigma, rng));
}

// ---------------------------------------------------------------------
// Policy composition.
// ---------------------------------------------------------------------

enum class PolicyKind {
  kCutoutH,
  kCutoutV,
  kGaussianNoise,
  kShiftScaleRotate,
  kOpticalDistortion,
  kGridDistortion,
  kAffineJitter,
};

inline std::string policy_kind_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::kCutoutH: return "cutout_h";
    case PolicyKind::kCutoutV: return "cutout_v";
    case PolicyKind::kGaussianNoise: return "gaussian_noise";
    case PolicyKind::kShiftScaleRotate: return "shift_scale_rotate";
    case PolicyKind::kOpticalDistortion: return "optical_distortion";
    case PolicyKind::kGridDistortion: return "grid_distortion";
    case PolicyKind::kAffineJitter: return "affine_jitter";
  }
  throw std::logic_error("bad policy kind");
}

inline PolicyKind policy_kind_from_name(const std::string& s) {
  for (PolicyKind k : {PolicyKind::kCutoutH, PolicyKind::kCutoutV, PolicyKind::kGaussianNoise,
                       PolicyKind::kShiftScaleRotate, PolicyKind::kOpticalDistortion,
                       PolicyKind::kGridDistortion, PolicyKind::kAffineJitter})
    if (policy_kind_name(k) == s) return k;
  throw std::invalid_argument("unknown augmentation kind: " + s);
}

struct AugmentPolicy {
  PolicyKind kind = PolicyKind::kGaussianNoise;
  double probability = 0.5;
  CutoutParams cutout;
  struct {
    double sigma_min = 5.0, sigma_max = 15.0;
  } noise;
  ShiftScaleRotateParams ssr;
  struct {
    double k_limit = 0.05;
  } optical;
  struct {
    int cells = 4;
    double magnitude = 8.0;
  } grid;
  struct {
    int grid_step = 25;
    double sigma = 3.0;
  } jitter;
};

/// One sample of the policy; all parameter draws come from `rng`.
inline Image apply_policy(const AugmentPolicy& p, const Image& img, Rng& rng) {
  switch (p.kind) {
    case PolicyKind::kCutoutH:
      return cutout(img, Orientation::kHorizontal, p.cutout, rng);
    case PolicyKind::kCutoutV:
      return cutout(img, Orientation::kVertical, p.cutout, rng);
    case PolicyKind::kGaussianNoise:
      return gaussian_noise(img, rng.uniform(p.noise.sigma_min, p.noise.sigma_max), rng);
    case PolicyKind::kShiftScaleRotate:
      return shift_scale_rotate(img, p.ssr, rng);
    case PolicyKind::kOpticalDistortion:
      return optical_distortion(img, rng.uniform(-p.optical.k_limit, p.optical.k_limit));
    case PolicyKind::kGridDistortion:
      return grid_distortion(img, p.grid.cells, p.grid.magnitude, rng);
    case PolicyKind::kAffineJitter:
      return affine_jitter(img, p.jitter.grid_step, p.jitter.sigma, rng);
  }
  throw std::logic_error("bad policy kind");
}

/// Applies the policies in order; each fires independently with its
/// probability from a single seed-derived stream.
inline Image compose_augmentations(const std::vector<AugmentPolicy>& policies,
                                   const Image& img, uint64_t seed) {
  Rng rng(seed);
  Image out = img;
  for (const AugmentPolicy& p : policies) {
    if (p.probability < 0.0 || p.probability > 1.0)
      throw std::invalid_argument("policy probability outside [0, 1]");
    if (rng.uniform() < p.probability) out = apply_policy(p, out, rng);
  }
  return out;
}

/// The stock set: both cutouts, noise, shift/scale/rotate, optical and
/// grid distortion, affine jitter; each fires with probability 0.5.
inline std::vector<AugmentPolicy> default_policies() {
  std::vector<AugmentPolicy> out;
  for (PolicyKind k : {PolicyKind::kCutoutH, PolicyKind::kCutoutV, PolicyKind::kGaussianNoise,
                       PolicyKind::kShiftScaleRotate, PolicyKind::kOpticalDistortion,
                       PolicyKind::kGridDistortion, PolicyKind::kAffineJitter}) {
    AugmentPolicy p;
    p.kind = k;
    p.probability = 0.5;
    out.push_back(p);
  }
  return out;
}

inline nlohmann::ordered_json policies_to_json(const std::vector<AugmentPolicy>& ps) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const AugmentPolicy& p : ps) {
    nlohmann::ordered_json params;
    switch (p.kind) {
      case PolicyKind::kCutoutH:
      case PolicyKind::kCutoutV:
        params = {{"count_min", p.cutout.count_min},
                  {"count_max", p.cutout.count_max},
                  {"span_frac_min", p.cutout.span_frac_min},
                  {"span_frac_max", p.cutout.span_frac_max},
                  {"thick_frac_min", p.cutout.thick_frac_min},
                  {"thick_frac_max", p.cutout.thick_frac_max}};
        break;
      case PolicyKind::kGaussianNoise:
        params = {{"sigma_min", p.noise.sigma_min}, {"sigma_max", p.noise.sigma_max}};
        break;
      case PolicyKind::kShiftScaleRotate:
        params = {{"shift_limit", p.ssr.shift_limit},
                  {"scale_min", p.ssr.scale_min},
                  {"scale_max", p.ssr.scale_max},
                  {"rotate_limit", p.ssr.rotate_limit}};
        break;
      case PolicyKind::kOpticalDistortion:
        params = {{"k_limit", p.optical.k_limit}};
        break;
      case PolicyKind::kGridDistortion:
        params = {{"cells", p.grid.cells}, {"magnitude", p.grid.magnitude}};
        break;
      case PolicyKind::kAffineJitter:
        params = {{"grid_step", p.jitter.grid_step}, {"sigma", p.jitter.sigma}};
        break;
    }
    arr.push_back({{"kind", policy_kind_name(p.kind)},
                   {"probability", p.probability},
                   {"params", params}});
  }
  return arr;
}

inline std::vector<AugmentPolicy> policies_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw std::invalid_argument("policy file must be a JSON array");
  std::vector<AugmentPolicy> out;
  for (const auto& e : arr) {
    AugmentPolicy p;
    p.kind = policy_kind_from_name(e.at("kind").get<std::string>());
    p.probability = e.at("probability").get<double>();
    const nlohmann::json params = e.value("params", nlohmann::json::object());
    auto get = [&](const char* key, double dflt) { return params.value(key, dflt); };
    switch (p.kind) {
      case PolicyKind::kCutoutH:
      case PolicyKind::kCutoutV:
        p.cutout.count_min = static_cast<int>(get("count_min", p.cutout.count_min));
        p.cutout.count_max = static_cast<int>(get("count_max", p.cutout.count_max));
        p.cutout.span_frac_min = get("span_frac_min", p.cutout.span_frac_min);
        p.cutout.span_frac_max = get("span_frac_max", p.cutout.span_frac_max);
        p.cutout.thick_frac_min = get("thick_frac_min", p.cutout.thick_frac_min);
        p.cutout.thick_frac_max = get("thick_frac_max", p.cutout.thick_frac_max);
        break;
      case PolicyKind::kGaussianNoise:
        p.noise.sigma_min = get("sigma_min", p.noise.sigma_min);
        p.noise.sigma_max = get("sigma_max", p.noise.sigma_max);
        break;
      case PolicyKind::kShiftScaleRotate:
        p.ssr.shift_limit = get("shift_limit", p.ssr.shift_limit);
        p.ssr.scale_min = get("scale_min", p.ssr.scale_min);
        p.ssr.scale_max = get("scale_max", p.ssr.scale_max);
        p.ssr.rotate_limit = get("rotate_limit", p.ssr.rotate_limit);
        break;
      case PolicyKind::kOpticalDistortion:
        p.optical.k_limit = get("k_limit", p.optical.k_limit);
        break;
      case PolicyKind::kGridDistortion:
        p.grid.cells = static_cast<int>(get("cells", p.grid.cells));
        p.grid.magnitude = get("magnitude", p.grid.magnitude);
        break;
      case PolicyKind::kAffineJitter:
        p.jitter.grid_step = static_cast<int>(get("grid_step", p.jitter.grid_step));
        p.jitter.sigma = get("sigma", p.jitter.sigma);
        break;
    }
    out.push_back(p);
  }
  return out;
}

/// 1 x (1 + #policies) tile strip: the original followed by one sample
/// of each policy (fired unconditionally), 2px divider between tiles.
inline Image make_contact_sheet(const Image& img, const std::vector<AugmentPolicy>& policies,
                                uint64_t seed) {
  const int divider = 2;
  const int tiles = 1 + static_cast<int>(policies.size());
  Image sheet(img.rows, tiles * img.cols + (tiles - 1) * divider, 128);
  blit(sheet, img, 0, 0);
  Rng rng(seed);
  for (size_t i = 0; i < policies.size(); ++i) {
    Image tile = apply_policy(policies[i], img, rng);
    blit(sheet, tile, static_cast<int>(i + 1) * (img.cols + divider), 0);
  }
  return sheet;
}

}  // namespace wordrec::imageproc

#endif  // WORDREC_IMAGEPROC_HPP_
