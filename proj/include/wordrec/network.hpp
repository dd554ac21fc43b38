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
#ifndef WORDREC_NETWORK_HPP_
#define WORDREC_NETWORK_HPP_

// Recognition network: three conv/ReLU/maxpool blocks collapse the
// 50x200 input to a left-to-right sequence of 25 feature frames, two
// bidirectional recurrent layers (LSTM or GRU) run over the frames, and
// a per-frame affine + softmax yields class probabilities. Forward and
// reverse passes are hand-written; gradients are exact and checked
// against finite differences in the test suite.
//
// Internally feature maps live as (channels x pixels) matrices and
// sequences as (dim x frames); the public API speaks (frames x dim).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "wordrec/rng.hpp"

namespace wordrec::network {

enum class CellKind { kLstm, kGru };

inline std::string cell_name(CellKind k) {
  return k == CellKind::kLstm ? "lstm" : "gru";
}

inline CellKind cell_from_name(const std::string& s) {
  if (s == "lstm") return CellKind::kLstm;
  if (s == "gru") return CellKind::kGru;
  throw std::invalid_argument("unknown RNN cell: " + s);
}

struct NetworkConfig {
  std::vector<int> conv_channels{16, 32, 48};
  CellKind cell = CellKind::kGru;
  int hidden = 64;
  int num_classes = 0;  // C+1, blank included

  static constexpr int kKernel = 3;
  static constexpr int kRnnLayers = 2;
  static constexpr int kFrames = 25;
  static constexpr int kInputRows = 50;
  static constexpr int kInputCols = 200;

  int gates() const { return cell == CellKind::kLstm ? 4 : 3; }

  void validate() const {
    if (conv_channels.size() != 3)
      throw std::invalid_argument("expected 3 conv blocks");
    for (int c : conv_channels)
      if (c < 1) throw std::invalid_argument("conv channel count must be >= 1");
    if (hidden < 1) throw std::invalid_argument("hidden size must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  }
};

/// Spatial sizes through the conv stack; the pool chain 50x200 -> 25x100
/// -> 12x50 -> 6x25 pins the frame count at 25.
struct ConvDims {
  int in_h[3], in_w[3];
  int out_h[3], out_w[3];
};

inline ConvDims conv_dims() {
  ConvDims d;
  int h = NetworkConfig::kInputRows, w = NetworkConfig::kInputCols;
  for (int i = 0; i < 3; ++i) {
    d.in_h[i] = h;
    d.in_w[i] = w;
    h /= 2;
    w /= 2;
    d.out_h[i] = h;
    d.out_w[i] = w;
  }
  return d;
}

struct Parameters {
  struct Conv {
    Eigen::MatrixXd w;  // out_ch x 9*in_ch
    Eigen::VectorXd b;  // out_ch
  };
  struct Dir {
    Eigen::MatrixXd wx;  // gates*H x in
    Eigen::MatrixXd wh;  // gates*H x H
    Eigen::VectorXd b;   // gates*H
  };
  struct RnnLayer {
    Dir fwd, bwd;
  };

  std::vector<Conv> conv;      // 3 blocks
  std::vector<RnnLayer> rnn;   // 2 layers
  Eigen::MatrixXd proj_w;      // K x 2H
  Eigen::VectorXd proj_b;      // K
};

/// Gradients share the parameter layout.
using GradientSet = Parameters;

/// A named view over one parameter array's contiguous storage.
struct ArrayRef {
  std::string name;
  double* data;
  Eigen::Index rows, cols;
  Eigen::Index size() const { return rows * cols; }
  Eigen::Map<Eigen::VectorXd> flat() { return {data, size()}; }
};

struct ConstArrayRef {
  std::string name;
  const double* data;
  Eigen::Index rows, cols;
  Eigen::Index size() const { return rows * cols; }
  Eigen::Map<const Eigen::VectorXd> flat() const { return {data, size()}; }
};

/// Canonical array order; checkpoints and the optimizer both rely on it.
inline std::vector<ArrayRef> flatten(Parameters& p) {
  std::vector<ArrayRef> out;
  for (size_t i = 0; i < p.conv.size(); ++i) {
    std::string base = "conv" + std::to_string(i + 1);
    out.push_back({base + ".w", p.conv[i].w.data(), p.conv[i].w.rows(), p.conv[i].w.cols()});
    out.push_back({base + ".b", p.conv[i].b.data(), p.conv[i].b.rows(), 1});
  }
  for (size_t i = 0; i < p.rnn.size(); ++i) {
    std::string base = "rnn" + std::to_string(i + 1);
    const std::pair<Parameters::Dir*, const char*> dirs[] = {
        {&p.rnn[i].fwd, ".fwd"}, {&p.rnn[i].bwd, ".bwd"}};
    for (auto [dir, tag] : dirs) {
      out.push_back({base + tag + ".wx", dir->wx.data(), dir->wx.rows(), dir->wx.cols()});
      out.push_back({base + tag + ".wh", dir->wh.data(), dir->wh.rows(), dir->wh.cols()});
      out.push_back({base + tag + ".b", dir->b.data(), dir->b.rows(), 1});
    }
  }
  out.push_back({"proj.w", p.proj_w.data(), p.proj_w.rows(), p.proj_w.cols()});
  out.push_back({"proj.b", p.proj_b.data(), p.proj_b.rows(), 1});
  return out;
}

inline std::vector<ConstArrayRef> flatten(const Parameters& p) {
  std::vector<ArrayRef> refs = flatten(const_cast<Parameters&>(p));
  std::vector<ConstArrayRef> out;
  out.reserve(refs.size());
  for (const ArrayRef& r : refs) out.push_back({r.name, r.data, r.rows, r.cols});
  return out;
}

inline Parameters make_shaped(const NetworkConfig& cfg) {
  cfg.validate();
  const int H = cfg.hidden, G = cfg.gates(), K = cfg.num_classes;
  Parameters p;
  int in_ch = 1;
  for (int i = 0; i < 3; ++i) {
    int out_ch = cfg.conv_channels[static_cast<size_t>(i)];
    p.conv.push_back({Eigen::MatrixXd::Zero(out_ch, 9 * in_ch),
                      Eigen::VectorXd::Zero(out_ch)});
    in_ch = out_ch;
  }
  int in = cfg.conv_channels[2];
  for (int l = 0; l < NetworkConfig::kRnnLayers; ++l) {
    Parameters::Dir d{Eigen::MatrixXd::Zero(G * H, in), Eigen::MatrixXd::Zero(G * H, H),
                      Eigen::VectorXd::Zero(G * H)};
    p.rnn.push_back({d, d});
    in = 2 * H;
  }
  p.proj_w = Eigen::MatrixXd::Zero(K, 2 * H);
  p.proj_b = Eigen::VectorXd::Zero(K);
  return p;
}

inline Parameters zeros_like(const Parameters& p) {
  Parameters z = p;
  for (ArrayRef r : flatten(z)) r.flat().setZero();
  return z;
}

/// Glorot-uniform weights (bound sqrt(6/(rows+cols)) per array), zero
/// biases, LSTM forget-gate bias 1.
inline Parameters init_params(const NetworkConfig& cfg, uint64_t seed) {
  Parameters p = make_shaped(cfg);
  Rng rng(seed);
  for (ArrayRef r : flatten(p)) {
    bool is_bias = r.name.ends_with(".b");
    if (is_bias) {
      r.flat().setZero();
      if (cfg.cell == CellKind::kLstm && r.name.starts_with("rnn"))
        r.flat().segment(cfg.hidden, cfg.hidden).setConstant(1.0);
      continue;
    }
    double bound = std::sqrt(6.0 / static_cast<double>(r.rows + r.cols));
    for (Eigen::Index i = 0; i < r.rows; ++i)
      for (Eigen::Index j = 0; j < r.cols; ++j)
        r.data[j * r.rows + i] = rng.uniform(-bound, bound);
  }
  return p;
}

// ---------------------------------------------------------------------
// Forward pass with cached intermediates.
// ---------------------------------------------------------------------

struct ConvCache {
  Eigen::MatrixXd input;   // in_ch x h*w
  Eigen::MatrixXd cols;    // 9*in_ch x h*w
  Eigen::MatrixXd act;     // out_ch x h*w, post-ReLU
  Eigen::MatrixXd pooled;  // out_ch x ph*pw
  std::vector<int> argmax; // flat act pixel per (pooled pixel, channel)
};

struct DirCache {
  Eigen::MatrixXd gates;  // gates*H x T, post-activation
  Eigen::MatrixXd h;      // H x T
  Eigen::MatrixXd c;      // H x T (LSTM)
  Eigen::MatrixXd rh;     // H x T, r .* h_prev (GRU)
};

struct LayerCache {
  Eigen::MatrixXd input;  // in x T
  DirCache fwd, bwd;
};

struct ForwardCache {
  std::vector<ConvCache> conv;
  Eigen::MatrixXd feats;    // F x T
  std::vector<LayerCache> rnn;
  Eigen::MatrixXd rnn_out;  // 2H x T
  Eigen::MatrixXd logits;   // T x K
  Eigen::MatrixXd probs;    // T x K
};

namespace detail {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// im2col for a 3x3 kernel with same padding: column p of the result
/// stacks the 9 shifted copies of the input's pixel neighborhood.
inline Eigen::MatrixXd im2col3x3(const Eigen::MatrixXd& x, int h, int w) {
  const Eigen::Index C = x.rows();
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(9 * C, static_cast<Eigen::Index>(h) * w);
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      Eigen::Index k = static_cast<Eigen::Index>((dr + 1) * 3 + (dc + 1)) * C;
      int c0 = std::max(0, -dc), c1 = std::min(w, w - dc);
      if (c0 >= c1) continue;
      for (int r = 0; r < h; ++r) {
        int rs = r + dr;
        if (rs < 0 || rs >= h) continue;
        cols.block(k, static_cast<Eigen::Index>(r) * w + c0, C, c1 - c0) =
            x.block(0, static_cast<Eigen::Index>(rs) * w + (c0 + dc), C, c1 - c0);
      }
    }
  }
  return cols;
}

/// Scatter-add inverse of im2col3x3.
inline Eigen::MatrixXd col2im3x3(const Eigen::MatrixXd& dcols, Eigen::Index C,
                                 int h, int w) {
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(C, static_cast<Eigen::Index>(h) * w);
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      Eigen::Index k = static_cast<Eigen::Index>((dr + 1) * 3 + (dc + 1)) * C;
      int c0 = std::max(0, -dc), c1 = std::min(w, w - dc);
      if (c0 >= c1) continue;
      for (int r = 0; r < h; ++r) {
        int rs = r + dr;
        if (rs < 0 || rs >= h) continue;
        dx.block(0, static_cast<Eigen::Index>(rs) * w + (c0 + dc), C, c1 - c0) +=
            dcols.block(k, static_cast<Eigen::Index>(r) * w + c0, C, c1 - c0);
      }
    }
  }
  return dx;
}

inline void maxpool2x2(const Eigen::MatrixXd& act, int h, int w,
                       Eigen::MatrixXd& pooled, std::vector<int>& argmax) {
  const Eigen::Index C = act.rows();
  const int ph = h / 2, pw = w / 2;
  pooled.resize(C, static_cast<Eigen::Index>(ph) * pw);
  argmax.assign(static_cast<size_t>(C) * ph * pw, 0);
  for (int pr = 0; pr < ph; ++pr) {
    for (int pc = 0; pc < pw; ++pc) {
      Eigen::Index p = static_cast<Eigen::Index>(pr) * pw + pc;
      const int base[4] = {(2 * pr) * w + 2 * pc, (2 * pr) * w + 2 * pc + 1,
                           (2 * pr + 1) * w + 2 * pc, (2 * pr + 1) * w + 2 * pc + 1};
      for (Eigen::Index ch = 0; ch < C; ++ch) {
        int best = base[0];
        double bv = act(ch, base[0]);
        for (int k = 1; k < 4; ++k) {
          double v = act(ch, base[k]);
          if (v > bv) {  // first max wins ties
            bv = v;
            best = base[k];
          }
        }
        pooled(ch, p) = bv;
        argmax[static_cast<size_t>(p) * C + ch] = best;
      }
    }
  }
}

}  // namespace detail

struct CellState {
  Eigen::VectorXd h;
  Eigen::VectorXd c;  // unused for GRU
};

inline CellState zero_state(const NetworkConfig& cfg) {
  return {Eigen::VectorXd::Zero(cfg.hidden), Eigen::VectorXd::Zero(cfg.hidden)};
}

/// One recurrent step. LSTM gate rows pack as [i; f; g; o], GRU as
/// [z; r; n] with the candidate affine taking r .* h.
inline void rnn_cell_step(CellKind kind, const Parameters::Dir& d,
                          const Eigen::VectorXd& x, CellState& state) {
  const Eigen::Index H = d.wh.cols();
  if (x.size() != d.wx.cols() || state.h.size() != H)
    throw std::invalid_argument("rnn_cell_step: dimension mismatch");
  Eigen::VectorXd a = d.wx * x + d.b;
  if (kind == CellKind::kLstm) {
    a += d.wh * state.h;
    Eigen::ArrayXd i = a.segment(0, H).array().unaryExpr(&detail::logistic);
    Eigen::ArrayXd f = a.segment(H, H).array().unaryExpr(&detail::logistic);
    Eigen::ArrayXd g = a.segment(2 * H, H).array().tanh();
    Eigen::ArrayXd o = a.segment(3 * H, H).array().unaryExpr(&detail::logistic);
    state.c = (f * state.c.array() + i * g).matrix();
    state.h = (o * state.c.array().tanh()).matrix();
  } else {
    Eigen::VectorXd wh_h = d.wh.topRows(2 * H) * state.h;
    Eigen::ArrayXd z = (a.segment(0, H) + wh_h.segment(0, H)).array().unaryExpr(&detail::logistic);
    Eigen::ArrayXd r = (a.segment(H, H) + wh_h.segment(H, H)).array().unaryExpr(&detail::logistic);
    Eigen::VectorXd rh = (r * state.h.array()).matrix();
    Eigen::ArrayXd n = (a.segment(2 * H, H) + d.wh.middleRows(2 * H, H) * rh).array().tanh();
    state.h = ((1.0 - z) * state.h.array() + z * n).matrix();
  }
}

namespace detail {

/// Runs one direction over the frame sequence. `order[k]` is the frame
/// consumed at step k; state starts at zero.
inline void run_direction(CellKind kind, const Parameters::Dir& d,
                          const Eigen::MatrixXd& input, const std::vector<int>& order,
                          DirCache& cache) {
  const Eigen::Index H = d.wh.cols();
  const Eigen::Index T = input.cols();
  const Eigen::Index G = d.wx.rows() / H;
  cache.gates.resize(G * H, T);
  cache.h.resize(H, T);
  if (kind == CellKind::kLstm) cache.c.resize(H, T);
  if (kind == CellKind::kGru) cache.rh.resize(H, T);

  Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(H);
  for (size_t k = 0; k < order.size(); ++k) {
    int t = order[k];
    Eigen::VectorXd a = d.wx * input.col(t) + d.b;
    if (kind == CellKind::kLstm) {
      a += d.wh * h;
      Eigen::ArrayXd i = a.segment(0, H).array().unaryExpr(&logistic);
      Eigen::ArrayXd f = a.segment(H, H).array().unaryExpr(&logistic);
      Eigen::ArrayXd g = a.segment(2 * H, H).array().tanh();
      Eigen::ArrayXd o = a.segment(3 * H, H).array().unaryExpr(&logistic);
      c = (f * c.array() + i * g).matrix();
      h = (o * c.array().tanh()).matrix();
      cache.gates.col(t) << i.matrix(), f.matrix(), g.matrix(), o.matrix();
      cache.c.col(t) = c;
    } else {
      Eigen::VectorXd wh_h = d.wh.topRows(2 * H) * h;
      Eigen::ArrayXd z = (a.segment(0, H) + wh_h.segment(0, H)).array().unaryExpr(&logistic);
      Eigen::ArrayXd r = (a.segment(H, H) + wh_h.segment(H, H)).array().unaryExpr(&logistic);
      Eigen::VectorXd rh = (r * h.array()).matrix();
      Eigen::ArrayXd n = (a.segment(2 * H, H) + d.wh.middleRows(2 * H, H) * rh).array().tanh();
      h = ((1.0 - z) * h.array() + z * n).matrix();
      cache.gates.col(t) << z.matrix(), r.matrix(), n.matrix();
      cache.rh.col(t) = rh;
    }
    cache.h.col(t) = h;
  }
}

/// BPTT for one direction; accumulates parameter grads and the input
/// gradient. `order` must match the forward pass.
inline void backprop_direction(CellKind kind, const Parameters::Dir& d,
                               const Eigen::MatrixXd& input, const std::vector<int>& order,
                               const DirCache& cache, const Eigen::MatrixXd& dh_seq,
                               Parameters::Dir& grad, Eigen::MatrixXd& dinput) {
  const Eigen::Index H = d.wh.cols();
  Eigen::VectorXd dh_carry = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd dc_carry = Eigen::VectorXd::Zero(H);
  for (size_t k = order.size(); k-- > 0;) {
    int t = order[k];
    bool first = (k == 0);
    Eigen::VectorXd h_prev = first ? Eigen::VectorXd::Zero(H).eval()
                                   : cache.h.col(order[k - 1]).eval();
    Eigen::ArrayXd dh = dh_seq.col(t).array() + dh_carry.array();

    if (kind == CellKind::kLstm) {
      Eigen::ArrayXd i = cache.gates.col(t).segment(0, H).array();
      Eigen::ArrayXd f = cache.gates.col(t).segment(H, H).array();
      Eigen::ArrayXd g = cache.gates.col(t).segment(2 * H, H).array();
      Eigen::ArrayXd o = cache.gates.col(t).segment(3 * H, H).array();
      Eigen::ArrayXd c_prev = first ? Eigen::ArrayXd::Zero(H).eval()
                                    : cache.c.col(order[k - 1]).array().eval();
      Eigen::ArrayXd tc = cache.c.col(t).array().tanh();
      Eigen::ArrayXd dc = dc_carry.array() + dh * o * (1.0 - tc * tc);
      Eigen::VectorXd da(4 * H);
      da << (dc * g * i * (1.0 - i)).matrix(), (dc * c_prev * f * (1.0 - f)).matrix(),
          (dc * i * (1.0 - g * g)).matrix(), (dh * tc * o * (1.0 - o)).matrix();
      grad.wx += da * input.col(t).transpose();
      grad.wh += da * h_prev.transpose();
      grad.b += da;
      dinput.col(t) += d.wx.transpose() * da;
      dh_carry = d.wh.transpose() * da;
      dc_carry = (dc * f).matrix();
    } else {
      Eigen::ArrayXd z = cache.gates.col(t).segment(0, H).array();
      Eigen::ArrayXd r = cache.gates.col(t).segment(H, H).array();
      Eigen::ArrayXd n = cache.gates.col(t).segment(2 * H, H).array();
      Eigen::ArrayXd dz = dh * (n - h_prev.array());
      Eigen::ArrayXd dn = dh * z;
      Eigen::ArrayXd dh_prev = dh * (1.0 - z);

      Eigen::VectorXd dan = (dn * (1.0 - n * n)).matrix();
      grad.wh.middleRows(2 * H, H) += dan * cache.rh.col(t).transpose();
      Eigen::ArrayXd drh = (d.wh.middleRows(2 * H, H).transpose() * dan).array();
      Eigen::ArrayXd dr = drh * h_prev.array();
      dh_prev += drh * r;

      Eigen::VectorXd dzr(2 * H);
      dzr << (dz * z * (1.0 - z)).matrix(), (dr * r * (1.0 - r)).matrix();
      Eigen::VectorXd da(3 * H);
      da << dzr, dan;
      grad.wx += da * input.col(t).transpose();
      grad.wh.topRows(2 * H) += dzr * h_prev.transpose();
      grad.b += da;
      dinput.col(t) += d.wx.transpose() * da;
      dh_prev += (d.wh.topRows(2 * H).transpose() * dzr).array();
      dh_carry = dh_prev.matrix();
    }
  }
}

inline std::vector<int> time_order(int T, bool reversed) {
  std::vector<int> order(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) order[static_cast<size_t>(t)] = reversed ? T - 1 - t : t;
  return order;
}

}  // namespace detail

/// Full forward pass keeping everything reverse mode needs.
inline ForwardCache forward_cached(const NetworkConfig& cfg, const Parameters& p,
                                   const Eigen::MatrixXd& image) {
  cfg.validate();
  if (image.rows() != NetworkConfig::kInputRows ||
      image.cols() != NetworkConfig::kInputCols)
    throw std::invalid_argument("input image must be 50x200");

  const ConvDims dims = conv_dims();
  const int T = NetworkConfig::kFrames;
  ForwardCache cache;

  // Image rows are row-major pixels: pixel (r, c) -> column r*w + c.
  Eigen::MatrixXd x(1, image.size());
  for (int r = 0; r < image.rows(); ++r)
    for (int c = 0; c < image.cols(); ++c)
      x(0, static_cast<Eigen::Index>(r) * image.cols() + c) = image(r, c);

  for (int i = 0; i < 3; ++i) {
    ConvCache cc;
    cc.input = std::move(x);
    cc.cols = detail::im2col3x3(cc.input, dims.in_h[i], dims.in_w[i]);
    cc.act = ((p.conv[static_cast<size_t>(i)].w * cc.cols).colwise() +
              p.conv[static_cast<size_t>(i)].b)
                 .cwiseMax(0.0);
    detail::maxpool2x2(cc.act, dims.in_h[i], dims.in_w[i], cc.pooled, cc.argmax);
    x = cc.pooled;
    cache.conv.push_back(std::move(cc));
  }

  // Mean over the remaining rows turns the 6x25 map into 25 frames.
  const int fh = dims.out_h[2], fw = dims.out_w[2];
  const Eigen::Index F = cfg.conv_channels[2];
  cache.feats = Eigen::MatrixXd::Zero(F, T);
  for (int r = 0; r < fh; ++r)
    for (int t = 0; t < fw; ++t)
      cache.feats.col(t) += x.col(static_cast<Eigen::Index>(r) * fw + t);
  cache.feats /= static_cast<double>(fh);

  Eigen::MatrixXd seq = cache.feats;
  const std::vector<int> fwd_order = detail::time_order(T, false);
  const std::vector<int> bwd_order = detail::time_order(T, true);
  for (int l = 0; l < NetworkConfig::kRnnLayers; ++l) {
    LayerCache lc;
    lc.input = std::move(seq);
    detail::run_direction(cfg.cell, p.rnn[static_cast<size_t>(l)].fwd, lc.input,
                          fwd_order, lc.fwd);
    detail::run_direction(cfg.cell, p.rnn[static_cast<size_t>(l)].bwd, lc.input,
                          bwd_order, lc.bwd);
    seq.resize(2 * cfg.hidden, T);
    seq.topRows(cfg.hidden) = lc.fwd.h;
    seq.bottomRows(cfg.hidden) = lc.bwd.h;
    cache.rnn.push_back(std::move(lc));
  }
  cache.rnn_out = seq;

  cache.logits = ((p.proj_w * seq).colwise() + p.proj_b).transpose();
  if (!cache.logits.allFinite())
    throw std::runtime_error("non-finite values in logits");

  cache.probs.resize(T, cfg.num_classes);
  for (int t = 0; t < T; ++t) {
    Eigen::ArrayXd row = cache.logits.row(t).array();
    row -= row.maxCoeff();
    Eigen::ArrayXd e = row.exp();
    cache.probs.row(t) = (e / e.sum()).matrix().transpose();
  }
  return cache;
}

/// Frame probabilities, T x (C+1), rows summing to 1.
inline Eigen::MatrixXd forward(const NetworkConfig& cfg, const Parameters& p,
                               const Eigen::MatrixXd& image) {
  return forward_cached(cfg, p, image).probs;
}

/// Feature sequence as frames x features (25 x F).
inline Eigen::MatrixXd extract_features(const NetworkConfig& cfg, const Parameters& p,
                                        const Eigen::MatrixXd& image) {
  return forward_cached(cfg, p, image).feats.transpose();
}

/// One bidirectional layer over a frames x in sequence -> frames x 2H,
/// forward direction in columns [0, H), backward in [H, 2H).
inline Eigen::MatrixXd run_birnn_layer(CellKind cell, const Parameters::RnnLayer& layer,
                                       const Eigen::MatrixXd& seq_tf) {
  const int T = static_cast<int>(seq_tf.rows());
  const Eigen::Index H = layer.fwd.wh.cols();
  Eigen::MatrixXd seq = seq_tf.transpose();
  LayerCache lc;
  detail::run_direction(cell, layer.fwd, seq, detail::time_order(T, false), lc.fwd);
  detail::run_direction(cell, layer.bwd, seq, detail::time_order(T, true), lc.bwd);
  Eigen::MatrixXd out(2 * H, T);
  out.topRows(H) = lc.fwd.h;
  out.bottomRows(H) = lc.bwd.h;
  return out.transpose();
}

/// Output of the recurrent stack as frames x 2*hidden.
inline Eigen::MatrixXd run_birnn_stack(const NetworkConfig& cfg, const Parameters& p,
                                       const Eigen::MatrixXd& feats_tf) {
  const int T = NetworkConfig::kFrames;
  if (feats_tf.rows() != T || feats_tf.cols() != cfg.conv_channels[2])
    throw std::invalid_argument("feature sequence must be 25 x F");
  Eigen::MatrixXd seq = feats_tf.transpose();
  const std::vector<int> fwd_order = detail::time_order(T, false);
  const std::vector<int> bwd_order = detail::time_order(T, true);
  for (int l = 0; l < NetworkConfig::kRnnLayers; ++l) {
    LayerCache lc;
    detail::run_direction(cfg.cell, p.rnn[static_cast<size_t>(l)].fwd, seq, fwd_order, lc.fwd);
    detail::run_direction(cfg.cell, p.rnn[static_cast<size_t>(l)].bwd, seq, bwd_order, lc.bwd);
    Eigen::MatrixXd out(2 * cfg.hidden, T);
    out.topRows(cfg.hidden) = lc.fwd.h;
    out.bottomRows(cfg.hidden) = lc.bwd.h;
    seq = std::move(out);
  }
  return seq.transpose();
}

/// Per-frame affine map and softmax over a frames x 2*hidden sequence.
inline Eigen::MatrixXd project_and_softmax(const NetworkConfig& cfg, const Parameters& p,
                                           const Eigen::MatrixXd& hidden_tf) {
  if (hidden_tf.cols() != 2 * cfg.hidden)
    throw std::invalid_argument("hidden sequence must be T x 2*hidden");
  Eigen::MatrixXd logits =
      ((p.proj_w * hidden_tf.transpose()).colwise() + p.proj_b).transpose();
  Eigen::MatrixXd probs(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    Eigen::ArrayXd row = logits.row(t).array();
    row -= row.maxCoeff();
    Eigen::ArrayXd e = row.exp();
    probs.row(t) = (e / e.sum()).matrix().transpose();
  }
  return probs;
}

/// Accumulates d(sum <grad_logits, logits>)/d(params) into `grad`.
inline void backward_accumulate(const NetworkConfig& cfg, const Parameters& p,
                                const ForwardCache& cache,
                                const Eigen::MatrixXd& grad_logits, GradientSet& grad) {
  const int T = NetworkConfig::kFrames;
  if (grad_logits.rows() != T || grad_logits.cols() != cfg.num_classes)
    throw std::invalid_argument("grad_logits must be 25 x num_classes");
  const ConvDims dims = conv_dims();

  Eigen::MatrixXd dl = grad_logits.transpose();  // K x T
  grad.proj_w += dl * cache.rnn_out.transpose();
  grad.proj_b += dl.rowwise().sum();
  Eigen::MatrixXd dseq = p.proj_w.transpose() * dl;  // 2H x T

  const std::vector<int> fwd_order = detail::time_order(T, false);
  const std::vector<int> bwd_order = detail::time_order(T, true);
  for (int l = NetworkConfig::kRnnLayers - 1; l >= 0; --l) {
    const LayerCache& lc = cache.rnn[static_cast<size_t>(l)];
    Eigen::MatrixXd dinput = Eigen::MatrixXd::Zero(lc.input.rows(), T);
    detail::backprop_direction(cfg.cell, p.rnn[static_cast<size_t>(l)].fwd, lc.input,
                               fwd_order, lc.fwd, dseq.topRows(cfg.hidden),
                               grad.rnn[static_cast<size_t>(l)].fwd, dinput);
    detail::backprop_direction(cfg.cell, p.rnn[static_cast<size_t>(l)].bwd, lc.input,
                               bwd_order, lc.bwd, dseq.bottomRows(cfg.hidden),
                               grad.rnn[static_cast<size_t>(l)].bwd, dinput);
    dseq = std::move(dinput);
  }

  // Undo the row mean: each of the 6 rows gets dfeats/6.
  const int fh = dims.out_h[2], fw = dims.out_w[2];
  Eigen::MatrixXd dpooled =
      Eigen::MatrixXd::Zero(cfg.conv_channels[2], static_cast<Eigen::Index>(fh) * fw);
  for (int r = 0; r < fh; ++r)
    for (int t = 0; t < fw; ++t)
      dpooled.col(static_cast<Eigen::Index>(r) * fw + t) =
          dseq.col(t) / static_cast<double>(fh);

  for (int i = 2; i >= 0; --i) {
    const ConvCache& cc = cache.conv[static_cast<size_t>(i)];
    const Eigen::Index C = cc.act.rows();
    Eigen::MatrixXd dact = Eigen::MatrixXd::Zero(C, cc.act.cols());
    for (Eigen::Index pix = 0; pix < cc.pooled.cols(); ++pix)
      for (Eigen::Index ch = 0; ch < C; ++ch)
        dact(ch, cc.argmax[static_cast<size_t>(pix) * C + ch]) += dpooled(ch, pix);
    Eigen::MatrixXd dz = (cc.act.array() > 0.0).cast<double>() * dact.array();
    grad.conv[static_cast<size_t>(i)].b += dz.rowwise().sum();
    grad.conv[static_cast<size_t>(i)].w += dz * cc.cols.transpose();
    if (i > 0) {
      Eigen::MatrixXd dcols = p.conv[static_cast<size_t>(i)].w.transpose() * dz;
      dpooled = detail::col2im3x3(dcols, cc.input.rows(), dims.in_h[i], dims.in_w[i]);
    }
  }
}

/// Gradient of sum <grad_logits, logits> wrt every parameter array.
inline GradientSet backward(const NetworkConfig& cfg, const Parameters& p,
                            const Eigen::MatrixXd& image,
                            const Eigen::MatrixXd& grad_logits) {
  ForwardCache cache = forward_cached(cfg, p, image);
  GradientSet grad = zeros_like(p);
  backward_accumulate(cfg, p, cache, grad_logits, grad);
  for (const ConstArrayRef& r : flatten(static_cast<const Parameters&>(grad)))
    if (!r.flat().allFinite())
      throw std::runtime_error("non-finite gradient in " + r.name);
  return grad;
}

}  // namespace wordrec::network

#endif  // WORDREC_NETWORK_HPP_
