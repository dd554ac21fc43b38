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

#include <cmath>

#include "wordrec/network.hpp"
#include "wordrec/rng.hpp"

using namespace wordrec;
namespace net = wordrec::network;

namespace {

Eigen::MatrixXd random_input(uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd img(50, 200);
  for (Eigen::Index r = 0; r < 50; ++r)
    for (Eigen::Index c = 0; c < 200; ++c) img(r, c) = rng.uniform(-1.0, 1.0);
  return img;
}

net::NetworkConfig tiny_config(net::CellKind cell) {
  net::NetworkConfig cfg;
  cfg.conv_channels = {2, 2, 2};
  cfg.hidden = 4;
  cfg.num_classes = 4;  // C = 3
  cfg.cell = cell;
  return cfg;
}

double flat_max_rel_err(const net::Parameters& analytic, const net::Parameters& numeric) {
  auto a = net::flatten(static_cast<const net::Parameters&>(analytic));
  auto n = net::flatten(static_cast<const net::Parameters&>(numeric));
  double worst = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    for (Eigen::Index k = 0; k < a[i].size(); ++k) {
      double av = a[i].data[k], nv = n[i].data[k];
      double rel = std::abs(av - nv) / std::max({std::abs(av), std::abs(nv), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("initialization is seed deterministic") {
  net::NetworkConfig cfg;
  cfg.num_classes = 21;
  net::Parameters a = net::init_params(cfg, 7);
  net::Parameters b = net::init_params(cfg, 7);
  auto ra = net::flatten(static_cast<const net::Parameters&>(a));
  auto rb = net::flatten(static_cast<const net::Parameters&>(b));
  for (size_t i = 0; i < ra.size(); ++i)
    REQUIRE(ra[i].flat() == rb[i].flat());
  net::Parameters c = net::init_params(cfg, 8);
  REQUIRE(net::flatten(static_cast<const net::Parameters&>(c))[0].flat() != ra[0].flat());
}

TEST_CASE("biases start at zero except the LSTM forget gate") {
  net::NetworkConfig cfg;
  cfg.num_classes = 21;
  cfg.cell = net::CellKind::kLstm;
  net::Parameters p = net::init_params(cfg, 3);
  for (const auto& conv : p.conv) REQUIRE(conv.b.isZero());
  REQUIRE(p.proj_b.isZero());
  const int H = cfg.hidden;
  for (const auto& layer : p.rnn) {
    for (const auto* dir : {&layer.fwd, &layer.bwd}) {
      REQUIRE(dir->b.segment(0, H).isZero());
      REQUIRE(dir->b.segment(H, H).isApproxToConstant(1.0));
      REQUIRE(dir->b.segment(2 * H, 2 * H).isZero());
    }
  }

  cfg.cell = net::CellKind::kGru;
  net::Parameters g = net::init_params(cfg, 3);
  for (const auto& layer : g.rnn)
    for (const auto* dir : {&layer.fwd, &layer.bwd}) REQUIRE(dir->b.isZero());
}

TEST_CASE("weight draws are centered within three standard errors") {
  net::NetworkConfig cfg;
  cfg.num_classes = 21;
  net::Parameters p = net::init_params(cfg, 12345);
  // conv3 kernel: 48 x (9*32) = 13824 entries >= 1e4.
  const Eigen::MatrixXd& w = p.conv[2].w;
  const double n = static_cast<double>(w.size());
  REQUIRE(n >= 1e4);
  double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  double se = bound / std::sqrt(3.0 * n);
  REQUIRE(std::abs(w.mean()) <= 3.0 * se);
  REQUIRE(w.maxCoeff() <= bound);
  REQUIRE(w.minCoeff() >= -bound);
}

TEST_CASE("the extractor always emits 25 frames") {
  for (auto cell : {net::CellKind::kLstm, net::CellKind::kGru}) {
    net::NetworkConfig cfg = tiny_config(cell);
    net::Parameters p = net::init_params(cfg, 1);
    Eigen::MatrixXd feats = net::extract_features(cfg, p, random_input(2));
    REQUIRE(feats.rows() == 25);
    REQUIRE(feats.cols() == cfg.conv_channels[2]);
  }
}

TEST_CASE("zero parameters give zero features") {
  net::NetworkConfig cfg = tiny_config(net::CellKind::kGru);
  net::Parameters p = net::init_params(cfg, 1);
  net::Parameters zero = net::zeros_like(p);
  Eigen::MatrixXd feats = net::extract_features(cfg, zero, random_input(3));
  REQUIRE(feats.isZero());
}

TEST_CASE("an 8px horizontal shift moves interior features one frame") {
  net::NetworkConfig cfg = tiny_config(net::CellKind::kGru);
  cfg.conv_channels = {4, 4, 4};
  net::Parameters p = net::init_params(cfg, 5);
  Eigen::MatrixXd img = random_input(6);
  Eigen::MatrixXd shifted(50, 200);
  shifted.setOnes();
  shifted.block(0, 8, 50, 192) = img.block(0, 0, 50, 192);

  Eigen::MatrixXd f0 = net::extract_features(cfg, p, img);
  Eigen::MatrixXd f1 = net::extract_features(cfg, p, shifted);
  // The receptive field spans about two frames, so compare away from
  // both borders: shifted frame f should equal original frame f-1.
  for (int f = 3; f <= 22; ++f)
    REQUIRE((f1.row(f) - f0.row(f - 1)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("gru cell with zero state and zero weights stays at zero") {
  net::NetworkConfig cfg = tiny_config(net::CellKind::kGru);
  net::Parameters zero = net::zeros_like(net::init_params(cfg, 1));
  net::CellState st = net::zero_state(cfg);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(2, 0.7);
  net::rnn_cell_step(net::CellKind::kGru, zero.rnn[0].fwd, x, st);
  REQUIRE(st.h.isZero());
}

TEST_CASE("lstm cell hand case with only the forget bias set") {
  net::NetworkConfig cfg = tiny_config(net::CellKind::kLstm);
  const int H = cfg.hidden;
  net::Parameters p = net::zeros_like(net::init_params(cfg, 1));
  p.rnn[0].fwd.b.segment(H, H).setConstant(1.0);

  net::CellState st = net::zero_state(cfg);
  st.c.setConstant(0.8);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  net::rnn_cell_step(net::CellKind::kLstm, p.rnn[0].fwd, x, st);
  const double sig1 = 1.0 / (1.0 + std::exp(-1.0));
  for (int i = 0; i < H; ++i) {
    REQUIRE(st.c(i) == Catch::Approx(sig1 * 0.8).epsilon(1e-12));
    REQUIRE(st.h(i) == Catch::Approx(0.5 * std::tanh(sig1 * 0.8)).epsilon(1e-12));
  }
}

TEST_CASE("bidirectional layer with tied directions is time symmetric") {
  for (auto cell : {net::CellKind::kLstm, net::CellKind::kGru}) {
    net::NetworkConfig cfg = tiny_config(cell);
    cfg.hidden = 5;
    cfg.conv_channels = {3, 3, 3};
    net::Parameters p = net::init_params(cfg, 9);
    net::Parameters::RnnLayer tied = p.rnn[0];
    tied.bwd = tied.fwd;

    Rng rng(10);
    Eigen::MatrixXd seq(25, 3);
    for (Eigen::Index t = 0; t < 25; ++t)
      for (Eigen::Index j = 0; j < 3; ++j) seq(t, j) = rng.uniform(-1, 1);
    Eigen::MatrixXd rev = seq.colwise().reverse();

    Eigen::MatrixXd out = net::run_birnn_layer(cell, tied, seq);
    Eigen::MatrixXd out_rev = net::run_birnn_layer(cell, tied, rev);
    const int H = cfg.hidden;
    // forward(reversed) == reverse(backward(original)) and vice versa.
    REQUIRE((out_rev.leftCols(H) - out.rightCols(H).colwise().reverse())
                .cwiseAbs()
                .maxCoeff() < 1e-12);
    REQUIRE((out_rev.rightCols(H) - out.leftCols(H).colwise().reverse())
                .cwiseAbs()
                .maxCoeff() < 1e-12);
  }
}

TEST_CASE("the stack keeps 25 frames and zero weights give zero output") {
  net::NetworkConfig cfg = tiny_config(net::CellKind::kGru);
  net::Parameters p = net::init_params(cfg, 11);
  Eigen::MatrixXd feats = net::extract_features(cfg, p, random_input(12));
  Eigen::MatrixXd hidden = net::run_birnn_stack(cfg, p, feats);
  REQUIRE(hidden.rows() == 25);
  REQUIRE(hidden.cols() == 2 * cfg.hidden);

  net::Parameters zero = net::zeros_like(p);
  REQUIRE(net::run_birnn_stack(cfg, zero, feats).isZero());
}

TEST_CASE("projection softmax is uniform for zero weights and shift invariant") {
  net::NetworkConfig cfg = tiny_config(net::CellKind::kGru);
  net::Parameters p = net::init_params(cfg, 13);
  net::Parameters zero = net::zeros_like(p);
  Eigen::MatrixXd hidden = Eigen::MatrixXd::Random(25, 2 * cfg.hidden);
  Eigen::MatrixXd probs = net::project_and_softmax(cfg, zero, hidden);
  REQUIRE(probs.isApproxToConstant(1.0 / cfg.num_classes, 1e-12));

  Eigen::MatrixXd probs1 = net::project_and_softmax(cfg, p, hidden);
  net::Parameters shifted = p;
  shifted.proj_b.array() += 3.5;  // same constant on every logit
  Eigen::MatrixXd probs2 = net::project_and_softmax(cfg, shifted, hidden);
  REQUIRE((probs1 - probs2).cwiseAbs().maxCoeff() < 1e-12);

  for (Eigen::Index t = 0; t < probs1.rows(); ++t)
    REQUIRE(std::abs(probs1.row(t).sum() - 1.0) < 1e-12);
}

TEST_CASE("forward emits valid distributions for random parameters") {
  for (auto cell : {net::CellKind::kLstm, net::CellKind::kGru}) {
    net::NetworkConfig cfg = tiny_config(cell);
    net::Parameters p = net::init_params(cfg, 21);
    Eigen::MatrixXd probs = net::forward(cfg, p, random_input(22));
    REQUIRE(probs.rows() == 25);
    REQUIRE(probs.cols() == cfg.num_classes);
    for (Eigen::Index t = 0; t < probs.rows(); ++t) {
      REQUIRE(std::abs(probs.row(t).sum() - 1.0) < 1e-9);
      REQUIRE(probs.row(t).minCoeff() > 0.0);
      REQUIRE(probs.row(t).maxCoeff() < 1.0);
    }
  }
}

TEST_CASE("backward is linear in the output gradient and deterministic") {
  net::NetworkConfig cfg = tiny_config(net::CellKind::kGru);
  net::Parameters p = net::init_params(cfg, 31);
  Eigen::MatrixXd img = random_input(32);
  Eigen::MatrixXd zero_g = Eigen::MatrixXd::Zero(25, cfg.num_classes);
  net::Parameters g0 = net::backward(cfg, p, img, zero_g);
  for (const auto& r : net::flatten(static_cast<const net::Parameters&>(g0)))
    REQUIRE(r.flat().isZero());

  Eigen::MatrixXd g = Eigen::MatrixXd::Random(25, cfg.num_classes);
  net::Parameters g1 = net::backward(cfg, p, img, g);
  net::Parameters g2 = net::backward(cfg, p, img, g);
  auto r1 = net::flatten(static_cast<const net::Parameters&>(g1));
  auto r2 = net::flatten(static_cast<const net::Parameters&>(g2));
  for (size_t i = 0; i < r1.size(); ++i) REQUIRE(r1[i].flat() == r2[i].flat());
}

TEST_CASE("parameter gradients match central finite differences") {
  const double h = 1e-5;
  for (auto cell : {net::CellKind::kLstm, net::CellKind::kGru}) {
    net::NetworkConfig cfg = tiny_config(cell);
    net::Parameters p = net::init_params(cfg, 41);
    Eigen::MatrixXd img = random_input(42);
    Rng grng(43);
    Eigen::MatrixXd gl(25, cfg.num_classes);
    for (Eigen::Index t = 0; t < gl.rows(); ++t)
      for (Eigen::Index k = 0; k < gl.cols(); ++k) gl(t, k) = grng.uniform(-1, 1);

    net::Parameters analytic = net::backward(cfg, p, img, gl);
    net::Parameters numeric = net::zeros_like(p);
    auto objective = [&](const net::Parameters& q) {
      return (net::forward_cached(cfg, q, img).logits.array() * gl.array()).sum();
    };
    auto refs = net::flatten(p);
    auto nrefs = net::flatten(numeric);
    for (size_t i = 0; i < refs.size(); ++i) {
      for (Eigen::Index k = 0; k < refs[i].size(); ++k) {
        double keep = refs[i].data[k];
        refs[i].data[k] = keep + h;
        double fp = objective(p);
        refs[i].data[k] = keep - h;
        double fm = objective(p);
        refs[i].data[k] = keep;
        nrefs[i].data[k] = (fp - fm) / (2 * h);
      }
    }
    double err = flat_max_rel_err(analytic, numeric);
    INFO("cell " << net::cell_name(cell) << " max rel err " << err);
    REQUIRE(err < 1e-4);
  }
}
