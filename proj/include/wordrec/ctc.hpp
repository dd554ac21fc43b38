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
#ifndef WORDREC_CTC_HPP_
#define WORDREC_CTC_HPP_

// CTC loss and gradient via log-space forward-backward over the
// blank-expanded label sequence, plus greedy and prefix-beam decoding.
// The brute-force path enumerators are exponential-time oracles used by
// the test suites; they share no code with the dynamic programs.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace wordrec::ctc {

using Labels = std::vector<int>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double logadd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

/// Blank-interleaved label sequence: blank, l1, blank, l2, ..., blank.
inline std::vector<int> expand_label(const Labels& labels, int blank) {
  std::vector<int> out;
  out.reserve(2 * labels.size() + 1);
  out.push_back(blank);
  for (int l : labels) {
    if (l == blank) throw std::invalid_argument("blank id in label sequence");
    if (l < 0) throw std::invalid_argument("negative label id");
    out.push_back(l);
    out.push_back(blank);
  }
  return out;
}

/// Merge adjacent repeats, then delete blanks.
template <class Seq>
inline Labels collapse_path(const Seq& path, int blank) {
  Labels out;
  int prev = -1;
  for (int id : path) {
    if (id != prev && id != blank) out.push_back(id);
    prev = id;
  }
  return out;
}

inline int adjacent_repeats(const Labels& labels) {
  int n = 0;
  for (size_t i = 1; i < labels.size(); ++i)
    if (labels[i] == labels[i - 1]) ++n;
  return n;
}

namespace detail {

inline void validate_probs(const Eigen::MatrixXd& probs, int blank) {
  if (probs.rows() < 1 || probs.cols() < 2)
    throw std::invalid_argument("probability matrix must be T x K with K >= 2");
  if (blank < 0 || blank >= probs.cols())
    throw std::invalid_argument("blank id out of range");
  for (Eigen::Index t = 0; t < probs.rows(); ++t) {
    if (probs.row(t).minCoeff() < 0.0)
      throw std::invalid_argument("negative probability entry");
    if (std::abs(probs.row(t).sum() - 1.0) > 1e-6)
      throw std::invalid_argument("row " + std::to_string(t) +
                                  " is not a probability distribution");
  }
}

inline void validate_target(const Eigen::MatrixXd& probs, const Labels& labels,
                            int blank) {
  for (int l : labels)
    if (l < 0 || l >= probs.cols() || l == blank)
      throw std::invalid_argument("label id out of range");
  Eigen::Index min_frames =
      static_cast<Eigen::Index>(labels.size()) + adjacent_repeats(labels);
  if (probs.rows() < min_frames)
    throw std::invalid_argument(
        "target too long for T=" + std::to_string(probs.rows()) + " frames (needs " +
        std::to_string(min_frames) + ")");
}

/// Full alpha lattice (T x S), emissions included at every step.
inline Eigen::MatrixXd alpha_lattice(const Eigen::MatrixXd& lp,
                                     const std::vector<int>& ext, int blank) {
  const Eigen::Index T = lp.rows();
  const Eigen::Index S = static_cast<Eigen::Index>(ext.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Constant(T, S, kNegInf);
  a(0, 0) = lp(0, ext[0]);
  if (S > 1) a(0, 1) = lp(0, ext[1]);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      double acc = a(t - 1, s);
      if (s >= 1) acc = logadd(acc, a(t - 1, s - 1));
      if (s >= 2 && ext[s] != blank && ext[s] != ext[s - 2])
        acc = logadd(acc, a(t - 1, s - 2));
      a(t, s) = acc == kNegInf ? kNegInf : acc + lp(t, ext[s]);
    }
  }
  return a;
}

inline Eigen::MatrixXd beta_lattice(const Eigen::MatrixXd& lp,
                                    const std::vector<int>& ext, int blank) {
  const Eigen::Index T = lp.rows();
  const Eigen::Index S = static_cast<Eigen::Index>(ext.size());
  Eigen::MatrixXd b = Eigen::MatrixXd::Constant(T, S, kNegInf);
  b(T - 1, S - 1) = lp(T - 1, ext[S - 1]);
  if (S > 1) b(T - 1, S - 2) = lp(T - 1, ext[S - 2]);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (Eigen::Index s = S - 1; s >= 0; --s) {
      double acc = b(t + 1, s);
      if (s + 1 < S) acc = logadd(acc, b(t + 1, s + 1));
      if (s + 2 < S && ext[s + 2] != blank && ext[s + 2] != ext[s])
        acc = logadd(acc, b(t + 1, s + 2));
      b(t, s) = acc == kNegInf ? kNegInf : acc + lp(t, ext[s]);
    }
  }
  return b;
}

}  // namespace detail

/// Negative log probability of all alignments collapsing to `labels`.
inline double ctc_loss(const Eigen::MatrixXd& probs, const Labels& labels,
                       int blank) {
  detail::validate_probs(probs, blank);
  detail::validate_target(probs, labels, blank);
  std::vector<int> ext = expand_label(labels, blank);
  Eigen::MatrixXd lp = probs.array().max(0.0).log().matrix();
  Eigen::MatrixXd a = detail::alpha_lattice(lp, ext, blank);
  const Eigen::Index T = probs.rows(), S = static_cast<Eigen::Index>(ext.size());
  double log_p = a(T - 1, S - 1);
  if (S > 1) log_p = logadd(log_p, a(T - 1, S - 2));
  return -log_p;
}

struct CtcResult {
  double loss = 0.0;
  Eigen::MatrixXd grad_logits;  // T x K, gradient wrt pre-softmax logits
};

/// Loss and gradient wrt the logits that produced `probs` via softmax:
/// grad[t][k] = probs[t][k] - posterior mass of class k at frame t.
inline CtcResult ctc_grad(const Eigen::MatrixXd& probs, const Labels& labels,
                          int blank) {
  detail::validate_probs(probs, blank);
  detail::validate_target(probs, labels, blank);
  std::vector<int> ext = expand_label(labels, blank);
  const Eigen::Index T = probs.rows(), S = static_cast<Eigen::Index>(ext.size());
  Eigen::MatrixXd lp = probs.array().max(0.0).log().matrix();
  Eigen::MatrixXd a = detail::alpha_lattice(lp, ext, blank);
  Eigen::MatrixXd b = detail::beta_lattice(lp, ext, blank);

  double log_p = a(T - 1, S - 1);
  if (S > 1) log_p = logadd(log_p, a(T - 1, S - 2));

  // Both lattices include the frame-t emission, so divide by it once.
  Eigen::MatrixXd posterior = Eigen::MatrixXd::Zero(T, probs.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index s = 0; s < S; ++s) {
      if (a(t, s) == kNegInf || b(t, s) == kNegInf) continue;
      double g = a(t, s) + b(t, s) - lp(t, ext[s]) - log_p;
      posterior(t, ext[s]) += std::exp(g);
    }
  }
  CtcResult res;
  res.loss = -log_p;
  res.grad_logits = probs - posterior;
  return res;
}

/// Collapse of the per-frame argmax path; ties break to the lowest id.
inline Labels greedy_decode(const Eigen::MatrixXd& probs, int blank) {
  detail::validate_probs(probs, blank);
  std::vector<int> path(static_cast<size_t>(probs.rows()));
  for (Eigen::Index t = 0; t < probs.rows(); ++t) {
    int best = 0;
    for (Eigen::Index k = 1; k < probs.cols(); ++k)
      if (probs(t, k) > probs(t, best)) best = static_cast<int>(k);
    path[static_cast<size_t>(t)] = best;
  }
  return collapse_path(path, blank);
}

/// Prefix beam search over collapsed labelings. Keeps per-prefix
/// blank/non-blank mass; exact when beam_width covers every live prefix.
inline Labels beam_decode(const Eigen::MatrixXd& probs, int blank,
                          int beam_width) {
  detail::validate_probs(probs, blank);
  if (beam_width < 1) throw std::invalid_argument("beam width must be >= 1");
  const Eigen::Index T = probs.rows(), K = probs.cols();
  Eigen::MatrixXd lp = probs.array().max(0.0).log().matrix();

  struct Score {
    double pb = kNegInf;   // mass of paths ending in blank
    double pnb = kNegInf;  // mass of paths ending in the last label
    double total() const { return logadd(pb, pnb); }
  };
  std::map<Labels, Score> beams;
  beams[{}] = Score{0.0, kNegInf};

  for (Eigen::Index t = 0; t < T; ++t) {
    std::map<Labels, Score> next;
    for (const auto& [prefix, sc] : beams) {
      double tot = sc.total();
      for (int k = 0; k < K; ++k) {
        double p = lp(t, k);
        if (k == blank) {
          Score& s = next[prefix];
          s.pb = logadd(s.pb, tot + p);
        } else if (!prefix.empty() && prefix.back() == k) {
          Score& same = next[prefix];  // repeat frame merges into the prefix
          same.pnb = logadd(same.pnb, sc.pnb + p);
          Labels ext = prefix;         // blank-separated repeat extends it
          ext.push_back(k);
          Score& s = next[ext];
          s.pnb = logadd(s.pnb, sc.pb + p);
        } else {
          Labels ext = prefix;
          ext.push_back(k);
          Score& s = next[ext];
          s.pnb = logadd(s.pnb, tot + p);
        }
      }
    }
    if (static_cast<int>(next.size()) > beam_width) {
      std::vector<std::pair<Labels, Score>> order(next.begin(), next.end());
      std::stable_sort(order.begin(), order.end(),
                       [](const auto& x, const auto& y) {
                         return x.second.total() > y.second.total();
                       });
      order.resize(static_cast<size_t>(beam_width));
      next = std::map<Labels, Score>(order.begin(), order.end());
    }
    beams = std::move(next);
  }

  Labels best;
  double best_score = kNegInf;
  for (const auto& [prefix, sc] : beams) {
    double s = sc.total();
    if (s > best_score) {
      best_score = s;
      best = prefix;
    }
  }
  return best;
}

// ---------------------------------------------------------------------
// Exhaustive oracles. (C+1)^T paths; bounded to small instances.
// ---------------------------------------------------------------------

namespace detail {

template <class Fn>
inline void for_each_path(Eigen::Index T, Eigen::Index K, Fn&& fn) {
  std::vector<int> path(static_cast<size_t>(T), 0);
  while (true) {
    fn(path);
    Eigen::Index i = T - 1;
    while (i >= 0 && path[static_cast<size_t>(i)] == K - 1) {
      path[static_cast<size_t>(i)] = 0;
      --i;
    }
    if (i < 0) break;
    ++path[static_cast<size_t>(i)];
  }
}

inline void check_enumerable(const Eigen::MatrixXd& probs) {
  if (probs.rows() > 8 || probs.cols() > 5)
    throw std::invalid_argument("instance too large for path enumeration");
}

}  // namespace detail

inline double brute_force_loss(const Eigen::MatrixXd& probs, const Labels& labels,
                               int blank) {
  detail::validate_probs(probs, blank);
  detail::check_enumerable(probs);
  double sum = 0.0;
  detail::for_each_path(probs.rows(), probs.cols(), [&](const std::vector<int>& path) {
    if (collapse_path(path, blank) != labels) return;
    double p = 1.0;
    for (Eigen::Index t = 0; t < probs.rows(); ++t)
      p *= probs(t, path[static_cast<size_t>(t)]);
    sum += p;
  });
  return -std::log(sum);
}

/// Total probability of every collapsed labeling; ties go to the
/// lexicographically smallest.
inline Labels brute_force_best_labeling(const Eigen::MatrixXd& probs, int blank) {
  detail::validate_probs(probs, blank);
  detail::check_enumerable(probs);
  std::map<Labels, double> totals;
  detail::for_each_path(probs.rows(), probs.cols(), [&](const std::vector<int>& path) {
    double p = 1.0;
    for (Eigen::Index t = 0; t < probs.rows(); ++t)
      p *= probs(t, path[static_cast<size_t>(t)]);
    totals[collapse_path(path, blank)] += p;
  });
  Labels best;
  double best_p = -1.0;
  for (const auto& [labeling, p] : totals) {
    if (p > best_p) {
      best_p = p;
      best = labeling;
    }
  }
  return best;
}

/// All per-labeling totals (test hook; the probabilities partition 1).
inline std::map<Labels, double> brute_force_labeling_totals(
    const Eigen::MatrixXd& probs, int blank) {
  detail::validate_probs(probs, blank);
  detail::check_enumerable(probs);
  std::map<Labels, double> totals;
  detail::for_each_path(probs.rows(), probs.cols(), [&](const std::vector<int>& path) {
    double p = 1.0;
    for (Eigen::Index t = 0; t < probs.rows(); ++t)
      p *= probs(t, path[static_cast<size_t>(t)]);
    totals[collapse_path(path, blank)] += p;
  });
  return totals;
}

}  // namespace wordrec::ctc

#endif  // WORDREC_CTC_HPP_
