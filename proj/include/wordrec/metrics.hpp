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
#ifndef WORDREC_METRICS_HPP_
#define WORDREC_METRICS_HPP_

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wordrec/network.hpp"
#include "wordrec/utf8.hpp"

namespace wordrec::metrics {

/// Levenshtein operation counts, reference-side convention: a deletion
/// is a reference character missing from the hypothesis, an insertion
/// is an extra hypothesis character.
struct EditBreakdown {
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;
  int total() const { return substitutions + insertions + deletions; }
};

/// Minimal unit-cost edit distance with the breakdown recovered by
/// backtrace; ties prefer substitution, then deletion, then insertion.
inline EditBreakdown edit_distance(std::u32string_view ref, std::u32string_view hyp) {
  const size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      int sub = d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1] ? 1 : 0);
      int del = d[i - 1][j] + 1;
      int ins = d[i][j - 1] + 1;
      d[i][j] = std::min({sub, del, ins});
    }
  }
  EditBreakdown out;
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1] ? 1 : 0)) {
      if (ref[i - 1] != hyp[j - 1]) ++out.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++out.deletions;
      --i;
    } else {
      ++out.insertions;
      --j;
    }
  }
  return out;
}

using Pair = std::pair<std::u32string, std::u32string>;  // (reference, hypothesis)

/// Micro-averaged character error rate: total edits over total
/// reference characters.
inline double cer(const std::vector<Pair>& pairs) {
  long long edits = 0, ref_chars = 0;
  for (const auto& [ref, hyp] : pairs) {
    edits += edit_distance(ref, hyp).total();
    ref_chars += static_cast<long long>(ref.size());
  }
  if (ref_chars == 0)
    throw std::invalid_argument("cer: no reference characters");
  return static_cast<double>(edits) / static_cast<double>(ref_chars);
}

/// Fraction of hypotheses that do not exactly match their reference.
inline double wer(const std::vector<Pair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("wer: empty pair list");
  long long wrong = 0;
  for (const auto& [ref, hyp] : pairs)
    if (ref != hyp) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------
// Static FLOP counts for one forward pass. Multiply-add counts as 2;
// pooling and activations count one op per output element.
// ---------------------------------------------------------------------

struct FlopsEstimate {
  struct Layer {
    std::string name;
    long long flops = 0;
  };
  std::vector<Layer> layers;

  long long total() const {
    long long t = 0;
    for (const Layer& l : layers) t += l.flops;
    return t;
  }
  double total_millions() const { return static_cast<double>(total()) / 1e6; }
};

inline long long conv_flops(int kh, int kw, int c_in, int c_out, int h_out, int w_out) {
  return 2LL * kh * kw * c_in * c_out * h_out * w_out;
}

inline long long affine_flops(int in, int out) { return 2LL * in * out; }

inline FlopsEstimate estimate_flops(const network::NetworkConfig& cfg) {
  cfg.validate();
  FlopsEstimate est;
  const network::ConvDims dims = network::conv_dims();
  const int k = network::NetworkConfig::kKernel;
  const int T = network::NetworkConfig::kFrames;
  int c_in = 1;
  for (int i = 0; i < 3; ++i) {
    int c_out = cfg.conv_channels[static_cast<size_t>(i)];
    long long spatial = static_cast<long long>(dims.in_h[i]) * dims.in_w[i];
    long long pooled = static_cast<long long>(dims.out_h[i]) * dims.out_w[i];
    std::string tag = std::to_string(i + 1);
    est.layers.push_back({"conv" + tag,
                          conv_flops(k, k, c_in, c_out, dims.in_h[i], dims.in_w[i])});
    est.layers.push_back({"relu" + tag, spatial * c_out});
    est.layers.push_back({"pool" + tag, pooled * c_out});
    c_in = c_out;
  }
  est.layers.push_back({"rowmean", static_cast<long long>(T) * cfg.conv_channels[2]});

  const int H = cfg.hidden, G = cfg.gates();
  int in = cfg.conv_channels[2];
  for (int l = 0; l < network::NetworkConfig::kRnnLayers; ++l) {
    long long per_gate = affine_flops(in, H) + affine_flops(H, H);
    long long gates = 2LL * T * G * per_gate;   // both directions
    long long elementwise = 2LL * T * H;        // state update per direction
    est.layers.push_back(
        {"birnn" + std::to_string(l + 1) + "_" + network::cell_name(cfg.cell),
         gates + elementwise});
    in = 2 * H;
  }
  est.layers.push_back({"proj", static_cast<long long>(T) * affine_flops(2 * H, cfg.num_classes)});
  est.layers.push_back({"softmax", static_cast<long long>(T) * cfg.num_classes});
  return est;
}

// ---------------------------------------------------------------------
// Evaluation reports.
// ---------------------------------------------------------------------

struct SampleRow {
  std::u32string reference;
  std::u32string hypothesis;
  EditBreakdown edits;
};

struct EvalReport {
  std::string split;
  std::string decoder;
  double mean_loss = 0.0;
  double cer = 0.0;
  double wer = 0.0;
  std::vector<SampleRow> samples;
  // Provenance carried in the CSV header.
  uint64_t seed = 0;
  std::string checkpoint_id;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

inline std::string csv_escape(const std::string& s) {
  bool need = s.find_first_of(",\"\n") != std::string::npos;
  if (!need) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["split"] = r.split;
  j["decoder"] = r.decoder;
  j["loss"] = r.mean_loss;
  j["cer"] = r.cer;
  j["wer"] = r.wer;
  j["samples"] = nlohmann::ordered_json::array();
  for (const SampleRow& row : r.samples) {
    j["samples"].push_back({{"ref", utf8_encode(row.reference)},
                            {"hyp", utf8_encode(row.hypothesis)},
                            {"s", row.edits.substitutions},
                            {"i", row.edits.insertions},
                            {"d", row.edits.deletions}});
  }
  return j;
}

/// One row per sample. The comment header records the decoder, seed,
/// checkpoint, the evaluation conventions (no augmentation, CER over
/// reference characters) and the headline numbers.
inline std::string report_to_csv(const EvalReport& r) {
  std::string out = "# split=" + r.split + " decoder=" + r.decoder +
                    " seed=" + std::to_string(r.seed) + " checkpoint=" + r.checkpoint_id +
                    " augmentation=none cer_denominator=reference_chars loss=" +
                    detail::fmt_double(r.mean_loss) + " cer=" + detail::fmt_double(r.cer) +
                    " wer=" + detail::fmt_double(r.wer) + "\n";
  out += "ref,hyp,s,i,d\n";
  for (const SampleRow& row : r.samples) {
    out += detail::csv_escape(utf8_encode(row.reference)) + "," +
           detail::csv_escape(utf8_encode(row.hypothesis)) + "," +
           std::to_string(row.edits.substitutions) + "," +
           std::to_string(row.edits.insertions) + "," +
           std::to_string(row.edits.deletions) + "\n";
  }
  return out;
}

}  // namespace wordrec::metrics

#endif  // WORDREC_METRICS_HPP_
