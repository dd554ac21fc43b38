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

#include <map>
#include <string>

#include "wordrec/metrics.hpp"
#include "wordrec/rng.hpp"

using namespace wordrec;
using metrics::EditBreakdown;
using metrics::edit_distance;

namespace {

// Independent oracle: memoized recursion straight off the definition.
int lev_oracle(std::u32string_view a, std::u32string_view b,
               std::map<std::pair<size_t, size_t>, int>& memo) {
  if (a.empty()) return static_cast<int>(b.size());
  if (b.empty()) return static_cast<int>(a.size());
  auto key = std::make_pair(a.size(), b.size());
  auto it = memo.find(key);
  if (it != memo.end()) return it->second;
  int same = a.back() == b.back() ? 0 : 1;
  int best = lev_oracle(a.substr(0, a.size() - 1), b.substr(0, b.size() - 1), memo) + same;
  best = std::min(best, lev_oracle(a.substr(0, a.size() - 1), b, memo) + 1);
  best = std::min(best, lev_oracle(a, b.substr(0, b.size() - 1), memo) + 1);
  memo[key] = best;
  return best;
}

int lev_oracle(std::u32string_view a, std::u32string_view b) {
  std::map<std::pair<size_t, size_t>, int> memo;
  return lev_oracle(a, b, memo);
}

std::u32string random_word(Rng& rng, int max_len, int alphabet) {
  std::u32string s;
  int len = static_cast<int>(rng.int_in(0, max_len));
  for (int i = 0; i < len; ++i)
    s.push_back(static_cast<char32_t>(U'a' + rng.int_in(0, alphabet - 1)));
  return s;
}

}  // namespace

TEST_CASE("edit distance hand cases") {
  EditBreakdown eq = edit_distance(U"abc", U"abc");
  REQUIRE(eq.total() == 0);

  EditBreakdown del = edit_distance(U"abc", U"");
  REQUIRE(del.deletions == 3);
  REQUIRE(del.insertions == 0);
  REQUIRE(del.substitutions == 0);

  EditBreakdown ins = edit_distance(U"", U"ab");
  REQUIRE(ins.insertions == 2);

  REQUIRE(edit_distance(U"kitten", U"sitting").total() == 3);
}

TEST_CASE("edit distance breakdown sums to the minimal total") {
  Rng rng(314);
  for (int i = 0; i < 500; ++i) {
    std::u32string a = random_word(rng, 6, 3);
    std::u32string b = random_word(rng, 6, 3);
    EditBreakdown e = edit_distance(a, b);
    REQUIRE(e.total() == lev_oracle(a, b));
    REQUIRE(e.substitutions >= 0);
    REQUIRE(e.insertions >= 0);
    REQUIRE(e.deletions >= 0);
  }
}

TEST_CASE("edit distance is a metric on strings") {
  Rng rng(2718);
  std::vector<std::u32string> words;
  for (int i = 0; i < 40; ++i) words.push_back(random_word(rng, 5, 3));
  for (const auto& a : words) {
    REQUIRE(edit_distance(a, a).total() == 0);
    for (const auto& b : words) {
      int ab = edit_distance(a, b).total();
      REQUIRE(ab == edit_distance(b, a).total());
      if (a != b) REQUIRE(ab > 0);
      for (const auto& c : words)
        REQUIRE(edit_distance(a, c).total() <= ab + edit_distance(b, c).total());
    }
  }
}

TEST_CASE("equal-length distance is bounded by hamming distance") {
  Rng rng(99);
  for (int i = 0; i < 200; ++i) {
    int len = static_cast<int>(rng.int_in(1, 6));
    std::u32string a, b;
    int hamming = 0;
    for (int k = 0; k < len; ++k) {
      char32_t ca = static_cast<char32_t>(U'a' + rng.int_in(0, 2));
      char32_t cb = static_cast<char32_t>(U'a' + rng.int_in(0, 2));
      a.push_back(ca);
      b.push_back(cb);
      if (ca != cb) ++hamming;
    }
    REQUIRE(edit_distance(a, b).total() <= hamming);
  }
}

TEST_CASE("cer follows the micro-average formula") {
  REQUIRE(metrics::cer({{U"abcde", U"abxde"}}) == Catch::Approx(0.2));
  REQUIRE(metrics::cer({{U"abc", U"abc"}, {U"de", U"de"}}) == 0.0);
  // 10 reference chars, 1 edit in total.
  REQUIRE(metrics::cer({{U"abcde", U"abcde"}, {U"fghij", U"fghik"}}) == Catch::Approx(0.1));
  REQUIRE_THROWS(metrics::cer({{U"", U"x"}}));
}

TEST_CASE("cer and wer are invariant under pair permutation") {
  std::vector<metrics::Pair> pairs = {
      {U"abc", U"abd"}, {U"xy", U"xy"}, {U"hello", U"hxllo"}, {U"q", U""}};
  std::vector<metrics::Pair> shuffled = {pairs[2], pairs[0], pairs[3], pairs[1]};
  REQUIRE(metrics::cer(pairs) == metrics::cer(shuffled));
  REQUIRE(metrics::wer(pairs) == metrics::wer(shuffled));
}

TEST_CASE("wer counts exact word mismatches") {
  REQUIRE(metrics::wer({{U"a", U"a"}, {U"b", U"x"}, {U"c", U"c"}, {U"d", U"d"}}) ==
          Catch::Approx(0.25));
  REQUIRE(metrics::wer({{U"a", U"a"}}) == 0.0);
  REQUIRE(metrics::wer({{U"a", U"b"}, {U"c", U"d"}}) == 1.0);
  REQUIRE_THROWS(metrics::wer({}));
}

TEST_CASE("flops formulas match the stated counting rules") {
  REQUIRE(metrics::conv_flops(3, 3, 1, 8, 16, 16) == 36864);
  REQUIRE(metrics::affine_flops(4, 3) == 24);

  network::NetworkConfig cfg;
  cfg.conv_channels = {4, 8, 12};
  cfg.hidden = 16;
  cfg.num_classes = 9;
  metrics::FlopsEstimate est = metrics::estimate_flops(cfg);
  long long sum = 0;
  for (const auto& l : est.layers) sum += l.flops;
  REQUIRE(est.total() == sum);
  REQUIRE(est.total_millions() == Catch::Approx(static_cast<double>(sum) / 1e6));
  // conv1 on the 50x200 canvas: 2*3*3*1*4*50*200.
  REQUIRE(est.layers[0].name == "conv1");
  REQUIRE(est.layers[0].flops == 2LL * 9 * 1 * 4 * 50 * 200);
  // GRU has 3 gates, LSTM 4: estimates must differ.
  network::NetworkConfig lstm_cfg = cfg;
  lstm_cfg.cell = network::CellKind::kLstm;
  REQUIRE(metrics::estimate_flops(lstm_cfg).total() > est.total());
}

TEST_CASE("report serialization carries schema and header fields") {
  metrics::EvalReport r;
  r.split = "test";
  r.decoder = "beam10";
  r.mean_loss = 1.5;
  r.cer = 0.25;
  r.wer = 0.5;
  r.seed = 17;
  r.checkpoint_id = "checkpoint.ckpt";
  metrics::SampleRow row;
  row.reference = U"ab";
  row.hypothesis = U"ax";
  row.edits = edit_distance(row.reference, row.hypothesis);
  r.samples.push_back(row);

  nlohmann::ordered_json j = metrics::report_to_json(r);
  REQUIRE(j.at("split") == "test");
  REQUIRE(j.at("decoder") == "beam10");
  REQUIRE(j.at("loss") == 1.5);
  REQUIRE(j.at("cer") == 0.25);
  REQUIRE(j.at("wer") == 0.5);
  REQUIRE(j.at("samples").size() == 1);
  REQUIRE(j.at("samples")[0].at("ref") == "ab");
  REQUIRE(j.at("samples")[0].at("s") == 1);

  std::string csv = metrics::report_to_csv(r);
  REQUIRE(csv.find("decoder=beam10") != std::string::npos);
  REQUIRE(csv.find("seed=17") != std::string::npos);
  REQUIRE(csv.find("checkpoint=checkpoint.ckpt") != std::string::npos);
  REQUIRE(csv.find("augmentation=none") != std::string::npos);
  REQUIRE(csv.find("ref,hyp,s,i,d\n") != std::string::npos);
  REQUIRE(csv.find("ab,ax,1,0,0\n") != std::string::npos);
}
