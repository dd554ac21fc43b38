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

// wordrec-synth: renders a synthetic word corpus as page images plus a
// manifest, ready for `wordrec ingest`.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "wordrec/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic page generator for wordrec"};
  std::filesystem::path out_dir = "synth_data";
  wordrec::synth::SynthConfig cfg;
  int words_per_page = 12;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", cfg.seed, "corpus seed");
  app.add_option("--words", cfg.word_count, "number of words");
  app.add_option("--alphabet", cfg.alphabet_size, "alphabet size");
  app.add_option("--len-min", cfg.len_min, "minimum word length");
  app.add_option("--len-max", cfg.len_max, "maximum word length");
  app.add_option("--noise", cfg.canvas_noise_sigma, "canvas noise sigma");
  app.add_option("--words-per-page", words_per_page, "words per page image");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    std::filesystem::path manifest =
        wordrec::synth::write_synth_dataset(cfg, out_dir, words_per_page);
    std::cout << manifest.string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
