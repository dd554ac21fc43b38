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

// wordrec: batch CLI for the handwritten-word recognizer.
// Subcommands: ingest, train, eval, predict, benchmark, augment-sheet.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "wordrec/ctc.hpp"
#include "wordrec/dataset.hpp"
#include "wordrec/imageproc.hpp"
#include "wordrec/metrics.hpp"
#include "wordrec/network.hpp"
#include "wordrec/png.hpp"
#include "wordrec/synth.hpp"
#include "wordrec/trainer.hpp"
#include "wordrec/utf8.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct Options {
  fs::path manifest;
  fs::path data_dir;
  fs::path out_dir = "out";
  uint64_t seed = 0;
  int max_word_len = 10;

  std::vector<int> conv_channels{16, 32, 48};
  std::string cell = "gru";
  int hidden = 64;

  int batch_size = 16;
  double learning_rate = 0.001;
  int max_epochs = 1000;
  int patience = 0;
  double stop_at_val_cer = -1.0;
  double grad_clip = 0.0;
  std::string policies = "default";  // "default", "none" or a JSON path
};

/// --config JSON fills defaults; explicit flags still win because the
/// file is applied before CLI11 parses.
void apply_config_file(Options& o, const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config not found: " + path.string());
  json j;
  f >> j;
  if (j.contains("manifest")) o.manifest = j["manifest"].get<std::string>();
  if (j.contains("data_dir")) o.data_dir = j["data_dir"].get<std::string>();
  if (j.contains("out_dir")) o.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("seed")) o.seed = j["seed"].get<uint64_t>();
  if (j.contains("max_word_len")) o.max_word_len = j["max_word_len"].get<int>();
  if (j.contains("policies")) o.policies = j["policies"].get<std::string>();
  if (j.contains("network")) {
    const json& n = j["network"];
    if (n.contains("conv_channels")) o.conv_channels = n["conv_channels"].get<std::vector<int>>();
    if (n.contains("cell")) o.cell = n["cell"].get<std::string>();
    if (n.contains("hidden")) o.hidden = n["hidden"].get<int>();
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    if (t.contains("batch_size")) o.batch_size = t["batch_size"].get<int>();
    if (t.contains("learning_rate")) o.learning_rate = t["learning_rate"].get<double>();
    if (t.contains("max_epochs")) o.max_epochs = t["max_epochs"].get<int>();
    if (t.contains("early_stop_patience")) o.patience = t["early_stop_patience"].get<int>();
    if (t.contains("stop_at_val_cer")) o.stop_at_val_cer = t["stop_at_val_cer"].get<double>();
    if (t.contains("grad_clip")) o.grad_clip = t["grad_clip"].get<double>();
  }
}

std::vector<wordrec::imageproc::AugmentPolicy> resolve_policies(const std::string& spec) {
  if (spec == "none") return {};
  if (spec == "default") return wordrec::imageproc::default_policies();
  std::ifstream f(spec);
  if (!f) throw std::runtime_error("policy file not found: " + spec);
  json j;
  f >> j;
  return wordrec::imageproc::policies_from_json(j);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("file not found: " + path.string());
  json j;
  f >> j;
  return j;
}

// -------------------------------------------------------------------
// Ingested artifacts.
// -------------------------------------------------------------------

struct Artifacts {
  std::vector<wordrec::dataset::WordSample> samples;
  wordrec::dataset::Charset charset;
  wordrec::dataset::SplitAssignment split;
};

Artifacts load_artifacts(const fs::path& data_dir) {
  Artifacts a;
  a.charset = wordrec::dataset::charset_from_json(read_json(data_dir / "charset.json"));
  a.split = wordrec::dataset::split_from_json(read_json(data_dir / "splits.json"));
  for (const json& e : read_json(data_dir / "index.json")) {
    wordrec::dataset::WordSample s;
    s.source_id = e.at("id").get<std::string>();
    s.transcript = wordrec::utf8_decode(e.at("text").get<std::string>());
    s.image = wordrec::png::read_gray(data_dir / e.at("image").get<std::string>());
    a.samples.push_back(std::move(s));
  }
  return a;
}

int cmd_ingest(const Options& o) {
  if (o.manifest.empty()) throw std::runtime_error("ingest needs --manifest");
  auto pages = wordrec::dataset::load_manifest(o.manifest);
  auto samples = wordrec::dataset::extract_words(pages);
  const size_t before = samples.size();
  samples = wordrec::dataset::filter_by_length(std::move(samples), o.max_word_len);
  auto charset = wordrec::dataset::build_charset(samples);
  auto split = wordrec::dataset::split_dataset(samples, o.seed);

  fs::create_directories(o.out_dir / "crops");
  ordered_json index = ordered_json::array();
  std::map<int, int> length_hist;
  for (size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "crops/%05zu.png", i);
    wordrec::png::write_gray(o.out_dir / name, samples[i].image);
    index.push_back({{"id", samples[i].source_id},
                     {"image", name},
                     {"text", wordrec::utf8_encode(samples[i].transcript)}});
    ++length_hist[static_cast<int>(samples[i].transcript.size())];
  }
  write_text(o.out_dir / "index.json", index.dump(2) + "\n");
  write_text(o.out_dir / "charset.json",
             wordrec::dataset::charset_to_json(charset).dump() + "\n");
  write_text(o.out_dir / "splits.json",
             wordrec::dataset::split_to_json(split).dump(2) + "\n");

  std::cout << "pages: " << pages.size() << "\n";
  std::cout << "samples: " << samples.size() << " (dropped " << before - samples.size()
            << " longer than " << o.max_word_len << ")\n";
  std::cout << "charset size: " << charset.size() << "\n";
  std::cout << "split: train " << split.train.size() << ", val " << split.val.size()
            << ", test " << split.test.size() << "\n";
  std::cout << "length histogram:";
  for (const auto& [len, n] : length_hist) std::cout << " " << len << ":" << n;
  std::cout << "\n";
  return 0;
}

// -------------------------------------------------------------------

wordrec::network::NetworkConfig make_net_config(const Options& o, int charset_size) {
  wordrec::network::NetworkConfig cfg;
  cfg.conv_channels = o.conv_channels;
  cfg.cell = wordrec::network::cell_from_name(o.cell);
  cfg.hidden = o.hidden;
  cfg.num_classes = charset_size + 1;
  cfg.validate();
  return cfg;
}

wordrec::trainer::TrainConfig make_train_config(const Options& o) {
  wordrec::trainer::TrainConfig cfg;
  cfg.batch_size = o.batch_size;
  cfg.learning_rate = o.learning_rate;
  cfg.max_epochs = o.max_epochs;
  cfg.seed = o.seed;
  cfg.policies = resolve_policies(o.policies);
  cfg.early_stop_patience = o.patience;
  cfg.stop_at_val_cer = o.stop_at_val_cer;
  cfg.grad_clip = o.grad_clip;
  cfg.validate();
  return cfg;
}

int cmd_train(const Options& o) {
  if (o.data_dir.empty()) throw std::runtime_error("train needs --data");
  Artifacts a = load_artifacts(o.data_dir);
  auto data = wordrec::trainer::make_train_data(a.samples, a.charset, a.split);
  auto netcfg = make_net_config(o, a.charset.size());
  auto traincfg = make_train_config(o);

  wordrec::trainer::FitResult result = wordrec::trainer::fit(traincfg, netcfg, data);
  fs::create_directories(o.out_dir);
  wordrec::trainer::save_checkpoint(o.out_dir / "checkpoint.ckpt", result.best);
  write_text(o.out_dir / "loss_curve.csv", wordrec::trainer::curve_to_csv(result.curve));

  std::cout << "epochs run: " << result.curve.size() << "\n";
  std::cout << "best epoch: " << result.best.epoch << "\n";
  if (!std::isnan(result.best.best_val_loss))
    std::cout << "best val loss: " << result.best.best_val_loss << "\n";
  std::cout << "checkpoint: " << (o.out_dir / "checkpoint.ckpt").string() << "\n";
  return 0;
}

const std::vector<wordrec::trainer::TrainSample>& pick_split(
    const wordrec::trainer::TrainData& data, const std::string& name) {
  if (name == "train") return data.train;
  if (name == "val") return data.val;
  if (name == "test") return data.test;
  throw std::runtime_error("unknown split: " + name);
}

int cmd_eval(const Options& o, const fs::path& ckpt_path, const std::string& split,
             const std::string& decoder, int beam_width) {
  if (o.data_dir.empty()) throw std::runtime_error("eval needs --data");
  wordrec::trainer::Checkpoint ckpt = wordrec::trainer::load_checkpoint(ckpt_path);
  Artifacts a = load_artifacts(o.data_dir);
  if (!(a.charset == ckpt.charset))
    throw std::runtime_error("checkpoint charset does not match the dataset charset");
  auto data = wordrec::trainer::make_train_data(a.samples, a.charset, a.split);
  wordrec::trainer::ModelState model{ckpt.config, ckpt.params, ckpt.adam, ckpt.charset};

  auto report = wordrec::trainer::evaluate_split(
      model, pick_split(data, split), split,
      wordrec::trainer::decoder_from_name(decoder), beam_width);
  report.seed = o.seed;
  report.checkpoint_id = ckpt_path.filename().string();

  fs::create_directories(o.out_dir);
  write_text(o.out_dir / ("report_" + split + ".json"),
             wordrec::metrics::report_to_json(report).dump(2) + "\n");
  write_text(o.out_dir / ("report_" + split + ".csv"),
             wordrec::metrics::report_to_csv(report));
  std::cout << "split=" << split << " loss=" << report.mean_loss << " cer=" << report.cer
            << " wer=" << report.wer << "\n";
  return 0;
}

int cmd_predict(const fs::path& ckpt_path, const fs::path& image_path,
                const std::string& decoder, int beam_width) {
  wordrec::trainer::Checkpoint ckpt = wordrec::trainer::load_checkpoint(ckpt_path);
  wordrec::Image img = wordrec::png::read_gray(image_path);
  Eigen::MatrixXd probs = wordrec::network::forward(ckpt.config, ckpt.params,
                                                    wordrec::trainer::prepare_input(img));
  int blank = ckpt.charset.blank_id();
  wordrec::ctc::Labels ids = decoder == "beam"
                                 ? wordrec::ctc::beam_decode(probs, blank, beam_width)
                                 : wordrec::ctc::greedy_decode(probs, blank);
  std::cout << wordrec::utf8_encode(ckpt.charset.decode(ids)) << "\n";
  return 0;
}

// -------------------------------------------------------------------
// Benchmark grid.
// -------------------------------------------------------------------

struct BenchRow {
  std::string model, rnn;
  double flops_millions = 0.0;
  wordrec::metrics::EvalReport train, val, test;
  bool ok = false;
  std::string error;
};

std::map<std::string, std::vector<int>> extractor_presets() {
  return {{"small", {8, 16, 24}}, {"medium", {16, 32, 48}}};
}

void run_bench_cell(const Options& o, const wordrec::trainer::TrainData& data,
                    const std::string& preset, const std::vector<int>& conv,
                    const std::string& cell, BenchRow& row) {
  row.model = preset;
  row.rnn = cell;
  try {
    Options cell_opts = o;
    cell_opts.conv_channels = conv;
    cell_opts.cell = cell;
    auto netcfg = make_net_config(cell_opts, data.charset.size());
    row.flops_millions = wordrec::metrics::estimate_flops(netcfg).total_millions();
    auto traincfg = make_train_config(cell_opts);
    auto result = wordrec::trainer::fit(traincfg, netcfg, data);
    wordrec::trainer::ModelState model{result.best.config, result.best.params,
                                       result.best.adam, result.best.charset};
    row.train = wordrec::trainer::evaluate_split(model, data.train, "train",
                                                 wordrec::trainer::DecoderKind::kBeam);
    row.val = wordrec::trainer::evaluate_split(model, data.val, "val",
                                               wordrec::trainer::DecoderKind::kBeam);
    row.test = wordrec::trainer::evaluate_split(model, data.test, "test",
                                                wordrec::trainer::DecoderKind::kBeam);
    row.ok = true;
  } catch (const std::exception& e) {
    row.ok = false;
    row.error = e.what();
  }
}

std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

int cmd_benchmark(const Options& o, const std::string& presets_arg,
                  const std::string& cells_arg, bool parallel) {
  if (o.data_dir.empty()) throw std::runtime_error("benchmark needs --data");
  Artifacts a = load_artifacts(o.data_dir);
  auto data = wordrec::trainer::make_train_data(a.samples, a.charset, a.split);

  auto all_presets = extractor_presets();
  std::vector<std::pair<std::string, std::vector<int>>> presets;
  {
    std::stringstream ss(presets_arg);
    std::string name;
    while (std::getline(ss, name, ',')) {
      auto it = all_presets.find(name);
      if (it == all_presets.end()) throw std::runtime_error("unknown preset: " + name);
      presets.emplace_back(it->first, it->second);
    }
  }
  std::vector<std::string> cells;
  {
    std::stringstream ss(cells_arg);
    std::string name;
    while (std::getline(ss, name, ',')) cells.push_back(name);
  }
  if (presets.empty() || cells.empty())
    throw std::runtime_error("benchmark grid is empty");

  std::vector<BenchRow> rows(presets.size() * cells.size());
  std::vector<std::thread> workers;
  size_t idx = 0;
  for (const auto& [pname, conv] : presets) {
    for (const std::string& cell : cells) {
      BenchRow& row = rows[idx++];
      if (parallel) {
        workers.emplace_back(run_bench_cell, std::cref(o), std::cref(data),
                             pname, conv, cell, std::ref(row));
      } else {
        run_bench_cell(o, data, pname, conv, cell, row);
      }
    }
  }
  for (std::thread& t : workers) t.join();

  std::string csv =
      "model,rnn,flops_millions,train_loss,train_cer,train_wer,"
      "val_loss,val_cer,val_wer,test_loss,test_cer,test_wer\n";
  ordered_json jrows = ordered_json::array();
  for (const BenchRow& r : rows) {
    if (r.ok) {
      csv += r.model + "," + r.rnn + "," + fmt(r.flops_millions) + "," +
             fmt(r.train.mean_loss) + "," + fmt(r.train.cer) + "," + fmt(r.train.wer) + "," +
             fmt(r.val.mean_loss) + "," + fmt(r.val.cer) + "," + fmt(r.val.wer) + "," +
             fmt(r.test.mean_loss) + "," + fmt(r.test.cer) + "," + fmt(r.test.wer) + "\n";
    } else {
      csv += r.model + "," + r.rnn + "," + fmt(r.flops_millions) +
             ",nan,nan,nan,nan,nan,nan,nan,nan,nan\n";
    }
    ordered_json jr = {{"model", r.model},
                       {"rnn", r.rnn},
                       {"flops_millions", r.flops_millions},
                       {"ok", r.ok}};
    if (r.ok) {
      jr["train"] = {{"loss", r.train.mean_loss}, {"cer", r.train.cer}, {"wer", r.train.wer}};
      jr["val"] = {{"loss", r.val.mean_loss}, {"cer", r.val.cer}, {"wer", r.val.wer}};
      jr["test"] = {{"loss", r.test.mean_loss}, {"cer", r.test.cer}, {"wer", r.test.wer}};
    } else {
      jr["error"] = r.error;
    }
    jrows.push_back(jr);
  }
  fs::create_directories(o.out_dir);
  write_text(o.out_dir / "benchmark.csv", csv);
  write_text(o.out_dir / "benchmark.json", jrows.dump(2) + "\n");
  std::cout << csv;
  return 0;
}

int cmd_augment_sheet(const Options& o, const fs::path& image_path, const fs::path& out_png) {
  wordrec::Image img = wordrec::png::read_gray(image_path);
  auto policies = resolve_policies(o.policies);
  wordrec::Image sheet = wordrec::imageproc::make_contact_sheet(img, policies, o.seed);
  if (!out_png.parent_path().empty()) fs::create_directories(out_png.parent_path());
  wordrec::png::write_gray(out_png, sheet);
  std::cout << "wrote " << out_png.string() << " (" << 1 + policies.size() << " tiles)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options opts;
  try {
    // The config file is applied before flag parsing so flags override it.
    for (int i = 1; i + 1 < argc; ++i)
      if (std::string(argv[i]) == "--config") apply_config_file(opts, argv[i + 1]);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  {
    CLI::App app{"handwritten word recognizer (CNN + BiRNN + CTC)"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--seed", opts.seed, "global random seed");
    app.add_option("--out", opts.out_dir, "output directory");

    auto* ingest = app.add_subcommand("ingest", "manifest -> crops, charset, split");
    ingest->add_option("--manifest", opts.manifest, "page manifest JSON");
    ingest->add_option("--max-word-len", opts.max_word_len, "transcript length cap");

    auto add_model_flags = [&](CLI::App* cmd) {
      cmd->add_option("--conv", opts.conv_channels, "conv channels per block")
          ->expected(3)
          ->delimiter(',');
      cmd->add_option("--cell", opts.cell, "rnn cell: lstm|gru");
      cmd->add_option("--hidden", opts.hidden, "rnn hidden size");
      cmd->add_option("--batch-size", opts.batch_size, "batch size");
      cmd->add_option("--lr", opts.learning_rate, "learning rate");
      cmd->add_option("--epochs", opts.max_epochs, "maximum epochs");
      cmd->add_option("--patience", opts.patience, "early-stop patience (0 = off)");
      cmd->add_option("--stop-at-val-cer", opts.stop_at_val_cer,
                      "stop once val CER is at or below this");
      cmd->add_option("--grad-clip", opts.grad_clip, "elementwise gradient clip");
      cmd->add_option("--policies", opts.policies,
                      "augmentation: default|none|<policy.json>");
    };

    auto* train = app.add_subcommand("train", "fit a model on ingested data");
    train->add_option("--data", opts.data_dir, "ingested data directory");
    add_model_flags(train);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    std::string split = "test", decoder = "beam";
    int beam_width = 10;
    fs::path ckpt_path, image_path, out_png;
    eval->add_option("--data", opts.data_dir, "ingested data directory");
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval->add_option("--split", split, "train|val|test");
    eval->add_option("--decoder", decoder, "greedy|beam");
    eval->add_option("--beam-width", beam_width, "beam width");

    auto* predict = app.add_subcommand("predict", "decode one word image");
    predict->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    predict->add_option("--image", image_path, "word image (PNG)")->required();
    predict->add_option("--decoder", decoder, "greedy|beam");
    predict->add_option("--beam-width", beam_width, "beam width");

    auto* bench = app.add_subcommand("benchmark", "extractor x cell grid");
    std::string presets = "small,medium", cells = "lstm,gru";
    bool parallel = false;
    bench->add_option("--data", opts.data_dir, "ingested data directory");
    bench->add_option("--presets", presets, "extractor presets (comma separated)");
    bench->add_option("--cells", cells, "rnn cells (comma separated)");
    bench->add_flag("--parallel", parallel, "run grid cells in parallel");
    add_model_flags(bench);

    auto* sheet = app.add_subcommand("augment-sheet",
                                     "original + one tile per augmentation policy");
    sheet->add_option("--image", image_path, "input word image (PNG)")->required();
    sheet->add_option("--policies", opts.policies,
                      "augmentation: default|none|<policy.json>");
    sheet->add_option("--out-png", out_png, "output PNG path");

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      return app.exit(e);
    }

    try {
      if (*ingest) return cmd_ingest(opts);
      if (*train) return cmd_train(opts);
      if (*eval) return cmd_eval(opts, ckpt_path, split, decoder, beam_width);
      if (*predict) return cmd_predict(ckpt_path, image_path, decoder, beam_width);
      if (*bench) return cmd_benchmark(opts, presets, cells, parallel);
      if (*sheet) {
        if (out_png.empty()) out_png = opts.out_dir / "augment_sheet.png";
        return cmd_augment_sheet(opts, image_path, out_png);
      }
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}
