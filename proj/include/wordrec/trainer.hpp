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
#ifndef WORDREC_TRAINER_HPP_
#define WORDREC_TRAINER_HPP_

// Adam training loop over augmented batches with CTC loss, greedy
// validation after every epoch, best-validation-loss checkpointing and
// fully deterministic replay: (config, data, seed) fixes every logged
// number bitwise.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wordrec/ctc.hpp"
#include "wordrec/dataset.hpp"
#include "wordrec/imageproc.hpp"
#include "wordrec/metrics.hpp"
#include "wordrec/network.hpp"
#include "wordrec/rng.hpp"

namespace wordrec::trainer {

enum class DecoderKind { kGreedy, kBeam };

inline std::string decoder_name(DecoderKind d) {
  return d == DecoderKind::kGreedy ? "greedy" : "beam";
}

inline DecoderKind decoder_from_name(const std::string& s) {
  if (s == "greedy") return DecoderKind::kGreedy;
  if (s == "beam") return DecoderKind::kBeam;
  throw std::invalid_argument("unknown decoder: " + s);
}

struct TrainConfig {
  int batch_size = 16;
  double learning_rate = 0.001;
  int max_epochs = 1000;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  uint64_t seed = 0;
  std::vector<imageproc::AugmentPolicy> policies;  // empty = no augmentation
  int early_stop_patience = 0;    // 0 = train to max_epochs
  double stop_at_val_cer = -1.0;  // stop once val CER <= this; < 0 = off
  double grad_clip = 0.0;         // elementwise clip; 0 = off

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (learning_rate <= 0) throw std::invalid_argument("learning rate must be > 0");
    if (max_epochs < 0) throw std::invalid_argument("max epochs must be >= 0");
  }
};

struct AdamState {
  network::Parameters m, v;
  long step = 0;
};

inline AdamState make_adam_state(const network::Parameters& params) {
  return {network::zeros_like(params), network::zeros_like(params), 0};
}

/// Bias-corrected Adam update, elementwise over every parameter array.
inline void adam_step(network::Parameters& params, const network::GradientSet& grads,
                      AdamState& state, double lr, double beta1, double beta2,
                      double eps) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  auto p_refs = network::flatten(params);
  auto g_refs = network::flatten(grads);
  auto m_refs = network::flatten(state.m);
  auto v_refs = network::flatten(state.v);
  for (size_t i = 0; i < p_refs.size(); ++i) {
    if (p_refs[i].rows != g_refs[i].rows || p_refs[i].cols != g_refs[i].cols)
      throw std::invalid_argument("gradient shape mismatch in " + p_refs[i].name);
    auto g = g_refs[i].flat();
    if (!g.allFinite())
      throw std::runtime_error("non-finite gradient in " + g_refs[i].name);
    auto m = m_refs[i].flat();
    auto v = v_refs[i].flat();
    m = beta1 * m + (1.0 - beta1) * g;
    v = (beta2 * v.array() + (1.0 - beta2) * g.array().square()).matrix();
    Eigen::ArrayXd m_hat = m.array() / bc1;
    Eigen::ArrayXd v_hat = v.array() / bc2;
    p_refs[i].flat().array() -= lr * m_hat / (v_hat.sqrt() + eps);
  }
}

// ---------------------------------------------------------------------
// Training data and model state.
// ---------------------------------------------------------------------

struct TrainSample {
  Image image;
  std::u32string transcript;
  std::vector<int> labels;
  std::string id;
};

struct TrainData {
  std::vector<TrainSample> train, val, test;
  dataset::Charset charset;
};

namespace detail {

inline TrainSample to_train_sample(const dataset::WordSample& s,
                                   const dataset::Charset& charset) {
  TrainSample t;
  t.image = s.image;
  t.transcript = s.transcript;
  t.labels = charset.encode(s.transcript);
  t.id = s.source_id;
  int min_frames = static_cast<int>(t.labels.size()) + ctc::adjacent_repeats(t.labels);
  if (min_frames > network::NetworkConfig::kFrames)
    throw std::invalid_argument("transcript of sample " + t.id +
                                " is not producible in 25 frames");
  return t;
}

}  // namespace detail

/// Resolves a split assignment against the sample pool.
inline TrainData make_train_data(const std::vector<dataset::WordSample>& samples,
                                 const dataset::Charset& charset,
                                 const dataset::SplitAssignment& split) {
  std::map<std::string, const dataset::WordSample*> by_id;
  for (const dataset::WordSample& s : samples) by_id[s.source_id] = &s;
  auto resolve = [&](const std::vector<std::string>& ids) {
    std::vector<TrainSample> out;
    out.reserve(ids.size());
    for (const std::string& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end())
        throw std::invalid_argument("split references unknown sample id: " + id);
      out.push_back(detail::to_train_sample(*it->second, charset));
    }
    return out;
  };
  return {resolve(split.train), resolve(split.val), resolve(split.test), charset};
}

struct ModelState {
  network::NetworkConfig config;
  network::Parameters params;
  AdamState adam;
  dataset::Charset charset;
};

inline ModelState init_model(const network::NetworkConfig& cfg,
                             const dataset::Charset& charset, uint64_t seed) {
  if (cfg.num_classes != charset.size() + 1)
    throw std::invalid_argument("num_classes must be charset size + 1");
  network::Parameters params = network::init_params(cfg, derive_seed(seed, "init"));
  AdamState adam = make_adam_state(params);
  return {cfg, std::move(params), std::move(adam), charset};
}

/// Augment (when policies are set), resize to canvas, normalize.
inline Eigen::MatrixXd prepare_input(const Image& img) {
  return imageproc::normalize(imageproc::resize_to_canvas(img));
}

// ---------------------------------------------------------------------
// Epochs and evaluation.
// ---------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  int steps = 0;
};

/// One pass over the train split: deterministic (seed, epoch) shuffle,
/// per-sample augmentation streams keyed by (seed, sample id, epoch),
/// one Adam step per batch on the mean gradient. The reported loss is
/// the mean per-sample CTC loss over the epoch.
inline EpochLog train_epoch(ModelState& model, const std::vector<TrainSample>& train,
                            const TrainConfig& cfg, int epoch_index) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("empty train split");
  const int blank = model.charset.blank_id();

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", static_cast<uint64_t>(epoch_index)));
  shuffle_rng.shuffle(order);

  EpochLog log;
  log.epoch = epoch_index;
  double total_loss = 0.0;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
    size_t count = std::min<size_t>(static_cast<size_t>(cfg.batch_size),
                                    order.size() - start);
    network::GradientSet grads = network::zeros_like(model.params);
    for (size_t k = 0; k < count; ++k) {
      const TrainSample& s = train[order[start + k]];
      Image img = s.image;
      if (!cfg.policies.empty()) {
        uint64_t aseed = derive_seed(cfg.seed, "augment", hash_str(s.id),
                                     static_cast<uint64_t>(epoch_index));
        img = imageproc::compose_augmentations(cfg.policies, img, aseed);
      }
      network::ForwardCache cache =
          network::forward_cached(model.config, model.params, prepare_input(img));
      ctc::CtcResult res = ctc::ctc_grad(cache.probs, s.labels, blank);
      if (!std::isfinite(res.loss))
        throw std::runtime_error("non-finite loss in batch " + std::to_string(log.steps) +
                                 " (sample " + s.id + ")");
      total_loss += res.loss;
      network::backward_accumulate(model.config, model.params, cache, res.grad_logits,
                                   grads);
    }
    const double inv = 1.0 / static_cast<double>(count);
    for (network::ArrayRef r : network::flatten(grads)) {
      r.flat() *= inv;
      if (cfg.grad_clip > 0)
        r.flat() = r.flat().cwiseMax(-cfg.grad_clip).cwiseMin(cfg.grad_clip);
    }
    adam_step(model.params, grads, model.adam, cfg.learning_rate, cfg.beta1, cfg.beta2,
              cfg.epsilon);
    ++log.steps;
  }
  log.mean_loss = total_loss / static_cast<double>(train.size());
  return log;
}

/// Evaluation never augments. CER and WER follow the report header's
/// conventions (reference-length denominator, exact word match).
inline metrics::EvalReport evaluate_split(const ModelState& model,
                                          const std::vector<TrainSample>& split,
                                          const std::string& split_name,
                                          DecoderKind decoder, int beam_width = 10) {
  if (split.empty()) throw std::invalid_argument("empty split: " + split_name);
  const int blank = model.charset.blank_id();
  metrics::EvalReport report;
  report.split = split_name;
  report.decoder = decoder == DecoderKind::kBeam
                       ? "beam" + std::to_string(beam_width)
                       : "greedy";
  std::vector<metrics::Pair> pairs;
  double total_loss = 0.0;
  for (const TrainSample& s : split) {
    Eigen::MatrixXd probs = network::forward(model.config, model.params,
                                             prepare_input(s.image));
    total_loss += ctc::ctc_loss(probs, s.labels, blank);
    ctc::Labels ids = decoder == DecoderKind::kBeam
                          ? ctc::beam_decode(probs, blank, beam_width)
                          : ctc::greedy_decode(probs, blank);
    metrics::SampleRow row;
    row.reference = s.transcript;
    row.hypothesis = model.charset.decode(ids);
    row.edits = metrics::edit_distance(row.reference, row.hypothesis);
    pairs.emplace_back(row.reference, row.hypothesis);
    report.samples.push_back(std::move(row));
  }
  report.mean_loss = total_loss / static_cast<double>(split.size());
  report.cer = metrics::cer(pairs);
  report.wer = metrics::wer(pairs);
  return report;
}

// ---------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------

struct Checkpoint {
  int version = 1;
  network::NetworkConfig config;
  network::Parameters params;
  AdamState adam;
  dataset::Charset charset;
  int epoch = 0;
  double best_val_loss = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline constexpr char kMagic[8] = {'O', 'C', 'R', 'F', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

inline void append_u64(std::string& out, uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

/// Arrays are serialized row-major as raw little-endian doubles.
inline void append_array(std::string& out, const network::ConstArrayRef& r) {
  for (Eigen::Index i = 0; i < r.rows; ++i) {
    for (Eigen::Index j = 0; j < r.cols; ++j) {
      double v = r.data[j * r.rows + i];
      char buf[8];
      std::memcpy(buf, &v, 8);
      out.append(buf, 8);
    }
  }
}

inline nlohmann::ordered_json config_to_json(const network::NetworkConfig& cfg) {
  return {{"conv_channels", cfg.conv_channels},
          {"cell", network::cell_name(cfg.cell)},
          {"hidden", cfg.hidden},
          {"num_classes", cfg.num_classes}};
}

inline network::NetworkConfig config_from_json(const nlohmann::json& j) {
  network::NetworkConfig cfg;
  cfg.conv_channels = j.at("conv_channels").get<std::vector<int>>();
  cfg.cell = network::cell_from_name(j.at("cell").get<std::string>());
  cfg.hidden = j.at("hidden").get<int>();
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.validate();
  return cfg;
}

}  // namespace detail

/// Layout: 8-byte magic, u64 little-endian header length, UTF-8 JSON
/// header (version, config, charset, named-array table with shapes and
/// byte offsets into the payload), then the raw arrays in table order.
inline std::string checkpoint_to_bytes(const Checkpoint& ckpt) {
  const network::Parameters& p = ckpt.params;
  std::vector<std::pair<std::string, network::ConstArrayRef>> table;
  for (const network::ConstArrayRef& r : network::flatten(p)) table.emplace_back(r.name, r);
  for (const network::ConstArrayRef& r :
       network::flatten(static_cast<const network::Parameters&>(ckpt.adam.m)))
    table.emplace_back("adam.m/" + r.name, r);
  for (const network::ConstArrayRef& r :
       network::flatten(static_cast<const network::Parameters&>(ckpt.adam.v)))
    table.emplace_back("adam.v/" + r.name, r);

  nlohmann::ordered_json arrays = nlohmann::ordered_json::array();
  uint64_t offset = 0;
  for (const auto& [name, r] : table) {
    arrays.push_back({{"name", name}, {"rows", r.rows}, {"cols", r.cols}, {"offset", offset}});
    offset += static_cast<uint64_t>(r.size()) * 8;
  }
  nlohmann::ordered_json header;
  header["version"] = ckpt.version;
  header["config"] = detail::config_to_json(ckpt.config);
  header["charset"] = dataset::charset_to_json(ckpt.charset);
  header["epoch"] = ckpt.epoch;
  if (std::isnan(ckpt.best_val_loss))
    header["best_val_loss"] = nullptr;
  else
    header["best_val_loss"] = ckpt.best_val_loss;
  header["adam_step"] = ckpt.adam.step;
  header["arrays"] = arrays;

  std::string out(detail::kMagic, 8);
  std::string hs = header.dump();
  detail::append_u64(out, hs.size());
  out += hs;
  for (const auto& [name, r] : table) detail::append_array(out, r);
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string bytes = checkpoint_to_bytes(ckpt);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint not found: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), detail::kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  uint64_t hlen = 0;
  std::memcpy(&hlen, bytes.data() + 8, 8);
  if (16 + hlen > bytes.size())
    throw std::runtime_error("truncated checkpoint header: " + path.string());
  nlohmann::json header = nlohmann::json::parse(bytes.substr(16, hlen));
  if (header.at("version").get<int>() != 1)
    throw std::runtime_error("unsupported checkpoint version");

  Checkpoint ckpt;
  ckpt.version = 1;
  ckpt.config = detail::config_from_json(header.at("config"));
  ckpt.charset = dataset::charset_from_json(header.at("charset"));
  ckpt.epoch = header.at("epoch").get<int>();
  ckpt.best_val_loss = header.at("best_val_loss").is_null()
                           ? std::numeric_limits<double>::quiet_NaN()
                           : header.at("best_val_loss").get<double>();
  ckpt.params = network::make_shaped(ckpt.config);
  ckpt.adam = make_adam_state(ckpt.params);
  ckpt.adam.step = header.at("adam_step").get<long>();

  std::map<std::string, network::ArrayRef> by_name;
  for (network::ArrayRef r : network::flatten(ckpt.params)) by_name.emplace(r.name, r);
  for (network::ArrayRef r : network::flatten(ckpt.adam.m))
    by_name.emplace("adam.m/" + r.name, r);
  for (network::ArrayRef r : network::flatten(ckpt.adam.v))
    by_name.emplace("adam.v/" + r.name, r);

  const char* payload = bytes.data() + 16 + hlen;
  const size_t payload_size = bytes.size() - 16 - hlen;
  for (const auto& aj : header.at("arrays")) {
    std::string name = aj.at("name").get<std::string>();
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint has unknown array: " + name);
    network::ArrayRef& r = it->second;
    if (aj.at("rows").get<Eigen::Index>() != r.rows ||
        aj.at("cols").get<Eigen::Index>() != r.cols)
      throw std::runtime_error("checkpoint array shape mismatch: " + name);
    uint64_t off = aj.at("offset").get<uint64_t>();
    if (off + static_cast<uint64_t>(r.size()) * 8 > payload_size)
      throw std::runtime_error("checkpoint payload truncated at " + name);
    const char* src = payload + off;
    for (Eigen::Index i = 0; i < r.rows; ++i)
      for (Eigen::Index j = 0; j < r.cols; ++j) {
        double v;
        std::memcpy(&v, src, 8);
        src += 8;
        r.data[j * r.rows + i] = v;
      }
  }
  return ckpt;
}

// ---------------------------------------------------------------------
// Fit.
// ---------------------------------------------------------------------

struct CurvePoint {
  int epoch = 0;
  double train_loss = 0.0, val_loss = 0.0, val_cer = 0.0, val_wer = 0.0;
};

struct FitResult {
  Checkpoint best;
  std::vector<CurvePoint> curve;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace detail

inline std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "epoch,train_loss,val_loss,val_cer,val_wer\n";
  for (const CurvePoint& p : curve) {
    out += std::to_string(p.epoch) + "," + detail::fmt_double(p.train_loss) + "," +
           detail::fmt_double(p.val_loss) + "," + detail::fmt_double(p.val_cer) + "," +
           detail::fmt_double(p.val_wer) + "\n";
  }
  return out;
}

/// Trains up to max_epochs, validating with the greedy decoder after
/// each epoch, and returns the checkpoint with the lowest validation
/// loss (the initialized model when max_epochs is 0).
inline FitResult fit(const TrainConfig& cfg, const network::NetworkConfig& netcfg,
                     const TrainData& data) {
  cfg.validate();
  ModelState model = init_model(netcfg, data.charset, cfg.seed);

  FitResult result;
  result.best = Checkpoint{1, model.config, model.params, model.adam, model.charset, 0,
                           std::numeric_limits<double>::quiet_NaN()};
  int stall = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochLog log = train_epoch(model, data.train, cfg, epoch);
    metrics::EvalReport val = evaluate_split(model, data.val, "val", DecoderKind::kGreedy);
    result.curve.push_back({epoch, log.mean_loss, val.mean_loss, val.cer, val.wer});
    if (std::isnan(result.best.best_val_loss) ||
        val.mean_loss < result.best.best_val_loss) {
      result.best = Checkpoint{1,     model.config, model.params, model.adam,
                               model.charset, epoch,        val.mean_loss};
      stall = 0;
    } else {
      ++stall;
    }
    if (cfg.early_stop_patience > 0 && stall >= cfg.early_stop_patience) break;
    if (cfg.stop_at_val_cer >= 0.0 && val.cer <= cfg.stop_at_val_cer) break;
  }
  return result;
}

}  // namespace wordrec::trainer

#endif  // WORDREC_TRAINER_HPP_
