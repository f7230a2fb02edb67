// accentlab/models.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "accentlab/autodiff.hpp"
#include "accentlab/error.hpp"
#include "accentlab/features.hpp"
#include "accentlab/rng.hpp"
#include "accentlab/tensor.hpp"

namespace accentlab {

enum class ModelFamily { kMlp, kCnn, kAttentionCnn, kConvAutoencoder, kLstmAutoencoder };
enum class AttentionVariant { k1d, k2d };

inline std::string to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::kMlp: return "mlp";
    case ModelFamily::kCnn: return "cnn";
    case ModelFamily::kAttentionCnn: return "attention_cnn";
    case ModelFamily::kConvAutoencoder: return "conv_autoencoder";
    case ModelFamily::kLstmAutoencoder: return "lstm_autoencoder";
  }
  throw Error("unknown model family");
}

inline ModelFamily model_family_from_string(const std::string& s) {
  if (s == "mlp") return ModelFamily::kMlp;
  if (s == "cnn") return ModelFamily::kCnn;
  if (s == "attention_cnn") return ModelFamily::kAttentionCnn;
  if (s == "conv_autoencoder") return ModelFamily::kConvAutoencoder;
  if (s == "lstm_autoencoder") return ModelFamily::kLstmAutoencoder;
  throw InputError("unknown model family '" + s + "'");
}

inline std::string to_string(AttentionVariant v) {
  return v == AttentionVariant::k1d ? "1d" : "2d";
}

inline AttentionVariant attention_variant_from_string(const std::string& s) {
  if (s == "1d") return AttentionVariant::k1d;
  if (s == "2d") return AttentionVariant::k2d;
  throw InputError("unknown attention variant '" + s + "'");
}

// Hyperparameters from which every parameter shape is derivable; stored
// verbatim in checkpoints so a loaded model can verify compatibility.
struct ModelConfig {
  ModelFamily family = ModelFamily::kMlp;
  int n_classes = 2;
  int n_frames = 499;
  int n_mfcc = 13;

  std::vector<int> mlp_hidden{512, 128};

  std::vector<int> conv_channels{32, 64};
  std::vector<int> conv_kernels{5, 5};
  int pool = 2;
  int dense_width = 128;
  double dropout_p = 0.2;

  // attention_cnn only. Site indexes the conv stack trace: 0 = model
  // input, 2j+1 = after conv j, 2j+2 = after pool j.
  AttentionVariant attention_variant = AttentionVariant::k1d;
  int attention_site = 2;

  // autoencoders only
  int ae_kernel = 5;
  bool multi_target = false;
  bool skip_connections = false;
  double noise_sigma = 0.01;
  int lstm_hidden = 64;

  bool is_classifier() const {
    return family == ModelFamily::kMlp || family == ModelFamily::kCnn ||
           family == ModelFamily::kAttentionCnn;
  }
  bool is_autoencoder() const { return !is_classifier(); }
  int flat_input_dim() const { return n_frames * n_mfcc; }
  // Rows the model consumes: autoencoders in multi-target mode take the
  // label-prefixed matrix.
  int input_rows() const { return n_frames + (is_autoencoder() && multi_target ? 1 : 0); }

  void validate() const {
    require(n_frames >= 1 && n_mfcc >= 1, "ModelConfig: n_frames and n_mfcc must be positive");
    require(dropout_p >= 0.0 && dropout_p < 1.0, "ModelConfig: dropout_p must be in [0,1)");
    if (is_classifier()) {
      require(n_classes >= 2, "ModelConfig: classifiers need n_classes >= 2");
      require(!multi_target && !skip_connections,
              "ModelConfig: multi_target/skip_connections apply only to autoencoders");
    }
    if (family == ModelFamily::kCnn || family == ModelFamily::kAttentionCnn) {
      require(!conv_channels.empty() && conv_channels.size() == conv_kernels.size(),
              "ModelConfig: conv_channels and conv_kernels must be non-empty and equal length");
      for (int k : conv_kernels) require(k >= 1 && k % 2 == 1, "ModelConfig: conv kernels must be odd");
      require(pool >= 1, "ModelConfig: pool must be >= 1");
      require(dense_width >= 1, "ModelConfig: dense_width must be >= 1");
    }
    if (family == ModelFamily::kAttentionCnn) {
      const int n_sites = 2 * static_cast<int>(conv_channels.size());
      require(attention_site >= 0 && attention_site <= n_sites,
              "ModelConfig: attention_site out of range [0," + std::to_string(n_sites) + "]");
    }
    if (is_autoencoder()) {
      require(noise_sigma >= 0.0, "ModelConfig: noise_sigma must be >= 0");
      require(!skip_connections || multi_target,
              "ModelConfig: skip_connections require multi_target (label to inject)");
      if (family == ModelFamily::kConvAutoencoder) {
        require(!conv_channels.empty(), "ModelConfig: conv_channels must be non-empty");
        require(ae_kernel >= 1 && ae_kernel % 2 == 1, "ModelConfig: ae_kernel must be odd");
        require(pool >= 1, "ModelConfig: pool must be >= 1");
      } else {
        require(lstm_hidden >= 1, "ModelConfig: lstm_hidden must be >= 1");
      }
    }
  }
};

// One entry of the conv stack walk used by the CNN families.
struct LayerTrace {
  int time_dim = 0;
  int channels = 0;
  int pool_factor = 1;  // product of pool strides applied so far
};

// trace[0] = input; trace[2j+1] = after conv j; trace[2j+2] = after pool j.
inline std::vector<LayerTrace> conv_stack_trace(const ModelConfig& cfg) {
  std::vector<LayerTrace> tr;
  int t = cfg.n_frames, c = cfg.n_mfcc, pf = 1;
  tr.push_back({t, c, pf});
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    c = cfg.conv_channels[i];
    tr.push_back({t, c, pf});
    require(t >= cfg.pool, "ModelConfig: time dimension collapsed below pool window");
    t = (t - cfg.pool) / cfg.pool + 1;
    pf *= cfg.pool;
    tr.push_back({t, c, pf});
  }
  return tr;
}

// A named-parameter container. Parameters live behind stable pointers
// because tape closures capture references to them.
template <typename T>
class Model {
 public:
  ModelConfig config;
  Mode mode = Mode::kEval;

  Model() = default;
  explicit Model(ModelConfig cfg) : config(std::move(cfg)) { config.validate(); }

  Parameter<T>& add(const std::string& name, Shape shape) {
    require(index_.find(name) == index_.end(), "Model: duplicate parameter '" + name + "'");
    params_.push_back(std::make_unique<Parameter<T>>(name, std::move(shape)));
    index_[name] = params_.size() - 1;
    return *params_.back();
  }
  Parameter<T>& param(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), "Model: unknown parameter '" + name + "'");
    return *params_[it->second];
  }
  bool has_param(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::vector<const Parameter<T>*> parameters() const {
    std::vector<const Parameter<T>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::size_t n_parameters() const { return params_.size(); }
  std::size_t n_weights() const {
    std::size_t n = 0;
    for (auto& p : params_) n += p->size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

namespace detail {

template <typename T>
inline void add_lstm_layer(Model<T>& m, const std::string& prefix, int d_in, int units) {
  m.add(prefix + ".W", {d_in, 4 * units});
  m.add(prefix + ".U", {units, 4 * units});
  m.add(prefix + ".b", {4 * units});
}

}  // namespace detail

// Declares every parameter for the configured family and applies the
// fan-scaled uniform init (biases zero). Shapes depend only on the config.
template <typename T>
inline Model<T> build_model(const ModelConfig& cfg, Rng& rng) {
  Model<T> m(cfg);
  switch (cfg.family) {
    case ModelFamily::kMlp: {
      int in = cfg.flat_input_dim();
      for (std::size_t i = 0; i < cfg.mlp_hidden.size(); ++i) {
        const int h = cfg.mlp_hidden[i];
        m.add("dense" + std::to_string(i) + ".W", {in, h});
        m.add("dense" + std::to_string(i) + ".b", {h});
        in = h;
      }
      m.add("head.W", {in, cfg.n_classes});
      m.add("head.b", {cfg.n_classes});
      break;
    }
    case ModelFamily::kCnn:
    case ModelFamily::kAttentionCnn: {
      const auto trace = conv_stack_trace(cfg);
      int cin = cfg.n_mfcc;
      for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        m.add("conv" + std::to_string(i) + ".K", {cfg.conv_kernels[i], cin, cfg.conv_channels[i]});
        m.add("conv" + std::to_string(i) + ".b", {cfg.conv_channels[i]});
        cin = cfg.conv_channels[i];
      }
      const int flat = trace.back().time_dim * trace.back().channels;
      m.add("dense.W", {flat, cfg.dense_width});
      m.add("dense.b", {cfg.dense_width});
      int head_in = cfg.dense_width;
      if (cfg.family == ModelFamily::kAttentionCnn) {
        const int c_site = trace[static_cast<std::size_t>(cfg.attention_site)].channels;
        m.add("attn.w", {c_site});
        m.add("attn.beta", cfg.attention_variant == AttentionVariant::k1d ? Shape{1} : Shape{c_site});
        head_in += c_site;
      }
      m.add("head.W", {head_in, cfg.n_classes});
      m.add("head.b", {cfg.n_classes});
      break;
    }
    case ModelFamily::kConvAutoencoder: {
      const int label_extra = cfg.skip_connections ? cfg.n_mfcc : 0;
      int cin = cfg.n_mfcc;
      for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        m.add("enc" + std::to_string(i) + ".K", {cfg.ae_kernel, cin + label_extra, cfg.conv_channels[i]});
        m.add("enc" + std::to_string(i) + ".b", {cfg.conv_channels[i]});
        cin = cfg.conv_channels[i];
      }
      const int depth = static_cast<int>(cfg.conv_channels.size());
      for (int j = 0; j < depth; ++j) {
        const int from = cfg.conv_channels[static_cast<std::size_t>(depth - 1 - j)];
        const int to = j == depth - 1 ? cfg.n_mfcc
                                      : cfg.conv_channels[static_cast<std::size_t>(depth - 2 - j)];
        // The final output layer never receives the label skip.
        const int extra = j == depth - 1 ? 0 : label_extra;
        m.add("dec" + std::to_string(j) + ".K", {cfg.ae_kernel, from + extra, to});
        m.add("dec" + std::to_string(j) + ".b", {to});
      }
      break;
    }
    case ModelFamily::kLstmAutoencoder: {
      const int label_extra = cfg.skip_connections ? cfg.n_mfcc : 0;
      const int u = cfg.lstm_hidden;
      detail::add_lstm_layer(m, "enc0", cfg.n_mfcc + label_extra, u);
      detail::add_lstm_layer(m, "enc1", u + label_extra, u);
      detail::add_lstm_layer(m, "dec0", u + label_extra, u);
      detail::add_lstm_layer(m, "dec1", u + label_extra, u);
      m.add("head.W", {u, cfg.n_mfcc});
      m.add("head.b", {cfg.n_mfcc});
      break;
    }
  }
  for (Parameter<T>* p : m.parameters()) glorot_uniform_init(*p, rng);
  return m;
}

// ---- forward passes --------------------------------------------------

template <typename T>
struct ClassifierForward {
  typename Tape<T>::NodeId logits = -1;  // [1, n_classes] (cnn) or [n, n_classes] (mlp)
  typename Tape<T>::NodeId scores = -1;  // attention scores node, -1 when absent
  int score_pool_factor = 1;             // time decimation at the attention site
};

// MLP consumes a whole batch of flattened rows at once.
template <typename T>
inline ClassifierForward<T> mlp_forward(Tape<T>& tape, Model<T>& m, typename Tape<T>::NodeId x,
                                        Rng& rng) {
  require(m.config.family == ModelFamily::kMlp, "mlp_forward: wrong family");
  require(tape.node(x).cols() == m.config.flat_input_dim(),
          "mlp_forward: expected flattened input of width " +
              std::to_string(m.config.flat_input_dim()));
  auto h = x;
  for (std::size_t i = 0; i < m.config.mlp_hidden.size(); ++i) {
    const std::string p = "dense" + std::to_string(i);
    h = tape.relu(tape.dense(h, m.param(p + ".W"), m.param(p + ".b")));
    h = tape.dropout(h, m.config.dropout_p, m.mode, rng);
  }
  ClassifierForward<T> out;
  out.logits = tape.dense(h, m.param("head.W"), m.param("head.b"));
  return out;
}

// CNN / attention-CNN consume one sample [n_frames, n_mfcc] at a time;
// the attention branch taps the configured trace site and its pooled
// output joins the dense features ahead of the head.
template <typename T>
inline ClassifierForward<T> cnn_forward(Tape<T>& tape, Model<T>& m, typename Tape<T>::NodeId x,
                                        Rng& rng) {
  const ModelConfig& cfg = m.config;
  require(cfg.family == ModelFamily::kCnn || cfg.family == ModelFamily::kAttentionCnn,
          "cnn_forward: wrong family");
  require(tape.node(x).rows() == cfg.n_frames && tape.node(x).cols() == cfg.n_mfcc,
          "cnn_forward: expected input " + std::to_string(cfg.n_frames) + "x" +
              std::to_string(cfg.n_mfcc));
  const auto trace = conv_stack_trace(cfg);
  std::vector<typename Tape<T>::NodeId> site_nodes;
  site_nodes.push_back(x);
  auto h = x;
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    const std::string p = "conv" + std::to_string(i);
    h = tape.relu(tape.conv1d(h, m.param(p + ".K"), m.param(p + ".b")));
    site_nodes.push_back(h);
    h = tape.maxpool1d(h, cfg.pool, cfg.pool);
    site_nodes.push_back(h);
  }
  const int flat = trace.back().time_dim * trace.back().channels;
  auto feat = tape.relu(tape.dense(tape.reshape(h, {1, flat}), m.param("dense.W"), m.param("dense.b")));
  feat = tape.dropout(feat, cfg.dropout_p, m.mode, rng);

  ClassifierForward<T> out;
  if (cfg.family == ModelFamily::kAttentionCnn) {
    const auto site = static_cast<std::size_t>(cfg.attention_site);
    auto [pooled, scores] =
        cfg.attention_variant == AttentionVariant::k1d
            ? tape.attention_1d(site_nodes[site], m.param("attn.w"), m.param("attn.beta"))
            : tape.attention_2d(site_nodes[site], m.param("attn.w"), m.param("attn.beta"));
    out.scores = scores;
    out.score_pool_factor = trace[site].pool_factor;
    feat = tape.concat_cols(feat, tape.reshape(pooled, {1, trace[site].channels}));
  }
  out.logits = tape.dense(feat, m.param("head.W"), m.param("head.b"));
  return out;
}

// Single-sample logits for any classifier family. MLP input is flattened
// internally.
template <typename T>
inline ClassifierForward<T> classifier_forward(Tape<T>& tape, Model<T>& m,
                                               const std::vector<T>& sample, Rng& rng) {
  require(sample.size() == static_cast<std::size_t>(m.config.flat_input_dim()),
          "classifier_forward: sample size mismatch");
  if (m.config.family == ModelFamily::kMlp) {
    const auto x = tape.input({1, m.config.flat_input_dim()}, sample);
    return mlp_forward(tape, m, x, rng);
  }
  const auto x = tape.input({m.config.n_frames, m.config.n_mfcc}, sample);
  return cnn_forward(tape, m, x, rng);
}

template <typename T>
struct AutoencoderForward {
  typename Tape<T>::NodeId input = -1;   // node actually fed (after any noise)
  typename Tape<T>::NodeId output = -1;  // [n_frames, n_mfcc], tanh-bounded
};

namespace detail {

// Corrupts features in place for denoising training; the label prefix row
// (when present) stays clean.
template <typename T>
inline void add_input_noise(const ModelConfig& cfg, std::vector<T>& x, Rng& rng) {
  if (cfg.noise_sigma <= 0.0) return;
  const std::size_t skip = cfg.multi_target ? static_cast<std::size_t>(cfg.n_mfcc) : 0;
  for (std::size_t i = skip; i < x.size(); ++i) {
    x[i] += static_cast<T>(rng.normal() * cfg.noise_sigma);
  }
}

template <typename T>
inline AutoencoderForward<T> conv_ae_forward(Tape<T>& tape, Model<T>& m,
                                             typename Tape<T>::NodeId x_full) {
  const ModelConfig& cfg = m.config;
  const bool skip = cfg.skip_connections;
  AutoencoderForward<T> out;
  out.input = x_full;

  typename Tape<T>::NodeId label = -1;
  typename Tape<T>::NodeId h;
  int t;
  if (cfg.multi_target && skip) {
    label = tape.slice_rows(x_full, 0, 1);
    h = tape.slice_rows(x_full, 1, cfg.n_frames + 1);
    t = cfg.n_frames;
  } else {
    h = x_full;
    t = tape.node(x_full).rows();
  }

  std::vector<int> pooled_times;
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    const std::string p = "enc" + std::to_string(i);
    auto h_in = skip ? tape.concat_cols(h, tape.repeat_row(label, t)) : h;
    h = tape.tanh_act(tape.conv1d(h_in, m.param(p + ".K"), m.param(p + ".b")));
    h = tape.maxpool1d(h, cfg.pool, cfg.pool);
    t = (t - cfg.pool) / cfg.pool + 1;
    pooled_times.push_back(t);
  }
  const int depth = static_cast<int>(cfg.conv_channels.size());
  for (int j = 0; j < depth; ++j) {
    const std::string p = "dec" + std::to_string(j);
    const bool last = j == depth - 1;
    const int target_t =
        last ? cfg.n_frames : pooled_times[static_cast<std::size_t>(depth - 2 - j)];
    auto h_in = (skip && !last) ? tape.concat_cols(h, tape.repeat_row(label, t)) : h;
    h = tape.tanh_act(
        tape.conv1d_transpose(h_in, m.param(p + ".K"), m.param(p + ".b"), cfg.pool, target_t));
    t = target_t;
  }
  out.output = h;
  return out;
}

template <typename T>
inline AutoencoderForward<T> lstm_ae_forward(Tape<T>& tape, Model<T>& m,
                                             typename Tape<T>::NodeId x_full) {
  const ModelConfig& cfg = m.config;
  const bool skip = cfg.skip_connections;
  const int u = cfg.lstm_hidden;
  const int steps = tape.node(x_full).rows();
  AutoencoderForward<T> out;
  out.input = x_full;

  typename Tape<T>::NodeId label = -1;
  if (skip) label = tape.slice_rows(x_full, 0, 1);
  auto with_label = [&](typename Tape<T>::NodeId row) {
    return skip ? tape.concat_cols(row, label) : row;
  };

  auto h1 = tape.make({1, u}), c1 = tape.make({1, u});
  auto h2 = tape.make({1, u}), c2 = tape.make({1, u});
  for (int s = 0; s < steps; ++s) {
    const auto x_t = with_label(tape.slice_rows(x_full, s, s + 1));
    std::tie(h1, c1) = tape.lstm_step(x_t, h1, c1, m.param("enc0.W"), m.param("enc0.U"), m.param("enc0.b"));
    std::tie(h2, c2) = tape.lstm_step(with_label(h1), h2, c2, m.param("enc1.W"), m.param("enc1.U"), m.param("enc1.b"));
  }

  // Repeat-vector bridge: the encoder summary drives every decoder step.
  auto h3 = tape.make({1, u}), c3 = tape.make({1, u});
  auto h4 = tape.make({1, u}), c4 = tape.make({1, u});
  std::vector<typename Tape<T>::NodeId> rows;
  rows.reserve(static_cast<std::size_t>(cfg.n_frames));
  for (int s = 0; s < cfg.n_frames; ++s) {
    std::tie(h3, c3) = tape.lstm_step(with_label(h2), h3, c3, m.param("dec0.W"), m.param("dec0.U"), m.param("dec0.b"));
    std::tie(h4, c4) = tape.lstm_step(with_label(h3), h4, c4, m.param("dec1.W"), m.param("dec1.U"), m.param("dec1.b"));
    rows.push_back(tape.tanh_act(tape.dense(h4, m.param("head.W"), m.param("head.b"))));
  }
  out.output = tape.stack_rows(rows);
  return out;
}

}  // namespace detail

// Runs the autoencoder on one sample. `sample` is the scaled feature
// matrix, row-major: n_frames rows (pairwise) or n_frames+1 rows with the
// one-hot label prefix first (multi-target). Train mode adds Gaussian
// noise to the features (denoising); the output is always [n_frames,
// n_mfcc] in tanh range.
template <typename T>
inline AutoencoderForward<T> autoencoder_forward(Tape<T>& tape, Model<T>& m, std::vector<T> sample,
                                                 Rng& rng) {
  const ModelConfig& cfg = m.config;
  require(cfg.is_autoencoder(), "autoencoder_forward: wrong family");
  const int rows = cfg.input_rows();
  require(sample.size() == static_cast<std::size_t>(rows) * cfg.n_mfcc,
          "autoencoder_forward: expected " + std::to_string(rows) + "x" +
              std::to_string(cfg.n_mfcc) + " input" +
              (cfg.multi_target ? " (label prefix row required)" : ""));
  if (m.mode == Mode::kTrain) detail::add_input_noise(cfg, sample, rng);
  const auto x = tape.input({rows, cfg.n_mfcc}, sample);
  return cfg.family == ModelFamily::kConvAutoencoder ? detail::conv_ae_forward(tape, m, x)
                                                     : detail::lstm_ae_forward(tape, m, x);
}

// ---- attention inspection ---------------------------------------------

template <typename T>
struct AttentionDump {
  int t_dim = 0;
  int c_dim = 1;                // 1 for the shared-vector variant
  std::vector<T> scores;        // row-major [t_dim, c_dim]
  std::vector<double> time_ms;  // start time of each score step
};

// Eval-mode forward that surfaces the attention distribution, mapped back
// to clip time: score step i starts at i * hop_ms * pool_factor.
template <typename T>
inline AttentionDump<T> attention_scores(Model<T>& m, const std::vector<T>& sample,
                                         double hop_ms = 9.0) {
  require(m.config.family == ModelFamily::kAttentionCnn,
          "attention_scores: model is not an attention classifier");
  const Mode saved = m.mode;
  m.mode = Mode::kEval;
  Tape<T> tape;
  Rng rng(0);  // eval mode draws nothing
  const auto fwd = classifier_forward(tape, m, sample, rng);
  m.mode = saved;

  const Tensor<T>& s = tape.node(fwd.scores);
  AttentionDump<T> dump;
  dump.t_dim = s.rows();
  dump.c_dim = s.shape.size() == 2 ? s.cols() : 1;
  dump.scores = s.v;
  dump.time_ms.reserve(static_cast<std::size_t>(dump.t_dim));
  for (int i = 0; i < dump.t_dim; ++i) {
    dump.time_ms.push_back(i * hop_ms * fwd.score_pool_factor);
  }
  return dump;
}

// ---- feature bridging ---------------------------------------------------

template <typename T>
inline std::vector<T> to_values(const MfccMatrix& m) {
  std::vector<T> out(m.values.size());
  for (std::size_t i = 0; i < m.values.size(); ++i) out[i] = static_cast<T>(m.values[i]);
  return out;
}

template <typename T>
inline std::vector<T> to_values(const PrefixedMatrix& m) {
  std::vector<T> out(m.values.size());
  for (std::size_t i = 0; i < m.values.size(); ++i) out[i] = static_cast<T>(m.values[i]);
  return out;
}

}  // namespace accentlab
