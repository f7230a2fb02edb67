// tests/test_models.cpp
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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "accentlab/checkpoint.hpp"
#include "accentlab/models.hpp"

using namespace accentlab;
using Catch::Matchers::ContainsSubstring;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

ModelConfig small_cnn(int n_frames = 20, int n_classes = 2) {
  ModelConfig cfg;
  cfg.family = ModelFamily::kCnn;
  cfg.n_classes = n_classes;
  cfg.n_frames = n_frames;
  cfg.n_mfcc = 13;
  cfg.conv_channels = {4, 6};
  cfg.conv_kernels = {5, 5};
  cfg.dense_width = 8;
  cfg.dropout_p = 0.2;
  return cfg;
}

std::vector<float> random_sample(int n, Rng& rng) {
  std::vector<float> x(static_cast<std::size_t>(n));
  for (auto& v : x) v = static_cast<float>(rng.normal() * 0.3);
  return x;
}

}  // namespace

TEST_CASE("conv stack trace records time dims, channels, and pool factors") {
  const ModelConfig cfg = small_cnn(499);
  const auto trace = conv_stack_trace(cfg);
  REQUIRE(trace.size() == 5);  // input, conv0, pool0, conv1, pool1
  CHECK(trace[0].time_dim == 499);
  CHECK(trace[0].channels == 13);
  CHECK(trace[1].time_dim == 499);
  CHECK(trace[1].channels == 4);
  CHECK(trace[2].time_dim == 249);
  CHECK(trace[2].pool_factor == 2);
  CHECK(trace[3].time_dim == 249);
  CHECK(trace[3].channels == 6);
  CHECK(trace[4].time_dim == 124);
  CHECK(trace[4].pool_factor == 4);
}

TEST_CASE("model families declare the expected parameters") {
  Rng rng(1);
  {
    ModelConfig cfg;
    cfg.family = ModelFamily::kMlp;
    cfg.n_frames = 20;
    cfg.mlp_hidden = {16, 8};
    cfg.n_classes = 3;
    auto m = build_model<float>(cfg, rng);
    REQUIRE(m.n_parameters() == 6);
    REQUIRE(m.param("dense0.W").tensor.rows() == 20 * 13);
    REQUIRE(m.param("dense0.W").tensor.cols() == 16);
    REQUIRE(m.param("head.W").tensor.cols() == 3);
    REQUIRE(m.mode == Mode::kEval);
  }
  {
    auto m = build_model<float>(small_cnn(), rng);
    REQUIRE(m.has_param("conv0.K"));
    REQUIRE(m.has_param("conv1.K"));
    REQUIRE(m.has_param("dense.W"));
    REQUIRE(m.has_param("head.W"));
    REQUIRE_FALSE(m.has_param("attn.w"));
    REQUIRE(m.param("conv0.K").tensor.shape == Shape{5, 13, 4});
  }
  {
    ModelConfig cfg = small_cnn();
    cfg.family = ModelFamily::kAttentionCnn;
    cfg.attention_site = 2;
    cfg.attention_variant = AttentionVariant::k1d;
    auto m = build_model<float>(cfg, rng);
    REQUIRE(m.param("attn.w").tensor.size() == 4);  // channels at site 2
    REQUIRE(m.param("attn.beta").tensor.size() == 1);
    // Head consumes dense features plus the pooled attention vector.
    REQUIRE(m.param("head.W").tensor.rows() == 8 + 4);
  }
  {
    ModelConfig cfg;
    cfg.family = ModelFamily::kConvAutoencoder;
    cfg.n_frames = 20;
    cfg.conv_channels = {4, 6};
    cfg.ae_kernel = 5;
    auto m = build_model<float>(cfg, rng);
    REQUIRE(m.has_param("enc0.K"));
    REQUIRE(m.has_param("dec1.K"));
    REQUIRE(m.param("dec1.K").tensor.shape == Shape{5, 4, 13});
  }
  {
    ModelConfig cfg;
    cfg.family = ModelFamily::kLstmAutoencoder;
    cfg.n_frames = 10;
    cfg.lstm_hidden = 6;
    auto m = build_model<float>(cfg, rng);
    REQUIRE(m.has_param("enc0.W"));
    REQUIRE(m.has_param("dec1.U"));
    REQUIRE(m.param("head.W").tensor.shape == Shape{6, 13});
  }
}

TEST_CASE("config validation rejects inconsistent settings") {
  ModelConfig cfg = small_cnn();
  cfg.multi_target = true;
  REQUIRE_THROWS_AS(cfg.validate(), Error);  // classifiers take no label prefix

  ModelConfig skip_only;
  skip_only.family = ModelFamily::kConvAutoencoder;
  skip_only.skip_connections = true;
  skip_only.multi_target = false;
  REQUIRE_THROWS_AS(skip_only.validate(), Error);

  ModelConfig bad_site = small_cnn();
  bad_site.family = ModelFamily::kAttentionCnn;
  bad_site.attention_site = 5;  // trace has indexes 0..4
  REQUIRE_THROWS_AS(bad_site.validate(), Error);
}

TEST_CASE("classifier forward shapes and determinism in eval mode") {
  Rng rng(2);
  auto m = build_model<float>(small_cnn(), rng);
  Rng fwd_rng(3);
  const auto x = random_sample(20 * 13, fwd_rng);

  Tape<float> tape;
  Rng r1(0);
  const auto out = classifier_forward(tape, m, x, r1);
  REQUIRE(tape.node(out.logits).size() == 2);
  REQUIRE(out.scores == -1);

  Tape<float> tape2;
  Rng r2(0);
  const auto out2 = classifier_forward(tape2, m, x, r2);
  REQUIRE(tape.node(out.logits).v == tape2.node(out2.logits).v);
}

TEST_CASE("attention classifier exposes a score distribution at the tap site") {
  ModelConfig cfg = small_cnn(21);
  cfg.family = ModelFamily::kAttentionCnn;
  cfg.attention_site = 2;  // after the first pool: T = 10
  Rng rng(4);
  auto m = build_model<float>(cfg, rng);
  Rng fwd_rng(5);
  const auto x = random_sample(21 * 13, fwd_rng);

  const auto dump = attention_scores(m, x, 9.0);
  REQUIRE(dump.t_dim == 10);
  REQUIRE(dump.c_dim == 1);
  double sum = 0.0;
  for (const auto s : dump.scores) sum += s;
  REQUIRE(sum == Catch::Approx(1.0).margin(1e-4));
  // One pool between input and the tap -> each step covers 2 hops.
  REQUIRE(dump.time_ms[1] - dump.time_ms[0] == Catch::Approx(18.0));

  ModelConfig cfg2 = cfg;
  cfg2.attention_variant = AttentionVariant::k2d;
  Rng rng2(6);
  auto m2 = build_model<float>(cfg2, rng2);
  const auto dump2 = attention_scores(m2, x, 9.0);
  REQUIRE(dump2.t_dim == 10);
  REQUIRE(dump2.c_dim == 4);
  for (int c = 0; c < dump2.c_dim; ++c) {
    double col = 0.0;
    for (int t = 0; t < dump2.t_dim; ++t) {
      col += dump2.scores[static_cast<std::size_t>(t * dump2.c_dim + c)];
    }
    REQUIRE(col == Catch::Approx(1.0).margin(1e-4));
  }
}

TEST_CASE("pairwise autoencoder reconstructs the input shape") {
  ModelConfig cfg;
  cfg.family = ModelFamily::kConvAutoencoder;
  cfg.n_frames = 55;
  cfg.conv_channels = {4, 6};
  Rng rng(7);
  auto m = build_model<float>(cfg, rng);
  Rng fwd_rng(8);
  const auto x = random_sample(55 * 13, fwd_rng);

  Tape<float> tape;
  Rng r(0);
  const auto out = autoencoder_forward(tape, m, x, r);
  REQUIRE(tape.node(out.output).rows() == 55);
  REQUIRE(tape.node(out.output).cols() == 13);
}

TEST_CASE("odd and even time dims both survive the encode-decode roundtrip") {
  for (int T : {20, 21, 55, 499}) {
    ModelConfig cfg;
    cfg.family = ModelFamily::kConvAutoencoder;
    cfg.n_frames = T;
    cfg.conv_channels = {3, 4};
    Rng rng(9);
    auto m = build_model<float>(cfg, rng);
    Rng fwd_rng(10);
    const auto x = random_sample(T * 13, fwd_rng);
    Tape<float> tape;
    Rng r(0);
    const auto out = autoencoder_forward(tape, m, x, r);
    REQUIRE(tape.node(out.output).rows() == T);
  }
}

TEST_CASE("multi-target input carries a label row and the output drops it") {
  for (const bool skip : {false, true}) {
    ModelConfig cfg;
    cfg.family = ModelFamily::kConvAutoencoder;
    cfg.n_frames = 30;
    cfg.conv_channels = {4, 4};
    cfg.multi_target = true;
    cfg.skip_connections = skip;
    Rng rng(11);
    auto m = build_model<float>(cfg, rng);
    REQUIRE(cfg.input_rows() == 31);

    Rng fwd_rng(12);
    auto base = random_sample(31 * 13, fwd_rng);
    for (int j = 0; j < 13; ++j) base[static_cast<std::size_t>(j)] = j == 2 ? 1.0f : 0.0f;

    Tape<float> tape;
    Rng r(0);
    const auto out = autoencoder_forward(tape, m, base, r);
    REQUIRE(tape.node(out.output).rows() == 30);
    REQUIRE(tape.node(out.output).cols() == 13);

    // Changing only the label row must change the reconstruction.
    auto other = base;
    for (int j = 0; j < 13; ++j) other[static_cast<std::size_t>(j)] = j == 5 ? 1.0f : 0.0f;
    Tape<float> tape2;
    Rng r2(0);
    const auto out2 = autoencoder_forward(tape2, m, other, r2);
    double diff = 0.0;
    for (std::size_t i = 0; i < tape.node(out.output).v.size(); ++i) {
      diff += std::abs(static_cast<double>(tape.node(out.output).v[i]) -
                       static_cast<double>(tape2.node(out2.output).v[i]));
    }
    INFO((skip ? "with skip" : "without skip"));
    REQUIRE(diff > 1e-4);
  }
}

TEST_CASE("lstm autoencoder reconstructs the frame grid") {
  ModelConfig cfg;
  cfg.family = ModelFamily::kLstmAutoencoder;
  cfg.n_frames = 12;
  cfg.lstm_hidden = 8;
  Rng rng(13);
  auto m = build_model<float>(cfg, rng);
  Rng fwd_rng(14);
  const auto x = random_sample(12 * 13, fwd_rng);
  Tape<float> tape;
  Rng r(0);
  const auto out = autoencoder_forward(tape, m, x, r);
  REQUIRE(tape.node(out.output).rows() == 12);
  REQUIRE(tape.node(out.output).cols() == 13);
}

TEST_CASE("model config JSON roundtrips every field") {
  ModelConfig cfg;
  cfg.family = ModelFamily::kAttentionCnn;
  cfg.n_classes = 9;
  cfg.n_frames = 499;
  cfg.conv_channels = {32, 64};
  cfg.conv_kernels = {5, 5};
  cfg.dense_width = 128;
  cfg.dropout_p = 0.35;
  cfg.attention_variant = AttentionVariant::k2d;
  cfg.attention_site = 4;
  const auto j = model_config_to_json(cfg);
  const ModelConfig back = model_config_from_json(j);
  REQUIRE(back.family == cfg.family);
  REQUIRE(back.n_classes == cfg.n_classes);
  REQUIRE(back.conv_channels == cfg.conv_channels);
  REQUIRE(back.dropout_p == cfg.dropout_p);
  REQUIRE(back.attention_variant == cfg.attention_variant);
  REQUIRE(back.attention_site == cfg.attention_site);
}

TEST_CASE("checkpoints roundtrip weights bit-exactly") {
  TempDir dir("accentlab_test_ckpt");
  Rng rng(15);
  auto m = build_model<float>(small_cnn(), rng);
  save_model(m, dir.file("model.ckpt"));
  auto back = load_model(dir.file("model.ckpt"));

  REQUIRE(back.config.family == m.config.family);
  REQUIRE(back.n_parameters() == m.n_parameters());
  for (const auto* p : m.parameters()) {
    auto& q = back.param(p->name);
    REQUIRE(q.tensor.shape == p->tensor.shape);
    REQUIRE(q.tensor.v == p->tensor.v);
  }
  REQUIRE(back.mode == Mode::kEval);
}

TEST_CASE("checkpoint loading validates the file") {
  TempDir dir("accentlab_test_ckpt_bad");
  std::ofstream(dir.file("junk.ckpt"), std::ios::binary) << "garbage bytes";
  REQUIRE_THROWS_WITH(load_model(dir.file("junk.ckpt")), ContainsSubstring("bad magic"));
  REQUIRE_THROWS_AS(load_model(dir.file("missing.ckpt")), InputError);
}

TEST_CASE("loaded models predict identically to the saved one") {
  TempDir dir("accentlab_test_ckpt_pred");
  Rng rng(16);
  auto m = build_model<float>(small_cnn(), rng);
  Rng fwd_rng(17);
  const auto x = random_sample(20 * 13, fwd_rng);

  Tape<float> t1;
  Rng r1(0);
  const auto a = classifier_forward(t1, m, x, r1);

  save_model(m, dir.file("model.ckpt"));
  auto back = load_model(dir.file("model.ckpt"));
  Tape<float> t2;
  Rng r2(0);
  const auto b = classifier_forward(t2, back, x, r2);
  REQUIRE(t1.node(a.logits).v == t2.node(b.logits).v);
}
