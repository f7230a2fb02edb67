// tests/test_training.cpp
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
#include <limits>
#include <map>

#include "accentlab/training.hpp"

using namespace accentlab;
using Catch::Matchers::ContainsSubstring;

namespace {

// Two linearly separable blobs in flattened feature space.
std::vector<LabeledSample<float>> blob_samples(int per_class, int dim, Rng& rng) {
  std::vector<LabeledSample<float>> out;
  for (int label = 0; label < 2; ++label) {
    const float center = label == 0 ? 0.5f : -0.5f;
    for (int i = 0; i < per_class; ++i) {
      LabeledSample<float> s;
      s.label = label;
      s.x.resize(static_cast<std::size_t>(dim));
      for (auto& v : s.x) v = center + static_cast<float>(rng.normal() * 0.1);
      out.push_back(std::move(s));
    }
  }
  return out;
}

ModelConfig blob_mlp(int n_frames = 4) {
  ModelConfig cfg;
  cfg.family = ModelFamily::kMlp;
  cfg.n_frames = n_frames;
  cfg.mlp_hidden = {8};
  cfg.n_classes = 2;
  cfg.dropout_p = 0.0;
  return cfg;
}

// Smooth, compressible feature matrices standing in for real clips.
MfccMatrix smooth_matrix(int n_frames, int n_mfcc, Rng& rng) {
  MfccMatrix m;
  m.n_frames = n_frames;
  m.n_mfcc = n_mfcc;
  m.valid_frames = n_frames;
  m.values.resize(static_cast<std::size_t>(n_frames) * n_mfcc);
  const double phase = rng.uniform(0.0, 6.28);
  const double freq = rng.uniform(0.5, 2.0);
  for (int f = 0; f < n_frames; ++f) {
    for (int j = 0; j < n_mfcc; ++j) {
      m.at(f, j) = std::sin(phase + freq * f * 0.2) * std::exp(-0.15 * j) * 4.0;
    }
  }
  return m;
}

}  // namespace

TEST_CASE("classifier training separates two blobs and restores eval mode") {
  Rng data_rng(100);
  const auto train = blob_samples(20, 4 * 13, data_rng);
  Rng init_rng(101);
  auto m = build_model<float>(blob_mlp(), init_rng);

  Hyper h;
  h.epochs = 30;
  h.batch_size = 8;
  h.lr = 0.01;
  Rng train_rng(102);
  const auto report = train_classifier(m, train, h, train_rng);

  REQUIRE_FALSE(report.history.empty());
  REQUIRE(report.history.back().loss < report.history.front().loss);
  REQUIRE(report.final_metrics.accuracy == 1.0);
  REQUIRE(m.mode == Mode::kEval);

  for (const auto& s : train) {
    REQUIRE(classify_sample(m, s.x) == s.label);
  }
}

TEST_CASE("training is reproducible from the seed") {
  Rng data_rng(200);
  const auto train = blob_samples(10, 4 * 13, data_rng);
  Hyper h;
  h.epochs = 5;
  h.batch_size = 4;

  auto run = [&](std::uint64_t seed) {
    Rng init(seed);
    auto m = build_model<float>(blob_mlp(), init);
    Rng t(seed + 1);
    auto rep = train_classifier(m, train, h, t);
    return std::make_pair(std::move(m), std::move(rep));
  };

  auto [m1, r1] = run(7);
  auto [m2, r2] = run(7);
  REQUIRE(r1.history.size() == r2.history.size());
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    REQUIRE(r1.history[i].loss == r2.history[i].loss);
  }
  for (const auto* p : m1.parameters()) {
    REQUIRE(m2.param(p->name).tensor.v == p->tensor.v);
  }

  auto [m3, r3] = run(8);
  REQUIRE(r3.history.front().loss != r1.history.front().loss);
}

TEST_CASE("training aborts on non-finite loss instead of continuing") {
  Rng data_rng(300);
  auto train = blob_samples(4, 4 * 13, data_rng);
  Rng init(301);
  auto m = build_model<float>(blob_mlp(), init);
  Hyper h;
  h.epochs = 5;
  h.batch_size = 8;
  // An absurd learning rate overflows the weights after the first step, so
  // the next epoch's logits go non-finite and the loss turns NaN.
  h.lr = 1e30;
  Rng t(302);
  REQUIRE_THROWS_AS(train_classifier(m, train, h, t), Error);
  REQUIRE(m.mode == Mode::kEval);
}

TEST_CASE("stagnant loss triggers early stopping") {
  Rng data_rng(400);
  const auto train = blob_samples(5, 4 * 13, data_rng);
  Rng init(401);
  auto m = build_model<float>(blob_mlp(), init);
  Hyper h;
  h.epochs = 50;
  h.lr = 1e-18;  // below float resolution, so the loss never improves
  h.early_stop_patience = 2;
  Rng t(402);
  const auto report = train_classifier(m, train, h, t);
  REQUIRE(report.early_stopped);
  REQUIRE(report.history.size() == 3);  // first epoch + patience stalls
}

TEST_CASE("labels outside the head are rejected") {
  Rng data_rng(500);
  auto train = blob_samples(2, 4 * 13, data_rng);
  train[0].label = 2;
  Rng init(501);
  auto m = build_model<float>(blob_mlp(), init);
  Hyper h;
  Rng t(502);
  REQUIRE_THROWS_WITH(train_classifier(m, train, h, t), ContainsSubstring("label out of range"));
  REQUIRE_THROWS_WITH(evaluate_classifier(m, train), ContainsSubstring("outside the model's"));
}

TEST_CASE("metrics derive accuracy, precision, and recall from the confusion matrix") {
  // Rows are truth, columns predictions.
  std::vector<std::vector<long>> conf = {{8, 2}, {1, 9}};
  const auto m = Metrics::from_confusion(conf);
  REQUIRE(m.accuracy == Catch::Approx(17.0 / 20.0));
  REQUIRE(m.precision[0] == Catch::Approx(8.0 / 9.0));
  REQUIRE(m.precision[1] == Catch::Approx(9.0 / 11.0));
  REQUIRE(m.recall[0] == Catch::Approx(8.0 / 10.0));
  REQUIRE(m.recall[1] == Catch::Approx(9.0 / 10.0));
}

TEST_CASE("evaluation fills the confusion matrix consistently") {
  Rng data_rng(600);
  const auto train = blob_samples(15, 4 * 13, data_rng);
  Rng init(601);
  auto m = build_model<float>(blob_mlp(), init);
  Hyper h;
  h.epochs = 25;
  h.lr = 0.01;
  Rng t(602);
  train_classifier(m, train, h, t);

  Rng test_rng(603);
  const auto test = blob_samples(10, 4 * 13, test_rng);
  const auto metrics = evaluate_classifier(m, test);
  long total = 0;
  for (const auto& row : metrics.confusion) {
    for (long c : row) total += c;
  }
  REQUIRE(total == 20);
  REQUIRE(metrics.accuracy >= 0.9);
}

TEST_CASE("identity pairs train a pairwise converter toward zero error") {
  ModelConfig cfg;
  cfg.family = ModelFamily::kConvAutoencoder;
  cfg.n_frames = 20;
  cfg.conv_channels = {8};
  cfg.ae_kernel = 5;
  Rng init(700);
  auto m = build_model<float>(cfg, init);

  Rng data_rng(701);
  std::vector<MfccMatrix> mats;
  for (int i = 0; i < 24; ++i) mats.push_back(smooth_matrix(20, 13, data_rng));
  const auto scaler = fit_scaler(mats);

  std::vector<FeaturePair<float>> pairs;
  for (const auto& raw : mats) {
    const auto scaled = apply_scaler(scaler, raw);
    FeaturePair<float> p;
    p.src = to_values<float>(scaled);
    p.dst = p.src;
    pairs.push_back(std::move(p));
  }

  Hyper h;
  h.epochs = 60;
  h.batch_size = 8;
  h.lr = 0.01;
  h.early_stop_patience = 60;
  Rng t(702);
  const auto report = train_neutralizer(m, pairs, h, t);
  REQUIRE(report.history.back().loss < report.history.front().loss * 0.5);
  REQUIRE(report.history.back().loss < 0.05);
  REQUIRE(m.mode == Mode::kEval);
}

TEST_CASE("pairwise training refuses multi-target models and vice versa") {
  ModelConfig mt;
  mt.family = ModelFamily::kConvAutoencoder;
  mt.n_frames = 10;
  mt.conv_channels = {4};
  mt.multi_target = true;
  Rng init(800);
  auto m = build_model<float>(mt, init);
  std::vector<FeaturePair<float>> pairs(1);
  pairs[0].src.assign(11 * 13, 0.1f);
  pairs[0].dst.assign(10 * 13, 0.1f);
  Hyper h;
  h.epochs = 1;
  Rng t(801);
  REQUIRE_THROWS_WITH(train_neutralizer(m, pairs, h, t), ContainsSubstring("multi"));

  ModelConfig pw = mt;
  pw.multi_target = false;
  Rng init2(802);
  auto m2 = build_model<float>(pw, init2);
  REQUIRE_THROWS_WITH(train_multitarget(m2, pairs, h, t), ContainsSubstring("multi-target"));
}

TEST_CASE("multi-target training flags conflicting duplicate inputs") {
  ModelConfig cfg;
  cfg.family = ModelFamily::kConvAutoencoder;
  cfg.n_frames = 10;
  cfg.conv_channels = {4};
  cfg.multi_target = true;
  Rng init(900);
  auto m = build_model<float>(cfg, init);

  std::vector<FeaturePair<float>> pairs(2);
  pairs[0].src.assign(11 * 13, 0.25f);
  pairs[0].dst.assign(10 * 13, 0.5f);
  pairs[1].src = pairs[0].src;       // same body and label row
  pairs[1].dst.assign(10 * 13, -0.5f);  // different target

  Hyper h;
  h.epochs = 1;
  Rng t(901);
  const auto report = train_multitarget(m, pairs, h, t);
  REQUIRE(report.notes.size() == 1);
  REQUIRE_THAT(report.notes[0], ContainsSubstring("conflicting targets"));

  // Distinct label rows make the duplicates legal.
  std::vector<FeaturePair<float>> ok = pairs;
  ok[1].src[0] = 1.0f;
  Rng init2(902);
  auto m2 = build_model<float>(cfg, init2);
  Rng t2(903);
  REQUIRE(train_multitarget(m2, ok, h, t2).notes.empty());
}

TEST_CASE("feature conversion zeroes padding and returns raw-space values") {
  ModelConfig cfg;
  cfg.family = ModelFamily::kConvAutoencoder;
  cfg.n_frames = 16;
  cfg.conv_channels = {4};
  Rng init(1000);
  auto m = build_model<float>(cfg, init);

  Rng data_rng(1001);
  auto src = smooth_matrix(16, 13, data_rng);
  src.valid_frames = 9;
  for (int f = 9; f < 16; ++f) {
    for (int j = 0; j < 13; ++j) src.at(f, j) = 0.0;
  }
  const auto scaler = fit_scaler({src});

  const auto out = convert_features(m, scaler, src);
  REQUIRE(out.n_frames == 16);
  REQUIRE(out.valid_frames == 9);
  for (int f = 9; f < 16; ++f) {
    for (int j = 0; j < 13; ++j) {
      // The inverse map touches only valid frames, so padding stays zero.
      REQUIRE(out.at(f, j) == 0.0);
    }
  }

  ModelConfig mt = cfg;
  mt.multi_target = true;
  Rng init2(1002);
  auto m2 = build_model<float>(mt, init2);
  REQUIRE_THROWS_WITH(convert_features(m2, scaler, src), ContainsSubstring("target id"));
  const auto routed = convert_features(m2, scaler, src, 3);
  REQUIRE(routed.n_frames == 16);
}

TEST_CASE("routing passes already-on-target inputs through bit-exactly") {
  Rng data_rng(1100);
  const auto train = blob_samples(15, 4 * 13, data_rng);
  Rng init(1101);
  auto clf = build_model<float>(blob_mlp(), init);
  Hyper h;
  h.epochs = 25;
  h.lr = 0.01;
  Rng t(1102);
  train_classifier(clf, train, h, t);

  // Class-0 blob as a feature matrix. Values vary per cell so the min/max
  // scaler keeps a real band per coefficient (a constant coefficient would
  // invert back to itself and hide the conversion).
  MfccMatrix input;
  input.n_frames = 4;
  input.n_mfcc = 13;
  input.valid_frames = 4;
  input.values.resize(4 * 13);
  for (std::size_t i = 0; i < input.values.size(); ++i) {
    input.values[i] = 0.4 + 0.2 * static_cast<double>(i % 7) / 7.0;
  }
  REQUIRE(classify_sample(clf, to_values<float>(input)) == 0);

  FeatureScaler scaler = fit_scaler({input});
  std::map<int, Model<float>*> empty_bank;
  const auto out = neutralize_route(clf, empty_bank, scaler, input, 0, {"A", "B"});
  REQUIRE(out.values == input.values);

  REQUIRE_THROWS_WITH(neutralize_route(clf, empty_bank, scaler, input, 1, {"A", "B"}),
                      ContainsSubstring("bank incomplete"));

  ModelConfig ae;
  ae.family = ModelFamily::kConvAutoencoder;
  ae.n_frames = 4;
  ae.conv_channels = {4};
  ae.ae_kernel = 3;
  Rng init2(1103);
  auto conv = build_model<float>(ae, init2);
  std::map<int, Model<float>*> bank{{0, &conv}};
  const auto converted = neutralize_route(clf, bank, scaler, input, 1, {"A", "B"});
  REQUIRE(converted.n_frames == 4);
  REQUIRE(converted.values != input.values);
}
