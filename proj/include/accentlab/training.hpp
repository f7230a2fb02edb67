// accentlab/training.hpp
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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "accentlab/autodiff.hpp"
#include "accentlab/error.hpp"
#include "accentlab/features.hpp"
#include "accentlab/manifest.hpp"
#include "accentlab/models.hpp"
#include "accentlab/rng.hpp"

namespace accentlab {

// ---- dataset splitting --------------------------------------------------

enum class SplitKind { kRandom, kSpeaker };

// Per-accent speaker assignment for the held-out-speaker protocol.
struct SpeakerAssignment {
  std::vector<std::string> train_speakers;
  std::vector<std::string> test_speakers;
};

struct SplitSpec {
  SplitKind kind = SplitKind::kRandom;
  double test_fraction = 0.2;                         // random kind
  std::map<std::string, SpeakerAssignment> speakers;  // speaker kind, accent -> assignment
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
};

// Random kind: per-accent stratified shuffle, round(test_fraction * n)
// entries per accent to the test side. Speaker kind: entries routed by the
// per-accent speaker lists; accents absent from the map are excluded.
inline Split make_split(const Manifest& manifest, const SplitSpec& spec) {
  Split out;
  if (spec.kind == SplitKind::kRandom) {
    require(spec.test_fraction > 0.0 && spec.test_fraction < 1.0,
            "make_split: test_fraction must be in (0,1)");
    std::map<std::string, std::vector<std::size_t>> by_accent;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
      by_accent[manifest.entries[i].accent].push_back(i);
    }
    Rng rng = Rng(spec.seed).substream("split");
    for (auto& [accent, idx] : by_accent) {
      rng.shuffle(idx);
      const auto n_test = static_cast<std::size_t>(
          std::lround(spec.test_fraction * static_cast<double>(idx.size())));
      for (std::size_t i = 0; i < idx.size(); ++i) {
        (i < n_test ? out.test : out.train).push_back(manifest.entries[idx[i]]);
      }
    }
  } else {
    require(!spec.speakers.empty(), "make_split: speaker split needs a speaker assignment");
    std::set<std::string> seen_speakers;
    for (const auto& [accent, assign] : spec.speakers) {
      std::set<std::string> train_set(assign.train_speakers.begin(), assign.train_speakers.end());
      for (const auto& s : assign.test_speakers) {
        require(train_set.find(s) == train_set.end(),
                "make_split: speaker '" + s + "' listed on both sides for accent " + accent);
      }
      for (const auto& s : assign.train_speakers) seen_speakers.insert(accent + "/" + s);
      for (const auto& s : assign.test_speakers) seen_speakers.insert(accent + "/" + s);
    }
    for (const auto& e : manifest.entries) {
      auto it = spec.speakers.find(e.accent);
      if (it == spec.speakers.end()) continue;
      const auto& assign = it->second;
      const bool in_train = std::find(assign.train_speakers.begin(), assign.train_speakers.end(),
                                      e.speaker_code) != assign.train_speakers.end();
      const bool in_test = std::find(assign.test_speakers.begin(), assign.test_speakers.end(),
                                     e.speaker_code) != assign.test_speakers.end();
      if (in_train) out.train.push_back(e);
      if (in_test) out.test.push_back(e);
      if (in_train || in_test) seen_speakers.erase(e.accent + "/" + e.speaker_code);
    }
    if (!seen_speakers.empty()) {
      throw PreconditionError("make_split: named speaker not present in manifest: " +
                              *seen_speakers.begin());
    }
  }
  require(!out.train.empty(), "make_split: train side is empty");
  require(!out.test.empty(), "make_split: test side is empty");
  return out;
}

// ---- metrics --------------------------------------------------------------

struct Metrics {
  double accuracy = 0.0;
  std::vector<std::vector<long>> confusion;  // [true][predicted]
  std::vector<double> precision;
  std::vector<double> recall;

  static Metrics from_confusion(std::vector<std::vector<long>> conf) {
    Metrics m;
    m.confusion = std::move(conf);
    const std::size_t k = m.confusion.size();
    long total = 0, correct = 0;
    std::vector<long> row_sum(k, 0), col_sum(k, 0);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const long c = m.confusion[i][j];
        total += c;
        row_sum[i] += c;
        col_sum[j] += c;
        if (i == j) correct += c;
      }
    }
    m.accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    m.precision.assign(k, 0.0);
    m.recall.assign(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      if (col_sum[i] > 0) m.precision[i] = static_cast<double>(m.confusion[i][i]) / col_sum[i];
      if (row_sum[i] > 0) m.recall[i] = static_cast<double>(m.confusion[i][i]) / row_sum[i];
    }
    return m;
  }
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;  // training-set accuracy; 0 for autoencoders
};

struct TrainReport {
  std::vector<EpochStats> history;
  Metrics final_metrics;  // training-set metrics for classifiers
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;
  bool early_stopped = false;
  std::vector<std::string> notes;
};

// ---- hyperparameters ------------------------------------------------------

enum class Optimizer { kAdam, kRmsprop };

inline std::string to_string(Optimizer o) { return o == Optimizer::kAdam ? "adam" : "rmsprop"; }

inline Optimizer optimizer_from_string(const std::string& s) {
  if (s == "adam") return Optimizer::kAdam;
  if (s == "rmsprop") return Optimizer::kRmsprop;
  throw InputError("unknown optimizer '" + s + "'");
}

struct Hyper {
  int epochs = 50;
  int batch_size = 32;
  Optimizer optimizer = Optimizer::kAdam;
  double lr = 0.001;
  int early_stop_patience = 5;

  void validate() const {
    require(epochs >= 0, "Hyper: epochs must be >= 0");
    require(batch_size >= 1, "Hyper: batch_size must be >= 1");
    require(lr > 0.0, "Hyper: lr must be positive");
    require(early_stop_patience >= 1, "Hyper: early_stop_patience must be >= 1");
  }
};

template <typename T>
struct LabeledSample {
  std::vector<T> x;  // row-major n_frames * n_mfcc feature matrix
  int label = 0;
};

namespace detail {

template <typename T>
inline void optimizer_step(Model<T>& m, const Hyper& h) {
  auto params = m.parameters();
  if (h.optimizer == Optimizer::kAdam) {
    adam_step(params, h.lr);
  } else {
    rmsprop_step(params, h.lr);
  }
}

}  // namespace detail

// ---- classifier training / evaluation -------------------------------------

// Mini-batch training with the fused softmax cross-entropy. Randomness is
// drawn from named substreams of `rng` so shuffling and dropout are
// reproducible independently. The model is left in eval mode.
template <typename T>
inline TrainReport train_classifier(Model<T>& m, const std::vector<LabeledSample<T>>& train,
                                    const Hyper& hyper, Rng& rng) {
  hyper.validate();
  require(m.config.is_classifier(), "train_classifier: model is not a classifier");
  require(!train.empty(), "train_classifier: empty training set");
  for (const auto& s : train) {
    require(s.label >= 0 && s.label < m.config.n_classes,
            "train_classifier: label out of range for model head");
  }
  const auto t0 = std::chrono::steady_clock::now();
  Rng shuffle_rng = rng.substream("shuffle");
  Rng dropout_rng = rng.substream("dropout");

  TrainReport report;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_loss = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  m.mode = Mode::kTrain;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    long correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
      const int nb = static_cast<int>(end - start);
      Tape<T> tape;
      std::vector<int> labels(static_cast<std::size_t>(nb));
      typename Tape<T>::NodeId logits;
      if (m.config.family == ModelFamily::kMlp) {
        // One batched dense pass instead of per-sample graphs.
        std::vector<T> batch(static_cast<std::size_t>(nb) * m.config.flat_input_dim());
        for (int i = 0; i < nb; ++i) {
          const auto& s = train[order[start + static_cast<std::size_t>(i)]];
          std::copy(s.x.begin(), s.x.end(),
                    batch.begin() + static_cast<std::ptrdiff_t>(i) * m.config.flat_input_dim());
          labels[static_cast<std::size_t>(i)] = s.label;
        }
        const auto x = tape.input({nb, m.config.flat_input_dim()}, batch);
        logits = mlp_forward(tape, m, x, dropout_rng).logits;
      } else {
        std::vector<typename Tape<T>::NodeId> rows;
        rows.reserve(static_cast<std::size_t>(nb));
        for (int i = 0; i < nb; ++i) {
          const auto& s = train[order[start + static_cast<std::size_t>(i)]];
          rows.push_back(classifier_forward(tape, m, s.x, dropout_rng).logits);
          labels[static_cast<std::size_t>(i)] = s.label;
        }
        logits = tape.stack_rows(rows);
      }
      // Diverged weights show up as NaN logits; catch them before the
      // softmax op rejects its input, so the model is restored to eval mode.
      for (const T v : tape.node(logits).v) {
        if (std::isnan(v)) {
          m.mode = Mode::kEval;
          throw Error("train_classifier: diverged (NaN loss) at epoch " +
                      std::to_string(epoch + 1));
        }
      }
      auto [loss, probs] = tape.softmax_cross_entropy(logits, labels);
      const double batch_loss = static_cast<double>(tape.node(loss).v[0]);
      if (std::isnan(batch_loss)) {
        m.mode = Mode::kEval;
        throw Error("train_classifier: diverged (NaN loss) at epoch " + std::to_string(epoch + 1));
      }
      loss_sum += batch_loss * nb;
      const Tensor<T>& p = tape.node(probs);
      for (int i = 0; i < nb; ++i) {
        int arg = 0;
        for (int j = 1; j < m.config.n_classes; ++j) {
          if (p.at(i, j) > p.at(i, arg)) arg = j;
        }
        if (arg == labels[static_cast<std::size_t>(i)]) ++correct;
      }
      tape.backward(loss);
      detail::optimizer_step(m, hyper);
    }
    EpochStats stats;
    stats.loss = loss_sum / static_cast<double>(train.size());
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    report.history.push_back(stats);
    if (stats.loss < best_loss - 1e-12) {
      best_loss = stats.loss;
      bad_epochs = 0;
    } else if (++bad_epochs >= hyper.early_stop_patience) {
      report.early_stopped = true;
      break;
    }
  }
  m.mode = Mode::kEval;
  if (!train.empty() && hyper.epochs > 0) {
    report.final_metrics = evaluate_classifier(m, train);
  }
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// Argmax prediction for one sample; leaves the model in eval mode.
template <typename T>
inline int classify_sample(Model<T>& m, const std::vector<T>& x) {
  m.mode = Mode::kEval;
  Tape<T> tape;
  Rng rng(0);  // eval mode draws nothing
  const auto fwd = classifier_forward(tape, m, x, rng);
  const Tensor<T>& logits = tape.node(fwd.logits);
  int arg = 0;
  for (int j = 1; j < logits.cols(); ++j) {
    if (logits.at(0, j) > logits.at(0, arg)) arg = j;
  }
  return arg;
}

template <typename T>
inline Metrics evaluate_classifier(Model<T>& m, const std::vector<LabeledSample<T>>& test) {
  require(m.config.is_classifier(), "evaluate_classifier: model is not a classifier");
  require(!test.empty(), "evaluate_classifier: empty test set");
  const int k = m.config.n_classes;
  for (const auto& s : test) {
    require(s.label >= 0 && s.label < k,
            "evaluate_classifier: label " + std::to_string(s.label) +
                " outside the model's " + std::to_string(k) + "-class head");
  }
  std::vector<std::vector<long>> conf(static_cast<std::size_t>(k),
                                      std::vector<long>(static_cast<std::size_t>(k), 0));
  for (const auto& s : test) {
    const int pred = classify_sample(m, s.x);
    conf[static_cast<std::size_t>(s.label)][static_cast<std::size_t>(pred)] += 1;
  }
  return Metrics::from_confusion(std::move(conf));
}

// ---- parallel-corpus pairing ----------------------------------------------

// Aligns two accents' recordings of the same material by (set, sentence).
// Repetitions are matched by index when both sides have the same count,
// otherwise all combinations are paired.
inline std::vector<std::pair<ManifestEntry, ManifestEntry>> pair_parallel(
    std::vector<ManifestEntry> src, std::vector<ManifestEntry> dst) {
  auto key = [](const ManifestEntry& e) { return e.set_id * 100 + e.sentence_id; };
  auto by_rep = [](const ManifestEntry& a, const ManifestEntry& b) {
    return a.repetition < b.repetition;
  };
  std::map<int, std::vector<ManifestEntry>> src_groups, dst_groups;
  for (auto& e : src) src_groups[key(e)].push_back(std::move(e));
  for (auto& e : dst) dst_groups[key(e)].push_back(std::move(e));

  std::vector<std::pair<ManifestEntry, ManifestEntry>> pairs;
  for (auto& [k, sg] : src_groups) {
    auto it = dst_groups.find(k);
    if (it == dst_groups.end()) continue;
    auto& dg = it->second;
    std::sort(sg.begin(), sg.end(), by_rep);
    std::sort(dg.begin(), dg.end(), by_rep);
    if (sg.size() == dg.size()) {
      for (std::size_t i = 0; i < sg.size(); ++i) pairs.emplace_back(sg[i], dg[i]);
    } else {
      for (const auto& a : sg) {
        for (const auto& b : dg) pairs.emplace_back(a, b);
      }
    }
  }
  if (pairs.empty()) {
    throw InputError("pair_parallel: no aligned (set, sentence) pairs between the two accents");
  }
  return pairs;
}

// ---- autoencoder training ---------------------------------------------------

template <typename T>
struct FeaturePair {
  std::vector<T> src;  // model input rows (499, or 500 with label prefix), scaled
  std::vector<T> dst;  // reconstruction target, always n_frames rows, scaled
};

// Shared mini-batch MSE loop for pairwise and multi-target autoencoders.
template <typename T>
inline TrainReport train_autoencoder(Model<T>& m, const std::vector<FeaturePair<T>>& pairs,
                                     const Hyper& hyper, Rng& rng) {
  hyper.validate();
  require(m.config.is_autoencoder(), "train_autoencoder: model is not an autoencoder");
  require(!pairs.empty(), "train_autoencoder: empty pair set");
  const std::size_t in_size =
      static_cast<std::size_t>(m.config.input_rows()) * m.config.n_mfcc;
  const std::size_t out_size =
      static_cast<std::size_t>(m.config.n_frames) * m.config.n_mfcc;
  for (const auto& p : pairs) {
    require(p.src.size() == in_size && p.dst.size() == out_size,
            "train_autoencoder: pair shape mismatch");
  }
  const auto t0 = std::chrono::steady_clock::now();
  Rng shuffle_rng = rng.substream("shuffle");
  Rng noise_rng = rng.substream("noise");

  TrainReport report;
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_loss = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  m.mode = Mode::kTrain;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
      const int nb = static_cast<int>(end - start);
      Tape<T> tape;
      typename Tape<T>::NodeId batch_loss_node = -1;
      for (std::size_t i = start; i < end; ++i) {
        const auto& p = pairs[order[i]];
        const auto fwd = autoencoder_forward(tape, m, p.src, noise_rng);
        const auto target = tape.input({m.config.n_frames, m.config.n_mfcc}, p.dst);
        const auto l = tape.mse(fwd.output, target);
        batch_loss_node = batch_loss_node < 0 ? l : tape.add(batch_loss_node, l);
      }
      const auto loss = tape.scale(batch_loss_node, static_cast<T>(1.0 / nb));
      const double batch_loss = static_cast<double>(tape.node(loss).v[0]);
      if (std::isnan(batch_loss)) {
        m.mode = Mode::kEval;
        throw Error("train_autoencoder: diverged (NaN loss) at epoch " + std::to_string(epoch + 1));
      }
      loss_sum += batch_loss * nb;
      tape.backward(loss);
      detail::optimizer_step(m, hyper);
    }
    EpochStats stats;
    stats.loss = loss_sum / static_cast<double>(pairs.size());
    report.history.push_back(stats);
    if (stats.loss < best_loss - 1e-12) {
      best_loss = stats.loss;
      bad_epochs = 0;
    } else if (++bad_epochs >= hyper.early_stop_patience) {
      report.early_stopped = true;
      break;
    }
  }
  m.mode = Mode::kEval;
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

template <typename T>
inline TrainReport train_neutralizer(Model<T>& m, const std::vector<FeaturePair<T>>& pairs,
                                     const Hyper& hyper, Rng& rng) {
  require(!m.config.multi_target, "train_neutralizer: use train_multitarget for this model");
  return train_autoencoder(m, pairs, hyper, rng);
}

// Multi-target variant: same loop over label-prefixed inputs, plus an audit
// that flags identical (body, label) inputs mapped to different targets.
template <typename T>
inline TrainReport train_multitarget(Model<T>& m, const std::vector<FeaturePair<T>>& pairs,
                                     const Hyper& hyper, Rng& rng) {
  require(m.config.multi_target, "train_multitarget: model is not multi-target");
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t conflicts = 0;
  auto fingerprint = [](const std::vector<T>& v) {
    std::string bytes(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
    return std::hash<std::string>{}(bytes);
  };
  for (const auto& p : pairs) {
    const auto key = std::to_string(fingerprint(p.src));
    const auto dst_hash = fingerprint(p.dst);
    auto [it, inserted] = seen.emplace(key, dst_hash);
    if (!inserted && it->second != dst_hash) ++conflicts;
  }
  TrainReport report = train_autoencoder(m, pairs, hyper, rng);
  if (conflicts > 0) {
    report.notes.push_back("duplicate (body, label) inputs with conflicting targets: " +
                           std::to_string(conflicts));
  }
  return report;
}

// ---- neutralization pipeline -------------------------------------------------

// Scales, optionally label-prefixes, converts, and maps back to raw feature
// space. Padding rows beyond the source's valid frames are zeroed so the
// result is a well-formed feature matrix.
template <typename T>
inline MfccMatrix convert_features(Model<T>& converter, const FeatureScaler& scaler,
                                   const MfccMatrix& src, int target_id = -1) {
  require(converter.config.is_autoencoder(), "convert_features: model is not an autoencoder");
  converter.mode = Mode::kEval;
  const MfccMatrix scaled = apply_scaler(scaler, src);

  std::vector<T> input;
  if (converter.config.multi_target) {
    require(target_id >= 0, "convert_features: multi-target model needs a target id");
    const PrefixedMatrix prefixed =
        prefix_target_label(scaled, target_id, converter.config.n_mfcc);
    input = to_values<T>(prefixed);
  } else {
    input = to_values<T>(scaled);
  }

  Tape<T> tape;
  Rng rng(0);  // eval mode adds no noise
  const auto fwd = autoencoder_forward(tape, converter, input, rng);
  const Tensor<T>& out = tape.node(fwd.output);

  MfccMatrix converted;
  converted.n_frames = src.n_frames;
  converted.n_mfcc = src.n_mfcc;
  converted.valid_frames = src.valid_frames;
  converted.values.assign(static_cast<std::size_t>(src.n_frames) * src.n_mfcc, 0.0);
  for (int f = 0; f < src.valid_frames; ++f) {
    for (int j = 0; j < src.n_mfcc; ++j) {
      converted.at(f, j) = static_cast<double>(out.at(f, j));
    }
  }
  return invert_scaler(scaler, converted);
}

// Fraction of converted sources the frozen classifier assigns to the target
// accent.
template <typename T>
inline double evaluate_neutralizer(Model<T>& converter, Model<T>& classifier,
                                   const FeatureScaler& scaler,
                                   const std::vector<MfccMatrix>& sources, int target_id) {
  require(!sources.empty(), "evaluate_neutralizer: empty source set");
  require(target_id >= 0 && target_id < classifier.config.n_classes,
          "evaluate_neutralizer: target accent id " + std::to_string(target_id) +
              " unknown to the classifier");
  long hits = 0;
  for (const auto& src : sources) {
    const MfccMatrix converted = convert_features(converter, scaler, src, target_id);
    if (classify_sample(classifier, to_values<T>(converted)) == target_id) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(sources.size());
}

// Classify-then-convert routing. A sample already predicted as the
// target accent passes through bit-exactly.
template <typename T>
inline MfccMatrix neutralize_route(Model<T>& classifier, const std::map<int, Model<T>*>& bank,
                                   const FeatureScaler& scaler, const MfccMatrix& input,
                                   int target_id, const std::vector<std::string>& accent_names) {
  require(target_id >= 0 && target_id < classifier.config.n_classes,
          "neutralize_route: target accent id out of range");
  const int predicted = classify_sample(classifier, to_values<T>(input));
  if (predicted == target_id) return input;
  auto it = bank.find(predicted);
  if (it == bank.end() || it->second == nullptr) {
    const std::string name = predicted < static_cast<int>(accent_names.size())
                                 ? accent_names[static_cast<std::size_t>(predicted)]
                                 : std::to_string(predicted);
    throw InputError("neutralize_route: bank incomplete, no converter for predicted accent '" +
                     name + "'");
  }
  const int mt_target = it->second->config.multi_target ? target_id : -1;
  return convert_features(*it->second, scaler, input, mt_target);
}

inline long count_pairwise_models(int n_accents) {
  require(n_accents >= 2, "count_pairwise_models: need at least 2 accents");
  return static_cast<long>(n_accents) * (n_accents - 1);
}

}  // namespace accentlab
