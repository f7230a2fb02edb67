// accentlab/experiment.hpp
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
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "accentlab/analysis.hpp"
#include "accentlab/checkpoint.hpp"
#include "accentlab/error.hpp"
#include "accentlab/feature_io.hpp"
#include "accentlab/features.hpp"
#include "accentlab/manifest.hpp"
#include "accentlab/models.hpp"
#include "accentlab/segmentation.hpp"
#include "accentlab/training.hpp"
#include "accentlab/wav.hpp"

namespace accentlab {

// Raised when an experiment config fails validation; carries one message
// per offending field so the CLI can print actionable diagnostics.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> issues)
      : Error("invalid config (" + std::to_string(issues.size()) + " issue(s))"),
        issues_(std::move(issues)) {}
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

enum class Task {
  kSplit,
  kScan,
  kExtract,
  kTrainClassifier,
  kEval,
  kTrainNeutralizer,
  kNeutralize,
  kTrainMt,
  kAnalyze,
  kAttentionDump,
  kReport,
};

inline std::string to_string(Task t) {
  switch (t) {
    case Task::kSplit: return "split";
    case Task::kScan: return "scan";
    case Task::kExtract: return "extract";
    case Task::kTrainClassifier: return "train-classifier";
    case Task::kEval: return "eval";
    case Task::kTrainNeutralizer: return "train-neutralizer";
    case Task::kNeutralize: return "neutralize";
    case Task::kTrainMt: return "train-mt";
    case Task::kAnalyze: return "analyze";
    case Task::kAttentionDump: return "attention-dump";
    case Task::kReport: return "report";
  }
  throw Error("unknown task");
}

inline Task task_from_string(const std::string& s) {
  if (s == "split") return Task::kSplit;
  if (s == "scan") return Task::kScan;
  if (s == "extract") return Task::kExtract;
  if (s == "train-classifier") return Task::kTrainClassifier;
  if (s == "eval") return Task::kEval;
  if (s == "train-neutralizer") return Task::kTrainNeutralizer;
  if (s == "neutralize") return Task::kNeutralize;
  if (s == "train-mt") return Task::kTrainMt;
  if (s == "analyze") return Task::kAnalyze;
  if (s == "attention-dump") return Task::kAttentionDump;
  if (s == "report") return Task::kReport;
  throw InputError("unknown task '" + s + "'");
}

struct DatasetSection {
  std::string root;          // audio tree (split/extract)
  std::string manifest;      // JSONL manifest path
  std::string features_dir;  // extract output consumed by training tasks
  std::vector<std::string> accents;  // optional subset filter
  std::string use = "test";          // eval side: train|test|all
};

struct AnalysisSection {
  std::string method = "tsne";  // pca|tsne
  double perplexity = 5.0;
  double learning_rate = 100.0;
  int epochs = 400;
  int dims = 2;
  int pca_pre = 0;          // optional PCA pre-reduction for t-SNE (0 = off)
  int max_per_accent = 0;   // cap points per accent (0 = all)
};

struct NeutralizeSection {
  std::string source_accent;
  std::string target_accent;
  std::vector<std::string> sources;  // multi-target task
  std::vector<std::string> targets;
  std::string classifier;  // checkpoint path
  std::string converter;   // single converter checkpoint
  std::string bank_dir;    // directory of <Accent>.ckpt converters
  std::string scaler;      // scaler JSON path
  std::string input;       // .ftr (or .wav for attention-dump)
};

struct SplitSection {
  std::string input;  // wav to segment
  double threshold = 0.01;
  double min_silence_s = 2.0;
};

struct ExtractSection {
  int resample_hz = 0;  // 0 = keep native rate
};

struct ReportSection {
  std::vector<std::string> runs;  // run directories holding metrics.json
};

struct ExperimentConfig {
  Task task = Task::kTrainClassifier;
  std::uint64_t seed = 0;
  std::string out_dir;

  DatasetSection dataset;
  SplitSpec split;
  ModelConfig model;
  Hyper hyper;
  FeatureConfig features;
  AnalysisSection analysis;
  NeutralizeSection neutral;
  SplitSection split_task;
  ExtractSection extract;
  ReportSection report;
};

// ---- config parsing ---------------------------------------------------------

namespace cfgdetail {

template <typename T>
inline T get_or(const nlohmann::json& j, const std::string& key, const T& fallback,
                std::vector<std::string>& issues, const std::string& scope) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    issues.push_back(scope + key + ": " + e.what());
    return fallback;
  }
}

inline const nlohmann::json* section(const nlohmann::json& j, const std::string& key,
                                     std::vector<std::string>& issues) {
  if (!j.contains(key)) return nullptr;
  if (!j.at(key).is_object()) {
    issues.push_back(key + ": must be an object");
    return nullptr;
  }
  return &j.at(key);
}

}  // namespace cfgdetail

inline SplitSpec split_spec_from_json(const nlohmann::json& j, std::vector<std::string>& issues,
                                      const std::string& scope) {
  SplitSpec s;
  const std::string kind = cfgdetail::get_or<std::string>(j, "kind", "random", issues, scope);
  if (kind == "random") {
    s.kind = SplitKind::kRandom;
  } else if (kind == "speaker") {
    s.kind = SplitKind::kSpeaker;
  } else {
    issues.push_back(scope + "kind: must be 'random' or 'speaker'");
  }
  s.test_fraction = cfgdetail::get_or(j, "test_fraction", s.test_fraction, issues, scope);
  if (j.contains("speakers")) {
    if (!j.at("speakers").is_object()) {
      issues.push_back(scope + "speakers: must map accent -> {train, test} speaker lists");
    } else {
      for (const auto& [accent, assign] : j.at("speakers").items()) {
        SpeakerAssignment a;
        a.train_speakers = cfgdetail::get_or(assign, "train", a.train_speakers, issues,
                                             scope + "speakers." + accent + ".");
        a.test_speakers = cfgdetail::get_or(assign, "test", a.test_speakers, issues,
                                            scope + "speakers." + accent + ".");
        s.speakers[accent] = std::move(a);
      }
    }
  }
  return s;
}

inline nlohmann::json split_spec_to_json(const SplitSpec& s) {
  nlohmann::json j;
  j["kind"] = s.kind == SplitKind::kRandom ? "random" : "speaker";
  j["test_fraction"] = s.test_fraction;
  if (!s.speakers.empty()) {
    nlohmann::json sp = nlohmann::json::object();
    for (const auto& [accent, a] : s.speakers) {
      sp[accent] = {{"train", a.train_speakers}, {"test", a.test_speakers}};
    }
    j["speakers"] = sp;
  }
  return j;
}

inline FeatureConfig feature_config_from_json(const nlohmann::json& j,
                                              std::vector<std::string>& issues,
                                              const std::string& scope) {
  FeatureConfig f;
  f.frame_ms = cfgdetail::get_or(j, "frame_ms", f.frame_ms, issues, scope);
  f.overlap_ms = cfgdetail::get_or(j, "overlap_ms", f.overlap_ms, issues, scope);
  f.n_mfcc = cfgdetail::get_or(j, "n_mfcc", f.n_mfcc, issues, scope);
  f.n_frames = cfgdetail::get_or(j, "n_frames", f.n_frames, issues, scope);
  f.pre_emphasis = cfgdetail::get_or(j, "pre_emphasis", f.pre_emphasis, issues, scope);
  f.n_mels = cfgdetail::get_or(j, "n_mels", f.n_mels, issues, scope);
  f.fft_size = cfgdetail::get_or(j, "fft_size", f.fft_size, issues, scope);
  f.mel_low_hz = cfgdetail::get_or(j, "mel_low_hz", f.mel_low_hz, issues, scope);
  f.mel_high_hz = cfgdetail::get_or(j, "mel_high_hz", f.mel_high_hz, issues, scope);
  f.log_floor = cfgdetail::get_or(j, "log_floor", f.log_floor, issues, scope);
  return f;
}

inline nlohmann::json feature_config_to_json(const FeatureConfig& f) {
  nlohmann::json j;
  j["frame_ms"] = f.frame_ms;
  j["overlap_ms"] = f.overlap_ms;
  j["n_mfcc"] = f.n_mfcc;
  j["n_frames"] = f.n_frames;
  j["pre_emphasis"] = f.pre_emphasis;
  j["n_mels"] = f.n_mels;
  j["fft_size"] = f.fft_size;
  j["mel_low_hz"] = f.mel_low_hz;
  j["mel_high_hz"] = f.mel_high_hz;
  j["log_floor"] = f.log_floor;
  return j;
}

inline ModelConfig model_config_from_json_lenient(const nlohmann::json& j,
                                                  std::vector<std::string>& issues,
                                                  const std::string& scope) {
  try {
    return model_config_from_json(j);
  } catch (const std::exception& e) {
    issues.push_back(scope + e.what());
    return ModelConfig{};
  }
}

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  std::vector<std::string> issues;
  ExperimentConfig cfg;

  const int version = cfgdetail::get_or(j, "schema_version", 1, issues, "");
  if (version != 1) issues.push_back("schema_version: unsupported version " + std::to_string(version));

  if (!j.contains("task")) {
    issues.push_back("task: required");
  } else {
    try {
      cfg.task = task_from_string(j.at("task").get<std::string>());
    } catch (const std::exception& e) {
      issues.push_back(std::string("task: ") + e.what());
    }
  }
  if (!j.contains("seed")) {
    issues.push_back("seed: required (runs must not seed from the clock)");
  } else {
    cfg.seed = cfgdetail::get_or<std::uint64_t>(j, "seed", 0, issues, "");
  }
  cfg.out_dir = cfgdetail::get_or<std::string>(j, "out_dir", "", issues, "");
  if (cfg.out_dir.empty()) issues.push_back("out_dir: required");

  if (const auto* d = cfgdetail::section(j, "dataset", issues)) {
    cfg.dataset.root = cfgdetail::get_or<std::string>(*d, "root", "", issues, "dataset.");
    cfg.dataset.manifest = cfgdetail::get_or<std::string>(*d, "manifest", "", issues, "dataset.");
    cfg.dataset.features_dir =
        cfgdetail::get_or<std::string>(*d, "features_dir", "", issues, "dataset.");
    cfg.dataset.accents = cfgdetail::get_or(*d, "accents", cfg.dataset.accents, issues, "dataset.");
    cfg.dataset.use = cfgdetail::get_or<std::string>(*d, "use", cfg.dataset.use, issues, "dataset.");
    if (cfg.dataset.use != "train" && cfg.dataset.use != "test" && cfg.dataset.use != "all") {
      issues.push_back("dataset.use: must be train|test|all");
    }
  }
  if (const auto* s = cfgdetail::section(j, "split", issues)) {
    cfg.split = split_spec_from_json(*s, issues, "split.");
  }
  cfg.split.seed = cfg.seed;
  if (const auto* m = cfgdetail::section(j, "model", issues)) {
    cfg.model = model_config_from_json_lenient(*m, issues, "model.");
  }
  if (const auto* h = cfgdetail::section(j, "hyper", issues)) {
    cfg.hyper.epochs = cfgdetail::get_or(*h, "epochs", cfg.hyper.epochs, issues, "hyper.");
    cfg.hyper.batch_size = cfgdetail::get_or(*h, "batch_size", cfg.hyper.batch_size, issues, "hyper.");
    cfg.hyper.lr = cfgdetail::get_or(*h, "lr", cfg.hyper.lr, issues, "hyper.");
    cfg.hyper.early_stop_patience =
        cfgdetail::get_or(*h, "early_stop_patience", cfg.hyper.early_stop_patience, issues, "hyper.");
    const std::string opt =
        cfgdetail::get_or<std::string>(*h, "optimizer", to_string(cfg.hyper.optimizer), issues, "hyper.");
    try {
      cfg.hyper.optimizer = optimizer_from_string(opt);
    } catch (const std::exception& e) {
      issues.push_back(std::string("hyper.optimizer: ") + e.what());
    }
  }
  if (const auto* f = cfgdetail::section(j, "features", issues)) {
    cfg.features = feature_config_from_json(*f, issues, "features.");
  }
  if (const auto* a = cfgdetail::section(j, "analysis", issues)) {
    cfg.analysis.method = cfgdetail::get_or<std::string>(*a, "method", cfg.analysis.method, issues, "analysis.");
    cfg.analysis.perplexity = cfgdetail::get_or(*a, "perplexity", cfg.analysis.perplexity, issues, "analysis.");
    cfg.analysis.learning_rate =
        cfgdetail::get_or(*a, "learning_rate", cfg.analysis.learning_rate, issues, "analysis.");
    cfg.analysis.epochs = cfgdetail::get_or(*a, "epochs", cfg.analysis.epochs, issues, "analysis.");
    cfg.analysis.dims = cfgdetail::get_or(*a, "dims", cfg.analysis.dims, issues, "analysis.");
    cfg.analysis.pca_pre = cfgdetail::get_or(*a, "pca_pre", cfg.analysis.pca_pre, issues, "analysis.");
    cfg.analysis.max_per_accent =
        cfgdetail::get_or(*a, "max_per_accent", cfg.analysis.max_per_accent, issues, "analysis.");
    if (cfg.analysis.method != "pca" && cfg.analysis.method != "tsne") {
      issues.push_back("analysis.method: must be pca|tsne");
    }
  }
  if (const auto* n = cfgdetail::section(j, "neutralize", issues)) {
    cfg.neutral.source_accent =
        cfgdetail::get_or<std::string>(*n, "source_accent", "", issues, "neutralize.");
    cfg.neutral.target_accent =
        cfgdetail::get_or<std::string>(*n, "target_accent", "", issues, "neutralize.");
    cfg.neutral.sources = cfgdetail::get_or(*n, "sources", cfg.neutral.sources, issues, "neutralize.");
    cfg.neutral.targets = cfgdetail::get_or(*n, "targets", cfg.neutral.targets, issues, "neutralize.");
    cfg.neutral.classifier = cfgdetail::get_or<std::string>(*n, "classifier", "", issues, "neutralize.");
    cfg.neutral.converter = cfgdetail::get_or<std::string>(*n, "converter", "", issues, "neutralize.");
    cfg.neutral.bank_dir = cfgdetail::get_or<std::string>(*n, "bank_dir", "", issues, "neutralize.");
    cfg.neutral.scaler = cfgdetail::get_or<std::string>(*n, "scaler", "", issues, "neutralize.");
    cfg.neutral.input = cfgdetail::get_or<std::string>(*n, "input", "", issues, "neutralize.");
  }
  if (const auto* s = cfgdetail::section(j, "segment", issues)) {
    cfg.split_task.input = cfgdetail::get_or<std::string>(*s, "input", "", issues, "segment.");
    cfg.split_task.threshold = cfgdetail::get_or(*s, "threshold", cfg.split_task.threshold, issues, "segment.");
    cfg.split_task.min_silence_s =
        cfgdetail::get_or(*s, "min_silence_s", cfg.split_task.min_silence_s, issues, "segment.");
  }
  if (const auto* e = cfgdetail::section(j, "extract", issues)) {
    cfg.extract.resample_hz = cfgdetail::get_or(*e, "resample_hz", cfg.extract.resample_hz, issues, "extract.");
  }
  if (const auto* r = cfgdetail::section(j, "report", issues)) {
    cfg.report.runs = cfgdetail::get_or(*r, "runs", cfg.report.runs, issues, "report.");
  }

  if (!issues.empty()) throw ConfigError(std::move(issues));
  return cfg;
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["task"] = to_string(cfg.task);
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["dataset"] = {{"root", cfg.dataset.root},
                  {"manifest", cfg.dataset.manifest},
                  {"features_dir", cfg.dataset.features_dir},
                  {"accents", cfg.dataset.accents},
                  {"use", cfg.dataset.use}};
  j["split"] = split_spec_to_json(cfg.split);
  j["model"] = model_config_to_json(cfg.model);
  j["hyper"] = {{"epochs", cfg.hyper.epochs},
                {"batch_size", cfg.hyper.batch_size},
                {"optimizer", to_string(cfg.hyper.optimizer)},
                {"lr", cfg.hyper.lr},
                {"early_stop_patience", cfg.hyper.early_stop_patience}};
  j["features"] = feature_config_to_json(cfg.features);
  j["analysis"] = {{"method", cfg.analysis.method},
                   {"perplexity", cfg.analysis.perplexity},
                   {"learning_rate", cfg.analysis.learning_rate},
                   {"epochs", cfg.analysis.epochs},
                   {"dims", cfg.analysis.dims},
                   {"pca_pre", cfg.analysis.pca_pre},
                   {"max_per_accent", cfg.analysis.max_per_accent}};
  j["neutralize"] = {{"source_accent", cfg.neutral.source_accent},
                     {"target_accent", cfg.neutral.target_accent},
                     {"sources", cfg.neutral.sources},
                     {"targets", cfg.neutral.targets},
                     {"classifier", cfg.neutral.classifier},
                     {"converter", cfg.neutral.converter},
                     {"bank_dir", cfg.neutral.bank_dir},
                     {"scaler", cfg.neutral.scaler},
                     {"input", cfg.neutral.input}};
  j["segment"] = {{"input", cfg.split_task.input},
                  {"threshold", cfg.split_task.threshold},
                  {"min_silence_s", cfg.split_task.min_silence_s}};
  j["extract"] = {{"resample_hz", cfg.extract.resample_hz}};
  j["report"] = {{"runs", cfg.report.runs}};
  return j;
}

// ---- path validation ----------------------------------------------------------

// Existence checks for every input the task will read, done before any
// output is created so a bad config leaves no partial artifacts.
inline void validate_experiment_paths(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  std::vector<std::string> issues;
  auto need = [&](const std::string& path, const std::string& field) {
    if (path.empty()) {
      issues.push_back(field + ": required for task " + to_string(cfg.task));
    } else if (!fs::exists(path)) {
      issues.push_back(field + ": path does not exist: " + path);
    }
  };
  switch (cfg.task) {
    case Task::kSplit:
      need(cfg.split_task.input, "segment.input");
      break;
    case Task::kScan:
      need(cfg.dataset.root, "dataset.root");
      break;
    case Task::kExtract:
      need(cfg.dataset.manifest, "dataset.manifest");
      if (!cfg.dataset.root.empty() && !fs::exists(cfg.dataset.root)) {
        issues.push_back("dataset.root: path does not exist: " + cfg.dataset.root);
      }
      break;
    case Task::kTrainClassifier:
      need(cfg.dataset.manifest, "dataset.manifest");
      need(cfg.dataset.features_dir, "dataset.features_dir");
      break;
    case Task::kEval:
      need(cfg.dataset.manifest, "dataset.manifest");
      need(cfg.dataset.features_dir, "dataset.features_dir");
      need(cfg.neutral.classifier, "neutralize.classifier");
      break;
    case Task::kTrainNeutralizer:
      need(cfg.dataset.manifest, "dataset.manifest");
      need(cfg.dataset.features_dir, "dataset.features_dir");
      if (cfg.neutral.source_accent.empty()) issues.push_back("neutralize.source_accent: required");
      if (cfg.neutral.target_accent.empty()) issues.push_back("neutralize.target_accent: required");
      break;
    case Task::kNeutralize:
      need(cfg.neutral.classifier, "neutralize.classifier");
      need(cfg.neutral.scaler, "neutralize.scaler");
      need(cfg.neutral.input, "neutralize.input");
      if (cfg.neutral.bank_dir.empty() && cfg.neutral.converter.empty()) {
        issues.push_back("neutralize.bank_dir or neutralize.converter: one is required");
      } else if (!cfg.neutral.bank_dir.empty()) {
        need(cfg.neutral.bank_dir, "neutralize.bank_dir");
      } else {
        need(cfg.neutral.converter, "neutralize.converter");
      }
      if (cfg.neutral.target_accent.empty()) issues.push_back("neutralize.target_accent: required");
      break;
    case Task::kTrainMt:
      need(cfg.dataset.manifest, "dataset.manifest");
      need(cfg.dataset.features_dir, "dataset.features_dir");
      if (cfg.neutral.sources.empty()) issues.push_back("neutralize.sources: required");
      if (cfg.neutral.targets.empty()) issues.push_back("neutralize.targets: required");
      break;
    case Task::kAnalyze:
      need(cfg.dataset.manifest, "dataset.manifest");
      need(cfg.dataset.features_dir, "dataset.features_dir");
      break;
    case Task::kAttentionDump:
      need(cfg.neutral.classifier, "neutralize.classifier");
      need(cfg.neutral.input, "neutralize.input");
      break;
    case Task::kReport:
      if (cfg.report.runs.empty()) issues.push_back("report.runs: required");
      for (const auto& r : cfg.report.runs) {
        if (!fs::exists(r + "/metrics.json")) {
          issues.push_back("report.runs: no metrics.json under " + r);
        }
      }
      break;
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

// ---- shared plumbing ------------------------------------------------------------

inline std::string feature_file_for(const std::string& features_dir, const std::string& entry_path) {
  std::string name = entry_path;
  for (auto& ch : name) {
    if (ch == '/' || ch == '\\') ch = '_';
  }
  if (name.size() > 4 && name.compare(name.size() - 4, 4, ".wav") == 0) {
    name.resize(name.size() - 4);
  }
  return features_dir + "/" + name + ".ftr";
}

inline void save_scaler(const FeatureScaler& s, const std::string& path) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["min"] = s.min_v;
  j["max"] = s.max_v;
  std::ofstream out(path);
  if (!out) throw InputError("save_scaler: cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

inline FeatureScaler load_scaler(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("load_scaler: cannot read '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
    FeatureScaler s;
    s.min_v = j.at("min").get<std::vector<double>>();
    s.max_v = j.at("max").get<std::vector<double>>();
    require(s.min_v.size() == s.max_v.size(), "scaler: min/max size mismatch");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("load_scaler: " + std::string(e.what()));
  }
}

inline Manifest filter_manifest(const Manifest& m, const std::vector<std::string>& accents) {
  if (accents.empty()) return m;
  std::set<std::string> keep;
  for (const auto& a : accents) {
    const auto canon = canonical_accent(a);
    require(canon.has_value(), "filter: unknown accent label '" + a + "'");
    keep.insert(*canon);
  }
  Manifest out;
  for (const auto& e : m.entries) {
    if (keep.count(e.accent)) out.entries.push_back(e);
  }
  require(!out.entries.empty(), "filter: no manifest entries match the accent selection");
  out.rebuild_accent_index();
  return out;
}

inline MfccMatrix load_entry_features(const std::string& features_dir, const ManifestEntry& e,
                                      const FeatureConfig& fcfg) {
  const std::string path = feature_file_for(features_dir, e.path);
  if (!std::filesystem::exists(path)) {
    throw InputError("missing feature file for '" + e.path + "': expected " + path +
                     " (run extract first)");
  }
  return load_features(path, fcfg);
}

namespace detail {

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
  if (!out.good()) throw InputError("write failed for '" + path + "'");
}

inline void write_text_file(const std::string& text, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
  if (!out.good()) throw InputError("write failed for '" + path + "'");
}

inline std::string confusion_csv(const Metrics& m, const std::vector<std::string>& labels) {
  std::ostringstream out;
  out << "true\\pred";
  for (const auto& l : labels) out << "," << l;
  out << "\n";
  for (std::size_t i = 0; i < m.confusion.size(); ++i) {
    out << labels[i];
    for (std::size_t jj = 0; jj < m.confusion[i].size(); ++jj) out << "," << m.confusion[i][jj];
    out << "\n";
  }
  return out.str();
}

inline std::string history_csv(const TrainReport& r) {
  std::ostringstream out;
  out << std::setprecision(10) << "epoch,loss,accuracy\n";
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    out << (i + 1) << "," << r.history[i].loss << "," << r.history[i].accuracy << "\n";
  }
  return out.str();
}

inline nlohmann::json metrics_json(const Metrics& m, const std::vector<std::string>& labels) {
  nlohmann::json j;
  j["accuracy"] = m.accuracy;
  j["confusion"] = m.confusion;
  j["labels"] = labels;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  return j;
}

// Deterministic per-accent matrix loading, manifest order.
inline std::map<std::string, std::vector<MfccMatrix>> load_matrices_by_accent(
    const Manifest& manifest, const std::string& features_dir, const FeatureConfig& fcfg) {
  std::map<std::string, std::vector<MfccMatrix>> out;
  for (const auto& e : manifest.entries) {
    out[e.accent].push_back(load_entry_features(features_dir, e, fcfg));
  }
  return out;
}

template <typename T>
inline std::vector<LabeledSample<T>> to_labeled_samples(const Manifest& manifest,
                                                        const std::vector<ManifestEntry>& entries,
                                                        const std::string& features_dir,
                                                        const FeatureConfig& fcfg) {
  std::vector<LabeledSample<T>> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    LabeledSample<T> s;
    s.label = manifest.accent_id(e.accent);
    s.x = to_values<T>(load_entry_features(features_dir, e, fcfg));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

// ---- run context ---------------------------------------------------------------

class RunContext {
 public:
  explicit RunContext(const ExperimentConfig& cfg) : cfg_(cfg), t0_(std::chrono::steady_clock::now()) {
    std::filesystem::create_directories(cfg.out_dir);
    detail::write_json_file(experiment_config_to_json(cfg), cfg.out_dir + "/config_snapshot.json");
  }

  // metrics.json must be byte-identical across same-seed runs: no wall
  // times or timestamps belong in it. Volatile facts go to report.json.
  void finish(nlohmann::json metrics) {
    metrics["schema_version"] = 1;
    metrics["task"] = to_string(cfg_.task);
    metrics["seed"] = cfg_.seed;
    detail::write_json_file(metrics, cfg_.out_dir + "/metrics.json");
    nlohmann::json rep;
    rep["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    detail::write_json_file(rep, cfg_.out_dir + "/report.json");
  }

  std::string path(const std::string& name) const { return cfg_.out_dir + "/" + name; }

 private:
  const ExperimentConfig& cfg_;
  std::chrono::steady_clock::time_point t0_;
};

// ---- task runners ----------------------------------------------------------------

namespace runners {

inline void run_split(const ExperimentConfig& cfg, RunContext& ctx) {
  const AudioClip clip = read_wav(cfg.split_task.input);
  const auto pieces = split_on_silence(clip, cfg.split_task.threshold, cfg.split_task.min_silence_s);
  nlohmann::json seg = nlohmann::json::array();
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    std::ostringstream name;
    name << "segment_" << std::setw(3) << std::setfill('0') << i << ".wav";
    write_wav(pieces[i], ctx.path(name.str()));
    seg.push_back({{"file", name.str()},
                   {"samples", pieces[i].samples.size()},
                   {"duration_s", pieces[i].duration_s()}});
  }
  nlohmann::json m;
  m["n_segments"] = pieces.size();
  m["segments"] = seg;
  ctx.finish(m);
}

inline void run_scan(const ExperimentConfig& cfg, RunContext& ctx) {
  const ScanResult res = scan_dataset(cfg.dataset.root);
  save_manifest(res.manifest, ctx.path("manifest.jsonl"));
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  nlohmann::json m;
  m["n_entries"] = res.manifest.entries.size();
  m["accents"] = res.manifest.accent_labels();
  m["n_warnings"] = res.warnings.size();
  ctx.finish(m);
}

inline void run_extract(const ExperimentConfig& cfg, RunContext& ctx) {
  const Manifest manifest =
      filter_manifest(load_manifest(cfg.dataset.manifest), cfg.dataset.accents);
  FeatureConfig fcfg = cfg.features;
  fcfg.validate();
  long n = 0;
  for (const auto& e : manifest.entries) {
    std::string wav_path = e.path;
    if (!std::filesystem::exists(wav_path) && !cfg.dataset.root.empty()) {
      wav_path = cfg.dataset.root + "/" + e.path;
    }
    AudioClip clip = read_wav(wav_path);
    if (cfg.extract.resample_hz > 0 && clip.sample_rate_hz != cfg.extract.resample_hz) {
      clip = resample_linear(clip, cfg.extract.resample_hz);
    }
    const MfccMatrix feats = mfcc_sequence(clip, fcfg);
    save_features(feats, feature_file_for(cfg.out_dir, e.path));
    ++n;
  }
  nlohmann::json m;
  m["n_files"] = n;
  m["n_frames"] = fcfg.n_frames;
  m["n_mfcc"] = fcfg.n_mfcc;
  ctx.finish(m);
}

inline void run_train_classifier(const ExperimentConfig& cfg, RunContext& ctx) {
  const Manifest manifest =
      filter_manifest(load_manifest(cfg.dataset.manifest), cfg.dataset.accents);
  const auto labels = manifest.accent_labels();

  ModelConfig mc = cfg.model;
  mc.n_classes = static_cast<int>(labels.size());
  mc.n_frames = cfg.features.n_frames;
  mc.n_mfcc = cfg.features.n_mfcc;
  mc.validate();
  require(mc.is_classifier(), "train-classifier: model family must be a classifier");

  const Split split = make_split(manifest, cfg.split);
  const auto train = detail::to_labeled_samples<float>(manifest, split.train,
                                                       cfg.dataset.features_dir, cfg.features);
  const auto test = detail::to_labeled_samples<float>(manifest, split.test,
                                                      cfg.dataset.features_dir, cfg.features);

  Rng init_rng = Rng(cfg.seed).substream("init");
  Model<float> model = build_model<float>(mc, init_rng);
  Rng train_rng(cfg.seed);
  const TrainReport report = train_classifier(model, train, cfg.hyper, train_rng);
  const Metrics test_metrics = evaluate_classifier(model, test);

  save_model(model, ctx.path("model.ckpt"));
  detail::write_json_file(nlohmann::json(labels), ctx.path("labels.json"));
  detail::write_text_file(detail::confusion_csv(test_metrics, labels), ctx.path("confusion.csv"));
  detail::write_text_file(detail::history_csv(report), ctx.path("history.csv"));

  nlohmann::json m;
  m["model_family"] = to_string(mc.family);
  m["n_train"] = train.size();
  m["n_test"] = test.size();
  m["epochs_run"] = report.history.size();
  m["early_stopped"] = report.early_stopped;
  m["final_train_loss"] = report.history.empty() ? 0.0 : report.history.back().loss;
  m["train_accuracy"] = report.final_metrics.accuracy;
  m["test"] = detail::metrics_json(test_metrics, labels);
  m["accuracy"] = test_metrics.accuracy;
  ctx.finish(m);
}

inline void run_eval(const ExperimentConfig& cfg, RunContext& ctx) {
  const Manifest manifest =
      filter_manifest(load_manifest(cfg.dataset.manifest), cfg.dataset.accents);
  const auto labels = manifest.accent_labels();
  Model<float> model = load_model(cfg.neutral.classifier);
  require(model.config.n_classes == static_cast<int>(labels.size()),
          "eval: model expects " + std::to_string(model.config.n_classes) +
              " classes but manifest selection has " + std::to_string(labels.size()));

  std::vector<ManifestEntry> entries;
  if (cfg.dataset.use == "all") {
    entries = manifest.entries;
  } else {
    const Split split = make_split(manifest, cfg.split);
    entries = cfg.dataset.use == "train" ? split.train : split.test;
  }
  const auto samples =
      detail::to_labeled_samples<float>(manifest, entries, cfg.dataset.features_dir, cfg.features);
  const Metrics metrics = evaluate_classifier(model, samples);

  detail::write_text_file(detail::confusion_csv(metrics, labels), ctx.path("confusion.csv"));
  nlohmann::json m;
  m["model_family"] = to_string(model.config.family);
  m["n_samples"] = samples.size();
  m["use"] = cfg.dataset.use;
  m["test"] = detail::metrics_json(metrics, labels);
  m["accuracy"] = metrics.accuracy;
  ctx.finish(m);
}

// Shared by the pairwise and multi-target trainers: loads both accents'
// matrices, fits the scaler over everything involved, and builds aligned
// scaled pairs.
struct PairCorpus {
  FeatureScaler scaler;
  std::vector<FeaturePair<float>> train_pairs;
  std::vector<FeaturePair<float>> holdout_pairs;
};

inline PairCorpus build_pair_corpus(const Manifest& manifest, const ExperimentConfig& cfg,
                                    const std::vector<std::pair<std::string, std::string>>& routes,
                                    bool multi_target) {
  std::set<std::string> involved;
  for (const auto& [s, t] : routes) {
    involved.insert(s);
    involved.insert(t);
  }
  std::map<std::string, std::vector<ManifestEntry>> entries_by_accent;
  for (const auto& e : manifest.entries) {
    if (involved.count(e.accent)) entries_by_accent[e.accent].push_back(e);
  }
  for (const auto& a : involved) {
    require(entries_by_accent.count(a) && !entries_by_accent[a].empty(),
            "pair corpus: no manifest entries for accent '" + a + "'");
  }

  std::map<std::string, std::map<std::string, MfccMatrix>> feats;  // accent -> path -> matrix
  std::vector<MfccMatrix> all;
  for (const auto& [accent, entries] : entries_by_accent) {
    for (const auto& e : entries) {
      MfccMatrix mtx = load_entry_features(cfg.dataset.features_dir, e, cfg.features);
      all.push_back(mtx);
      feats[accent].emplace(e.path, std::move(mtx));
    }
  }
  PairCorpus corpus;
  corpus.scaler = fit_scaler(all);

  std::vector<FeaturePair<float>> pairs;
  for (const auto& [src_accent, dst_accent] : routes) {
    const auto matched = pair_parallel(entries_by_accent[src_accent], entries_by_accent[dst_accent]);
    const int target_id = manifest.accent_id(dst_accent);
    for (const auto& [se, de] : matched) {
      const MfccMatrix src_scaled = apply_scaler(corpus.scaler, feats[src_accent].at(se.path));
      const MfccMatrix dst_scaled = apply_scaler(corpus.scaler, feats[dst_accent].at(de.path));
      FeaturePair<float> p;
      if (multi_target) {
        p.src = to_values<float>(prefix_target_label(src_scaled, target_id, src_scaled.n_mfcc));
      } else {
        p.src = to_values<float>(src_scaled);
      }
      p.dst = to_values<float>(dst_scaled);
      pairs.push_back(std::move(p));
    }
  }

  // Seeded 80/20 split for held-out reconstruction reporting.
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng pair_rng = Rng(cfg.seed).substream("pair-split");
  pair_rng.shuffle(order);
  const std::size_t n_holdout = pairs.size() >= 5 ? pairs.size() / 5 : 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dest = i < n_holdout ? corpus.holdout_pairs : corpus.train_pairs;
    dest.push_back(std::move(pairs[order[i]]));
  }
  return corpus;
}

template <typename T>
inline double mean_reconstruction_mse(Model<T>& model, const std::vector<FeaturePair<T>>& pairs) {
  if (pairs.empty()) return 0.0;
  model.mode = Mode::kEval;
  Rng rng(0);
  double total = 0.0;
  for (const auto& p : pairs) {
    Tape<T> tape;
    const auto fwd = autoencoder_forward(tape, model, p.src, rng);
    const Tensor<T>& out = tape.node(fwd.output);
    double acc = 0.0;
    for (std::size_t i = 0; i < p.dst.size(); ++i) {
      const double d = static_cast<double>(out.v[i]) - static_cast<double>(p.dst[i]);
      acc += d * d;
    }
    total += acc / static_cast<double>(p.dst.size());
  }
  return total / static_cast<double>(pairs.size());
}

inline void run_train_neutralizer(const ExperimentConfig& cfg, RunContext& ctx) {
  const Manifest manifest =
      filter_manifest(load_manifest(cfg.dataset.manifest), cfg.dataset.accents);
  const auto src = canonical_accent(cfg.neutral.source_accent);
  const auto dst = canonical_accent(cfg.neutral.target_accent);
  require(src.has_value(), "train-neutralizer: unknown source accent");
  require(dst.has_value(), "train-neutralizer: unknown target accent");

  ModelConfig mc = cfg.model;
  if (mc.is_classifier()) mc.family = ModelFamily::kConvAutoencoder;
  mc.multi_target = false;
  mc.skip_connections = false;
  mc.n_frames = cfg.features.n_frames;
  mc.n_mfcc = cfg.features.n_mfcc;
  mc.validate();

  PairCorpus corpus = build_pair_corpus(manifest, cfg, {{*src, *dst}}, false);
  Rng init_rng = Rng(cfg.seed).substream("init");
  Model<float> model = build_model<float>(mc, init_rng);
  Rng train_rng(cfg.seed);
  const TrainReport report = train_neutralizer(model, corpus.train_pairs, cfg.hyper, train_rng);

  save_model(model, ctx.path("model.ckpt"));
  save_scaler(corpus.scaler, ctx.path("scaler.json"));
  detail::write_text_file(detail::history_csv(report), ctx.path("history.csv"));

  nlohmann::json m;
  m["model_family"] = to_string(mc.family);
  m["source"] = *src;
  m["target"] = *dst;
  m["n_train_pairs"] = corpus.train_pairs.size();
  m["n_holdout_pairs"] = corpus.holdout_pairs.size();
  m["final_train_mse"] = report.history.empty() ? 0.0 : report.history.back().loss;
  m["holdout_mse"] = mean_reconstruction_mse(model, corpus.holdout_pairs);
  ctx.finish(m);
}

inline void run_train_mt(const ExperimentConfig& cfg, RunContext& ctx) {
  const Manifest manifest =
      filter_manifest(load_manifest(cfg.dataset.manifest), cfg.dataset.accents);
  std::vector<std::pair<std::string, std::string>> routes;
  std::vector<std::string> sources, targets;
  for (const auto& s : cfg.neutral.sources) {
    const auto c = canonical_accent(s);
    require(c.has_value(), "train-mt: unknown source accent '" + s + "'");
    sources.push_back(*c);
  }
  for (const auto& t : cfg.neutral.targets) {
    const auto c = canonical_accent(t);
    require(c.has_value(), "train-mt: unknown target accent '" + t + "'");
    targets.push_back(*c);
  }
  for (const auto& s : sources) {
    for (const auto& t : targets) routes.emplace_back(s, t);
  }

  ModelConfig mc = cfg.model;
  if (mc.is_classifier()) mc.family = ModelFamily::kConvAutoencoder;
  mc.multi_target = true;
  mc.n_frames = cfg.features.n_frames;
  mc.n_mfcc = cfg.features.n_mfcc;
  mc.validate();

  PairCorpus corpus = build_pair_corpus(manifest, cfg, routes, true);
  Rng init_rng = Rng(cfg.seed).substream("init");
  Model<float> model = build_model<float>(mc, init_rng);
  Rng train_rng(cfg.seed);
  const TrainReport report = train_multitarget(model, corpus.train_pairs, cfg.hyper, train_rng);

  save_model(model, ctx.path("model.ckpt"));
  save_scaler(corpus.scaler, ctx.path("scaler.json"));
  detail::write_json_file(nlohmann::json(manifest.accent_labels()), ctx.path("labels.json"));
  detail::write_text_file(detail::history_csv(report), ctx.path("history.csv"));

  nlohmann::json m;
  m["model_family"] = to_string(mc.family);
  m["sources"] = sources;
  m["targets"] = targets;
  m["skip_connections"] = mc.skip_connections;
  m["n_train_pairs"] = corpus.train_pairs.size();
  m["n_holdout_pairs"] = corpus.holdout_pairs.size();
  m["final_train_mse"] = report.history.empty() ? 0.0 : report.history.back().loss;
  m["holdout_mse"] = mean_reconstruction_mse(model, corpus.holdout_pairs);
  m["notes"] = report.notes;

  // Routed-accuracy if a frozen classifier is supplied.
  if (!cfg.neutral.classifier.empty()) {
    Model<float> clf = load_model(cfg.neutral.classifier);
    std::map<std::string, std::vector<MfccMatrix>> by_accent;
    for (const auto& e : manifest.entries) {
      if (std::find(sources.begin(), sources.end(), e.accent) != sources.end()) {
        by_accent[e.accent].push_back(
            load_entry_features(cfg.dataset.features_dir, e, cfg.features));
      }
    }
    nlohmann::json routed = nlohmann::json::object();
    for (const auto& t : targets) {
      const int target_id = manifest.accent_id(t);
      long hits = 0, total = 0;
      for (const auto& [accent, mats] : by_accent) {
        for (const auto& mtx : mats) {
          const MfccMatrix conv = convert_features(model, corpus.scaler, mtx, target_id);
          if (classify_sample(clf, to_values<float>(conv)) == target_id) ++hits;
          ++total;
        }
      }
      routed[t] = total > 0 ? static_cast<double>(hits) / total : 0.0;
    }
    m["routed_accuracy"] = routed;
  }
  ctx.finish(m);
}

inline void run_neutralize(const ExperimentConfig& cfg, RunContext& ctx) {
  Model<float> classifier = load_model(cfg.neutral.classifier);
  const FeatureScaler scaler = load_scaler(cfg.neutral.scaler);

  // Class labels ride alongside the classifier checkpoint.
  std::vector<std::string> labels;
  const std::string labels_path =
      std::filesystem::path(cfg.neutral.classifier).parent_path() / "labels.json";
  if (std::filesystem::exists(labels_path)) {
    std::ifstream in(labels_path);
    nlohmann::json j;
    in >> j;
    labels = j.get<std::vector<std::string>>();
  } else {
    for (int i = 0; i < classifier.config.n_classes; ++i) labels.push_back(std::to_string(i));
  }
  require(static_cast<int>(labels.size()) == classifier.config.n_classes,
          "neutralize: labels.json does not match the classifier head");

  auto label_id = [&](const std::string& name) {
    const auto canon = canonical_accent(name);
    const std::string want = canon ? *canon : name;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == want) return static_cast<int>(i);
    }
    throw InputError("neutralize: accent '" + name + "' not among classifier labels");
  };
  const int target_id = label_id(cfg.neutral.target_accent);

  const MfccMatrix input = load_features(cfg.neutral.input, cfg.features);

  std::vector<std::unique_ptr<Model<float>>> owned;
  std::map<int, Model<float>*> bank;
  if (!cfg.neutral.bank_dir.empty()) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const std::string p = cfg.neutral.bank_dir + "/" + labels[i] + ".ckpt";
      if (std::filesystem::exists(p)) {
        owned.push_back(std::make_unique<Model<float>>(load_model(p)));
        bank[static_cast<int>(i)] = owned.back().get();
      }
    }
  } else {
    owned.push_back(std::make_unique<Model<float>>(load_model(cfg.neutral.converter)));
    for (std::size_t i = 0; i < labels.size(); ++i) bank[static_cast<int>(i)] = owned.back().get();
  }

  const int predicted = classify_sample(classifier, to_values<float>(input));
  const MfccMatrix converted =
      neutralize_route(classifier, bank, scaler, input, target_id, labels);
  save_features(converted, ctx.path("converted.ftr"));

  nlohmann::json m;
  m["predicted_accent"] = labels[static_cast<std::size_t>(predicted)];
  m["target_accent"] = labels[static_cast<std::size_t>(target_id)];
  m["passthrough"] = predicted == target_id;
  ctx.finish(m);
}

inline void run_analyze(const ExperimentConfig& cfg, RunContext& ctx) {
  const Manifest manifest =
      filter_manifest(load_manifest(cfg.dataset.manifest), cfg.dataset.accents);
  const auto labels = manifest.accent_labels();

  std::vector<double> X;
  std::vector<int> point_labels;
  std::map<std::string, int> taken;
  int dim = 0;
  for (const auto& e : manifest.entries) {
    if (cfg.analysis.max_per_accent > 0 && taken[e.accent] >= cfg.analysis.max_per_accent) continue;
    const MfccMatrix mtx = load_entry_features(cfg.dataset.features_dir, e, cfg.features);
    const auto flat = flatten(mtx);
    if (dim == 0) dim = static_cast<int>(flat.size());
    X.insert(X.end(), flat.begin(), flat.end());
    point_labels.push_back(manifest.accent_id(e.accent));
    ++taken[e.accent];
  }
  const int n = static_cast<int>(point_labels.size());
  require(n >= 2, "analyze: need at least 2 feature files");

  nlohmann::json m;
  m["method"] = cfg.analysis.method;
  m["n_points"] = n;
  m["labels"] = labels;
  if (cfg.analysis.method == "pca") {
    const PcaResult res = pca(X, n, dim, cfg.analysis.dims, point_labels);
    export_embedding(res.embedding, ctx.path("embedding.csv"));
    m["explained_variance"] = res.explained_variance;
    m["warnings"] = res.embedding.warnings;
  } else {
    std::vector<double> input = X;
    int in_dim = dim;
    if (cfg.analysis.pca_pre > 0 && cfg.analysis.pca_pre < dim) {
      const int k = std::min(cfg.analysis.pca_pre, n);
      const PcaResult pre = pca(X, n, dim, k);
      input = pre.embedding.points;
      in_dim = k;
      m["pca_pre"] = k;
    }
    TsneParams prm;
    prm.perplexity = cfg.analysis.perplexity;
    prm.learning_rate = cfg.analysis.learning_rate;
    prm.epochs = cfg.analysis.epochs;
    prm.out_dims = cfg.analysis.dims;
    prm.seed = cfg.seed;
    const Embedding emb = tsne(input, n, in_dim, prm, point_labels);
    export_embedding(emb, ctx.path("embedding.csv"));
    std::ostringstream kl;
    kl << std::setprecision(10) << "epoch,kl\n";
    for (std::size_t i = 0; i < emb.kl_history.size(); ++i) {
      kl << (i + 1) << "," << emb.kl_history[i] << "\n";
    }
    detail::write_text_file(kl.str(), ctx.path("kl.csv"));
    m["perplexity"] = prm.perplexity;
    m["learning_rate"] = prm.learning_rate;
    m["epochs"] = prm.epochs;
    m["final_kl"] = emb.kl_history.back();
  }
  ctx.finish(m);
}

inline void run_attention_dump(const ExperimentConfig& cfg, RunContext& ctx) {
  Model<float> model = load_model(cfg.neutral.classifier);
  require(model.config.family == ModelFamily::kAttentionCnn,
          "attention-dump: checkpoint is not an attention classifier");

  MfccMatrix feats;
  if (cfg.neutral.input.size() > 4 &&
      cfg.neutral.input.compare(cfg.neutral.input.size() - 4, 4, ".wav") == 0) {
    AudioClip clip = read_wav(cfg.neutral.input);
    if (cfg.extract.resample_hz > 0 && clip.sample_rate_hz != cfg.extract.resample_hz) {
      clip = resample_linear(clip, cfg.extract.resample_hz);
    }
    feats = mfcc_sequence(clip, cfg.features);
  } else {
    feats = load_features(cfg.neutral.input, cfg.features);
  }

  const double hop_ms = cfg.features.frame_ms - cfg.features.overlap_ms;
  const auto dump = attention_scores(model, to_values<float>(feats), hop_ms);
  std::vector<double> scores(dump.scores.begin(), dump.scores.end());
  export_attention(scores, dump.t_dim, dump.c_dim, dump.time_ms, ctx.path("attention.csv"));

  int argmax = 0;
  if (dump.c_dim == 1) {
    for (int t = 1; t < dump.t_dim; ++t) {
      if (scores[static_cast<std::size_t>(t)] > scores[static_cast<std::size_t>(argmax)]) argmax = t;
    }
  }
  nlohmann::json m;
  m["variant"] = to_string(model.config.attention_variant);
  m["site"] = model.config.attention_site;
  m["t_dim"] = dump.t_dim;
  m["c_dim"] = dump.c_dim;
  if (dump.c_dim == 1) m["peak_time_ms"] = dump.time_ms[static_cast<std::size_t>(argmax)];
  ctx.finish(m);
}

inline void run_report(const ExperimentConfig& cfg, RunContext& ctx) {
  static const std::vector<std::string> kColumns = {
      "task",        "seed",           "model_family",   "accuracy",
      "train_accuracy", "final_train_loss", "final_train_mse", "holdout_mse",
      "final_kl",    "n_train",        "n_test",         "source",
      "target",      "epochs_run"};
  std::ostringstream out;
  out << "run";
  for (const auto& c : kColumns) out << "," << c;
  out << "\n";
  for (const auto& run : cfg.report.runs) {
    std::ifstream in(run + "/metrics.json");
    nlohmann::json j;
    in >> j;
    out << run;
    for (const auto& c : kColumns) {
      out << ",";
      if (j.contains(c)) {
        const auto& v = j.at(c);
        if (v.is_string()) {
          out << v.get<std::string>();
        } else {
          out << v.dump();
        }
      }
    }
    out << "\n";
  }
  detail::write_text_file(out.str(), ctx.path("report.csv"));
  nlohmann::json m;
  m["n_runs"] = cfg.report.runs.size();
  ctx.finish(m);
}

}  // namespace runners

// Validates input paths, then executes the configured task, writing the
// config snapshot, metrics.json (deterministic), and report.json (volatile)
// into out_dir.
inline void run_experiment(const ExperimentConfig& cfg) {
  validate_experiment_paths(cfg);
  RunContext ctx(cfg);
  switch (cfg.task) {
    case Task::kSplit: runners::run_split(cfg, ctx); break;
    case Task::kScan: runners::run_scan(cfg, ctx); break;
    case Task::kExtract: runners::run_extract(cfg, ctx); break;
    case Task::kTrainClassifier: runners::run_train_classifier(cfg, ctx); break;
    case Task::kEval: runners::run_eval(cfg, ctx); break;
    case Task::kTrainNeutralizer: runners::run_train_neutralizer(cfg, ctx); break;
    case Task::kNeutralize: runners::run_neutralize(cfg, ctx); break;
    case Task::kTrainMt: runners::run_train_mt(cfg, ctx); break;
    case Task::kAnalyze: runners::run_analyze(cfg, ctx); break;
    case Task::kAttentionDump: runners::run_attention_dump(cfg, ctx); break;
    case Task::kReport: runners::run_report(cfg, ctx); break;
  }
}

}  // namespace accentlab
