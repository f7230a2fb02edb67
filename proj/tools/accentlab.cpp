// tools/accentlab.cpp
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

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "accentlab/experiment.hpp"

namespace {

using nlohmann::json;

// Flags accumulate into a nested JSON overlay which is merge-patched over
// the config file, so a flag always wins over the file.
struct Overlay {
  json j = json::object();
  void set(const std::string& pointer, json v) {
    j[json::json_pointer(pointer)] = std::move(v);
  }
};

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw accentlab::InputError("cannot read config file '" + path + "'");
  try {
    json j;
    in >> j;
    if (!j.is_object()) throw accentlab::InputError("config root must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw accentlab::InputError("config file '" + path + "': " + e.what());
  }
}

int run_task(const std::string& task, const std::string& config_path, const Overlay& overlay) {
  try {
    json cfg_json = config_path.empty() ? json::object() : load_config_file(config_path);
    cfg_json.merge_patch(overlay.j);
    cfg_json["task"] = task;
    accentlab::ExperimentConfig cfg;
    try {
      cfg = accentlab::parse_experiment_config(cfg_json);
      accentlab::validate_experiment_paths(cfg);
    } catch (const accentlab::ConfigError& e) {
      std::cerr << "config error:\n";
      for (const auto& issue : e.issues()) std::cerr << "  - " << issue << "\n";
      return 2;
    }
    accentlab::run_experiment(cfg);
    std::cout << "done: " << cfg.out_dir << "/metrics.json\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"accent classification, conversion, and embedding workbench"};
  app.require_subcommand(1);

  int exit_code = 0;
  std::string config_path;
  Overlay ov;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file; flags override it");
    cmd->add_option_function<std::string>(
        "--out", [&](const std::string& v) { ov.set("/out_dir", v); }, "output directory");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { ov.set("/seed", v); }, "master RNG seed (required)");
  };
  auto add_dataset = [&](CLI::App* cmd) {
    cmd->add_option_function<std::string>(
        "--manifest", [&](const std::string& v) { ov.set("/dataset/manifest", v); },
        "manifest JSONL path");
    cmd->add_option_function<std::string>(
        "--features-dir", [&](const std::string& v) { ov.set("/dataset/features_dir", v); },
        "directory of extracted .ftr files");
    cmd->add_option_function<std::vector<std::string>>(
          "--accents", [&](const std::vector<std::string>& v) { ov.set("/dataset/accents", v); },
          "restrict to these accent labels")
        ->delimiter(',');
  };
  auto add_split_spec = [&](CLI::App* cmd) {
    cmd->add_option_function<std::string>(
        "--split-kind", [&](const std::string& v) { ov.set("/split/kind", v); },
        "random or speaker");
    cmd->add_option_function<double>(
        "--test-fraction", [&](double v) { ov.set("/split/test_fraction", v); },
        "held-out fraction for random splits");
  };
  auto add_hyper = [&](CLI::App* cmd) {
    cmd->add_option_function<int>(
        "--epochs", [&](int v) { ov.set("/hyper/epochs", v); }, "training epochs");
    cmd->add_option_function<int>(
        "--batch-size", [&](int v) { ov.set("/hyper/batch_size", v); }, "minibatch size");
    cmd->add_option_function<double>(
        "--lr", [&](double v) { ov.set("/hyper/lr", v); }, "learning rate");
    cmd->add_option_function<std::string>(
        "--optimizer", [&](const std::string& v) { ov.set("/hyper/optimizer", v); },
        "adam or rmsprop");
    cmd->add_option_function<int>(
        "--patience", [&](int v) { ov.set("/hyper/early_stop_patience", v); },
        "early-stop patience in epochs");
  };
  auto add_features = [&](CLI::App* cmd) {
    cmd->add_option_function<int>(
        "--n-frames", [&](int v) { ov.set("/features/n_frames", v); },
        "fixed frame count per clip");
    cmd->add_option_function<int>(
        "--n-mfcc", [&](int v) { ov.set("/features/n_mfcc", v); }, "coefficients per frame");
  };
  auto add_model = [&](CLI::App* cmd) {
    cmd->add_option_function<std::string>(
        "--model-family", [&](const std::string& v) { ov.set("/model/family", v); },
        "mlp, cnn, attention_cnn, conv_autoencoder, lstm_autoencoder");
    cmd->add_option_function<std::vector<int>>(
          "--conv-channels",
          [&](const std::vector<int>& v) { ov.set("/model/conv_channels", v); },
          "channels per conv layer")
        ->delimiter(',');
    cmd->add_option_function<std::vector<int>>(
          "--mlp-hidden", [&](const std::vector<int>& v) { ov.set("/model/mlp_hidden", v); },
          "hidden widths for the dense classifier")
        ->delimiter(',');
    cmd->add_option_function<int>(
        "--dense-width", [&](int v) { ov.set("/model/dense_width", v); },
        "width of the dense layer after conv features");
    cmd->add_option_function<double>(
        "--dropout", [&](double v) { ov.set("/model/dropout_p", v); }, "dropout probability");
    cmd->add_option_function<std::string>(
        "--attention-variant", [&](const std::string& v) { ov.set("/model/attention_variant", v); },
        "1d or 2d");
    cmd->add_option_function<int>(
        "--attention-site", [&](int v) { ov.set("/model/attention_site", v); },
        "trace index the attention taps");
    cmd->add_option_function<int>(
        "--ae-kernel", [&](int v) { ov.set("/model/ae_kernel", v); },
        "autoencoder conv kernel width");
    cmd->add_option_function<int>(
        "--lstm-hidden", [&](int v) { ov.set("/model/lstm_hidden", v); },
        "LSTM autoencoder hidden width");
  };

  // scan
  {
    auto* cmd = app.add_subcommand("scan", "walk an audio tree into a manifest");
    add_common(cmd);
    cmd->add_option_function<std::string>(
        "--root", [&](const std::string& v) { ov.set("/dataset/root", v); }, "dataset root");
    cmd->callback([&] { exit_code = run_task("scan", config_path, ov); });
  }
  // split
  {
    auto* cmd = app.add_subcommand("split", "cut a recording at long silences");
    add_common(cmd);
    cmd->add_option_function<std::string>(
        "--input", [&](const std::string& v) { ov.set("/segment/input", v); }, "input wav");
    cmd->add_option_function<double>(
        "--threshold", [&](double v) { ov.set("/segment/threshold", v); },
        "silence threshold as a fraction of peak frame energy");
    cmd->add_option_function<double>(
        "--min-silence", [&](double v) { ov.set("/segment/min_silence_s", v); },
        "minimum silence duration in seconds");
    cmd->callback([&] { exit_code = run_task("split", config_path, ov); });
  }
  // extract
  {
    auto* cmd = app.add_subcommand("extract", "compute MFCC features for a manifest");
    add_common(cmd);
    add_dataset(cmd);
    add_features(cmd);
    cmd->add_option_function<std::string>(
        "--root", [&](const std::string& v) { ov.set("/dataset/root", v); },
        "dataset root to resolve relative paths");
    cmd->add_option_function<int>(
        "--resample", [&](int v) { ov.set("/extract/resample_hz", v); },
        "resample clips to this rate first (e.g. 16000)");
    cmd->callback([&] { exit_code = run_task("extract", config_path, ov); });
  }
  // train-classifier
  {
    auto* cmd = app.add_subcommand("train-classifier", "train an accent classifier");
    add_common(cmd);
    add_dataset(cmd);
    add_split_spec(cmd);
    add_hyper(cmd);
    add_features(cmd);
    add_model(cmd);
    cmd->callback([&] { exit_code = run_task("train-classifier", config_path, ov); });
  }
  // eval
  {
    auto* cmd = app.add_subcommand("eval", "evaluate a classifier checkpoint");
    add_common(cmd);
    add_dataset(cmd);
    add_split_spec(cmd);
    add_features(cmd);
    cmd->add_option_function<std::string>(
        "--classifier", [&](const std::string& v) { ov.set("/neutralize/classifier", v); },
        "classifier checkpoint");
    cmd->add_option_function<std::string>(
        "--use", [&](const std::string& v) { ov.set("/dataset/use", v); },
        "which side to score: train, test, or all");
    cmd->callback([&] { exit_code = run_task("eval", config_path, ov); });
  }
  // train-neutralizer
  {
    auto* cmd = app.add_subcommand("train-neutralizer", "train one source->target converter");
    add_common(cmd);
    add_dataset(cmd);
    add_hyper(cmd);
    add_features(cmd);
    add_model(cmd);
    cmd->add_option_function<std::string>(
        "--source", [&](const std::string& v) { ov.set("/neutralize/source_accent", v); },
        "source accent");
    cmd->add_option_function<std::string>(
        "--target", [&](const std::string& v) { ov.set("/neutralize/target_accent", v); },
        "target accent");
    cmd->callback([&] { exit_code = run_task("train-neutralizer", config_path, ov); });
  }
  // neutralize
  {
    auto* cmd = app.add_subcommand("neutralize", "classify a clip and convert it to a target accent");
    add_common(cmd);
    add_features(cmd);
    cmd->add_option_function<std::string>(
        "--classifier", [&](const std::string& v) { ov.set("/neutralize/classifier", v); },
        "classifier checkpoint");
    cmd->add_option_function<std::string>(
        "--scaler", [&](const std::string& v) { ov.set("/neutralize/scaler", v); },
        "feature scaler JSON");
    cmd->add_option_function<std::string>(
        "--input", [&](const std::string& v) { ov.set("/neutralize/input", v); },
        "input feature file (.ftr)");
    cmd->add_option_function<std::string>(
        "--target", [&](const std::string& v) { ov.set("/neutralize/target_accent", v); },
        "target accent");
    cmd->add_option_function<std::string>(
        "--bank-dir", [&](const std::string& v) { ov.set("/neutralize/bank_dir", v); },
        "directory of per-accent converter checkpoints");
    cmd->add_option_function<std::string>(
        "--converter", [&](const std::string& v) { ov.set("/neutralize/converter", v); },
        "single converter checkpoint (alternative to --bank-dir)");
    cmd->callback([&] { exit_code = run_task("neutralize", config_path, ov); });
  }
  // train-mt
  {
    auto* cmd = app.add_subcommand("train-mt", "train one multi-target converter");
    add_common(cmd);
    add_dataset(cmd);
    add_hyper(cmd);
    add_features(cmd);
    add_model(cmd);
    cmd->add_option_function<std::vector<std::string>>(
          "--sources", [&](const std::vector<std::string>& v) { ov.set("/neutralize/sources", v); },
          "source accents")
        ->delimiter(',');
    cmd->add_option_function<std::vector<std::string>>(
          "--targets", [&](const std::vector<std::string>& v) { ov.set("/neutralize/targets", v); },
          "target accents")
        ->delimiter(',');
    cmd->add_flag_function(
        "--skip,!--no-skip",
        [&](std::int64_t v) { ov.set("/model/skip_connections", v > 0); },
        "feed the target label into every layer");
    cmd->add_option_function<std::string>(
        "--classifier", [&](const std::string& v) { ov.set("/neutralize/classifier", v); },
        "optional frozen classifier for routed-accuracy reporting");
    cmd->callback([&] { exit_code = run_task("train-mt", config_path, ov); });
  }
  // analyze
  {
    auto* cmd = app.add_subcommand("analyze", "project features to 2D/3D with PCA or t-SNE");
    add_common(cmd);
    add_dataset(cmd);
    add_features(cmd);
    cmd->add_option_function<std::string>(
        "--method", [&](const std::string& v) { ov.set("/analysis/method", v); }, "pca or tsne");
    cmd->add_option_function<double>(
        "--perplexity", [&](double v) { ov.set("/analysis/perplexity", v); }, "t-SNE perplexity");
    cmd->add_option_function<double>(
        "--learning-rate", [&](double v) { ov.set("/analysis/learning_rate", v); },
        "t-SNE learning rate");
    cmd->add_option_function<int>(
        "--iters", [&](int v) { ov.set("/analysis/epochs", v); }, "t-SNE iterations");
    cmd->add_option_function<int>(
        "--dims", [&](int v) { ov.set("/analysis/dims", v); }, "output dimensions (2 or 3)");
    cmd->add_option_function<int>(
        "--pca-pre", [&](int v) { ov.set("/analysis/pca_pre", v); },
        "PCA pre-reduction width before t-SNE (0 = off)");
    cmd->add_option_function<int>(
        "--max-per-accent", [&](int v) { ov.set("/analysis/max_per_accent", v); },
        "cap points per accent (0 = all)");
    cmd->callback([&] { exit_code = run_task("analyze", config_path, ov); });
  }
  // attention-dump
  {
    auto* cmd = app.add_subcommand("attention-dump", "export attention weights over clip time");
    add_common(cmd);
    add_features(cmd);
    cmd->add_option_function<std::string>(
        "--classifier", [&](const std::string& v) { ov.set("/neutralize/classifier", v); },
        "attention classifier checkpoint");
    cmd->add_option_function<std::string>(
        "--input", [&](const std::string& v) { ov.set("/neutralize/input", v); },
        "input .ftr or .wav");
    cmd->add_option_function<int>(
        "--resample", [&](int v) { ov.set("/extract/resample_hz", v); },
        "resample wav input to this rate first");
    cmd->callback([&] { exit_code = run_task("attention-dump", config_path, ov); });
  }
  // report
  {
    auto* cmd = app.add_subcommand("report", "flatten run metrics into one CSV");
    add_common(cmd);
    cmd->add_option_function<std::vector<std::string>>(
          "--runs", [&](const std::vector<std::string>& v) { ov.set("/report/runs", v); },
          "run directories holding metrics.json")
        ->delimiter(',');
    cmd->callback([&] { exit_code = run_task("report", config_path, ov); });
  }

  CLI11_PARSE(app, argc, argv);
  return exit_code;
}
