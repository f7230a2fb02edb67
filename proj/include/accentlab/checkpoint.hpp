// accentlab/checkpoint.hpp
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

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "accentlab/error.hpp"
#include "accentlab/models.hpp"

namespace accentlab {

// Checkpoint container: magic/version, the model configuration as JSON,
// then each named parameter as shape + raw little-endian float32 data.
// Round-trip is bit-exact for float models.
inline constexpr std::array<char, 8> kCheckpointMagic = {'A', 'C', 'L', 'B', 'C', 'K', 0, 1};

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["family"] = to_string(cfg.family);
  j["n_classes"] = cfg.n_classes;
  j["n_frames"] = cfg.n_frames;
  j["n_mfcc"] = cfg.n_mfcc;
  j["mlp_hidden"] = cfg.mlp_hidden;
  j["conv_channels"] = cfg.conv_channels;
  j["conv_kernels"] = cfg.conv_kernels;
  j["pool"] = cfg.pool;
  j["dense_width"] = cfg.dense_width;
  j["dropout_p"] = cfg.dropout_p;
  j["attention_variant"] = to_string(cfg.attention_variant);
  j["attention_site"] = cfg.attention_site;
  j["ae_kernel"] = cfg.ae_kernel;
  j["multi_target"] = cfg.multi_target;
  j["skip_connections"] = cfg.skip_connections;
  j["noise_sigma"] = cfg.noise_sigma;
  j["lstm_hidden"] = cfg.lstm_hidden;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    const int version = j.value("schema_version", 1);
    require(version == 1, "model config: unsupported schema_version " + std::to_string(version));
    cfg.family = model_family_from_string(j.at("family").get<std::string>());
    cfg.n_classes = j.value("n_classes", cfg.n_classes);
    cfg.n_frames = j.value("n_frames", cfg.n_frames);
    cfg.n_mfcc = j.value("n_mfcc", cfg.n_mfcc);
    cfg.mlp_hidden = j.value("mlp_hidden", cfg.mlp_hidden);
    cfg.conv_channels = j.value("conv_channels", cfg.conv_channels);
    cfg.conv_kernels = j.value("conv_kernels", cfg.conv_kernels);
    cfg.pool = j.value("pool", cfg.pool);
    cfg.dense_width = j.value("dense_width", cfg.dense_width);
    cfg.dropout_p = j.value("dropout_p", cfg.dropout_p);
    if (j.contains("attention_variant")) {
      cfg.attention_variant = attention_variant_from_string(j.at("attention_variant").get<std::string>());
    }
    cfg.attention_site = j.value("attention_site", cfg.attention_site);
    cfg.ae_kernel = j.value("ae_kernel", cfg.ae_kernel);
    cfg.multi_target = j.value("multi_target", cfg.multi_target);
    cfg.skip_connections = j.value("skip_connections", cfg.skip_connections);
    cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
    cfg.lstm_hidden = j.value("lstm_hidden", cfg.lstm_hidden);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.good(), "checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void save_model(const Model<float>& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("checkpoint: cannot write '" + path + "'");
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  const std::string cfg = model_config_to_json(m.config).dump();
  detail::write_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  const auto params = m.parameters();
  detail::write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter<float>* p : params) {
    detail::write_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::write_u32(out, static_cast<std::uint32_t>(p->tensor.shape.size()));
    for (int d : p->tensor.shape) detail::write_u32(out, static_cast<std::uint32_t>(d));
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(p->tensor.v.data()),
              static_cast<std::streamsize>(p->tensor.v.size() * sizeof(float)));
  }
  if (!out.good()) throw InputError("checkpoint: write failed for '" + path + "'");
}

inline Model<float> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("checkpoint: cannot read '" + path + "'");
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  require(in.good() && magic == kCheckpointMagic, "checkpoint: bad magic in '" + path + "'");

  const std::uint32_t cfg_len = detail::read_u32(in);
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), cfg_len);
  require(in.good(), "checkpoint: truncated config");
  nlohmann::json cfg_json;
  try {
    cfg_json = nlohmann::json::parse(cfg_text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint: config parse error: ") + e.what());
  }
  const ModelConfig cfg = model_config_from_json(cfg_json);

  // Shapes must be reconstructible from the config alone; stored tensors
  // are then matched by name and verified against them.
  Rng rng(0);
  Model<float> m = build_model<float>(cfg, rng);

  const std::uint32_t n_params = detail::read_u32(in);
  require(n_params == m.n_parameters(),
          "checkpoint: parameter count mismatch (config implies " +
              std::to_string(m.n_parameters()) + ", file has " + std::to_string(n_params) + ")");
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const std::uint32_t name_len = detail::read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    require(in.good(), "checkpoint: truncated parameter name");
    require(m.has_param(name), "checkpoint: unexpected parameter '" + name + "'");
    Parameter<float>& p = m.param(name);

    const std::uint32_t rank = detail::read_u32(in);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(detail::read_u32(in));
    require(shape == p.tensor.shape, "checkpoint: shape mismatch for '" + name + "': file " +
                                         shape_str(shape) + " vs config " +
                                         shape_str(p.tensor.shape));
    in.read(reinterpret_cast<char*>(p.tensor.v.data()),
            static_cast<std::streamsize>(p.tensor.v.size() * sizeof(float)));
    require(in.good(), "checkpoint: truncated data for '" + name + "'");
  }
  m.mode = Mode::kEval;
  return m;
}

}  // namespace accentlab
