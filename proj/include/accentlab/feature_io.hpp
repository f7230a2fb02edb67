// accentlab/feature_io.hpp
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
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "accentlab/error.hpp"
#include "accentlab/features.hpp"

namespace accentlab {

// Binary feature file:
//   8 bytes  magic + version  ("ACLBFT" 0x00 0x01)
//   u32 LE   valid_frames
//   6487 x f32 LE  499 x 13 matrix, row-major
inline constexpr std::array<unsigned char, 8> kFeatureMagic = {'A', 'C', 'L', 'B',
                                                               'F', 'T', 0, 1};

static_assert(sizeof(float) == 4 && std::endian::native == std::endian::little,
              "feature files assume 4-byte little-endian floats");

inline void save_features(const MfccMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(kFeatureMagic.data()), 8);
  const std::uint32_t valid = static_cast<std::uint32_t>(m.valid_frames);
  out.write(reinterpret_cast<const char*>(&valid), 4);
  std::vector<float> buf(m.values.size());
  for (std::size_t i = 0; i < m.values.size(); ++i) buf[i] = static_cast<float>(m.values[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * 4));
  if (!out) throw InputError("write failed: " + path);
}

inline MfccMatrix load_features(const std::string& path, const FeatureConfig& cfg = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open feature file: " + path);
  std::array<unsigned char, 8> magic{};
  in.read(reinterpret_cast<char*>(magic.data()), 8);
  if (!in || magic != kFeatureMagic) {
    throw InputError("bad feature file header: " + path);
  }
  std::uint32_t valid = 0;
  in.read(reinterpret_cast<char*>(&valid), 4);
  MfccMatrix m;
  m.n_frames = cfg.n_frames;
  m.n_mfcc = cfg.n_mfcc;
  m.valid_frames = static_cast<int>(valid);
  if (m.valid_frames < 0 || m.valid_frames > m.n_frames) {
    throw InputError("bad valid_frames in feature file: " + path);
  }
  std::vector<float> buf(static_cast<std::size_t>(m.n_frames) * m.n_mfcc);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!in) throw InputError("truncated feature file: " + path);
  m.values.assign(buf.begin(), buf.end());
  return m;
}

}  // namespace accentlab
