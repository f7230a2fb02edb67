// accentlab/wav.hpp
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
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "accentlab/error.hpp"

namespace accentlab {

// Mono audio, samples normalized to [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate_hz = 0;

  double duration_s() const {
    return sample_rate_hz > 0
               ? static_cast<double>(samples.size()) / sample_rate_hz
               : 0.0;
  }
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

inline void put_u16le(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

}  // namespace detail

// Reads a RIFF PCM WAV file. Accepts 8/16/24-bit integer and 32-bit float
// encodings, 1 or 2 channels. Stereo is averaged to mono. Integer samples
// are scaled by the type's full-scale value (e.g. 16-bit: v / 32768).
inline AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open WAV file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw InputError("not a RIFF/WAVE file: " + path);
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t chunk_len = detail::read_u32le(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_len > bytes.size()) {
      throw InputError("truncated WAV chunk in " + path);
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw InputError("malformed fmt chunk in " + path);
      format = detail::read_u16le(bytes.data() + body);
      channels = detail::read_u16le(bytes.data() + body + 2);
      rate = detail::read_u32le(bytes.data() + body + 4);
      bits = detail::read_u16le(bytes.data() + body + 14);
      if (format == 0xFFFE) {  // WAVE_FORMAT_EXTENSIBLE: subformat GUID leads with the tag
        if (chunk_len < 40) throw InputError("malformed extensible fmt chunk in " + path);
        format = detail::read_u16le(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data == nullptr) throw InputError("missing fmt/data chunk in " + path);
  if (format != 1 && format != 3) {
    throw InputError("unsupported format: WAV encoding tag " + std::to_string(format) +
                     " in " + path + " (only integer/float PCM is supported)");
  }
  if (channels != 1 && channels != 2) {
    throw InputError("unsupported format: " + std::to_string(channels) + " channels in " + path);
  }
  if (rate == 0) throw InputError("zero sample rate in " + path);

  const bool is_float = (format == 3);
  if (is_float && bits != 32) {
    throw InputError("unsupported format: " + std::to_string(bits) + "-bit float in " + path);
  }
  if (!is_float && bits != 8 && bits != 16 && bits != 24) {
    throw InputError("unsupported format: " + std::to_string(bits) + "-bit integer PCM in " + path);
  }

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t stride = bytes_per_sample * channels;
  const std::size_t n_frames = stride > 0 ? data_len / stride : 0;

  AudioClip clip;
  clip.sample_rate_hz = static_cast<int>(rate);
  clip.samples.resize(n_frames);

  auto decode = [&](const unsigned char* p) -> double {
    if (is_float) {
      float f;
      std::memcpy(&f, p, 4);
      return std::clamp(static_cast<double>(f), -1.0, 1.0);
    }
    switch (bits) {
      case 8:
        return (static_cast<int>(*p) - 128) / 128.0;
      case 16: {
        const std::int16_t v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
        return v / 32768.0;
      }
      default: {  // 24
        std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
        if (v & 0x800000) v -= 0x1000000;
        return v / 8388608.0;
      }
    }
  };

  for (std::size_t i = 0; i < n_frames; ++i) {
    const unsigned char* frame = data + i * stride;
    double v = decode(frame);
    if (channels == 2) v = 0.5 * (v + decode(frame + bytes_per_sample));
    clip.samples[i] = v;
  }
  return clip;
}

// Writes a 16-bit PCM mono WAV. Quantization error is at most 1/32768 per
// sample, so read_wav(write_wav(c)) reproduces c within one step.
inline void write_wav(const AudioClip& clip, const std::string& path) {
  require(clip.sample_rate_hz > 0, "write_wav: sample rate must be positive");
  std::vector<unsigned char> out;
  out.reserve(44 + clip.samples.size() * 2);

  const std::uint32_t data_len = static_cast<std::uint32_t>(clip.samples.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32le(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  detail::put_u32le(out, 16);
  detail::put_u16le(out, 1);  // integer PCM
  detail::put_u16le(out, 1);  // mono
  detail::put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  detail::put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * 2);
  detail::put_u16le(out, 2);
  detail::put_u16le(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_u32le(out, data_len);

  for (double s : clip.samples) {
    const long q = std::lround(s * 32768.0);
    const std::int16_t v = static_cast<std::int16_t>(std::clamp(q, -32768l, 32767l));
    detail::put_u16le(out, static_cast<std::uint16_t>(v));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw InputError("write failed: " + path);
}

// Linear-interpolation resampler. Used as an explicit preprocessing step;
// all other processing runs at the clip's native rate.
inline AudioClip resample_linear(const AudioClip& clip, int target_rate_hz) {
  require(target_rate_hz > 0, "resample_linear: target rate must be positive");
  require(clip.sample_rate_hz > 0, "resample_linear: clip rate must be positive");
  if (clip.sample_rate_hz == target_rate_hz || clip.samples.empty()) {
    AudioClip out = clip;
    out.sample_rate_hz = target_rate_hz;
    return out;
  }
  const double ratio = static_cast<double>(clip.sample_rate_hz) / target_rate_hz;
  const std::size_t n_out = static_cast<std::size_t>(
      std::floor((clip.samples.size() - 1) / ratio)) + 1;
  AudioClip out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double x = i * ratio;
    const std::size_t i0 = static_cast<std::size_t>(x);
    const std::size_t i1 = std::min(i0 + 1, clip.samples.size() - 1);
    const double frac = x - i0;
    out.samples[i] = (1.0 - frac) * clip.samples[i0] + frac * clip.samples[i1];
  }
  return out;
}

}  // namespace accentlab
