// accentlab/features.hpp
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
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "accentlab/error.hpp"
#include "accentlab/wav.hpp"

namespace accentlab {

// Fixed feature extraction parameters. 10 ms frames with a 1 ms overlap
// (hop 9 ms) and 13 cepstral coefficients per frame; every clip is padded
// or truncated to 499 frames.
struct FeatureConfig {
  double frame_ms = 10.0;
  double overlap_ms = 1.0;
  int n_mfcc = 13;
  int n_frames = 499;
  double pre_emphasis = 0.97;
  int n_mels = 26;
  int fft_size = 256;
  double mel_low_hz = 0.0;
  double mel_high_hz = 0.0;  // 0 means sample_rate / 2
  double log_floor = 1e-10;

  void validate() const {
    require(frame_ms > 0.0 && overlap_ms >= 0.0 && overlap_ms < frame_ms,
            "FeatureConfig: need 0 <= overlap_ms < frame_ms");
    require(n_mfcc >= 1 && n_mfcc <= n_mels, "FeatureConfig: need 1 <= n_mfcc <= n_mels");
    require(n_frames >= 1, "FeatureConfig: n_frames must be positive");
    require(fft_size >= 2 && (fft_size & (fft_size - 1)) == 0,
            "FeatureConfig: fft_size must be a power of two");
    require(log_floor > 0.0, "FeatureConfig: log_floor must be positive");
  }

  int frame_len(int sample_rate_hz) const {
    return static_cast<int>(std::llround(frame_ms * sample_rate_hz / 1000.0));
  }
  int hop_len(int sample_rate_hz) const {
    return static_cast<int>(std::llround((frame_ms - overlap_ms) * sample_rate_hz / 1000.0));
  }
};

// 499 x 13 cepstral matrix, row-major. Rows at and beyond valid_frames hold
// the padding value (0.0).
struct MfccMatrix {
  int n_frames = 0;  // always the configured 499
  int n_mfcc = 0;    // always 13
  int valid_frames = 0;
  std::vector<double> values;  // n_frames * n_mfcc

  double& at(int frame, int coeff) { return values[static_cast<std::size_t>(frame) * n_mfcc + coeff]; }
  double at(int frame, int coeff) const { return values[static_cast<std::size_t>(frame) * n_mfcc + coeff]; }
};

// (500, 13): row 0 is the one-hot target-accent label, rows 1..500 the body.
struct PrefixedMatrix {
  int target_id = -1;
  int n_rows = 0;  // body frames + 1
  int n_cols = 0;
  std::vector<double> values;

  double& at(int row, int col) { return values[static_cast<std::size_t>(row) * n_cols + col]; }
  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * n_cols + col]; }
};

namespace detail {

// In-place iterative radix-2 FFT. fft_size is validated to be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace detail

// Triangular mel filterbank on the HTK scale, evaluated on FFT bin centers.
// weights is n_mels x (fft_size/2 + 1), row-major.
struct MelFilterbank {
  int n_mels = 0;
  int n_bins = 0;
  std::vector<double> weights;

  static MelFilterbank build(const FeatureConfig& cfg, int sample_rate_hz) {
    const double high = cfg.mel_high_hz > 0.0 ? cfg.mel_high_hz : sample_rate_hz / 2.0;
    require(high > cfg.mel_low_hz, "MelFilterbank: mel_high_hz must exceed mel_low_hz");
    MelFilterbank fb;
    fb.n_mels = cfg.n_mels;
    fb.n_bins = cfg.fft_size / 2 + 1;
    fb.weights.assign(static_cast<std::size_t>(fb.n_mels) * fb.n_bins, 0.0);

    const double mel_lo = detail::hz_to_mel(cfg.mel_low_hz);
    const double mel_hi = detail::hz_to_mel(high);
    std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
    for (std::size_t m = 0; m < edges.size(); ++m) {
      edges[m] = detail::mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(m) /
                                                 (cfg.n_mels + 1));
    }
    for (int m = 0; m < cfg.n_mels; ++m) {
      const double left = edges[static_cast<std::size_t>(m)];
      const double center = edges[static_cast<std::size_t>(m) + 1];
      const double right = edges[static_cast<std::size_t>(m) + 2];
      for (int k = 0; k < fb.n_bins; ++k) {
        const double f = static_cast<double>(k) * sample_rate_hz / cfg.fft_size;
        double w = 0.0;
        if (f > left && f < center) {
          w = (f - left) / (center - left);
        } else if (f >= center && f < right) {
          w = (right - f) / (right - center);
        }
        fb.weights[static_cast<std::size_t>(m) * fb.n_bins + k] = w;
      }
    }
    return fb;
  }
};

// Pre-emphasis followed by overlapping frame extraction. Frame count is
// 1 + floor((N - L) / H); a clip shorter than one frame is an error.
inline std::vector<std::vector<double>> frame_signal(const AudioClip& clip,
                                                     const FeatureConfig& cfg) {
  cfg.validate();
  require(clip.sample_rate_hz > 0, "frame_signal: clip needs a sample rate");
  const int L = cfg.frame_len(clip.sample_rate_hz);
  const int H = cfg.hop_len(clip.sample_rate_hz);
  require(L >= 1 && H >= 1, "frame_signal: frame and hop must be at least one sample");
  const std::size_t n = clip.samples.size();
  if (n < static_cast<std::size_t>(L)) {
    throw PreconditionError("frame_signal: clip shorter than one frame");
  }

  std::vector<double> emphasized(n);
  emphasized[0] = clip.samples[0];
  for (std::size_t t = 1; t < n; ++t) {
    emphasized[t] = clip.samples[t] - cfg.pre_emphasis * clip.samples[t - 1];
  }

  const std::size_t n_frames = 1 + (n - static_cast<std::size_t>(L)) / static_cast<std::size_t>(H);
  std::vector<std::vector<double>> frames(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::size_t start = f * static_cast<std::size_t>(H);
    frames[f].assign(emphasized.begin() + static_cast<std::ptrdiff_t>(start),
                     emphasized.begin() + static_cast<std::ptrdiff_t>(start + L));
  }
  return frames;
}

// MFCC of one frame: Hamming window, zero-padded DFT magnitude, mel filter
// energies floored at log_floor, natural log, orthonormal DCT-II, first
// n_mfcc coefficients.
inline std::vector<double> mfcc_frame(const std::vector<double>& frame,
                                      const MelFilterbank& fb, const FeatureConfig& cfg) {
  require(static_cast<int>(frame.size()) <= cfg.fft_size,
          "mfcc_frame: fft_size smaller than frame length");
  const std::size_t L = frame.size();
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.fft_size),
                                        std::complex<double>(0.0, 0.0));
  for (std::size_t t = 0; t < L; ++t) {
    const double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(t) /
                                            static_cast<double>(L - 1));
    buf[t] = frame[t] * w;
  }
  detail::fft_radix2(buf);

  std::vector<double> mag(static_cast<std::size_t>(fb.n_bins));
  for (int k = 0; k < fb.n_bins; ++k) mag[static_cast<std::size_t>(k)] = std::abs(buf[static_cast<std::size_t>(k)]);

  std::vector<double> log_mel(static_cast<std::size_t>(fb.n_mels));
  for (int m = 0; m < fb.n_mels; ++m) {
    double e = 0.0;
    const double* w = &fb.weights[static_cast<std::size_t>(m) * fb.n_bins];
    for (int k = 0; k < fb.n_bins; ++k) e += w[k] * mag[static_cast<std::size_t>(k)];
    log_mel[static_cast<std::size_t>(m)] = std::log(std::max(e, cfg.log_floor));
  }

  // Orthonormal DCT-II.
  const int N = fb.n_mels;
  std::vector<double> cepstra(static_cast<std::size_t>(cfg.n_mfcc));
  for (int j = 0; j < cfg.n_mfcc; ++j) {
    double acc = 0.0;
    for (int m = 0; m < N; ++m) {
      acc += log_mel[static_cast<std::size_t>(m)] *
             std::cos(M_PI * j * (2 * m + 1) / (2.0 * N));
    }
    const double scale = j == 0 ? std::sqrt(1.0 / N) : std::sqrt(2.0 / N);
    cepstra[static_cast<std::size_t>(j)] = scale * acc;
  }
  return cepstra;
}

// Full-clip MFCC, padded with zeros (or truncated from the end) to exactly
// cfg.n_frames rows. valid_frames records the count before padding.
inline MfccMatrix mfcc_sequence(const AudioClip& clip, const FeatureConfig& cfg = {}) {
  cfg.validate();
  const auto frames = frame_signal(clip, cfg);
  require(cfg.frame_len(clip.sample_rate_hz) <= cfg.fft_size,
          "mfcc_sequence: fft_size smaller than frame length");
  const MelFilterbank fb = MelFilterbank::build(cfg, clip.sample_rate_hz);

  MfccMatrix m;
  m.n_frames = cfg.n_frames;
  m.n_mfcc = cfg.n_mfcc;
  m.valid_frames = static_cast<int>(std::min<std::size_t>(frames.size(),
                                                          static_cast<std::size_t>(cfg.n_frames)));
  m.values.assign(static_cast<std::size_t>(cfg.n_frames) * cfg.n_mfcc, 0.0);
  for (int f = 0; f < m.valid_frames; ++f) {
    const auto cepstra = mfcc_frame(frames[static_cast<std::size_t>(f)], fb, cfg);
    for (int j = 0; j < cfg.n_mfcc; ++j) m.at(f, j) = cepstra[static_cast<std::size_t>(j)];
  }
  return m;
}

// Row-major flatten; 499 x 13 -> 6487.
inline std::vector<double> flatten(const MfccMatrix& m) {
  return m.values;
}

// Prepends the 13-wide one-hot target-accent row: (499, 13) -> (500, 13).
// The accent inventory must fit the feature width.
inline PrefixedMatrix prefix_target_label(const MfccMatrix& m, int target_id, int n_accents) {
  if (n_accents > m.n_mfcc) {
    throw PreconditionError("prefix_target_label: label capacity exceeded (" +
                            std::to_string(n_accents) + " accents > " +
                            std::to_string(m.n_mfcc) + " feature dims)");
  }
  require(target_id >= 0 && target_id < n_accents,
          "prefix_target_label: target_id out of range");
  PrefixedMatrix p;
  p.target_id = target_id;
  p.n_rows = m.n_frames + 1;
  p.n_cols = m.n_mfcc;
  p.values.assign(static_cast<std::size_t>(p.n_rows) * p.n_cols, 0.0);
  p.at(0, target_id) = 1.0;
  std::copy(m.values.begin(), m.values.end(), p.values.begin() + p.n_cols);
  return p;
}

// Per-coefficient affine map onto [-1, 1], fitted over the valid frames of a
// training corpus. Needed so tanh-bounded autoencoder outputs can represent
// their targets; invert restores the original scale.
struct FeatureScaler {
  std::vector<double> min_v;  // one per coefficient
  std::vector<double> max_v;

  int n_coeffs() const { return static_cast<int>(min_v.size()); }

  static FeatureScaler fit(const std::vector<MfccMatrix>& dataset) {
    require(!dataset.empty(), "FeatureScaler::fit: empty dataset");
    const int k = dataset.front().n_mfcc;
    FeatureScaler s;
    s.min_v.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::infinity());
    s.max_v.assign(static_cast<std::size_t>(k), -std::numeric_limits<double>::infinity());
    for (const auto& m : dataset) {
      require(m.n_mfcc == k, "FeatureScaler::fit: inconsistent coefficient count");
      for (int f = 0; f < m.valid_frames; ++f) {
        for (int j = 0; j < k; ++j) {
          s.min_v[static_cast<std::size_t>(j)] = std::min(s.min_v[static_cast<std::size_t>(j)], m.at(f, j));
          s.max_v[static_cast<std::size_t>(j)] = std::max(s.max_v[static_cast<std::size_t>(j)], m.at(f, j));
        }
      }
    }
    for (int j = 0; j < k; ++j) {
      if (!std::isfinite(s.min_v[static_cast<std::size_t>(j)])) {  // corpus had no valid frames
        s.min_v[static_cast<std::size_t>(j)] = 0.0;
        s.max_v[static_cast<std::size_t>(j)] = 0.0;
      }
    }
    return s;
  }

  // A constant coefficient (min == max) maps to 0.
  double scale_value(int coeff, double v) const {
    const double lo = min_v[static_cast<std::size_t>(coeff)];
    const double hi = max_v[static_cast<std::size_t>(coeff)];
    if (hi <= lo) return 0.0;
    return 2.0 * (v - lo) / (hi - lo) - 1.0;
  }

  double unscale_value(int coeff, double v) const {
    const double lo = min_v[static_cast<std::size_t>(coeff)];
    const double hi = max_v[static_cast<std::size_t>(coeff)];
    if (hi <= lo) return lo;
    return lo + (v + 1.0) * 0.5 * (hi - lo);
  }

  // Only the valid frames are mapped; padding rows keep the padding value,
  // so a padded matrix stays zero-padded in scaled space and the apply ->
  // invert round trip is the identity on every entry.
  MfccMatrix apply(const MfccMatrix& m) const {
    require(m.n_mfcc == n_coeffs(), "FeatureScaler::apply: coefficient count mismatch");
    MfccMatrix out = m;
    for (int f = 0; f < m.valid_frames; ++f) {
      for (int j = 0; j < m.n_mfcc; ++j) out.at(f, j) = scale_value(j, m.at(f, j));
    }
    return out;
  }

  MfccMatrix invert(const MfccMatrix& m) const {
    require(m.n_mfcc == n_coeffs(), "FeatureScaler::invert: coefficient count mismatch");
    MfccMatrix out = m;
    for (int f = 0; f < m.valid_frames; ++f) {
      for (int j = 0; j < m.n_mfcc; ++j) out.at(f, j) = unscale_value(j, m.at(f, j));
    }
    return out;
  }
};

inline FeatureScaler fit_scaler(const std::vector<MfccMatrix>& dataset) {
  return FeatureScaler::fit(dataset);
}
inline MfccMatrix apply_scaler(const FeatureScaler& s, const MfccMatrix& m) { return s.apply(m); }
inline MfccMatrix invert_scaler(const FeatureScaler& s, const MfccMatrix& m) { return s.invert(m); }

}  // namespace accentlab
