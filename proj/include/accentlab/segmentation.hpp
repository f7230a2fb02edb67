// accentlab/segmentation.hpp
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
#include <vector>

#include "accentlab/error.hpp"
#include "accentlab/wav.hpp"

namespace accentlab {

// Windowed RMS energy over non-overlapping windows; the final partial
// window is included.
struct EnergyTrack {
  double window_ms = 10.0;
  std::vector<double> rms;
  std::vector<std::size_t> window_start;  // first sample of each window
  std::size_t n_samples = 0;              // length of the tracked clip
  double max_rms = 0.0;

  std::size_t window_end(std::size_t i) const {
    return i + 1 < window_start.size() ? window_start[i + 1] : n_samples;
  }
};

inline EnergyTrack frame_energy(const AudioClip& clip, double window_ms = 10.0) {
  require(window_ms > 0.0, "frame_energy: window_ms must be positive");
  require(!clip.samples.empty(), "frame_energy: clip is empty");
  const std::size_t win =
      std::max<std::size_t>(1, static_cast<std::size_t>(
          std::llround(window_ms * clip.sample_rate_hz / 1000.0)));

  EnergyTrack track;
  track.window_ms = window_ms;
  track.n_samples = clip.samples.size();
  for (std::size_t start = 0; start < clip.samples.size(); start += win) {
    const std::size_t end = std::min(start + win, clip.samples.size());
    double acc = 0.0;
    for (std::size_t i = start; i < end; ++i) acc += clip.samples[i] * clip.samples[i];
    track.window_start.push_back(start);
    track.rms.push_back(std::sqrt(acc / static_cast<double>(end - start)));
  }
  track.max_rms = *std::max_element(track.rms.begin(), track.rms.end());
  return track;
}

// Removes leading and trailing windows whose RMS falls below
// threshold_frac x max_rms. Cuts exactly at window boundaries, which makes
// the operation idempotent. An all-silent clip trims to empty.
inline AudioClip trim_silence(const AudioClip& clip, double threshold_frac = 0.01,
                              double window_ms = 10.0) {
  require(threshold_frac > 0.0 && threshold_frac < 1.0,
          "trim_silence: threshold_frac must be in (0,1)");
  AudioClip out;
  out.sample_rate_hz = clip.sample_rate_hz;
  if (clip.samples.empty()) return out;

  const EnergyTrack track = frame_energy(clip, window_ms);
  const double cut = threshold_frac * track.max_rms;
  std::size_t first = track.rms.size(), last = track.rms.size();
  for (std::size_t i = 0; i < track.rms.size(); ++i) {
    if (track.rms[i] >= cut) {
      if (first == track.rms.size()) first = i;
      last = i;
    }
  }
  if (first == track.rms.size()) return out;  // all silent (max_rms == 0)

  const std::size_t begin = track.window_start[first];
  const std::size_t end = track.window_end(last);
  out.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                     clip.samples.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

// Splits a recording on long silences: a window is silent iff its RMS is
// below threshold_frac x max_rms, and a maximal run of silent windows
// lasting at least min_silence_s becomes a cut. The cut point is the
// midpoint of the run; each resulting piece is trimmed and empty pieces are
// dropped. Relative thresholding makes the rule invariant to gain.
inline std::vector<AudioClip> split_on_silence(const AudioClip& clip,
                                               double threshold_frac = 0.01,
                                               double min_silence_s = 2.0,
                                               double window_ms = 10.0) {
  require(threshold_frac > 0.0 && threshold_frac < 1.0,
          "split_on_silence: threshold_frac must be in (0,1)");
  require(min_silence_s > 0.0, "split_on_silence: min_silence_s must be positive");
  if (clip.samples.empty()) return {};

  const EnergyTrack track = frame_energy(clip, window_ms);
  const double cut = threshold_frac * track.max_rms;
  const auto min_silence_samples = static_cast<std::size_t>(
      std::llround(min_silence_s * clip.sample_rate_hz));

  // Sample positions where the clip is cut apart.
  std::vector<std::size_t> cut_points;
  std::size_t i = 0;
  while (i < track.rms.size()) {
    if (track.rms[i] < cut) {
      std::size_t j = i;
      while (j < track.rms.size() && track.rms[j] < cut) ++j;
      const std::size_t run_begin = track.window_start[i];
      const std::size_t run_end = track.window_end(j - 1);
      if (run_end - run_begin >= min_silence_samples) {
        cut_points.push_back(run_begin + (run_end - run_begin) / 2);
      }
      i = j;
    } else {
      ++i;
    }
  }

  std::vector<AudioClip> pieces;
  std::size_t begin = 0;
  cut_points.push_back(clip.samples.size());
  for (std::size_t point : cut_points) {
    AudioClip piece;
    piece.sample_rate_hz = clip.sample_rate_hz;
    piece.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                         clip.samples.begin() + static_cast<std::ptrdiff_t>(point));
    begin = point;
    AudioClip trimmed = trim_silence(piece, threshold_frac, window_ms);
    if (!trimmed.samples.empty()) pieces.push_back(std::move(trimmed));
  }
  return pieces;
}

}  // namespace accentlab
