// tests/support/synthetic.hpp
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

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "accentlab/features.hpp"
#include "accentlab/manifest.hpp"
#include "accentlab/rng.hpp"
#include "accentlab/training.hpp"
#include "accentlab/wav.hpp"

namespace testsupport {

// Synthetic "accents" are distinct vowel-like spectral envelopes: a glottal
// impulse train driven through two formant resonators. Sentence identity
// fixes the pitch contour and syllable envelope (shared across accents, so
// corpora are parallel); speakers add a spectral tilt; every clip gets
// seeded jitter so no two recordings are identical.

struct AccentProfile {
  double f1_hz = 0.0;
  double f2_hz = 0.0;
  double bw1_hz = 90.0;
  double bw2_hz = 140.0;
};

inline const std::map<std::string, AccentProfile>& accent_profiles() {
  static const std::map<std::string, AccentProfile> kProfiles = {
      {"American", {350.0, 2300.0}},  {"Australian", {450.0, 1900.0}},
      {"Bangla", {560.0, 1550.0}},    {"British", {660.0, 1250.0}},
      {"Indian", {800.0, 1050.0}},    {"Malayalam", {300.0, 1500.0}},
      {"Odiya", {500.0, 2500.0}},     {"Telugu", {880.0, 2000.0}},
      {"Welsh", {420.0, 980.0}},
  };
  return kProfiles;
}

struct CorpusSpec {
  std::vector<std::string> accents;  // canonical labels
  int speakers_per_accent = 1;
  int sets = 2;        // set ids 1..sets
  int sentences = 10;  // sentence ids 1..sentences
  int reps = 1;        // repetition ids 1..reps
  double clip_s = 0.5;
  int sample_rate_hz = 16000;
  std::uint64_t seed = 1234;
};

namespace detail {

// Two-pole resonator, unit gain at DC not needed; outputs are renormalized.
inline std::vector<double> resonate(const std::vector<double>& x, double f_hz, double bw_hz,
                                    int sr) {
  const double r = std::exp(-M_PI * bw_hz / sr);
  const double c = 2.0 * r * std::cos(2.0 * M_PI * f_hz / sr);
  const double r2 = r * r;
  std::vector<double> y(x.size(), 0.0);
  double y1 = 0.0, y2 = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double v = x[n] + c * y1 - r2 * y2;
    y2 = y1;
    y1 = v;
    y[n] = v;
  }
  return y;
}

}  // namespace detail

// One clip. Sentence content (pitch, syllable envelope) depends only on
// (set, sentence); accent fixes the formants; speaker_tilt shifts spectral
// balance; (seed, rep, speaker) drive the jitter stream.
inline accentlab::AudioClip make_clip(const AccentProfile& accent, double speaker_tilt,
                                      int set_id, int sentence_id, int repetition,
                                      std::uint64_t jitter_key, double dur_s = 0.5,
                                      int sr = 16000) {
  const int n = static_cast<int>(dur_s * sr);
  accentlab::Rng content(9000u + static_cast<std::uint64_t>(set_id) * 100u +
                         static_cast<std::uint64_t>(sentence_id));
  accentlab::Rng jitter(jitter_key);

  const double f0 = 105.0 + 90.0 * content.uniform();
  const double f0_jit = f0 * (1.0 + 0.04 * (jitter.uniform() - 0.5));
  const int n_syll = 3 + static_cast<int>(content.uniform() * 3.0);

  // Syllable on/off envelope with raised-cosine edges.
  std::vector<double> env(static_cast<std::size_t>(n), 0.0);
  const double syll_len = static_cast<double>(n) / n_syll;
  for (int s = 0; s < n_syll; ++s) {
    const double start = s * syll_len + 0.05 * syll_len * content.uniform();
    const double stop = start + syll_len * (0.6 + 0.3 * content.uniform());
    for (int t = static_cast<int>(start); t < static_cast<int>(stop) && t < n; ++t) {
      const double u = (t - start) / (stop - start);
      env[static_cast<std::size_t>(t)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * u);
    }
  }

  // Impulse train excitation plus a small noise floor.
  std::vector<double> exc(static_cast<std::size_t>(n), 0.0);
  const double period = sr / f0_jit;
  double next_pulse = period * jitter.uniform();
  for (int t = 0; t < n; ++t) {
    if (t >= next_pulse) {
      exc[static_cast<std::size_t>(t)] = 1.0;
      next_pulse += period;
    }
    exc[static_cast<std::size_t>(t)] += 0.015 * (jitter.uniform() * 2.0 - 1.0);
    exc[static_cast<std::size_t>(t)] *= env[static_cast<std::size_t>(t)];
  }

  const double f1 = accent.f1_hz * (1.0 + 0.03 * (jitter.uniform() - 0.5));
  const double f2 = accent.f2_hz * (1.0 + 0.03 * (jitter.uniform() - 0.5));
  const auto r1 = detail::resonate(exc, f1, accent.bw1_hz, sr);
  const auto r2 = detail::resonate(exc, f2, accent.bw2_hz, sr);

  std::vector<double> y(static_cast<std::size_t>(n), 0.0);
  for (int t = 0; t < n; ++t) {
    y[static_cast<std::size_t>(t)] =
        r1[static_cast<std::size_t>(t)] + 0.8 * r2[static_cast<std::size_t>(t)];
  }
  // First-order tilt: positive darkens, negative brightens.
  if (speaker_tilt != 0.0) {
    double prev = 0.0;
    for (int t = 0; t < n; ++t) {
      const double cur = y[static_cast<std::size_t>(t)];
      y[static_cast<std::size_t>(t)] = cur + speaker_tilt * prev;
      prev = cur;
    }
  }
  double peak = 1e-9;
  for (double v : y) peak = std::max(peak, std::abs(v));
  const double gain = (0.55 + 0.2 * jitter.uniform()) / peak;
  accentlab::AudioClip clip;
  clip.sample_rate_hz = sr;
  clip.samples.resize(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    clip.samples[static_cast<std::size_t>(t)] = y[static_cast<std::size_t>(t)] * gain;
  }
  return clip;
}

struct SynthCorpus {
  accentlab::Manifest manifest;            // paths are "<Accent>/<file>.wav"
  std::vector<accentlab::AudioClip> clips; // aligned with manifest.entries
};

inline double speaker_tilt_for(int speaker_idx) {
  // Alternating bright/dark voices, growing with index.
  const double mag = 0.25 + 0.05 * (speaker_idx / 2);
  return (speaker_idx % 2 == 0) ? -mag : mag;
}

inline SynthCorpus make_corpus(const CorpusSpec& spec) {
  SynthCorpus corpus;
  for (const auto& accent : spec.accents) {
    const auto it = accent_profiles().find(accent);
    if (it == accent_profiles().end()) {
      throw accentlab::InputError("synthetic corpus: no profile for accent " + accent);
    }
    for (int sp = 0; sp < spec.speakers_per_accent; ++sp) {
      const std::string speaker = accent.substr(0, 3) + "-" + std::to_string(sp + 1);
      for (int set = 1; set <= spec.sets; ++set) {
        for (int sent = 1; sent <= spec.sentences; ++sent) {
          for (int rep = 1; rep <= spec.reps; ++rep) {
            accentlab::ManifestEntry e;
            e.accent = accent;
            e.speaker_code = speaker;
            e.set_id = set;
            e.sentence_id = sent;
            e.repetition = rep;
            {
              char buf[64];
              std::snprintf(buf, sizeof(buf), "%s_s%02d_%02d_r%d.wav", speaker.c_str(), set,
                            sent, rep);
              e.path = accent + "/" + buf;
            }
            const std::uint64_t jitter_key =
                accentlab::Rng(spec.seed)
                    .substream(accent)
                    .substream(speaker)
                    .substream(std::to_string(set * 100 + sent * 10 + rep))
                    .next_u64();
            corpus.clips.push_back(make_clip(it->second, speaker_tilt_for(sp), set, sent, rep,
                                             jitter_key, spec.clip_s, spec.sample_rate_hz));
            corpus.manifest.entries.push_back(std::move(e));
          }
        }
      }
    }
  }
  corpus.manifest.rebuild_accent_index();
  return corpus;
}

inline void write_corpus(const SynthCorpus& corpus, const std::string& root) {
  namespace fs = std::filesystem;
  for (std::size_t i = 0; i < corpus.clips.size(); ++i) {
    const fs::path p = fs::path(root) / corpus.manifest.entries[i].path;
    fs::create_directories(p.parent_path());
    accentlab::write_wav(corpus.clips[i], p.string());
  }
}

inline std::vector<accentlab::MfccMatrix> extract_all(const SynthCorpus& corpus,
                                                      const accentlab::FeatureConfig& cfg) {
  std::vector<accentlab::MfccMatrix> out;
  out.reserve(corpus.clips.size());
  for (const auto& clip : corpus.clips) out.push_back(accentlab::mfcc_sequence(clip, cfg));
  return out;
}

template <typename T>
inline std::vector<accentlab::LabeledSample<T>> to_samples(
    const accentlab::Manifest& manifest, const std::vector<accentlab::MfccMatrix>& feats) {
  std::vector<accentlab::LabeledSample<T>> out;
  out.reserve(feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    accentlab::LabeledSample<T> s;
    s.label = manifest.accent_id(manifest.entries[i].accent);
    s.x = accentlab::to_values<T>(feats[i]);
    out.push_back(std::move(s));
  }
  return out;
}

// Subset of samples whose manifest entries satisfy a predicate.
template <typename T, typename Pred>
inline std::vector<accentlab::LabeledSample<T>> sample_subset(
    const accentlab::Manifest& manifest, const std::vector<accentlab::MfccMatrix>& feats,
    Pred pred) {
  std::vector<accentlab::LabeledSample<T>> out;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (!pred(manifest.entries[i])) continue;
    accentlab::LabeledSample<T> s;
    s.label = manifest.accent_id(manifest.entries[i].accent);
    s.x = accentlab::to_values<T>(feats[i]);
    out.push_back(std::move(s));
  }
  return out;
}

// Frame count for the default 10 ms / 9 ms hop features of a clip this long.
inline int frames_for(double dur_s, int sr, const accentlab::FeatureConfig& cfg) {
  const int n = static_cast<int>(dur_s * sr);
  const int L = cfg.frame_len(sr);
  const int H = cfg.hop_len(sr);
  return 1 + (n - L) / H;
}

}  // namespace testsupport
