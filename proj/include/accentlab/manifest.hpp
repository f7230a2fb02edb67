// accentlab/manifest.hpp
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
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "accentlab/error.hpp"

namespace accentlab {

// The nine accent labels the dataset layout recognizes, already in sorted
// order so that accent ids are independent of directory traversal.
inline const std::array<std::string, 9> kAccentLabels = {
    "American", "Australian", "Bangla", "British", "Indian",
    "Malayalam", "Odiya",     "Telugu", "Welsh"};

inline std::optional<std::string> canonical_accent(const std::string& name) {
  auto lower = [](const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return out;
  };
  const std::string key = lower(name);
  for (const auto& label : kAccentLabels) {
    if (lower(label) == key) return label;
  }
  return std::nullopt;
}

struct ManifestEntry {
  std::string path;
  std::string accent;        // one of kAccentLabels
  std::string speaker_code;  // e.g. "Ban-1"
  int set_id = 0;            // 1..72
  int sentence_id = 0;       // 1..10
  int repetition = 0;        // 1..3
};

inline void validate_entry(const ManifestEntry& e) {
  if (!canonical_accent(e.accent)) throw InputError("unknown accent label: " + e.accent);
  require(e.set_id >= 1 && e.set_id <= 72, "set_id out of range [1,72]");
  require(e.sentence_id >= 1 && e.sentence_id <= 10, "sentence_id out of range [1,10]");
  require(e.repetition >= 1 && e.repetition <= 3, "repetition out of range [1,3]");
}

// Dataset index. accent_index assigns contiguous ids 0..k-1 to the accents
// present, in sorted label order.
struct Manifest {
  std::vector<ManifestEntry> entries;
  std::map<std::string, int> accent_index;

  int accent_id(const std::string& label) const {
    auto it = accent_index.find(label);
    if (it == accent_index.end()) throw InputError("accent not in manifest: " + label);
    return it->second;
  }

  std::vector<std::string> accent_labels() const {
    std::vector<std::string> out(accent_index.size());
    for (const auto& [label, id] : accent_index) out[static_cast<std::size_t>(id)] = label;
    return out;
  }

  void rebuild_accent_index() {
    std::set<std::string> present;
    for (const auto& e : entries) present.insert(e.accent);
    accent_index.clear();
    int id = 0;
    for (const auto& label : present) accent_index[label] = id++;  // set is sorted
  }
};

struct ScanResult {
  Manifest manifest;
  std::vector<std::string> warnings;
};

// Parses the per-file naming scheme `<speaker>_s<set>_<sentence>_r<rep>.wav`,
// e.g. "ban-1_s01_05_r2.wav". The speaker code's first letter is
// canonicalized to upper case ("Ban-1").
inline std::optional<ManifestEntry> parse_dataset_filename(const std::string& filename) {
  if (filename.size() < 5) return std::nullopt;
  std::string stem = filename;
  {
    std::string ext = stem.substr(stem.size() - 4);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext != ".wav") return std::nullopt;
    stem = stem.substr(0, stem.size() - 4);
  }
  // Split from the right: _r<rep>, _<sentence>, _s<set>; the rest is speaker.
  auto rpos = stem.rfind("_r");
  if (rpos == std::string::npos || rpos + 2 >= stem.size()) return std::nullopt;
  const std::string rep_str = stem.substr(rpos + 2);
  std::string rest = stem.substr(0, rpos);
  auto spos = rest.rfind('_');
  if (spos == std::string::npos) return std::nullopt;
  const std::string sentence_str = rest.substr(spos + 1);
  rest = rest.substr(0, spos);
  auto setpos = rest.rfind("_s");
  if (setpos == std::string::npos || setpos + 2 >= rest.size()) return std::nullopt;
  const std::string set_str = rest.substr(setpos + 2);
  std::string speaker = rest.substr(0, setpos);
  if (speaker.empty()) return std::nullopt;

  auto to_int = [](const std::string& s) -> std::optional<int> {
    if (s.empty() || s.size() > 3) return std::nullopt;
    int v = 0;
    for (char c : s) {
      if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
      v = v * 10 + (c - '0');
    }
    return v;
  };
  const auto set_id = to_int(set_str);
  const auto sentence_id = to_int(sentence_str);
  const auto repetition = to_int(rep_str);
  if (!set_id || !sentence_id || !repetition) return std::nullopt;
  if (*set_id < 1 || *set_id > 72 || *sentence_id < 1 || *sentence_id > 10 ||
      *repetition < 1 || *repetition > 3) {
    return std::nullopt;
  }

  ManifestEntry e;
  e.speaker_code = speaker;
  e.speaker_code[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(speaker[0])));
  e.set_id = *set_id;
  e.sentence_id = *sentence_id;
  e.repetition = *repetition;
  return e;
}

// Walks `<root>/<accent>/<file>.wav` and builds a manifest. Files or
// directories that do not match the scheme are skipped and reported in the
// warnings list. Entries are ordered lexicographically by path.
inline ScanResult scan_dataset(const std::string& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw InputError("dataset root is not a directory: " + root);

  ScanResult result;
  std::vector<fs::path> accent_dirs;
  for (const auto& de : fs::directory_iterator(root)) {
    if (de.is_directory()) accent_dirs.push_back(de.path());
  }
  std::sort(accent_dirs.begin(), accent_dirs.end());

  for (const auto& dir : accent_dirs) {
    const auto label = canonical_accent(dir.filename().string());
    if (!label) {
      result.warnings.push_back("skipping directory (not an accent label): " + dir.string());
      continue;
    }
    std::vector<fs::path> files;
    for (const auto& de : fs::directory_iterator(dir)) {
      if (de.is_regular_file()) files.push_back(de.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      auto entry = parse_dataset_filename(f.filename().string());
      if (!entry) {
        result.warnings.push_back("skipping file (name does not match scheme): " + f.string());
        continue;
      }
      entry->path = f.string();
      entry->accent = *label;
      result.manifest.entries.push_back(std::move(*entry));
    }
  }

  if (result.manifest.entries.empty()) {
    throw InputError("no dataset entries found under " + root);
  }
  std::sort(result.manifest.entries.begin(), result.manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
  {
    std::set<std::string> seen;
    for (const auto& e : result.manifest.entries) {
      if (!seen.insert(e.path).second) throw InputError("duplicate path in dataset: " + e.path);
    }
  }
  result.manifest.rebuild_accent_index();
  return result;
}

// JSON-lines manifest file: one object per line with keys
// path, accent, speaker, set, sentence, repetition.
inline void save_manifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path);
  for (const auto& e : m.entries) {
    nlohmann::ordered_json j;
    j["path"] = e.path;
    j["accent"] = e.accent;
    j["speaker"] = e.speaker_code;
    j["set"] = e.set_id;
    j["sentence"] = e.sentence_id;
    j["repetition"] = e.repetition;
    out << j.dump() << "\n";
  }
}

inline Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest: " + path);
  Manifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw InputError(path + ":" + std::to_string(lineno) + ": bad JSON: " + ex.what());
    }
    ManifestEntry e;
    try {
      e.path = j.at("path").get<std::string>();
      e.accent = j.at("accent").get<std::string>();
      e.speaker_code = j.at("speaker").get<std::string>();
      e.set_id = j.at("set").get<int>();
      e.sentence_id = j.at("sentence").get<int>();
      e.repetition = j.at("repetition").get<int>();
    } catch (const nlohmann::json::exception& ex) {
      throw InputError(path + ":" + std::to_string(lineno) + ": missing field: " + ex.what());
    }
    validate_entry(e);
    m.entries.push_back(std::move(e));
  }
  m.rebuild_accent_index();
  return m;
}

}  // namespace accentlab
