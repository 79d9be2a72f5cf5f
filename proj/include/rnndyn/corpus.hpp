// Copyright (c) 2026 The rnndyn Authors
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

// Corpus ingestion: JSON-lines utterances, frequency-truncated vocabulary,
// tokenization and seeded train/validation/test partitioning.
//
// Text normalization is frozen as: ASCII lowercase, every ASCII punctuation
// character replaced by a space, split on whitespace. Bytes >= 0x80 (UTF-8
// continuation data) pass through untouched. Sequences are never padded or
// truncated.

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rnndyn/common.hpp"

namespace rnndyn::corpus {

inline constexpr std::size_t kSnipsIntentCount = 7;

struct Utterance {
  std::string text;
  std::string intent;
};

/// Loaded corpus plus the label set discovered while reading it.
struct Corpus {
  std::vector<Utterance> utterances;
  std::vector<std::string> labels;  // sorted, unique
  std::vector<std::string> warnings;
};

inline std::string trim(std::string_view s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> label_set(const std::vector<Utterance>& data) {
  std::set<std::string> seen;
  for (const auto& u : data) seen.insert(u.intent);
  return {seen.begin(), seen.end()};
}

/// Parses JSON-lines: one {"text": ..., "intent": ...} object per line.
inline Corpus parse_dataset(std::istream& is) {
  Corpus out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string()) {
      throw DataError("line " + std::to_string(line_no) + ": missing string key \"text\"");
    }
    if (!obj.contains("intent") || !obj["intent"].is_string()) {
      throw DataError("line " + std::to_string(line_no) + ": missing string key \"intent\"");
    }
    Utterance u{obj["text"].get<std::string>(), obj["intent"].get<std::string>()};
    if (trim(u.text).empty()) throw DataError("line " + std::to_string(line_no) + ": empty text");
    if (trim(u.intent).empty()) throw DataError("line " + std::to_string(line_no) + ": empty intent");
    out.utterances.push_back(std::move(u));
  }
  out.labels = label_set(out.utterances);
  if (out.labels.size() != kSnipsIntentCount) {
    out.warnings.push_back("label set has " + std::to_string(out.labels.size()) + " members, expected " +
                           std::to_string(kSnipsIntentCount));
  }
  return out;
}

inline Corpus load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open corpus file: " + path.string());
  return parse_dataset(is);
}

inline void write_jsonl(std::ostream& os, const std::vector<Utterance>& data) {
  for (const auto& u : data) {
    nlohmann::ordered_json obj;
    obj["text"] = u.text;
    obj["intent"] = u.intent;
    os << obj.dump() << '\n';
  }
}

struct LabelCount {
  std::string label;
  std::size_t count = 0;
  double percent = 0.0;
};

/// Per-label counts and percentages, sorted by label.
inline std::vector<LabelCount> class_balance(const std::vector<Utterance>& data) {
  if (data.empty()) throw std::invalid_argument("class_balance: empty input");
  std::map<std::string, std::size_t> counts;
  for (const auto& u : data) ++counts[u.intent];
  std::vector<LabelCount> out;
  for (const auto& [label, n] : counts) {
    out.push_back({label, n, 100.0 * static_cast<double>(n) / static_cast<double>(data.size())});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization and vocabulary

inline std::vector<std::string> normalize(std::string_view text) {
  std::string clean(text);
  for (char& ch : clean) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80) {
      if (std::ispunct(c)) {
        ch = ' ';
      } else {
        ch = static_cast<char>(std::tolower(c));
      }
    }
  }
  std::vector<std::string> words;
  std::istringstream ss(clean);
  std::string w;
  while (ss >> w) words.push_back(std::move(w));
  return words;
}

class Vocab {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kOovId = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kOovToken = "<oov>";

  Vocab() : id_to_token_{std::string(kPadToken), std::string(kOovToken)} {}

  /// Appends a content token; returns its id (existing id if already present).
  int add(const std::string& token) {
    if (auto it = token_to_id_.find(token); it != token_to_id_.end()) return it->second;
    const int id = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(token);
    token_to_id_.emplace(token, id);
    return id;
  }

  int id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kOovId : it->second;
  }

  bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }
  const std::string& token(int id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return id_to_token_.size(); }

  /// Two-column TSV: token, id. Reserved ids included.
  void write_tsv(std::ostream& os) const {
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) os << id_to_token_[i] << '\t' << i << '\n';
  }

  static Vocab read_tsv(std::istream& is) {
    Vocab v;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto tab = line.rfind('\t');
      if (tab == std::string::npos) throw DataError("vocab tsv line " + std::to_string(line_no) + ": missing tab");
      const std::string tok = line.substr(0, tab);
      const int id = std::stoi(line.substr(tab + 1));
      if (id < 2) continue;
      if (v.add(tok) != id) throw DataError("vocab tsv line " + std::to_string(line_no) + ": ids not dense");
    }
    return v;
  }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Top `max_content` tokens by training frequency; ties go to the token seen first.
inline Vocab build_vocab(const std::vector<Utterance>& train, std::size_t max_content = 1000) {
  struct Stat {
    std::size_t count = 0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<std::string, Stat> stats;
  std::vector<std::string> order;
  std::size_t position = 0;
  for (const auto& u : train) {
    for (auto& w : normalize(u.text)) {
      auto [it, inserted] = stats.try_emplace(w, Stat{0, position});
      if (inserted) order.push_back(w);
      ++it->second.count;
      ++position;
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
    const Stat& sa = stats.at(a);
    const Stat& sb = stats.at(b);
    if (sa.count != sb.count) return sa.count > sb.count;
    return sa.first_seen < sb.first_seen;
  });
  Vocab vocab;
  for (std::size_t i = 0; i < order.size() && i < max_content; ++i) vocab.add(order[i]);
  return vocab;
}

struct TokenSeq {
  std::vector<int> ids;
  std::size_t length() const { return ids.size(); }
};

inline TokenSeq tokenize(std::string_view text, const Vocab& vocab) {
  TokenSeq seq;
  for (const auto& w : normalize(text)) seq.ids.push_back(vocab.id(w));
  if (seq.ids.empty()) throw DataError("tokenize: text is empty after normalization");
  return seq;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
  std::uint64_t seed = 0;
  double test_fraction = 0.20;
  double val_fraction_of_train = 0.20;
};

/// Index partition of a dataset.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Single seeded shuffle, then contiguous slices: test, val, train.
inline Split split(std::size_t n, const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) ||
      !(spec.val_fraction_of_train > 0.0 && spec.val_fraction_of_train < 1.0)) {
    throw ConfigError("split fractions must lie in (0,1)");
  }
  if (n < 5) throw std::invalid_argument("split: need at least 5 samples");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  const auto n_test = static_cast<std::size_t>(std::floor(spec.test_fraction * static_cast<double>(n)));
  const std::size_t rest = n - n_test;
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val_fraction_of_train * static_cast<double>(rest)));

  Split out;
  out.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test),
                 idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  out.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), idx.end());
  return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& data, const std::vector<std::size_t>& indices) {
  std::vector<T> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(data.at(i));
  return out;
}

// ---------------------------------------------------------------------------
// Labeled, tokenized examples

struct Example {
  TokenSeq tokens;
  int label = 0;
};

struct EncodeResult {
  std::vector<Example> examples;
  std::vector<std::size_t> source_index;  // position in the input list
  std::size_t dropped = 0;                // empty after normalization
};

inline int label_index(const std::vector<std::string>& labels, const std::string& intent) {
  auto it = std::lower_bound(labels.begin(), labels.end(), intent);
  if (it == labels.end() || *it != intent) throw DataError("unknown intent label: " + intent);
  return static_cast<int>(it - labels.begin());
}

/// Tokenizes and labels; utterances that normalize to nothing are dropped and counted.
inline EncodeResult encode(const std::vector<Utterance>& data, const Vocab& vocab,
                           const std::vector<std::string>& labels) {
  EncodeResult out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (normalize(data[i].text).empty()) {
      ++out.dropped;
      continue;
    }
    out.examples.push_back({tokenize(data[i].text, vocab), label_index(labels, data[i].intent)});
    out.source_index.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Raw SNIPS benchmark conversion
//
// The benchmark ships one directory per intent holding JSON files shaped as
// {"<Intent>": [{"data": [{"text": "..."}, {"text": "...", "entity": "..."}]}, ...]}.
// Every *.json file under the root is read in sorted path order and each
// record's text chunks are concatenated.

inline std::vector<Utterance> convert_snips_raw(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("not a directory: " + root.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no SNIPS json files under " + root.string());

  std::vector<Utterance> out;
  for (const auto& file : files) {
    std::ifstream is(file);
    if (!is) throw DataError("cannot read " + file.string());
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(file.string() + ": invalid JSON (" + e.what() + ")");
    }
    if (!doc.is_object()) throw DataError(file.string() + ": expected an object keyed by intent");
    for (const auto& [intent, records] : doc.items()) {
      if (!records.is_array()) throw DataError(file.string() + ": intent '" + intent + "' is not a list");
      for (const auto& rec : records) {
        if (!rec.contains("data") || !rec["data"].is_array()) {
          throw DataError(file.string() + ": record without \"data\" list");
        }
        std::string text;
        for (const auto& chunk : rec["data"]) text += chunk.at("text").get<std::string>();
        text = trim(text);
        if (!text.empty()) out.push_back({std::move(text), intent});
      }
    }
  }
  return out;
}

}  // namespace rnndyn::corpus
