#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dparse/corpus.hpp"

namespace dparse {

// Lowercases, splits on whitespace, and peels leading/trailing ASCII
// punctuation into separate tokens; internal punctuation (it's, foo_bar)
// stays attached.
inline std::vector<std::string> tokenize_text(std::string_view text) {
  const std::string lowered = lowercase_ascii(text);
  std::vector<std::string> out;
  std::size_t i = 0;
  const auto is_punct = [](char c) {
    return static_cast<unsigned char>(c) < 128 && std::ispunct(static_cast<unsigned char>(c));
  };
  while (i < lowered.size()) {
    while (i < lowered.size() && std::isspace(static_cast<unsigned char>(lowered[i]))) ++i;
    std::size_t j = i;
    while (j < lowered.size() && !std::isspace(static_cast<unsigned char>(lowered[j]))) ++j;
    if (i == j) break;
    std::string_view chunk(lowered.data() + i, j - i);
    while (!chunk.empty() && is_punct(chunk.front())) {
      out.emplace_back(1, chunk.front());
      chunk.remove_prefix(1);
    }
    std::string trailing;
    while (!chunk.empty() && is_punct(chunk.back())) {
      trailing.insert(trailing.begin(), chunk.back());
      chunk.remove_suffix(1);
    }
    if (!chunk.empty()) out.emplace_back(chunk);
    for (char c : trailing) out.emplace_back(1, c);
    i = j;
  }
  return out;
}

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMask = 2;
  static constexpr int kBos = 3;
  static constexpr int kRoot = 4;
  static constexpr int kNumSpecials = 5;

  static const std::vector<std::string>& special_tokens() {
    static const std::vector<std::string> s = {"<pad>", "<unk>", "<mask>", "<bos>", "<root>"};
    return s;
  }

  Vocabulary() {
    for (const std::string& s : special_tokens()) {
      ids_[s] = static_cast<int>(tokens_.size());
      tokens_.push_back(s);
      freqs_.push_back(0);
    }
  }

  // counts: token -> frequency; ordering is descending frequency with
  // lexicographic tie-break, after the fixed specials
  static Vocabulary from_counts(const std::map<std::string, std::int64_t>& counts,
                                std::int64_t min_freq = 1) {
    require(min_freq >= 1, "Vocabulary: min_freq must be >= 1");
    std::vector<std::pair<std::string, std::int64_t>> items;
    for (const auto& [tok, freq] : counts) {
      if (freq >= min_freq) items.emplace_back(tok, freq);
    }
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    Vocabulary v;
    for (auto& [tok, freq] : items) v.push_token(tok, freq);
    return v;
  }

  int size() const { return static_cast<int>(tokens_.size()); }

  int id(const std::string& token) const {
    const auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  const std::string& token(int id) const {
    require(id >= 0 && id < size(), "Vocabulary: id out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::int64_t freq(const std::string& token) const {
    const auto it = ids_.find(token);
    return it == ids_.end() ? 0 : freqs_[static_cast<std::size_t>(it->second)];
  }

  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.freqs_ == b.freqs_;
  }

  // appends the next non-special token in id order (deserialization path)
  void push_token(const std::string& tok, std::int64_t freq) {
    require(!ids_.count(tok), "Vocabulary: duplicate token " + tok);
    require(freq >= 1, "Vocabulary: non-special token needs freq >= 1");
    ids_[tok] = static_cast<int>(tokens_.size());
    tokens_.push_back(tok);
    freqs_.push_back(freq);
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::int64_t> freqs_;
  std::map<std::string, int> ids_;
};

// Token counts over every EDU's speaker label and text; root sentinels are
// structural and stay out of the counts.
inline std::map<std::string, std::int64_t> corpus_token_counts(const Corpus& c) {
  std::map<std::string, std::int64_t> counts;
  for (const Dialogue& d : c.dialogues) {
    for (const Edu& e : d.edus) {
      if (is_root_edu(e)) continue;
      for (const std::string& t : tokenize_text(e.speaker)) counts[t] += 1;
      for (const std::string& t : tokenize_text(e.text)) counts[t] += 1;
    }
  }
  return counts;
}

inline Vocabulary build_vocab(const std::vector<Corpus>& corpora, std::int64_t min_freq = 1) {
  require(!corpora.empty(), "build_vocab: no corpora");
  std::map<std::string, std::int64_t> counts;
  for (const Corpus& c : corpora) {
    for (const auto& [tok, freq] : corpus_token_counts(c)) counts[tok] += freq;
  }
  return Vocabulary::from_counts(counts, min_freq);
}

// Cross-domain refinement: a token survives iff its combined frequency
// reaches the threshold or it occurs in both count maps. Rare tokens
// exclusive to one side map to UNK at encode time.
inline Vocabulary refine_vocab(const std::map<std::string, std::int64_t>& counts_a,
                               const std::map<std::string, std::int64_t>& counts_b,
                               std::int64_t threshold = 20) {
  require(threshold >= 1, "refine_vocab: threshold must be >= 1");
  std::map<std::string, std::int64_t> combined;
  for (const auto& [tok, freq] : counts_a) combined[tok] += freq;
  for (const auto& [tok, freq] : counts_b) combined[tok] += freq;
  std::map<std::string, std::int64_t> kept;
  for (const auto& [tok, freq] : combined) {
    const bool shared = counts_a.count(tok) && counts_b.count(tok);
    if (freq >= threshold || shared) kept[tok] = freq;
  }
  return Vocabulary::from_counts(kept, 1);
}

// [BOS, speaker token(s), content tokens], truncated to max_edu_tokens; the
// root sentinel encodes as [BOS, ROOT].
inline std::vector<int> encode_edu(const Edu& e, const Vocabulary& v, int max_edu_tokens) {
  require(max_edu_tokens >= 2, "encode_edu: max_edu_tokens must be >= 2");
  if (is_root_edu(e)) return {Vocabulary::kBos, Vocabulary::kRoot};
  std::vector<int> ids = {Vocabulary::kBos};
  for (const std::string& t : tokenize_text(e.speaker)) ids.push_back(v.id(t));
  for (const std::string& t : tokenize_text(e.text)) ids.push_back(v.id(t));
  if (static_cast<int>(ids.size()) > max_edu_tokens) ids.resize(static_cast<std::size_t>(max_edu_tokens));
  return ids;
}

inline constexpr int kIgnoreLabel = -1;

// BERT-style masking: each non-special position is selected with probability
// `rate`; selected positions become MASK 80% of the time, a random
// non-special id 10%, and stay unchanged 10%. Labels hold the original id at
// selected positions and kIgnoreLabel elsewhere.
inline std::pair<std::vector<int>, std::vector<int>> mask_tokens(const std::vector<int>& ids, double rate,
                                                                 const Vocabulary& v, std::uint64_t seed) {
  require(!ids.empty(), "mask_tokens: empty id sequence");
  require(rate >= 0.0 && rate <= 1.0, "mask_tokens: rate must be in [0,1]");
  Rng rng(seed);
  std::vector<int> masked = ids;
  std::vector<int> labels(ids.size(), kIgnoreLabel);
  const int n_regular = v.size() - Vocabulary::kNumSpecials;
  for (std::size_t p = 0; p < ids.size(); ++p) {
    if (Vocabulary::is_special(ids[p])) continue;
    if (rng.real() >= rate) continue;
    labels[p] = ids[p];
    const double r = rng.real();
    if (r < 0.8) {
      masked[p] = Vocabulary::kMask;
    } else if (r < 0.9 && n_regular > 0) {
      masked[p] = Vocabulary::kNumSpecials + static_cast<int>(rng.index(static_cast<std::uint64_t>(n_regular)));
    }  // else: keep the original token
  }
  return {std::move(masked), std::move(labels)};
}

struct VocabOverlap {
  std::int64_t size_a = 0;
  std::int64_t size_b = 0;
  std::int64_t shared = 0;
  std::int64_t only_a = 0;
  std::int64_t only_b = 0;
};

// set arithmetic over non-special tokens
inline VocabOverlap vocab_overlap(const Vocabulary& a, const Vocabulary& b) {
  VocabOverlap o;
  std::set<std::string> sa(a.tokens().begin() + Vocabulary::kNumSpecials, a.tokens().end());
  std::set<std::string> sb(b.tokens().begin() + Vocabulary::kNumSpecials, b.tokens().end());
  o.size_a = static_cast<std::int64_t>(sa.size());
  o.size_b = static_cast<std::int64_t>(sb.size());
  for (const std::string& t : sa) {
    if (sb.count(t)) o.shared += 1;
  }
  o.only_a = o.size_a - o.shared;
  o.only_b = o.size_b - o.shared;
  return o;
}

// Vocabulary file: {"specials": [...], "tokens": [[token, freq], ...]} in id order.
inline void save_vocab(const std::filesystem::path& path, const Vocabulary& v) {
  nlohmann::ordered_json j;
  j["specials"] = Vocabulary::special_tokens();
  auto& toks = j["tokens"] = nlohmann::ordered_json::array();
  for (int i = Vocabulary::kNumSpecials; i < v.size(); ++i) {
    toks.push_back({v.token(i), v.freq(v.token(i))});
  }
  write_file(path, j.dump() + "\n");
}

inline Vocabulary load_vocab(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail("load_vocab: bad vocabulary file " + path.string() + ": " + e.what());
  }
  require(j.value("specials", std::vector<std::string>{}) == Vocabulary::special_tokens(),
          "load_vocab: unexpected specials in " + path.string());
  Vocabulary v;
  for (const auto& entry : j.at("tokens")) {
    v.push_token(entry.at(0).get<std::string>(), entry.at(1).get<std::int64_t>());
  }
  return v;
}

}  // namespace dparse
