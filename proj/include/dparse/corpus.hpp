#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dparse/common.hpp"
#include "json.hpp"

namespace dparse {

// Distinguished label for links into the root node; never part of the
// relation inventory.
inline const std::string kRootRelation = "ROOT";
inline const std::string kRootText = "<root>";

// default 17-way SDRT relation inventory
inline const std::vector<std::string> kDefaultRelations = {
    "Acknowledgement", "Alternation",   "Background",  "Clarification-Question",
    "Comment",         "Conditional",   "Continuation", "Contrast",
    "Correction",      "Elaboration",   "Explanation",  "Narration",
    "Parallel",        "Question-Answer-Pair", "Question-Elaboration", "Result",
    "Sequence"};

struct Edu {
  int index = 0;
  std::string speaker;
  std::string text;

  friend bool operator==(const Edu&, const Edu&) = default;
};

struct Link {
  int dep = 0;
  int head = 0;
  std::string relation;

  friend bool operator==(const Link&, const Link&) = default;
};

struct Dialogue {
  std::string id;
  std::vector<Edu> edus;
  std::vector<Link> links;
  bool augmented = false;

  // number of non-root EDUs
  int n_units() const {
    return augmented ? static_cast<int>(edus.size()) - 1 : static_cast<int>(edus.size());
  }

  friend bool operator==(const Dialogue&, const Dialogue&) = default;
};

struct Corpus {
  std::string name;
  std::vector<Dialogue> dialogues;
  std::vector<std::string> relation_inventory;

  int relation_id(const std::string& label) const {
    for (std::size_t i = 0; i < relation_inventory.size(); ++i) {
      if (relation_inventory[i] == label) return static_cast<int>(i);
    }
    fail("relation label not in inventory: " + label);
  }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

inline bool is_root_edu(const Edu& e) { return e.speaker.empty() && e.text == kRootText; }

// gold head per EDU index; -1 where no link names the EDU as dep
inline std::vector<int> gold_heads(const Dialogue& d) {
  std::vector<int> heads(d.edus.size(), -1);
  for (const Link& l : d.links) {
    if (l.dep >= 0 && l.dep < static_cast<int>(heads.size())) heads[static_cast<std::size_t>(l.dep)] = l.head;
  }
  return heads;
}

inline const Link* find_link(const Dialogue& d, int dep) {
  for (const Link& l : d.links) {
    if (l.dep == dep) return &l;
  }
  return nullptr;
}

// ---- serialization ----

inline nlohmann::ordered_json dialogue_json(const Dialogue& d) {
  nlohmann::ordered_json j;
  j["id"] = d.id;
  auto& edus = j["edus"] = nlohmann::ordered_json::array();
  for (const Edu& e : d.edus) edus.push_back({{"speaker", e.speaker}, {"text", e.text}});
  auto& rels = j["relations"] = nlohmann::ordered_json::array();
  for (const Link& l : d.links) rels.push_back({{"x", l.head}, {"y", l.dep}, {"type", l.relation}});
  return j;
}

inline std::string serialize_corpus(const Corpus& c) {
  std::string out;
  for (const Dialogue& d : c.dialogues) {
    out += dialogue_json(d).dump();
    out += "\n";
  }
  return out;
}

inline void save_corpus(const std::filesystem::path& path, const Corpus& c) {
  write_file(path, serialize_corpus(c));
}

inline Corpus load_corpus(const std::filesystem::path& path,
                          const std::optional<std::vector<std::string>>& inventory = std::nullopt) {
  const std::string raw = read_file(path);
  Corpus c;
  c.name = path.stem().string();
  if (inventory) c.relation_inventory = *inventory;

  std::set<std::string> seen_ids;
  std::set<std::string> found_labels;
  int line_no = 0;
  for (const std::string& line : split_on(raw, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);

    Dialogue d;
    try {
      const auto j = nlohmann::json::parse(line);
      d.id = j.at("id").get<std::string>();
      for (const auto& je : j.at("edus")) {
        Edu e;
        e.index = static_cast<int>(d.edus.size());
        e.speaker = je.at("speaker").get<std::string>();
        e.text = je.at("text").get<std::string>();
        d.edus.push_back(std::move(e));
      }
      if (j.contains("relations")) {
        for (const auto& jl : j.at("relations")) {
          Link l;
          l.head = jl.at("x").get<int>();
          l.dep = jl.at("y").get<int>();
          l.relation = jl.at("type").get<std::string>();
          d.links.push_back(std::move(l));
        }
      }
    } catch (const nlohmann::json::exception& e) {
      fail(where + ": malformed record: " + e.what());
    }
    require(!d.edus.empty(), where + ": malformed record: dialogue has no EDUs");
    require(!seen_ids.count(d.id), where + ": duplicate dialogue id '" + d.id + "'");
    seen_ids.insert(d.id);

    const int n = static_cast<int>(d.edus.size());
    for (const Link& l : d.links) {
      const std::string lk = " link (x=" + std::to_string(l.head) + ", y=" + std::to_string(l.dep) + ")";
      require(l.head >= 0 && l.head < n && l.dep >= 0 && l.dep < n, where + ":" + lk + " out of range");
      require(l.head < l.dep, where + ":" + lk + ": backward link (x must be < y)");
      if (l.relation != kRootRelation) {
        if (inventory) {
          require(std::find(inventory->begin(), inventory->end(), l.relation) != inventory->end(),
                  where + ": relation label not in inventory: " + l.relation);
        } else {
          found_labels.insert(l.relation);
        }
      }
    }
    c.dialogues.push_back(std::move(d));
  }
  if (!inventory) c.relation_inventory.assign(found_labels.begin(), found_labels.end());
  return c;
}

// ---- augmentation and validation ----

inline Dialogue augment_root(const Dialogue& d) {
  require(!d.augmented, "augment_root: dialogue '" + d.id + "' already augmented");
  Dialogue out;
  out.id = d.id;
  out.augmented = true;
  out.edus.push_back(Edu{0, "", kRootText});
  for (const Edu& e : d.edus) out.edus.push_back(Edu{e.index + 1, e.speaker, e.text});

  // one head per EDU: on multi-parent sources keep the smallest head
  std::map<int, Link> by_dep;
  for (const Link& l : d.links) {
    auto it = by_dep.find(l.dep);
    if (it == by_dep.end() || l.head < it->second.head) by_dep[l.dep] = l;
  }
  for (int i = 1; i < static_cast<int>(out.edus.size()); ++i) {
    auto it = by_dep.find(i - 1);
    if (it == by_dep.end()) {
      out.links.push_back(Link{i, 0, kRootRelation});
    } else {
      out.links.push_back(Link{i, it->second.head + 1, it->second.relation});
    }
  }
  return out;
}

inline Corpus augment_corpus(const Corpus& c) {
  Corpus out;
  out.name = c.name;
  out.relation_inventory = c.relation_inventory;
  out.dialogues.reserve(c.dialogues.size());
  for (const Dialogue& d : c.dialogues) out.dialogues.push_back(augment_root(d));
  return out;
}

// Structural checks; returns one description per violation and never throws.
inline std::vector<std::string> validate(const Dialogue& d) {
  std::vector<std::string> out;
  const int n = static_cast<int>(d.edus.size());
  for (int i = 0; i < n; ++i) {
    const Edu& e = d.edus[static_cast<std::size_t>(i)];
    if (e.index != i) out.push_back("EDU " + std::to_string(i) + ": index mismatch (" + std::to_string(e.index) + ")");
    const bool is_root_slot = d.augmented && i == 0;
    if (is_root_slot && !is_root_edu(e)) out.push_back("EDU 0: missing root sentinel");
    if (!is_root_slot && trim(e.text).empty()) out.push_back("EDU " + std::to_string(i) + ": empty text");
  }

  std::vector<int> head_count(static_cast<std::size_t>(n), 0);
  for (const Link& l : d.links) {
    const std::string lk = "link (dep " + std::to_string(l.dep) + ")";
    if (l.dep < 0 || l.dep >= n || l.head < 0 || l.head >= n) {
      out.push_back(lk + ": endpoint out of range");
      continue;
    }
    head_count[static_cast<std::size_t>(l.dep)] += 1;
    if (l.head == l.dep) {
      out.push_back(lk + ": self link");
    } else if (l.head > l.dep) {
      out.push_back(lk + ": backward link");
    }
    if (d.augmented) {
      if (l.head == 0 && l.relation != kRootRelation) out.push_back(lk + ": root link must carry ROOT label");
      if (l.head != 0 && l.relation == kRootRelation) out.push_back(lk + ": ROOT label on non-root head");
    }
  }
  if (d.augmented) {
    for (int i = 1; i < n; ++i) {
      if (head_count[static_cast<std::size_t>(i)] == 0) out.push_back("EDU " + std::to_string(i) + ": no head");
      if (head_count[static_cast<std::size_t>(i)] > 1) out.push_back("EDU " + std::to_string(i) + ": multiple heads");
    }
  }
  return out;
}

// Marks a loaded corpus as augmented after verifying every dialogue carries
// the root sentinel and a valid one-head structure.
inline Corpus adopt_augmented(const Corpus& c) {
  Corpus out = c;
  for (Dialogue& d : out.dialogues) {
    require(!d.edus.empty() && is_root_edu(d.edus[0]),
            "dialogue '" + d.id + "': expects augmented gold (no root sentinel at EDU 0)");
    d.augmented = true;
    const auto violations = validate(d);
    if (!violations.empty())
      fail("dialogue '" + d.id + "': expects augmented gold (" + violations[0] + ")");
  }
  return out;
}

// ---- splitting ----

inline std::pair<Corpus, Corpus> split_corpus(const Corpus& c, double dev_fraction, std::uint64_t seed) {
  const int n = static_cast<int>(c.dialogues.size());
  require(n >= 2, "split_corpus: fewer than 2 dialogues");
  require(dev_fraction > 0.0 && dev_fraction < 1.0, "split_corpus: dev_fraction must be in (0,1)");
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  shuffle_deterministic(order, rng);

  int n_dev = static_cast<int>(std::llround(dev_fraction * n));
  n_dev = std::clamp(n_dev, 1, n - 1);

  Corpus train, dev;
  train.name = c.name + "-train";
  dev.name = c.name + "-dev";
  train.relation_inventory = dev.relation_inventory = c.relation_inventory;
  for (int i = 0; i < n; ++i) {
    const Dialogue& d = c.dialogues[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    (i < n_dev ? dev : train).dialogues.push_back(d);
  }
  return {std::move(train), std::move(dev)};
}

// ---- synthetic generation ----

inline std::string sanitize_label(const std::string& label) {
  std::string out = lowercase_ascii(label);
  for (char& ch : out) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)))) ch = '_';
  }
  return out;
}

struct SynthConfig {
  std::string name = "synth";
  int n_dialogues = 100;
  int min_edus = 2;  // non-root EDUs per dialogue
  int max_edus = 8;
  std::vector<std::string> domain_lexicon;
  std::vector<std::string> shared_lexicon;
  std::vector<std::string> relation_inventory;
  int min_fillers = 1;
  int max_fillers = 4;
  double p_root = 0.15;          // chance a non-initial EDU attaches to the root
  double p_offset2 = 0.35;       // chance an attached EDU points 2 back instead of 1
  double p_domain_filler = 0.7;  // chance a filler comes from the domain lexicon
  int n_speakers = 3;
  // When set, domain fillers for an EDU with relation r are drawn from the
  // slice of domain_lexicon congruent to r's id — domain words correlate
  // with discourse function, which does not transfer across domains.
  bool slice_by_relation = true;
};

// Every EDU text starts with a cue token that fully determines its gold
// attachment: "cue_root", or "cue_<offset>_<sanitized relation>" with offset
// counting backwards from the EDU. Filler words follow the cue.
inline Corpus generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  require(!cfg.relation_inventory.empty(), "generate_synthetic: inventory empty");
  require(cfg.n_dialogues >= 1, "generate_synthetic: n_dialogues must be >= 1");
  require(cfg.min_edus >= 2 && cfg.max_edus >= cfg.min_edus,
          "generate_synthetic: need max_edus >= min_edus >= 2");
  require(cfg.min_fillers >= 0 && cfg.max_fillers >= cfg.min_fillers, "generate_synthetic: bad filler range");
  require(cfg.n_speakers >= 1, "generate_synthetic: n_speakers must be >= 1");
  for (const auto* lex : {&cfg.domain_lexicon, &cfg.shared_lexicon}) {
    for (const std::string& w : *lex)
      require(w.rfind("cue_", 0) != 0, "generate_synthetic: lexicon word collides with cue space: " + w);
  }
  std::set<std::string> sanitized;
  for (const std::string& r : cfg.relation_inventory) {
    require(sanitized.insert(sanitize_label(r)).second,
            "generate_synthetic: relation labels collide after sanitization: " + r);
  }

  const int C = static_cast<int>(cfg.relation_inventory.size());
  Rng rng(seed);

  // low-index-biased lexicon draw (squared uniform, a crude Zipf stand-in)
  auto pick = [&rng](const std::vector<std::string>& lex, int slice_mod, int slice_rem) -> const std::string& {
    std::vector<int> pool;
    for (int i = 0; i < static_cast<int>(lex.size()); ++i) {
      if (slice_mod <= 1 || i % slice_mod == slice_rem) pool.push_back(i);
    }
    if (pool.empty()) {
      for (int i = 0; i < static_cast<int>(lex.size()); ++i) pool.push_back(i);
    }
    const double r = rng.real();
    const auto idx = static_cast<std::size_t>(r * r * static_cast<double>(pool.size()));
    return lex[static_cast<std::size_t>(pool[std::min(idx, pool.size() - 1)])];
  };

  Corpus c;
  c.name = cfg.name;
  c.relation_inventory = cfg.relation_inventory;
  for (int di = 0; di < cfg.n_dialogues; ++di) {
    Dialogue d;
    char idbuf[64];
    std::snprintf(idbuf, sizeof(idbuf), "%s-%04d", cfg.name.c_str(), di);
    d.id = idbuf;
    const int n = cfg.min_edus + static_cast<int>(rng.index(static_cast<std::uint64_t>(cfg.max_edus - cfg.min_edus + 1)));
    for (int i = 0; i < n; ++i) {
      int head = -1;  // -1: attaches to root (no source link)
      int rel = -1;
      if (i >= 1 && rng.real() >= cfg.p_root) {
        const int offset = (i >= 2 && rng.real() < cfg.p_offset2) ? 2 : 1;
        head = i - offset;
        rel = static_cast<int>(rng.index(static_cast<std::uint64_t>(C)));
      }
      std::string text = (head < 0)
                             ? "cue_root"
                             : "cue_" + std::to_string(i - head) + "_" +
                                   sanitize_label(c.relation_inventory[static_cast<std::size_t>(rel)]);
      const int n_fill =
          cfg.min_fillers + static_cast<int>(rng.index(static_cast<std::uint64_t>(cfg.max_fillers - cfg.min_fillers + 1)));
      for (int f = 0; f < n_fill; ++f) {
        const bool from_domain = !cfg.domain_lexicon.empty() &&
                                 (cfg.shared_lexicon.empty() || rng.real() < cfg.p_domain_filler);
        if (from_domain) {
          const bool slice = cfg.slice_by_relation && rel >= 0;
          text += " " + pick(cfg.domain_lexicon, slice ? C : 1, slice ? rel : 0);
        } else if (!cfg.shared_lexicon.empty()) {
          text += " " + pick(cfg.shared_lexicon, 1, 0);
        }
      }
      Edu e;
      e.index = i;
      e.speaker = "spk" + std::to_string(rng.index(static_cast<std::uint64_t>(cfg.n_speakers)));
      e.text = text;
      d.edus.push_back(std::move(e));
      if (head >= 0)
        d.links.push_back(Link{i, head, c.relation_inventory[static_cast<std::size_t>(rel)]});
    }
    c.dialogues.push_back(std::move(d));
  }
  return c;
}

// Decodes the synthetic cue tokens of an augmented dialogue back into gold
// structure; the generator's ground truth is exactly recoverable this way.
struct OracleParse {
  std::vector<int> heads;              // index 1..n
  std::vector<std::string> relations;  // parallel to heads
};

inline OracleParse oracle_parse(const Dialogue& d, const std::vector<std::string>& inventory) {
  require(d.augmented, "oracle_parse: dialogue must be augmented");
  std::map<std::string, std::string> by_sanitized;
  for (const std::string& r : inventory) by_sanitized[sanitize_label(r)] = r;

  OracleParse out;
  for (int i = 1; i < static_cast<int>(d.edus.size()); ++i) {
    const std::string& text = d.edus[static_cast<std::size_t>(i)].text;
    const std::string cue = text.substr(0, text.find(' '));
    if (cue == "cue_root") {
      out.heads.push_back(0);
      out.relations.push_back(kRootRelation);
      continue;
    }
    require(cue.rfind("cue_", 0) == 0, "oracle_parse: EDU " + std::to_string(i) + " lacks a cue token");
    const std::size_t us = cue.find('_', 4);
    require(us != std::string::npos, "oracle_parse: malformed cue " + cue);
    const int offset = std::stoi(cue.substr(4, us - 4));
    const auto it = by_sanitized.find(cue.substr(us + 1));
    require(it != by_sanitized.end(), "oracle_parse: unknown relation in cue " + cue);
    require(i - offset >= 1, "oracle_parse: cue offset reaches past the first EDU");
    out.heads.push_back(i - offset);
    out.relations.push_back(it->second);
  }
  return out;
}

}  // namespace dparse
