#pragma once

#include <map>
#include <string>
#include <vector>

#include "dparse/tokenize.hpp"

namespace dparse {

struct CorpusStats {
  std::int64_t sample_size = 0;
  double avg_edu_number = 0;   // report with 2 decimals
  double avg_word_number = 0;  // report with 1 decimal
};

// EDU and word averages per dialogue; the artificial root never counts.
inline CorpusStats corpus_stats(const Corpus& c) {
  require(!c.dialogues.empty(), "corpus_stats: empty corpus");
  std::int64_t edus = 0, words = 0;
  for (const Dialogue& d : c.dialogues) {
    edus += d.n_units();
    for (const Edu& e : d.edus) {
      if (is_root_edu(e)) continue;
      words += static_cast<std::int64_t>(tokenize_text(e.text).size());
    }
  }
  CorpusStats s;
  s.sample_size = static_cast<std::int64_t>(c.dialogues.size());
  s.avg_edu_number = static_cast<double>(edus) / static_cast<double>(s.sample_size);
  s.avg_word_number = static_cast<double>(words) / static_cast<double>(s.sample_size);
  return s;
}

struct RelationDistribution {
  std::map<std::string, std::int64_t> counts;
  std::map<std::string, double> proportions;
  std::int64_t total = 0;
};

// counts every non-ROOT link label; proportions normalized over those links
inline RelationDistribution relation_distribution(const Corpus& c) {
  require(!c.dialogues.empty(), "relation_distribution: empty corpus");
  RelationDistribution r;
  for (const std::string& label : c.relation_inventory) r.counts[label] = 0;
  for (const Dialogue& d : c.dialogues) {
    for (const Link& l : d.links) {
      if (l.relation == kRootRelation) continue;
      r.counts[l.relation] += 1;
      r.total += 1;
    }
  }
  require(r.total > 0, "relation_distribution: zero relation links");
  for (const auto& [label, count] : r.counts)
    r.proportions[label] = static_cast<double>(count) / static_cast<double>(r.total);
  return r;
}

struct RelationGap {
  std::string label;
  double prop_a = 0;
  double prop_b = 0;
  double gap = 0;  // |prop_a - prop_b|
};

// per-label proportion differences, largest gap first (label ties by name)
inline std::vector<RelationGap> compare_distributions(const RelationDistribution& a,
                                                      const RelationDistribution& b) {
  std::map<std::string, RelationGap> by_label;
  for (const auto& [label, p] : a.proportions) by_label[label].prop_a = p;
  for (const auto& [label, p] : b.proportions) by_label[label].prop_b = p;
  std::vector<RelationGap> out;
  for (auto& [label, g] : by_label) {
    g.label = label;
    g.gap = std::abs(g.prop_a - g.prop_b);
    out.push_back(g);
  }
  std::sort(out.begin(), out.end(), [](const RelationGap& x, const RelationGap& y) {
    if (x.gap != y.gap) return x.gap > y.gap;
    return x.label < y.label;
  });
  return out;
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  return out + "\"";
}

// one horizontal bar section per corpus, relations ranked by proportion
inline std::string distribution_svg(const std::vector<std::string>& names,
                                    const std::vector<RelationDistribution>& dists) {
  const int bar_h = 16, gap_h = 4, label_w = 190, bar_max = 480, section_gap = 34;
  int height = 10;
  for (const auto& d : dists)
    height += section_gap + static_cast<int>(d.counts.size()) * (bar_h + gap_h) + 10;
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    std::to_string(label_w + bar_max + 80) + "\" height=\"" + std::to_string(height) +
                    "\" font-family=\"monospace\" font-size=\"12\">\n";
  int y = 10;
  for (std::size_t ci = 0; ci < dists.size(); ++ci) {
    y += 18;
    svg += "<text x=\"4\" y=\"" + std::to_string(y) + "\" font-size=\"14\">" + names[ci] + "</text>\n";
    y += 8;
    std::vector<std::pair<std::string, double>> rows(dists[ci].proportions.begin(), dists[ci].proportions.end());
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    for (const auto& [label, p] : rows) {
      const int w = static_cast<int>(p * bar_max + 0.5);
      svg += "<text x=\"4\" y=\"" + std::to_string(y + 12) + "\">" + label + "</text>\n";
      svg += "<rect x=\"" + std::to_string(label_w) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
             std::to_string(w) + "\" height=\"" + std::to_string(bar_h) + "\" fill=\"#4878a8\"/>\n";
      svg += "<text x=\"" + std::to_string(label_w + w + 6) + "\" y=\"" + std::to_string(y + 12) + "\">" +
             format_fixed(p, 4) + "</text>\n";
      y += bar_h + gap_h;
    }
    y += 8;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace detail

// Writes stats.csv, relations.csv, relations.svg, and — given two or more
// corpora — overlap.csv and relation_gaps.csv. Output bytes are
// deterministic. Returns the written paths.
inline std::vector<std::filesystem::path> analysis_report(const std::vector<Corpus>& corpora,
                                                          const std::filesystem::path& out_dir) {
  require(!corpora.empty(), "analysis_report: no corpora");
  std::vector<std::filesystem::path> written;

  std::string stats = "corpus,sample_size,avg_edu_number,avg_word_number\n";
  for (const Corpus& c : corpora) {
    const CorpusStats s = corpus_stats(c);
    stats += detail::csv_escape(c.name) + "," + std::to_string(s.sample_size) + "," +
             format_fixed(s.avg_edu_number, 2) + "," + format_fixed(s.avg_word_number, 1) + "\n";
  }
  written.push_back(out_dir / "stats.csv");
  write_file(written.back(), stats);

  std::vector<RelationDistribution> dists;
  std::vector<std::string> names;
  std::string rel_csv = "corpus,relation,count,proportion\n";
  for (const Corpus& c : corpora) {
    dists.push_back(relation_distribution(c));
    names.push_back(c.name);
    for (const auto& [label, count] : dists.back().counts) {
      rel_csv += detail::csv_escape(c.name) + "," + detail::csv_escape(label) + "," + std::to_string(count) +
                 "," + format_fixed(dists.back().proportions.at(label), 6) + "\n";
    }
  }
  written.push_back(out_dir / "relations.csv");
  write_file(written.back(), rel_csv);
  written.push_back(out_dir / "relations.svg");
  write_file(written.back(), detail::distribution_svg(names, dists));

  if (corpora.size() >= 2) {
    std::vector<Vocabulary> vocabs;
    for (const Corpus& c : corpora) vocabs.push_back(build_vocab({c}));
    std::string overlap = "corpus_a,corpus_b,size_a,size_b,shared,only_a,only_b\n";
    std::string gaps = "corpus_a,corpus_b,relation,prop_a,prop_b,gap\n";
    for (std::size_t i = 0; i < corpora.size(); ++i) {
      for (std::size_t j = i + 1; j < corpora.size(); ++j) {
        const VocabOverlap o = vocab_overlap(vocabs[i], vocabs[j]);
        overlap += detail::csv_escape(names[i]) + "," + detail::csv_escape(names[j]) + "," +
                   std::to_string(o.size_a) + "," + std::to_string(o.size_b) + "," + std::to_string(o.shared) +
                   "," + std::to_string(o.only_a) + "," + std::to_string(o.only_b) + "\n";
        for (const RelationGap& g : compare_distributions(dists[i], dists[j])) {
          gaps += detail::csv_escape(names[i]) + "," + detail::csv_escape(names[j]) + "," +
                  detail::csv_escape(g.label) + "," + format_fixed(g.prop_a, 6) + "," +
                  format_fixed(g.prop_b, 6) + "," + format_fixed(g.gap, 6) + "\n";
        }
      }
    }
    written.push_back(out_dir / "overlap.csv");
    write_file(written.back(), overlap);
    written.push_back(out_dir / "relation_gaps.csv");
    write_file(written.back(), gaps);
  }
  return written;
}

}  // namespace dparse
