#pragma once

#include <map>
#include <string>
#include <vector>

#include "dparse/parser.hpp"

namespace dparse {

struct EvalCounts {
  std::int64_t pred = 0;
  std::int64_t gold = 0;
  std::int64_t correct_link = 0;
  std::int64_t correct_link_rel = 0;
  // denominators for the relation metric; equal to pred/gold unless ROOT
  // links are excluded from Link+Rel
  std::int64_t pred_rel = 0;
  std::int64_t gold_rel = 0;
};

struct DialogueEval {
  std::string id;
  EvalCounts counts;
  double link_f1 = 0;
  double link_rel_f1 = 0;
};

struct EvalReport {
  double link_f1 = 0;
  double link_rel_f1 = 0;
  EvalCounts counts;
  std::vector<DialogueEval> per_dialogue;
};

inline double f1_from(std::int64_t correct, std::int64_t pred, std::int64_t gold) {
  if (pred + gold == 0) return 0.0;
  return 2.0 * static_cast<double>(correct) / static_cast<double>(pred + gold);
}

// Micro-averaged F1 over pooled counts: link triples (dialogue, dep, head)
// and link+rel quadruples adding the label. ROOT-linked pairs match on the
// ROOT label by default; exclude_root_from_rel drops them from the relation
// metric's counts instead.
inline EvalReport micro_f1(const std::vector<PredictedDialogue>& preds, const Corpus& gold,
                           bool exclude_root_from_rel = false) {
  std::map<std::string, const PredictedDialogue*> by_id;
  for (const PredictedDialogue& p : preds) {
    require(by_id.emplace(p.id, &p).second, "micro_f1: duplicate prediction for dialogue '" + p.id + "'");
  }
  require(by_id.size() == gold.dialogues.size(),
          "micro_f1: id mismatch (" + std::to_string(preds.size()) + " predictions vs " +
              std::to_string(gold.dialogues.size()) + " gold dialogues)");

  EvalReport report;
  for (const Dialogue& d : gold.dialogues) {
    require(d.augmented, "micro_f1: gold dialogue '" + d.id + "' is not augmented");
    const auto it = by_id.find(d.id);
    require(it != by_id.end(), "micro_f1: id mismatch (no prediction for dialogue '" + d.id + "')");
    const PredictedDialogue& pd = *it->second;

    const int n1 = static_cast<int>(d.edus.size());
    std::vector<const Link*> gold_by_dep(static_cast<std::size_t>(n1), nullptr);
    for (const Link& l : d.links) {
      require(l.dep >= 1 && l.dep < n1, "micro_f1: gold link out of range in dialogue '" + d.id + "'");
      gold_by_dep[static_cast<std::size_t>(l.dep)] = &l;
    }
    std::vector<const PredLink*> pred_by_dep(static_cast<std::size_t>(n1), nullptr);
    for (const PredLink& l : pd.links) {
      require(l.dep >= 1 && l.dep < n1,
              "micro_f1: predicted dep " + std::to_string(l.dep) + " out of range in dialogue '" + d.id + "'");
      require(!pred_by_dep[static_cast<std::size_t>(l.dep)],
              "micro_f1: duplicate prediction for EDU " + std::to_string(l.dep) + " in dialogue '" + d.id + "'");
      pred_by_dep[static_cast<std::size_t>(l.dep)] = &l;
    }

    DialogueEval de;
    de.id = d.id;
    for (int i = 1; i < n1; ++i) {
      const Link* g = gold_by_dep[static_cast<std::size_t>(i)];
      require(g != nullptr, "micro_f1: gold link missing for EDU " + std::to_string(i) + " in dialogue '" + d.id + "'");
      const PredLink* p = pred_by_dep[static_cast<std::size_t>(i)];
      require(p != nullptr,
              "micro_f1: missing prediction for EDU " + std::to_string(i) + " in dialogue '" + d.id + "'");

      de.counts.pred += 1;
      de.counts.gold += 1;
      const bool link_ok = p->head == g->head;
      if (link_ok) de.counts.correct_link += 1;
      const bool pred_in_rel = !(exclude_root_from_rel && p->head == 0);
      const bool gold_in_rel = !(exclude_root_from_rel && g->head == 0);
      if (pred_in_rel) de.counts.pred_rel += 1;
      if (gold_in_rel) de.counts.gold_rel += 1;
      if (link_ok && pred_in_rel && gold_in_rel && p->relation == g->relation)
        de.counts.correct_link_rel += 1;
    }
    de.link_f1 = f1_from(de.counts.correct_link, de.counts.pred, de.counts.gold);
    de.link_rel_f1 = f1_from(de.counts.correct_link_rel, de.counts.pred_rel, de.counts.gold_rel);

    report.counts.pred += de.counts.pred;
    report.counts.gold += de.counts.gold;
    report.counts.correct_link += de.counts.correct_link;
    report.counts.correct_link_rel += de.counts.correct_link_rel;
    report.counts.pred_rel += de.counts.pred_rel;
    report.counts.gold_rel += de.counts.gold_rel;
    report.per_dialogue.push_back(std::move(de));
  }
  report.link_f1 = f1_from(report.counts.correct_link, report.counts.pred, report.counts.gold);
  report.link_rel_f1 = f1_from(report.counts.correct_link_rel, report.counts.pred_rel, report.counts.gold_rel);
  return report;
}

inline nlohmann::ordered_json report_json(const EvalReport& r, bool per_dialogue = false) {
  nlohmann::ordered_json j;
  j["link_f1"] = r.link_f1;
  j["link_rel_f1"] = r.link_rel_f1;
  j["counts"] = {{"pred", r.counts.pred},
                 {"gold", r.counts.gold},
                 {"correct_link", r.counts.correct_link},
                 {"correct_link_rel", r.counts.correct_link_rel}};
  if (per_dialogue) {
    auto& rows = j["per_dialogue"] = nlohmann::ordered_json::array();
    for (const DialogueEval& de : r.per_dialogue) {
      rows.push_back({{"id", de.id},
                      {"pred", de.counts.pred},
                      {"gold", de.counts.gold},
                      {"correct_link", de.counts.correct_link},
                      {"correct_link_rel", de.counts.correct_link_rel},
                      {"link_f1", de.link_f1},
                      {"link_rel_f1", de.link_rel_f1}});
    }
  }
  return j;
}

// Scores a prediction file against augmented gold. Gold without the root
// sentinel is rejected unless augment_gold rewrites source coordinates first.
inline EvalReport score_file(const std::filesystem::path& pred_path, const std::filesystem::path& gold_path,
                             bool exclude_root_from_rel = false, bool augment_gold = false) {
  Corpus gold = load_corpus(gold_path);
  gold = augment_gold ? augment_corpus(gold) : adopt_augmented(gold);
  return micro_f1(load_predictions(pred_path), gold, exclude_root_from_rel);
}

}  // namespace dparse
