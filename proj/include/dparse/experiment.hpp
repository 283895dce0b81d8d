#pragma once

#include <map>
#include <set>

#include "dparse/analysis.hpp"
#include "dparse/train.hpp"

namespace dparse {

struct NamedCorpus {
  std::string name;
  Corpus train;
  Corpus test;
};

struct Ablations {
  bool backbone = true;
  bool pretrain = true;
  bool refine = true;
};

struct MatrixConfig {
  nn::EncoderConfig enc;
  TrainConfig train;
  PretrainConfig pretrain;
  Ablations ablations;
  int n_seeds = 1;       // seeds train.seed .. train.seed + n_seeds - 1
  bool cumulative = true;  // rows stack (+backbone → +pretrain → +refine); off = each alone
  std::int64_t refine_min_freq = 20;
};

struct MatrixCell {
  std::string test;
  double link_f1 = 0;      // mean over seeds, in [0,1]
  double link_rel_f1 = 0;
};

struct MatrixRow {
  std::string source;
  std::string variant;
  std::vector<MatrixCell> cells;

  const MatrixCell* cell(const std::string& test) const {
    for (const MatrixCell& c : cells)
      if (c.test == test) return &c;
    return nullptr;
  }
};

// "[2.5% ↑]": relative change of value over the base row's score
inline std::string increase_bracket(double base, double value) {
  if (base <= 0) return "[n/a]";
  const double rel = (value - base) / base * 100.0;
  const char* arrow = rel >= 0 ? "\xE2\x86\x91" : "\xE2\x86\x93";  // ↑ / ↓
  return "[" + format_fixed(std::abs(rel), 1) + "% " + arrow + "]";
}

struct MatrixResult {
  std::vector<std::string> corpus_names;  // cell order
  std::vector<std::string> variants;      // row order within each source
  std::vector<MatrixRow> rows;            // grouped by source, sources then "joint"

  const MatrixRow* row(const std::string& source, const std::string& variant) const {
    for (const MatrixRow& r : rows)
      if (r.source == source && r.variant == variant) return &r;
    return nullptr;
  }

  std::string to_csv() const {
    std::string out = "source,variant,test,link_f1,link_rel_f1,link_vs_base_pct,link_rel_vs_base_pct\n";
    for (const MatrixRow& r : rows) {
      const MatrixRow* base = row(r.source, "base");
      for (const MatrixCell& c : r.cells) {
        out += detail::csv_escape(r.source) + "," + detail::csv_escape(r.variant) + "," +
               detail::csv_escape(c.test) + "," +
               format_fixed(c.link_f1, 6) + "," + format_fixed(c.link_rel_f1, 6);
        if (r.variant == "base" || base == nullptr) {
          out += ",,";
        } else {
          const MatrixCell* b = base->cell(c.test);
          auto pct = [](double bv, double v) {
            return bv > 0 ? format_fixed((v - bv) / bv * 100.0, 1) : std::string();
          };
          out += "," + pct(b->link_f1, c.link_f1) + "," + pct(b->link_rel_f1, c.link_rel_f1);
        }
        out += "\n";
      }
    }
    return out;
  }

  std::string to_markdown() const {
    std::string out;
    std::set<std::string> seen;
    for (const MatrixRow& anchor : rows) {
      if (!seen.insert(anchor.source).second) continue;
      out += "### Train on " + anchor.source + "\n\n| variant |";
      for (const std::string& t : corpus_names) out += " " + t + " Link | " + t + " Link+Rel |";
      out += "\n|---|";
      for (std::size_t i = 0; i < corpus_names.size(); ++i) out += "---|---|";
      out += "\n";
      const MatrixRow* base = row(anchor.source, "base");
      for (const std::string& variant : variants) {
        const MatrixRow* r = row(anchor.source, variant);
        if (!r) continue;
        out += "| " + variant + " |";
        for (const std::string& t : corpus_names) {
          const MatrixCell* c = r->cell(t);
          const MatrixCell* b = base->cell(t);
          out += " " + format_fixed(c->link_f1 * 100.0, 1);
          if (variant != "base") out += " " + increase_bracket(b->link_f1, c->link_f1);
          out += " | " + format_fixed(c->link_rel_f1 * 100.0, 1);
          if (variant != "base") out += " " + increase_bracket(b->link_rel_f1, c->link_rel_f1);
          out += " |";
        }
        out += "\n";
      }
      out += "\n";
    }
    return out;
  }
};

// Cross-domain ablation grid: train on each corpus and on the joint data,
// under base / +backbone (own-data MLM) / +pretrain (joint MLM) / +refine
// (refined vocabulary), testing every model on every corpus's test split.
// MLM backbones are trained once per (data scope, vocabulary, seed) and
// reused across rows via on-disk checkpoints under out_dir/backbones.
template <class Real>
MatrixResult run_experiment_matrix(const std::vector<NamedCorpus>& corpora, const MatrixConfig& cfg,
                                   const std::filesystem::path& out_dir) {
  require(corpora.size() >= 2, "run_experiment_matrix: need at least two named corpora");
  require(cfg.n_seeds >= 1, "run_experiment_matrix: n_seeds must be >= 1");
  std::set<std::string> names;
  for (const NamedCorpus& c : corpora) {
    require(!c.name.empty() && c.name != "joint",
            "run_experiment_matrix: corpus name '" + c.name + "' is empty or reserved");
    require(names.insert(c.name).second, "run_experiment_matrix: duplicate corpus name " + c.name);
    require(!c.train.dialogues.empty(), "run_experiment_matrix: empty train split for corpus '" + c.name + "'");
    require(!c.test.dialogues.empty(), "run_experiment_matrix: missing test split for corpus '" + c.name + "'");
  }
  require(!cfg.ablations.refine || corpora.size() == 2,
          "run_experiment_matrix: the refine ablation requires exactly two corpora");

  // one shared relation inventory so label ids line up across domains
  std::set<std::string> inv_set;
  for (const NamedCorpus& c : corpora) {
    for (const std::string& r : c.train.relation_inventory) inv_set.insert(r);
    for (const std::string& r : c.test.relation_inventory) inv_set.insert(r);
  }
  const std::vector<std::string> inventory(inv_set.begin(), inv_set.end());

  std::vector<Corpus> trains, tests;
  Corpus joint_train;
  joint_train.name = "joint";
  joint_train.relation_inventory = inventory;
  for (const NamedCorpus& c : corpora) {
    Corpus tr = augment_corpus(c.train);
    Corpus te = augment_corpus(c.test);
    tr.relation_inventory = te.relation_inventory = inventory;
    for (const Dialogue& d : tr.dialogues) joint_train.dialogues.push_back(d);
    trains.push_back(std::move(tr));
    tests.push_back(std::move(te));
  }

  const Vocabulary vocab_base = build_vocab(trains, 1);
  const Vocabulary vocab_refined =
      cfg.ablations.refine
          ? refine_vocab(corpus_token_counts(trains[0]), corpus_token_counts(trains[1]), cfg.refine_min_freq)
          : vocab_base;

  // backbone cache: (data scope, vocabulary kind, seed) -> checkpoint path
  std::map<std::string, std::filesystem::path> cache;
  auto backbone_for = [&](const std::string& scope, bool refined, std::uint64_t seed) {
    const std::string key =
        scope + "|" + (refined ? "refined" : "base") + "|" + std::to_string(seed);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    std::vector<Corpus> data;
    if (scope == "joint") {
      data = trains;
    } else {
      for (std::size_t i = 0; i < corpora.size(); ++i)
        if (corpora[i].name == scope) data.push_back(trains[i]);
    }
    PretrainConfig pc = cfg.pretrain;
    pc.seed = seed;
    auto pr = pretrain_mlm<Real>(data, refined ? vocab_refined : vocab_base, pc, cfg.enc);
    const std::filesystem::path path =
        out_dir / "backbones" /
        (sanitize_label(scope) + (refined ? "_refined" : "_base") + "_seed" + std::to_string(seed) + ".ckpt");
    nn::save_checkpoint(path, pr.params, pr.enc);
    cache.emplace(key, path);
    return path;
  };

  // each row's ingredients: vocabulary + MLM data scope ("" = no backbone)
  struct Recipe {
    std::string variant;
    std::string scope;
    bool refined = false;
  };
  std::vector<Recipe> recipes{{"base", "", false}};
  std::string running_scope;
  if (cfg.ablations.backbone) {
    running_scope = "self";
    recipes.push_back({"+backbone", "self", false});
  }
  if (cfg.ablations.pretrain) {
    if (cfg.cumulative) running_scope = "joint";
    recipes.push_back({"+pretrain", "joint", false});
  }
  if (cfg.ablations.refine)
    recipes.push_back({"+refine", cfg.cumulative ? running_scope : "", true});

  MatrixResult result;
  for (const NamedCorpus& c : corpora) result.corpus_names.push_back(c.name);
  for (const Recipe& r : recipes) result.variants.push_back(r.variant);

  std::vector<std::string> sources = result.corpus_names;
  sources.push_back("joint");
  for (const std::string& source : sources) {
    const Corpus* src_train = &joint_train;
    for (std::size_t i = 0; i < corpora.size(); ++i)
      if (corpora[i].name == source) src_train = &trains[i];
    for (const Recipe& recipe : recipes) {
      std::vector<double> link_sum(tests.size(), 0.0), link_rel_sum(tests.size(), 0.0);
      for (int k = 0; k < cfg.n_seeds; ++k) {
        const std::uint64_t seed = cfg.train.seed + static_cast<std::uint64_t>(k);
        TrainConfig tc = cfg.train;
        tc.seed = seed;
        tc.refinement_enabled = recipe.refined;
        if (!recipe.scope.empty()) {
          const std::string scope = recipe.scope == "self" ? source : recipe.scope;
          tc.backbone_checkpoint = backbone_for(scope, recipe.refined, seed);
        }
        const Vocabulary& vocab = recipe.refined ? vocab_refined : vocab_base;
        auto [tr, dv] = split_corpus(*src_train, tc.dev_fraction, seed);
        auto trained = train_parser<Real>(tr, dv, vocab, tc, cfg.enc);
        for (std::size_t t = 0; t < tests.size(); ++t) {
          const EvalReport rep = evaluate_parser(tests[t], vocab, trained.params, trained.enc, tc.pooling);
          link_sum[t] += rep.link_f1;
          link_rel_sum[t] += rep.link_rel_f1;
        }
      }
      MatrixRow row;
      row.source = source;
      row.variant = recipe.variant;
      for (std::size_t t = 0; t < tests.size(); ++t) {
        MatrixCell cell;
        cell.test = result.corpus_names[t];
        cell.link_f1 = link_sum[t] / cfg.n_seeds;
        cell.link_rel_f1 = link_rel_sum[t] / cfg.n_seeds;
        row.cells.push_back(std::move(cell));
      }
      result.rows.push_back(std::move(row));
    }
  }

  write_file(out_dir / "matrix.csv", result.to_csv());
  write_file(out_dir / "matrix.md", result.to_markdown());
  return result;
}

}  // namespace dparse
