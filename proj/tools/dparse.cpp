// dparse: one binary for the whole pipeline
//   stats → vocab → synth/pretrain → train → parse → eval → matrix
// Every run writes <out-dir>/manifest.json (flags, seed, input digests) so
// results can be traced back to exact inputs.

#include <atomic>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "dparse/dparse.hpp"

namespace {

using Real = float;
namespace fs = std::filesystem;

struct RunContext {
  std::string subcommand;
  std::vector<std::string> argv;
  fs::path out_dir = "out";
  std::uint64_t seed = 0;
  bool quiet = false;
  std::vector<fs::path> inputs;

  void note(const fs::path& p) { inputs.push_back(p); }

  void write_manifest() const {
    nlohmann::ordered_json j;
    j["command"] = subcommand;
    j["argv"] = argv;
    j["seed"] = seed;
    auto& in = j["inputs"] = nlohmann::ordered_json::object();
    for (const fs::path& p : inputs) in[p.string()] = dparse::fnv1a64_hex(dparse::read_file(p));
    dparse::write_file(out_dir / "manifest.json", j.dump(2) + "\n");
  }

  void info(const std::string& line) const {
    if (!quiet) std::cout << line << "\n";
  }
};

void add_common(CLI::App* sub, RunContext& ctx) {
  sub->add_option("--seed", ctx.seed, "master RNG seed");
  sub->add_option("--out-dir", ctx.out_dir, "directory for outputs and the run manifest");
  sub->add_flag("--quiet", ctx.quiet, "suppress progress output");
}

void add_encoder_flags(CLI::App* sub, dparse::nn::EncoderConfig& enc) {
  sub->add_option("--d-model", enc.d_model, "token/EDU embedding width");
  sub->add_option("--layers", enc.n_layers, "Transformer layers");
  sub->add_option("--heads", enc.n_heads, "attention heads");
  sub->add_option("--d-ff", enc.d_ff, "feed-forward width");
  sub->add_option("--gru-hidden", enc.gru_hidden, "BiGRU hidden size per direction");
  sub->add_option("--dropout", enc.dropout_rate, "dropout rate");
  sub->add_option("--max-edu-tokens", enc.max_edu_tokens, "token truncation per EDU");
}

// shared inventory so relation ids align across files
void unify_inventories(std::vector<dparse::Corpus*> cs) {
  std::set<std::string> labels;
  for (const dparse::Corpus* c : cs)
    for (const std::string& r : c->relation_inventory) labels.insert(r);
  const std::vector<std::string> inv(labels.begin(), labels.end());
  for (dparse::Corpus* c : cs) c->relation_inventory = inv;
}

dparse::Corpus load_gold(RunContext& ctx, const fs::path& path, bool already_augmented) {
  ctx.note(path);
  const dparse::Corpus c = dparse::load_corpus(path);
  return already_augmented ? dparse::adopt_augmented(c) : dparse::augment_corpus(c);
}

void write_model_meta(const fs::path& ckpt, const std::vector<std::string>& inventory,
                      dparse::Pooling pooling) {
  nlohmann::ordered_json j;
  j["pooling"] = dparse::pooling_to_string(pooling);
  j["relation_inventory"] = inventory;
  dparse::write_file(ckpt.string() + ".meta.json", j.dump(2) + "\n");
}

// ---- subcommands ----

void setup_stats(CLI::App& app, RunContext& ctx) {
  auto* sub = app.add_subcommand("stats", "corpus analytics: stats/relation CSVs and an SVG chart");
  auto paths = std::make_shared<std::vector<fs::path>>();
  sub->add_option("--corpus", *paths, "corpus JSONL file (repeatable)")->required();
  add_common(sub, ctx);
  sub->callback([&ctx, paths] {
    std::vector<dparse::Corpus> cs;
    for (const fs::path& p : *paths) {
      ctx.note(p);
      cs.push_back(dparse::load_corpus(p));
    }
    for (const fs::path& f : dparse::analysis_report(cs, ctx.out_dir)) ctx.info("wrote " + f.string());
    ctx.write_manifest();
  });
}

void setup_vocab(CLI::App& app, RunContext& ctx) {
  auto* sub = app.add_subcommand("vocab", "build, refine, or compare vocabularies");
  sub->require_subcommand(1);

  {
    auto* b = sub->add_subcommand("build", "frequency vocabulary over one or more corpora");
    auto paths = std::make_shared<std::vector<fs::path>>();
    auto min_freq = std::make_shared<std::int64_t>(1);
    auto out = std::make_shared<fs::path>();
    b->add_option("--corpus", *paths, "corpus JSONL file (repeatable)")->required();
    b->add_option("--min-freq", *min_freq, "minimum combined frequency");
    b->add_option("--out", *out, "vocabulary JSON path (default <out-dir>/vocab.json)");
    add_common(b, ctx);
    b->callback([&ctx, paths, min_freq, out] {
      std::vector<dparse::Corpus> cs;
      for (const fs::path& p : *paths) {
        ctx.note(p);
        cs.push_back(dparse::load_corpus(p));
      }
      const dparse::Vocabulary v = dparse::build_vocab(cs, *min_freq);
      const fs::path dest = out->empty() ? ctx.out_dir / "vocab.json" : *out;
      dparse::save_vocab(dest, v);
      ctx.info("wrote " + dest.string() + " (" + std::to_string(v.size()) + " entries)");
      ctx.write_manifest();
    });
  }
  {
    auto* r = sub->add_subcommand("refine", "cross-domain vocabulary refinement over two corpora");
    auto a = std::make_shared<fs::path>();
    auto b = std::make_shared<fs::path>();
    auto threshold = std::make_shared<std::int64_t>(20);
    auto out = std::make_shared<fs::path>();
    r->add_option("--corpus-a", *a, "first corpus JSONL")->required();
    r->add_option("--corpus-b", *b, "second corpus JSONL")->required();
    r->add_option("--threshold", *threshold, "combined-frequency survival threshold");
    r->add_option("--out", *out, "vocabulary JSON path (default <out-dir>/vocab.json)");
    add_common(r, ctx);
    r->callback([&ctx, a, b, threshold, out] {
      ctx.note(*a);
      ctx.note(*b);
      const dparse::Vocabulary v =
          dparse::refine_vocab(dparse::corpus_token_counts(dparse::load_corpus(*a)),
                               dparse::corpus_token_counts(dparse::load_corpus(*b)), *threshold);
      const fs::path dest = out->empty() ? ctx.out_dir / "vocab.json" : *out;
      dparse::save_vocab(dest, v);
      ctx.info("wrote " + dest.string() + " (" + std::to_string(v.size()) + " entries)");
      ctx.write_manifest();
    });
  }
  {
    auto* o = sub->add_subcommand("overlap", "token-set overlap between two corpora");
    auto a = std::make_shared<fs::path>();
    auto b = std::make_shared<fs::path>();
    o->add_option("--corpus-a", *a, "first corpus JSONL")->required();
    o->add_option("--corpus-b", *b, "second corpus JSONL")->required();
    add_common(o, ctx);
    o->callback([&ctx, a, b] {
      ctx.note(*a);
      ctx.note(*b);
      const dparse::Vocabulary va = dparse::build_vocab({dparse::load_corpus(*a)}, 1);
      const dparse::Vocabulary vb = dparse::build_vocab({dparse::load_corpus(*b)}, 1);
      const dparse::VocabOverlap ov = dparse::vocab_overlap(va, vb);
      nlohmann::ordered_json j{{"size_a", ov.size_a},
                               {"size_b", ov.size_b},
                               {"shared", ov.shared},
                               {"only_a", ov.only_a},
                               {"only_b", ov.only_b}};
      std::cout << j.dump(2) << "\n";
      ctx.write_manifest();
    });
  }
}

void setup_synth(CLI::App& app, RunContext& ctx) {
  auto* sub = app.add_subcommand("synth", "generate a cue-determined synthetic corpus");
  auto cfg = std::make_shared<dparse::SynthConfig>();
  cfg->relation_inventory = dparse::kDefaultRelations;
  auto out = std::make_shared<fs::path>();
  auto auto_domain = std::make_shared<int>(0);
  auto auto_shared = std::make_shared<int>(0);
  sub->add_option("--out", *out, "corpus JSONL path (default <out-dir>/synth.jsonl)");
  sub->add_option("--name", cfg->name, "corpus/domain name (prefixes dialogue ids)");
  sub->add_option("--n", cfg->n_dialogues, "number of dialogues");
  sub->add_option("--min-edus", cfg->min_edus, "minimum non-root EDUs per dialogue");
  sub->add_option("--max-edus", cfg->max_edus, "maximum non-root EDUs per dialogue");
  sub->add_option("--relations", cfg->relation_inventory, "relation inventory")->delimiter(',');
  sub->add_option("--domain-lex", cfg->domain_lexicon, "domain filler words")->delimiter(',');
  sub->add_option("--shared-lex", cfg->shared_lexicon, "shared filler words")->delimiter(',');
  sub->add_option("--auto-domain-lex", *auto_domain, "generate N domain words <name>_w<i>");
  sub->add_option("--auto-shared-lex", *auto_shared, "generate N shared words sw<i>");
  sub->add_option("--min-fillers", cfg->min_fillers, "minimum filler words per EDU");
  sub->add_option("--max-fillers", cfg->max_fillers, "maximum filler words per EDU");
  sub->add_option("--p-root", cfg->p_root, "chance a non-initial EDU attaches to root");
  sub->add_option("--p-offset2", cfg->p_offset2, "chance an attached EDU points 2 back");
  sub->add_option("--p-domain", cfg->p_domain_filler, "chance a filler is domain vocabulary");
  sub->add_option("--speakers", cfg->n_speakers, "speaker count");
  sub->add_flag("!--no-slice", cfg->slice_by_relation, "draw domain fillers regardless of relation");
  add_common(sub, ctx);
  sub->callback([&ctx, cfg, out, auto_domain, auto_shared] {
    for (int i = 0; i < *auto_domain; ++i) cfg->domain_lexicon.push_back(cfg->name + "_w" + std::to_string(i));
    for (int i = 0; i < *auto_shared; ++i) cfg->shared_lexicon.push_back("sw" + std::to_string(i));
    const dparse::Corpus c = dparse::generate_synthetic(*cfg, ctx.seed);
    const fs::path dest = out->empty() ? ctx.out_dir / "synth.jsonl" : *out;
    dparse::save_corpus(dest, c);
    ctx.info("wrote " + dest.string() + " (" + std::to_string(c.dialogues.size()) + " dialogues)");
    ctx.write_manifest();
  });
}

void setup_pretrain(CLI::App& app, RunContext& ctx) {
  auto* sub = app.add_subcommand("pretrain", "masked-LM pretraining of the token encoder");
  auto paths = std::make_shared<std::vector<fs::path>>();
  auto vocab_path = std::make_shared<fs::path>();
  auto out_ckpt = std::make_shared<fs::path>();
  auto cfg = std::make_shared<dparse::PretrainConfig>();
  auto enc = std::make_shared<dparse::nn::EncoderConfig>();
  sub->add_option("--corpus", *paths, "corpus JSONL file (repeatable; joint data)")->required();
  sub->add_option("--vocab", *vocab_path, "vocabulary JSON (built jointly)")->required();
  sub->add_option("--out-ckpt", *out_ckpt, "backbone checkpoint path (default <out-dir>/backbone.ckpt)");
  sub->add_option("--epochs", cfg->epochs, "pretraining epochs");
  sub->add_option("--lr", cfg->lr, "AdamW learning rate");
  sub->add_option("--mask-rate", cfg->mask_rate, "per-position masking probability");
  sub->add_option("--batch-edus", cfg->batch_edus, "EDUs per optimizer step");
  sub->add_option("--weight-decay", cfg->weight_decay, "AdamW weight decay");
  sub->add_option("--clip", cfg->grad_clip_norm, "global gradient-norm clip");
  add_encoder_flags(sub, *enc);
  add_common(sub, ctx);
  sub->callback([&ctx, paths, vocab_path, out_ckpt, cfg, enc] {
    std::vector<dparse::Corpus> cs;
    for (const fs::path& p : *paths) {
      ctx.note(p);
      cs.push_back(dparse::load_corpus(p));
    }
    ctx.note(*vocab_path);
    const dparse::Vocabulary v = dparse::load_vocab(*vocab_path);
    cfg->seed = ctx.seed;
    auto result = dparse::pretrain_mlm<Real>(cs, v, *cfg, *enc);
    const fs::path dest = out_ckpt->empty() ? ctx.out_dir / "backbone.ckpt" : *out_ckpt;
    dparse::nn::save_checkpoint(dest, result.params, result.enc);
    dparse::write_file(ctx.out_dir / "pretrain_log.json", result.log.to_json().dump(2) + "\n");
    ctx.info("wrote " + dest.string());
    ctx.info("eval NLL " + dparse::format_fixed(result.log.eval_nll.front(), 4) + " -> " +
             dparse::format_fixed(result.log.eval_nll.back(), 4));
    ctx.write_manifest();
  });
}

void setup_train(CLI::App& app, RunContext& ctx) {
  auto* sub = app.add_subcommand("train", "fine-tune the parser on a gold corpus");
  auto train_path = std::make_shared<fs::path>();
  auto dev_path = std::make_shared<fs::path>();
  auto vocab_path = std::make_shared<fs::path>();
  auto out_ckpt = std::make_shared<fs::path>();
  auto cfg = std::make_shared<dparse::TrainConfig>();
  auto enc = std::make_shared<dparse::nn::EncoderConfig>();
  auto lr = std::make_shared<double>(0);
  auto backbone = std::make_shared<fs::path>();
  auto pooling = std::make_shared<std::string>("mean");
  auto augmented = std::make_shared<bool>(false);
  sub->add_option("--train", *train_path, "training corpus JSONL")->required();
  sub->add_option("--dev", *dev_path, "dev corpus JSONL (default: split from training data)");
  sub->add_option("--dev-fraction", cfg->dev_fraction, "dev share when splitting");
  sub->add_option("--vocab", *vocab_path, "vocabulary JSON")->required();
  sub->add_option("--out-ckpt", *out_ckpt, "parser checkpoint path (default <out-dir>/parser.ckpt)");
  sub->add_option("--epochs", cfg->epochs, "training epochs");
  sub->add_option("--lr", *lr, "learning rate (default 1e-3, or 2e-5 with --backbone)");
  sub->add_option("--batch", cfg->batch_dialogues, "dialogues per optimizer step");
  sub->add_option("--clip", cfg->grad_clip_norm, "global gradient-norm clip");
  sub->add_option("--weight-decay", cfg->weight_decay, "AdamW weight decay");
  sub->add_option("--pooling", *pooling, "EDU pooling: mean | first_last_sum | first");
  sub->add_option("--backbone", *backbone, "pretrained backbone checkpoint");
  sub->add_flag("--augmented", *augmented, "inputs already carry the root sentinel");
  add_encoder_flags(sub, *enc);
  add_common(sub, ctx);
  sub->callback([&ctx, train_path, dev_path, vocab_path, out_ckpt, cfg, enc, lr, backbone, pooling,
                 augmented] {
    dparse::Corpus train = load_gold(ctx, *train_path, *augmented);
    dparse::Corpus dev;
    if (dev_path->empty()) {
      auto [tr, dv] = dparse::split_corpus(train, cfg->dev_fraction, ctx.seed);
      train = std::move(tr);
      dev = std::move(dv);
    } else {
      dev = load_gold(ctx, *dev_path, *augmented);
    }
    unify_inventories({&train, &dev});
    ctx.note(*vocab_path);
    const dparse::Vocabulary v = dparse::load_vocab(*vocab_path);
    cfg->seed = ctx.seed;
    cfg->pooling = dparse::pooling_from_string(*pooling);
    if (*lr > 0) cfg->lr = *lr;
    if (!backbone->empty()) {
      ctx.note(*backbone);
      cfg->backbone_checkpoint = *backbone;
    }
    auto result = dparse::train_parser<Real>(train, dev, v, *cfg, *enc);
    const fs::path dest = out_ckpt->empty() ? ctx.out_dir / "parser.ckpt" : *out_ckpt;
    dparse::nn::save_checkpoint(dest, result.params, result.enc);
    write_model_meta(dest, train.relation_inventory, cfg->pooling);
    dparse::write_file(ctx.out_dir / "train_log.csv", result.log.to_csv());
    dparse::write_file(ctx.out_dir / "train_log.json", result.log.to_json().dump(2) + "\n");
    ctx.info("wrote " + dest.string());
    ctx.info("best epoch " + std::to_string(result.log.best_epoch) + ": dev link F1 " +
             dparse::format_fixed(result.log.best_link_f1, 4) + ", link+rel F1 " +
             dparse::format_fixed(result.log.best_link_rel_f1, 4));
    ctx.write_manifest();
  });
}

void setup_parse(CLI::App& app, RunContext& ctx) {
  auto* sub = app.add_subcommand("parse", "predict links and relations for a corpus");
  auto model = std::make_shared<fs::path>();
  auto input = std::make_shared<fs::path>();
  auto vocab_path = std::make_shared<fs::path>();
  auto out = std::make_shared<fs::path>();
  auto pooling = std::make_shared<std::string>();
  auto inventory = std::make_shared<std::vector<std::string>>();
  auto augmented = std::make_shared<bool>(false);
  auto jobs = std::make_shared<int>(1);
  sub->add_option("--model", *model, "parser checkpoint")->required();
  sub->add_option("--input", *input, "corpus JSONL to parse")->required();
  sub->add_option("--vocab", *vocab_path, "vocabulary JSON used at training time")->required();
  sub->add_option("--out", *out, "predictions JSONL path (default <out-dir>/predictions.jsonl)");
  sub->add_option("--pooling", *pooling, "override pooling recorded next to the model");
  sub->add_option("--inventory", *inventory, "override relation inventory")->delimiter(',');
  sub->add_flag("--augmented", *augmented, "input already carries the root sentinel");
  sub->add_option("--jobs", *jobs, "parallel inference threads");
  add_common(sub, ctx);
  sub->callback([&ctx, model, input, vocab_path, out, pooling, inventory, augmented, jobs] {
    ctx.note(*model);
    const dparse::nn::Checkpoint ck = dparse::nn::load_checkpoint(*model);
    const dparse::nn::Tensor<float>* rel_w = ck.find("rel.w");
    dparse::require(rel_w != nullptr, "parse: checkpoint is not a parser checkpoint (no rel.w)");
    const int C = rel_w->cols();

    // model metadata: pooling + inventory, unless overridden by flags
    std::vector<std::string> inv = *inventory;
    dparse::Pooling pool = dparse::Pooling::mean;
    bool pool_set = !pooling->empty();
    if (pool_set) pool = dparse::pooling_from_string(*pooling);
    const fs::path meta_path = model->string() + ".meta.json";
    if (fs::exists(meta_path)) {
      ctx.note(meta_path);
      const auto meta = nlohmann::json::parse(dparse::read_file(meta_path));
      if (inv.empty()) inv = meta.at("relation_inventory").get<std::vector<std::string>>();
      if (!pool_set) pool = dparse::pooling_from_string(meta.at("pooling").get<std::string>());
    }
    dparse::require(!inv.empty(), "parse: no relation inventory (pass --inventory or keep the model's .meta.json)");
    dparse::require(static_cast<int>(inv.size()) == C,
                    "parse: inventory size " + std::to_string(inv.size()) +
                        " does not match checkpoint relation head width " + std::to_string(C));

    ctx.note(*vocab_path);
    const dparse::Vocabulary v = dparse::load_vocab(*vocab_path);
    auto ps = dparse::nn::init_params<Real>(ck.config, C);
    dparse::nn::restore_params(ps, ck);
    const dparse::Corpus corpus = load_gold(ctx, *input, *augmented);

    std::vector<dparse::PredictedDialogue> preds(corpus.dialogues.size());
    const int n_jobs = std::max(1, *jobs);
    std::atomic<std::size_t> cursor{0};
    auto worker = [&] {
      for (std::size_t i; (i = cursor.fetch_add(1)) < corpus.dialogues.size();) {
        const dparse::Dialogue& d = corpus.dialogues[i];
        preds[i] = dparse::to_prediction(d, dparse::parse_dialogue(d, v, ps, ck.config, inv, pool));
      }
    };
    if (n_jobs == 1) {
      worker();
    } else {
      std::vector<std::thread> threads;
      for (int t = 0; t < n_jobs; ++t) threads.emplace_back(worker);
      for (std::thread& t : threads) t.join();
    }

    const fs::path dest = out->empty() ? ctx.out_dir / "predictions.jsonl" : *out;
    dparse::save_predictions(dest, preds);
    ctx.info("wrote " + dest.string() + " (" + std::to_string(preds.size()) + " dialogues)");
    ctx.write_manifest();
  });
}

void setup_eval(CLI::App& app, RunContext& ctx) {
  auto* sub = app.add_subcommand("eval", "micro-F1 of a prediction file against gold");
  auto pred = std::make_shared<fs::path>();
  auto gold = std::make_shared<fs::path>();
  auto gold_augmented = std::make_shared<bool>(false);
  auto exclude_root = std::make_shared<bool>(false);
  auto per_dialogue = std::make_shared<bool>(false);
  sub->add_option("--pred", *pred, "predictions JSONL")->required();
  sub->add_option("--gold", *gold, "gold corpus JSONL")->required();
  sub->add_flag("--gold-augmented", *gold_augmented, "gold already carries the root sentinel");
  sub->add_flag("--exclude-root-from-rel", *exclude_root, "score Link+Rel over non-root links only");
  sub->add_flag("--per-dialogue", *per_dialogue, "include per-dialogue scores in the report");
  add_common(sub, ctx);
  sub->callback([&ctx, pred, gold, gold_augmented, exclude_root, per_dialogue] {
    ctx.note(*pred);
    ctx.note(*gold);
    const dparse::EvalReport r = dparse::score_file(*pred, *gold, *exclude_root, !*gold_augmented);
    const std::string text = dparse::report_json(r, *per_dialogue).dump(2) + "\n";
    std::cout << text;
    dparse::write_file(ctx.out_dir / "eval.json", text);
    ctx.write_manifest();
  });
}

void setup_matrix(CLI::App& app, RunContext& ctx) {
  auto* sub = app.add_subcommand("matrix", "cross-domain train/test grid with ablation rows");
  auto specs = std::make_shared<std::vector<std::string>>();
  auto cfg = std::make_shared<dparse::MatrixConfig>();
  auto lr = std::make_shared<double>(0);
  auto pooling = std::make_shared<std::string>("mean");
  auto no_backbone = std::make_shared<bool>(false);
  auto no_pretrain = std::make_shared<bool>(false);
  auto no_refine = std::make_shared<bool>(false);
  auto independent = std::make_shared<bool>(false);
  sub->add_option("--corpus", *specs, "named corpus as name=train.jsonl:test.jsonl (repeatable)")
      ->required();
  sub->add_option("--seeds", cfg->n_seeds, "number of seeds to average");
  sub->add_option("--epochs", cfg->train.epochs, "fine-tuning epochs per run");
  sub->add_option("--pretrain-epochs", cfg->pretrain.epochs, "MLM epochs per backbone");
  sub->add_option("--lr", *lr, "fine-tuning learning rate override");
  sub->add_option("--dev-fraction", cfg->train.dev_fraction, "dev share split from each train source");
  sub->add_option("--batch", cfg->train.batch_dialogues, "dialogues per optimizer step");
  sub->add_option("--pooling", *pooling, "EDU pooling: mean | first_last_sum | first");
  sub->add_option("--refine-threshold", cfg->refine_min_freq, "refinement survival threshold");
  sub->add_flag("--no-backbone", *no_backbone, "skip the +backbone row");
  sub->add_flag("--no-pretrain", *no_pretrain, "skip the +pretrain row");
  sub->add_flag("--no-refine", *no_refine, "skip the +refine row");
  sub->add_flag("--independent", *independent, "apply each ablation alone instead of stacking");
  add_encoder_flags(sub, cfg->enc);
  add_common(sub, ctx);
  sub->callback([&ctx, specs, cfg, lr, pooling, no_backbone, no_pretrain, no_refine, independent] {
    std::vector<dparse::NamedCorpus> corpora;
    for (const std::string& s : *specs) {
      const auto eq = s.find('=');
      const auto colon = s.find(':', eq == std::string::npos ? 0 : eq + 1);
      dparse::require(eq != std::string::npos && colon != std::string::npos,
                      "matrix: corpus spec must look like name=train.jsonl:test.jsonl, got: " + s);
      dparse::NamedCorpus nc;
      nc.name = s.substr(0, eq);
      const fs::path train_path = s.substr(eq + 1, colon - eq - 1);
      const fs::path test_path = s.substr(colon + 1);
      ctx.note(train_path);
      ctx.note(test_path);
      nc.train = dparse::load_corpus(train_path);
      nc.test = dparse::load_corpus(test_path);
      corpora.push_back(std::move(nc));
    }
    cfg->train.seed = ctx.seed;
    cfg->train.pooling = dparse::pooling_from_string(*pooling);
    if (*lr > 0) cfg->train.lr = *lr;
    cfg->ablations.backbone = !*no_backbone;
    cfg->ablations.pretrain = !*no_pretrain;
    cfg->ablations.refine = !*no_refine;
    cfg->cumulative = !*independent;
    const dparse::MatrixResult result = dparse::run_experiment_matrix<Real>(corpora, *cfg, ctx.out_dir);
    ctx.info("wrote " + (ctx.out_dir / "matrix.csv").string());
    ctx.info("wrote " + (ctx.out_dir / "matrix.md").string());
    if (!ctx.quiet) std::cout << result.to_markdown();
    ctx.write_manifest();
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dependency-based discourse parsing for multi-party dialogue"};
  app.require_subcommand(1);

  RunContext ctx;
  for (int i = 1; i < argc; ++i) ctx.argv.emplace_back(argv[i]);
  if (argc > 1 && argv[1][0] != '-') ctx.subcommand = argv[1];

  setup_stats(app, ctx);
  setup_vocab(app, ctx);
  setup_synth(app, ctx);
  setup_pretrain(app, ctx);
  setup_train(app, ctx);
  setup_parse(app, ctx);
  setup_eval(app, ctx);
  setup_matrix(app, ctx);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags/usage → 2; --help → 0
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
