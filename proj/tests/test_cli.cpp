// End-to-end CLI contract: exit codes, artifact files, run manifests, and
// byte-level determinism, exercised through real subprocesses.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "dparse/dparse.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace dparse;

namespace {

struct RunOutput {
  int exit_code = -1;
  std::string text;  // stdout + stderr interleaved
};

RunOutput run_cli(const std::string& args) {
  const std::string cmd = std::string(DPARSE_CLI_PATH) + " " + args + " 2>&1";
  RunOutput out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return out;
  std::array<char, 4096> buf;
  while (std::size_t n = fread(buf.data(), 1, buf.size(), pipe)) out.text.append(buf.data(), n);
  const int status = pclose(pipe);
  out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

fs::path fresh_dir(const std::string& leaf) {
  const fs::path p = fs::temp_directory_path() / "dparse_cli_test" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// small-footprint model dimensions shared by the pipeline tests
const std::string kTinyDims = " --d-model 16 --layers 1 --heads 2 --d-ff 32 --gru-hidden 8";

}  // namespace

TEST(Cli, HelpExitsZero) {
  EXPECT_EQ(run_cli("--help").exit_code, 0);
  const auto sub = run_cli("synth --help");
  EXPECT_EQ(sub.exit_code, 0);
  EXPECT_NE(sub.text.find("--relations"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli("").exit_code, 2);                    // missing subcommand
  EXPECT_EQ(run_cli("frobnicate").exit_code, 2);          // unknown subcommand
  EXPECT_EQ(run_cli("synth --no-such-flag").exit_code, 2);
  EXPECT_EQ(run_cli("eval --pred x.jsonl").exit_code, 2);  // missing required --gold
}

TEST(Cli, RuntimeErrorsExitOne) {
  const auto dir = fresh_dir("rt");
  const auto r = run_cli("stats --corpus " + q(dir / "missing.jsonl") + " --out-dir " + q(dir));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.text.find("error:"), std::string::npos);
}

TEST(Cli, SynthIsDeterministicAndWritesManifest) {
  const auto d1 = fresh_dir("synth1");
  const auto d2 = fresh_dir("synth2");
  const std::string flags =
      " --n 10 --relations Comment,Result --auto-domain-lex 6 --seed 42 --quiet";
  ASSERT_EQ(run_cli("synth --out-dir " + q(d1) + flags).exit_code, 0);
  ASSERT_EQ(run_cli("synth --out-dir " + q(d2) + flags).exit_code, 0);
  EXPECT_EQ(read_file(d1 / "synth.jsonl"), read_file(d2 / "synth.jsonl"));

  // a different seed produces a different corpus
  const auto d3 = fresh_dir("synth3");
  ASSERT_EQ(run_cli("synth --out-dir " + q(d3) +
                    " --n 10 --relations Comment,Result --auto-domain-lex 6 --seed 43 --quiet")
                .exit_code,
            0);
  EXPECT_NE(read_file(d1 / "synth.jsonl"), read_file(d3 / "synth.jsonl"));

  const auto manifest = nlohmann::json::parse(read_file(d1 / "manifest.json"));
  EXPECT_EQ(manifest.at("command"), "synth");
  EXPECT_EQ(manifest.at("seed").get<std::uint64_t>(), 42u);
  EXPECT_TRUE(manifest.at("inputs").empty());  // synth reads nothing
  const auto& argv = manifest.at("argv");
  EXPECT_NE(std::find(argv.begin(), argv.end(), "--n"), argv.end());
  EXPECT_EQ(manifest.dump().find("time"), std::string::npos);  // no timestamps anywhere

  // the corpus loads back and validates
  const Corpus c = load_corpus(d1 / "synth.jsonl");
  EXPECT_EQ(c.dialogues.size(), 10u);
  for (const Dialogue& d : c.dialogues) EXPECT_TRUE(validate(augment_root(d)).empty());
}

TEST(Cli, QuietSilencesProgress) {
  const auto dir = fresh_dir("quiet");
  const auto loud = run_cli("synth --out-dir " + q(dir) + " --n 4 --relations Comment --seed 1");
  EXPECT_EQ(loud.exit_code, 0);
  EXPECT_FALSE(loud.text.empty());
  const auto quiet = run_cli("synth --out-dir " + q(dir) + " --n 4 --relations Comment --seed 1 --quiet");
  EXPECT_EQ(quiet.exit_code, 0);
  EXPECT_TRUE(quiet.text.empty()) << quiet.text;
}

TEST(Cli, StatsAndVocabPipeline) {
  const auto dir = fresh_dir("statsvocab");
  ASSERT_EQ(run_cli("synth --out-dir " + q(dir) + " --out " + q(dir / "a.jsonl") +
                    " --n 12 --name alpha --relations Comment,Result --auto-domain-lex 8 --seed 1 --quiet")
                .exit_code,
            0);
  ASSERT_EQ(run_cli("synth --out-dir " + q(dir) + " --out " + q(dir / "b.jsonl") +
                    " --n 12 --name beta --relations Comment,Result --auto-domain-lex 8 --seed 2 --quiet")
                .exit_code,
            0);

  const auto stats_dir = fresh_dir("statsvocab/stats");
  ASSERT_EQ(run_cli("stats --corpus " + q(dir / "a.jsonl") + " --corpus " + q(dir / "b.jsonl") +
                    " --out-dir " + q(stats_dir) + " --quiet")
                .exit_code,
            0);
  for (const char* f : {"stats.csv", "relations.csv", "relations.svg", "overlap.csv",
                        "relation_gaps.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(stats_dir / f)) << f;
  const auto manifest = nlohmann::json::parse(read_file(stats_dir / "manifest.json"));
  EXPECT_EQ(manifest.at("inputs").size(), 2u);  // both corpora digested

  const auto vocab_dir = fresh_dir("statsvocab/vocab");
  ASSERT_EQ(run_cli("vocab build --corpus " + q(dir / "a.jsonl") + " --corpus " + q(dir / "b.jsonl") +
                    " --out-dir " + q(vocab_dir) + " --quiet")
                .exit_code,
            0);
  const Vocabulary v = load_vocab(vocab_dir / "vocab.json");
  EXPECT_GT(v.size(), Vocabulary::kNumSpecials);

  // a huge threshold keeps only tokens present on both sides: one-domain words go
  const auto refine_dir = fresh_dir("statsvocab/refine");
  ASSERT_EQ(run_cli("vocab refine --corpus-a " + q(dir / "a.jsonl") + " --corpus-b " + q(dir / "b.jsonl") +
                    " --threshold 100000 --out-dir " + q(refine_dir) + " --quiet")
                .exit_code,
            0);
  const Vocabulary refined = load_vocab(refine_dir / "vocab.json");
  EXPECT_LT(refined.size(), v.size());
  EXPECT_EQ(refined.id("alpha_w0"), Vocabulary::kUnk);  // one-sided token dropped
  EXPECT_NE(refined.id("cue_root"), Vocabulary::kUnk);  // cues live in both corpora

  // overlap prints its JSON report to stdout
  const auto overlap_dir = fresh_dir("statsvocab/overlap");
  const auto ov = run_cli("vocab overlap --corpus-a " + q(dir / "a.jsonl") + " --corpus-b " +
                          q(dir / "b.jsonl") + " --out-dir " + q(overlap_dir));
  ASSERT_EQ(ov.exit_code, 0);
  EXPECT_TRUE(fs::exists(overlap_dir / "manifest.json"));
  const auto j = nlohmann::json::parse(ov.text);
  EXPECT_GT(j.at("shared").get<std::int64_t>(), 0);  // cue tokens are shared by design
  EXPECT_GT(j.at("only_a").get<std::int64_t>(), 0);  // alpha_w* words are not
  EXPECT_EQ(j.at("size_a").get<std::int64_t>(),
            j.at("shared").get<std::int64_t>() + j.at("only_a").get<std::int64_t>());
}

TEST(Cli, TrainParseEvalPipeline) {
  const auto dir = fresh_dir("pipeline");
  ASSERT_EQ(run_cli("synth --out-dir " + q(dir) + " --out " + q(dir / "corpus.jsonl") +
                    " --n 14 --relations Comment,Result --auto-domain-lex 6 --seed 5 --quiet")
                .exit_code,
            0);
  ASSERT_EQ(run_cli("vocab build --corpus " + q(dir / "corpus.jsonl") + " --out " + q(dir / "vocab.json") +
                    " --out-dir " + q(dir) + " --quiet")
                .exit_code,
            0);

  const auto t1 = fresh_dir("pipeline/t1");
  const std::string train_cmd = "train --train " + q(dir / "corpus.jsonl") + " --vocab " +
                                q(dir / "vocab.json") + " --epochs 1 --dev-fraction 0.25 --seed 3" +
                                kTinyDims + " --quiet --out-dir ";
  ASSERT_EQ(run_cli(train_cmd + q(t1)).exit_code, 0);
  for (const char* f : {"parser.ckpt", "parser.ckpt.meta.json", "train_log.csv", "train_log.json",
                        "manifest.json"})
    EXPECT_TRUE(fs::exists(t1 / f)) << f;

  const std::string log_csv = read_file(t1 / "train_log.csv");
  EXPECT_EQ(log_csv.substr(0, log_csv.find('\n')), "epoch,train_loss,dev_link_f1,dev_link_rel_f1");
  const auto meta = nlohmann::json::parse(read_file(t1 / "parser.ckpt.meta.json"));
  EXPECT_EQ(meta.at("pooling"), "mean");
  EXPECT_EQ(meta.at("relation_inventory").size(), 2u);

  // identical rerun: byte-identical checkpoint and log
  const auto t2 = fresh_dir("pipeline/t2");
  ASSERT_EQ(run_cli(train_cmd + q(t2)).exit_code, 0);
  EXPECT_EQ(read_file(t1 / "parser.ckpt"), read_file(t2 / "parser.ckpt"));
  EXPECT_EQ(read_file(t1 / "train_log.csv"), read_file(t2 / "train_log.csv"));

  const auto p1 = fresh_dir("pipeline/p1");
  const std::string parse_cmd = "parse --model " + q(t1 / "parser.ckpt") + " --input " +
                                q(dir / "corpus.jsonl") + " --vocab " + q(dir / "vocab.json") +
                                " --quiet --out-dir ";
  ASSERT_EQ(run_cli(parse_cmd + q(p1)).exit_code, 0);
  ASSERT_TRUE(fs::exists(p1 / "predictions.jsonl"));
  const auto preds = load_predictions(p1 / "predictions.jsonl");
  EXPECT_EQ(preds.size(), 14u);

  // multithreaded inference must not change a single byte
  const auto p2 = fresh_dir("pipeline/p2");
  ASSERT_EQ(run_cli(parse_cmd + q(p2) + " --jobs 3").exit_code, 0);
  EXPECT_EQ(read_file(p1 / "predictions.jsonl"), read_file(p2 / "predictions.jsonl"));

  const auto e1 = fresh_dir("pipeline/e1");
  const auto ev = run_cli("eval --pred " + q(p1 / "predictions.jsonl") + " --gold " +
                          q(dir / "corpus.jsonl") + " --out-dir " + q(e1));
  ASSERT_EQ(ev.exit_code, 0);
  ASSERT_TRUE(fs::exists(e1 / "eval.json"));
  const auto rep = nlohmann::json::parse(read_file(e1 / "eval.json"));
  const double link = rep.at("link_f1").get<double>();
  const double rel = rep.at("link_rel_f1").get<double>();
  EXPECT_GE(link, 0.0);
  EXPECT_LE(link, 1.0);
  EXPECT_LE(rel, link + 1e-12);
  // eval prints the two headline numbers
  EXPECT_NE(ev.text.find("link_f1"), std::string::npos);
}

TEST(Cli, PretrainFeedsTrain) {
  const auto dir = fresh_dir("pretrain");
  ASSERT_EQ(run_cli("synth --out-dir " + q(dir) + " --out " + q(dir / "c.jsonl") +
                    " --n 10 --relations Comment,Result --auto-domain-lex 6 --seed 8 --quiet")
                .exit_code,
            0);
  ASSERT_EQ(run_cli("vocab build --corpus " + q(dir / "c.jsonl") + " --out " + q(dir / "vocab.json") +
                    " --out-dir " + q(dir) + " --quiet")
                .exit_code,
            0);

  const auto pre = fresh_dir("pretrain/pre");
  ASSERT_EQ(run_cli("pretrain --corpus " + q(dir / "c.jsonl") + " --vocab " + q(dir / "vocab.json") +
                    " --epochs 1" + kTinyDims + " --seed 2 --quiet --out-dir " + q(pre))
                .exit_code,
            0);
  ASSERT_TRUE(fs::exists(pre / "backbone.ckpt"));
  const auto log = nlohmann::json::parse(read_file(pre / "pretrain_log.json"));
  EXPECT_EQ(log.at("eval_nll").size(), 2u);  // before + after the single epoch

  const auto warm = fresh_dir("pretrain/warm");
  ASSERT_EQ(run_cli("train --train " + q(dir / "c.jsonl") + " --vocab " + q(dir / "vocab.json") +
                    " --backbone " + q(pre / "backbone.ckpt") + " --epochs 1 --dev-fraction 0.25" +
                    kTinyDims + " --seed 3 --quiet --out-dir " + q(warm))
                .exit_code,
            0);
  EXPECT_TRUE(fs::exists(warm / "parser.ckpt"));
  const auto manifest = nlohmann::json::parse(read_file(warm / "manifest.json"));
  EXPECT_EQ(manifest.at("inputs").size(), 3u);  // train corpus, vocab, backbone
}

TEST(Cli, MatrixWritesTheGrid) {
  const auto dir = fresh_dir("matrix");
  for (const auto& [name, seed] : std::vector<std::pair<std::string, int>>{{"alpha", 1}, {"beta", 2}}) {
    for (const auto& [split, n, split_seed] :
         std::vector<std::tuple<std::string, int, int>>{{"train", 10, 0}, {"test", 4, 100}}) {
      ASSERT_EQ(run_cli("synth --out-dir " + q(dir) + " --out " + q(dir / (name + "_" + split + ".jsonl")) +
                        " --n " + std::to_string(n) + " --name " + name + "-" + split +
                        " --relations Comment,Result --auto-domain-lex 6 --seed " +
                        std::to_string(seed + split_seed) + " --quiet")
                    .exit_code,
                0);
    }
  }

  const auto out = fresh_dir("matrix/out");
  const auto r = run_cli(
      "matrix --corpus alpha=" + (dir / "alpha_train.jsonl").string() + ":" +
      (dir / "alpha_test.jsonl").string() + " --corpus beta=" + (dir / "beta_train.jsonl").string() + ":" +
      (dir / "beta_test.jsonl").string() + " --seeds 1 --epochs 1 --pretrain-epochs 1 --no-pretrain" +
      " --no-refine --dev-fraction 0.25" + kTinyDims + " --quiet --out-dir " + q(out));
  ASSERT_EQ(r.exit_code, 0) << r.text;
  ASSERT_TRUE(fs::exists(out / "matrix.csv"));
  ASSERT_TRUE(fs::exists(out / "matrix.md"));

  const std::string csv = read_file(out / "matrix.csv");
  // 3 sources (alpha, beta, joint) x 2 variants (base, +backbone) x 2 test cells
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 2 * 2);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "source,variant,test,link_f1,link_rel_f1,link_vs_base_pct,link_rel_vs_base_pct");
  EXPECT_NE(csv.find("joint"), std::string::npos);
  EXPECT_NE(csv.find("+backbone"), std::string::npos);
  EXPECT_EQ(csv.find("+pretrain"), std::string::npos);  // disabled ablations stay out
  EXPECT_EQ(csv.find("+refine"), std::string::npos);
  const std::string md = read_file(out / "matrix.md");
  EXPECT_NE(md.find("### Train on joint"), std::string::npos);
  EXPECT_NE(md.find("| base |"), std::string::npos);

  // backbone checkpoints cached on disk per source scope
  EXPECT_TRUE(fs::exists(out / "backbones"));
}

TEST(Cli, EvalAcceptsAugmentedGold) {
  const auto dir = fresh_dir("evalaug");
  SynthConfig cfg;
  cfg.n_dialogues = 6;
  cfg.relation_inventory = {"Comment"};
  const Corpus raw = generate_synthetic(cfg, 3);
  const Corpus aug = augment_corpus(raw);
  save_corpus(dir / "gold_aug.jsonl", aug);

  // perfect predictions from the gold structure itself
  std::vector<PredictedDialogue> preds;
  for (const Dialogue& d : aug.dialogues) {
    PredictedDialogue p;
    p.id = d.id;
    for (const Link& l : d.links) p.links.push_back(PredLink{l.dep, l.head, l.relation, 1.0});
    preds.push_back(std::move(p));
  }
  save_predictions(dir / "pred.jsonl", preds);

  const auto out = fresh_dir("evalaug/out");
  const auto r = run_cli("eval --pred " + q(dir / "pred.jsonl") + " --gold " + q(dir / "gold_aug.jsonl") +
                         " --gold-augmented --per-dialogue --out-dir " + q(out));
  ASSERT_EQ(r.exit_code, 0) << r.text;
  const auto rep = nlohmann::json::parse(read_file(out / "eval.json"));
  EXPECT_DOUBLE_EQ(rep.at("link_f1").get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(rep.at("link_rel_f1").get<double>(), 1.0);
  EXPECT_EQ(rep.at("per_dialogue").size(), 6u);
}
