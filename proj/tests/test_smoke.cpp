// End-to-end smoke: synth corpus → vocab → train one step → parse → eval →
// checkpoint round-trip. Exercises every module once with tiny dimensions.

#include <gtest/gtest.h>

#include <filesystem>

#include "dparse/dparse.hpp"

using namespace dparse;

namespace {

nn::EncoderConfig tiny_config() {
  nn::EncoderConfig enc;
  enc.d_model = 16;
  enc.n_layers = 1;
  enc.n_heads = 2;
  enc.d_ff = 32;
  enc.gru_hidden = 8;
  enc.max_edu_tokens = 16;
  enc.dropout_rate = 0.1;
  return enc;
}

Corpus tiny_corpus(int n_dialogues, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.name = "smoke";
  cfg.n_dialogues = n_dialogues;
  cfg.min_edus = 2;
  cfg.max_edus = 4;
  cfg.relation_inventory = {"Comment", "QAP", "Result"};
  cfg.domain_lexicon = {"alpha", "beta", "gamma", "delta"};
  cfg.shared_lexicon = {"one", "two"};
  return generate_synthetic(cfg, seed);
}

}  // namespace

TEST(Smoke, EndToEnd) {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "dparse_smoke";
  std::filesystem::remove_all(dir);

  // corpus + vocabulary
  Corpus raw = tiny_corpus(12, 7);
  ASSERT_EQ(raw.dialogues.size(), 12u);
  save_corpus(dir / "c.jsonl", raw);
  const Corpus reloaded = load_corpus(dir / "c.jsonl");  // name comes from the path stem
  ASSERT_EQ(reloaded.dialogues, raw.dialogues);
  ASSERT_EQ(reloaded.relation_inventory, raw.relation_inventory);

  const Corpus corpus = augment_corpus(raw);
  for (const Dialogue& d : corpus.dialogues) EXPECT_TRUE(validate(d).empty());
  const Vocabulary v = build_vocab({raw}, 1);
  ASSERT_GT(v.size(), Vocabulary::kNumSpecials);
  save_vocab(dir / "v.json", v);
  ASSERT_EQ(load_vocab(dir / "v.json").size(), v.size());

  // analytics
  const auto files = analysis_report({raw}, dir / "report");
  for (const auto& f : files) EXPECT_TRUE(std::filesystem::exists(f));

  // one training epoch end to end
  auto [train, dev] = split_corpus(corpus, 0.25, 3);
  TrainConfig tc;
  tc.epochs = 1;
  tc.seed = 5;
  auto trained = train_parser<float>(train, dev, v, tc, tiny_config());
  ASSERT_EQ(trained.log.rows.size(), 1u);
  EXPECT_TRUE(std::isfinite(trained.log.rows[0].train_loss));

  // checkpoint round-trip reproduces predictions bit-exactly
  nn::save_checkpoint(dir / "p.ckpt", trained.params, trained.enc);
  const nn::Checkpoint ck = nn::load_checkpoint(dir / "p.ckpt");
  auto ps2 = nn::init_params<float>(ck.config, static_cast<int>(corpus.relation_inventory.size()));
  nn::restore_params(ps2, ck);

  std::vector<PredictedDialogue> preds, preds2;
  for (const Dialogue& d : dev.dialogues) {
    preds.push_back(to_prediction(d, parse_dialogue(d, v, trained.params, trained.enc, corpus.relation_inventory)));
    preds2.push_back(to_prediction(d, parse_dialogue(d, v, ps2, ck.config, corpus.relation_inventory)));
  }
  ASSERT_EQ(serialize_predictions(preds), serialize_predictions(preds2));

  // parses are valid structures and micro_f1 accepts them
  for (std::size_t i = 0; i < dev.dialogues.size(); ++i) {
    const auto r = parse_dialogue(dev.dialogues[i], v, trained.params, trained.enc, corpus.relation_inventory);
    EXPECT_TRUE(validate(apply_parse(dev.dialogues[i], r)).empty());
  }
  const EvalReport rep = micro_f1(preds, dev);
  EXPECT_GE(rep.link_f1, 0.0);
  EXPECT_LE(rep.link_f1, 1.0);

  // MLM pretraining for one epoch
  PretrainConfig pc;
  pc.epochs = 1;
  pc.batch_edus = 8;
  auto mlm = pretrain_mlm<float>({raw}, v, pc, tiny_config());
  ASSERT_EQ(mlm.log.eval_nll.size(), 2u);
  EXPECT_TRUE(std::isfinite(mlm.log.eval_nll[0]));
}
