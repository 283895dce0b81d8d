// Parser: pooled EDU encoding, link/relation scoring against hand-computed
// linear algebra, greedy decoding with its tie rule, prediction file IO.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "dparse/dparse.hpp"
#include "test_util.hpp"

using namespace dparse;
using nn::EncoderConfig;
using nn::Tensor;
using testutil::micro_config;

namespace {

// three-EDU dialogue (plus root) over a tiny fixed vocabulary
Dialogue aug_dialogue() {
  Dialogue d;
  d.id = "d0";
  d.edus = {{0, "a", "go north"}, {1, "b", "why"}, {2, "a", "to win"}};
  d.links = {{1, 0, "Comment"}, {2, 0, "Result"}};
  return augment_root(d);
}

Vocabulary vocab_for(const Dialogue& d) {
  Corpus c;
  c.dialogues.push_back(d);
  return build_vocab({c});
}

}  // namespace

TEST(Parser, PoolingStringsRoundTrip) {
  for (const char* s : {"mean", "first_last_sum", "first"})
    EXPECT_EQ(pooling_to_string(pooling_from_string(s)), s);
  EXPECT_THROW(pooling_from_string("max"), Error);
}

TEST(Parser, EncodeShapesAndMeanPoolingOracle) {
  const Dialogue d = aug_dialogue();
  const Vocabulary v = vocab_for(d);
  const EncoderConfig cfg = micro_config(v.size());
  auto ps = nn::init_params<double>(cfg, 3);

  const auto enc = encode_dialogue(d, v, ps, cfg, false);
  const int n1 = static_cast<int>(d.edus.size());
  EXPECT_EQ(enc.h_edu.shape, (std::vector<int>{n1, cfg.d_model}));
  EXPECT_EQ(enc.h_prime.shape, (std::vector<int>{n1, 2 * cfg.gru_hidden}));
  EXPECT_EQ(enc.hprime_node->value, enc.h_prime);

  // mean pooling equals the row average of the raw transformer states
  std::vector<std::vector<int>> seqs;
  for (const Edu& e : d.edus) seqs.push_back(encode_edu(e, v, cfg.max_edu_tokens));
  const auto raw = nn::transformer_encode(seqs, ps, cfg, false);  // [B, L, D]
  const int L = raw.shape[1];
  for (int b = 0; b < n1; ++b) {
    const int len = static_cast<int>(seqs[static_cast<std::size_t>(b)].size());
    for (int k = 0; k < cfg.d_model; ++k) {
      double mean = 0;
      for (int t = 0; t < len; ++t)
        mean += raw.data[static_cast<std::size_t>((b * L + t) * cfg.d_model + k)];
      mean /= len;
      EXPECT_NEAR(enc.h_edu.at(b, k), mean, 1e-9);
    }
  }

  // other poolings produce different vectors
  const auto first = encode_dialogue(d, v, ps, cfg, false, nullptr, Pooling::first);
  const auto fls = encode_dialogue(d, v, ps, cfg, false, nullptr, Pooling::first_last_sum);
  EXPECT_NE(first.h_edu, enc.h_edu);
  EXPECT_NE(fls.h_edu, enc.h_edu);
  EXPECT_NE(fls.h_edu, first.h_edu);
  // first-token pooling picks the BOS state exactly
  for (int k = 0; k < cfg.d_model; ++k)
    EXPECT_NEAR(first.h_edu.at(1, k), raw.data[static_cast<std::size_t>((1 * L + 0) * cfg.d_model + k)], 1e-9);

  Dialogue plain = aug_dialogue();
  plain.augmented = false;
  EXPECT_THROW(encode_dialogue(plain, v, ps, cfg, false), Error);
}

TEST(Parser, ScoreLinksMatchesHandLinearAlgebra) {
  const int H2 = 4;  // h' width
  Rng rng(3);
  auto hp = testutil::random_tensor({4, H2}, rng);
  const auto enc = encoded_from_values<double>(Tensor<double>::zeros({4, 2}), hp);

  nn::ParamStore<double> ps;
  ps.add("link.w", testutil::random_tensor({2 * H2, 1}, rng));
  ps.add("link.b", testutil::random_tensor({1, 1}, rng));

  const auto [scores, probs] = score_links(enc, 2, ps);
  ASSERT_EQ(scores.size(), 2u);
  ASSERT_EQ(probs.size(), 2u);
  const auto& w = ps.node("link.w")->value;
  for (int j = 0; j < 2; ++j) {
    double want = ps.node("link.b")->value.data[0];
    for (int k = 0; k < H2; ++k) want += hp.at(2, k) * w.data[static_cast<std::size_t>(k)];
    for (int k = 0; k < H2; ++k) want += hp.at(j, k) * w.data[static_cast<std::size_t>(H2 + k)];
    EXPECT_NEAR(scores[static_cast<std::size_t>(j)], want, 1e-9);
  }
  // probs are the softmax of the scores
  const double m = std::max(scores[0], scores[1]);
  const double z = std::exp(scores[0] - m) + std::exp(scores[1] - m);
  EXPECT_NEAR(probs[0], std::exp(scores[0] - m) / z, 1e-12);
  EXPECT_NEAR(probs[0] + probs[1], 1.0, 1e-12);

  EXPECT_THROW(score_links(enc, 0, ps), Error);
  EXPECT_THROW(score_links(enc, 4, ps), Error);
}

TEST(Parser, ClassifyRelationMatchesHandLinearAlgebra) {
  const int H2 = 3, C = 4;
  Rng rng(4);
  auto hp = testutil::random_tensor({3, H2}, rng);
  const auto enc = encoded_from_values<double>(Tensor<double>::zeros({3, 2}), hp);

  nn::ParamStore<double> ps;
  ps.add("rel.w", testutil::random_tensor({2 * H2, C}, rng));
  ps.add("rel.b", testutil::random_tensor({1, C}, rng));

  const auto logits = classify_relation(enc, 2, 1, ps);
  ASSERT_EQ(logits.size(), static_cast<std::size_t>(C));
  const auto& w = ps.node("rel.w")->value;
  for (int c = 0; c < C; ++c) {
    double want = ps.node("rel.b")->value.at(0, c);
    for (int k = 0; k < H2; ++k) want += hp.at(2, k) * w.at(k, c);
    for (int k = 0; k < H2; ++k) want += hp.at(1, k) * w.at(H2 + k, c);
    EXPECT_NEAR(logits[static_cast<std::size_t>(c)], want, 1e-9);
  }

  EXPECT_THROW(classify_relation(enc, 0, 0, ps), Error);
  EXPECT_THROW(classify_relation(enc, 1, 1, ps), Error);  // j must precede i
}

TEST(Parser, GraphPathAgreesWithValuePath) {
  const Dialogue d = aug_dialogue();
  const Vocabulary v = vocab_for(d);
  const EncoderConfig cfg = micro_config(v.size());
  auto ps = nn::init_params<double>(cfg, 3);
  const auto enc = encode_dialogue(d, v, ps, cfg, false);

  for (int i = 1; i < enc.h_prime.rows(); ++i) {
    const auto node = link_logits_node(enc.hprime_node, i, ps);
    const auto [scores, probs] = score_links(enc, i, ps);
    ASSERT_EQ(node->value.numel(), static_cast<std::int64_t>(scores.size()));
    for (std::size_t j = 0; j < scores.size(); ++j)
      EXPECT_NEAR(node->value.data[j], scores[j], 1e-9);
    for (int j = 0; j < i; ++j) {
      const auto rel_node = relation_logits_node(enc.hprime_node, i, j, ps);
      const auto logits = classify_relation(enc, i, j, ps);
      for (std::size_t c = 0; c < logits.size(); ++c)
        EXPECT_NEAR(rel_node->value.data[c], logits[c], 1e-9);
    }
  }
}

TEST(Parser, TiesBreakTowardTheSmallestIndex) {
  EXPECT_EQ(argmax_smallest(std::vector<double>{1.0, 1.0, 1.0}), 0);
  EXPECT_EQ(argmax_smallest(std::vector<double>{0.0, 2.0, 2.0}), 1);
  EXPECT_EQ(argmax_smallest(std::vector<double>{3.0}), 0);

  // zero heads make every link score equal and every relation logit equal:
  // decoding must pick head 0 everywhere (and therefore label ROOT)
  const Dialogue d = aug_dialogue();
  const Vocabulary v = vocab_for(d);
  const EncoderConfig cfg = micro_config(v.size());
  auto ps = nn::init_params<double>(cfg, 3);
  ps.node("link.w")->value = Tensor<double>::zeros({4 * cfg.gru_hidden, 1});
  const std::vector<std::string> inv = {"Comment", "Result", "Contrast"};
  const auto r = parse_dialogue(d, v, ps, cfg, inv);
  for (int i = 1; i < static_cast<int>(r.heads.size()); ++i) {
    EXPECT_EQ(r.heads[static_cast<std::size_t>(i)], 0);
    EXPECT_EQ(r.relations[static_cast<std::size_t>(i)], kRootRelation);
    EXPECT_TRUE(r.rel_logits[static_cast<std::size_t>(i)].empty());
  }
}

TEST(Parser, DecodeIsSequentialGreedyAndValid) {
  const Dialogue d = aug_dialogue();
  const Vocabulary v = vocab_for(d);
  const EncoderConfig cfg = micro_config(v.size());
  const std::vector<std::string> inv = {"Comment", "Result", "Contrast"};

  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    EncoderConfig c2 = cfg;
    c2.seed = seed;
    auto ps = nn::init_params<float>(c2, static_cast<int>(inv.size()));
    const auto r = parse_dialogue(d, v, ps, c2, inv);

    ASSERT_EQ(r.heads.size(), d.edus.size());
    EXPECT_EQ(r.heads[0], -1);
    for (int i = 1; i < static_cast<int>(r.heads.size()); ++i) {
      // greedy: the chosen head is the score argmax with the tie rule
      EXPECT_EQ(r.heads[static_cast<std::size_t>(i)], argmax_smallest(r.link_scores[static_cast<std::size_t>(i)]));
      ASSERT_EQ(r.link_probs[static_cast<std::size_t>(i)].size(), static_cast<std::size_t>(i));
      if (r.heads[static_cast<std::size_t>(i)] != 0) {
        EXPECT_NE(std::find(inv.begin(), inv.end(), r.relations[static_cast<std::size_t>(i)]), inv.end());
        EXPECT_EQ(std::distance(r.rel_logits[static_cast<std::size_t>(i)].begin(),
                                std::max_element(r.rel_logits[static_cast<std::size_t>(i)].begin(),
                                                 r.rel_logits[static_cast<std::size_t>(i)].end())),
                  static_cast<long>(std::distance(inv.begin(), std::find(inv.begin(), inv.end(),
                                                                         r.relations[static_cast<std::size_t>(i)]))));
      }
    }

    const Dialogue parsed = apply_parse(d, r);
    EXPECT_TRUE(validate(parsed).empty());
  }
}

TEST(Parser, PredictionFilesRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "dparse_pred_test";
  std::filesystem::create_directories(dir);
  const Dialogue d = aug_dialogue();
  const Vocabulary v = vocab_for(d);
  const EncoderConfig cfg = micro_config(v.size());
  auto ps = nn::init_params<float>(cfg, 3);
  const std::vector<std::string> inv = {"Comment", "Result", "Contrast"};
  const auto r = parse_dialogue(d, v, ps, cfg, inv);
  const PredictedDialogue pred = to_prediction(d, r);

  ASSERT_EQ(pred.links.size(), 3u);
  for (std::size_t i = 0; i < pred.links.size(); ++i) {
    const auto& l = pred.links[i];
    EXPECT_EQ(l.dep, static_cast<int>(i) + 1);
    EXPECT_EQ(l.head, r.heads[i + 1]);
    EXPECT_NEAR(l.prob, r.link_probs[i + 1][static_cast<std::size_t>(l.head)], 1e-12);
  }

  save_predictions(dir / "p.jsonl", {pred});
  const auto loaded = load_predictions(dir / "p.jsonl");
  ASSERT_EQ(loaded.size(), 1u);
  EXPECT_EQ(loaded[0], pred);
  EXPECT_EQ(serialize_predictions(loaded), serialize_predictions({pred}));

  write_file(dir / "bad.jsonl", "{nope\n");
  EXPECT_THROW(load_predictions(dir / "bad.jsonl"), Error);
}
