#pragma once

#include <string>
#include <vector>

#include "dparse/layers.hpp"
#include "dparse/tokenize.hpp"

namespace dparse {

// footnote-level pooling variants; averaging is the default and the best
enum class Pooling { mean, first_last_sum, first };

inline Pooling pooling_from_string(const std::string& s) {
  if (s == "mean") return Pooling::mean;
  if (s == "first_last_sum") return Pooling::first_last_sum;
  if (s == "first") return Pooling::first;
  fail("unknown pooling: " + s + " (expected mean|first_last_sum|first)");
}

inline std::string pooling_to_string(Pooling p) {
  switch (p) {
    case Pooling::mean: return "mean";
    case Pooling::first_last_sum: return "first_last_sum";
    case Pooling::first: return "first";
  }
  fail("unreachable");
}

template <class Real>
struct EncodedDialogue {
  nn::Tensor<Real> h_edu;             // [n+1, d_model] local EDU vectors
  nn::Tensor<Real> h_prime;           // [n+1, 2*gru_hidden] global vectors
  nn::NodePtr<Real> hprime_node;      // same rows, on the graph (training path)
};

// Two-level encoding: every EDU runs through the token Transformer
// independently, token states pool into one local vector per EDU, and a
// BiGRU over [root..u_n] adds global context.
template <class Real>
EncodedDialogue<Real> encode_dialogue(const Dialogue& d, const Vocabulary& v, nn::ParamStore<Real>& ps,
                                      const nn::EncoderConfig& cfg, bool train_mode, Rng* rng = nullptr,
                                      Pooling pooling = Pooling::mean) {
  require(d.augmented, "encode_dialogue: dialogue must be augmented");
  std::vector<std::vector<int>> seqs;
  seqs.reserve(d.edus.size());
  for (const Edu& e : d.edus) seqs.push_back(encode_edu(e, v, cfg.max_edu_tokens));

  auto enc = nn::transformer_encode_nodes(seqs, ps, cfg, train_mode, rng);
  const int B = enc.batch, L = enc.len;

  // pooling as one constant matrix over the flattened [B*L, d] token states
  nn::Tensor<Real> pool({B, B * L});
  for (int b = 0; b < B; ++b) {
    const int len = enc.lengths[static_cast<std::size_t>(b)];
    switch (pooling) {
      case Pooling::mean:
        for (int t = 0; t < len; ++t) pool.at(b, b * L + t) = Real(1) / static_cast<Real>(len);
        break;
      case Pooling::first_last_sum:
        pool.at(b, b * L) += Real(1);
        pool.at(b, b * L + len - 1) += Real(1);
        break;
      case Pooling::first:
        pool.at(b, b * L) = Real(1);
        break;
    }
  }
  auto h_edu = nn::matmul(nn::constant(std::move(pool)), enc.states);

  std::vector<nn::NodePtr<Real>> rows;
  rows.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) rows.push_back(nn::slice_row(h_edu, b));
  auto hprime = nn::bigru_nodes(rows, ps, cfg.gru_hidden);

  EncodedDialogue<Real> out;
  out.h_edu = h_edu->value;
  out.h_prime = hprime->value;
  out.hprime_node = std::move(hprime);
  return out;
}

// test seam: inject h' directly without running the encoders
template <class Real>
EncodedDialogue<Real> encoded_from_values(nn::Tensor<Real> h_edu, nn::Tensor<Real> h_prime) {
  EncodedDialogue<Real> out;
  out.h_edu = std::move(h_edu);
  out.h_prime = std::move(h_prime);
  out.hprime_node = nn::constant(out.h_prime);
  return out;
}

// ---- graph-path scoring (training) ----

// link logits [1, i] for EDU i against candidates 0..i-1
template <class Real>
nn::NodePtr<Real> link_logits_node(const nn::NodePtr<Real>& hprime, int i, nn::ParamStore<Real>& ps) {
  require(i >= 1, "score_links: root has no head");
  require(i < hprime->value.rows(), "score_links: index out of range");
  auto hi = nn::slice_row(hprime, i);
  auto bcast = nn::matmul(nn::constant(nn::Tensor<Real>::full({i, 1}, Real(1))), hi);
  auto pairs = nn::concat_cols<Real>({std::move(bcast), nn::slice_rows(hprime, 0, i)});
  return nn::transpose(nn::affine_nodes(std::move(pairs), ps, "link"));
}

// relation logits [1, C] for the (dependent i, head j) pair
template <class Real>
nn::NodePtr<Real> relation_logits_node(const nn::NodePtr<Real>& hprime, int i, int j,
                                       nn::ParamStore<Real>& ps) {
  require(i >= 1, "classify_relation: i must be >= 1");
  require(j < i, "classify_relation: j must be < i");
  require(j >= 0 && i < hprime->value.rows(), "classify_relation: index out of range");
  auto pair = nn::concat_cols<Real>({nn::slice_row(hprime, i), nn::slice_row(hprime, j)});
  return nn::affine_nodes(std::move(pair), ps, "rel");
}

// ---- value-path scoring (inference) ----

// Pointer scores s_{i,j} = Linear([h'_i; h'_j]) over the precedents, then softmax.
template <class Real>
std::pair<std::vector<Real>, std::vector<Real>> score_links(const EncodedDialogue<Real>& enc, int i,
                                                            nn::ParamStore<Real>& ps) {
  require(i >= 1, "score_links: root has no head");
  require(i < enc.h_prime.rows(), "score_links: index out of range");
  const nn::Tensor<Real>& w = ps.node("link.w")->value;  // [4H, 1]
  const Real b = ps.node("link.b")->value.data[0];
  const int h2 = enc.h_prime.cols();
  require(w.rows() == 2 * h2, "score_links: link head shape mismatch");

  std::vector<Real> scores(static_cast<std::size_t>(i));
  for (int j = 0; j < i; ++j) {
    double acc = static_cast<double>(b);
    for (int k = 0; k < h2; ++k) acc += static_cast<double>(enc.h_prime.at(i, k)) * static_cast<double>(w.data[static_cast<std::size_t>(k)]);
    for (int k = 0; k < h2; ++k) acc += static_cast<double>(enc.h_prime.at(j, k)) * static_cast<double>(w.data[static_cast<std::size_t>(h2 + k)]);
    scores[static_cast<std::size_t>(j)] = static_cast<Real>(acc);
  }
  auto [probs, loss] = nn::softmax_nll(scores, 0);
  (void)loss;
  return {std::move(scores), std::move(probs)};
}

// Relation logits over the C-label inventory; ROOT is structural and never
// classified, so j = 0 is a caller error at decode time.
template <class Real>
std::vector<Real> classify_relation(const EncodedDialogue<Real>& enc, int i, int j,
                                    nn::ParamStore<Real>& ps) {
  require(i >= 1, "classify_relation: i must be >= 1");
  require(j < i, "classify_relation: j must be < i");
  require(j >= 0 && i < enc.h_prime.rows(), "classify_relation: index out of range");
  const nn::Tensor<Real>& w = ps.node("rel.w")->value;  // [4H, C]
  const nn::Tensor<Real>& bias = ps.node("rel.b")->value;
  const int h2 = enc.h_prime.cols(), C = w.cols();
  require(w.rows() == 2 * h2, "classify_relation: relation head shape mismatch");

  std::vector<Real> logits(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    double acc = static_cast<double>(bias.data[static_cast<std::size_t>(c)]);
    for (int k = 0; k < h2; ++k) acc += static_cast<double>(enc.h_prime.at(i, k)) * static_cast<double>(w.at(k, c));
    for (int k = 0; k < h2; ++k) acc += static_cast<double>(enc.h_prime.at(j, k)) * static_cast<double>(w.at(h2 + k, c));
    logits[static_cast<std::size_t>(c)] = static_cast<Real>(acc);
  }
  return logits;
}

// ---- decoding ----

template <class Real>
struct ParseResult {
  // slot 0 is the root: heads[0] = -1, relations[0] empty
  std::vector<int> heads;
  std::vector<std::string> relations;
  std::vector<std::vector<Real>> link_scores;  // link_scores[i] = s_{i,0..i-1}
  std::vector<std::vector<Real>> link_probs;   // a_{i,.}
  std::vector<std::vector<Real>> rel_logits;   // logits at the chosen head; empty for root links
};

template <class T>
int argmax_smallest(const std::vector<T>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

// Sequential greedy decode: for i = 1..n pick the largest pointing
// probability (ties toward the smallest candidate index), then classify the
// relation at the chosen head. Always yields a tree rooted at u_0.
template <class Real>
ParseResult<Real> parse_dialogue(const Dialogue& d, const Vocabulary& v, nn::ParamStore<Real>& ps,
                                 const nn::EncoderConfig& cfg, const std::vector<std::string>& inventory,
                                 Pooling pooling = Pooling::mean) {
  const auto enc = encode_dialogue(d, v, ps, cfg, /*train_mode=*/false, nullptr, pooling);
  const int n1 = enc.h_prime.rows();
  ParseResult<Real> out;
  out.heads.assign(static_cast<std::size_t>(n1), -1);
  out.relations.assign(static_cast<std::size_t>(n1), "");
  out.link_scores.resize(static_cast<std::size_t>(n1));
  out.link_probs.resize(static_cast<std::size_t>(n1));
  out.rel_logits.resize(static_cast<std::size_t>(n1));

  for (int i = 1; i < n1; ++i) {
    auto [scores, probs] = score_links(enc, i, ps);
    const int head = argmax_smallest(scores);
    out.heads[static_cast<std::size_t>(i)] = head;
    out.link_scores[static_cast<std::size_t>(i)] = std::move(scores);
    out.link_probs[static_cast<std::size_t>(i)] = std::move(probs);
    if (head == 0) {
      out.relations[static_cast<std::size_t>(i)] = kRootRelation;
    } else {
      auto logits = classify_relation(enc, i, head, ps);
      const int rel = argmax_smallest(logits);
      require(rel < static_cast<int>(inventory.size()), "parse_dialogue: relation head wider than inventory");
      out.relations[static_cast<std::size_t>(i)] = inventory[static_cast<std::size_t>(rel)];
      out.rel_logits[static_cast<std::size_t>(i)] = std::move(logits);
    }
  }
  return out;
}

// replaces the dialogue's links with the predicted structure
template <class Real>
Dialogue apply_parse(const Dialogue& d, const ParseResult<Real>& r) {
  require(d.augmented, "apply_parse: dialogue must be augmented");
  require(static_cast<int>(r.heads.size()) == static_cast<int>(d.edus.size()),
          "apply_parse: size mismatch");
  Dialogue out = d;
  out.links.clear();
  for (int i = 1; i < static_cast<int>(r.heads.size()); ++i) {
    out.links.push_back(Link{i, r.heads[static_cast<std::size_t>(i)], r.relations[static_cast<std::size_t>(i)]});
  }
  return out;
}

// ---- prediction files ----

struct PredLink {
  int dep = 0;
  int head = 0;
  std::string relation;
  double prob = 0;

  friend bool operator==(const PredLink&, const PredLink&) = default;
};

struct PredictedDialogue {
  std::string id;
  std::vector<PredLink> links;

  friend bool operator==(const PredictedDialogue&, const PredictedDialogue&) = default;
};

template <class Real>
PredictedDialogue to_prediction(const Dialogue& d, const ParseResult<Real>& r) {
  PredictedDialogue out;
  out.id = d.id;
  for (int i = 1; i < static_cast<int>(r.heads.size()); ++i) {
    const int head = r.heads[static_cast<std::size_t>(i)];
    out.links.push_back(PredLink{i, head, r.relations[static_cast<std::size_t>(i)],
                                 static_cast<double>(r.link_probs[static_cast<std::size_t>(i)][static_cast<std::size_t>(head)])});
  }
  return out;
}

// Prediction file: JSONL, {"id", "links": [{"dep","head","relation","prob"}]}.
inline std::string serialize_predictions(const std::vector<PredictedDialogue>& preds) {
  std::string out;
  for (const PredictedDialogue& p : preds) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    auto& links = j["links"] = nlohmann::ordered_json::array();
    for (const PredLink& l : p.links)
      links.push_back({{"dep", l.dep}, {"head", l.head}, {"relation", l.relation}, {"prob", l.prob}});
    out += j.dump();
    out += "\n";
  }
  return out;
}

inline void save_predictions(const std::filesystem::path& path, const std::vector<PredictedDialogue>& preds) {
  write_file(path, serialize_predictions(preds));
}

inline std::vector<PredictedDialogue> load_predictions(const std::filesystem::path& path) {
  std::vector<PredictedDialogue> out;
  int line_no = 0;
  for (const std::string& line : split_on(read_file(path), '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PredictedDialogue p;
      p.id = j.at("id").get<std::string>();
      for (const auto& jl : j.at("links")) {
        p.links.push_back(PredLink{jl.at("dep").get<int>(), jl.at("head").get<int>(),
                                   jl.at("relation").get<std::string>(), jl.value("prob", 0.0)});
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      fail(path.string() + ":" + std::to_string(line_no) + ": malformed prediction record: " + e.what());
    }
  }
  return out;
}

}  // namespace dparse
