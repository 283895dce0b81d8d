#pragma once

#include <string>
#include <vector>

#include "dparse/params.hpp"

namespace dparse::nn {

// id 0 pads batches; tokenize assigns it to <pad> and never emits it inside
// a sequence.
inline constexpr int kPadId = 0;

template <class Real>
Tensor<Real> sinusoidal_positions(int len, int d_model) {
  Tensor<Real> pe({len, d_model});
  for (int p = 0; p < len; ++p) {
    for (int i = 0; i < d_model; i += 2) {
      const double angle = p / std::pow(10000.0, static_cast<double>(i) / d_model);
      pe.at(p, i) = static_cast<Real>(std::sin(angle));
      if (i + 1 < d_model) pe.at(p, i + 1) = static_cast<Real>(std::cos(angle));
    }
  }
  return pe;
}

template <class Real>
struct EncodedBatch {
  NodePtr<Real> states;  // [batch*len, d_model]
  int batch = 0;
  int len = 0;  // common padded length
  std::vector<int> lengths;
};

// x W + b with parameters `name.w` / `name.b`
template <class Real>
NodePtr<Real> affine_nodes(NodePtr<Real> x, ParamStore<Real>& ps, const std::string& name) {
  return add_row(matmul(std::move(x), ps.node(name + ".w")), ps.node(name + ".b"));
}

template <class Real>
Tensor<Real> affine(const Tensor<Real>& x, ParamStore<Real>& ps, const std::string& name) {
  return affine_nodes(constant(x), ps, name)->value;
}

// Stabilized softmax with NLL; returns (probabilities, loss).
template <class Real>
std::pair<std::vector<Real>, Real> softmax_nll(const std::vector<Real>& logits, int target) {
  require(!logits.empty(), "softmax_nll: empty logits");
  require(target >= 0 && target < static_cast<int>(logits.size()), "softmax_nll: target out of range");
  double mx = -1e308;
  for (Real v : logits) mx = std::max(mx, static_cast<double>(v));
  double z = 0;
  for (Real v : logits) z += std::exp(static_cast<double>(v) - mx);
  std::vector<Real> probs(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    probs[i] = static_cast<Real>(std::exp(static_cast<double>(logits[i]) - mx) / z);
  const Real loss = static_cast<Real>(-(static_cast<double>(logits[static_cast<std::size_t>(target)]) - mx - std::log(z)));
  return {std::move(probs), loss};
}

// Token-level Transformer encoder: scaled embeddings + sinusoidal positions,
// n_layers of pre-norm multi-head self-attention and GELU feed-forward with
// residuals, final layer norm. Padded positions are masked out of every
// attention row. Dropout only runs in train_mode.
template <class Real>
EncodedBatch<Real> transformer_encode_nodes(const std::vector<std::vector<int>>& seqs,
                                            ParamStore<Real>& ps, const EncoderConfig& cfg,
                                            bool train_mode, Rng* rng = nullptr,
                                            bool add_positions = true) {
  cfg.validate();
  require(!seqs.empty(), "transformer_encode: empty batch");
  const bool use_dropout = train_mode && cfg.dropout_rate > 0.0;
  require(!use_dropout || rng != nullptr, "transformer_encode: train_mode needs an rng");

  EncodedBatch<Real> out;
  out.batch = static_cast<int>(seqs.size());
  for (const auto& s : seqs) {
    require(!s.empty(), "transformer_encode: empty sequence");
    require(static_cast<int>(s.size()) <= cfg.max_edu_tokens, "transformer_encode: sequence exceeds max_edu_tokens");
    for (int id : s) require(id >= 0 && id < cfg.vocab_size, "transformer_encode: token id out of range");
    out.lengths.push_back(static_cast<int>(s.size()));
    out.len = std::max(out.len, static_cast<int>(s.size()));
  }
  const int B = out.batch, L = out.len, D = cfg.d_model, H = cfg.n_heads, dh = cfg.head_dim();

  std::vector<int> flat(static_cast<std::size_t>(B) * L, kPadId);
  for (int b = 0; b < B; ++b)
    for (std::size_t t = 0; t < seqs[static_cast<std::size_t>(b)].size(); ++t)
      flat[static_cast<std::size_t>(b) * L + t] = seqs[static_cast<std::size_t>(b)][t];

  auto x = affine_elem(gather_rows(ps.node("embed"), flat), static_cast<Real>(std::sqrt(double(D))), Real(0));
  if (add_positions) {
    const Tensor<Real> pe = sinusoidal_positions<Real>(L, D);
    Tensor<Real> tiled({B * L, D});
    for (int b = 0; b < B; ++b)
      std::copy(pe.data.begin(), pe.data.end(), tiled.data.begin() + static_cast<std::size_t>(b) * L * D);
    x = add(x, constant(std::move(tiled)));
  }
  if (use_dropout) x = dropout_mask(x, cfg.dropout_rate, *rng);

  // per-sequence attention masks: column j visible iff it is a real token
  std::vector<Tensor<Real>> masks;
  masks.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    Tensor<Real> m({L, L});
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < out.lengths[static_cast<std::size_t>(b)]; ++j) m.at(i, j) = Real(1);
    masks.push_back(std::move(m));
  }

  const Real inv_sqrt_dh = static_cast<Real>(1.0 / std::sqrt(double(dh)));
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "enc.l" + std::to_string(l) + ".";
    auto h = layer_norm(x, ps.node(p + "ln1.gain"), ps.node(p + "ln1.bias"));
    auto q = add_row(matmul(h, ps.node(p + "attn.wq")), ps.node(p + "attn.bq"));
    auto k = add_row(matmul(h, ps.node(p + "attn.wk")), ps.node(p + "attn.bk"));
    auto v = add_row(matmul(h, ps.node(p + "attn.wv")), ps.node(p + "attn.bv"));

    std::vector<NodePtr<Real>> blocks;
    blocks.reserve(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
      auto qb = slice_rows(q, b * L, (b + 1) * L);
      auto kb = slice_rows(k, b * L, (b + 1) * L);
      auto vb = slice_rows(v, b * L, (b + 1) * L);
      std::vector<NodePtr<Real>> heads;
      heads.reserve(static_cast<std::size_t>(H));
      for (int hd = 0; hd < H; ++hd) {
        auto qh = slice_cols(qb, hd * dh, (hd + 1) * dh);
        auto kh = slice_cols(kb, hd * dh, (hd + 1) * dh);
        auto vh = slice_cols(vb, hd * dh, (hd + 1) * dh);
        auto scores = affine_elem(matmul_nt(qh, kh), inv_sqrt_dh, Real(0));
        auto probs = softmax_rows(scores, &masks[static_cast<std::size_t>(b)]);
        heads.push_back(matmul(probs, vh));
      }
      blocks.push_back(concat_cols(std::move(heads)));
    }
    auto ctx = concat_rows(std::move(blocks));
    auto attn_out = add_row(matmul(ctx, ps.node(p + "attn.wo")), ps.node(p + "attn.bo"));
    if (use_dropout) attn_out = dropout_mask(attn_out, cfg.dropout_rate, *rng);
    x = add(x, attn_out);

    auto h2 = layer_norm(x, ps.node(p + "ln2.gain"), ps.node(p + "ln2.bias"));
    auto ff = add_row(matmul(gelu(add_row(matmul(h2, ps.node(p + "ffn.w1")), ps.node(p + "ffn.b1"))),
                             ps.node(p + "ffn.w2")),
                      ps.node(p + "ffn.b2"));
    if (use_dropout) ff = dropout_mask(ff, cfg.dropout_rate, *rng);
    x = add(x, ff);
  }
  x = layer_norm(x, ps.node("enc.ln_out.gain"), ps.node("enc.ln_out.bias"));
  ensure_finite(x->value, "transformer_encode output");
  out.states = std::move(x);
  return out;
}

// value-level variant returning a [batch, len, d_model] tensor
template <class Real>
Tensor<Real> transformer_encode(const std::vector<std::vector<int>>& seqs, ParamStore<Real>& ps,
                                const EncoderConfig& cfg, bool train_mode, Rng* rng = nullptr,
                                bool add_positions = true) {
  auto enc = transformer_encode_nodes(seqs, ps, cfg, train_mode, rng, add_positions);
  Tensor<Real> out({enc.batch, enc.len, cfg.d_model});
  out.data = enc.states->value.data;
  return out;
}

// ---- GRU ----

// h_t = z * h_{t-1} + (1-z) * htilde; update-gate bias starts at 1 so the
// state carries by default.
template <class Real>
NodePtr<Real> gru_cell(NodePtr<Real> x, NodePtr<Real> h, ParamStore<Real>& ps, const std::string& prefix) {
  auto z = sigmoid(add(add(matmul(x, ps.node(prefix + "wxz")), matmul(h, ps.node(prefix + "whz"))),
                       ps.node(prefix + "bz")));
  auto r = sigmoid(add(add(matmul(x, ps.node(prefix + "wxr")), matmul(h, ps.node(prefix + "whr"))),
                       ps.node(prefix + "br")));
  auto cand = tanh_op(add(add(matmul(x, ps.node(prefix + "wxh")), matmul(mul(r, h), ps.node(prefix + "whh"))),
                          ps.node(prefix + "bh")));
  return add(mul(z, h), mul(affine_elem(z, Real(-1), Real(1)), cand));
}

template <class Real>
std::vector<NodePtr<Real>> gru_run(const std::vector<NodePtr<Real>>& inputs, ParamStore<Real>& ps,
                                   const std::string& prefix, int hidden) {
  std::vector<NodePtr<Real>> states;
  states.reserve(inputs.size());
  NodePtr<Real> h = constant(Tensor<Real>::zeros({1, hidden}));
  for (const auto& x : inputs) {
    h = gru_cell(x, h, ps, prefix);
    states.push_back(h);
  }
  return states;
}

// Row i holds [forward state after positions 0..i ; backward state after
// positions n-1..i].
template <class Real>
NodePtr<Real> bigru_nodes(const std::vector<NodePtr<Real>>& inputs, ParamStore<Real>& ps, int hidden) {
  require(!inputs.empty(), "bigru: empty input sequence");
  const std::size_t n = inputs.size();
  auto fwd = gru_run(inputs, ps, "gru.fw.", hidden);
  std::vector<NodePtr<Real>> rev(inputs.rbegin(), inputs.rend());
  auto bwd_rev = gru_run(rev, ps, "gru.bw.", hidden);
  std::vector<NodePtr<Real>> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    rows.push_back(concat_cols<Real>({fwd[i], bwd_rev[n - 1 - i]}));
  auto out = concat_rows(std::move(rows));
  ensure_finite(out->value, "bigru output");
  return out;
}

template <class Real>
Tensor<Real> bigru_encode(const Tensor<Real>& edu_vectors, ParamStore<Real>& ps, int hidden) {
  require(edu_vectors.rows() >= 1, "bigru_encode: need at least one row");
  std::vector<NodePtr<Real>> inputs;
  inputs.reserve(static_cast<std::size_t>(edu_vectors.rows()));
  auto all = constant(edu_vectors);
  for (int i = 0; i < edu_vectors.rows(); ++i) inputs.push_back(slice_row(all, i));
  return bigru_nodes(inputs, ps, hidden)->value;
}

}  // namespace dparse::nn
