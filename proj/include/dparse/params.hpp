#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dparse/autodiff.hpp"

namespace dparse::nn {

struct EncoderConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 256;
  int max_edu_tokens = 64;
  int gru_hidden = 64;
  double dropout_rate = 0.1;
  std::uint64_t seed = 0;

  int head_dim() const { return d_model / n_heads; }

  void validate() const {
    require(vocab_size >= 1, "EncoderConfig: vocab_size must be >= 1");
    require(d_model >= 1 && n_layers >= 1 && n_heads >= 1 && d_ff >= 1 && gru_hidden >= 1,
            "EncoderConfig: all dimensions must be >= 1");
    require(max_edu_tokens >= 2, "EncoderConfig: max_edu_tokens must be >= 2");
    require(d_model % n_heads == 0, "EncoderConfig: d_model must be divisible by n_heads");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, "EncoderConfig: dropout_rate must be in [0,1)");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

template <class Real>
struct ParamEntry {
  NodePtr<Real> node;    // value + accumulated gradient
  Tensor<Real> m, v;     // AdamW moment estimates
  std::int64_t step = 0;
};

// Named parameter tensors with their gradients and optimizer state.
// Iteration order is insertion order, which fixes the checkpoint layout.
template <class Real>
class ParamStore {
 public:
  NodePtr<Real> add(const std::string& name, Tensor<Real> value) {
    require(!by_name_.count(name), "ParamStore: duplicate parameter " + name);
    ParamEntry<Real> e;
    e.node = leaf_param(std::move(value));
    e.m = Tensor<Real>::zeros(e.node->value.shape);
    e.v = Tensor<Real>::zeros(e.node->value.shape);
    order_.push_back(name);
    by_name_.emplace(name, std::move(e));
    return by_name_.at(name).node;
  }

  bool has(const std::string& name) const { return by_name_.count(name) > 0; }

  const NodePtr<Real>& node(const std::string& name) const {
    auto it = by_name_.find(name);
    require(it != by_name_.end(), "ParamStore: unknown parameter " + name);
    return it->second.node;
  }

  ParamEntry<Real>& entry(const std::string& name) {
    auto it = by_name_.find(name);
    require(it != by_name_.end(), "ParamStore: unknown parameter " + name);
    return it->second;
  }

  const std::vector<std::string>& names() const { return order_; }

  void zero_grad() {
    for (const auto& name : order_) {
      auto& e = by_name_.at(name);
      std::fill(e.node->grad.data.begin(), e.node->grad.data.end(), Real(0));
    }
  }

  // deep copy of values only (fresh graph leaves, zeroed optimizer state)
  ParamStore snapshot_values() const {
    ParamStore out;
    for (const auto& name : order_) out.add(name, by_name_.at(name).node->value);
    return out;
  }

  void load_values(const ParamStore& other) {
    for (const auto& name : order_) {
      const auto& src = other.by_name_.find(name);
      require(src != other.by_name_.end(), "ParamStore::load_values: missing parameter " + name);
      auto& dst = by_name_.at(name);
      require(dst.node->value.same_shape(src->second.node->value),
              "ParamStore::load_values: shape mismatch for " + name);
      dst.node->value.data = src->second.node->value.data;
    }
  }

 private:
  std::vector<std::string> order_;
  std::map<std::string, ParamEntry<Real>> by_name_;
};

namespace detail {

template <class Real>
Tensor<Real> xavier_uniform(const std::vector<int>& shape, Rng& rng) {
  Tensor<Real> t(shape);
  const double a = std::sqrt(6.0 / (shape[0] + shape[1]));
  for (Real& v : t.data) v = static_cast<Real>(rng.symmetric(a));
  return t;
}

template <class Real>
void add_encoder_params(ParamStore<Real>& ps, const EncoderConfig& cfg, Rng& rng) {
  ps.add("embed", xavier_uniform<Real>({cfg.vocab_size, cfg.d_model}, rng));
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "enc.l" + std::to_string(l) + ".";
    ps.add(p + "ln1.gain", Tensor<Real>::full({1, cfg.d_model}, Real(1)));
    ps.add(p + "ln1.bias", Tensor<Real>::zeros({1, cfg.d_model}));
    for (const char* w : {"wq", "wk", "wv", "wo"})
      ps.add(p + "attn." + w, xavier_uniform<Real>({cfg.d_model, cfg.d_model}, rng));
    for (const char* b : {"bq", "bk", "bv", "bo"})
      ps.add(p + "attn." + b, Tensor<Real>::zeros({1, cfg.d_model}));
    ps.add(p + "ln2.gain", Tensor<Real>::full({1, cfg.d_model}, Real(1)));
    ps.add(p + "ln2.bias", Tensor<Real>::zeros({1, cfg.d_model}));
    ps.add(p + "ffn.w1", xavier_uniform<Real>({cfg.d_model, cfg.d_ff}, rng));
    ps.add(p + "ffn.b1", Tensor<Real>::zeros({1, cfg.d_ff}));
    ps.add(p + "ffn.w2", xavier_uniform<Real>({cfg.d_ff, cfg.d_model}, rng));
    ps.add(p + "ffn.b2", Tensor<Real>::zeros({1, cfg.d_model}));
  }
  ps.add("enc.ln_out.gain", Tensor<Real>::full({1, cfg.d_model}, Real(1)));
  ps.add("enc.ln_out.bias", Tensor<Real>::zeros({1, cfg.d_model}));
}

template <class Real>
void add_gru_params(ParamStore<Real>& ps, const EncoderConfig& cfg, Rng& rng) {
  for (const char* dir : {"fw", "bw"}) {
    const std::string p = std::string("gru.") + dir + ".";
    for (const char* g : {"wxz", "wxr", "wxh"})
      ps.add(p + g, xavier_uniform<Real>({cfg.d_model, cfg.gru_hidden}, rng));
    for (const char* g : {"whz", "whr", "whh"})
      ps.add(p + g, xavier_uniform<Real>({cfg.gru_hidden, cfg.gru_hidden}, rng));
    // update gate carries state; its bias starts open
    ps.add(p + "bz", Tensor<Real>::full({1, cfg.gru_hidden}, Real(1)));
    ps.add(p + "br", Tensor<Real>::zeros({1, cfg.gru_hidden}));
    ps.add(p + "bh", Tensor<Real>::zeros({1, cfg.gru_hidden}));
  }
}

}  // namespace detail

// Parser model: token encoder + BiGRU + link head + relation head.
template <class Real>
ParamStore<Real> init_params(const EncoderConfig& cfg, int n_relations) {
  cfg.validate();
  require(n_relations >= 1, "init_params: n_relations must be >= 1");
  Rng rng(cfg.seed);
  ParamStore<Real> ps;
  detail::add_encoder_params(ps, cfg, rng);
  detail::add_gru_params(ps, cfg, rng);
  const int pair_dim = 4 * cfg.gru_hidden;  // [h'_i ; h'_j], each 2*gru_hidden
  ps.add("link.w", detail::xavier_uniform<Real>({pair_dim, 1}, rng));
  ps.add("link.b", Tensor<Real>::zeros({1, 1}));
  ps.add("rel.w", detail::xavier_uniform<Real>({pair_dim, n_relations}, rng));
  ps.add("rel.b", Tensor<Real>::zeros({1, n_relations}));
  return ps;
}

// MLM pretraining model: token encoder + output bias; logits tie to the
// embedding matrix.
template <class Real>
ParamStore<Real> init_mlm_params(const EncoderConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  ParamStore<Real> ps;
  detail::add_encoder_params(ps, cfg, rng);
  ps.add("mlm_bias", Tensor<Real>::zeros({1, cfg.vocab_size}));
  return ps;
}

// ---- AdamW ----

template <class Real>
double global_grad_norm(ParamStore<Real>& ps) {
  double acc = 0;
  for (const auto& name : ps.names()) {
    for (Real g : ps.node(name)->grad.data) acc += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(acc);
}

template <class Real>
void clip_grad_norm(ParamStore<Real>& ps, double max_norm) {
  if (max_norm <= 0) return;
  const double norm = global_grad_norm(ps);
  if (norm <= max_norm) return;
  const Real scale = static_cast<Real>(max_norm / norm);
  for (const auto& name : ps.names()) {
    for (Real& g : ps.entry(name).node->grad.data) g *= scale;
  }
}

// Decoupled weight decay: the decay term is applied to the incoming value,
// separately from the bias-corrected Adam update.
template <class Real>
void adamw_step(ParamStore<Real>& ps, double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8, double weight_decay = 0.0) {
  require(lr > 0, "adamw_step: lr must be positive");
  for (const auto& name : ps.names()) {
    auto& e = ps.entry(name);
    e.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(e.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(e.step));
    auto& theta = e.node->value.data;
    const auto& grad = e.node->grad.data;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      const double m = beta1 * static_cast<double>(e.m.data[i]) + (1.0 - beta1) * g;
      const double v = beta2 * static_cast<double>(e.v.data[i]) + (1.0 - beta2) * g * g;
      e.m.data[i] = static_cast<Real>(m);
      e.v.data[i] = static_cast<Real>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      const double old = static_cast<double>(theta[i]);
      theta[i] = static_cast<Real>(old - lr * mhat / (std::sqrt(vhat) + eps) - lr * weight_decay * old);
    }
    ensure_finite(e.node->value, "adamw_step parameter update");
  }
}

}  // namespace dparse::nn
