#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "dparse/checkpoint.hpp"
#include "dparse/eval.hpp"

namespace dparse {

struct TrainConfig {
  // unset: 1e-3 from scratch, 2e-5 on top of a pretrained backbone
  std::optional<double> lr;
  int epochs = 20;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  double dev_fraction = 0.1;
  int batch_dialogues = 8;
  double grad_clip_norm = 5.0;
  Pooling pooling = Pooling::mean;
  bool refinement_enabled = false;
  std::optional<std::filesystem::path> backbone_checkpoint;

  double effective_lr() const { return lr ? *lr : (backbone_checkpoint ? 2e-5 : 1e-3); }

  void validate() const {
    require(epochs >= 1, "TrainConfig: epochs must be >= 1");
    require(!lr || *lr > 0, "TrainConfig: lr must be positive");
    require(dev_fraction > 0.0 && dev_fraction < 1.0, "TrainConfig: dev_fraction must be in (0,1)");
    require(batch_dialogues >= 1, "TrainConfig: batch_dialogues must be >= 1");
  }
};

struct EpochRow {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double dev_link_f1 = 0;
  double dev_link_rel_f1 = 0;
};

struct TrainLog {
  std::vector<EpochRow> rows;
  int best_epoch = 0;  // maximizes dev Link+Rel F1, ties toward the earlier epoch
  double best_link_f1 = 0;
  double best_link_rel_f1 = 0;
  double wall_seconds = 0;  // reported in JSON only; the CSV stays byte-reproducible

  std::string to_csv() const {
    std::string out = "epoch,train_loss,dev_link_f1,dev_link_rel_f1\n";
    for (const EpochRow& r : rows) {
      out += std::to_string(r.epoch) + "," + format_fixed(r.train_loss, 6) + "," +
             format_fixed(r.dev_link_f1, 6) + "," + format_fixed(r.dev_link_rel_f1, 6) + "\n";
    }
    return out;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["best_epoch"] = best_epoch;
    j["best_link_f1"] = best_link_f1;
    j["best_link_rel_f1"] = best_link_rel_f1;
    j["wall_seconds"] = wall_seconds;
    auto& rs = j["epochs"] = nlohmann::ordered_json::array();
    for (const EpochRow& r : rows) {
      rs.push_back({{"epoch", r.epoch},
                    {"train_loss", r.train_loss},
                    {"dev_link_f1", r.dev_link_f1},
                    {"dev_link_rel_f1", r.dev_link_rel_f1}});
    }
    return j;
  }
};

// NLL of the gold structure: link term for every non-root EDU plus a
// relation term at the gold head (teacher forcing); ROOT links carry no
// relation term.
template <class Real>
nn::NodePtr<Real> parsing_loss(const Dialogue& d, const nn::NodePtr<Real>& hprime,
                               nn::ParamStore<Real>& ps, const std::vector<std::string>& inventory,
                               bool include_relation = true) {
  require(d.augmented, "parsing_loss: dialogue must be augmented");
  const auto heads = gold_heads(d);
  std::vector<nn::NodePtr<Real>> terms;
  for (int i = 1; i < static_cast<int>(d.edus.size()); ++i) {
    const int gold = heads[static_cast<std::size_t>(i)];
    require(gold >= 0, "parsing_loss: gold link missing for EDU " + std::to_string(i) +
                           " in dialogue '" + d.id + "'");
    terms.push_back(nn::cross_entropy(link_logits_node(hprime, i, ps), gold));
    if (include_relation && gold != 0) {
      const Link* l = find_link(d, i);
      int rel = -1;
      for (std::size_t c = 0; c < inventory.size(); ++c) {
        if (inventory[c] == l->relation) rel = static_cast<int>(c);
      }
      require(rel >= 0, "parsing_loss: relation label not in inventory: " + l->relation);
      terms.push_back(nn::cross_entropy(relation_logits_node(hprime, i, gold, ps), rel));
    }
  }
  return nn::sum_scalars(std::move(terms));
}

// dev-set parse + micro-F1 with frozen parameters
template <class Real>
EvalReport evaluate_parser(const Corpus& dev, const Vocabulary& v, nn::ParamStore<Real>& ps,
                           const nn::EncoderConfig& enc_cfg, Pooling pooling) {
  std::vector<PredictedDialogue> preds;
  preds.reserve(dev.dialogues.size());
  for (const Dialogue& d : dev.dialogues)
    preds.push_back(to_prediction(d, parse_dialogue(d, v, ps, enc_cfg, dev.relation_inventory, pooling)));
  return micro_f1(preds, dev);
}

template <class Real>
struct TrainResult {
  nn::ParamStore<Real> params;  // best-epoch weights
  nn::EncoderConfig enc;        // as trained (vocab_size/seed resolved)
  TrainLog log;
};

// Fine-tuning loop: seed-derived shuffles, summed loss over batch_dialogues,
// global-norm clipping, AdamW, per-epoch dev evaluation, best checkpoint by
// dev Link+Rel F1. A backbone checkpoint initializes embedding + encoder.
template <class Real>
TrainResult<Real> train_parser(const Corpus& train, const Corpus& dev, const Vocabulary& v,
                               const TrainConfig& cfg, nn::EncoderConfig enc_cfg) {
  cfg.validate();
  require(!train.dialogues.empty(), "train_parser: empty training corpus");
  require(!dev.dialogues.empty(), "train_parser: empty dev corpus");
  for (const Corpus* c : {&train, &dev}) {
    for (const Dialogue& d : c->dialogues)
      require(d.augmented, "train_parser: dialogue '" + d.id + "' is not augmented");
  }
  require(enc_cfg.vocab_size == 0 || enc_cfg.vocab_size == v.size(),
          "train_parser: vocabulary/checkpoint config mismatch (vocab_size)");
  enc_cfg.vocab_size = v.size();
  enc_cfg.seed = cfg.seed;
  const int C = static_cast<int>(train.relation_inventory.size());

  auto t0 = std::chrono::steady_clock::now();
  auto ps = nn::init_params<Real>(enc_cfg, C);
  if (cfg.backbone_checkpoint) {
    const nn::Checkpoint ck = nn::load_checkpoint(*cfg.backbone_checkpoint);
    require(ck.config.vocab_size == v.size(),
            "train_parser: vocabulary/checkpoint config mismatch (checkpoint vocab " +
                std::to_string(ck.config.vocab_size) + " vs vocabulary " + std::to_string(v.size()) + ")");
    nn::load_backbone(ps, ck, enc_cfg);
  }

  Rng rng(cfg.seed);
  std::vector<int> order(train.dialogues.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  TrainResult<Real> result;
  result.enc = enc_cfg;
  auto best = ps.snapshot_values();
  const double lr = cfg.effective_lr();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_deterministic(order, rng);
    double loss_sum = 0;
    std::size_t batch_count = 0;
    ps.zero_grad();
    for (std::size_t k = 0; k < order.size(); ++k) {
      const Dialogue& d = train.dialogues[static_cast<std::size_t>(order[k])];
      auto enc = encode_dialogue(d, v, ps, enc_cfg, /*train_mode=*/true, &rng, cfg.pooling);
      auto loss = parsing_loss(d, enc.hprime_node, ps, train.relation_inventory);
      loss_sum += static_cast<double>(loss->value.data[0]);
      nn::backward(loss);
      if (++batch_count == static_cast<std::size_t>(cfg.batch_dialogues) || k + 1 == order.size()) {
        nn::clip_grad_norm(ps, cfg.grad_clip_norm);
        nn::adamw_step(ps, lr, 0.9, 0.999, 1e-8, cfg.weight_decay);
        ps.zero_grad();
        batch_count = 0;
      }
    }

    const EvalReport dev_report = evaluate_parser(dev, v, ps, enc_cfg, cfg.pooling);
    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(order.size());
    row.dev_link_f1 = dev_report.link_f1;
    row.dev_link_rel_f1 = dev_report.link_rel_f1;
    result.log.rows.push_back(row);
    if (result.log.best_epoch == 0 || row.dev_link_rel_f1 > result.log.best_link_rel_f1) {
      result.log.best_epoch = epoch;
      result.log.best_link_f1 = row.dev_link_f1;
      result.log.best_link_rel_f1 = row.dev_link_rel_f1;
      best = ps.snapshot_values();
    }
  }
  result.params = std::move(best);
  result.log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---- masked language model pretraining ----

struct PretrainConfig {
  double lr = 1e-3;
  int epochs = 5;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  double mask_rate = 0.15;
  int batch_edus = 32;
  double grad_clip_norm = 5.0;

  void validate() const {
    require(epochs >= 1, "PretrainConfig: epochs must be >= 1");
    require(lr > 0, "PretrainConfig: lr must be positive");
    require(mask_rate >= 0.0 && mask_rate <= 1.0, "PretrainConfig: mask_rate must be in [0,1]");
    require(batch_edus >= 1, "PretrainConfig: batch_edus must be >= 1");
  }
};

struct PretrainLog {
  // eval_nll[0] is measured before training; eval_nll[e] after epoch e. The
  // eval pass uses a fixed mask seed and no dropout, so entries compare.
  std::vector<double> eval_nll;
  std::vector<double> train_loss;  // mean masked NLL per epoch
  double wall_seconds = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["eval_nll"] = eval_nll;
    j["train_loss"] = train_loss;
    j["wall_seconds"] = wall_seconds;
    return j;
  }
};

namespace detail {

// mean NLL at the selected positions of pre-masked sequences; nullptr rng =
// inference mode. Returns nullptr when nothing was selected.
template <class Real>
nn::NodePtr<Real> mlm_batch_loss(const std::vector<std::vector<int>>& masked,
                                 const std::vector<std::vector<int>>& labels, nn::ParamStore<Real>& ps,
                                 const nn::EncoderConfig& enc_cfg, Rng* rng) {
  auto enc = nn::transformer_encode_nodes(masked, ps, enc_cfg, /*train_mode=*/rng != nullptr, rng);
  std::vector<nn::NodePtr<Real>> terms;
  for (int b = 0; b < enc.batch; ++b) {
    for (std::size_t t = 0; t < labels[static_cast<std::size_t>(b)].size(); ++t) {
      const int label = labels[static_cast<std::size_t>(b)][t];
      if (label == kIgnoreLabel) continue;
      auto state = nn::slice_row(enc.states, b * enc.len + static_cast<int>(t));
      auto logits = nn::add_row(nn::matmul_nt(std::move(state), ps.node("embed")), ps.node("mlm_bias"));
      terms.push_back(nn::cross_entropy(std::move(logits), label));
    }
  }
  if (terms.empty()) return nullptr;
  const Real scale = Real(1) / static_cast<Real>(terms.size());
  return nn::affine_elem(nn::sum_scalars(std::move(terms)), scale, Real(0));
}

}  // namespace detail

template <class Real>
struct PretrainResult {
  nn::ParamStore<Real> params;
  nn::EncoderConfig enc;
  PretrainLog log;
};

// MLM over all EDUs of all corpora, interleaved by a seed-derived shuffle.
// The output head ties to the embedding matrix (logits = states · embedᵀ +
// bias), so the checkpoint loads directly as a parser backbone.
template <class Real>
PretrainResult<Real> pretrain_mlm(const std::vector<Corpus>& corpora, const Vocabulary& v,
                                  const PretrainConfig& cfg, nn::EncoderConfig enc_cfg) {
  cfg.validate();
  require(!corpora.empty(), "pretrain_mlm: no corpora");
  require(enc_cfg.vocab_size == 0 || enc_cfg.vocab_size == v.size(),
          "pretrain_mlm: vocabulary/config mismatch (vocab_size)");
  enc_cfg.vocab_size = v.size();
  enc_cfg.seed = cfg.seed;

  std::vector<std::vector<int>> edus;
  bool any_maskable = false;
  for (const Corpus& c : corpora) {
    for (const Dialogue& d : c.dialogues) {
      for (const Edu& e : d.edus) {
        if (is_root_edu(e)) continue;
        auto ids = encode_edu(e, v, enc_cfg.max_edu_tokens);
        for (int id : ids) any_maskable = any_maskable || !Vocabulary::is_special(id);
        edus.push_back(std::move(ids));
      }
    }
  }
  require(any_maskable, "pretrain_mlm: no maskable tokens");

  auto t0 = std::chrono::steady_clock::now();
  auto ps = nn::init_mlm_params<Real>(enc_cfg);
  Rng rng(cfg.seed);
  const std::uint64_t eval_mask_seed = rng.fork_seed();

  // fixed masking for the comparable eval pass
  std::vector<std::vector<int>> eval_masked, eval_labels;
  {
    Rng eval_rng(eval_mask_seed);
    for (const auto& ids : edus) {
      auto [m, l] = mask_tokens(ids, cfg.mask_rate, v, eval_rng.fork_seed());
      eval_masked.push_back(std::move(m));
      eval_labels.push_back(std::move(l));
    }
  }
  auto eval_nll = [&]() -> double {
    double total = 0;
    std::int64_t n = 0;
    for (std::size_t start = 0; start < eval_masked.size(); start += static_cast<std::size_t>(cfg.batch_edus)) {
      const std::size_t stop = std::min(eval_masked.size(), start + static_cast<std::size_t>(cfg.batch_edus));
      std::vector<std::vector<int>> mb(eval_masked.begin() + static_cast<std::ptrdiff_t>(start),
                                       eval_masked.begin() + static_cast<std::ptrdiff_t>(stop));
      std::vector<std::vector<int>> lb(eval_labels.begin() + static_cast<std::ptrdiff_t>(start),
                                       eval_labels.begin() + static_cast<std::ptrdiff_t>(stop));
      std::int64_t selected = 0;
      for (const auto& l : lb)
        for (int x : l) selected += (x != kIgnoreLabel) ? 1 : 0;
      if (selected == 0) continue;
      auto loss = detail::mlm_batch_loss(mb, lb, ps, enc_cfg, nullptr);
      total += static_cast<double>(loss->value.data[0]) * static_cast<double>(selected);
      n += selected;
    }
    return n > 0 ? total / static_cast<double>(n) : 0.0;
  };

  PretrainResult<Real> result;
  result.enc = enc_cfg;
  result.log.eval_nll.push_back(eval_nll());

  std::vector<int> order(edus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_deterministic(order, rng);
    double loss_sum = 0;
    std::int64_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_edus)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_edus));
      std::vector<std::vector<int>> mb, lb;
      for (std::size_t k = start; k < stop; ++k) {
        auto [m, l] = mask_tokens(edus[static_cast<std::size_t>(order[k])], cfg.mask_rate, v, rng.fork_seed());
        mb.push_back(std::move(m));
        lb.push_back(std::move(l));
      }
      auto loss = detail::mlm_batch_loss(mb, lb, ps, enc_cfg, &rng);
      if (!loss) continue;
      ps.zero_grad();
      nn::backward(loss);
      nn::clip_grad_norm(ps, cfg.grad_clip_norm);
      nn::adamw_step(ps, cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay);
      loss_sum += static_cast<double>(loss->value.data[0]);
      batches += 1;
    }
    result.log.train_loss.push_back(batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0);
    result.log.eval_nll.push_back(eval_nll());
  }
  result.params = std::move(ps);
  result.log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace dparse
