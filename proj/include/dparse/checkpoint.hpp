#pragma once

#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "dparse/params.hpp"
#include "json.hpp"

namespace dparse::nn {

// Checkpoint file layout: a one-line JSON manifest
//   {"format_version":1, "config":{...}, "params":[{"name","shape","offset"},...]}
// followed by "\n" and the parameter data as raw little-endian 32-bit floats
// in manifest order. `offset` counts elements into the payload.
inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  EncoderConfig config;
  std::vector<std::pair<std::string, Tensor<float>>> params;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : params) {
      if (n == name) return &t;
    }
    return nullptr;
  }
};

namespace detail {

inline void put_f32_le(std::string& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

inline float get_f32_le(const unsigned char* p) {
  const std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

inline nlohmann::ordered_json config_json(const EncoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},       {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},       {"d_ff", c.d_ff},             {"max_edu_tokens", c.max_edu_tokens},
          {"gru_hidden", c.gru_hidden}, {"dropout_rate", c.dropout_rate}, {"seed", c.seed}};
}

inline EncoderConfig config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.max_edu_tokens = j.at("max_edu_tokens").get<int>();
  c.gru_hidden = j.at("gru_hidden").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace detail

template <class Real>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<Real>& ps,
                     const EncoderConfig& cfg) {
  nlohmann::ordered_json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["config"] = detail::config_json(cfg);
  auto& entries = manifest["params"] = nlohmann::ordered_json::array();
  std::string payload;
  std::int64_t offset = 0;
  for (const auto& name : ps.names()) {
    const Tensor<Real>& t = ps.node(name)->value;
    entries.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    for (Real v : t.data) detail::put_f32_le(payload, static_cast<float>(v));
    offset += t.numel();
  }
  write_file(path, manifest.dump() + "\n" + payload);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  const std::size_t nl = raw.find('\n');
  require(nl != std::string::npos, "checkpoint: missing manifest line in " + path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(raw.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    fail("checkpoint: bad manifest in " + path.string() + ": " + e.what());
  }
  require(manifest.value("format_version", -1) == kCheckpointFormatVersion,
          "checkpoint: unsupported format_version in " + path.string());

  Checkpoint ck;
  ck.config = detail::config_from_json(manifest.at("config"));
  const unsigned char* payload = reinterpret_cast<const unsigned char*>(raw.data()) + nl + 1;
  const std::size_t payload_bytes = raw.size() - nl - 1;
  require(payload_bytes % 4 == 0, "checkpoint: payload size mismatch in " + path.string());
  const std::int64_t payload_elems = static_cast<std::int64_t>(payload_bytes / 4);
  std::int64_t total = 0;
  for (const auto& e : manifest.at("params")) {
    Tensor<float> t(e.at("shape").get<std::vector<int>>());
    const std::int64_t offset = e.at("offset").get<std::int64_t>();
    require(offset == total, "checkpoint: non-contiguous offsets in " + path.string());
    require(offset + t.numel() <= payload_elems, "checkpoint: truncated payload in " + path.string());
    for (std::int64_t i = 0; i < t.numel(); ++i)
      t.data[static_cast<std::size_t>(i)] = detail::get_f32_le(payload + (offset + i) * 4);
    total += t.numel();
    ck.params.emplace_back(e.at("name").get<std::string>(), std::move(t));
  }
  require(total == payload_elems, "checkpoint: payload size mismatch in " + path.string());
  return ck;
}

// Full restore: the store and the checkpoint must hold exactly the same
// parameters in the same order.
template <class Real>
void restore_params(ParamStore<Real>& ps, const Checkpoint& ck) {
  require(ps.names().size() == ck.params.size(), "restore_params: parameter count mismatch");
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    const auto& [name, t] = ck.params[i];
    require(ps.names()[i] == name, "restore_params: parameter order mismatch at " + name);
    Tensor<Real>& dst = ps.entry(name).node->value;
    require(dst.shape == t.shape, "restore_params: shape mismatch for " + name);
    for (std::size_t j = 0; j < t.data.size(); ++j) dst.data[j] = static_cast<Real>(t.data[j]);
  }
}

inline bool encoder_config_compatible(const EncoderConfig& a, const EncoderConfig& b) {
  return a.vocab_size == b.vocab_size && a.d_model == b.d_model && a.n_layers == b.n_layers &&
         a.n_heads == b.n_heads && a.d_ff == b.d_ff && a.max_edu_tokens == b.max_edu_tokens;
}

// Copies the token encoder (embedding + transformer) out of a pretraining
// checkpoint into a parser store; the GRU and heads keep their fresh init.
template <class Real>
void load_backbone(ParamStore<Real>& ps, const Checkpoint& ck, const EncoderConfig& cfg) {
  require(encoder_config_compatible(cfg, ck.config),
          "load_backbone: vocabulary/checkpoint config mismatch (encoder dims or vocab size differ)");
  for (const auto& name : ps.names()) {
    if (name != "embed" && name.rfind("enc.", 0) != 0) continue;
    const Tensor<float>* src = ck.find(name);
    require(src != nullptr, "load_backbone: checkpoint lacks parameter " + name);
    Tensor<Real>& dst = ps.entry(name).node->value;
    require(dst.shape == src->shape, "load_backbone: shape mismatch for " + name);
    for (std::size_t j = 0; j < src->data.size(); ++j) dst.data[j] = static_cast<Real>(src->data[j]);
  }
}

}  // namespace dparse::nn
