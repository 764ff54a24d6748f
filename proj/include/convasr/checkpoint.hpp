// Versioned checkpoint container: model config echo, every parameter tensor
// as little-endian 64-bit floats, the vocabulary (tokens plus hash), and seed
// provenance. Loading verifies the embedded hash and, when the caller knows
// which vocabulary it expects, rejects mismatches.
#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "convasr/embeddings.hpp"
#include "convasr/model.hpp"
#include "convasr/vocab.hpp"

namespace convasr {

inline constexpr const char* kCheckpointFormat = "convasr-checkpoint-v1";

struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> vocab_tokens;
  std::uint64_t vocab_hash = 0;
  std::uint64_t seed = 0;
  std::size_t epochs_completed = 0;
  std::size_t n_history = 1;
  ContextMerge merge = ContextMerge::kMean;
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<double>>> params;
};

namespace detail {

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["feature_dim"] = c.feature_dim;
  j["enc_layers"] = c.enc_layers;
  j["enc_width"] = c.enc_width;
  j["subsample_factor"] = c.subsample_factor;
  j["att_dim"] = c.att_dim;
  j["att_conv_channels"] = c.att_conv_channels;
  j["att_conv_width"] = c.att_conv_width;
  j["dec_layers"] = c.dec_layers;
  j["dec_width"] = c.dec_width;
  j["emb_dim"] = c.emb_dim;
  j["vocab_size"] = c.vocab_size;
  j["use_context_gating"] = c.use_context_gating;
  j["context_dim"] = c.context_dim;
  j["context_source_dim"] = c.context_source_dim;
  j["context_raw_dim"] = c.context_raw_dim;
  j["gate_hidden_dim"] = c.gate_hidden_dim;
  j["lambda"] = c.lambda;
  j["gamma"] = c.gamma;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.enc_layers = j.at("enc_layers").get<std::size_t>();
  c.enc_width = j.at("enc_width").get<std::size_t>();
  c.subsample_factor = j.at("subsample_factor").get<std::size_t>();
  c.att_dim = j.at("att_dim").get<std::size_t>();
  c.att_conv_channels = j.at("att_conv_channels").get<std::size_t>();
  c.att_conv_width = j.at("att_conv_width").get<std::size_t>();
  c.dec_layers = j.at("dec_layers").get<std::size_t>();
  c.dec_width = j.at("dec_width").get<std::size_t>();
  c.emb_dim = j.at("emb_dim").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.use_context_gating = j.at("use_context_gating").get<bool>();
  c.context_dim = j.at("context_dim").get<std::size_t>();
  c.context_source_dim = j.at("context_source_dim").get<std::size_t>();
  c.context_raw_dim = j.at("context_raw_dim").get<std::size_t>();
  c.gate_hidden_dim = j.at("gate_hidden_dim").get<std::size_t>();
  c.lambda = j.at("lambda").get<double>();
  c.gamma = j.at("gamma").get<double>();
  return c;
}

}  // namespace detail

inline void save_checkpoint(const Model& model, const Vocabulary& vocab,
                            std::uint64_t seed, std::size_t epochs_completed,
                            std::size_t n_history, ContextMerge merge,
                            const std::string& path) {
  nlohmann::json doc;
  doc["format"] = kCheckpointFormat;
  doc["config"] = detail::model_config_to_json(model.config());
  doc["vocab"] = vocab.tokens();
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(vocab.hash()));
  doc["vocab_hash"] = hash_hex;
  doc["seed"] = seed;
  doc["epochs_completed"] = epochs_completed;
  doc["context_n_history"] = n_history;
  doc["context_merge"] = merge == ContextMerge::kMean ? "mean" : "concat";
  auto& params = doc["params"];
  params = nlohmann::json::array();
  for (const auto& [name, p] : model.params()) {
    nlohmann::json rec;
    rec["name"] = name;
    rec["shape"] = p->shape;
    rec["data"] = doubles_to_base64(p->value);
    params.push_back(std::move(rec));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out << doc.dump() << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
  if (doc.value("format", "") != kCheckpointFormat) {
    throw DataError("checkpoint " + path + ": unknown format");
  }
  Checkpoint ckpt;
  ckpt.config = detail::model_config_from_json(doc.at("config"));
  ckpt.vocab_tokens = doc.at("vocab").get<std::vector<std::string>>();
  ckpt.vocab_hash =
      std::stoull(doc.at("vocab_hash").get<std::string>(), nullptr, 16);
  ckpt.seed = doc.at("seed").get<std::uint64_t>();
  ckpt.epochs_completed = doc.at("epochs_completed").get<std::size_t>();
  ckpt.n_history = doc.at("context_n_history").get<std::size_t>();
  ckpt.merge = parse_context_merge(doc.at("context_merge").get<std::string>());
  for (const auto& rec : doc.at("params")) {
    ckpt.params[rec.at("name").get<std::string>()] = {
        rec.at("shape").get<std::vector<std::size_t>>(),
        base64_to_doubles(rec.at("data").get<std::string>())};
  }
  const std::uint64_t recomputed = Vocabulary::from_tokens(ckpt.vocab_tokens).hash();
  if (recomputed != ckpt.vocab_hash) {
    throw DataError("checkpoint " + path + ": vocabulary hash mismatch");
  }
  return ckpt;
}

/// Rebuild the model and vocabulary a checkpoint describes. When
/// expected_vocab is supplied its hash must match the stored one.
inline std::pair<Model, Vocabulary> restore_model(
    const Checkpoint& ckpt, const Vocabulary* expected_vocab = nullptr) {
  Vocabulary vocab = Vocabulary::from_tokens(ckpt.vocab_tokens);
  if (expected_vocab != nullptr && expected_vocab->hash() != ckpt.vocab_hash) {
    throw DataError("vocabulary hash mismatch: checkpoint was trained on a "
                    "different token inventory");
  }
  Model model(ckpt.config, ckpt.seed);
  for (auto& [name, shaped] : ckpt.params) {
    auto it = model.params().find(name);
    if (it == model.params().end()) {
      throw DataError("checkpoint parameter " + name + " not in model");
    }
    if (it->second->shape != shaped.first) {
      throw DataError("checkpoint parameter " + name + " has shape " +
                      shape_str(shaped.first) + ", model expects " +
                      shape_str(it->second->shape));
    }
    it->second->value = shaped.second;
  }
  for (const auto& [name, p] : model.params()) {
    if (ckpt.params.find(name) == ckpt.params.end()) {
      throw DataError("checkpoint is missing parameter " + name);
    }
  }
  return {std::move(model), std::move(vocab)};
}

}  // namespace convasr
