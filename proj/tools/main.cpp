// convasr command-line harness: synth, train, pretrain, decode, score.
//
// Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric error.
// Every run writes a manifest next to its primary output; manifests are the
// only files that carry wall-clock values.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "convasr/checkpoint.hpp"
#include "convasr/config.hpp"
#include "convasr/decode.hpp"
#include "convasr/synth.hpp"
#include "convasr/train.hpp"

namespace {

using namespace convasr;

using Clock = std::chrono::steady_clock;

struct ManifestInfo {
  std::string command;
  std::vector<std::string> argv;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, double> echo;  // effective numeric settings
  Clock::time_point started = Clock::now();
};

void write_manifest(const ManifestInfo& info, const std::string& primary_output) {
  nlohmann::json doc;
  doc["command"] = info.command;
  doc["argv"] = info.argv;
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(info.config_hash));
  doc["config_hash"] = hex;
  doc["seed"] = info.seed;
  doc["inputs"] = info.inputs;
  doc["outputs"] = info.outputs;
  for (const auto& [k, v] : info.echo) doc[k] = v;
  doc["artifact"] = "convasr 0.1.0";
  doc["wall_ms"] =
      std::chrono::duration<double, std::milli>(Clock::now() - info.started).count();
  std::ofstream out(primary_output + ".manifest.json", std::ios::binary);
  if (!out) throw DataError("cannot write manifest for " + primary_output);
  out << doc.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// config key inventories

const std::set<std::string>& synth_keys() {
  static const std::set<std::string> keys = {
      "seed",
      "synth.n_conversations",
      "synth.utterances_per_conv",
      "synth.n_fillers",
      "synth.n_topic_words",
      "synth.n_ambiguous_pairs",
      "synth.fillers_per_utterance",
      "synth.feature_dim",
      "synth.frames_per_token",
      "synth.noise_sd",
      "synth.episode_seed",
      "synth.word_vectors_out",
      "synth.word_vectors_dim",
  };
  return keys;
}

const std::set<std::string>& model_context_keys() {
  static const std::set<std::string> keys = {
      "model.feature_dim",    "model.enc_layers",
      "model.enc_width",
      "model.subsample_factor", "model.att_dim",
      "model.att_conv_channels", "model.att_conv_width",
      "model.dec_layers",     "model.dec_width",
      "model.emb_dim",        "model.use_context_gating",
      "model.context_dim",    "model.gate_hidden_dim",
      "model.lambda",         "model.gamma",
      "context.n_history",    "context.merge",
      "embeddings.word_vectors", "embeddings.word_dim",
      "embeddings.sentence_file", "embeddings.sentence_stub_dim",
      "embeddings.init_word_embeddings",
  };
  return keys;
}

const std::set<std::string>& train_keys() {
  static std::set<std::string> keys = [] {
    std::set<std::string> k = model_context_keys();
    k.insert({"seed", "train.corpus", "train.dev_corpus", "train.dev_holdout",
              "train.max_words", "train.epochs", "train.batch_size", "train.clip_norm",
              "train.rho", "train.epsilon", "train.sampling_rate", "train.patience",
              "train.checkpoint_out", "train.metrics_out", "train.resume",
              "pretrain.corpus", "pretrain.epochs", "pretrain.checkpoint_out"});
    return k;
  }();
  return keys;
}

// ---------------------------------------------------------------------------
// shared assembly helpers

SynthConfig synth_config_from(const KeyValueConfig& cfg) {
  SynthConfig sc;
  sc.n_conversations = cfg.get_uint("synth.n_conversations", 8);
  sc.utterances_per_conv = cfg.get_uint("synth.utterances_per_conv", 6);
  sc.fillers_per_utterance = cfg.get_uint("synth.fillers_per_utterance", 1);
  sc.feature_dim = cfg.get_uint("synth.feature_dim", 8);
  sc.frames_per_token = cfg.get_uint("synth.frames_per_token", 4);
  sc.noise_sd = cfg.get_double("synth.noise_sd", 0.0);
  sc.seed = cfg.get_uint("seed", 1);
  sc.episode_seed = cfg.get_uint("synth.episode_seed", 0);
  synth_default_word_lists(sc, cfg.get_uint("synth.n_fillers", 6),
                           cfg.get_uint("synth.n_topic_words", 2),
                           cfg.get_uint("synth.n_ambiguous_pairs", 2));
  return sc;
}

struct EmbeddingSetup {
  std::shared_ptr<const WordEmbeddingTable> word_table;  // set for the bag path
  std::shared_ptr<SentenceEmbeddingProvider> provider;
};

EmbeddingSetup make_provider(const KeyValueConfig& cfg, std::uint64_t seed) {
  EmbeddingSetup setup;
  const std::string sentence_file = cfg.get_string("embeddings.sentence_file", "");
  const std::size_t stub_dim = cfg.get_uint("embeddings.sentence_stub_dim", 0);
  const std::string word_file = cfg.get_string("embeddings.word_vectors", "");
  if (!sentence_file.empty()) {
    setup.provider = PrecomputedSentenceProvider::load(sentence_file);
    return setup;
  }
  if (stub_dim > 0) {
    setup.provider = std::make_shared<HashSentenceProvider>(stub_dim, seed);
    return setup;
  }
  std::shared_ptr<WordEmbeddingTable> table;
  if (!word_file.empty()) {
    table = std::make_shared<WordEmbeddingTable>(WordEmbeddingTable::load(word_file, seed));
  } else {
    table = std::make_shared<WordEmbeddingTable>(cfg.get_uint("embeddings.word_dim", 16),
                                                 seed);
  }
  setup.word_table = table;
  setup.provider = std::make_shared<BagSentenceProvider>(table);
  return setup;
}

ModelConfig model_config_from(const KeyValueConfig& cfg, std::size_t feature_dim,
                              std::size_t vocab_size, std::size_t source_dim) {
  ModelConfig mc;
  mc.feature_dim = feature_dim;
  mc.enc_layers = cfg.get_uint("model.enc_layers", 2);
  mc.enc_width = cfg.get_uint("model.enc_width", 16);
  mc.subsample_factor = cfg.get_uint("model.subsample_factor", 4);
  mc.att_dim = cfg.get_uint("model.att_dim", 16);
  mc.att_conv_channels = cfg.get_uint("model.att_conv_channels", 10);
  mc.att_conv_width = cfg.get_uint("model.att_conv_width", 11);
  mc.dec_layers = cfg.get_uint("model.dec_layers", 2);
  mc.dec_width = cfg.get_uint("model.dec_width", 24);
  mc.emb_dim = cfg.get_uint("model.emb_dim", 12);
  mc.vocab_size = vocab_size;
  mc.use_context_gating = cfg.get_bool("model.use_context_gating", true);
  mc.context_dim = cfg.get_uint("model.context_dim", 8);
  mc.gate_hidden_dim = cfg.get_uint("model.gate_hidden_dim", 0);
  mc.lambda = cfg.get_double("model.lambda", 0.2);
  mc.gamma = cfg.get_double("model.gamma", 0.3);
  const std::size_t n_history = cfg.get_uint("context.n_history", 1);
  const ContextMerge merge =
      parse_context_merge(cfg.get_string("context.merge", "mean"));
  mc.context_source_dim = source_dim;
  mc.context_raw_dim =
      merge == ContextMerge::kConcat ? n_history * source_dim : source_dim;
  return mc;
}

TrainConfig train_config_from(const KeyValueConfig& cfg) {
  TrainConfig tc;
  tc.lambda = cfg.get_double("model.lambda", 0.2);
  tc.epochs = cfg.get_uint("train.epochs", 20);
  tc.batch_size = cfg.get_uint("train.batch_size", 8);
  tc.clip_norm = cfg.get_double("train.clip_norm", 5.0);
  tc.rho = cfg.get_double("train.rho", 0.95);
  tc.epsilon = cfg.get_double("train.epsilon", 1e-6);
  tc.sampling_rate = cfg.get_double("train.sampling_rate", 0.2);
  tc.n_history = cfg.get_uint("context.n_history", 1);
  tc.merge = parse_context_merge(cfg.get_string("context.merge", "mean"));
  tc.seed = cfg.get_uint("seed", 1);
  tc.patience = cfg.get_uint("train.patience", 0);
  tc.validate();
  return tc;
}

void maybe_init_word_embeddings(Model& model, const Vocabulary& vocab,
                                const KeyValueConfig& cfg,
                                const EmbeddingSetup& setup) {
  if (!cfg.get_bool("embeddings.init_word_embeddings", false)) return;
  if (!setup.word_table) {
    throw ConfigError("embeddings.init_word_embeddings needs the word-vector path");
  }
  if (setup.word_table->dim() != model.config().emb_dim) {
    throw ConfigError("word-vector dim " + std::to_string(setup.word_table->dim()) +
                      " != model.emb_dim " + std::to_string(model.config().emb_dim));
  }
  auto embed = model.param("dec.embed");
  const std::size_t d = model.config().emb_dim;
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    const auto& v = setup.word_table->vector(vocab.token(int(id)));
    for (std::size_t j = 0; j < d; ++j) embed->value[id * d + j] = v[j];
  }
}

// ---------------------------------------------------------------------------
// commands

int cmd_synth(const std::string& config_path, const std::string& out_path,
              const std::vector<std::pair<std::string, std::string>>& overrides,
              ManifestInfo& manifest) {
  KeyValueConfig cfg = KeyValueConfig::load(config_path);
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  cfg.restrict_keys(synth_keys());
  manifest.config_hash = cfg.hash();
  manifest.seed = cfg.get_uint("seed", 1);
  manifest.inputs = {config_path};

  SynthConfig sc = synth_config_from(cfg);
  Corpus corpus = synthesize_toy_corpus(sc);
  save_corpus(corpus, out_path);
  manifest.outputs.push_back(out_path);

  const std::string wv_out = cfg.get_string("synth.word_vectors_out", "");
  if (!wv_out.empty()) {
    synth_word_vectors(sc, cfg.get_uint("synth.word_vectors_dim", 16), wv_out);
    manifest.outputs.push_back(wv_out);
  }
  std::cout << "synth: " << corpus.size() << " conversations, "
            << corpus_num_utterances(corpus) << " utterances -> " << out_path << "\n";
  write_manifest(manifest, out_path);
  return 0;
}

struct LoadedTraining {
  Corpus train;
  Corpus dev;
  Vocabulary vocab;
};

LoadedTraining load_training_corpora(const KeyValueConfig& cfg,
                                     const std::string& corpus_key,
                                     ManifestInfo& manifest) {
  LoadedTraining data;
  const std::string corpus_path = cfg.require_string(corpus_key);
  manifest.inputs.push_back(corpus_path);
  data.train = load_corpus(corpus_path);
  const std::string dev_path = cfg.get_string("train.dev_corpus", "");
  const std::size_t holdout = cfg.get_uint("train.dev_holdout", 0);
  if (!dev_path.empty()) {
    manifest.inputs.push_back(dev_path);
    data.dev = load_corpus(dev_path);
  } else if (holdout > 0) {
    if (holdout >= data.train.size()) {
      throw ConfigError("train.dev_holdout must leave at least one conversation");
    }
    data.dev.assign(data.train.end() - std::ptrdiff_t(holdout), data.train.end());
    data.train.resize(data.train.size() - holdout);
  }
  data.vocab = build_vocabulary(corpus_transcripts(data.train),
                                cfg.get_uint("train.max_words", 10000));
  encode_corpus(data.train, data.vocab);
  encode_corpus(data.dev, data.vocab);
  return data;
}

int cmd_train(const std::string& config_path,
              const std::vector<std::pair<std::string, std::string>>& overrides,
              ManifestInfo& manifest, bool pretrain_mode) {
  KeyValueConfig cfg = KeyValueConfig::load(config_path);
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  cfg.restrict_keys(train_keys());
  manifest.config_hash = cfg.hash();
  const std::uint64_t seed = cfg.get_uint("seed", 1);
  manifest.seed = seed;
  manifest.inputs.push_back(config_path);

  const std::string corpus_key = pretrain_mode ? "pretrain.corpus" : "train.corpus";
  LoadedTraining data = load_training_corpora(cfg, corpus_key, manifest);
  EmbeddingSetup setup = make_provider(cfg, seed);
  TrainConfig tc = train_config_from(cfg);
  if (pretrain_mode) {
    tc.epochs = cfg.get_uint("pretrain.epochs", tc.epochs);
  }

  const std::string ckpt_out = pretrain_mode
                                   ? cfg.require_string("pretrain.checkpoint_out")
                                   : cfg.require_string("train.checkpoint_out");
  const std::string metrics_out =
      cfg.get_string("train.metrics_out", ckpt_out + ".metrics.jsonl");

  std::size_t epoch_offset = 0;
  std::unique_ptr<Model> model;
  const std::string resume = cfg.get_string("train.resume", "");
  if (!resume.empty()) {
    manifest.inputs.push_back(resume);
    Checkpoint ckpt = load_checkpoint(resume);
    auto [restored, ckpt_vocab] = restore_model(ckpt, &data.vocab);
    if (restored.config().feature_dim != corpus_feature_dim(data.train) &&
        !pretrain_mode) {
      throw ConfigError("resume checkpoint feature_dim does not match the corpus");
    }
    model = std::make_unique<Model>(std::move(restored));
    epoch_offset = ckpt.epochs_completed;
  } else {
    // text-only corpora carry no feature width; the model still needs the
    // speech width it will fine-tune on later
    std::size_t feature_dim = corpus_feature_dim(data.train);
    if (feature_dim == 0) feature_dim = cfg.get_uint("model.feature_dim", 8);
    if (!pretrain_mode && corpus_feature_dim(data.train) == 0) {
      throw DataError("training corpus has no feature matrices");
    }
    ModelConfig mc = model_config_from(cfg, feature_dim, data.vocab.size(),
                                       setup.provider->dim());
    model = std::make_unique<Model>(mc, seed);
    maybe_init_word_embeddings(*model, data.vocab, cfg, setup);
  }

  AdaDelta optimizer(tc.rho, tc.epsilon, tc.clip_norm);
  std::ofstream metrics(metrics_out, std::ios::binary);
  if (!metrics) throw DataError("cannot write metrics log " + metrics_out);

  const bool has_dev = !pretrain_mode && !data.dev.empty();
  double best_acc = -1.0;
  std::size_t best_epoch = 0;
  std::map<std::string, std::vector<double>> best_params;
  std::size_t stale = 0;

  for (std::size_t e = 0; e < tc.epochs; ++e) {
    const std::size_t epoch = epoch_offset + e;
    EpochStats stats =
        pretrain_mode
            ? pretrain_decoder_epoch(*model, data.train, *setup.provider, tc,
                                     optimizer, epoch)
            : train_epoch(*model, data.train, data.vocab, *setup.provider, tc,
                          optimizer, epoch);
    if (!pretrain_mode && !data.dev.empty()) {
      stats.dev_accuracy = dev_accuracy(*model, data.dev, data.vocab, *setup.provider,
                                        tc.n_history, tc.merge);
    }
    nlohmann::json line;
    line["epoch"] = epoch;
    line["joint_nll"] = stats.joint_nll;
    line["ctc_nll"] = stats.ctc_nll;
    line["att_nll"] = stats.att_nll;
    line["utterances"] = stats.utterances;
    line["tokens"] = stats.tokens;
    line["skipped_ctc"] = stats.skipped_ctc;
    line["dev_accuracy"] = stats.dev_accuracy;
    line["wall_seconds"] = stats.wall_seconds;
    metrics << line.dump() << "\n";
    metrics.flush();
    std::cout << "epoch " << epoch << ": joint " << stats.joint_nll << " att "
              << stats.att_nll;
    if (stats.dev_accuracy >= 0) std::cout << " dev_acc " << stats.dev_accuracy;
    std::cout << "\n";

    if (has_dev) {
      if (stats.dev_accuracy > best_acc) {
        best_acc = stats.dev_accuracy;
        best_epoch = epoch;
        best_params.clear();
        for (const auto& [name, p] : model->params()) best_params[name] = p->value;
        stale = 0;
      } else {
        ++stale;
        if (tc.patience > 0 && stale >= tc.patience) break;
      }
    }
  }

  // checkpoint the best dev-accuracy epoch when one was tracked
  if (!best_params.empty() && best_acc >= 0.0) {
    for (auto& [name, p] : model->params()) p->value = best_params[name];
    std::cout << "best epoch " << best_epoch << " dev_acc " << best_acc << "\n";
  }
  save_checkpoint(*model, data.vocab, seed, epoch_offset + tc.epochs, tc.n_history,
                  tc.merge, ckpt_out);
  manifest.outputs = {ckpt_out, metrics_out};
  manifest.echo["lambda"] = tc.lambda;
  manifest.echo["sampling_rate"] = tc.sampling_rate;
  write_manifest(manifest, ckpt_out);
  return 0;
}

int cmd_decode(const std::string& ckpt_path, const std::string& corpus_path,
               const std::string& out_path, const KeyValueConfig& flags,
               ManifestInfo& manifest) {
  manifest.inputs = {ckpt_path, corpus_path};
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  auto [model, vocab] = restore_model(ckpt);
  Corpus corpus = load_corpus(corpus_path);

  manifest.seed = ckpt.seed;
  manifest.config_hash = flags.hash();

  KeyValueConfig provider_cfg = flags;
  if (provider_cfg.get_string("embeddings.sentence_file", "").empty() &&
      provider_cfg.get_uint("embeddings.sentence_stub_dim", 0) == 0 &&
      provider_cfg.get_string("embeddings.word_vectors", "").empty()) {
    provider_cfg.set("embeddings.word_dim",
                     std::to_string(model.config().context_source_dim));
  }
  EmbeddingSetup setup = make_provider(provider_cfg, ckpt.seed);

  DecodeConfig dc;
  dc.beam = flags.get_uint("decode.beam", 10);
  dc.gamma = flags.get_double("decode.gamma", model.config().gamma);
  dc.length_penalty = flags.get_double("decode.length_penalty", 0.5);
  dc.max_len = flags.get_uint("decode.max_len", 0);
  dc.n_history = ckpt.n_history;
  dc.merge = ckpt.merge;

  std::vector<DecodedUtterance> all;
  for (const auto& conv : corpus) {
    auto hyps = decode_conversation(model, conv, vocab, *setup.provider, dc);
    all.insert(all.end(), hyps.begin(), hyps.end());
  }
  save_hypotheses(all, out_path);
  std::cout << "decode: " << all.size() << " hypotheses -> " << out_path << "\n";
  manifest.outputs = {out_path};
  manifest.echo["beam"] = double(dc.beam);
  manifest.echo["gamma"] = dc.gamma;
  manifest.echo["length_penalty"] = dc.length_penalty;
  write_manifest(manifest, out_path);
  return 0;
}

int cmd_score(const std::string& ref_path, const std::string& hyp_path,
              const std::string& report_base, const KeyValueConfig& flags,
              ManifestInfo& manifest) {
  manifest.inputs = {ref_path, hyp_path};
  manifest.config_hash = flags.hash();
  manifest.seed = flags.get_uint("seed", 1);

  Corpus ref = load_corpus(ref_path);
  auto hyps = load_hypotheses(hyp_path);
  std::map<UtteranceKey, std::vector<std::string>> by_key;
  for (auto& h : hyps) {
    if (!by_key.emplace(h.key, h.words).second) {
      throw DataError("duplicate hypothesis for (" + h.key.conv_id + ", " +
                      std::to_string(h.key.index) + ")");
    }
  }

  KeyValueConfig provider_cfg = flags;
  if (provider_cfg.get_string("embeddings.sentence_file", "").empty() &&
      provider_cfg.get_string("embeddings.word_vectors", "").empty() &&
      provider_cfg.get_uint("embeddings.sentence_stub_dim", 0) == 0) {
    provider_cfg.set("embeddings.sentence_stub_dim", "16");
  }
  EmbeddingSetup setup = make_provider(provider_cfg, manifest.seed);

  EvalReport report = evaluate_corpus(ref, by_key, setup.provider.get());
  const std::string txt = report_base + ".txt";
  const std::string js = report_base + ".json";
  write_report(report, txt, js);
  std::cout << "utterances = " << report.utterances.size() << "\n";
  std::cout << "corpus_wer = " << report.corpus_wer << "\n";
  if (report.conversational_distance_score >= 0) {
    std::cout << "conversational_distance = " << report.conversational_distance_score
              << "\n";
  }
  manifest.outputs = {txt, js};
  write_manifest(manifest, txt);
  return 0;
}

std::vector<std::pair<std::string, std::string>> parse_overrides(
    const std::vector<std::string>& sets) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects key=value, got '" + s + "'");
    }
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conversational-context end-to-end speech recognition harness"};
  app.require_subcommand(1);

  std::string config_path, out_path, ckpt_path, corpus_path, ref_path, hyp_path,
      report_base;
  std::vector<std::string> sets;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("config", config_path, "config file")->required();
  synth->add_option("out", out_path, "output corpus path")->required();
  synth->add_option("--set", sets, "override config key=value");

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("config", config_path, "config file")->required();
  train->add_option("--set", sets, "override config key=value");

  auto* pretrain = app.add_subcommand("pretrain", "pretrain the decoder on text");
  pretrain->add_option("config", config_path, "config file")->required();
  pretrain->add_option("--set", sets, "override config key=value");

  double gamma = 0.3, length_penalty = 0.5;
  std::size_t beam = 10, max_len = 0, stub_dim = 0;
  std::string word_vectors, sentence_file;
  auto* decode = app.add_subcommand("decode", "beam-decode a corpus");
  decode->add_option("checkpoint", ckpt_path)->required();
  decode->add_option("corpus", corpus_path)->required();
  decode->add_option("out", out_path)->required();
  decode->add_option("--beam", beam, "beam width (default 10)");
  decode->add_option("--gamma", gamma, "CTC weight in joint scoring (default 0.3)");
  decode->add_option("--length-penalty", length_penalty,
                     "per-word score reward (default 0.5)");
  decode->add_option("--max-len", max_len, "output length cap (0: frames+10)");
  decode->add_option("--word-vectors", word_vectors, "context word-vector file");
  decode->add_option("--sentence-file", sentence_file, "precomputed sentence vectors");
  decode->add_option("--stub-dim", stub_dim, "hash-stub sentence provider width");

  std::uint64_t score_seed = 1;
  auto* score = app.add_subcommand("score", "score hypotheses against references");
  score->add_option("ref", ref_path)->required();
  score->add_option("hyp", hyp_path)->required();
  score->add_option("report", report_base, "report base path (.txt/.json)")->required();
  score->add_option("--word-vectors", word_vectors, "embedding source for distances");
  score->add_option("--sentence-file", sentence_file, "precomputed sentence vectors");
  score->add_option("--stub-dim", stub_dim, "hash-stub provider width (default 16)");
  score->add_option("--seed", score_seed, "seed for stub/imputation draws");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  ManifestInfo manifest;
  for (int i = 0; i < argc; ++i) manifest.argv.push_back(argv[i]);

  try {
    if (synth->parsed()) {
      manifest.command = "synth";
      return cmd_synth(config_path, out_path, parse_overrides(sets), manifest);
    }
    if (train->parsed()) {
      manifest.command = "train";
      return cmd_train(config_path, parse_overrides(sets), manifest, false);
    }
    if (pretrain->parsed()) {
      manifest.command = "pretrain";
      return cmd_train(config_path, parse_overrides(sets), manifest, true);
    }
    if (decode->parsed()) {
      manifest.command = "decode";
      KeyValueConfig flags;
      flags.set("decode.beam", std::to_string(beam));
      flags.set("decode.gamma", std::to_string(gamma));
      flags.set("decode.length_penalty", std::to_string(length_penalty));
      flags.set("decode.max_len", std::to_string(max_len));
      if (!word_vectors.empty()) flags.set("embeddings.word_vectors", word_vectors);
      if (!sentence_file.empty()) flags.set("embeddings.sentence_file", sentence_file);
      if (stub_dim > 0) {
        flags.set("embeddings.sentence_stub_dim", std::to_string(stub_dim));
      }
      return cmd_decode(ckpt_path, corpus_path, out_path, flags, manifest);
    }
    if (score->parsed()) {
      manifest.command = "score";
      KeyValueConfig flags;
      flags.set("seed", std::to_string(score_seed));
      if (!word_vectors.empty()) flags.set("embeddings.word_vectors", word_vectors);
      if (!sentence_file.empty()) flags.set("embeddings.sentence_file", sentence_file);
      if (stub_dim > 0) {
        flags.set("embeddings.sentence_stub_dim", std::to_string(stub_dim));
      }
      return cmd_score(ref_path, hyp_path, report_base, flags, manifest);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}
