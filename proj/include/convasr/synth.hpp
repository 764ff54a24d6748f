// Synthetic conversational corpus generator.
//
// Each conversation follows a latent two-way topic chain t_0..t_{K-1} (iid,
// seeded). Utterance k is composed of: the ambiguous word selected by the
// CURRENT topic t_k, filler words, and a topic word announcing the NEXT
// topic t_{k+1}. Both members of an ambiguous pair share one feature
// prototype, so the utterance itself carries no signal (acoustic or textual)
// about which member it contains; only the preceding utterance's topic word
// disambiguates. Features are per-token prototypes repeated frames_per_token
// times plus Gaussian noise.
//
// Prototypes and word identities are keyed by `seed` alone; utterance
// composition and noise are keyed by `episode_seed`, so corpora sharing a
// seed but not an episode_seed are acoustically consistent held-out sets.
#pragma once

#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "convasr/corpus.hpp"

namespace convasr {

struct SynthConfig {
  std::size_t n_conversations = 8;
  std::size_t utterances_per_conv = 6;
  std::vector<std::string> filler_words;
  std::vector<std::vector<std::string>> topic_words;  // exactly two topics
  std::vector<std::pair<std::string, std::string>> ambiguous_pairs;
  std::size_t fillers_per_utterance = 1;
  std::size_t feature_dim = 8;
  std::size_t frames_per_token = 4;  // keeps >= 1 frame per token after x4 subsampling
  double noise_sd = 0.0;
  std::uint64_t seed = 1;
  std::uint64_t episode_seed = 0;  // 0 means: use seed
};

inline void synth_default_word_lists(SynthConfig& cfg, std::size_t n_fillers = 6,
                                     std::size_t n_topic_words = 2,
                                     std::size_t n_pairs = 2) {
  cfg.filler_words.clear();
  cfg.topic_words.assign(2, {});
  cfg.ambiguous_pairs.clear();
  for (std::size_t i = 0; i < n_fillers; ++i) {
    cfg.filler_words.push_back("fill" + std::to_string(i));
  }
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t i = 0; i < n_topic_words; ++i) {
      cfg.topic_words[t].push_back("topic" + std::to_string(t) + "w" + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < n_pairs; ++i) {
    cfg.ambiguous_pairs.emplace_back("amb" + std::to_string(i) + "a",
                                     "amb" + std::to_string(i) + "b");
  }
}

namespace detail {

inline void validate_synth_config(const SynthConfig& cfg) {
  if (cfg.feature_dim < 2) throw ConfigError("synth: feature_dim must be >= 2");
  if (cfg.ambiguous_pairs.empty()) throw ConfigError("synth: ambiguous_pairs must be nonempty");
  if (cfg.topic_words.size() != 2 || cfg.topic_words[0].empty() || cfg.topic_words[1].empty()) {
    throw ConfigError("synth: exactly two nonempty topic word lists required");
  }
  if (cfg.n_conversations < 1 || cfg.utterances_per_conv < 1) {
    throw ConfigError("synth: need >= 1 conversation and >= 1 utterance each");
  }
  if (cfg.frames_per_token < 1) throw ConfigError("synth: frames_per_token must be >= 1");
  std::set<std::string> seen;
  auto add = [&seen](const std::string& w) {
    if (!seen.insert(w).second) throw ConfigError("synth: word '" + w + "' used twice");
  };
  for (const auto& w : cfg.filler_words) add(w);
  for (const auto& ws : cfg.topic_words) {
    for (const auto& w : ws) add(w);
  }
  for (const auto& [a, b] : cfg.ambiguous_pairs) {
    add(a);
    add(b);
  }
}

inline std::vector<double> word_prototype(const SynthConfig& cfg, const std::string& word) {
  // Members of an ambiguous pair share the first member's prototype.
  std::string key = word;
  for (const auto& [a, b] : cfg.ambiguous_pairs) {
    if (word == b) {
      key = a;
      break;
    }
  }
  Rng rng = Rng(cfg.seed).derive("prototype").derive(key);
  std::vector<double> v(cfg.feature_dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace detail

inline Corpus synthesize_toy_corpus(const SynthConfig& cfg) {
  detail::validate_synth_config(cfg);
  const std::uint64_t episode = cfg.episode_seed == 0 ? cfg.seed : cfg.episode_seed;
  Rng episode_rng = Rng(episode).derive("episode");

  Corpus corpus;
  corpus.reserve(cfg.n_conversations);
  for (std::size_t ci = 0; ci < cfg.n_conversations; ++ci) {
    Rng conv_rng = episode_rng.derive(ci);
    Conversation conv;
    {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "conv%04zu", ci);
      conv.id = buf;
    }
    const std::size_t K = cfg.utterances_per_conv;
    std::vector<int> chain(K + 1);
    for (auto& t : chain) t = int(conv_rng.below(2));

    for (std::size_t k = 0; k < K; ++k) {
      Utterance utt;
      utt.conv_id = conv.id;
      utt.index = int(k);

      const auto& pair = cfg.ambiguous_pairs[conv_rng.below(cfg.ambiguous_pairs.size())];
      const std::string amb = chain[k] == 0 ? pair.first : pair.second;
      const auto& announce_list = cfg.topic_words[std::size_t(chain[k + 1])];
      const std::string topic_word = announce_list[conv_rng.below(announce_list.size())];

      utt.words.push_back(amb);
      for (std::size_t f = 0; f < cfg.fillers_per_utterance; ++f) {
        if (cfg.filler_words.empty()) break;
        utt.words.push_back(cfg.filler_words[conv_rng.below(cfg.filler_words.size())]);
      }
      utt.words.push_back(topic_word);

      const std::size_t T = utt.words.size() * cfg.frames_per_token;
      utt.features.rows = T;
      utt.features.cols = cfg.feature_dim;
      utt.features.data.resize(T * cfg.feature_dim);
      std::size_t row = 0;
      for (const auto& w : utt.words) {
        const std::vector<double> proto = detail::word_prototype(cfg, w);
        for (std::size_t r = 0; r < cfg.frames_per_token; ++r, ++row) {
          for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
            double v = proto[d];
            if (cfg.noise_sd > 0.0) v += cfg.noise_sd * conv_rng.normal();
            utt.features.data[row * cfg.feature_dim + d] = v;
          }
        }
      }
      conv.utterances.push_back(std::move(utt));
    }
    corpus.push_back(std::move(conv));
  }
  return corpus;
}

/// All words the generator can emit, in a deterministic order.
inline std::vector<std::string> synth_word_inventory(const SynthConfig& cfg) {
  std::vector<std::string> words;
  for (const auto& [a, b] : cfg.ambiguous_pairs) {
    words.push_back(a);
    words.push_back(b);
  }
  for (const auto& w : cfg.filler_words) words.push_back(w);
  for (const auto& ws : cfg.topic_words) {
    for (const auto& w : ws) words.push_back(w);
  }
  return words;
}

/// Companion word-vector table with topic structure: each topic's words (its
/// topic words and its ambiguous-pair members) cluster near a per-topic
/// centroid; fillers sit near the origin. Stand-in for pretrained semantic
/// embeddings at desk scale. Written in the standard "count dim" text format.
inline void synth_word_vectors(const SynthConfig& cfg, std::size_t dim,
                               const std::string& out_path) {
  detail::validate_synth_config(cfg);
  if (dim < 2) throw ConfigError("synth_word_vectors: dim must be >= 2");
  Rng rng = Rng(cfg.seed).derive("word-vectors");
  std::vector<std::vector<double>> centroid(2, std::vector<double>(dim));
  for (auto& c : centroid) {
    for (auto& x : c) x = rng.normal();
  }
  auto jitter = [&](Rng& r) {
    std::vector<double> v(dim);
    for (auto& x : v) x = 0.1 * r.normal();
    return v;
  };
  auto emit = [&](std::ofstream& out, const std::string& w, int topic) {
    Rng r = rng.derive(w);
    std::vector<double> v = jitter(r);
    if (topic >= 0) {
      for (std::size_t d = 0; d < dim; ++d) v[d] += centroid[std::size_t(topic)][d];
    }
    out << w;
    for (double x : v) out << " " << x;
    out << "\n";
  };

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw DataError("cannot write word-vector file " + out_path);
  out.precision(17);
  const std::vector<std::string> words = synth_word_inventory(cfg);
  out << words.size() << " " << dim << "\n";
  for (const auto& [a, b] : cfg.ambiguous_pairs) {
    emit(out, a, 0);
    emit(out, b, 1);
  }
  for (const auto& w : cfg.filler_words) emit(out, w, -1);
  for (int t = 0; t < 2; ++t) {
    for (const auto& w : cfg.topic_words[std::size_t(t)]) emit(out, w, t);
  }
}

}  // namespace convasr
