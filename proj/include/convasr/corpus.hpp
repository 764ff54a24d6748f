// Conversational corpus: onset-ordered utterances, line-delimited storage,
// and conversation-parallel batching with dummy fill.
//
// Corpus file: one JSON object per line with keys conv_id, index, transcript,
// feat_rows, feat_cols, features (base64 of little-endian 64-bit floats,
// row-major). Text-only utterances omit the three feature keys.
#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "convasr/common.hpp"
#include "convasr/vocab.hpp"

namespace convasr {

struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct Utterance {
  std::string conv_id;
  int index = 0;  // 0-based onset order within the conversation
  std::vector<std::string> words;
  FeatureMatrix features;  // rows == 0 marks a text-only utterance
  std::vector<int> token_ids;

  bool text_only() const { return features.rows == 0; }
};

struct Conversation {
  std::string id;
  std::vector<Utterance> utterances;  // sorted ascending by index
};

using Corpus = std::vector<Conversation>;

inline std::size_t corpus_num_utterances(const Corpus& corpus) {
  std::size_t n = 0;
  for (const auto& c : corpus) n += c.utterances.size();
  return n;
}

/// Uniform feature width across the corpus; 0 if every utterance is text-only.
inline std::size_t corpus_feature_dim(const Corpus& corpus) {
  for (const auto& c : corpus) {
    for (const auto& u : c.utterances) {
      if (!u.text_only()) return u.features.cols;
    }
  }
  return 0;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file " + path);
  for (const auto& conv : corpus) {
    for (const auto& utt : conv.utterances) {
      nlohmann::json rec;
      rec["conv_id"] = conv.id;
      rec["index"] = utt.index;
      rec["transcript"] = join_words(utt.words);
      if (!utt.text_only()) {
        rec["feat_rows"] = utt.features.rows;
        rec["feat_cols"] = utt.features.cols;
        rec["features"] = doubles_to_base64(utt.features.data);
      }
      out << rec.dump() << "\n";
    }
  }
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read corpus file " + path);

  std::map<std::string, std::map<int, Utterance>> by_conv;
  std::vector<std::string> conv_order;
  std::size_t feature_dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    Utterance utt;
    try {
      utt.conv_id = rec.at("conv_id").get<std::string>();
      utt.index = rec.at("index").get<int>();
      utt.words = split_words(rec.at("transcript").get<std::string>());
      if (rec.contains("features") || rec.contains("feat_rows") ||
          rec.contains("feat_cols")) {
        utt.features.rows = rec.at("feat_rows").get<std::size_t>();
        utt.features.cols = rec.at("feat_cols").get<std::size_t>();
        utt.features.data = base64_to_doubles(rec.at("features").get<std::string>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!utt.text_only()) {
      if (utt.features.data.size() != utt.features.rows * utt.features.cols) {
        throw DataError("corpus line " + std::to_string(line_no) +
                        ": feature payload does not match feat_rows x feat_cols");
      }
      if (utt.features.rows < 1) {
        throw DataError("corpus line " + std::to_string(line_no) +
                        ": feat_rows must be >= 1");
      }
      if (feature_dim == 0) {
        feature_dim = utt.features.cols;
      } else if (utt.features.cols != feature_dim) {
        throw DataError("corpus line " + std::to_string(line_no) +
                        ": ragged feature dimension " +
                        std::to_string(utt.features.cols) + " (corpus uses " +
                        std::to_string(feature_dim) + ")");
      }
      for (double v : utt.features.data) {
        if (!std::isfinite(v)) {
          throw DataError("corpus line " + std::to_string(line_no) +
                          ": non-finite feature value");
        }
      }
    }
    if (by_conv.find(utt.conv_id) == by_conv.end()) conv_order.push_back(utt.conv_id);
    auto& slots = by_conv[utt.conv_id];
    if (!slots.emplace(utt.index, std::move(utt)).second) {
      throw DataError("duplicate utterance (" + rec.at("conv_id").get<std::string>() +
                      ", " + std::to_string(rec.at("index").get<int>()) + ")");
    }
  }

  Corpus corpus;
  corpus.reserve(conv_order.size());
  for (const auto& id : conv_order) {
    Conversation conv;
    conv.id = id;
    auto& slots = by_conv[id];
    int expected = 0;
    for (auto& [idx, utt] : slots) {
      if (idx != expected) {
        throw DataError("conversation " + id + ": utterance indices not contiguous (expected " +
                        std::to_string(expected) + ", found " + std::to_string(idx) + ")");
      }
      ++expected;
      conv.utterances.push_back(std::move(utt));
    }
    corpus.push_back(std::move(conv));
  }
  return corpus;
}

/// Encode every transcript in place against a vocabulary.
inline void encode_corpus(Corpus& corpus, const Vocabulary& vocab) {
  for (auto& conv : corpus) {
    for (auto& utt : conv.utterances) {
      utt.token_ids = encode_transcript(utt.words, vocab);
    }
  }
}

inline std::vector<std::string> corpus_transcripts(const Corpus& corpus) {
  std::vector<std::string> out;
  out.reserve(corpus_num_utterances(corpus));
  for (const auto& conv : corpus) {
    for (const auto& utt : conv.utterances) out.push_back(join_words(utt.words));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conversation-parallel batching.
//
// Conversations are shuffled (seeded) and cut into groups of batch_size.
// Within a group, batch t holds utterance t of each conversation; finished
// conversations contribute dummy slots that carry no loss and leave the
// conversation's context untouched. Flattening one conversation's slots
// across the schedule reproduces its utterances in onset order.

struct BatchSlot {
  std::size_t conv_index = 0;  // into the corpus
  int utt_index = -1;          // -1 marks a dummy slot
  bool dummy() const { return utt_index < 0; }
};

struct Batch {
  std::vector<BatchSlot> slots;
};

inline std::vector<Batch> make_conversation_batches(const Corpus& corpus,
                                                    std::size_t batch_size,
                                                    std::uint64_t seed) {
  if (batch_size < 1) throw ConfigError("make_conversation_batches: batch_size >= 1");
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng(seed).derive("batch-shuffle");
  rng.shuffle(order);

  std::vector<Batch> batches;
  for (std::size_t g = 0; g < order.size(); g += batch_size) {
    const std::size_t width = std::min(batch_size, order.size() - g);
    std::size_t max_len = 0;
    for (std::size_t j = 0; j < width; ++j) {
      max_len = std::max(max_len, corpus[order[g + j]].utterances.size());
    }
    for (std::size_t t = 0; t < max_len; ++t) {
      Batch batch;
      batch.slots.reserve(width);
      for (std::size_t j = 0; j < width; ++j) {
        const std::size_t ci = order[g + j];
        BatchSlot slot;
        slot.conv_index = ci;
        slot.utt_index = t < corpus[ci].utterances.size() ? int(t) : -1;
        batch.slots.push_back(slot);
      }
      batches.push_back(std::move(batch));
    }
  }
  return batches;
}

}  // namespace convasr
