// External word/sentence embeddings and conversational-context construction.
//
// Word vectors load from the common "count dim" text layout. Words missing
// from the file receive one frozen draw from N(sample mean, diag(sample
// variance)) of the loaded vectors, keyed by (table seed, word) so the draw
// is stable across runs and call orders. Per-utterance vectors merge over an
// n-utterance history by mean or fixed-slot concatenation; conversation
// starts are padded with a start vector owned by the model.
#pragma once

#include <deque>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "convasr/common.hpp"
#include "convasr/tensor.hpp"

namespace convasr {

class WordEmbeddingTable {
 public:
  WordEmbeddingTable(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw ConfigError("word embedding dim must be positive");
    mean_.assign(dim_, 0.0);
    variance_.assign(dim_, 1.0);
  }

  static WordEmbeddingTable load(const std::string& path, std::uint64_t seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read word-vector file " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("word-vector file is empty: " + path);
    std::istringstream header(line);
    long long count = 0, dim = 0;
    if (!(header >> count >> dim) || dim <= 0 || count < 0) {
      throw DataError("word-vector file header must be 'count dim': " + path);
    }
    WordEmbeddingTable table(std::size_t(dim), seed);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::istringstream row(line);
      std::string word;
      row >> word;
      std::vector<double> v(static_cast<std::size_t>(dim));
      for (auto& x : v) {
        if (!(row >> x)) {
          throw DataError("word-vector line " + std::to_string(line_no) +
                          ": expected " + std::to_string(dim) + " values");
        }
      }
      double extra;
      if (row >> extra) {
        throw DataError("word-vector line " + std::to_string(line_no) +
                        ": more than " + std::to_string(dim) + " values");
      }
      table.vectors_[word] = std::move(v);
    }
    if (table.vectors_.size() != std::size_t(count)) {
      throw DataError("word-vector file declares " + std::to_string(count) +
                      " words but contains " + std::to_string(table.vectors_.size()));
    }
    table.recompute_stats();
    return table;
  }

  std::size_t dim() const { return dim_; }
  std::size_t num_loaded() const { return vectors_.size(); }
  std::size_t num_imputed() const { return imputed_.size(); }
  const std::vector<double>& sample_mean() const { return mean_; }
  const std::vector<double>& sample_variance() const { return variance_; }

  bool has(const std::string& word) const { return vectors_.count(word) > 0; }

  /// Loaded vector if present, else the word's frozen imputed draw.
  const std::vector<double>& vector(const std::string& word) const {
    auto it = vectors_.find(word);
    if (it != vectors_.end()) return it->second;
    auto imp = imputed_.find(word);
    if (imp != imputed_.end()) return imp->second;
    Rng rng = Rng(seed_).derive("impute").derive(word);
    std::vector<double> v(dim_);
    for (std::size_t d = 0; d < dim_; ++d) {
      v[d] = rng.normal(mean_[d], std::sqrt(variance_[d]));
    }
    return imputed_.emplace(word, std::move(v)).first->second;
  }

  /// Eagerly impute every listed word missing from the file.
  void impute_all(const std::vector<std::string>& words) {
    for (const auto& w : words) vector(w);
  }

 private:
  void recompute_stats() {
    mean_.assign(dim_, 0.0);
    variance_.assign(dim_, 1.0);
    if (vectors_.empty()) return;
    for (const auto& [w, v] : vectors_) {
      for (std::size_t d = 0; d < dim_; ++d) mean_[d] += v[d];
    }
    for (auto& m : mean_) m /= double(vectors_.size());
    if (vectors_.size() > 1) {
      variance_.assign(dim_, 0.0);
      for (const auto& [w, v] : vectors_) {
        for (std::size_t d = 0; d < dim_; ++d) {
          const double dd = v[d] - mean_[d];
          variance_[d] += dd * dd;
        }
      }
      for (auto& s : variance_) s /= double(vectors_.size() - 1);
    }
  }

  std::size_t dim_;
  std::uint64_t seed_;
  std::map<std::string, std::vector<double>> vectors_;
  mutable std::map<std::string, std::vector<double>> imputed_;
  std::vector<double> mean_;
  std::vector<double> variance_;
};

/// Arithmetic mean of the word vectors; the empty utterance maps to zero.
inline std::vector<double> embed_utterance_bag(const std::vector<std::string>& words,
                                               const WordEmbeddingTable& table) {
  std::vector<double> out(table.dim(), 0.0);
  if (words.empty()) return out;
  for (const auto& w : words) {
    const auto& v = table.vector(w);
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += v[d];
  }
  for (auto& x : out) x /= double(words.size());
  return out;
}

struct UtteranceKey {
  std::string conv_id;
  int index = 0;
  bool operator<(const UtteranceKey& o) const {
    if (conv_id != o.conv_id) return conv_id < o.conv_id;
    return index < o.index;
  }
};

/// Deterministic mapping from utterance text (and optionally its corpus key)
/// to a fixed-length vector.
class SentenceEmbeddingProvider {
 public:
  virtual ~SentenceEmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> embed(const UtteranceKey& key,
                                    const std::vector<std::string>& words) const = 0;
};

/// Adapter over the bag-of-word-vectors path.
class BagSentenceProvider final : public SentenceEmbeddingProvider {
 public:
  explicit BagSentenceProvider(std::shared_ptr<const WordEmbeddingTable> table)
      : table_(std::move(table)) {}
  std::size_t dim() const override { return table_->dim(); }
  std::vector<double> embed(const UtteranceKey&,
                            const std::vector<std::string>& words) const override {
    return embed_utterance_bag(words, *table_);
  }

 private:
  std::shared_ptr<const WordEmbeddingTable> table_;
};

/// Precomputed vectors keyed by (conv_id, index); file is line-delimited JSON
/// records {conv_id, index, vector: base64 little-endian f64}.
class PrecomputedSentenceProvider final : public SentenceEmbeddingProvider {
 public:
  static std::shared_ptr<PrecomputedSentenceProvider> load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read sentence-embedding file " + path);
    auto provider = std::make_shared<PrecomputedSentenceProvider>();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json rec;
      try {
        rec = nlohmann::json::parse(line);
        UtteranceKey key{rec.at("conv_id").get<std::string>(), rec.at("index").get<int>()};
        std::vector<double> v = base64_to_doubles(rec.at("vector").get<std::string>());
        if (provider->dim_ == 0) provider->dim_ = v.size();
        if (v.size() != provider->dim_) {
          throw DataError("sentence-embedding line " + std::to_string(line_no) +
                          ": inconsistent vector width");
        }
        provider->vectors_[key] = std::move(v);
      } catch (const nlohmann::json::exception& e) {
        throw DataError("sentence-embedding line " + std::to_string(line_no) + ": " +
                        e.what());
      }
    }
    if (provider->vectors_.empty()) {
      throw DataError("sentence-embedding file has no records: " + path);
    }
    return provider;
  }

  static void save(const std::map<UtteranceKey, std::vector<double>>& vectors,
                   const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write sentence-embedding file " + path);
    for (const auto& [key, v] : vectors) {
      nlohmann::json rec;
      rec["conv_id"] = key.conv_id;
      rec["index"] = key.index;
      rec["vector"] = doubles_to_base64(v);
      out << rec.dump() << "\n";
    }
  }

  std::size_t dim() const override { return dim_; }
  std::vector<double> embed(const UtteranceKey& key,
                            const std::vector<std::string>&) const override {
    auto it = vectors_.find(key);
    if (it == vectors_.end()) {
      throw DataError("sentence embedding missing for (" + key.conv_id + ", " +
                      std::to_string(key.index) + ")");
    }
    return it->second;
  }

 private:
  std::size_t dim_ = 0;
  std::map<UtteranceKey, std::vector<double>> vectors_;
};

/// Seeded-hash stub for tests: deterministic, text-driven, no semantics.
class HashSentenceProvider final : public SentenceEmbeddingProvider {
 public:
  HashSentenceProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw ConfigError("sentence embedding dim must be positive");
  }
  std::size_t dim() const override { return dim_; }
  std::vector<double> embed(const UtteranceKey&,
                            const std::vector<std::string>& words) const override {
    Rng rng = Rng(seed_).derive("sentence-stub").derive(join_words(words));
    std::vector<double> v(dim_);
    for (auto& x : v) x = rng.normal();
    return v;
  }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Context merging.

enum class ContextMerge { kMean, kConcat };

inline ContextMerge parse_context_merge(const std::string& s) {
  if (s == "mean") return ContextMerge::kMean;
  if (s == "concat") return ContextMerge::kConcat;
  throw ConfigError("context merge must be 'mean' or 'concat', got '" + s + "'");
}

struct ContextConfig {
  std::size_t n_history = 1;
  ContextMerge merge = ContextMerge::kMean;
  std::size_t source_dim = 0;
  std::size_t projected_dim = 0;  // d_c

  std::size_t raw_dim() const {
    return merge == ContextMerge::kConcat ? n_history * source_dim : source_dim;
  }
  void validate() const {
    if (n_history < 1) throw ConfigError("context n_history must be >= 1");
    if (source_dim < 1) throw ConfigError("context source_dim must be >= 1");
    if (projected_dim < 1) throw ConfigError("context projected_dim must be >= 1");
  }
};

/// Rolling per-conversation history of the last n utterance embeddings.
/// Dummy batch slots never reach this buffer.
class ContextState {
 public:
  explicit ContextState(std::size_t n_history) : n_history_(n_history) {}

  void push(std::vector<double> embedding) {
    history_.push_back(std::move(embedding));
    while (history_.size() > n_history_) history_.pop_front();
  }

  const std::deque<std::vector<double>>& history() const { return history_; }
  std::size_t size() const { return history_.size(); }

 private:
  std::size_t n_history_;
  std::deque<std::vector<double>> history_;
};

/// Merge an utterance-embedding history (oldest first) into the raw context
/// vector. Histories shorter than n fill the oldest slots with the start
/// vector; mean averages exactly n terms so the layouts agree for n=1.
inline std::vector<double> build_context_embedding(
    const std::deque<std::vector<double>>& history, const ContextConfig& cfg,
    const std::vector<double>& start_vector) {
  cfg.validate();
  if (start_vector.size() != cfg.source_dim) {
    throw ConfigError("context start vector width " + std::to_string(start_vector.size()) +
                      " != source_dim " + std::to_string(cfg.source_dim));
  }
  for (const auto& h : history) {
    if (h.size() != cfg.source_dim) {
      throw DataError("context history vector width " + std::to_string(h.size()) +
                      " != source_dim " + std::to_string(cfg.source_dim));
    }
  }
  const std::size_t n = cfg.n_history;
  const std::size_t have = std::min(history.size(), n);
  auto slot = [&](std::size_t i) -> const std::vector<double>& {
    // slots are oldest -> newest; missing oldest slots take the start vector
    if (i < n - have) return start_vector;
    return history[history.size() - have + (i - (n - have))];
  };
  if (cfg.merge == ContextMerge::kConcat) {
    std::vector<double> out;
    out.reserve(n * cfg.source_dim);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& v = slot(i);
      out.insert(out.end(), v.begin(), v.end());
    }
    return out;
  }
  std::vector<double> out(cfg.source_dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = slot(i);
    for (std::size_t d = 0; d < cfg.source_dim; ++d) out[d] += v[d];
  }
  for (auto& x : out) x /= double(n);
  return out;
}

/// In-graph twin of build_context_embedding so gradients reach the trainable
/// start vector when a conversation is younger than its history window.
inline TensorPtr build_context_tensor(Graph& g,
                                      const std::deque<std::vector<double>>& history,
                                      const ContextConfig& cfg,
                                      const TensorPtr& start_vector) {
  cfg.validate();
  const std::size_t n = cfg.n_history;
  const std::size_t have = std::min(history.size(), n);
  std::vector<TensorPtr> slots;
  slots.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n - have) {
      slots.push_back(start_vector);
    } else {
      const auto& v = history[history.size() - have + (i - (n - have))];
      slots.push_back(make_tensor({cfg.source_dim}, v));
    }
  }
  if (cfg.merge == ContextMerge::kConcat) return g.concat(slots);
  if (slots.size() == 1) return slots[0];
  return g.mean(g.stack_rows(slots), 0);
}

/// Affine map then tanh, reconciling the raw context width with d_c.
inline TensorPtr project_context(Graph& g, const TensorPtr& raw, const TensorPtr& weight,
                                 const TensorPtr& bias) {
  if (!weight->is_matrix() || weight->cols() != raw->shape[0] ||
      weight->rows() != bias->shape[0]) {
    throw NumericError("project_context: weight " + shape_str(weight->shape) +
                       " incompatible with raw " + shape_str(raw->shape) + " and bias " +
                       shape_str(bias->shape));
  }
  return g.tanh(g.add(g.matmul(weight, raw), bias));
}

}  // namespace convasr
