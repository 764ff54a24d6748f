// Joint CTC/attention training with conversation-carried context.
//
// Batches hold one utterance per active conversation; the joint loss sums
// over real slots, one AdaDelta step runs per batch, and each conversation's
// context ring advances afterwards with the embedding of either the reference
// transcript or the model's greedy hypothesis (scheduled sampling). Dummy
// slots contribute no loss, no context update, and no RNG draws.
#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "convasr/corpus.hpp"
#include "convasr/ctc.hpp"
#include "convasr/embeddings.hpp"
#include "convasr/model.hpp"

namespace convasr {

struct TrainConfig {
  double lambda = 0.2;
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double clip_norm = 5.0;
  double rho = 0.95;
  double epsilon = 1e-6;
  double sampling_rate = 0.2;  // probability of using the model's own output
  std::size_t n_history = 1;
  ContextMerge merge = ContextMerge::kMean;
  std::uint64_t seed = 1;
  std::size_t patience = 0;  // epochs without dev improvement; 0 trains all

  void validate() const {
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("train.lambda must be in [0,1]");
    if (sampling_rate < 0.0 || sampling_rate > 1.0) {
      throw ConfigError("train.sampling_rate must be in [0,1]");
    }
    if (clip_norm <= 0.0) throw ConfigError("train.clip_norm must be positive");
    if (rho <= 0.0 || rho >= 1.0) throw ConfigError("train.rho must be in (0,1)");
    if (epsilon <= 0.0) throw ConfigError("train.epsilon must be positive");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (n_history < 1) throw ConfigError("train.n_history must be >= 1");
  }
};

inline double joint_loss(double ctc_nll, double att_nll, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must be in [0,1]");
  if (!std::isfinite(ctc_nll) || !std::isfinite(att_nll)) {
    throw NumericError("joint_loss requires finite components");
  }
  return lambda * ctc_nll + (1.0 - lambda) * att_nll;
}

enum class ContextSource { kGroundTruth, kModelOutput };

/// One Bernoulli decision per utterance.
inline ContextSource sample_context_source(double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw ConfigError("sampling rate must be in [0,1]");
  if (p == 0.0) return ContextSource::kGroundTruth;
  if (p == 1.0) return ContextSource::kModelOutput;
  return rng.bernoulli(p) ? ContextSource::kModelOutput : ContextSource::kGroundTruth;
}

/// AdaDelta with global-norm gradient clipping. Accumulators are keyed by
/// parameter name; a non-finite global gradient skips the whole step.
class AdaDelta {
 public:
  AdaDelta(double rho, double epsilon, double clip_norm)
      : rho_(rho), eps_(epsilon), clip_(clip_norm) {}

  std::size_t skipped_steps() const { return skipped_; }

  /// Apply one update over the named parameters (grads read in place).
  void step(std::map<std::string, TensorPtr>& params,
            const std::vector<std::string>& names) {
    double sq = 0.0;
    for (const auto& n : names) {
      const auto& p = params.at(n);
      if (p->grad.size() != p->value.size()) continue;
      for (double gv : p->grad) sq += gv * gv;
    }
    if (!std::isfinite(sq)) {
      ++skipped_;
      return;
    }
    const double norm = std::sqrt(sq);
    const double scale = norm > clip_ ? clip_ / norm : 1.0;

    for (const auto& n : names) {
      auto& p = params.at(n);
      if (p->grad.size() != p->value.size()) continue;
      auto& st = state_[n];
      if (st.eg2.size() != p->value.size()) {
        st.eg2.assign(p->value.size(), 0.0);
        st.edx2.assign(p->value.size(), 0.0);
      }
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = p->grad[i] * scale;
        st.eg2[i] = rho_ * st.eg2[i] + (1.0 - rho_) * g * g;
        const double dx = -std::sqrt(st.edx2[i] + eps_) / std::sqrt(st.eg2[i] + eps_) * g;
        st.edx2[i] = rho_ * st.edx2[i] + (1.0 - rho_) * dx * dx;
        p->value[i] += dx;
      }
    }
  }

 private:
  struct State {
    std::vector<double> eg2;
    std::vector<double> edx2;
  };
  double rho_, eps_, clip_;
  std::map<std::string, State> state_;
  std::size_t skipped_ = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double joint_nll = 0.0;
  double ctc_nll = 0.0;
  double att_nll = 0.0;
  std::size_t utterances = 0;
  std::size_t tokens = 0;
  std::size_t skipped_ctc = 0;  // unreachable-CTC utterances dropped this epoch
  double dev_accuracy = -1.0;
  double wall_seconds = 0.0;
};

namespace detail {

inline ContextConfig context_config_for(const Model& model, std::size_t n_history,
                                        ContextMerge merge, std::size_t source_dim) {
  ContextConfig c;
  c.n_history = n_history;
  c.merge = merge;
  c.source_dim = source_dim;
  c.projected_dim = std::max<std::size_t>(1, model.config().context_dim);
  return c;
}

inline std::vector<double> start_vector_values(const Model& model,
                                               std::size_t source_dim) {
  if (model.config().use_context_gating) return model.param("ctx.start")->value;
  return std::vector<double>(source_dim, 0.0);
}

inline void check_context_width(const Model& model, const ContextConfig& ccfg) {
  if (model.config().use_context_gating &&
      ccfg.raw_dim() != model.config().context_raw_dim) {
    throw ConfigError("context raw width " + std::to_string(ccfg.raw_dim()) +
                      " does not match the model's " +
                      std::to_string(model.config().context_raw_dim));
  }
}

}  // namespace detail

struct TrainHooks {
  // observes each real slot's merged context just before its forward pass
  std::function<void(const Utterance&, const std::vector<double>&)> on_context;
};

/// One pass over the corpus in conversation-parallel batches.
inline EpochStats train_epoch(Model& model, const Corpus& corpus,
                              const Vocabulary& vocab,
                              const SentenceEmbeddingProvider& provider,
                              const TrainConfig& cfg, AdaDelta& optimizer,
                              std::size_t epoch_index,
                              const TrainHooks* hooks = nullptr) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  EpochStats stats;
  stats.epoch = epoch_index;

  const bool gated = model.config().use_context_gating;
  const ContextConfig ccfg =
      detail::context_config_for(model, cfg.n_history, cfg.merge, provider.dim());
  detail::check_context_width(model, ccfg);

  Rng epoch_rng = Rng(cfg.seed).derive("train-epoch").derive(epoch_index);
  auto batches =
      make_conversation_batches(corpus, cfg.batch_size, epoch_rng.next_u64());
  Rng sample_rng = epoch_rng.derive("context-sampling");

  std::map<std::size_t, ContextState> contexts;
  std::vector<std::string> all_names;
  for (const auto& [n, p] : model.params()) all_names.push_back(n);

  for (const auto& batch : batches) {
    struct SlotWork {
      const Utterance* utt;
      std::size_t conv_index;
      std::vector<double> raw_ctx;
    };
    std::vector<SlotWork> work;
    for (const auto& slot : batch.slots) {
      if (slot.dummy()) continue;
      const auto& conv = corpus[slot.conv_index];
      const auto& utt = conv.utterances[std::size_t(slot.utt_index)];
      auto ctx_it = contexts.try_emplace(slot.conv_index, ccfg.n_history).first;
      work.push_back(SlotWork{&utt, slot.conv_index,
                              build_context_embedding(
                                  ctx_it->second.history(), ccfg,
                                  detail::start_vector_values(model, provider.dim()))});
      if (hooks != nullptr && hooks->on_context) {
        hooks->on_context(utt, work.back().raw_ctx);
      }
    }
    if (work.empty()) continue;  // all-dummy batches are a no-op

    for (auto& w : work) {
      const Utterance& utt = *w.utt;
      if (utt.token_ids.empty()) {
        throw DataError("utterance (" + utt.conv_id + ", " + std::to_string(utt.index) +
                        ") has no encoded tokens; encode_corpus first");
      }
      if (utt.text_only()) {
        throw DataError("utterance (" + utt.conv_id + ", " + std::to_string(utt.index) +
                        ") has no features; text-only corpora go through pretraining");
      }
      Graph g;
      auto features =
          make_tensor({utt.features.rows, utt.features.cols}, utt.features.data);
      TensorPtr e_ctx;
      if (gated) {
        const auto& state = contexts.at(w.conv_index);
        auto raw =
            build_context_tensor(g, state.history(), ccfg, model.param("ctx.start"));
        e_ctx = model.project_raw_context(g, raw);
      } else {
        e_ctx = make_zeros({1});
      }
      auto fwd = model.forward_utterance(g, features, e_ctx, utt.token_ids);
      // targets that no alignment can reach (too few frames after
      // subsampling) skip the utterance entirely
      CtcTable table{fwd.ctc_log_probs->rows(), fwd.ctc_log_probs->cols(),
                     fwd.ctc_log_probs->value.data()};
      if (ctc_loss(table, utt.token_ids, kBlankId).unreachable) {
        ++stats.skipped_ctc;
        continue;
      }
      auto ctc = ctc_nll_node(g, fwd.ctc_log_probs, utt.token_ids, kBlankId);
      auto loss =
          g.add(g.scale(ctc, cfg.lambda), g.scale(fwd.att_nll, 1.0 - cfg.lambda));
      g.backward(loss);

      stats.joint_nll += loss->scalar();
      stats.ctc_nll += ctc->scalar();
      stats.att_nll += fwd.att_nll->scalar();
      stats.tokens += fwd.num_predictions;
      ++stats.utterances;
    }

    optimizer.step(model.params(), all_names);
    model.zero_grad();

    // context rings advance after the step, one sampled decision per real
    // utterance in slot order
    for (auto& w : work) {
      const Utterance& utt = *w.utt;
      std::vector<std::string> words = utt.words;
      if (sample_context_source(cfg.sampling_rate, sample_rng) ==
          ContextSource::kModelOutput) {
        auto hyp_ids = model.greedy_decode(utt.features, w.raw_ctx);
        words = decode_tokens(hyp_ids, vocab).words;
      }
      contexts.at(w.conv_index).push(provider.embed({utt.conv_id, utt.index}, words));
    }
  }

  stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return stats;
}

/// Text-only decoder pretraining: the speech embedding is masked to zero, the
/// loss is attention-only, and the optimizer touches only decoder-side
/// parameters, so encoder and attention stay bit-identical.
inline EpochStats pretrain_decoder_epoch(Model& model, const Corpus& text_corpus,
                                         const SentenceEmbeddingProvider& provider,
                                         const TrainConfig& cfg, AdaDelta& optimizer,
                                         std::size_t epoch_index) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  EpochStats stats;
  stats.epoch = epoch_index;

  const bool gated = model.config().use_context_gating;
  const ContextConfig ccfg =
      detail::context_config_for(model, cfg.n_history, cfg.merge, provider.dim());
  detail::check_context_width(model, ccfg);
  const std::size_t d_enc = model.config().enc_output_dim();

  Rng epoch_rng = Rng(cfg.seed).derive("pretrain-epoch").derive(epoch_index);
  auto batches =
      make_conversation_batches(text_corpus, cfg.batch_size, epoch_rng.next_u64());
  std::map<std::size_t, ContextState> contexts;
  const std::vector<std::string> trained = model.decoder_side_param_names();

  for (const auto& batch : batches) {
    bool stepped = false;
    std::vector<std::pair<const Utterance*, std::size_t>> real;
    for (const auto& slot : batch.slots) {
      if (slot.dummy()) continue;
      const auto& utt =
          text_corpus[slot.conv_index].utterances[std::size_t(slot.utt_index)];
      real.emplace_back(&utt, slot.conv_index);
      contexts.try_emplace(slot.conv_index, ccfg.n_history);
    }
    for (auto& [utt_ptr, conv_index] : real) {
      const Utterance& utt = *utt_ptr;
      if (utt.token_ids.empty()) {
        throw DataError("pretrain utterance has no encoded tokens");
      }
      Graph g;
      TensorPtr e_ctx;
      if (gated) {
        auto raw = build_context_tensor(g, contexts.at(conv_index).history(), ccfg,
                                        model.param("ctx.start"));
        e_ctx = model.project_raw_context(g, raw);
      } else {
        e_ctx = make_zeros({1});
      }
      std::vector<int> framed = {kSosId};
      framed.insert(framed.end(), utt.token_ids.begin(), utt.token_ids.end());
      framed.push_back(kEosId);
      DecoderState st = model.initial_state(1);
      TensorPtr zero_speech = make_zeros({d_enc});
      std::vector<TensorPtr> terms;
      for (std::size_t u = 1; u < framed.size(); ++u) {
        auto logp = model.decoder_step(g, e_ctx, framed[u - 1], zero_speech, st);
        terms.push_back(
            g.slice(logp, std::size_t(framed[u]), std::size_t(framed[u]) + 1));
      }
      auto att = g.scale(g.sum(g.concat(terms)), -1.0);
      g.backward(att);
      stats.att_nll += att->scalar();
      stats.joint_nll += att->scalar();
      stats.tokens += terms.size();
      ++stats.utterances;
      stepped = true;
    }
    if (!stepped) continue;
    optimizer.step(model.params(), trained);
    model.zero_grad();
    // pretraining context always uses the reference words
    for (auto& [utt_ptr, conv_index] : real) {
      contexts.at(conv_index)
          .push(provider.embed({utt_ptr->conv_id, utt_ptr->index}, utt_ptr->words));
    }
  }

  stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return stats;
}

/// Teacher-forced token accuracy with the context history built from the
/// model's own greedy hypotheses (the always-use-model-prediction rule).
inline double dev_accuracy(const Model& model, const Corpus& dev_corpus,
                           const Vocabulary& vocab,
                           const SentenceEmbeddingProvider& provider,
                           std::size_t n_history, ContextMerge merge) {
  const bool gated = model.config().use_context_gating;
  const ContextConfig ccfg =
      detail::context_config_for(model, n_history, merge, provider.dim());
  detail::check_context_width(model, ccfg);

  std::size_t hits = 0, total = 0;
  for (const auto& conv : dev_corpus) {
    ContextState state(ccfg.n_history);
    for (const auto& utt : conv.utterances) {
      const auto raw = build_context_embedding(
          state.history(), ccfg, detail::start_vector_values(model, provider.dim()));
      {
        Graph g;
        auto features =
            make_tensor({utt.features.rows, utt.features.cols}, utt.features.data);
        TensorPtr e_ctx = gated ? model.project_raw_context(g, raw) : make_zeros({1});
        auto enc = model.encode(g, features);
        auto proj = model.attention_precompute(g, enc);
        DecoderState st = model.initial_state(enc->rows());
        std::vector<int> framed = {kSosId};
        framed.insert(framed.end(), utt.token_ids.begin(), utt.token_ids.end());
        framed.push_back(kEosId);
        for (std::size_t u = 1; u < framed.size(); ++u) {
          auto att = model.attend(g, enc, proj, st.h.back(), st.alpha);
          st.alpha = att.alpha;
          auto logp = model.decoder_step(g, e_ctx, framed[u - 1], att.context, st);
          int best = 0;
          for (std::size_t v = 1; v < logp->size(); ++v) {
            if (logp->value[v] > logp->value[std::size_t(best)]) best = int(v);
          }
          hits += best == framed[u] ? 1 : 0;
          ++total;
        }
      }
      auto hyp_ids = model.greedy_decode(utt.features, raw);
      state.push(provider.embed({utt.conv_id, utt.index},
                                decode_tokens(hyp_ids, vocab).words));
    }
  }
  return total == 0 ? 0.0 : double(hits) / double(total);
}

}  // namespace convasr
