// Joint CTC/attention beam search with context carry-over, WER scoring, and
// the conversational-distance analysis.
//
// Candidates are ranked during expansion by gamma * ctc_prefix + (1-gamma) *
// attention log-probability; finished hypotheses (eos) move to a pool and the
// final ranking adds length_penalty per emitted word. Ties break toward the
// lexicographically smaller token sequence so output is deterministic.
#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "convasr/ctc.hpp"
#include "convasr/embeddings.hpp"
#include "convasr/model.hpp"
#include "convasr/train.hpp"

namespace convasr {

struct DecodeConfig {
  std::size_t beam = 10;
  double gamma = 0.3;
  double length_penalty = 0.5;
  std::size_t max_len = 0;  // 0: encoder frames + 10
  std::size_t n_history = 1;
  ContextMerge merge = ContextMerge::kMean;

  void validate() const {
    if (beam < 1) throw ConfigError("decode.beam must be >= 1");
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("decode.gamma must be in [0,1]");
    if (n_history < 1) throw ConfigError("decode.n_history must be >= 1");
  }
};

struct Hypothesis {
  std::vector<int> tokens;  // emitted ids, no sos/eos
  double att_logprob = 0.0;
  double ctc_logprob = 0.0;  // prefix score while open; exact-sequence score once done
  double combined = 0.0;     // gamma-weighted mix, without length reward
  double final_score = 0.0;  // combined + length_penalty * len, set when finished
};

namespace detail {

struct LiveHyp {
  std::vector<int> tokens;
  double att = 0.0;
  CtcPrefixCache ctc;
  double combined = 0.0;
  DecoderStateValues state;
  int prev_token = kSosId;
};

inline bool tokens_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace detail

/// Left-to-right joint beam search over one utterance. raw_ctx is the merged
/// context embedding for this utterance. Returns finished hypotheses sorted
/// best-first by final score.
inline std::vector<Hypothesis> joint_beam_search(const Model& model,
                                                 const EncodedUtterance& eu,
                                                 const std::vector<double>& raw_ctx,
                                                 const DecodeConfig& cfg) {
  cfg.validate();
  const std::size_t max_len = cfg.max_len > 0 ? cfg.max_len : eu.frames + 10;
  if (eu.labels == 0 || eu.ctc_log_probs.size() != eu.frames * eu.labels) {
    throw NumericError("joint_beam_search: malformed CTC log-probability table");
  }
  CtcTable table{eu.frames, eu.labels, eu.ctc_log_probs.data()};

  std::vector<detail::LiveHyp> live(1);
  live[0].ctc = ctc_prefix_init(table, kBlankId);
  live[0].state = model.initial_state_values(eu.frames);

  std::vector<Hypothesis> finished;
  for (std::size_t step = 0; step <= max_len && !live.empty(); ++step) {
    std::vector<detail::LiveHyp> candidates;
    for (auto& hyp : live) {
      auto sr = model.step_values(eu, hyp.state, raw_ctx, hyp.prev_token);
      const auto& logp = sr.log_probs;
      // eos closes the hypothesis: the CTC component becomes the probability
      // of exactly this sequence
      {
        Hypothesis done;
        done.tokens = hyp.tokens;
        done.att_logprob = hyp.att + logp[kEosId];
        done.ctc_logprob = ctc_prefix_final(hyp.ctc);
        done.combined =
            cfg.gamma * done.ctc_logprob + (1.0 - cfg.gamma) * done.att_logprob;
        done.final_score =
            done.combined + cfg.length_penalty * double(done.tokens.size());
        finished.push_back(std::move(done));
      }
      if (hyp.tokens.size() >= max_len) continue;  // eos was the only option
      for (std::size_t v = 0; v < logp.size(); ++v) {
        const int vi = int(v);
        if (vi == kBlankId || vi == kSosId || vi == kEosId || vi == kPadId) continue;
        detail::LiveHyp next;
        next.tokens = hyp.tokens;
        next.tokens.push_back(vi);
        next.att = hyp.att + logp[v];
        next.ctc = ctc_prefix_extend(table, hyp.ctc, vi, kBlankId);
        next.combined = cfg.gamma * next.ctc.score + (1.0 - cfg.gamma) * next.att;
        next.state = sr.state;
        next.prev_token = vi;
        candidates.push_back(std::move(next));
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const detail::LiveHyp& a, const detail::LiveHyp& b) {
                if (a.combined != b.combined) return a.combined > b.combined;
                return detail::tokens_less(a.tokens, b.tokens);
              });
    if (candidates.size() > cfg.beam) candidates.resize(cfg.beam);
    live = std::move(candidates);
  }

  std::sort(finished.begin(), finished.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.final_score != b.final_score) return a.final_score > b.final_score;
    return detail::tokens_less(a.tokens, b.tokens);
  });
  return finished;
}

struct DecodedUtterance {
  UtteranceKey key;
  std::vector<std::string> words;
  double att_logprob = 0.0;
  double ctc_logprob = 0.0;
  double score = 0.0;
};

/// Decode one conversation sequentially; the context for utterance k comes
/// from the model's own hypotheses for utterances < k.
inline std::vector<DecodedUtterance> decode_conversation(
    const Model& model, const Conversation& conv, const Vocabulary& vocab,
    const SentenceEmbeddingProvider& provider, const DecodeConfig& cfg) {
  cfg.validate();
  for (std::size_t k = 0; k < conv.utterances.size(); ++k) {
    if (conv.utterances[k].index != int(k)) {
      throw DataError("conversation " + conv.id + " is not in onset order");
    }
  }
  const ContextConfig ccfg =
      detail::context_config_for(model, cfg.n_history, cfg.merge, provider.dim());
  detail::check_context_width(model, ccfg);

  std::vector<DecodedUtterance> out;
  ContextState state(ccfg.n_history);
  for (const auto& utt : conv.utterances) {
    if (utt.text_only()) {
      throw DataError("utterance (" + utt.conv_id + ", " + std::to_string(utt.index) +
                      ") has no features to decode");
    }
    const auto raw = build_context_embedding(
        state.history(), ccfg, detail::start_vector_values(model, provider.dim()));
    EncodedUtterance eu = model.encode_values(utt.features);
    auto hyps = joint_beam_search(model, eu, raw, cfg);
    if (hyps.empty()) throw NumericError("beam search produced no hypothesis");
    const Hypothesis& best = hyps.front();

    DecodedUtterance rec;
    rec.key = {utt.conv_id, utt.index};
    rec.words = decode_tokens(best.tokens, vocab).words;
    rec.att_logprob = best.att_logprob;
    rec.ctc_logprob = best.ctc_logprob;
    rec.score = best.final_score;
    state.push(provider.embed(rec.key, rec.words));
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Word error rate.

struct WerCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t ref_length = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  double rate() const { return double(errors()) / double(ref_length); }
};

/// Minimal edit distance with unit costs, counts recovered by backtrace.
inline WerCounts wer(const std::vector<std::string>& ref,
                     const std::vector<std::string>& hyp) {
  if (ref.empty()) throw DataError("wer: reference must be nonempty");
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> dist((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& {
    return dist[i * (m + 1) + j];
  };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const std::size_t del = at(i - 1, j) + 1;
      const std::size_t ins = at(i, j - 1) + 1;
      at(i, j) = std::min({sub, del, ins});
    }
  }
  WerCounts counts;
  counts.ref_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) && ref[i - 1] == hyp[j - 1]) {
      --i;
      --j;
    } else if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + 1) {
      ++counts.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++counts.deletions;
      --i;
    } else {
      ++counts.insertions;
      --j;
    }
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Conversational distance.

struct ScoredUtterance {
  UtteranceKey key;
  std::vector<std::string> words;
};

using PairFilter =
    std::function<bool(const ScoredUtterance&, const ScoredUtterance&)>;

/// Mean Euclidean distance between embeddings of consecutive utterances
/// within each conversation; pairs never span conversations. The optional
/// filter drops pairs before averaging.
inline double conversational_distance(
    const std::vector<std::vector<ScoredUtterance>>& conversations,
    const SentenceEmbeddingProvider& provider, const PairFilter& filter = nullptr) {
  double total = 0.0;
  std::size_t pairs = 0;
  for (const auto& conv : conversations) {
    for (std::size_t k = 1; k < conv.size(); ++k) {
      if (filter && !filter(conv[k - 1], conv[k])) continue;
      const auto a = provider.embed(conv[k - 1].key, conv[k - 1].words);
      const auto b = provider.embed(conv[k].key, conv[k].words);
      if (a.size() != b.size()) {
        throw DataError("conversational_distance: provider width changed");
      }
      double sq = 0.0;
      for (std::size_t d = 0; d < a.size(); ++d) {
        const double dd = a[d] - b[d];
        sq += dd * dd;
      }
      total += std::sqrt(sq);
      ++pairs;
    }
  }
  if (pairs == 0) {
    throw DataError("conversational_distance needs a conversation with >= 2 utterances");
  }
  return total / double(pairs);
}

// ---------------------------------------------------------------------------
// Corpus evaluation and report files.

struct UtteranceScore {
  UtteranceKey key;
  WerCounts counts;
  std::vector<std::string> ref_words;
  std::vector<std::string> hyp_words;
};

struct EvalReport {
  std::vector<UtteranceScore> utterances;
  std::size_t total_errors = 0;
  std::size_t total_ref_length = 0;
  double corpus_wer = 0.0;
  double conversational_distance_score = -1.0;  // negative: not computed

  double recompute_wer() const {
    std::size_t errs = 0, len = 0;
    for (const auto& u : utterances) {
      errs += u.counts.errors();
      len += u.counts.ref_length;
    }
    return len == 0 ? 0.0 : double(errs) / double(len);
  }
};

/// Score hypotheses against a reference corpus. Every reference utterance
/// must have a hypothesis.
inline EvalReport evaluate_corpus(
    const Corpus& ref_corpus,
    const std::map<UtteranceKey, std::vector<std::string>>& hypotheses,
    const SentenceEmbeddingProvider* provider = nullptr) {
  EvalReport report;
  std::vector<std::vector<ScoredUtterance>> hyp_convs;
  for (const auto& conv : ref_corpus) {
    std::vector<ScoredUtterance> hyp_conv;
    for (const auto& utt : conv.utterances) {
      UtteranceKey key{utt.conv_id, utt.index};
      auto it = hypotheses.find(key);
      if (it == hypotheses.end()) {
        throw DataError("missing hypothesis for (" + key.conv_id + ", " +
                        std::to_string(key.index) + ")");
      }
      UtteranceScore score;
      score.key = key;
      score.ref_words = utt.words;
      score.hyp_words = it->second;
      score.counts = wer(utt.words, it->second);
      report.total_errors += score.counts.errors();
      report.total_ref_length += score.counts.ref_length;
      report.utterances.push_back(std::move(score));
      hyp_conv.push_back(ScoredUtterance{key, it->second});
    }
    hyp_convs.push_back(std::move(hyp_conv));
  }
  report.corpus_wer = report.total_ref_length == 0
                          ? 0.0
                          : double(report.total_errors) / double(report.total_ref_length);
  if (provider != nullptr) {
    report.conversational_distance_score =
        conversational_distance(hyp_convs, *provider);
  }
  return report;
}

// Hypothesis file: one JSON record per utterance.
inline void save_hypotheses(const std::vector<DecodedUtterance>& hyps,
                            const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write hypothesis file " + path);
  for (const auto& h : hyps) {
    nlohmann::json rec;
    rec["conv_id"] = h.key.conv_id;
    rec["index"] = h.key.index;
    rec["words"] = join_words(h.words);
    rec["att_logprob"] = h.att_logprob;
    rec["ctc_logprob"] = h.ctc_logprob;
    rec["score"] = h.score;
    out << rec.dump() << "\n";
  }
}

inline std::vector<DecodedUtterance> load_hypotheses(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read hypothesis file " + path);
  std::vector<DecodedUtterance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto rec = nlohmann::json::parse(line);
      DecodedUtterance h;
      h.key = {rec.at("conv_id").get<std::string>(), rec.at("index").get<int>()};
      h.words = split_words(rec.at("words").get<std::string>());
      h.att_logprob = rec.at("att_logprob").get<double>();
      h.ctc_logprob = rec.at("ctc_logprob").get<double>();
      h.score = rec.at("score").get<double>();
      out.push_back(std::move(h));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("hypothesis line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

/// Key-value summary plus a per-utterance table, and the same content as JSON.
inline void write_report(const EvalReport& report, const std::string& txt_path,
                         const std::string& json_path) {
  {
    std::ofstream out(txt_path, std::ios::binary);
    if (!out) throw DataError("cannot write report file " + txt_path);
    out << "utterances = " << report.utterances.size() << "\n";
    out << "total_errors = " << report.total_errors << "\n";
    out << "total_ref_length = " << report.total_ref_length << "\n";
    out.precision(6);
    out << "corpus_wer = " << std::fixed << report.corpus_wer << "\n";
    if (report.conversational_distance_score >= 0.0) {
      out << "conversational_distance = " << report.conversational_distance_score
          << "\n";
    }
    out << "\nconv_id\tindex\tS\tD\tI\tref_len\twer\n";
    for (const auto& u : report.utterances) {
      out << u.key.conv_id << "\t" << u.key.index << "\t" << u.counts.substitutions
          << "\t" << u.counts.deletions << "\t" << u.counts.insertions << "\t"
          << u.counts.ref_length << "\t" << u.counts.rate() << "\n";
    }
  }
  {
    nlohmann::json doc;
    doc["utterance_count"] = report.utterances.size();
    doc["total_errors"] = report.total_errors;
    doc["total_ref_length"] = report.total_ref_length;
    doc["corpus_wer"] = report.corpus_wer;
    if (report.conversational_distance_score >= 0.0) {
      doc["conversational_distance"] = report.conversational_distance_score;
    }
    auto& rows = doc["utterances"];
    rows = nlohmann::json::array();
    for (const auto& u : report.utterances) {
      nlohmann::json row;
      row["conv_id"] = u.key.conv_id;
      row["index"] = u.key.index;
      row["substitutions"] = u.counts.substitutions;
      row["deletions"] = u.counts.deletions;
      row["insertions"] = u.counts.insertions;
      row["ref_length"] = u.counts.ref_length;
      row["wer"] = u.counts.rate();
      rows.push_back(std::move(row));
    }
    std::ofstream out(json_path, std::ios::binary);
    if (!out) throw DataError("cannot write report file " + json_path);
    out << doc.dump(2) << "\n";
  }
}

}  // namespace convasr
