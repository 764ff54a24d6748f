// Encoder / attention / gated decoder.
//
// Encoder: bidirectional LSTM stack with pyramidal concatenation subsampling
// (two x2 stages for the default x4 reduction). Attention: location-aware
// scores w.tanh(Wq + VH + UF + b) where F convolves the previous alignment.
// Decoder: per output step, gate 1 modulates [e_ctx; e_word; e_speech] before
// the first LSTM layer; between layers, gate j modulates [e_ctx; h]. With
// context gating disabled the decoder is the standard attention decoder over
// [e_word; e_speech].
#pragma once

#include <map>
#include <string>
#include <vector>

#include "convasr/corpus.hpp"
#include "convasr/embeddings.hpp"
#include "convasr/tensor.hpp"
#include "convasr/vocab.hpp"

namespace convasr {

struct ModelConfig {
  std::size_t feature_dim = 8;
  std::size_t enc_layers = 2;
  std::size_t enc_width = 16;  // per direction
  std::size_t subsample_factor = 4;
  std::size_t att_dim = 16;
  std::size_t att_conv_channels = 10;
  std::size_t att_conv_width = 11;
  std::size_t dec_layers = 2;
  std::size_t dec_width = 24;
  std::size_t emb_dim = 12;
  std::size_t vocab_size = 0;

  bool use_context_gating = true;
  std::size_t context_dim = 8;         // d_c
  std::size_t context_source_dim = 8;  // per-utterance embedding width
  std::size_t context_raw_dim = 8;     // merged width (n x source for concat)
  std::size_t gate_hidden_dim = 0;     // 0: single affine + sigmoid (default reading)

  double lambda = 0.2;  // joint objective weight
  double gamma = 0.3;   // joint decoding weight

  std::size_t subsample_stages() const {
    std::size_t f = subsample_factor, s = 0;
    while (f > 1) {
      if (f % 2 != 0) throw ConfigError("subsample_factor must be a power of two");
      f /= 2;
      ++s;
    }
    return s;
  }

  std::size_t enc_output_dim() const {
    return 2 * enc_width * (subsample_stages() == enc_layers ? 2 : 1);
  }

  void validate() const {
    if (vocab_size < 7) throw ConfigError("vocab_size must cover specials plus units");
    if (feature_dim < 1 || enc_width < 1 || dec_width < 1 || emb_dim < 1 || att_dim < 1) {
      throw ConfigError("model widths must be positive");
    }
    if (enc_layers < 1 || dec_layers < 1) throw ConfigError("layer counts must be >= 1");
    if (att_conv_width % 2 == 0) throw ConfigError("att_conv_width must be odd");
    if (subsample_stages() > enc_layers) {
      throw ConfigError("subsample stages exceed encoder layers");
    }
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must lie in [0,1]");
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must lie in [0,1]");
    if (use_context_gating &&
        (context_dim < 1 || context_raw_dim < 1 || context_source_dim < 1)) {
      throw ConfigError("context dims must be positive when context gating is on");
    }
  }
};

/// Decoder recurrent state as graph tensors (training / single chained pass).
struct DecoderState {
  std::vector<TensorPtr> h;  // per layer
  std::vector<TensorPtr> c;
  TensorPtr alpha;           // previous attention weights over T'
};

/// Decoder state as plain values (persisted across inference steps).
struct DecoderStateValues {
  std::vector<std::vector<double>> h;
  std::vector<std::vector<double>> c;
  std::vector<double> alpha;
};

/// Per-utterance encoder products for inference.
struct EncodedUtterance {
  std::size_t frames = 0;   // T'
  std::size_t width = 0;    // d_enc
  std::size_t labels = 0;   // V, the CTC table width
  std::vector<double> enc;  // H, row-major [T' x d_enc]
  std::vector<double> ctc_log_probs;  // [T' x V]
};

class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    init_params(seed);
  }

  const ModelConfig& config() const { return cfg_; }
  std::map<std::string, TensorPtr>& params() { return params_; }
  const std::map<std::string, TensorPtr>& params() const { return params_; }

  TensorPtr param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
  }

  // Test-only runtime overrides: freeze gates at exactly 1 (bypassing the
  // sigmoid) and/or replace e_ctx with zeros, without changing parameters.
  struct Overrides {
    bool freeze_gates = false;
    bool zero_context = false;
  };
  Overrides& overrides() { return overrides_; }
  const Overrides& overrides() const { return overrides_; }

  void zero_grad() {
    for (auto& [name, p] : params_) p->zero_grad();
  }

  // ---- encoder ------------------------------------------------------------

  TensorPtr encode(Graph& g, const TensorPtr& features) const {
    if (!features->is_matrix() || features->cols() != cfg_.feature_dim) {
      throw DataError("encode: features " + shape_str(features->shape) +
                      " do not match feature_dim " + std::to_string(cfg_.feature_dim));
    }
    const std::size_t stages = cfg_.subsample_stages();
    TensorPtr seq = features;
    for (std::size_t layer = 0; layer < cfg_.enc_layers; ++layer) {
      seq = blstm_layer(g, seq, layer);
      if (layer < stages) seq = pair_subsample(g, seq);
    }
    return seq;
  }

  /// T' for a given raw frame count (ceil semantics per x2 stage).
  std::size_t subsampled_frames(std::size_t T) const {
    std::size_t stages = cfg_.subsample_stages();
    for (std::size_t s = 0; s < stages; ++s) T = (T + 1) / 2;
    return T;
  }

  TensorPtr ctc_head(Graph& g, const TensorPtr& enc) const {
    return g.log_softmax(g.add(g.matmul(enc, param("ctc.w")), param("ctc.b")));
  }

  // ---- attention ------------------------------------------------------------

  /// enc_proj = H . att.w_enc, computed once per utterance.
  TensorPtr attention_precompute(Graph& g, const TensorPtr& enc) const {
    return g.matmul(enc, param("att.w_enc"));
  }

  struct Attention {
    TensorPtr context;  // e_speech, [d_enc]
    TensorPtr alpha;    // [T']
  };

  /// Location-aware scores over encoder frames; query is the top decoder
  /// layer's previous hidden state.
  Attention attend(Graph& g, const TensorPtr& enc, const TensorPtr& enc_proj,
                   const TensorPtr& query, const TensorPtr& prev_alpha) const {
    const std::size_t frames = enc->rows();
    TensorPtr conv_feats = g.conv1d_same(prev_alpha, param("att.conv"));  // [T' x C]
    TensorPtr loc = g.matmul(conv_feats, param("att.w_feat"));            // [T' x A]
    TensorPtr qterm = g.add(g.matmul(param("att.w_query"), query), param("att.b"));
    TensorPtr hidden = g.tanh(g.add(g.add(enc_proj, loc), qterm));
    TensorPtr scores = g.matmul(hidden, param("att.v"));  // [T']
    TensorPtr alpha = g.softmax(scores);
    TensorPtr ctx = g.matmul(g.reshape(alpha, {1, frames}), enc);  // [1 x d_enc]
    return Attention{g.reshape(ctx, {enc->cols()}), alpha};
  }

  // ---- decoder --------------------------------------------------------------

  DecoderState initial_state(std::size_t frames) const {
    DecoderState st;
    for (std::size_t l = 0; l < cfg_.dec_layers; ++l) {
      st.h.push_back(make_zeros({cfg_.dec_width}));
      st.c.push_back(make_zeros({cfg_.dec_width}));
    }
    st.alpha = make_tensor({frames},
                           std::vector<double>(frames, 1.0 / double(frames)));
    return st;
  }

  /// One output step: gated fusion, recurrent stack, log-probs over V.
  /// state.h/state.c are replaced with the new step's tensors.
  TensorPtr decoder_step(Graph& g, const TensorPtr& e_ctx, int prev_word_id,
                         const TensorPtr& e_speech, DecoderState& state) const {
    if (prev_word_id < 0 || std::size_t(prev_word_id) >= cfg_.vocab_size) {
      throw DataError("decoder_step: word id " + std::to_string(prev_word_id) +
                      " out of range");
    }
    TensorPtr e_word = g.lookup_row(param("dec.embed"), std::size_t(prev_word_id));

    TensorPtr x;
    if (cfg_.use_context_gating) {
      TensorPtr ctx = effective_context(e_ctx);
      TensorPtr cat = g.concat({ctx, e_word, e_speech});
      x = apply_gate(g, "gate.in", cat);
    } else {
      x = g.concat({e_word, e_speech});
    }

    for (std::size_t l = 0; l < cfg_.dec_layers; ++l) {
      if (l > 0) {
        if (cfg_.use_context_gating) {
          TensorPtr ctx = effective_context(e_ctx);
          TensorPtr cat = g.concat(ctx, x);
          x = apply_gate(g, "gate.l" + std::to_string(l), cat);
        }
        // without gating the lower layer's output feeds the next layer directly
      }
      auto [h, c] = lstm_step(g, x, state.h[l], state.c[l], "dec.l" + std::to_string(l));
      state.h[l] = h;
      state.c[l] = c;
      x = h;
    }
    TensorPtr logits = g.add(g.matmul(x, param("out.w")), param("out.b"));
    return g.log_softmax(logits);
  }

  struct UtteranceForward {
    TensorPtr att_nll;        // scalar
    TensorPtr ctc_log_probs;  // [T' x V]
    TensorPtr enc;            // [T' x d_enc]
    std::size_t num_predictions = 0;
  };

  /// Teacher-forced pass over one utterance: attention NLL over
  /// sos..target..eos predictions plus the CTC head table.
  UtteranceForward forward_utterance(Graph& g, const TensorPtr& features,
                                     const TensorPtr& e_ctx,
                                     const std::vector<int>& target_ids) const {
    if (target_ids.empty()) {
      throw DataError("forward_utterance: empty target for attention branch");
    }
    UtteranceForward out;
    out.enc = encode(g, features);
    out.ctc_log_probs = ctc_head(g, out.enc);
    TensorPtr enc_proj = attention_precompute(g, out.enc);

    std::vector<int> framed;
    framed.reserve(target_ids.size() + 2);
    framed.push_back(kSosId);
    framed.insert(framed.end(), target_ids.begin(), target_ids.end());
    framed.push_back(kEosId);

    DecoderState state = initial_state(out.enc->rows());
    std::vector<TensorPtr> terms;
    terms.reserve(framed.size() - 1);
    for (std::size_t u = 1; u < framed.size(); ++u) {
      Attention att = attend(g, out.enc, enc_proj, state.h.back(), state.alpha);
      state.alpha = att.alpha;
      TensorPtr logp = decoder_step(g, e_ctx, framed[u - 1], att.context, state);
      terms.push_back(g.slice(logp, std::size_t(framed[u]), std::size_t(framed[u]) + 1));
    }
    out.att_nll = g.scale(g.sum(g.concat(terms)), -1.0);
    out.num_predictions = terms.size();
    return out;
  }

  // ---- inference wrappers ---------------------------------------------------

  EncodedUtterance encode_values(const FeatureMatrix& feats) const {
    Graph g;
    TensorPtr f = make_tensor({feats.rows, feats.cols}, feats.data);
    TensorPtr enc = encode(g, f);
    TensorPtr ctc = ctc_head(g, enc);
    EncodedUtterance out;
    out.frames = enc->rows();
    out.width = enc->cols();
    out.labels = ctc->cols();
    out.enc = enc->value;
    out.ctc_log_probs = ctc->value;
    return out;
  }

  DecoderStateValues initial_state_values(std::size_t frames) const {
    DecoderStateValues st;
    st.h.assign(cfg_.dec_layers, std::vector<double>(cfg_.dec_width, 0.0));
    st.c.assign(cfg_.dec_layers, std::vector<double>(cfg_.dec_width, 0.0));
    st.alpha.assign(frames, 1.0 / double(frames));
    return st;
  }

  struct StepResult {
    std::vector<double> log_probs;
    DecoderStateValues state;
  };

  /// Value-level step for beam/greedy decoding. raw_ctx is the merged (raw)
  /// context embedding; projection happens here so decode shares the
  /// training path.
  StepResult step_values(const EncodedUtterance& eu, const DecoderStateValues& st,
                         const std::vector<double>& raw_ctx, int prev_token) const {
    Graph g;
    TensorPtr enc = make_tensor({eu.frames, eu.width}, eu.enc);
    TensorPtr enc_proj = attention_precompute(g, enc);
    DecoderState state;
    for (std::size_t l = 0; l < cfg_.dec_layers; ++l) {
      state.h.push_back(make_tensor({cfg_.dec_width}, st.h[l]));
      state.c.push_back(make_tensor({cfg_.dec_width}, st.c[l]));
    }
    state.alpha = make_tensor({eu.frames}, st.alpha);

    TensorPtr e_ctx = project_raw_context(g, raw_ctx);
    Attention att = attend(g, enc, enc_proj, state.h.back(), state.alpha);
    state.alpha = att.alpha;
    TensorPtr logp = decoder_step(g, e_ctx, prev_token, att.context, state);

    StepResult out;
    out.log_probs = logp->value;
    out.state.alpha = state.alpha->value;
    for (std::size_t l = 0; l < cfg_.dec_layers; ++l) {
      out.state.h.push_back(state.h[l]->value);
      out.state.c.push_back(state.c[l]->value);
    }
    return out;
  }

  /// Project a raw merged context vector to d_c on the given graph. Models
  /// without context gating return a placeholder zero scalar (unused).
  TensorPtr project_raw_context(Graph& g, const std::vector<double>& raw_ctx) const {
    if (!cfg_.use_context_gating) return make_zeros({1});
    if (raw_ctx.size() != cfg_.context_raw_dim) {
      throw DataError("raw context width " + std::to_string(raw_ctx.size()) +
                      " != configured " + std::to_string(cfg_.context_raw_dim));
    }
    return project_context(g, make_tensor({cfg_.context_raw_dim}, raw_ctx),
                           param("ctx.proj.w"), param("ctx.proj.b"));
  }

  /// In-graph variant taking an already-built raw context tensor (so the
  /// start vector stays trainable).
  TensorPtr project_raw_context(Graph& g, const TensorPtr& raw_ctx) const {
    if (!cfg_.use_context_gating) return make_zeros({1});
    return project_context(g, raw_ctx, param("ctx.proj.w"), param("ctx.proj.b"));
  }

  /// Attention-only greedy decode (context-aware); returns emitted token ids
  /// without sos/eos. Used for sampled context during training and for
  /// dev-accuracy context histories.
  std::vector<int> greedy_decode(const FeatureMatrix& feats,
                                 const std::vector<double>& raw_ctx,
                                 std::size_t max_len = 0) const {
    EncodedUtterance eu = encode_values(feats);
    if (max_len == 0) max_len = eu.frames + 10;
    DecoderStateValues st = initial_state_values(eu.frames);
    std::vector<int> tokens;
    int prev = kSosId;
    for (std::size_t step = 0; step < max_len + 1; ++step) {
      StepResult sr = step_values(eu, st, raw_ctx, prev);
      st = std::move(sr.state);
      int best = -1;
      double best_lp = 0.0;
      for (std::size_t v = 0; v < sr.log_probs.size(); ++v) {
        const int vi = int(v);
        if (vi == kBlankId || vi == kPadId || vi == kSosId) continue;
        if (step >= max_len && vi != kEosId) continue;
        if (best < 0 || sr.log_probs[v] > best_lp) {
          best = vi;
          best_lp = sr.log_probs[v];
        }
      }
      if (best == kEosId) break;
      tokens.push_back(best);
      prev = best;
    }
    return tokens;
  }

  /// Names of encoder/attention parameters (the pretraining mask).
  std::vector<std::string> encoder_attention_param_names() const {
    std::vector<std::string> names;
    for (const auto& [name, p] : params_) {
      if (name.rfind("enc.", 0) == 0 || name.rfind("att.", 0) == 0) {
        names.push_back(name);
      }
    }
    return names;
  }
  std::vector<std::string> decoder_side_param_names() const {
    std::vector<std::string> names;
    for (const auto& [name, p] : params_) {
      if (name.rfind("enc.", 0) != 0 && name.rfind("att.", 0) != 0) {
        names.push_back(name);
      }
    }
    return names;
  }

 private:
  TensorPtr effective_context(const TensorPtr& e_ctx) const {
    if (overrides_.zero_context) return make_zeros({cfg_.context_dim});
    if (e_ctx->shape != std::vector<std::size_t>{cfg_.context_dim}) {
      throw DataError("decoder_step: e_context width " + shape_str(e_ctx->shape) +
                      " != d_c " + std::to_string(cfg_.context_dim));
    }
    return e_ctx;
  }

  /// Sigmoid gate over `cat`, elementwise-multiplied back onto it. The gate
  /// output width equals the gated concatenation width. Frozen gates bypass
  /// the computation entirely (exact multiply-by-one).
  TensorPtr apply_gate(Graph& g, const std::string& prefix, const TensorPtr& cat) const {
    if (overrides_.freeze_gates) return cat;
    TensorPtr pre;
    if (cfg_.gate_hidden_dim > 0) {
      TensorPtr hidden = g.tanh(
          g.add(g.matmul(param(prefix + ".w1"), cat), param(prefix + ".b1")));
      pre = g.add(g.matmul(param(prefix + ".w2"), hidden), param(prefix + ".b2"));
    } else {
      pre = g.add(g.matmul(param(prefix + ".w"), cat), param(prefix + ".b"));
    }
    return g.mul(g.sigmoid(pre), cat);
  }

  std::pair<TensorPtr, TensorPtr> lstm_step(Graph& g, const TensorPtr& x,
                                            const TensorPtr& h, const TensorPtr& c,
                                            const std::string& prefix) const {
    const std::size_t H = h->shape[0];
    TensorPtr gates = g.add(
        g.add(g.matmul(param(prefix + ".w_ih"), x), g.matmul(param(prefix + ".w_hh"), h)),
        param(prefix + ".b"));
    TensorPtr i = g.sigmoid(g.slice(gates, 0, H));
    TensorPtr f = g.sigmoid(g.slice(gates, H, 2 * H));
    TensorPtr z = g.tanh(g.slice(gates, 2 * H, 3 * H));
    TensorPtr o = g.sigmoid(g.slice(gates, 3 * H, 4 * H));
    TensorPtr c_new = g.add(g.mul(f, c), g.mul(i, z));
    TensorPtr h_new = g.mul(o, g.tanh(c_new));
    return {h_new, c_new};
  }

  TensorPtr row_of(Graph& g, const TensorPtr& m, std::size_t r) const {
    return g.reshape(g.slice(m, r, r + 1), {m->cols()});
  }

  TensorPtr blstm_layer(Graph& g, const TensorPtr& seq, std::size_t layer) const {
    const std::size_t T = seq->rows();
    const std::size_t W = cfg_.enc_width;
    const std::string fwd = "enc.l" + std::to_string(layer) + ".fwd";
    const std::string bwd = "enc.l" + std::to_string(layer) + ".bwd";
    std::vector<TensorPtr> h_fwd(T), h_bwd(T);
    TensorPtr h = make_zeros({W});
    TensorPtr c = make_zeros({W});
    for (std::size_t t = 0; t < T; ++t) {
      auto [nh, nc] = lstm_step(g, row_of(g, seq, t), h, c, fwd);
      h = nh;
      c = nc;
      h_fwd[t] = h;
    }
    h = make_zeros({W});
    c = make_zeros({W});
    for (std::size_t ti = T; ti-- > 0;) {
      auto [nh, nc] = lstm_step(g, row_of(g, seq, ti), h, c, bwd);
      h = nh;
      c = nc;
      h_bwd[ti] = h;
    }
    std::vector<TensorPtr> rows(T);
    for (std::size_t t = 0; t < T; ++t) rows[t] = g.concat(h_fwd[t], h_bwd[t]);
    return g.stack_rows(std::move(rows));
  }

  /// x2 temporal reduction: adjacent frame pairs concatenate; an odd tail
  /// frame pairs with itself (ceil semantics).
  TensorPtr pair_subsample(Graph& g, const TensorPtr& seq) const {
    const std::size_t T = seq->rows();
    std::vector<TensorPtr> rows;
    rows.reserve((T + 1) / 2);
    for (std::size_t t = 0; t < T; t += 2) {
      const std::size_t second = std::min(t + 1, T - 1);
      rows.push_back(g.concat(row_of(g, seq, t), row_of(g, seq, second)));
    }
    return g.stack_rows(std::move(rows));
  }

  void add_param(const std::string& name, std::vector<std::size_t> shape,
                 std::size_t fan_in, Rng& rng, bool zero_init = false) {
    std::vector<double> v(shape_numel(shape), 0.0);
    if (!zero_init) {
      Rng r = rng.derive(name);
      const double s = 1.0 / std::sqrt(double(std::max<std::size_t>(1, fan_in)));
      for (auto& x : v) x = r.uniform(-s, s);
    }
    params_[name] = make_tensor(std::move(shape), std::move(v), /*requires_grad=*/true);
  }

  void init_params(std::uint64_t seed) {
    Rng rng = Rng(seed).derive("model-init");
    const std::size_t W = cfg_.enc_width;
    const std::size_t H = cfg_.dec_width;
    const std::size_t A = cfg_.att_dim;
    const std::size_t V = cfg_.vocab_size;
    const std::size_t d_enc = cfg_.enc_output_dim();
    const std::size_t stages = cfg_.subsample_stages();

    std::size_t in_w = cfg_.feature_dim;
    for (std::size_t l = 0; l < cfg_.enc_layers; ++l) {
      for (const char* dir : {"fwd", "bwd"}) {
        const std::string p = "enc.l" + std::to_string(l) + "." + dir;
        add_param(p + ".w_ih", {4 * W, in_w}, in_w, rng);
        add_param(p + ".w_hh", {4 * W, W}, W, rng);
        add_param(p + ".b", {4 * W}, W, rng, /*zero_init=*/true);
      }
      in_w = 2 * W;
      if (l < stages) in_w *= 2;
    }

    add_param("att.w_enc", {d_enc, A}, d_enc, rng);
    add_param("att.w_query", {A, H}, H, rng);
    add_param("att.conv", {cfg_.att_conv_channels, cfg_.att_conv_width},
              cfg_.att_conv_width, rng);
    add_param("att.w_feat", {cfg_.att_conv_channels, A}, cfg_.att_conv_channels, rng);
    add_param("att.b", {A}, A, rng, /*zero_init=*/true);
    add_param("att.v", {A}, A, rng);

    add_param("dec.embed", {V, cfg_.emb_dim}, cfg_.emb_dim, rng);
    const std::size_t d_c = cfg_.use_context_gating ? cfg_.context_dim : 0;
    std::size_t dec_in = d_c + cfg_.emb_dim + d_enc;
    for (std::size_t l = 0; l < cfg_.dec_layers; ++l) {
      const std::string p = "dec.l" + std::to_string(l);
      add_param(p + ".w_ih", {4 * H, dec_in}, dec_in, rng);
      add_param(p + ".w_hh", {4 * H, H}, H, rng);
      add_param(p + ".b", {4 * H}, H, rng, /*zero_init=*/true);
      dec_in = cfg_.use_context_gating ? d_c + H : H;
    }

    if (cfg_.use_context_gating) {
      auto add_gate = [&](const std::string& prefix, std::size_t width) {
        if (cfg_.gate_hidden_dim > 0) {
          add_param(prefix + ".w1", {cfg_.gate_hidden_dim, width}, width, rng);
          add_param(prefix + ".b1", {cfg_.gate_hidden_dim}, width, rng, true);
          add_param(prefix + ".w2", {width, cfg_.gate_hidden_dim}, cfg_.gate_hidden_dim,
                    rng);
          add_param(prefix + ".b2", {width}, cfg_.gate_hidden_dim, rng, true);
        } else {
          add_param(prefix + ".w", {width, width}, width, rng);
          add_param(prefix + ".b", {width}, width, rng, /*zero_init=*/true);
        }
      };
      add_gate("gate.in", d_c + cfg_.emb_dim + d_enc);
      for (std::size_t l = 1; l < cfg_.dec_layers; ++l) {
        add_gate("gate.l" + std::to_string(l), d_c + H);
      }
      add_param("ctx.proj.w", {cfg_.context_dim, cfg_.context_raw_dim},
                cfg_.context_raw_dim, rng);
      add_param("ctx.proj.b", {cfg_.context_dim}, cfg_.context_raw_dim, rng, true);
      add_param("ctx.start", {cfg_.context_source_dim}, cfg_.context_source_dim, rng,
                true);
    }

    add_param("out.w", {H, V}, H, rng);
    add_param("out.b", {V}, H, rng, /*zero_init=*/true);
    add_param("ctc.w", {d_enc, V}, d_enc, rng);
    add_param("ctc.b", {V}, d_enc, rng, /*zero_init=*/true);
  }

  ModelConfig cfg_;
  std::map<std::string, TensorPtr> params_;
  Overrides overrides_;
};

}  // namespace convasr
