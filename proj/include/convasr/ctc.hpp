// Connectionist Temporal Classification: exact negative log-likelihood by
// log-space forward-backward, alignment collapse, a literal enumeration
// oracle, and the incremental prefix score used by joint beam search.
//
// All recurrences run in log space with logsumexp; probability space is never
// used. A target with no valid alignment yields +inf loss with a zero
// gradient and a diagnostic flag rather than an exception, so batched
// training can skip it.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "convasr/tensor.hpp"

namespace convasr {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

/// Log-probability table: T frames by V labels, row-major. Row `t` is the
/// frame-t log-distribution over labels; `blank` indexes the blank label.
struct CtcTable {
  std::size_t frames = 0;
  std::size_t labels = 0;
  const double* data = nullptr;
  double at(std::size_t t, std::size_t v) const { return data[t * labels + v]; }
};

/// Merge adjacent repeats, then delete blanks.
inline std::vector<int> collapse_alignment(const std::vector<int>& path, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int v : path) {
    if (v != prev && v != blank) out.push_back(v);
    prev = v;
  }
  return out;
}

struct CtcResult {
  double nll = 0.0;
  std::vector<double> grad;  // d nll / d log_probs, same layout as the table
  bool unreachable = false;
  std::string diagnostic;
};

/// Exact CTC negative log-likelihood and gradient w.r.t. the log-probability
/// table entries (treated as free coordinates).
inline CtcResult ctc_loss(const CtcTable& lp, const std::vector<int>& target, int blank) {
  const std::size_t T = lp.frames;
  const std::size_t U = target.size();
  for (int y : target) {
    if (y == blank) throw DataError("ctc_loss: target contains the blank label");
    if (y < 0 || std::size_t(y) >= lp.labels) {
      throw DataError("ctc_loss: target label " + std::to_string(y) + " out of range");
    }
  }
  CtcResult res;
  res.grad.assign(T * lp.labels, 0.0);

  const std::size_t S = 2 * U + 1;
  auto ext = [&](std::size_t s) { return s % 2 == 0 ? blank : target[s / 2]; };

  // Quick reachability: U labels need U frames plus one separator per
  // adjacent repeat.
  std::size_t needed = U;
  for (std::size_t u = 1; u < U; ++u) {
    if (target[u] == target[u - 1]) ++needed;
  }
  if (needed > T) {
    res.nll = std::numeric_limits<double>::infinity();
    res.unreachable = true;
    res.diagnostic = "target needs " + std::to_string(needed) + " frames, have " +
                     std::to_string(T);
    return res;
  }

  std::vector<double> alpha(T * S, kLogZero);
  std::vector<double> beta(T * S, kLogZero);

  alpha[0 * S + 0] = lp.at(0, std::size_t(blank));
  if (S > 1) alpha[0 * S + 1] = lp.at(0, std::size_t(ext(1)));
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double acc = alpha[(t - 1) * S + s];
      if (s >= 1) acc = log_add(acc, alpha[(t - 1) * S + s - 1]);
      if (s >= 2 && ext(s) != blank && ext(s) != ext(s - 2)) {
        acc = log_add(acc, alpha[(t - 1) * S + s - 2]);
      }
      alpha[t * S + s] = acc == kLogZero ? kLogZero : acc + lp.at(t, std::size_t(ext(s)));
    }
  }
  double log_p = alpha[(T - 1) * S + S - 1];
  if (S > 1) log_p = log_add(log_p, alpha[(T - 1) * S + S - 2]);

  if (log_p == kLogZero) {
    res.nll = std::numeric_limits<double>::infinity();
    res.unreachable = true;
    res.diagnostic = "no alignment has nonzero probability";
    return res;
  }

  beta[(T - 1) * S + S - 1] = lp.at(T - 1, std::size_t(ext(S - 1)));
  if (S > 1) beta[(T - 1) * S + S - 2] = lp.at(T - 1, std::size_t(ext(S - 2)));
  for (std::size_t ti = T - 1; ti-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double acc = beta[(ti + 1) * S + s];
      if (s + 1 < S) acc = log_add(acc, beta[(ti + 1) * S + s + 1]);
      if (s + 2 < S && ext(s) != blank && ext(s) != ext(s + 2)) {
        acc = log_add(acc, beta[(ti + 1) * S + s + 2]);
      }
      beta[ti * S + s] = acc == kLogZero ? kLogZero : acc + lp.at(ti, std::size_t(ext(s)));
    }
  }

  // alpha and beta both include the emission at t, so paths through state s
  // at t have log-probability alpha + beta - lp. d nll / d lp[t][k] =
  // -exp(logsumexp_{s: ext(s)=k}(alpha+beta) - lp[t][k] - log_p).
  res.nll = -log_p;
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> per_label(lp.labels, kLogZero);
    for (std::size_t s = 0; s < S; ++s) {
      const double ab = alpha[t * S + s] == kLogZero || beta[t * S + s] == kLogZero
                            ? kLogZero
                            : alpha[t * S + s] + beta[t * S + s];
      if (ab == kLogZero) continue;
      auto& cell = per_label[std::size_t(ext(s))];
      cell = log_add(cell, ab);
    }
    for (std::size_t k = 0; k < lp.labels; ++k) {
      if (per_label[k] == kLogZero) continue;
      res.grad[t * lp.labels + k] = -std::exp(per_label[k] - lp.at(t, k) - log_p);
    }
  }
  return res;
}

/// Literal Eq.-(2) oracle: enumerate every length-T path, keep those whose
/// collapse equals the target, and sum their probabilities. Guarded to tiny
/// instances.
inline double ctc_brute_force(const CtcTable& lp, const std::vector<int>& target,
                              int blank) {
  double combos = 1.0;
  for (std::size_t t = 0; t < lp.frames; ++t) {
    combos *= double(lp.labels);
    if (combos > 1e6) throw ConfigError("ctc_brute_force: V^T exceeds 1e6 guard");
  }
  std::vector<int> path(lp.frames, 0);
  double total = kLogZero;
  while (true) {
    if (collapse_alignment(path, blank) == target) {
      double score = 0.0;
      for (std::size_t t = 0; t < lp.frames; ++t) {
        score += lp.at(t, std::size_t(path[t]));
      }
      total = log_add(total, score);
    }
    std::size_t pos = 0;
    while (pos < path.size()) {
      if (++path[pos] < int(lp.labels)) break;
      path[pos] = 0;
      ++pos;
    }
    if (pos == path.size()) break;
  }
  return total == kLogZero ? std::numeric_limits<double>::infinity() : -total;
}

// ---------------------------------------------------------------------------
// Prefix scoring for joint decoding: log p(all sequences beginning with g)
// maintained incrementally with separate blank-ending / non-blank-ending
// accumulators per frame.

struct CtcPrefixCache {
  std::vector<double> log_nb;  // prefix realized, last emission is its final label
  std::vector<double> log_b;   // prefix realized, frame ends in blank
  int last_label = -1;         // -1 for the empty prefix
  double score = 0.0;          // log prefix probability (or full-sequence for eos)
};

/// Cache for the empty prefix: only all-blank paths realize it. Its prefix
/// probability is 1 (every sequence extends it); ctc_prefix_final gives the
/// probability that the sequence IS empty.
inline CtcPrefixCache ctc_prefix_init(const CtcTable& lp, int blank) {
  CtcPrefixCache c;
  c.log_nb.assign(lp.frames, kLogZero);
  c.log_b.assign(lp.frames, 0.0);
  double acc = 0.0;
  for (std::size_t t = 0; t < lp.frames; ++t) {
    acc += lp.at(t, std::size_t(blank));
    c.log_b[t] = acc;
  }
  c.score = 0.0;
  return c;
}

/// Score of ending the hypothesis exactly here: log p(y = prefix).
inline double ctc_prefix_final(const CtcPrefixCache& cache) {
  if (cache.log_nb.empty()) return kLogZero;
  return log_add(cache.log_nb.back(), cache.log_b.back());
}

/// Extend a parent prefix with label c (not blank), returning the child cache
/// whose `score` is the child's prefix probability.
inline CtcPrefixCache ctc_prefix_extend(const CtcTable& lp, const CtcPrefixCache& parent,
                                        int c, int blank) {
  if (c == blank) throw DataError("ctc_prefix_extend: cannot extend with blank");
  const std::size_t T = lp.frames;
  CtcPrefixCache child;
  child.log_nb.assign(T, kLogZero);
  child.log_b.assign(T, kLogZero);
  child.last_label = c;

  const bool empty_parent = parent.last_label < 0;
  double psi;
  {
    // new-label start at frame 0 is possible only from the empty prefix
    child.log_nb[0] = empty_parent ? lp.at(0, std::size_t(c)) : kLogZero;
    child.log_b[0] = kLogZero;
    psi = child.log_nb[0];
  }
  for (std::size_t t = 1; t < T; ++t) {
    // transition into c from the parent: always via a blank-ending parent
    // path, or directly when the parent does not already end with c
    double phi = parent.log_b[t - 1];
    if (parent.last_label != c) phi = log_add(phi, parent.log_nb[t - 1]);
    child.log_nb[t] =
        lp.at(t, std::size_t(c)) + log_add(phi, child.log_nb[t - 1]);
    child.log_b[t] =
        lp.at(t, std::size_t(blank)) + log_add(child.log_b[t - 1], child.log_nb[t - 1]);
    psi = log_add(psi, lp.at(t, std::size_t(c)) + phi);
  }
  child.score = psi;
  return child;
}

/// In-graph CTC node: attaches the exact ctc_loss gradient to a [T,V]
/// log-probability tensor. The loss must be finite (check reachability with
/// ctc_loss first).
inline TensorPtr ctc_nll_node(Graph& g, const TensorPtr& log_probs,
                              const std::vector<int>& target, int blank) {
  if (!log_probs->is_matrix()) {
    throw NumericError("ctc_nll expects a [T,V] matrix, got " + shape_str(log_probs->shape));
  }
  auto fwd = [target, blank](const std::vector<TensorPtr>& in, Tensor& out) {
    CtcTable table{in[0]->rows(), in[0]->cols(), in[0]->value.data()};
    CtcResult r = ctc_loss(table, target, blank);
    if (r.unreachable) {
      throw NumericError("ctc_nll: unreachable target (" + r.diagnostic + ")");
    }
    out.value[0] = r.nll;
  };
  auto bwd = [target, blank](const std::vector<TensorPtr>& in, Tensor& out) {
    CtcTable table{in[0]->rows(), in[0]->cols(), in[0]->value.data()};
    CtcResult r = ctc_loss(table, target, blank);
    for (std::size_t i = 0; i < r.grad.size(); ++i) {
      in[0]->grad[i] += out.grad[0] * r.grad[i];
    }
  };
  return g.emit("ctc-nll", {log_probs}, {1}, fwd, bwd);
}

}  // namespace convasr
