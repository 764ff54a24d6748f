#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "convasr/ctc.hpp"

using namespace convasr;

namespace {

constexpr int kBlank = 0;

// Normalized random log-probability table over `labels`, T frames.
std::vector<double> random_log_probs(std::size_t T, std::size_t labels, Rng& rng,
                                     double spread = 2.0) {
  std::vector<double> lp(T * labels);
  for (std::size_t t = 0; t < T; ++t) {
    double mx = -1e300;
    for (std::size_t v = 0; v < labels; ++v) {
      lp[t * labels + v] = rng.uniform(-spread, spread);
      mx = std::max(mx, lp[t * labels + v]);
    }
    double z = 0.0;
    for (std::size_t v = 0; v < labels; ++v) z += std::exp(lp[t * labels + v] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t v = 0; v < labels; ++v) lp[t * labels + v] -= lz;
  }
  return lp;
}

std::vector<int> random_target(std::size_t U, std::size_t labels, Rng& rng) {
  std::vector<int> t(U);
  for (auto& y : t) y = 1 + int(rng.below(labels - 1));
  return t;
}

}  // namespace

TEST_CASE("collapse_alignment") {
  REQUIRE(collapse_alignment({1, 1, 0, 2}, kBlank) == std::vector<int>{1, 2});
  REQUIRE(collapse_alignment({0, 0}, kBlank) == std::vector<int>{});
  REQUIRE(collapse_alignment({1, 0, 1}, kBlank) == std::vector<int>{1, 1});
}

TEST_CASE("ctc_loss fixtures") {
  SECTION("single frame, single alignment") {
    // p(a) = 0.6 -> nll = -ln 0.6
    std::vector<double> lp = {std::log(0.4), std::log(0.6)};
    CtcTable table{1, 2, lp.data()};
    auto res = ctc_loss(table, {1}, kBlank);
    REQUIRE_FALSE(res.unreachable);
    REQUIRE(res.nll == Catch::Approx(-std::log(0.6)).epsilon(1e-12));
    REQUIRE(res.nll == Catch::Approx(0.5108).margin(5e-5));
  }
  SECTION("two frames, uniform halves: p collapses to 0.75") {
    std::vector<double> lp = {std::log(0.5), std::log(0.5), std::log(0.5),
                              std::log(0.5)};
    CtcTable table{2, 2, lp.data()};
    auto res = ctc_loss(table, {1}, kBlank);
    REQUIRE(res.nll == Catch::Approx(-std::log(0.75)).epsilon(1e-12));
    // enumeration oracle over the 4 alignments agrees
    REQUIRE(ctc_brute_force(table, {1}, kBlank) ==
            Catch::Approx(res.nll).epsilon(1e-12));
  }
  SECTION("impossible target yields +inf with zero gradient") {
    std::vector<double> lp = {std::log(0.2), std::log(0.3), std::log(0.5)};
    CtcTable table{1, 3, lp.data()};
    auto res = ctc_loss(table, {1, 2}, kBlank);
    REQUIRE(res.unreachable);
    REQUIRE(std::isinf(res.nll));
    for (double gv : res.grad) REQUIRE(gv == 0.0);
    REQUIRE_FALSE(res.diagnostic.empty());
  }
  SECTION("blank in target rejected") {
    std::vector<double> lp = {std::log(0.5), std::log(0.5)};
    CtcTable table{1, 2, lp.data()};
    REQUIRE_THROWS_AS(ctc_loss(table, {0}, kBlank), DataError);
  }
}

TEST_CASE("brute-force equivalence over 500 random instances") {
  Rng rng(31415);
  for (int i = 0; i < 500; ++i) {
    const std::size_t T = 2 + rng.below(5);   // 2..6
    const std::size_t V = 2 + rng.below(3);   // 2..4
    const std::size_t U = 1 + rng.below(3);   // 1..3
    auto lp = random_log_probs(T, V, rng);
    auto target = random_target(U, V, rng);
    CtcTable table{T, V, lp.data()};
    const auto res = ctc_loss(table, target, kBlank);
    const double brute = ctc_brute_force(table, target, kBlank);
    CAPTURE(i, T, V, U);
    if (res.unreachable) {
      REQUIRE(std::isinf(brute));
    } else {
      REQUIRE(std::abs(res.nll - brute) < 1e-9);
    }
  }
}

TEST_CASE("deterministic one-hot path") {
  // frames spell a, blank, b with certainty -> p(target (a,b)) = 1
  const double tiny = -745.0;  // log of ~5e-324 underflow guard stand-in
  std::vector<double> lp(3 * 3, tiny);
  lp[0 * 3 + 1] = 0.0;
  lp[1 * 3 + 0] = 0.0;
  lp[2 * 3 + 2] = 0.0;
  CtcTable table{3, 3, lp.data()};
  auto res = ctc_loss(table, {1, 2}, kBlank);
  REQUIRE(res.nll == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("empty target sums the all-blank alignments") {
  Rng rng(555);
  auto lp = random_log_probs(3, 3, rng);
  CtcTable table{3, 3, lp.data()};
  auto res = ctc_loss(table, {}, kBlank);
  double blanks = 0.0;
  for (std::size_t t = 0; t < 3; ++t) blanks += lp[t * 3 + kBlank];
  REQUIRE(res.nll == Catch::Approx(-blanks).epsilon(1e-12));
  REQUIRE(ctc_brute_force(table, {}, kBlank) == Catch::Approx(res.nll).epsilon(1e-12));
}

TEST_CASE("probability partition over all label sequences") {
  // sum over every enumerable target of exp(-nll) must be 1.
  Rng rng(8088);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t T = 2 + rng.below(3);  // 2..4
    const std::size_t V = 2 + rng.below(3);  // 2..4
    auto lp = random_log_probs(T, V, rng);
    CtcTable table{T, V, lp.data()};

    double total = 0.0;
    std::vector<int> target;
    // enumerate all sequences over non-blank labels with length <= T
    std::function<void(std::size_t)> walk = [&](std::size_t remaining) {
      auto res = ctc_loss(table, target, kBlank);
      if (!res.unreachable) total += std::exp(-res.nll);
      if (remaining == 0) return;
      for (std::size_t v = 1; v < V; ++v) {
        target.push_back(int(v));
        walk(remaining - 1);
        target.pop_back();
      }
    };
    walk(T);
    CAPTURE(trial, T, V);
    REQUIRE(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("ctc gradient matches finite differences") {
  Rng rng(2718);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 2 + rng.below(4);
    const std::size_t V = 2 + rng.below(3);
    const std::size_t U = 1 + rng.below(2);
    auto lp = random_log_probs(T, V, rng);
    auto target = random_target(U, V, rng);
    CtcTable table{T, V, lp.data()};
    auto res = ctc_loss(table, target, kBlank);
    if (res.unreachable) continue;

    const double step = 1e-6;
    for (std::size_t i = 0; i < lp.size(); ++i) {
      const double keep = lp[i];
      lp[i] = keep + step;
      const double up = ctc_loss(table, target, kBlank).nll;
      lp[i] = keep - step;
      const double dn = ctc_loss(table, target, kBlank).nll;
      lp[i] = keep;
      const double central = (up - dn) / (2 * step);
      const double rel =
          std::abs(res.grad[i] - central) / std::max(1e-7, std::abs(central));
      CAPTURE(trial, i);
      REQUIRE(rel < 1e-6);
    }
  }
}

TEST_CASE("prefix scoring") {
  Rng rng(99991);
  SECTION("empty prefix base case") {
    auto lp = random_log_probs(4, 3, rng);
    CtcTable table{4, 3, lp.data()};
    auto cache = ctc_prefix_init(table, kBlank);
    double blanks = 0.0;
    for (std::size_t t = 0; t < 4; ++t) blanks += lp[t * 3 + kBlank];
    REQUIRE(ctc_prefix_final(cache) == Catch::Approx(blanks).epsilon(1e-12));
  }
  SECTION("forced token on the deterministic example") {
    const double tiny = -745.0;
    std::vector<double> lp(2 * 2, tiny);
    lp[0 * 2 + 1] = 0.0;
    lp[1 * 2 + 1] = 0.0;
    CtcTable table{2, 2, lp.data()};
    auto cache = ctc_prefix_init(table, kBlank);
    auto child = ctc_prefix_extend(table, cache, 1, kBlank);
    REQUIRE(child.score == Catch::Approx(0.0).margin(1e-9));
  }
  SECTION("terminated prefix equals full ctc_loss") {
    for (int trial = 0; trial < 60; ++trial) {
      const std::size_t T = 2 + rng.below(4);
      const std::size_t V = 2 + rng.below(3);
      const std::size_t U = 1 + rng.below(std::min<std::size_t>(3, T));
      auto lp = random_log_probs(T, V, rng);
      auto target = random_target(U, V, rng);
      CtcTable table{T, V, lp.data()};
      auto full = ctc_loss(table, target, kBlank);

      auto cache = ctc_prefix_init(table, kBlank);
      for (int y : target) cache = ctc_prefix_extend(table, cache, y, kBlank);
      const double terminated = ctc_prefix_final(cache);
      CAPTURE(trial, T, V, U);
      if (full.unreachable) {
        REQUIRE(terminated == kLogZero);
      } else {
        REQUIRE(std::abs(terminated - (-full.nll)) < 1e-9);
      }
    }
  }
  SECTION("extension never increases the prefix score") {
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t T = 3 + rng.below(3);
      const std::size_t V = 3;
      auto lp = random_log_probs(T, V, rng);
      CtcTable table{T, V, lp.data()};
      auto cache = ctc_prefix_init(table, kBlank);
      double prev_score = cache.score;
      for (int depth = 0; depth < 3; ++depth) {
        const int c = 1 + int(rng.below(V - 1));
        cache = ctc_prefix_extend(table, cache, c, kBlank);
        REQUIRE(cache.score <= prev_score + 1e-12);
        prev_score = cache.score;
      }
    }
  }
}

TEST_CASE("in-graph ctc node gradient") {
  Rng rng(13579);
  auto lp_raw = random_log_probs(4, 3, rng);
  auto logits = make_tensor({4, 3}, lp_raw, true);
  std::vector<int> target = {1, 2};
  auto f = [&](Graph& g, const TensorPtr& t) {
    // log-softmax upstream keeps rows normalized and puts the node mid-graph
    return ctc_nll_node(g, g.log_softmax(t), target, kBlank);
  };
  REQUIRE(finite_difference_check(f, logits, 1e-6) < 1e-6);
}
