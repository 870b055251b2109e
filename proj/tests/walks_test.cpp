#include "sapx/walks.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "sapx/measure.hpp"

namespace sapx {

namespace {

GeneratorSet left_only(const GeneratorSet& g) {
  GeneratorSet s;
  s.sides = 1;
  for (const auto& e : g.elements) s.elements.push_back({e.left, RatMatrix2{}});
  return s;
}

// Exact mass of {L(g) = n} under chi_S^(l) by walking every word.
BigRational enumerate_exact(const std::vector<IntPair>& S, const IntegralLinearEvent& ev,
                            unsigned l) {
  std::map<IntPair, u64> layer{{IntPair{}, 1}};
  for (unsigned i = 0; i < l; ++i) {
    std::map<IntPair, u64> next;
    for (const auto& [g, c] : layer) {
      for (const auto& s : S) next[s * g] += c;
    }
    layer.swap(next);
  }
  u64 hits = 0, total = 0;
  for (const auto& [g, c] : layer) {
    total += c;
    if (holds(ev, g)) hits += c;
  }
  return BigRational(hits, total);
}

TEST(LinearForm8, RejectsNonPrimitive) {
  EXPECT_THROW(LinearForm8::make({2, 0, 4, 0, 0, 6, 0, 0}), std::invalid_argument);
  EXPECT_THROW(LinearForm8::make({0, 0, 0, 0, 0, 0, 0, 0}), std::invalid_argument);
  EXPECT_NO_THROW(LinearForm8::make({2, 0, 3, 0, 0, 0, 0, 0}));
}

TEST(TraceForm, ValidationChecksTracelessAndNonvanishing) {
  TraceForm ok{{IntMatrix2{1, 0, 0, -1}, IntMatrix2{0, 1, 0, 0}},
               {IntMatrix2{0, 0, 1, 0}, IntMatrix2{1, 2, 3, -1}}};
  EXPECT_NO_THROW(ok.validate(35));
  TraceForm bad_trace = ok;
  bad_trace.xi[0] = IntMatrix2{1, 0, 0, 1};
  EXPECT_THROW(bad_trace.validate(5), std::invalid_argument);
  TraceForm vanish = ok;
  vanish.eta[1] = IntMatrix2{5, 10, 0, -5};
  EXPECT_THROW(vanish.validate(35), std::invalid_argument);
  EXPECT_NO_THROW(vanish.validate(7));
}

TEST(TraceForm, EvaluationMatchesIntegerComputation) {
  TraceForm t{{IntMatrix2{1, 0, 0, -1}, IntMatrix2{0, 1, 0, 0}},
              {IntMatrix2{0, 0, 1, 0}, IntMatrix2{1, 2, 3, -1}}};
  auto gens = standard_pair_generators().integral_elements();
  IntPair g{};
  for (int i = 0; i < 9; ++i) {
    g = gens[(i * 5 + 1) % gens.size()] * g;
    BigInt exact = trace(g.left * t.xi[0] * inverse(g.left) * t.eta[0]) +
                   trace(g.right * t.xi[1] * inverse(g.right) * t.eta[1]);
    for (u64 Q : {7u, 12u, 101u}) {
      EXPECT_EQ(t.eval(reduce(g, Q, Q), Q), reduce_int(exact, Q));
    }
  }
}

TEST(DecayProfile, LowerEntryEventTendsToUniformCount) {
  auto S = standard_pair_generators();
  auto prof = decay_profile(S, LowerEntryEvent{}, 5, {1, 2, 5, 60, 200});
  EXPECT_EQ(prof.group_order, 120u);
  EXPECT_DOUBLE_EQ(prof.uniform_mass, 1.0 / 6.0);
  EXPECT_NEAR(prof.rows.back().mass, 1.0 / 6.0, 1e-9);
  EXPECT_GT(prof.c_hat, 0.0);
}

TEST(DecayProfile, ConvergesMonotonicallyAfterMixing) {
  auto S = standard_pair_generators();
  std::vector<unsigned> ls;
  for (unsigned l = 40; l <= 400; l += 40) ls.push_back(l);
  auto prof = decay_profile(S, ParabolicEvent{}, 7, ls);
  double prev = 1.0;
  for (const auto& r : prof.rows) {
    double err = std::abs(r.mass - prof.uniform_mass);
    EXPECT_LE(err, prev + 1e-15);
    prev = err;
  }
  EXPECT_LT(prev, 1e-9);
}

TEST(DecayProfile, EmptyEventHasNoMass) {
  // Generators are 1 mod 3, so every trace is 2 mod 3 and tr = 1 mod 9 is empty.
  GeneratorSet S;
  S.sides = 1;
  for (i64 t : {3, -3}) {
    S.elements.push_back({rat_matrix(1, t, 0, 1), RatMatrix2{}});
    S.elements.push_back({rat_matrix(1, 0, t, 1), RatMatrix2{}});
  }
  auto prof = decay_profile(S, TraceValueEvent{1}, 9, {1, 2, 3, 10});
  for (const auto& r : prof.rows) EXPECT_EQ(r.mass, 0.0);
  EXPECT_EQ(prof.uniform_mass, 0.0);
}

TEST(DecayProfile, GeneratorsAvoidingEventAtLengthOne) {
  // The generators have trace 2 or 3.
  auto S = left_only(standard_pair_generators());
  auto prof = decay_profile(S, TraceValueEvent{0}, 5, {1});
  EXPECT_EQ(prof.rows[0].mass, 0.0);
}

TEST(DecayProfile, MatchesExactConvolution) {
  auto S = standard_pair_generators();
  const u64 Q = 4;
  auto mu = uniform_on(S.reduce_all(Q, Q));
  LinearForm8 L = LinearForm8::make({1, 0, 2, 0, 0, 3, 0, 1});
  for (i64 n : {0, 1, 3}) {
    EventSpec ev = LinearEvent{L, n};
    auto prof = decay_profile(S, ev, Q, {1, 2, 3, 4, 5});
    for (const auto& row : prof.rows) {
      auto exact = convolve_power(mu, row.l);
      BigRational m = mass_on(exact, [&](const PairElement& x) { return holds(ev, x, Q); });
      EXPECT_NEAR(row.mass, m.convert_to<double>(), 1e-12) << row.l << " " << n;
    }
  }
}

TEST(DecayProfile, RejectsBadInputs) {
  auto S = standard_pair_generators();
  EXPECT_THROW(decay_profile(S, LowerEntryEvent{}, 1, {1}), std::invalid_argument);
  IntegralLinearEvent ie{LinearForm8::make({1, 0, 0, 0, 0, 0, 0, 0}), 1};
  EXPECT_THROW(decay_profile(S, ie, 5, {1}), std::invalid_argument);
  EXPECT_THROW(decay_profile(S, LowerEntryEvent{}, 7, {1}, 100), std::length_error);
}

TEST(CounterRng, ReproducibleAndUnbiased) {
  CounterRng a(9, 4), b(9, 4), c(9, 5);
  for (int i = 0; i < 5; ++i) {
    u64 x = a.next();
    EXPECT_EQ(x, b.next());
    EXPECT_NE(x, c.next());
  }
  CounterRng r(1, 0);
  std::vector<int> counts(6, 0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) ++counts[r.below(6)];
  for (int k : counts) EXPECT_NEAR(k, n / 6.0, 4 * std::sqrt(n * (1 / 6.0) * (5 / 6.0)));
}

TEST(SampleWalk, TrivialCases) {
  auto S = standard_pair_generators();
  auto gens = S.integral_elements();
  auto one = sample_walk(S, 1, 4000, 3);
  std::map<IntPair, int> seen;
  for (const auto& g : one) ++seen[g];
  EXPECT_EQ(seen.size(), gens.size());
  for (const auto& g : gens) EXPECT_NEAR(seen[g], 4000.0 / gens.size(), 4 * std::sqrt(4000.0 / 8));

  GeneratorSet id;
  id.elements.push_back({});
  for (const auto& g : sample_walk(id, 7, 10, 1)) EXPECT_EQ(g, IntPair{});
  EXPECT_THROW(sample_walk(S, 0, 1, 1), std::invalid_argument);
  EXPECT_EQ(sample_walk(S, 5, 50, 11), sample_walk(S, 5, 50, 11));
}

TEST(SampleWalk, EmpiricalMassWithinFourSigmaOfExact) {
  auto S = standard_pair_generators();
  auto gens = S.integral_elements();
  IntegralLinearEvent ev{LinearForm8::make({1, 0, 0, 1, 0, 0, 0, 0}), 2};  // tr g1 = 2
  const std::size_t n = 20000;
  for (unsigned l : {2u, 4u, 6u, 8u}) {
    double p = enumerate_exact(gens, ev, l).convert_to<double>();
    auto samples = sample_walk(S, l, n, 17 + l);
    std::size_t hits = 0;
    for (const auto& g : samples) hits += holds(ev, g);
    double sigma = std::sqrt(p * (1 - p) / n);
    EXPECT_NEAR(static_cast<double>(hits) / n, p, 4 * sigma + 1e-12) << l;
  }
}

TEST(SampleWalk, PushforwardMatchesQuotientConvolution) {
  auto S = standard_pair_generators();
  const u64 Q = 3;
  auto mu = uniform_on(S.reduce_all(Q, Q));
  const unsigned l = 3;
  auto exact = convolve_power(mu, l);
  const std::size_t n = 30000;
  std::map<PairElement, std::size_t> counts;
  for (const auto& g : sample_walk(S, l, n, 5)) ++counts[reduce(g, Q, Q)];
  for (const auto& [x, w] : exact.entries()) {
    double p = w.convert_to<double>();
    double sigma = std::sqrt(p * (1 - p) / n);
    EXPECT_NEAR(static_cast<double>(counts[x]) / n, p, 4 * sigma);
  }
  for (const auto& [x, c] : counts) EXPECT_GT(exact(x), 0);
}

TEST(ArchimedeanDecay, ParityObstructionGivesZero) {
  // The generators lie in Gamma_0(2), so c1 stays even.
  GeneratorSet S;
  S.sides = 1;
  for (i64 t : {1, -1}) S.elements.push_back({rat_matrix(1, t, 0, 1), RatMatrix2{}});
  for (i64 t : {2, -2}) S.elements.push_back({rat_matrix(1, 0, t, 1), RatMatrix2{}});
  IntegralLinearEvent ev{LinearForm8::make({0, 0, 1, 0, 0, 0, 0, 0}), 1};  // c1 = 1
  auto rep = archimedean_decay(S, ev, 1, 12, 500, 2);
  for (const auto& r : rep.rows) EXPECT_EQ(r.hits, 0u);
  EXPECT_TRUE(std::isnan(rep.rate));
  EXPECT_THROW(archimedean_decay(S, ev, 0, 3, 10, 1), std::invalid_argument);
}

TEST(ArchimedeanDecay, PositiveRateForDenseSet) {
  auto S = standard_pair_generators();
  IntegralLinearEvent ev{LinearForm8::make({0, 0, 1, 0, 0, 0, 0, 0}), 0};  // c1 = 0
  auto rep = archimedean_decay(S, ev, 4, 16, 20000, 7);
  ASSERT_GE(rep.fitted_points, 5u);
  EXPECT_GT(rep.rate, 0.0);
  for (const auto& r : rep.rows) {
    EXPECT_LE(r.ci_low, r.p_hat);
    EXPECT_GE(r.ci_high, r.p_hat);
  }
  auto again = archimedean_decay(S, ev, 4, 16, 20000, 7);
  EXPECT_EQ(archimedean_csv(rep), archimedean_csv(again));
}

TEST(Wilson, KnownValues) {
  auto [lo, hi] = wilson_interval(0, 100);
  EXPECT_EQ(lo, 0.0);
  EXPECT_NEAR(hi, 0.037, 1e-3);
  auto [lo2, hi2] = wilson_interval(50, 100);
  EXPECT_NEAR(lo2, 0.4038, 1e-3);
  EXPECT_NEAR(hi2, 0.5962, 1e-3);
}

}  // namespace
}  // namespace sapx
