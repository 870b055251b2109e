#include "sapx/factored.hpp"

#include <gtest/gtest.h>

#include <random>

namespace sapx {
namespace {

FactoredModulus F(u64 v) { return FactoredModulus(v); }

TEST(FactoredModulus, FactorizationMultipliesBack) {
  for (u64 n = 1; n <= 5000; ++n) {
    FactoredModulus q(n);
    u64 prod = 1;
    u64 last = 0;
    for (const auto& f : q.factors()) {
      EXPECT_GT(f.prime, last);
      EXPECT_GE(f.exponent, 1u);
      last = f.prime;
      prod *= f.value();
    }
    EXPECT_EQ(prod, n);
  }
  EXPECT_TRUE(F(1).factors().empty());
  EXPECT_THROW(F(0), std::invalid_argument);
}

TEST(FactoredModulus, LargePrimeFactor) {
  FactoredModulus q(2ULL * 4294967291ULL);
  ASSERT_EQ(q.factors().size(), 2u);
  EXPECT_EQ(q.factors()[1].prime, 4294967291ULL);
}

TEST(FactoredModulus, FromFactorsRejectsComposite) {
  EXPECT_THROW(FactoredModulus::from_factors({{4, 1}}), std::invalid_argument);
  EXPECT_THROW(FactoredModulus::from_factors({{3, 1}, {2, 1}}), std::invalid_argument);
  EXPECT_EQ(FactoredModulus::from_factors({{2, 3}, {5, 1}}).value(), 40u);
}

TEST(ExactDivides, Examples) {
  EXPECT_TRUE(exact_divides(F(40), F(360)));
  EXPECT_FALSE(exact_divides(F(4), F(360)));
  for (u64 n = 1; n < 200; ++n) EXPECT_TRUE(exact_divides(F(1), F(n)));
}

TEST(ExactDivides, ReflexiveTransitiveAntisymmetric) {
  for (u64 a = 1; a <= 120; ++a) {
    EXPECT_TRUE(exact_divides(F(a), F(a)));
    for (u64 b = 1; b <= 120; ++b) {
      if (exact_divides(F(a), F(b)) && exact_divides(F(b), F(a))) {
        EXPECT_EQ(a, b);
      }
    }
  }
  for (u64 c : {360u, 720u, 2520u}) {
    for (const auto& b : exact_divisors(F(c))) {
      for (const auto& a : exact_divisors(b)) EXPECT_TRUE(exact_divides(a, F(c)));
    }
  }
}

TEST(ExactDivides, AgreesWithGcdDefinition) {
  // a || b iff a | b and gcd(a, b/a) = 1.
  for (u64 a = 1; a <= 150; ++a) {
    for (u64 b = 1; b <= 150; ++b) {
      bool oracle = b % a == 0 && gcd_u64(a, b / a) == 1;
      EXPECT_EQ(exact_divides(F(a), F(b)), oracle) << a << " " << b;
    }
  }
}

TEST(FracPower, Examples) {
  EXPECT_EQ(frac_power(F(360), Rational(1, 2)).value(), 6u);
  EXPECT_EQ(frac_power(F(360), Rational(1)).value(), 360u);
  EXPECT_EQ(frac_power(F(360), Rational(0)).value(), 1u);
  EXPECT_THROW(frac_power(F(360), Rational(-1, 2)), std::invalid_argument);
}

TEST(FracPower, ProductDividesSumAndExactWhenIntegral) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    u64 n = 1 + rng() % 100000;
    i64 da = 1 + rng() % 6, db = 1 + rng() % 6;
    Rational a(rng() % (da + 1), da), b(rng() % (db + 1), db);
    FactoredModulus q(n);
    u64 lhs = frac_power(q, a).value() * frac_power(q, b).value();
    u64 rhs = frac_power(q, a + b).value();
    ASSERT_EQ(rhs % lhs, 0u) << n;
    bool integral = true;
    for (const auto& f : q.factors()) {
      Rational x = a * static_cast<i64>(f.exponent), y = b * static_cast<i64>(f.exponent);
      if (x.denominator() != 1 || y.denominator() != 1) integral = false;
    }
    if (integral) {
      EXPECT_EQ(lhs, rhs);
    }
  }
}

TEST(SplitByExponent, Examples) {
  auto [s1, l1] = split_by_exponent(F(32 * 9 * 7), 2);
  EXPECT_EQ(s1.value(), 63u);
  EXPECT_EQ(l1.value(), 32u);
  auto [s2, l2] = split_by_exponent(F(2 * 3 * 5 * 7), 1);
  EXPECT_EQ(s2.value(), 210u);
  EXPECT_EQ(l2.value(), 1u);
  auto [s3, l3] = split_by_exponent(F(32 * 243), 4);
  EXPECT_EQ(s3.value(), 1u);
  EXPECT_EQ(l3.value(), 32u * 243u);
}

TEST(SplitByExponent, PartsMultiplyBackAndExactlyDivide) {
  for (u64 n = 1; n <= 3000; n += 7) {
    for (unsigned L = 1; L <= 4; ++L) {
      auto [s, l] = split_by_exponent(F(n), L);
      EXPECT_EQ(s.value() * l.value(), n);
      EXPECT_TRUE(exact_divides(s, F(n)));
      EXPECT_TRUE(exact_divides(l, F(n)));
    }
  }
}

TEST(Radical, Examples) {
  EXPECT_EQ(radical(F(360)).value(), 30u);
  EXPECT_EQ(radical(F(1)).value(), 1u);
  EXPECT_EQ(radical(F(3 * 3 * 3 * 3)).value(), 3u);
}

TEST(GcdLcm, MatchIntegerVersions) {
  for (u64 a = 1; a <= 100; ++a) {
    for (u64 b = 1; b <= 100; ++b) {
      u64 g = gcd_u64(a, b);
      EXPECT_EQ(gcd(F(a), F(b)).value(), g);
      EXPECT_EQ(lcm(F(a), F(b)).value(), a / g * b);
    }
  }
}

TEST(Divisors, BruteForceOracle) {
  for (u64 n = 1; n <= 400; ++n) {
    std::vector<u64> oracle;
    for (u64 d = 1; d <= n; ++d) {
      if (n % d == 0) oracle.push_back(d);
    }
    auto ds = divisors(F(n));
    ASSERT_EQ(ds.size(), oracle.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      EXPECT_EQ(ds[i].value(), oracle[i]);
      EXPECT_EQ(n % ds[i].value(), 0u);
    }
    std::vector<u64> exact_oracle;
    for (u64 d : oracle) {
      if (gcd_u64(d, n / d) == 1) exact_oracle.push_back(d);
    }
    auto es = exact_divisors(F(n));
    ASSERT_EQ(es.size(), exact_oracle.size());
    for (std::size_t i = 0; i < es.size(); ++i) EXPECT_EQ(es[i].value(), exact_oracle[i]);
  }
}

TEST(ModularHelpers, InverseAndPower) {
  for (u64 m = 2; m < 60; ++m) {
    for (u64 a = 0; a < m; ++a) {
      auto inv = mod_inverse(a, m);
      if (gcd_u64(a, m) == 1) {
        ASSERT_TRUE(inv);
        EXPECT_EQ(a * *inv % m, 1u);
      } else {
        EXPECT_FALSE(inv);
      }
      u64 p = 1;
      for (int e = 0; e < 5; ++e) {
        EXPECT_EQ(mod_pow(a, e, m), p);
        p = p * a % m;
      }
    }
  }
}

TEST(GroupOrder, ClosedForm) {
  EXPECT_EQ(sl2_order(F(1)), 1u);
  EXPECT_EQ(sl2_order(F(5)), 120u);
  EXPECT_EQ(sl2_order(F(4)), 48u);
  EXPECT_EQ(sl2_order(F(13)), 2184u);
  EXPECT_EQ(congruence_quotient_order(F(16), F(4)), 64u);
  EXPECT_EQ(congruence_quotient_order(F(12), F(2)), 8u * 24u);
}

}  // namespace
}  // namespace sapx
