#include "sapx/commutator.hpp"

#include <gtest/gtest.h>

#include <random>

#include "sapx/integral.hpp"

namespace sapx {
namespace {

TEST(CommutatorCongruence, Mod125Example) {
  auto x = make_sl2(125, 1, 5, 0, 1), y = make_sl2(125, 1, 0, 5, 1);
  auto r = commutator_congruence(x, y, 5, 1, 1);
  EXPECT_EQ(r.depth, 3u);
  EXPECT_TRUE(r.holds);
  const Mat2Mod want{125, 26, 0, 0, 101};
  EXPECT_EQ(r.lhs, want);
  EXPECT_EQ(r.rhs, want);
}

TEST(CommutatorCongruence, TrivialCases) {
  auto x = make_sl2(81, 4, 3, 9, 7);
  auto e = identity(81);
  auto r = commutator_congruence(x, e, 3, 1, 1);
  EXPECT_TRUE(r.holds);
  EXPECT_EQ(r.lhs, (Mat2Mod{27, 1, 0, 0, 1}));
  EXPECT_EQ(r.rhs, r.lhs);
  auto s = commutator_congruence(x, x, 3, 1, 1);
  EXPECT_EQ(s.lhs, (Mat2Mod{27, 1, 0, 0, 1}));
  EXPECT_EQ(s.rhs, s.lhs);
}

TEST(CommutatorCongruence, Preconditions) {
  auto x = make_sl2(125, 1, 5, 0, 1), y = make_sl2(125, 1, 0, 5, 1);
  EXPECT_THROW(commutator_congruence(x, y, 5, 2, 1), std::invalid_argument);  // x is only 1 mod 5
  EXPECT_THROW(commutator_congruence(make_sl2(25, 1, 5, 0, 1), make_sl2(25, 1, 0, 5, 1), 5, 1, 1),
               std::invalid_argument);  // needs 5^3
  EXPECT_THROW(commutator_congruence(x, y, 3, 1, 1), std::invalid_argument);
}

TEST(CommutatorCongruence, ExhaustiveSweeps) {
  for (auto [p, n] : std::vector<std::pair<u64, unsigned>>{{2, 4}, {3, 3}, {5, 2}}) {
    auto s = sweep_commutator_congruence(p, n);
    EXPECT_EQ(s.violations, 0u) << p << "^" << n;
    const u64 m = checked_pow(p, 3 * (n - 1));
    EXPECT_EQ(s.pairs, m * m);
  }
}

TEST(CommutatorCongruence, SweepArithmeticMatchesLibrary) {
  // The sweep's hand-rolled products must agree with the generic path.
  auto xs = enumerate_congruence(FactoredModulus(16), FactoredModulus(2));
  std::mt19937_64 rng(1);
  for (int t = 0; t < 300; ++t) {
    const auto& x = xs[rng() % xs.size()];
    const auto& y = xs[rng() % xs.size()];
    const unsigned m = congruence_depth(x, 2), mp = congruence_depth(y, 2);
    const unsigned D = m + mp + std::min(m, mp);
    if (D > 4) continue;
    EXPECT_TRUE(commutator_congruence(x, y, 2, m, mp).holds);
  }
}

TEST(BracketSpan, StandardBasis) {
  const u64 q = 35;
  auto r = bracket_span_cover(lie_e(q), lie_f(q));
  ASSERT_TRUE(r.covers);
  ASSERT_EQ(r.certificates.size(), 3u);
  for (const auto& c : r.certificates) EXPECT_TRUE(check_certificate(lie_e(q), lie_f(q), c));
  EXPECT_EQ(r.certificates[0].target, scale(2, lie_h(q)));
}

TEST(BracketSpan, DependentPairsRejected) {
  EXPECT_THROW(bracket_span_cover(lie_e(35), lie_e(35)), std::invalid_argument);
  // Independent over Z but dependent mod 5.
  EXPECT_THROW(bracket_span_cover(lie_make(35, 1, 0, 0), lie_make(35, 1, 5, 0)), std::invalid_argument);
  EXPECT_THROW(bracket_span_cover(lie_make(35, 5, 0, 0), lie_e(35)), std::invalid_argument);
}

TEST(BracketSpan, RandomPairsCertifiedBySubstitution) {
  std::mt19937_64 rng(2);
  int done = 0;
  for (int t = 0; t < 400; ++t) {
    const u64 q = 2 + rng() % 104;
    auto v = lie_make(q, rng() % q, rng() % q, rng() % q), w = lie_make(q, rng() % q, rng() % q, rng() % q);
    if (!is_primitive(v) || !is_primitive(w) || dependence_prime(v, w)) continue;
    auto r = bracket_span_cover(v, w);
    EXPECT_TRUE(r.covers) << q;
    for (const auto& c : r.certificates) {
      // Substitute through explicit matrices: [a, b] = ab - ba.
      auto br = [](const LieVector& a, const LieVector& b) {
        auto A = to_matrix(a), B = to_matrix(b);
        return from_matrix(mat_sub(mat_mul(A, B), mat_mul(B, A)));
      };
      EXPECT_EQ(add(br(v, c.X), br(w, c.Y)), c.target);
    }
    ++done;
  }
  EXPECT_GT(done, 100);
}

TEST(Amplify, Mod16Example) {
  auto H = CongruenceBox::make(FactoredModulus(2), FactoredModulus(4));
  auto r = amplify(H, H);
  EXPECT_EQ(r.box.inner.value(), 4u);
  EXPECT_EQ(r.box.outer.value(), 16u);
  ASSERT_EQ(r.checks.size(), 1u);
  EXPECT_TRUE(r.checks[0].attempted);
  EXPECT_TRUE(r.checks[0].verified);
  EXPECT_EQ(r.checks[0].target_size, 64u);
}

TEST(Amplify, DegenerateAndIterated) {
  auto H1 = CongruenceBox::make(FactoredModulus(9), FactoredModulus(27));
  auto trivial = CongruenceBox::make(FactoredModulus(3), FactoredModulus(3));
  auto r = amplify(H1, trivial);
  EXPECT_EQ(r.box.inner.value(), 27u);
  EXPECT_EQ(r.box.outer.value(), 81u);
  auto d = amplify(trivial, trivial);
  EXPECT_TRUE(d.box.degenerate());
  // Depth adds per step with H1 fixed.
  auto H = CongruenceBox::make(FactoredModulus(5), FactoredModulus(25));
  auto cur = H;
  for (int i = 1; i <= 3; ++i) {
    cur = amplify(H, cur, 1).box;
    EXPECT_EQ(cur.inner.value(), checked_pow(5, 1 + i));
    EXPECT_EQ(cur.outer.value(), checked_pow(5, 2 + 2 * i));
  }
}

TEST(Amplify, WindowChecks) {
  EXPECT_THROW(amplify(CongruenceBox::make(FactoredModulus(2), FactoredModulus(8)),
                       CongruenceBox::make(FactoredModulus(2), FactoredModulus(4))),
               std::invalid_argument);
  EXPECT_THROW(amplify(CongruenceBox::make(FactoredModulus(2), FactoredModulus(4)),
                       CongruenceBox::make(FactoredModulus(3), FactoredModulus(9))),
               std::invalid_argument);
  EXPECT_THROW(CongruenceBox::make(FactoredModulus(4), FactoredModulus(6)), std::invalid_argument);
}

TEST(Amplify, AllWindowsUpTo128) {
  int windows = 0;
  for (u64 p : {2u, 3u, 5u, 7u, 11u}) {
    for (unsigned m1 = 1; m1 <= 6; ++m1) {
      for (unsigned m2 = m1; m2 <= 2 * m1; ++m2) {
        for (unsigned n1 = 1; n1 <= 6; ++n1) {
          for (unsigned n2 = n1; n2 <= 2 * n1; ++n2) {
            if (std::pow(static_cast<double>(p), m2 + n2) > 128) continue;
            auto r = amplify(CongruenceBox::make(FactoredModulus(checked_pow(p, m1)), FactoredModulus(checked_pow(p, m2))),
                             CongruenceBox::make(FactoredModulus(checked_pow(p, n1)), FactoredModulus(checked_pow(p, n2))));
            EXPECT_TRUE(r.all_verified()) << p << " " << m1 << " " << m2 << " " << n1 << " " << n2;
            ++windows;
          }
        }
      }
    }
  }
  EXPECT_GT(windows, 20);
}

TEST(Amplify, NondegenerateWindowsUpTo128) {
  int windows = 0;
  for (u64 p : {2u, 3u, 5u, 7u, 11u}) {
    for (unsigned m1 = 1; m1 <= 6; ++m1) {
      for (unsigned m2 = m1 + 1; m2 <= 2 * m1; ++m2) {
        for (unsigned n1 = 1; n1 <= 6; ++n1) {
          for (unsigned n2 = n1 + 1; n2 <= 2 * n1; ++n2) {
            if (std::pow(static_cast<double>(p), m2 + n2) > 128) continue;
            auto r = amplify(CongruenceBox::make(FactoredModulus(checked_pow(p, m1)), FactoredModulus(checked_pow(p, m2))),
                             CongruenceBox::make(FactoredModulus(checked_pow(p, n1)), FactoredModulus(checked_pow(p, n2))));
            EXPECT_TRUE(r.all_verified()) << p << " " << m1 << " " << m2 << " " << n1 << " " << n2;
            ++windows;
          }
        }
      }
    }
  }
  EXPECT_GT(windows, 5);
}

TEST(Amplify, TwoAdicDegenerateWindowCount) {
  // H2 = {1}; H1^4 reaches 5 of the 8 elements of 1 + 16 V mod 32 (independent recount).
  auto r = amplify(CongruenceBox::make(FactoredModulus(2), FactoredModulus(4)),
                   CongruenceBox::make(FactoredModulus(8), FactoredModulus(8)));
  ASSERT_EQ(r.checks.size(), 1u);
  EXPECT_EQ(r.checks[0].target_size, 8u);
  EXPECT_EQ(r.checks[0].target_covered, 5u);
  EXPECT_EQ(r.checks[0].product_size, 4071u);
}

TEST(ConnectingMap, IdentityLiftAndConstantMap) {
  auto B = GroupSet::whole(5, 1);
  auto psi = connecting_map(B, 5, 1);
  EXPECT_EQ(psi.k, 1u);
  for (std::size_t i = 0; i < psi.domain.size(); ++i) EXPECT_EQ(psi.image[i], psi.domain[i]);

  auto one = connecting_map(B, 1, 1);
  ASSERT_EQ(one.domain.size(), 1u);
  EXPECT_EQ(one.image[0], B.ids().front());
}

TEST(ConnectingMap, RandomCoveringSetMod3) {
  std::mt19937_64 rng(3);
  auto whole = GroupSet::whole(15, 1);
  std::vector<u64> ids;
  for (u64 i : whole.ids()) {
    if (rng() % 4 == 0) ids.push_back(i);
  }
  GroupSet B(whole.group_ptr(), ids);
  auto psi = connecting_map(B, 3, 1);
  GroupSet Bk = B;
  for (unsigned i = 1; i < psi.k; ++i) Bk = product_set(Bk, B);
  ASSERT_EQ(psi.domain.size(), 24u);
  for (std::size_t i = 0; i < psi.domain.size(); ++i) {
    const auto x = B.group().element(psi.image[i]);
    EXPECT_TRUE(Bk.contains_id(psi.image[i]));
    EXPECT_EQ(psi.target->id(reduce(x, 3, 1)), psi.domain[i]);
  }
  // Least preimage: nothing smaller in B^k maps to the same point.
  for (u64 j : Bk.ids()) {
    const u64 t = psi.target->id(reduce(B.group().element(j), 3, 1));
    EXPECT_LE(psi.at(t), j);
  }
  EXPECT_THROW(connecting_map(GroupSet::identity_set(15, 1), 3, 1, 1, 1, 3), std::runtime_error);
}

GroupSet dense_pairs(u64 q) {
  return GroupSet::from_elements(standard_pair_generators().reduce_all(q, q), q, q);
}

TEST(Glue, FullGroupIsTrivialSuccess) {
  GluingConfig cfg;
  cfg.q1 = 1;
  cfg.q2 = 5;
  cfg.q3 = 5;
  auto r = glue_pipeline(std::nullopt, GroupSet::whole(5, 5), cfg);
  EXPECT_EQ(r.status, "EXPANDED");
  EXPECT_EQ(r.q3_star, 5u);
  EXPECT_EQ(r.level, 1u);
  EXPECT_DOUBLE_EQ(r.density, 1.0);
  for (const auto& c : r.certificates) EXPECT_TRUE(c.replayed) << c.claim;
}

TEST(Glue, DiagonalWithoutHelpDoesNotExpand) {
  for (u64 q : {5u, 8u}) {
    GluingConfig cfg;
    cfg.q2 = q;
    cfg.q3 = q;
    auto B = diagonal_set(q);
    EXPECT_EQ(product_set(B, B), B);
    auto r = glue_pipeline(std::nullopt, B, cfg);
    EXPECT_EQ(r.status, "NO_EXPANSION") << q;
    EXPECT_FALSE(r.expansion);
    EXPECT_EQ(r.kernel_size, 0u);
    // Only the diagonal itself is reachable.
    EXPECT_EQ(r.image_size, B.size());
    for (const auto& row : r.primes) EXPECT_EQ(row.branch, Branch::kStructured);
  }
}

TEST(Glue, DiagonalWithDenseHelpExpands) {
  for (u64 q : {5u, 8u}) {
    GluingConfig cfg;
    cfg.q2 = q;
    cfg.q3 = q;
    auto r = glue_pipeline(dense_pairs(q), diagonal_set(q), cfg);
    EXPECT_EQ(r.status, "EXPANDED") << q;
    EXPECT_GT(r.gain, 1u);
    EXPECT_FALSE(r.certificates.empty());
    for (const auto& c : r.certificates) EXPECT_TRUE(c.replayed) << c.claim;
    // Independent recount: the image of psi(G) F is at least |G| * gain.
    EXPECT_GE(r.image_size, r.domain_size * r.gain);
    auto j = r.to_json();
    EXPECT_EQ(j["achieved"]["q3_star"], std::to_string(r.q3_star));
  }
}

TEST(Glue, PrimePowerClassificationTable) {
  GluingConfig cfg;
  cfg.q1 = 1;
  cfg.q2 = 1;
  cfg.q3 = 64;
  cfg.theta = 0.3;
  auto r = glue_pipeline(std::nullopt, GroupSet::whole(64, 1), cfg);
  ASSERT_EQ(r.primes.size(), 1u);
  EXPECT_EQ(r.primes[0].p, 2u);
  EXPECT_EQ(r.primes[0].n, 6u);
  EXPECT_EQ(r.primes[0].depth, 4u);
  EXPECT_EQ(r.primes[0].half_depth, 2u);
  for (const auto& c : r.certificates) EXPECT_TRUE(c.replayed) << c.claim;
  EXPECT_EQ(r.q3_star, 64u);
}

TEST(Glue, ConfigValidation) {
  GluingConfig cfg;
  cfg.q1 = 2;
  cfg.q3 = 4;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.q3 = 3;
  cfg.theta = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace sapx
