#include "sapx/addcomb.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

namespace sapx {
namespace {

using Pt = std::pair<u64, u64>;

std::set<Pt> pts(const ResidueSet& s) {
  auto m = s.members();
  return {m.begin(), m.end()};
}

std::set<Pt> naive_sum(const ResidueSet& A, const ResidueSet& B) {
  std::set<Pt> out;
  for (auto [a1, a2] : A.members()) {
    for (auto [b1, b2] : B.members()) out.insert({(a1 + b1) % A.q1(), (a2 + b2) % A.q2()});
  }
  return out;
}

TEST(ResidueSet, Basics) {
  ResidueSet s(70);
  s.insert(0);
  s.insert(69);
  s.insert(64);
  EXPECT_EQ(s.size(), 3u);
  EXPECT_TRUE(s.contains(64));
  EXPECT_FALSE(s.contains(63));
  EXPECT_EQ(ResidueSet::full(3, 5).size(), 15u);
  EXPECT_THROW(sumset(ResidueSet(5), ResidueSet(7)), std::invalid_argument);
}

TEST(Sumset, Trivial) {
  auto z = ResidueSet::from_values(11, {0});
  EXPECT_EQ(sumset(z, z), z);
  std::mt19937_64 rng(1);
  auto A = random_residue_set(1, 11, 3, rng);
  EXPECT_EQ(sumset(A, ResidueSet::full(1, 11)), ResidueSet::full(1, 11));
}

TEST(Sumset, MatchesNaiveAcrossWordBoundaries) {
  std::mt19937_64 rng(2);
  for (auto [q1, q2] : std::vector<Pt>{{1, 7}, {1, 64}, {1, 65}, {1, 200}, {3, 70}, {8, 9}, {5, 128}}) {
    for (int t = 0; t < 4; ++t) {
      auto A = random_residue_set(q1, q2, 1 + rng() % (q1 * q2 / 3 + 1), rng);
      auto B = random_residue_set(q1, q2, 1 + rng() % (q1 * q2 / 3 + 1), rng);
      EXPECT_EQ(pts(sumset(A, B)), naive_sum(A, B)) << q1 << " " << q2;
    }
  }
}

TEST(Sumset, FoldAdditivity) {
  std::mt19937_64 rng(3);
  for (u64 q : {13u, 40u, 97u}) {
    auto X = random_residue_set(1, q, 3, rng);
    for (unsigned a = 1; a <= 3; ++a) {
      for (unsigned b = 1; b <= 3; ++b) {
        EXPECT_EQ(fold_sum(X, a + b), sumset(fold_sum(X, a), fold_sum(X, b)));
      }
    }
  }
}

TEST(DifferenceOfProducts, SevenExample) {
  auto A = ResidueSet::from_values(7, {1, 2});
  auto P = productset(A, A);
  EXPECT_EQ(pts(P), (std::set<Pt>{{0, 1}, {0, 2}, {0, 4}}));
  EXPECT_EQ(difference_of_products(A, A), ResidueSet::full(1, 7));
}

TEST(DifferenceOfProducts, MatchesDirectEnumeration) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 5; ++t) {
    auto A = random_residue_set(4, 9, 6, rng);
    auto B = random_residue_set(4, 9, 5, rng);
    std::set<Pt> prods;
    for (auto [a1, a2] : A.members()) {
      for (auto [b1, b2] : B.members()) prods.insert({a1 * b1 % 4, a2 * b2 % 9});
    }
    std::set<Pt> oracle;
    for (auto x : prods) {
      for (auto y : prods) oracle.insert({(x.first + 4 - y.first) % 4, (x.second + 9 - y.second) % 9});
    }
    EXPECT_EQ(pts(difference_of_products(A, B)), oracle);
  }
}

TEST(Covering1159, Examples) {
  auto full = ResidueSet::full(1, 36);
  auto r = covering_1159(full, full);
  EXPECT_EQ(r.q_prime, 1u);
  EXPECT_TRUE(r.verified);
  EXPECT_TRUE(r.hypothesis);

  // Multiples of d: the sum stays inside gcd(d^2, q) Z/q.
  for (auto [q, d] : std::vector<Pt>{{36, 2}, {36, 3}, {48, 2}, {50, 5}}) {
    std::vector<u64> xs;
    for (u64 x = 0; x < q; x += d) xs.push_back(x);
    auto A = ResidueSet::from_values(q, xs);
    auto res = covering_1159(A, A);
    EXPECT_EQ(res.q_prime, gcd_u64(d * d, q)) << q << " " << d;
    EXPECT_EQ(res.hypothesis, static_cast<double>(q / d) > std::pow(q, 0.8));
  }
}

TEST(Covering1159, DensePrimeSweep) {
  std::mt19937_64 rng(5);
  for (u64 q : {5u, 11u, 23u, 31u, 47u, 61u}) {
    const std::size_t n = static_cast<std::size_t>(std::floor(std::pow(q, 0.75))) + 1;
    for (int t = 0; t < 3; ++t) {
      auto A = random_residue_set(1, q, n, rng);
      auto B = random_residue_set(1, q, n, rng);
      EXPECT_EQ(covering_1159(A, B).q_prime, 1u) << q;
    }
  }
}

TEST(Covering1159, OutputDividesAndMoreFoldsNeverHurt) {
  std::mt19937_64 rng(6);
  for (u64 q : {24u, 36u, 60u}) {
    auto A = random_residue_set(1, q, 3, rng);
    auto B = random_residue_set(1, q, 3, rng);
    u64 prev = q;
    for (unsigned f : {1u, 2u, 4u, 8u, 24u}) {
      auto r = covering_1159(A, B, f);
      EXPECT_EQ(q % r.q_prime, 0u);
      EXPECT_LE(r.q_prime, prev);
      EXPECT_EQ(prev % r.q_prime, 0u);
      prev = r.q_prime;
      for (u64 x = 0; x < q; x += r.q_prime) EXPECT_TRUE(r.sum.contains(x));
    }
  }
}

TEST(Covering1241, Examples) {
  auto full = ResidueSet::full(8, 9);
  auto r = covering_1241(full, full);
  EXPECT_EQ(r.q1p, 1u);
  EXPECT_EQ(r.q2p, 1u);

  // Box structure: even x multiples of 3 gives (gcd(4,8), gcd(9,9)).
  ResidueSet A(8, 9);
  for (u64 x = 0; x < 8; x += 2) {
    for (u64 y = 0; y < 9; y += 3) A.insert(x, y);
  }
  auto b = covering_1241(A, A);
  EXPECT_EQ(b.q1p, 4u);
  EXPECT_EQ(b.q2p, 9u);
}

TEST(Covering1241, RandomDenseSetsAgainstMembershipScan) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 5; ++t) {
    auto A = random_residue_set(8, 9, 50, rng);
    auto B = random_residue_set(8, 9, 50, rng);
    auto r = covering_1241(A, B);
    auto X = difference_of_products(A, B);
    std::set<Pt> acc = pts(X);
    for (int k = 1; k < 96; ++k) {
      std::set<Pt> next;
      for (auto a : acc) {
        for (auto x : pts(X)) next.insert({(a.first + x.first) % 8, (a.second + x.second) % 9});
      }
      if (next == acc) break;
      acc.swap(next);
    }
    for (u64 x = 0; x < 8; x += r.q1p) {
      for (u64 y = 0; y < 9; y += r.q2p) EXPECT_TRUE(acc.count({x, y}));
    }
    EXPECT_EQ(r.q1p * r.q2p, 1u);
  }
}

}  // namespace
}  // namespace sapx
