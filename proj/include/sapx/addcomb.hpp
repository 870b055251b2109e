// Copyright 2026 The sapx Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Sumsets and product sets in Z/q1 x Z/q2 (q1 = 1 for a single modulus), and
// the covering searches for k-fold sums of AB - AB.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sapx/factored.hpp"

namespace sapx {

inline constexpr u64 kResidueSetLimit = u64{1} << 26;

/// Subset of Z/q1 x Z/q2 stored as q1 rows of q2 bits. A single modulus q is
/// the case (1, q).
class ResidueSet {
 public:
  ResidueSet() = default;
  explicit ResidueSet(u64 q) : ResidueSet(1, q) {}
  ResidueSet(u64 q1, u64 q2) : q1_(q1), q2_(q2) {
    if (q1 == 0 || q2 == 0) throw std::invalid_argument("moduli must be positive");
    if (q1 * q2 > kResidueSetLimit) throw std::length_error("residue set too large");
    wpr_ = (q2 + 63) / 64;
    bits_.assign(q1 * wpr_, 0);
  }

  static ResidueSet full(u64 q1, u64 q2) {
    ResidueSet s(q1, q2);
    for (u64 x = 0; x < q1; ++x) {
      for (u64 y = 0; y < q2; ++y) s.insert(x, y);
    }
    return s;
  }
  static ResidueSet from_values(u64 q, const std::vector<u64>& xs) {
    ResidueSet s(q);
    for (u64 x : xs) s.insert(0, x % q);
    return s;
  }

  u64 q1() const { return q1_; }
  u64 q2() const { return q2_; }
  u64 order() const { return q1_ * q2_; }

  void insert(u64 x1, u64 x2) { bits_[x1 * wpr_ + x2 / 64] |= u64{1} << (x2 % 64); }
  void insert(u64 x) { insert(0, x); }
  bool contains(u64 x1, u64 x2) const { return bits_[x1 * wpr_ + x2 / 64] >> (x2 % 64) & 1; }
  bool contains(u64 x) const { return contains(0, x); }

  std::size_t size() const {
    std::size_t n = 0;
    for (u64 w : bits_) n += __builtin_popcountll(w);
    return n;
  }

  std::vector<std::pair<u64, u64>> members() const {
    std::vector<std::pair<u64, u64>> out;
    for (u64 x = 0; x < q1_; ++x) {
      for (u64 w = 0; w < wpr_; ++w) {
        u64 word = bits_[x * wpr_ + w];
        while (word) {
          out.emplace_back(x, w * 64 + __builtin_ctzll(word));
          word &= word - 1;
        }
      }
    }
    return out;
  }

  /// Row x1 rotated by t within Z/q2, OR-ed into row dst of out.
  void rotate_row_into(u64 x1, u64 t, ResidueSet& out, u64 dst) const {
    const u64* src = &bits_[x1 * wpr_];
    u64* d = &out.bits_[dst * wpr_];
    if (wpr_ == 1) {
      u64 v = src[0];
      if (t) v = (v << t) | (v >> (q2_ - t));
      if (q2_ < 64) v &= (u64{1} << q2_) - 1;
      d[0] |= v;
      return;
    }
    // Bit j goes to (j + t) mod q2.
    for (u64 w = 0; w < wpr_; ++w) {
      u64 word = src[w];
      while (word) {
        u64 j = w * 64 + __builtin_ctzll(word);
        word &= word - 1;
        u64 k = j + t;
        if (k >= q2_) k -= q2_;
        d[k / 64] |= u64{1} << (k % 64);
      }
    }
  }

  friend bool operator==(const ResidueSet& a, const ResidueSet& b) {
    return a.q1_ == b.q1_ && a.q2_ == b.q2_ && a.bits_ == b.bits_;
  }

 private:
  u64 q1_ = 1, q2_ = 1, wpr_ = 1;
  std::vector<u64> bits_;
};

namespace detail {
inline void check_same(const ResidueSet& a, const ResidueSet& b) {
  if (a.q1() != b.q1() || a.q2() != b.q2()) throw std::invalid_argument("modulus mismatch");
}
}  // namespace detail

inline ResidueSet sumset(const ResidueSet& A, const ResidueSet& B) {
  detail::check_same(A, B);
  ResidueSet out(A.q1(), A.q2());
  const auto bs = B.members();
  std::vector<u64> rows;
  for (auto [x, y] : A.members()) {
    if (rows.empty() || rows.back() != x) rows.push_back(x);
  }
  for (auto [b1, b2] : bs) {
    for (u64 x : rows) A.rotate_row_into(x, b2, out, (x + b1) % A.q1());
  }
  return out;
}

inline ResidueSet negate(const ResidueSet& A) {
  ResidueSet out(A.q1(), A.q2());
  for (auto [x, y] : A.members()) out.insert((A.q1() - x) % A.q1(), (A.q2() - y) % A.q2());
  return out;
}

/// {ab} with componentwise multiplication.
inline ResidueSet productset(const ResidueSet& A, const ResidueSet& B) {
  detail::check_same(A, B);
  ResidueSet out(A.q1(), A.q2());
  const auto as = A.members(), bs = B.members();
  for (auto [a1, a2] : as) {
    for (auto [b1, b2] : bs) out.insert(mod_mul(a1, b1, A.q1()), mod_mul(a2, b2, A.q2()));
  }
  return out;
}

/// AB - AB.
inline ResidueSet difference_of_products(const ResidueSet& A, const ResidueSet& B) {
  ResidueSet P = productset(A, B);
  return sumset(P, negate(P));
}

/// X + ... + X (k copies), k >= 1.
inline ResidueSet fold_sum(const ResidueSet& X, unsigned k) {
  if (k == 0) throw std::invalid_argument("fold count must be at least 1");
  ResidueSet acc = X;
  for (unsigned i = 1; i < k; ++i) acc = sumset(acc, X);
  return acc;
}

/// q1' Z/q1 x q2' Z/q2 contained in S.
inline bool contains_box(const ResidueSet& S, u64 q1p, u64 q2p) {
  for (u64 x = 0; x < S.q1(); x += q1p) {
    for (u64 y = 0; y < S.q2(); y += q2p) {
      if (!S.contains(x, y)) return false;
    }
  }
  return true;
}

struct Covering1159 {
  u64 q_prime = 0;
  bool verified = false;        // q' < q^{12 gamma / 5}
  bool hypothesis = false;      // |A|, |B| > q^{1 - gamma}
  ResidueSet sum;
};

inline Covering1159 covering_1159(const ResidueSet& A, const ResidueSet& B, unsigned folds = 24,
                                  double gamma = 0.2) {
  if (A.q1() != 1) throw std::invalid_argument("covering_1159 takes a single modulus");
  const u64 q = A.q2();
  Covering1159 r;
  r.sum = fold_sum(difference_of_products(A, B), folds);
  const double thr = std::pow(static_cast<double>(q), 1 - gamma);
  r.hypothesis = A.size() > thr && B.size() > thr;
  for (const auto& d : divisors(FactoredModulus(q))) {
    if (contains_box(r.sum, 1, d.value())) {
      r.q_prime = d.value();
      break;
    }
  }
  r.verified = static_cast<double>(r.q_prime) < std::pow(static_cast<double>(q), 12 * gamma / 5);
  return r;
}

struct Covering1241 {
  u64 q1p = 0, q2p = 0;
  bool within_10delta = false;     // q1' q2' < (q1 q2)^{10 delta}
  bool within_24delta_5 = false;   // q1' q2' < (q1 q2)^{24 delta / 5}
  bool hypothesis = false;         // |A|, |B| > (q1 q2)^{1 - delta}
  ResidueSet sum;
};

/// Minimal divisor pair in the order (q1' q2', q1').
inline Covering1241 covering_1241(const ResidueSet& A, const ResidueSet& B, unsigned folds = 96,
                                  double delta = 0.1) {
  const u64 q1 = A.q1(), q2 = A.q2();
  Covering1241 r;
  r.sum = fold_sum(difference_of_products(A, B), folds);
  const double N = static_cast<double>(q1) * q2;
  const double thr = std::pow(N, 1 - delta);
  r.hypothesis = A.size() > thr && B.size() > thr;
  std::vector<std::pair<u64, u64>> pairs;
  for (const auto& a : divisors(FactoredModulus(q1))) {
    for (const auto& b : divisors(FactoredModulus(q2))) pairs.emplace_back(a.value(), b.value());
  }
  std::sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) {
    const u64 px = x.first * x.second, py = y.first * y.second;
    return px != py ? px < py : x.first < y.first;
  });
  for (auto [a, b] : pairs) {
    if (contains_box(r.sum, a, b)) {
      r.q1p = a;
      r.q2p = b;
      break;
    }
  }
  const double prod = static_cast<double>(r.q1p) * r.q2p;
  r.within_10delta = prod < std::pow(N, 10 * delta);
  r.within_24delta_5 = prod < std::pow(N, 24 * delta / 5);
  return r;
}

/// Uniformly random subset of Z/q1 x Z/q2 of the given size.
inline ResidueSet random_residue_set(u64 q1, u64 q2, std::size_t size, std::mt19937_64& rng) {
  std::vector<u64> all(q1 * q2);
  for (u64 i = 0; i < all.size(); ++i) all[i] = i;
  if (size > all.size()) throw std::invalid_argument("subset larger than the group");
  for (std::size_t i = 0; i < size; ++i) {
    std::uniform_int_distribution<u64> d(i, all.size() - 1);
    std::swap(all[i], all[d(rng)]);
  }
  ResidueSet s(q1, q2);
  for (std::size_t i = 0; i < size; ++i) s.insert(all[i] / q2, all[i] % q2);
  return s;
}

}  // namespace sapx
