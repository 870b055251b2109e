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

// SL_2(Z/qZ), pairs of such elements, congruence subgroups and CRT views.

#pragma once

#include <algorithm>
#include <cassert>
#include <compare>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sapx/factored.hpp"

namespace sapx {

/// Default cap on enumerated group sizes.
inline constexpr u64 kDefaultEnumerationCap = 10'000'000;

/// A determinant-one 2x2 matrix over Z/qZ. Only the modulus value is stored;
/// the factorization is recomputed where an operation needs it.
struct SL2Residue {
  u64 q = 1;
  u64 a = 0, b = 0, c = 0, d = 0;

  friend auto operator<=>(const SL2Residue&, const SL2Residue&) = default;
  friend bool operator==(const SL2Residue&, const SL2Residue&) = default;
};

inline SL2Residue identity(u64 q) {
  if (q == 0) throw std::invalid_argument("modulus must be positive");
  return {q, 1 % q, 0, 0, 1 % q};
}

inline u64 det_mod(u64 q, u64 a, u64 b, u64 c, u64 d) {
  return mod_sub(mod_mul(a, d, q), mod_mul(b, c, q), q);
}

/// Builds an element from signed entries, reducing them and checking ad - bc = 1.
inline SL2Residue make_sl2(u64 q, i64 a, i64 b, i64 c, i64 d) {
  if (q == 0) throw std::invalid_argument("modulus must be positive");
  SL2Residue x{q, mod_reduce(a, q), mod_reduce(b, q), mod_reduce(c, q), mod_reduce(d, q)};
  if (det_mod(q, x.a, x.b, x.c, x.d) != 1 % q) {
    throw std::invalid_argument("determinant is not 1 mod " + std::to_string(q));
  }
  return x;
}

inline bool is_identity(const SL2Residue& x) { return x == identity(x.q); }

inline SL2Residue mul(const SL2Residue& x, const SL2Residue& y) {
  if (x.q != y.q) throw std::invalid_argument("modulus mismatch in mul");
  const u64 q = x.q;
  SL2Residue r{q, 0, 0, 0, 0};
  if (q < (u64{1} << 31)) {
    r.a = (x.a * y.a + x.b * y.c) % q;
    r.b = (x.a * y.b + x.b * y.d) % q;
    r.c = (x.c * y.a + x.d * y.c) % q;
    r.d = (x.c * y.b + x.d * y.d) % q;
  } else {
    r.a = mod_add(mod_mul(x.a, y.a, q), mod_mul(x.b, y.c, q), q);
    r.b = mod_add(mod_mul(x.a, y.b, q), mod_mul(x.b, y.d, q), q);
    r.c = mod_add(mod_mul(x.c, y.a, q), mod_mul(x.d, y.c, q), q);
    r.d = mod_add(mod_mul(x.c, y.b, q), mod_mul(x.d, y.d, q), q);
  }
  assert(det_mod(q, r.a, r.b, r.c, r.d) == 1 % q);
  return r;
}

inline SL2Residue operator*(const SL2Residue& x, const SL2Residue& y) { return mul(x, y); }

inline SL2Residue inverse(const SL2Residue& x) {
  return {x.q, x.d, mod_neg(x.b, x.q), mod_neg(x.c, x.q), x.a};
}

inline SL2Residue power(SL2Residue x, u64 e) {
  SL2Residue r = identity(x.q);
  while (e > 0) {
    if (e & 1) r = r * x;
    x = x * x;
    e >>= 1;
  }
  return r;
}

inline u64 trace(const SL2Residue& x) { return mod_add(x.a, x.d, x.q); }

/// g x g^{-1}.
inline SL2Residue conjugate(const SL2Residue& g, const SL2Residue& x) {
  return g * x * inverse(g);
}

inline SL2Residue commutator(const SL2Residue& x, const SL2Residue& y) {
  return x * y * inverse(x) * inverse(y);
}

/// Reduction to a divisor of the modulus.
inline SL2Residue reduce(const SL2Residue& x, u64 target) {
  if (!divides(target, x.q)) {
    throw std::invalid_argument("reduce: " + std::to_string(target) + " does not divide " +
                                std::to_string(x.q));
  }
  return {target, x.a % target, x.b % target, x.c % target, x.d % target};
}

/// Largest t <= n with x = 1 mod p^t, where p^n || q.
inline unsigned congruence_depth(const SL2Residue& x, u64 p) {
  FactoredModulus fq(x.q);
  unsigned n = fq.exponent_of(p);
  if (n == 0) throw std::invalid_argument("congruence_depth: prime does not divide modulus");
  u64 pn = checked_pow(p, n);
  auto v = [&](u64 r) { return valuation_mod_prime_power(r % pn, p, n); };
  return std::min({v(mod_sub(x.a, 1, x.q)), v(x.b), v(x.c), v(mod_sub(x.d, 1, x.q))});
}

/// x lies in Lambda(q_sub)/Lambda(q), i.e. x = 1 mod q_sub.
inline bool in_congruence_coset(const SL2Residue& x, u64 q_sub) {
  return is_identity(reduce(x, q_sub));
}

inline std::string to_string(const SL2Residue& x) {
  return "[[" + std::to_string(x.a) + "," + std::to_string(x.b) + "],[" + std::to_string(x.c) +
         "," + std::to_string(x.d) + "]]";
}

// ---------------------------------------------------------------------------
// CRT views.

/// Solves r = r1 mod m1, r = r2 mod m2 for coprime m1, m2.
inline u64 crt_pair(u64 r1, u64 m1, u64 r2, u64 m2) {
  if (m1 == 1) return r2 % m2;
  if (m2 == 1) return r1 % m1;
  auto inv = mod_inverse(m1 % m2, m2);
  if (!inv) throw std::invalid_argument("crt: moduli not coprime");
  u64 t = mod_mul(mod_sub(r2 % m2, r1 % m2, m2), *inv, m2);
  return static_cast<u64>((static_cast<u128>(m1) * t + r1) % (static_cast<u128>(m1) * m2));
}

/// Components of x modulo each prime power exactly dividing its modulus.
inline std::vector<SL2Residue> crt_split(const SL2Residue& x) {
  std::vector<SL2Residue> parts;
  const FactoredModulus fq(x.q);
  for (const auto& f : fq.factors()) parts.push_back(reduce(x, f.value()));
  return parts;
}

/// Inverse of crt_split; the moduli of the parts must be pairwise coprime.
inline SL2Residue crt_join(const std::vector<SL2Residue>& parts) {
  SL2Residue acc = identity(1);
  for (const auto& p : parts) {
    if (gcd_u64(acc.q, p.q) != 1) throw std::invalid_argument("crt_join: moduli not coprime");
    acc = {acc.q * p.q, crt_pair(acc.a, acc.q, p.a, p.q), crt_pair(acc.b, acc.q, p.b, p.q),
           crt_pair(acc.c, acc.q, p.c, p.q), crt_pair(acc.d, acc.q, p.d, p.q)};
  }
  assert(det_mod(acc.q, acc.a, acc.b, acc.c, acc.d) == 1 % acc.q);
  return acc;
}

// ---------------------------------------------------------------------------
// Enumeration.

namespace detail {

// Lambda(p^m)/Lambda(p^n) for 0 <= m <= n.
inline std::vector<SL2Residue> enumerate_prime_power(u64 p, unsigned n, unsigned m) {
  const u64 pn = checked_pow(p, n);
  std::vector<SL2Residue> out;
  if (m >= n) {
    out.push_back(identity(pn));
    return out;
  }
  if (m >= 1) {
    const u64 pm = checked_pow(p, m);
    const u64 r = pn / pm;
    out.reserve(r * r * r);
    for (u64 i = 0; i < r; ++i) {
      u64 a = (1 + pm * i) % pn;
      u64 ainv = *mod_inverse(a, pn);
      for (u64 j = 0; j < r; ++j) {
        u64 b = pm * j;
        for (u64 k = 0; k < r; ++k) {
          u64 c = pm * k;
          u64 d = mod_mul(mod_add(1, mod_mul(b, c, pn), pn), ainv, pn);
          out.push_back({pn, a, b, c, d});
        }
      }
    }
    return out;
  }
  for (u64 a = 0; a < pn; ++a) {
    if (a % p != 0) {
      u64 ainv = *mod_inverse(a, pn);
      for (u64 b = 0; b < pn; ++b) {
        for (u64 c = 0; c < pn; ++c) {
          u64 d = mod_mul(mod_add(1 % pn, mod_mul(b, c, pn), pn), ainv, pn);
          out.push_back({pn, a, b, c, d});
        }
      }
    } else {
      for (u64 c = 0; c < pn; ++c) {
        if (c % p == 0) continue;
        u64 cinv = *mod_inverse(c, pn);
        for (u64 d = 0; d < pn; ++d) {
          u64 b = mod_mul(mod_sub(mod_mul(a, d, pn), 1 % pn, pn), cinv, pn);
          out.push_back({pn, a, b, c, d});
        }
      }
    }
  }
  return out;
}

}  // namespace detail

/// All elements of Lambda(q_sub)/Lambda(q) in canonical (lexicographic) order.
inline std::vector<SL2Residue> enumerate_congruence(const FactoredModulus& q,
                                                    const FactoredModulus& q_sub,
                                                    u64 cap = kDefaultEnumerationCap) {
  u64 order = congruence_quotient_order(q, q_sub);
  if (order > cap) {
    throw std::length_error("group order " + std::to_string(order) + " exceeds cap " +
                            std::to_string(cap));
  }
  std::vector<SL2Residue> acc{identity(1)};
  for (const auto& f : q.factors()) {
    auto local = detail::enumerate_prime_power(f.prime, f.exponent, q_sub.exponent_of(f.prime));
    std::vector<SL2Residue> next;
    next.reserve(acc.size() * local.size());
    for (const auto& x : acc) {
      for (const auto& y : local) next.push_back(crt_join({x, y}));
    }
    acc = std::move(next);
  }
  std::sort(acc.begin(), acc.end());
  return acc;
}

inline std::vector<SL2Residue> enumerate_group(const FactoredModulus& q,
                                               u64 cap = kDefaultEnumerationCap) {
  return enumerate_congruence(q, FactoredModulus(1), cap);
}

/// Packs the entries into 64 bits; requires q <= 65536.
inline u64 pack(const SL2Residue& x) {
  return (x.a << 48) | (x.b << 32) | (x.c << 16) | x.d;
}

inline SL2Residue unpack(u64 key, u64 q) {
  return {q, key >> 48, (key >> 32) & 0xffff, (key >> 16) & 0xffff, key & 0xffff};
}

// ---------------------------------------------------------------------------
// Pairs.

struct PairElement {
  SL2Residue left;
  SL2Residue right;

  friend auto operator<=>(const PairElement&, const PairElement&) = default;
  friend bool operator==(const PairElement&, const PairElement&) = default;
};

inline PairElement pair_identity(u64 q1, u64 q2) { return {identity(q1), identity(q2)}; }

inline PairElement mul(const PairElement& x, const PairElement& y) {
  return {mul(x.left, y.left), mul(x.right, y.right)};
}

inline PairElement operator*(const PairElement& x, const PairElement& y) { return mul(x, y); }

inline PairElement inverse(const PairElement& x) { return {inverse(x.left), inverse(x.right)}; }

inline bool is_identity(const PairElement& x) {
  return is_identity(x.left) && is_identity(x.right);
}

inline PairElement reduce(const PairElement& x, u64 q1, u64 q2) {
  return {reduce(x.left, q1), reduce(x.right, q2)};
}

/// The projection P_side for side 1 (left) or 2 (right).
inline const SL2Residue& project(const PairElement& x, int side) {
  if (side == 1) return x.left;
  if (side == 2) return x.right;
  throw std::invalid_argument("side must be 1 or 2");
}

inline std::string to_string(const PairElement& x) {
  return "(" + to_string(x.left) + "," + to_string(x.right) + ")";
}

struct SL2Hash {
  std::size_t operator()(const SL2Residue& x) const noexcept {
    u64 h = x.q * 0x9E3779B97F4A7C15ULL;
    for (u64 v : {x.a, x.b, x.c, x.d}) {
      h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

struct PairHash {
  std::size_t operator()(const PairElement& x) const noexcept {
    SL2Hash h;
    std::size_t l = h(x.left);
    return l ^ (h(x.right) + 0x9E3779B97F4A7C15ULL + (l << 6) + (l >> 2));
  }
};

}  // namespace sapx
