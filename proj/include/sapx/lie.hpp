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

// The Lie algebra V = sl_2(Z/qZ) in the basis (h, e, f), plain 2x2 matrices
// over Z/qZ, and linear solving over Z/qZ for composite q.

#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sapx/factored.hpp"
#include "sapx/sl2.hpp"

namespace sapx {

/// Arbitrary 2x2 matrix over Z/qZ (no determinant condition).
struct Mat2Mod {
  u64 q = 1;
  u64 a = 0, b = 0, c = 0, d = 0;

  friend bool operator==(const Mat2Mod&, const Mat2Mod&) = default;
};

inline Mat2Mod as_matrix(const SL2Residue& x) { return {x.q, x.a, x.b, x.c, x.d}; }

inline Mat2Mod mat_mul(const Mat2Mod& x, const Mat2Mod& y) {
  const u64 q = x.q;
  auto dot = [q](u64 p1, u64 p2, u64 p3, u64 p4) {
    return mod_add(mod_mul(p1, p2, q), mod_mul(p3, p4, q), q);
  };
  return {q, dot(x.a, y.a, x.b, y.c), dot(x.a, y.b, x.b, y.d), dot(x.c, y.a, x.d, y.c),
          dot(x.c, y.b, x.d, y.d)};
}

inline Mat2Mod mat_add(const Mat2Mod& x, const Mat2Mod& y) {
  const u64 q = x.q;
  return {q, mod_add(x.a, y.a, q), mod_add(x.b, y.b, q), mod_add(x.c, y.c, q),
          mod_add(x.d, y.d, q)};
}

inline Mat2Mod mat_sub(const Mat2Mod& x, const Mat2Mod& y) {
  const u64 q = x.q;
  return {q, mod_sub(x.a, y.a, q), mod_sub(x.b, y.b, q), mod_sub(x.c, y.c, q),
          mod_sub(x.d, y.d, q)};
}

inline Mat2Mod mat_reduce(const Mat2Mod& x, u64 target) {
  return {target, x.a % target, x.b % target, x.c % target, x.d % target};
}

inline std::string to_string(const Mat2Mod& x) {
  return "[[" + std::to_string(x.a) + "," + std::to_string(x.b) + "],[" + std::to_string(x.c) +
         "," + std::to_string(x.d) + "]]";
}

// ---------------------------------------------------------------------------

/// x_h h + x_e e + x_f f with h = diag(1,-1), e = E_12, f = E_21.
struct LieVector {
  u64 q = 1;
  u64 h = 0, e = 0, f = 0;

  friend bool operator==(const LieVector&, const LieVector&) = default;
};

inline LieVector lie_h(u64 q) { return {q, 1 % q, 0, 0}; }
inline LieVector lie_e(u64 q) { return {q, 0, 1 % q, 0}; }
inline LieVector lie_f(u64 q) { return {q, 0, 0, 1 % q}; }

inline LieVector lie_make(u64 q, i64 h, i64 e, i64 f) {
  return {q, mod_reduce(h, q), mod_reduce(e, q), mod_reduce(f, q)};
}

inline void require_same_modulus(const LieVector& u, const LieVector& v) {
  if (u.q != v.q) throw std::invalid_argument("modulus mismatch in Lie algebra");
}

inline LieVector add(const LieVector& u, const LieVector& v) {
  require_same_modulus(u, v);
  return {u.q, mod_add(u.h, v.h, u.q), mod_add(u.e, v.e, u.q), mod_add(u.f, v.f, u.q)};
}

inline LieVector sub(const LieVector& u, const LieVector& v) {
  require_same_modulus(u, v);
  return {u.q, mod_sub(u.h, v.h, u.q), mod_sub(u.e, v.e, u.q), mod_sub(u.f, v.f, u.q)};
}

inline LieVector scale(u64 s, const LieVector& u) {
  s %= u.q;
  return {u.q, mod_mul(s, u.h, u.q), mod_mul(s, u.e, u.q), mod_mul(s, u.f, u.q)};
}

/// [u, v] = uv - vu.
inline LieVector bracket(const LieVector& u, const LieVector& v) {
  require_same_modulus(u, v);
  const u64 q = u.q;
  auto m = [q](u64 x, u64 y) { return mod_mul(x, y, q); };
  u64 ch = mod_sub(m(u.e, v.f), m(u.f, v.e), q);
  u64 ce = mod_mul(2 % q, mod_sub(m(u.h, v.e), m(u.e, v.h), q), q);
  u64 cf = mod_mul(2 % q, mod_sub(m(u.f, v.h), m(u.h, v.f), q), q);
  return {q, ch, ce, cf};
}

inline Mat2Mod to_matrix(const LieVector& u) { return {u.q, u.h, u.e, u.f, mod_neg(u.h, u.q)}; }

/// Inverse of to_matrix; throws if the matrix is not traceless.
inline LieVector from_matrix(const Mat2Mod& m) {
  if (mod_add(m.a, m.d, m.q) != 0) throw std::invalid_argument("matrix is not traceless");
  return {m.q, m.a, m.b, m.c};
}

/// Columns of ad(u) : X -> [u, X] in the (h, e, f) basis, as a row-major 3x3.
inline std::array<std::array<u64, 3>, 3> ad_matrix(const LieVector& u) {
  std::array<std::array<u64, 3>, 3> m{};
  const LieVector basis[3] = {lie_h(u.q), lie_e(u.q), lie_f(u.q)};
  for (int j = 0; j < 3; ++j) {
    LieVector col = bracket(u, basis[j]);
    m[0][j] = col.h;
    m[1][j] = col.e;
    m[2][j] = col.f;
  }
  return m;
}

/// Some prime p | q for which u and v are linearly dependent mod p, if any.
inline std::optional<u64> dependence_prime(const LieVector& u, const LieVector& v) {
  require_same_modulus(u, v);
  for (u64 p : FactoredModulus(u.q).primes()) {
    auto r = [p](u64 x) { return x % p; };
    u64 m1 = mod_sub(mod_mul(r(u.h), r(v.e), p), mod_mul(r(u.e), r(v.h), p), p);
    u64 m2 = mod_sub(mod_mul(r(u.h), r(v.f), p), mod_mul(r(u.f), r(v.h), p), p);
    u64 m3 = mod_sub(mod_mul(r(u.e), r(v.f), p), mod_mul(r(u.f), r(v.e), p), p);
    if (m1 == 0 && m2 == 0 && m3 == 0) return p;
  }
  return std::nullopt;
}

/// Nonzero mod every prime dividing q.
inline bool is_primitive(const LieVector& u) {
  for (u64 p : FactoredModulus(u.q).primes()) {
    if (u.h % p == 0 && u.e % p == 0 && u.f % p == 0) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

using MatrixMod = std::vector<std::vector<u64>>;

namespace detail {

// Elimination over the local ring Z/p^n: pivot on the entry of least valuation.
inline std::optional<std::vector<u64>> solve_prime_power(MatrixMod A, std::vector<u64> b, u64 p,
                                                         unsigned n) {
  const u64 pn = checked_pow(p, n);
  const std::size_t rows = A.size();
  const std::size_t cols = rows == 0 ? 0 : A[0].size();
  for (auto& row : A) {
    for (auto& x : row) x %= pn;
  }
  for (auto& x : b) x %= pn;

  std::vector<std::size_t> perm(cols);
  for (std::size_t j = 0; j < cols; ++j) perm[j] = j;
  std::vector<unsigned> pivot_val;
  std::size_t rank = 0;
  for (; rank < std::min(rows, cols); ++rank) {
    unsigned best = n;
    std::size_t bi = rank, bj = rank;
    for (std::size_t i = rank; i < rows; ++i) {
      for (std::size_t j = rank; j < cols; ++j) {
        unsigned v = valuation_mod_prime_power(A[i][j], p, n);
        if (v < best) {
          best = v;
          bi = i;
          bj = j;
        }
      }
    }
    if (best == n) break;
    std::swap(A[rank], A[bi]);
    std::swap(b[rank], b[bi]);
    for (auto& row : A) std::swap(row[rank], row[bj]);
    std::swap(perm[rank], perm[bj]);

    const u64 pv = checked_pow(p, best);
    const u64 unit_inv = *mod_inverse((A[rank][rank] / pv) % pn, pn);
    for (std::size_t i = rank + 1; i < rows; ++i) {
      if (A[i][rank] == 0) continue;
      u64 factor = mod_mul(A[i][rank] / pv, unit_inv, pn);
      for (std::size_t j = rank; j < cols; ++j) {
        A[i][j] = mod_sub(A[i][j], mod_mul(factor, A[rank][j], pn), pn);
      }
      b[i] = mod_sub(b[i], mod_mul(factor, b[rank], pn), pn);
    }
    pivot_val.push_back(best);
  }
  for (std::size_t i = rank; i < rows; ++i) {
    if (b[i] != 0) return std::nullopt;
  }
  std::vector<u64> y(cols, 0);
  for (std::size_t k = rank; k-- > 0;) {
    u64 rhs = b[k];
    for (std::size_t j = k + 1; j < cols; ++j) rhs = mod_sub(rhs, mod_mul(A[k][j], y[j], pn), pn);
    const u64 pv = checked_pow(p, pivot_val[k]);
    if (rhs % pv != 0) return std::nullopt;
    const u64 unit_inv = *mod_inverse((A[k][k] / pv) % pn, pn);
    y[k] = mod_mul(rhs / pv, unit_inv, pn) % (pn / pv);
  }
  std::vector<u64> x(cols, 0);
  for (std::size_t j = 0; j < cols; ++j) x[perm[j]] = y[j];
  return x;
}

}  // namespace detail

/// Some solution of A x = b over Z/qZ, or nullopt when none exists.
inline std::optional<std::vector<u64>> solve_linear_mod(const MatrixMod& A,
                                                        const std::vector<u64>& b, u64 q) {
  if (A.size() != b.size()) throw std::invalid_argument("solve_linear_mod: shape mismatch");
  const std::size_t cols = A.empty() ? 0 : A[0].size();
  std::vector<u64> x(cols, 0);
  u64 acc = 1;
  const FactoredModulus fq(q);
  for (const auto& f : fq.factors()) {
    auto local = detail::solve_prime_power(A, b, f.prime, f.exponent);
    if (!local) return std::nullopt;
    const u64 pn = f.value();
    for (std::size_t j = 0; j < cols; ++j) x[j] = crt_pair(x[j], acc, (*local)[j], pn);
    acc *= pn;
  }
  return x;
}

}  // namespace sapx
