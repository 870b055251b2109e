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

// Cayley operators T = pi_q[chi_S] * (.) on finite groups, the top eigenvalue
// on mean-zero functions, and Cheeger constants.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/rational.hpp>

#include "sapx/dense_eigen.hpp"
#include "sapx/factored.hpp"
#include "sapx/integral.hpp"
#include "sapx/sl2.hpp"

namespace sapx {

using Index = std::uint32_t;
inline constexpr Index kNoIndex = std::numeric_limits<Index>::max();

/// Which vertex set the Cayley graph lives on.
enum class Domain { kGenerated, kAmbient };

/// Matrix-free normalized adjacency operator (Tv)(x) = (1/|S|) sum_s v(x s^{-1}).
///
/// Two storage forms: explicit permutations per generator, or, for pair groups,
/// per-side permutations combined on the fly (index = i1 * N2 + i2 in the
/// ambient product, optionally compressed to a subgroup).
class CayleyOperator {
 public:
  CayleyOperator() = default;

  /// From explicit permutations perm[s][x] = index of x s^{-1}.
  static CayleyOperator from_permutations(std::vector<std::vector<Index>> perms) {
    if (perms.empty()) throw std::invalid_argument("generator set is empty");
    CayleyOperator T;
    T.n_ = perms[0].size();
    for (const auto& p : perms) {
      if (p.size() != T.n_) throw std::invalid_argument("permutation length mismatch");
    }
    T.perms_ = std::move(perms);
    T.degree_ = T.perms_.size();
    T.check_symmetric();
    return T;
  }

  /// Z/nZ with the given steps (must be closed under negation).
  static CayleyOperator cyclic(std::size_t n, const std::vector<i64>& steps) {
    std::vector<std::vector<Index>> perms;
    for (i64 s : steps) {
      std::vector<Index> p(n);
      for (std::size_t x = 0; x < n; ++x) {
        p[x] = static_cast<Index>(mod_reduce(static_cast<i64>(x) - s, n));
      }
      perms.push_back(std::move(p));
    }
    return from_permutations(std::move(perms));
  }

  /// SL_2(Z/qZ) with generators given as residues mod q (q < 65536).
  static CayleyOperator sl2(const std::vector<SL2Residue>& gens, u64 q,
                            Domain domain = Domain::kGenerated,
                            u64 cap = kDefaultEnumerationCap) {
    if (q >= 65536) throw std::invalid_argument("modulus too large for packed enumeration");
    std::vector<SL2Residue> elements;
    if (domain == Domain::kAmbient) {
      elements = enumerate_group(FactoredModulus(q), cap);
    } else {
      elements = generated_subgroup(gens, q, cap);
    }
    std::unordered_map<u64, Index> index;
    index.reserve(elements.size() * 2);
    for (std::size_t i = 0; i < elements.size(); ++i) index[pack(elements[i])] = static_cast<Index>(i);
    std::vector<std::vector<Index>> perms;
    for (const auto& s : gens) {
      if (s.q != q) throw std::invalid_argument("generator modulus mismatch");
      SL2Residue sinv = inverse(s);
      std::vector<Index> p(elements.size());
      for (std::size_t i = 0; i < elements.size(); ++i) {
        auto it = index.find(pack(elements[i] * sinv));
        if (it == index.end()) throw std::logic_error("domain not closed under generators");
        p[i] = it->second;
      }
      perms.push_back(std::move(p));
    }
    CayleyOperator T = from_permutations(std::move(perms));
    T.sl2_elements_ = std::move(elements);
    return T;
  }

  /// SL_2(Z/q1) x SL_2(Z/q2) with pair generators.
  static CayleyOperator pairs(const std::vector<PairElement>& gens, u64 q1, u64 q2,
                              Domain domain = Domain::kGenerated,
                              u64 cap = kDefaultEnumerationCap) {
    if (gens.empty()) throw std::invalid_argument("generator set is empty");
    if (q1 >= 65536 || q2 >= 65536) {
      throw std::invalid_argument("modulus too large for packed enumeration");
    }
    auto left = enumerate_group(FactoredModulus(q1), cap);
    auto right = enumerate_group(FactoredModulus(q2), cap);
    const u64 full = static_cast<u64>(left.size()) * right.size();
    if (full > cap || full >= kNoIndex) throw std::length_error("pair group exceeds cap");

    auto side_table = [](const std::vector<SL2Residue>& elems, const SL2Residue& s) {
      std::unordered_map<u64, Index> index;
      index.reserve(elems.size() * 2);
      for (std::size_t i = 0; i < elems.size(); ++i) index[pack(elems[i])] = static_cast<Index>(i);
      SL2Residue sinv = inverse(s);
      std::vector<Index> t(elems.size());
      for (std::size_t i = 0; i < elems.size(); ++i) t[i] = index.at(pack(elems[i] * sinv));
      return t;
    };

    CayleyOperator T;
    T.n2_ = right.size();
    T.degree_ = gens.size();
    for (const auto& g : gens) {
      if (g.left.q != q1 || g.right.q != q2) throw std::invalid_argument("generator modulus mismatch");
      T.left_tables_.push_back(side_table(left, g.left));
      T.right_tables_.push_back(side_table(right, g.right));
    }
    if (domain == Domain::kAmbient) {
      T.n_ = full;
    } else {
      // Breadth-first closure from the identity, using x -> x s^{-1}.
      const Index id1 = static_cast<Index>(std::lower_bound(left.begin(), left.end(), identity(q1)) - left.begin());
      const Index id2 = static_cast<Index>(std::lower_bound(right.begin(), right.end(), identity(q2)) - right.begin());
      std::vector<Index> compress(full, kNoIndex);
      std::vector<Index> members;
      const u64 start = static_cast<u64>(id1) * T.n2_ + id2;
      compress[start] = 0;
      members.push_back(static_cast<Index>(start));
      for (std::size_t head = 0; head < members.size(); ++head) {
        const u64 x = members[head];
        for (std::size_t s = 0; s < T.degree_; ++s) {
          const u64 y = T.full_step(s, x);
          if (compress[y] == kNoIndex) {
            compress[y] = static_cast<Index>(members.size());
            members.push_back(static_cast<Index>(y));
          }
        }
      }
      if (members.size() < full) {
        // Canonical order: ambient index order.
        std::sort(members.begin(), members.end());
        for (std::size_t i = 0; i < members.size(); ++i) compress[members[i]] = static_cast<Index>(i);
        T.compress_ = std::move(compress);
        T.members_ = std::move(members);
        T.n_ = T.members_.size();
      } else {
        T.n_ = full;
      }
    }
    T.pair_left_ = std::move(left);
    T.pair_right_ = std::move(right);
    T.check_symmetric();
    return T;
  }

  /// Closure of the identity under right multiplication by the generators.
  static std::vector<SL2Residue> generated_subgroup(const std::vector<SL2Residue>& gens, u64 q,
                                                    u64 cap = kDefaultEnumerationCap) {
    std::unordered_map<u64, bool> seen;
    std::vector<SL2Residue> out{identity(q)};
    seen[pack(out[0])] = true;
    for (std::size_t head = 0; head < out.size(); ++head) {
      for (const auto& s : gens) {
        SL2Residue y = out[head] * inverse(s);
        if (seen.emplace(pack(y), true).second) {
          out.push_back(y);
          if (out.size() > cap) throw std::length_error("generated subgroup exceeds cap");
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::size_t dimension() const { return n_; }
  std::size_t degree() const { return degree_; }
  bool is_pair_form() const { return !left_tables_.empty(); }

  /// Index of x s^{-1} for vertex x and generator s.
  Index step(std::size_t s, Index x) const {
    if (!is_pair_form()) return perms_[s][x];
    if (compress_.empty()) return static_cast<Index>(full_step(s, x));
    return compress_[full_step(s, members_[x])];
  }

  std::vector<double> apply(const std::vector<double>& v) const {
    if (v.size() != n_) throw std::invalid_argument("vector length does not match dimension");
    std::vector<double> out(n_);
    apply_into(v, out);
    return out;
  }

  void apply_into(const std::vector<double>& v, std::vector<double>& out) const {
    out.assign(n_, 0.0);
    const double inv = 1.0 / static_cast<double>(degree_);
    const std::int64_t n = static_cast<std::int64_t>(n_);
    const std::size_t k = degree_;
#pragma omp parallel for schedule(static)
    for (std::int64_t x = 0; x < n; ++x) {
      double acc = 0.0;
      for (std::size_t s = 0; s < k; ++s) acc += v[step(s, static_cast<Index>(x))];
      out[x] = acc * inv;
    }
  }

  DenseMatrix dense() const {
    DenseMatrix m(n_);
    const double inv = 1.0 / static_cast<double>(degree_);
    for (std::size_t x = 0; x < n_; ++x) {
      for (std::size_t s = 0; s < degree_; ++s) m(x, step(s, static_cast<Index>(x))) += inv;
    }
    return m;
  }

  /// Elements of the vertex set when built from sl2().
  const std::vector<SL2Residue>& sl2_elements() const { return sl2_elements_; }

  /// Pair element at vertex x when built from pairs().
  PairElement pair_at(Index x) const {
    const u64 full = compress_.empty() ? x : members_[x];
    return {pair_left_[full / n2_], pair_right_[full % n2_]};
  }

  /// Vertex of the group identity.
  Index identity_index() const {
    if (!is_pair_form()) {
      if (sl2_elements_.empty()) return 0;
      const u64 q = sl2_elements_.front().q;
      return static_cast<Index>(
          std::lower_bound(sl2_elements_.begin(), sl2_elements_.end(), identity(q)) -
          sl2_elements_.begin());
    }
    const u64 i1 = std::lower_bound(pair_left_.begin(), pair_left_.end(), identity(pair_left_[0].q)) -
                   pair_left_.begin();
    const u64 i2 = std::lower_bound(pair_right_.begin(), pair_right_.end(),
                                    identity(pair_right_[0].q)) -
                   pair_right_.begin();
    const u64 full = i1 * n2_ + i2;
    return compress_.empty() ? static_cast<Index>(full) : compress_[full];
  }

 private:
  u64 full_step(std::size_t s, u64 x) const {
    return static_cast<u64>(left_tables_[s][x / n2_]) * n2_ + right_tables_[s][x % n2_];
  }

  // For a Cayley graph, the number of generators moving x to y is the
  // multiplicity of y^{-1}x in S, so S is symmetric as a multiset iff these
  // counts agree in both directions around any one vertex.
  void check_symmetric() const {
    if (n_ == 0) return;
    std::unordered_map<Index, std::ptrdiff_t> balance;
    for (std::size_t s = 0; s < degree_; ++s) ++balance[step(s, 0)];
    std::vector<Index> nbrs;
    for (const auto& [y, c] : balance) nbrs.push_back(y);
    for (Index y : nbrs) {
      for (std::size_t s = 0; s < degree_; ++s) {
        if (step(s, y) == 0) --balance[y];
      }
    }
    for (const auto& [y, c] : balance) {
      if (c != 0) throw std::invalid_argument("generator multiset is not symmetric");
    }
  }

  std::size_t n_ = 0;
  std::size_t degree_ = 0;
  std::vector<std::vector<Index>> perms_;
  std::vector<SL2Residue> sl2_elements_;

  std::size_t n2_ = 1;
  std::vector<std::vector<Index>> left_tables_, right_tables_;
  std::vector<Index> compress_, members_;
  std::vector<SL2Residue> pair_left_, pair_right_;
};

// ---------------------------------------------------------------------------

enum class EigenMethod { kAuto, kDense, kPower, kLanczos };

inline std::string method_name(EigenMethod m) {
  switch (m) {
    case EigenMethod::kDense: return "dense";
    case EigenMethod::kPower: return "power";
    case EigenMethod::kLanczos: return "lanczos";
    default: return "auto";
  }
}

using ExactRatio = boost::rational<i64>;

struct SpectralReport {
  double lambda2 = 1.0;
  std::size_t iterations = 0;
  double residual = 0.0;
  bool converged = false;
  std::string method;
  double cheeger_lower = 0.0;
  double cheeger_upper = 0.0;
  std::optional<ExactRatio> exact_cheeger;
};

struct SpectralOptions {
  double tol = 1e-10;
  std::size_t max_iter = 200000;
  u64 seed = 1;
  EigenMethod method = EigenMethod::kAuto;
  std::size_t dense_threshold = 2048;
};

namespace detail {

inline double dot(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline void remove_mean(std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (auto& x : v) x -= m;
}

inline double normalize(std::vector<double>& v) {
  const double nrm = std::sqrt(dot(v, v));
  if (nrm > 0) {
    for (auto& x : v) x /= nrm;
  }
  return nrm;
}

inline std::vector<double> random_mean_zero(std::size_t n, u64 seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  remove_mean(v);
  normalize(v);
  return v;
}

// (mu, ||Tv - mu v||) for unit mean-zero v.
inline std::pair<double, double> rayleigh(const CayleyOperator& T, const std::vector<double>& v,
                                          std::vector<double>& tv) {
  T.apply_into(v, tv);
  const double mu = dot(v, tv);
  double r = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = tv[i] - mu * v[i];
    r += d * d;
  }
  return {mu, std::sqrt(r)};
}

// Solves (J - shift) x = b for symmetric tridiagonal J with partial pivoting.
inline std::vector<double> tridiagonal_solve(const std::vector<double>& alpha,
                                             const std::vector<double>& beta, double shift,
                                             std::vector<double> b) {
  const std::size_t n = alpha.size();
  // Rows hold (diag, super, super2) after elimination with row swaps.
  std::vector<double> dl(n, 0.0), d(n), du(n, 0.0), du2(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = alpha[i] - shift;
    if (i + 1 < n) {
      du[i] = beta[i];
      dl[i] = beta[i];
    }
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (std::abs(d[i]) >= std::abs(dl[i])) {
      if (d[i] == 0.0) d[i] = 1e-300;
      const double f = dl[i] / d[i];
      d[i + 1] -= f * du[i];
      b[i + 1] -= f * b[i];
      if (i + 2 < n) du2[i] = 0.0;
    } else {
      const double f = d[i] / dl[i];
      d[i] = dl[i];
      const double tmp = d[i + 1];
      d[i + 1] = du[i] - f * tmp;
      if (i + 2 < n) {
        du2[i] = du[i + 1];
        du[i + 1] = -f * du2[i];
      }
      du[i] = tmp;
      std::swap(b[i], b[i + 1]);
      b[i + 1] -= f * b[i];
    }
  }
  if (d[n - 1] == 0.0) d[n - 1] = 1e-300;
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    if (i + 1 < n) s -= du[i] * x[i + 1];
    if (i + 2 < n) s -= du2[i] * x[i + 2];
    x[i] = s / d[i];
  }
  return x;
}

inline double top_tridiagonal_eigenvalue(const std::vector<double>& alpha,
                                         const std::vector<double>& beta) {
  std::vector<double> d = alpha, e(alpha.size(), 0.0);
  for (std::size_t i = 0; i + 1 < alpha.size(); ++i) e[i] = beta[i];
  tridiagonal_ql(d, e);
  return *std::max_element(d.begin(), d.end());
}

}  // namespace detail

/// Lazy power iteration on (I + T)/2 restricted to mean-zero vectors.
inline SpectralReport lambda2_power(const CayleyOperator& T, const SpectralOptions& opt) {
  const std::size_t n = T.dimension();
  SpectralReport rep;
  rep.method = "power";
  std::vector<double> v = detail::random_mean_zero(n, opt.seed), tv(n);
  double best_res = std::numeric_limits<double>::infinity(), best_mu = 1.0;
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    auto [mu, res] = detail::rayleigh(T, v, tv);
    rep.iterations = it;
    if (res < best_res) {
      best_res = res;
      best_mu = mu;
    }
    if (res <= opt.tol) {
      rep.converged = true;
      best_mu = mu;
      best_res = res;
      break;
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = 0.5 * (v[i] + tv[i]);
    detail::remove_mean(v);
    if (detail::normalize(v) == 0.0) {
      // T vanishes on l^2_0 along this direction; restart is pointless at n <= 2.
      best_mu = 0.0;
      best_res = 0.0;
      rep.converged = true;
      break;
    }
  }
  rep.lambda2 = best_mu;
  rep.residual = best_res;
  return rep;
}

/// Lanczos on mean-zero vectors without stored bases; the Ritz vector is
/// rebuilt by a second deterministic pass to measure the true residual.
inline SpectralReport lambda2_lanczos(const CayleyOperator& T, const SpectralOptions& opt) {
  const std::size_t n = T.dimension();
  SpectralReport rep;
  rep.method = "lanczos";
  const std::vector<double> v0 = detail::random_mean_zero(n, opt.seed);

  std::vector<double> alpha, beta;
  std::vector<double> prev(n, 0.0), cur = v0, w(n);
  double theta = 0.0, last_theta = std::numeric_limits<double>::infinity();
  const std::size_t max_steps = std::min<std::size_t>(opt.max_iter, std::max<std::size_t>(n - 1, 1));
  std::size_t stable = 0;
  for (std::size_t j = 0; j < max_steps; ++j) {
    T.apply_into(cur, w);
    const double a = detail::dot(w, cur);
    const double bprev = beta.empty() ? 0.0 : beta.back();
    for (std::size_t i = 0; i < n; ++i) w[i] -= a * cur[i] + bprev * prev[i];
    detail::remove_mean(w);
    alpha.push_back(a);
    const double b = std::sqrt(detail::dot(w, w));
    rep.iterations = j + 1;
    if (alpha.size() % 5 == 0 || b < 1e-14) {
      theta = detail::top_tridiagonal_eigenvalue(alpha, beta);
      if (std::abs(theta - last_theta) < 1e-15) {
        if (++stable >= 2) break;
      } else {
        stable = 0;
      }
      last_theta = theta;
    }
    if (b < 1e-14) break;
    beta.push_back(b);
    prev.swap(cur);
    for (std::size_t i = 0; i < n; ++i) cur[i] = w[i] / b;
  }
  if (beta.size() >= alpha.size()) beta.resize(alpha.size() - 1);
  theta = detail::top_tridiagonal_eigenvalue(alpha, beta);

  // Eigenvector of the tridiagonal by inverse iteration.
  const std::size_t m = alpha.size();
  std::vector<double> s(m, 1.0);
  for (int round = 0; round < 3; ++round) {
    s = detail::tridiagonal_solve(alpha, beta, theta + 1e-13 * std::max(1.0, std::abs(theta)), s);
    double nrm = std::sqrt(detail::dot(s, s));
    for (auto& x : s) x /= nrm;
  }

  // Second pass: y = sum_j s_j v_j.
  std::vector<double> y(n, 0.0);
  prev.assign(n, 0.0);
  cur = v0;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) y[i] += s[j] * cur[i];
    if (j + 1 == m) break;
    T.apply_into(cur, w);
    const double bprev = j == 0 ? 0.0 : beta[j - 1];
    for (std::size_t i = 0; i < n; ++i) w[i] -= alpha[j] * cur[i] + bprev * prev[i];
    detail::remove_mean(w);
    prev.swap(cur);
    for (std::size_t i = 0; i < n; ++i) cur[i] = w[i] / beta[j];
  }
  detail::remove_mean(y);
  detail::normalize(y);
  std::vector<double> ty(n);
  auto [mu, res] = detail::rayleigh(T, y, ty);
  rep.iterations += m;

  // Polish with a few lazy power steps if the residual is not yet small.
  std::size_t extra = 0;
  while (res > opt.tol && extra < opt.max_iter / 10) {
    for (std::size_t i = 0; i < n; ++i) y[i] = 0.5 * (y[i] + ty[i]);
    detail::remove_mean(y);
    detail::normalize(y);
    std::tie(mu, res) = detail::rayleigh(T, y, ty);
    ++extra;
    if (extra % 50 == 0 && res > 1e-3) break;
  }
  rep.iterations += extra;
  rep.lambda2 = mu;
  rep.residual = res;
  rep.converged = res <= opt.tol;
  return rep;
}

inline SpectralReport lambda2_dense(const CayleyOperator& T) {
  SpectralReport rep;
  rep.method = "dense";
  auto eig = symmetric_eigenvalues(T.dense());
  rep.lambda2 = eig.values.size() >= 2 ? eig.values[1] : 0.0;
  rep.residual = eig.residual;
  rep.converged = true;
  rep.iterations = 1;
  return rep;
}

/// Discrete Cheeger inequalities for a k-regular graph with top eigenvalue lambda2 on l^2_0.
inline std::pair<double, double> cheeger_bounds(double lambda2, std::size_t degree) {
  const double gap = std::max(0.0, 1.0 - lambda2);
  const double k = static_cast<double>(degree);
  return {k * gap / 2.0, k * std::sqrt(2.0 * gap)};
}

/// Largest eigenvalue of T on mean-zero functions.
inline SpectralReport lambda2(const CayleyOperator& T, const SpectralOptions& opt = {}) {
  if (T.dimension() < 2) throw std::invalid_argument("lambda2 needs at least two vertices");
  EigenMethod m = opt.method;
  if (m == EigenMethod::kAuto) {
    m = T.dimension() <= opt.dense_threshold ? EigenMethod::kDense : EigenMethod::kLanczos;
  }
  SpectralReport rep;
  switch (m) {
    case EigenMethod::kDense: rep = lambda2_dense(T); break;
    case EigenMethod::kPower: rep = lambda2_power(T, opt); break;
    default: rep = lambda2_lanczos(T, opt); break;
  }
  std::tie(rep.cheeger_lower, rep.cheeger_upper) = cheeger_bounds(rep.lambda2, T.degree());
  return rep;
}

/// min |dA|/|A| over 0 < |A| <= N/2, boundary counted with multiplicity.
inline ExactRatio cheeger_exact(const CayleyOperator& T, std::size_t max_n = 22) {
  const std::size_t n = T.dimension(), k = T.degree();
  if (n > max_n) throw std::invalid_argument("cheeger_exact: too many vertices");
  if (n < 2) throw std::invalid_argument("cheeger_exact: needs at least two vertices");
  std::vector<std::vector<Index>> nbr(n);
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t s = 0; s < k; ++s) nbr[x].push_back(T.step(s, static_cast<Index>(x)));
  }
  std::vector<char> in(n, 0);
  i64 boundary = 0, size = 0;
  i64 best_num = -1, best_den = 1;
  const u64 total = u64{1} << n;
  for (u64 i = 1; i < total; ++i) {
    // Gray code: toggle the lowest set bit position of i.
    const std::size_t x = static_cast<std::size_t>(__builtin_ctzll(i));
    i64 to_in = 0, to_out = 0;
    for (Index y : nbr[x]) {
      if (y == x) continue;
      if (in[y]) ++to_in; else ++to_out;
    }
    if (!in[x]) {
      in[x] = 1;
      ++size;
      boundary += to_out - to_in;
    } else {
      in[x] = 0;
      --size;
      boundary += to_in - to_out;
    }
    if (size == 0 || 2 * static_cast<u64>(size) > n) continue;
    if (best_num < 0 || boundary * best_den < best_num * size) {
      best_num = boundary;
      best_den = size;
    }
  }
  return ExactRatio(best_num, best_den);
}

// ---------------------------------------------------------------------------

struct GapRow {
  u64 q = 0;
  std::size_t N = 0;
  std::size_t degree = 0;
  SpectralReport report;
  double seconds = 0.0;
};

/// One row per modulus; pair generators act on SL_2(Z/q)^2, single ones on SL_2(Z/q).
inline std::vector<GapRow> gap_sweep(const GeneratorSet& gens, const std::vector<u64>& moduli,
                                     const SpectralOptions& opt = {}, bool exact_cheeger = true,
                                     u64 cap = kDefaultEnumerationCap) {
  std::vector<GapRow> rows;
  for (u64 q : moduli) {
    auto t0 = std::chrono::steady_clock::now();
    CayleyOperator T = gens.sides == 2
                           ? CayleyOperator::pairs(gens.reduce_all(q, q), q, q, Domain::kGenerated, cap)
                           : CayleyOperator::sl2(gens.reduce_left(q), q, Domain::kGenerated, cap);
    GapRow row;
    row.q = q;
    row.N = T.dimension();
    row.degree = T.degree();
    if (row.N >= 2) {
      row.report = lambda2(T, opt);
      if (exact_cheeger && row.N <= 22) row.report.exact_cheeger = cheeger_exact(T);
    } else {
      row.report.lambda2 = 0.0;
      row.report.converged = true;
      row.report.method = "trivial";
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(row);
  }
  return rows;
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

/// CSV with header q,N,degree,lambda2,residual,h_lower,h_upper,h_exact,seconds.
/// The seconds column is left empty unless with_timing is set, so that
/// reruns produce identical bytes.
inline std::string gap_csv(const std::vector<GapRow>& rows, bool with_timing = false) {
  std::ostringstream out;
  out << "q,N,degree,lambda2,residual,h_lower,h_upper,h_exact,seconds\n";
  for (const auto& r : rows) {
    out << r.q << ',' << r.N << ',' << r.degree << ',' << format_double(r.report.lambda2) << ','
        << format_double(r.report.residual) << ',' << format_double(r.report.cheeger_lower) << ','
        << format_double(r.report.cheeger_upper) << ',';
    if (r.report.exact_cheeger) {
      out << r.report.exact_cheeger->numerator() << '/' << r.report.exact_cheeger->denominator();
    }
    out << ',';
    if (with_timing) out << format_double(r.seconds);
    out << '\n';
  }
  return out.str();
}

}  // namespace sapx
