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

// Congruence machinery: the commutator congruence, bracket spanning in sl2,
// amplification of congruence boxes, and a desk-scale gluing pipeline that
// lifts growth modulo (q1, q2) to growth modulo (q1 q3*, q2).

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "sapx/approxhom.hpp"
#include "sapx/factored.hpp"
#include "sapx/growth.hpp"
#include "sapx/lie.hpp"
#include "sapx/sl2.hpp"

namespace sapx {

struct CommutatorCongruence {
  Mat2Mod lhs, rhs;           // x y x^-1 y^-1 and 1 + xy - yx, both mod P^depth
  unsigned depth = 0;         // m + m' + min(m, m')
  unsigned depth_verified = 0;  // largest t <= v_P(q) with lhs = rhs mod P^t
  bool holds = false;
};

namespace detail {
inline unsigned matrix_agreement_depth(const Mat2Mod& x, const Mat2Mod& y, u64 p, unsigned n) {
  const u64 pn = checked_pow(p, n);
  auto v = [&](u64 a, u64 b) { return valuation_mod_prime_power(mod_sub(a % pn, b % pn, pn), p, n); };
  return std::min({v(x.a, y.a), v(x.b, y.b), v(x.c, y.c), v(x.d, y.d)});
}
}  // namespace detail

inline CommutatorCongruence commutator_congruence(const SL2Residue& x, const SL2Residue& y, u64 P,
                                                  unsigned m, unsigned mp) {
  if (x.q != y.q) throw std::invalid_argument("x and y must share a modulus");
  const FactoredModulus fq(x.q);
  const unsigned n = fq.exponent_of(P);
  const auto ps = fq.primes();
  if (n == 0 || std::find(ps.begin(), ps.end(), P) == ps.end()) {
    throw std::invalid_argument("P must be a prime dividing the modulus");
  }
  CommutatorCongruence r;
  r.depth = m + mp + std::min(m, mp);
  if (r.depth > n) throw std::invalid_argument("modulus not divisible by P^(m + m' + min(m, m'))");
  if (congruence_depth(x, P) < m) throw std::invalid_argument("x is not 1 mod P^m");
  if (congruence_depth(y, P) < mp) throw std::invalid_argument("y is not 1 mod P^m'");
  const Mat2Mod X = as_matrix(x), Y = as_matrix(y);
  const Mat2Mod full_lhs = as_matrix(commutator(x, y));
  const Mat2Mod one{x.q, 1 % x.q, 0, 0, 1 % x.q};
  const Mat2Mod full_rhs = mat_add(one, mat_sub(mat_mul(X, Y), mat_mul(Y, X)));
  r.depth_verified = detail::matrix_agreement_depth(full_lhs, full_rhs, P, n);
  const u64 pd = checked_pow(P, r.depth);
  r.lhs = mat_reduce(mat_reduce(full_lhs, checked_pow(P, n)), pd);
  r.rhs = mat_reduce(mat_reduce(full_rhs, checked_pow(P, n)), pd);
  r.holds = r.depth_verified >= r.depth;
  return r;
}

struct CommutatorSweep {
  u64 p = 0;
  unsigned n = 0;
  u64 pairs = 0, violations = 0;
  std::optional<std::pair<SL2Residue, SL2Residue>> first_violation;
};

/// Every pair x, y = 1 mod p in SL2(Z/p^n), each at its exact congruence
/// depth, checked at depth min(n, m + m' + min(m, m')).
inline CommutatorSweep sweep_commutator_congruence(u64 p, unsigned n) {
  if (n < 1) throw std::invalid_argument("need n >= 1");
  const u64 q = checked_pow(p, n);
  if (q > 4096) throw std::invalid_argument("sweep modulus too large");
  const auto xs = enumerate_congruence(FactoredModulus(q), FactoredModulus(p));
  const std::size_t N = xs.size();
  std::vector<unsigned> dep(N);
  std::vector<u64> pw(n + 1);
  for (unsigned t = 0; t <= n; ++t) pw[t] = checked_pow(p, t);
  for (std::size_t i = 0; i < N; ++i) dep[i] = congruence_depth(xs[i], p);

  auto check = [&](std::size_t i, std::size_t j) {
    const auto& x = xs[i];
    const auto& y = xs[j];
    const unsigned m = dep[i], mp = dep[j];
    const u64 pd = pw[std::min<unsigned>(n, m + mp + std::min(m, mp))];
    // xy, yx, and xy x^-1 y^-1 with x^-1 = (d, -b; -c, a).
    const u64 xy_a = (x.a * y.a + x.b * y.c) % q, xy_b = (x.a * y.b + x.b * y.d) % q;
    const u64 xy_c = (x.c * y.a + x.d * y.c) % q, xy_d = (x.c * y.b + x.d * y.d) % q;
    const u64 yx_a = (y.a * x.a + y.b * x.c) % q, yx_b = (y.a * x.b + y.b * x.d) % q;
    const u64 yx_c = (y.c * x.a + y.d * x.c) % q, yx_d = (y.c * x.b + y.d * x.d) % q;
    // (xy)(yx)^-1 = x y x^-1 y^-1.
    const u64 c_a = (xy_a * yx_d + xy_b * (q - yx_c)) % q;
    const u64 c_b = (xy_a * (q - yx_b) + xy_b * yx_a) % q;
    const u64 c_c = (xy_c * yx_d + xy_d * (q - yx_c)) % q;
    const u64 c_d = (xy_c * (q - yx_b) + xy_d * yx_a) % q;
    const u64 r_a = (1 + xy_a + q - yx_a) % q, r_b = (xy_b + q - yx_b) % q;
    const u64 r_c = (xy_c + q - yx_c) % q, r_d = (1 + xy_d + q - yx_d) % q;
    return (c_a + q - r_a) % pd == 0 && (c_b + q - r_b) % pd == 0 && (c_c + q - r_c) % pd == 0 &&
           (c_d + q - r_d) % pd == 0;
  };

  CommutatorSweep s;
  s.p = p;
  s.n = n;
  s.pairs = static_cast<u64>(N) * N;
  u64 bad = 0;
#pragma omp parallel for reduction(+ : bad) schedule(dynamic, 16)
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) bad += !check(i, j);
  }
  s.violations = bad;
  for (std::size_t i = 0; bad && i < N && !s.first_violation; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      if (!check(i, j)) {
        s.first_violation = {xs[i], xs[j]};
        break;
      }
    }
  }
  return s;
}

// ---------------------------------------------------------------------------

/// [v, X] + [w, Y] = target.
struct BracketCertificate {
  LieVector target, X, Y;
};

inline bool check_certificate(const LieVector& v, const LieVector& w, const BracketCertificate& c) {
  return add(bracket(v, c.X), bracket(w, c.Y)) == c.target;
}

struct BracketSpan {
  bool covers = false;
  std::vector<BracketCertificate> certificates;  // for 2h, 2e, 2f in that order
  std::optional<LieVector> failed_target;
};

/// Whether [v, V] + [w, V] contains 2V mod q, with a substituted certificate
/// for each basis target.
inline BracketSpan bracket_span_cover(const LieVector& v, const LieVector& w) {
  require_same_modulus(v, w);
  const u64 q = v.q;
  if (!is_primitive(v) || !is_primitive(w)) throw std::invalid_argument("v and w must be primitive");
  if (auto p = dependence_prime(v, w)) {
    throw std::invalid_argument("v and w are dependent mod " + std::to_string(*p));
  }
  const auto av = ad_matrix(v), aw = ad_matrix(w);
  MatrixMod A(3, std::vector<u64>(6));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      A[i][j] = av[i][j];
      A[i][3 + j] = aw[i][j];
    }
  }
  BracketSpan r;
  for (const LieVector& basis : {lie_h(q), lie_e(q), lie_f(q)}) {
    const LieVector t = scale(2, basis);
    auto sol = solve_linear_mod(A, {t.h, t.e, t.f}, q);
    BracketCertificate c{t, {}, {}};
    if (sol) {
      c.X = {q, (*sol)[0], (*sol)[1], (*sol)[2]};
      c.Y = {q, (*sol)[3], (*sol)[4], (*sol)[5]};
    }
    if (!sol || !check_certificate(v, w, c)) {
      r.failed_target = t;
      return r;
    }
    r.certificates.push_back(c);
  }
  r.covers = true;
  return r;
}

// ---------------------------------------------------------------------------

/// The set 1 + inner V (mod outer).
struct CongruenceBox {
  FactoredModulus inner{1}, outer{1};

  static CongruenceBox make(const FactoredModulus& inner, const FactoredModulus& outer) {
    if (!divides(inner.value(), outer.value())) throw std::invalid_argument("inner must divide outer");
    return {inner, outer};
  }
  bool degenerate() const { return inner == outer; }
};

struct AmplifyCheck {
  u64 p = 0;
  unsigned m1 = 0, m2 = 0, n1 = 0, n2 = 0;
  bool attempted = false, verified = false;
  std::size_t product_size = 0, target_size = 0, target_covered = 0;
};

struct AmplifyResult {
  CongruenceBox box;
  std::vector<AmplifyCheck> checks;
  bool all_verified() const {
    for (const auto& c : checks) {
      if (c.attempted && !c.verified) return false;
    }
    return true;
  }
};

namespace detail {

// Canonical SL2 lifts of 1 + p^lo X mod p^hi to Z/p^M, with their inverses.
inline std::vector<SL2Residue> box_elements(u64 p, unsigned lo, unsigned hi, unsigned M) {
  const u64 pM = checked_pow(p, M), plo = checked_pow(p, lo), r = checked_pow(p, hi - lo);
  std::vector<SL2Residue> out;
  for (u64 xh = 0; xh < r; ++xh) {
    for (u64 xe = 0; xe < r; ++xe) {
      for (u64 xf = 0; xf < r; ++xf) {
        const u64 a = (1 + plo * xh) % pM, b = plo * xe % pM, c = plo * xf % pM;
        const u64 d = mod_mul(mod_add(1 % pM, mod_mul(b, c, pM), pM), *mod_inverse(a, pM), pM);
        SL2Residue x{pM, a, b, c, d};
        out.push_back(x);
        out.push_back(inverse(x));
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct AmplifyCache {
  std::mutex mu;
  std::map<std::tuple<u64, unsigned, unsigned, unsigned, unsigned>, AmplifyCheck> entries;
};

inline AmplifyCache& amplify_cache() {
  static AmplifyCache c;
  return c;
}

// (H1 H2)^4 for explicit box sets; per-prime suffices since the sets are CRT products.
inline AmplifyCheck verify_amplify_window(u64 p, unsigned m1, unsigned m2, unsigned n1, unsigned n2) {
  auto& cache = amplify_cache();
  const auto key = std::make_tuple(p, m1, m2, n1, n2);
  {
    std::lock_guard<std::mutex> lock(cache.mu);
    if (auto it = cache.entries.find(key); it != cache.entries.end()) return it->second;
  }
  AmplifyCheck c{p, m1, m2, n1, n2, true, false, 0, 0};
  const unsigned M = m2 + n2, k0 = std::min(m1, n1);
  const u64 pk = checked_pow(p, k0), R = checked_pow(p, M - k0);
  const auto H1 = box_elements(p, m1, m2, M), H2 = box_elements(p, n1, n2, M);
  auto index = [&](const SL2Residue& x) { return (((x.a + x.q - 1) % x.q / pk) * R + x.b / pk) * R + x.c / pk; };
  const auto target = enumerate_congruence(FactoredModulus(checked_pow(p, M)),
                                           FactoredModulus(checked_pow(p, m1 + n1)));
  c.target_size = target.size();
  std::vector<char> seen(R * R * R, 0);
  std::vector<SL2Residue> cur{identity(checked_pow(p, M))};
  seen[index(cur[0])] = 1;
  auto covered = [&] {
    for (const auto& t : target) {
      if (!seen[index(t)]) return false;
    }
    return true;
  };
  // Both sets contain 1, so the partial products increase.
  for (int round = 0; round < 8 && !covered(); ++round) {
    const auto& H = round % 2 == 0 ? H1 : H2;
    std::vector<SL2Residue> next = cur;
    for (const auto& x : cur) {
      for (const auto& h : H) {
        SL2Residue y = x * h;
        char& s = seen[index(y)];
        if (!s) {
          s = 1;
          next.push_back(y);
        }
      }
    }
    cur.swap(next);
  }
  c.product_size = cur.size();
  for (const auto& t : target) c.target_covered += seen[index(t)];
  c.verified = c.target_covered == c.target_size;
  std::lock_guard<std::mutex> lock(cache.mu);
  cache.entries[key] = c;
  return c;
}

inline void clear_amplify_cache() {
  auto& cache = amplify_cache();
  std::lock_guard<std::mutex> lock(cache.mu);
  cache.entries.clear();
}

inline void check_window(unsigned lo, unsigned hi, const char* name) {
  if (!(1 <= lo && lo <= hi && hi <= 2 * lo)) {
    throw std::invalid_argument(std::string("window violates 1 <= ") + name + "1 <= " + name + "2 <= 2 " +
                                name + "1");
  }
}

}  // namespace detail

/// Box (prod p^{m1+n1}, prod p^{m2+n2}); windows with p^{m2+n2} <= verify_cap
/// are checked by enumerating (H1 H2)^4.
inline AmplifyResult amplify(const CongruenceBox& H1, const CongruenceBox& H2, u64 verify_cap = 128) {
  const auto primes = H1.outer.primes();
  if (primes != H2.outer.primes() || radical(H1.inner) != radical(H1.outer) ||
      radical(H2.inner) != radical(H2.outer)) {
    throw std::invalid_argument("boxes must involve the same primes at positive depth");
  }
  std::vector<PrimePower> inner, outer;
  AmplifyResult r;
  for (u64 p : primes) {
    const unsigned m1 = H1.inner.exponent_of(p), m2 = H1.outer.exponent_of(p);
    const unsigned n1 = H2.inner.exponent_of(p), n2 = H2.outer.exponent_of(p);
    detail::check_window(m1, m2, "m");
    detail::check_window(n1, n2, "n");
    inner.push_back({p, m1 + n1});
    outer.push_back({p, m2 + n2});
    AmplifyCheck c{p, m1, m2, n1, n2};
    if (static_cast<double>(std::pow(static_cast<double>(p), m2 + n2)) <= static_cast<double>(verify_cap)) {
      c = detail::verify_amplify_window(p, m1, m2, n1, n2);
    }
    r.checks.push_back(c);
  }
  r.box = CongruenceBox::make(FactoredModulus::from_factors(inner), FactoredModulus::from_factors(outer));
  return r;
}

// ---------------------------------------------------------------------------

/// Section of pi_{q1,q2} over a congruence box, with values in B^k.
struct ConnectingMap {
  u64 q1 = 1, q2 = 1, q1p = 1, q2p = 1;
  unsigned k = 0;
  std::shared_ptr<const PairGroup> source, target;
  std::vector<u64> domain;  // sorted ids in the target group
  std::vector<u64> image;   // ids in the source group, aligned with domain

  u64 at(u64 target_id) const {
    auto it = std::lower_bound(domain.begin(), domain.end(), target_id);
    if (it == domain.end() || *it != target_id) throw std::out_of_range("outside the section's domain");
    return image[it - domain.begin()];
  }
};

/// Smallest k <= k_max with pi_{q1,q2}(B^k) containing the box; each x maps
/// to its least preimage (in element order).
inline ConnectingMap connecting_map(const GroupSet& B, u64 q1, u64 q2, u64 q1p = 1, u64 q2p = 1,
                                    unsigned k_max = 8, u64 cap = kDefaultEnumerationCap) {
  if (!divides(q1, B.q1()) || !divides(q2, B.q2())) throw std::invalid_argument("q1, q2 must divide B's moduli");
  if (B.empty()) throw std::invalid_argument("B is empty");
  ConnectingMap m{q1, q2, q1p, q2p, 0, B.group_ptr(), PairGroup::get(q1, q2, cap), {}, {}};
  m.domain = congruence_box(q1, q2, q1p, q2p, cap).ids();
  PowerSequence seq(B, cap);
  for (unsigned k = 1; k <= k_max; ++k) {
    const GroupSet& X = k == 1 ? seq.current() : seq.advance();
    std::unordered_map<u64, u64> least;
    for (u64 i : X.ids()) {
      const u64 t = m.target->id(reduce(B.group().element(i), q1, q2));
      least.emplace(t, i);  // ids ascend, so the first is least
    }
    bool ok = true;
    for (u64 t : m.domain) ok = ok && least.count(t);
    if (!ok) continue;
    m.k = k;
    for (u64 t : m.domain) m.image.push_back(least.at(t));
    return m;
  }
  throw std::runtime_error("coverage failure: B^k misses the target box for k <= " + std::to_string(k_max));
}

// ---------------------------------------------------------------------------

struct GluingConfig {
  double theta = 0.3;
  u64 q1 = 1, q2 = 1, q3 = 1;
  double defect_threshold = 1e-4;
  double structured_density = 0.99;
  unsigned k_max = 8;
  unsigned closure_rounds = 12;
  u64 cap = 4'000'000;

  void validate() const {
    if (!(theta > 0 && theta < 1)) throw std::invalid_argument("theta must lie in (0, 1)");
    if (gcd_u64(q1, q3) != 1) throw std::invalid_argument("gcd(q1, q3) must be 1");
    if (q1 == 0 || q2 == 0 || q3 == 0) throw std::invalid_argument("moduli must be positive");
    if (!(defect_threshold > 0 && defect_threshold < 1)) throw std::invalid_argument("bad defect threshold");
  }
};

struct GluePrimeRow {
  u64 p = 0;
  unsigned n = 0, depth = 0, half_depth = 0;
  Branch branch = Branch::kDefect;
  double agreement = 0;
  double structured_fraction = 0;
  bool half_trivial = false;
  std::string failure;
};

struct GlueCertificate {
  std::string claim;
  bool replayed = false;
};

struct GluingReport {
  std::string status;  // EXPANDED, NO_EXPANSION or CONSTRUCTION_INCOMPLETE
  std::vector<std::string> warnings;
  std::size_t size_q1q2 = 0, size_q3 = 0;
  double bound_q1q2 = 0, bound_q3 = 0;
  bool hyp_q1q2 = false, hyp_q3 = false;
  unsigned psi_power = 0;
  u64 q1p = 0, q2p = 0;
  std::size_t domain_size = 0;
  std::vector<GluePrimeRow> primes;
  u64 q4_defect = 1, q4_structured = 1, q5 = 1, q5_prime = 1;
  int scenario = 0;
  std::size_t seeds = 0, kernel_size = 0;
  u64 word_length = 0;
  u64 q3_star = 1, level = 1;
  u64 gain = 1;
  bool expansion = false;
  std::size_t image_size = 0;
  u64 target_order = 0;
  double density = 0;
  std::vector<GlueCertificate> certificates;

  nlohmann::json to_json() const {
    using nlohmann::json;
    auto s = [](u64 x) { return std::to_string(x); };
    json rows = json::array();
    for (const auto& r : primes) {
      rows.push_back({{"p", s(r.p)},
                      {"n", r.n},
                      {"depth", r.depth},
                      {"half_depth", r.half_depth},
                      {"branch", branch_name(r.branch)},
                      {"agreement", r.agreement},
                      {"structured_fraction", r.structured_fraction},
                      {"half_trivial", r.half_trivial},
                      {"failure", r.failure}});
    }
    json certs = json::array();
    for (const auto& c : certificates) certs.push_back({{"claim", c.claim}, {"replayed", c.replayed}});
    return {{"status", status},
            {"warnings", warnings},
            {"hypotheses",
             {{"size_q1q2", s(size_q1q2)},
              {"bound_q1q2", bound_q1q2},
              {"holds_q1q2", hyp_q1q2},
              {"size_q3", s(size_q3)},
              {"bound_q3", bound_q3},
              {"holds_q3", hyp_q3}}},
            {"section", {{"power", psi_power}, {"q1p", s(q1p)}, {"q2p", s(q2p)}, {"domain", s(domain_size)}}},
            {"primes", rows},
            {"moduli",
             {{"q4_defect", s(q4_defect)},
              {"q4_structured", s(q4_structured)},
              {"q5", s(q5)},
              {"q5_prime", s(q5_prime)}}},
            {"scenario", scenario},
            {"kernel", {{"seeds", s(seeds)}, {"size", s(kernel_size)}, {"word_length", s(word_length)}}},
            {"achieved",
             {{"q3_star", s(q3_star)},
              {"level", s(level)},
              {"gain", s(gain)},
              {"expansion", expansion},
              {"image_size", s(image_size)},
              {"target_order", s(target_order)},
              {"density", density}}},
            {"certificates", certs}};
  }
};

namespace detail {

// Word distances from the identity in the Cayley graph of <S>.
inline std::vector<std::int64_t> word_distances(const PairGroup& g, const std::vector<u64>& S) {
  std::vector<std::int64_t> dist(g.order(), -1);
  std::queue<u64> todo;
  dist[g.identity_id()] = 0;
  todo.push(g.identity_id());
  u64 reached = 1;
  while (!todo.empty() && reached < g.order()) {
    const u64 x = todo.front();
    todo.pop();
    for (u64 s : S) {
      const u64 y = g.mul(x, s);
      if (dist[y] < 0) {
        dist[y] = dist[x] + 1;
        todo.push(y);
        ++reached;
      }
    }
  }
  return dist;
}

inline void certify(GluingReport& r, std::string claim, bool ok) {
  if (!ok) throw std::logic_error("certificate failed to replay: " + claim);
  r.certificates.push_back({std::move(claim), true});
}

}  // namespace detail

/// Desk-scale gluing: A may be absent. All moduli of A and B are (q1 q3, q2).
/// Word lengths count letters from S = B u A u (B u A)^-1.
inline GluingReport glue_pipeline(const std::optional<GroupSet>& A, const GroupSet& B, const GluingConfig& cfg) {
  cfg.validate();
  const u64 Q1 = cfg.q1 * cfg.q3, q2 = cfg.q2;
  if (B.q1() != Q1 || B.q2() != q2) throw std::invalid_argument("B must live modulo (q1 q3, q2)");
  if (A && (A->q1() != Q1 || A->q2() != q2)) throw std::invalid_argument("A must live modulo (q1 q3, q2)");
  GluingReport r;
  if (cfg.theta > 1e-12) r.warnings.push_back("theta above 1e-12: relaxed desk-scale run");
  const PairGroup& big = B.group();
  const double tq = std::pow(cfg.theta, 0.25);

  r.size_q1q2 = B.reduce_to(cfg.q1, q2).size();
  r.size_q3 = B.reduce_to(cfg.q3, 1).size();
  r.bound_q1q2 = std::pow(static_cast<double>(cfg.q1 * q2), 3 - cfg.theta);
  r.bound_q3 = std::pow(static_cast<double>(cfg.q3), 3 - cfg.theta);
  r.hyp_q1q2 = static_cast<double>(r.size_q1q2) > r.bound_q1q2;
  r.hyp_q3 = static_cast<double>(r.size_q3) > r.bound_q3;
  if (!r.hyp_q1q2) r.warnings.push_back("size hypothesis modulo (q1, q2) fails");
  if (!r.hyp_q3) r.warnings.push_back("size hypothesis modulo (q3, 1) fails");

  std::vector<u64> S;
  for (u64 i : B.ids()) S.insert(S.end(), {i, big.inv(i)});
  if (A) {
    for (u64 i : A->ids()) S.insert(S.end(), {i, big.inv(i)});
  }
  std::sort(S.begin(), S.end());
  S.erase(std::unique(S.begin(), S.end()), S.end());
  const auto dist = detail::word_distances(big, S);

  // Section over a congruence box.
  auto gen = bounded_generation_search(B.reduce_to(cfg.q1, q2), cfg.k_max, generation_bound(cfg.q1, q2, cfg.theta),
                                       cfg.cap);
  if (!gen.found) {
    r.status = "CONSTRUCTION_INCOMPLETE";
    r.warnings.push_back("no congruence box covered modulo (q1, q2) within k_max");
    return r;
  }
  const ConnectingMap psi = connecting_map(B, cfg.q1, q2, gen.q1p, gen.q2p, cfg.k_max, cfg.cap);
  r.psi_power = psi.k;
  r.q1p = psi.q1p;
  r.q2p = psi.q2p;
  r.domain_size = psi.domain.size();
  {
    GroupSet Bk = B;
    for (unsigned i = 1; i < psi.k; ++i) Bk = product_set(Bk, B, cfg.cap);
    detail::certify(r,
                    "pi_{q1,q2}(B^" + std::to_string(psi.k) + ") contains Lambda(" + std::to_string(psi.q1p) +
                        ") x Lambda(" + std::to_string(psi.q2p) + ")",
                    covers_congruence(Bk.reduce_to(cfg.q1, q2), psi.q1p, psi.q2p, cfg.cap));
    bool section = true;
    for (std::size_t i = 0; i < psi.domain.size(); ++i) {
      const u64 v = psi.image[i];
      section = section && Bk.contains_id(v) &&
                psi.target->id(reduce(big.element(v), cfg.q1, q2)) == psi.domain[i];
    }
    detail::certify(r, "psi(x) lies in B^" + std::to_string(psi.k) + " and reduces to x", section);
  }

  const std::size_t nG = psi.domain.size();
  if (nG > 4096) {
    r.status = "CONSTRUCTION_INCOMPLETE";
    r.warnings.push_back("section domain exceeds 4096 elements");
    return r;
  }
  std::unordered_map<u64, Elem> pos;
  for (Elem i = 0; i < nG; ++i) pos[psi.domain[i]] = i;
  const PairGroup& small = *psi.target;
  const auto G = FiniteGroupTable::from_function(
      nG, [&](Elem a, Elem b) { return pos.at(small.mul(psi.domain[a], psi.domain[b])); });
  auto psi_of = [&](Elem x) { return psi.image[x]; };

  // Per-prime classification.
  const FactoredModulus fq3(cfg.q3);
  for (const auto& f : fq3.factors()) {
    GluePrimeRow row;
    row.p = f.prime;
    row.n = f.exponent;
    row.depth = std::max(1u, static_cast<unsigned>(std::floor(f.exponent * tq)));
    row.half_depth = static_cast<unsigned>(std::floor(tq * f.exponent / 2));
    const u64 pt = checked_pow(f.prime, row.depth);
    const auto G2 = FiniteGroupTable::sl2(pt);
    const auto& els = G2.sl2_elements();
    MapTable psij(nG);
    for (Elem x = 0; x < nG; ++x) {
      const SL2Residue y = reduce(big.element(psi_of(x)).left, pt);
      psij[x] = static_cast<Elem>(std::lower_bound(els.begin(), els.end(), y) - els.begin());
    }
    const auto d = dichotomy(psij, G, G2, cfg.defect_threshold, cfg.defect_threshold >= kDichotomyEpsilonLimit);
    row.branch = d.branch;
    row.agreement = d.agreement.value();
    row.failure = d.failure;
    if (d.branch == Branch::kStructured) {
      row.structured_fraction = static_cast<double>(d.S.size()) / static_cast<double>(nG);
      const u64 ph = checked_pow(f.prime, row.half_depth);
      row.half_trivial = true;
      for (Elem x = 0; x < nG; ++x) row.half_trivial = row.half_trivial && is_identity(reduce(els[d.f[x]], ph));
      if (row.structured_fraction < cfg.structured_density) {
        row.failure = "structured set below the density threshold";
      }
    }
    const u64 pn = f.value();
    if (row.branch == Branch::kDefect) {
      r.q4_defect *= pn;
    } else if (row.branch == Branch::kStructured) {
      r.q4_structured *= pn;
      (row.half_trivial ? r.q5 : r.q5_prime) *= pn;
    }
    r.primes.push_back(row);
  }
  const double root_q4 = std::sqrt(static_cast<double>(cfg.q3));
  if (static_cast<double>(r.q4_defect) > root_q4) {
    r.scenario = 1;
  } else if (static_cast<double>(r.q4_structured) > root_q4) {
    r.scenario = static_cast<double>(r.q5) > std::sqrt(static_cast<double>(r.q4_structured)) ? 2 : 3;
  } else {
    // No part dominates: follow the largest.
    const u64 best = std::max({r.q4_defect, r.q5, r.q5_prime});
    r.scenario = best == r.q4_defect ? 1 : best == r.q5 ? 2 : 3;
  }

  // Seeds lie over the identity modulo (q1, q2).
  std::map<u64, u64> F;  // id -> word length
  const u64 e = big.identity_id();
  // pi_{q3}(F u {1}) as packed matrix entries.
  auto pack = [q = cfg.q3](const SL2Residue& x) { return ((x.a * q + x.b) * q + x.c) * q + x.d; };
  std::unordered_set<u64> proj{pack(identity(cfg.q3))};
  auto in_kernel = [&](u64 g) { return is_identity(reduce(big.element(g), cfg.q1, q2)); };
  auto offer = [&](u64 g, u64 len) {
    if (g == e) return false;
    if (!in_kernel(g)) throw std::logic_error("seed does not lie over the identity");
    auto [it, fresh] = F.emplace(g, len);
    if (!fresh && len < it->second) it->second = len;
    if (fresh) proj.insert(pack(reduce(big.element(g).left, cfg.q3)));
    return fresh;
  };
  const u64 k = psi.k;
  if (r.scenario == 1) {
    for (Elem x = 0; x < nG; ++x) {
      for (Elem y = 0; y < nG; ++y) {
        offer(big.mul(big.mul(psi_of(x), psi_of(y)), big.inv(psi_of(G.mul(x, y)))), 3 * k);
      }
    }
  } else if (r.scenario == 2) {
    for (Elem x = 0; x < nG; ++x) {
      for (Elem y = 0; y < nG; ++y) {
        const u64 c = big.mul(big.mul(psi_of(x), psi_of(y)), big.mul(big.inv(psi_of(x)), big.inv(psi_of(y))));
        const Elem cxy = G.mul(G.mul(x, y), G.mul(G.inv(x), G.inv(y)));
        offer(big.mul(c, big.inv(psi_of(cxy))), 5 * k);
      }
    }
  } else {
    for (Elem x = 0; x < nG; ++x) {
      u64 order = 1;
      for (Elem t = x; t != G.identity(); t = G.mul(t, x)) ++order;
      u64 g = e;
      for (u64 i = 0; i < order; ++i) g = big.mul(g, psi_of(x));
      offer(g, k * order);
    }
  }
  // Corrections a psi(pi(a))^-1 for letters a of B and A.
  auto correct = [&](const GroupSet& X) {
    for (u64 a : X.ids()) {
      const u64 t = small.id(reduce(big.element(a), cfg.q1, q2));
      if (pos.count(t)) offer(big.mul(a, big.inv(psi_of(pos.at(t)))), 1 + k);
    }
  };
  correct(B);
  if (A) correct(*A);
  r.seeds = F.size();

  // Closure under conjugation by S and products.
  const u64 q3_order = sl2_order(fq3);
  auto full_q3 = [&] { return proj.size() == q3_order; };
  // Conjugators and multipliers are capped deterministic subsets of S and F.
  constexpr std::size_t kClosureWidth = 256;
  auto spread = [](const std::vector<u64>& xs) {
    if (xs.size() <= kClosureWidth) return xs;
    std::vector<u64> out;
    for (std::size_t i = 0; i < kClosureWidth; ++i) out.push_back(xs[i * xs.size() / kClosureWidth]);
    return out;
  };
  const std::vector<u64> T = spread(S);
  std::vector<u64> frontier;
  for (const auto& [f, lf] : F) frontier.push_back(f);
  std::vector<std::pair<u64, u64>> mult;
  for (u64 g : spread(frontier)) mult.emplace_back(g, F.at(g));
  for (unsigned round = 0; round < cfg.closure_rounds && !frontier.empty() && !full_q3(); ++round) {
    std::vector<u64> next;
    for (u64 f : frontier) {
      if (full_q3()) break;
      const u64 lf = F.at(f);
      for (u64 s : T) {
        const u64 g = big.mul(big.mul(s, f), big.inv(s));
        if (offer(g, lf + 2)) next.push_back(g);
      }
      for (const auto& [g, lg] : mult) {
        const u64 h = big.mul(f, g);
        if (offer(h, lf + lg)) next.push_back(h);
      }
    }
    frontier.swap(next);
  }
  r.kernel_size = F.size();
  for (const auto& [g, len] : F) r.word_length = std::max(r.word_length, len);

  bool lengths_ok = true;
  for (const auto& [g, len] : F) {
    lengths_ok = lengths_ok && in_kernel(g) && dist[g] >= 0 && static_cast<u64>(dist[g]) <= len;
  }
  detail::certify(r,
                  "kernel set F (" + std::to_string(F.size()) +
                      " elements) lies over the identity mod (q1, q2) with the recorded word lengths",
                  lengths_ok);

  // Best congruence coverage of pi_{q3*}(F) over exact divisors q3* of q3.
  for (const auto& q3s : exact_divisors(fq3)) {
    if (q3s.value() == 1 || F.empty()) continue;
    std::vector<PairElement> xs{pair_identity(q3s.value(), 1)};
    for (const auto& [g, len] : F) xs.push_back(reduce(big.element(g), q3s.value(), 1));
    const GroupSet Fp = GroupSet::from_elements(xs, q3s.value(), 1);
    for (const auto& Q : divisors(q3s)) {
      const u64 gain = congruence_quotient_order(q3s, Q);
      if (gain <= r.gain || !covers_congruence(Fp, Q.value(), 1)) continue;
      r.gain = gain;
      r.q3_star = q3s.value();
      r.level = Q.value();
    }
  }
  r.expansion = r.gain > 1;

  // Image of psi(G) F (or psi(G) alone) modulo (q1 q3*, q2), and the ball it sits in.
  const u64 q13 = cfg.q1 * r.q3_star;
  std::vector<u64> ker{e};
  for (const auto& [g, len] : F) ker.push_back(g);
  std::vector<PairElement> img;
  for (Elem x = 0; x < nG; ++x) {
    for (u64 f : ker) img.push_back(reduce(big.element(big.mul(psi_of(x), f)), q13, q2));
  }
  const GroupSet image = GroupSet::from_elements(img, q13, q2, cfg.cap);
  const u64 radius = k + r.word_length;
  std::vector<PairElement> ball;
  for (u64 g = 0; g < big.order(); ++g) {
    if (dist[g] >= 0 && static_cast<u64>(dist[g]) <= radius) ball.push_back(reduce(big.element(g), q13, q2));
  }
  const GroupSet ball_image = GroupSet::from_elements(ball, q13, q2, cfg.cap);
  r.image_size = ball_image.size();
  r.target_order = sl2_order(FactoredModulus(q13)) * sl2_order(FactoredModulus(q2));
  r.density = static_cast<double>(r.image_size) / static_cast<double>(r.target_order);
  if (r.expansion) {
    std::vector<PairElement> xs{pair_identity(r.q3_star, 1)};
    for (const auto& [g, len] : F) xs.push_back(reduce(big.element(g), r.q3_star, 1));
    detail::certify(r,
                    "pi_{q3*,1}(F) contains Lambda(" + std::to_string(r.level) + ")/Lambda(" +
                        std::to_string(r.q3_star) + ")",
                    covers_congruence(GroupSet::from_elements(xs, r.q3_star, 1), r.level, 1));
  }
  detail::certify(r,
                  "|pi_{q1 q3*, q2}(psi(G) F)| >= |G| * " + std::to_string(r.gain),
                  image.size() >= nG * r.gain);
  detail::certify(r, "psi(G) F lies in the word ball of radius " + std::to_string(radius),
                  std::includes(ball_image.ids().begin(), ball_image.ids().end(), image.ids().begin(),
                                image.ids().end()));
  r.status = r.expansion ? "EXPANDED" : "NO_EXPANSION";
  return r;
}

/// The diagonal {(x, x)} in SL2(Z/q) x SL2(Z/q).
inline GroupSet diagonal_set(u64 q, u64 cap = kDefaultEnumerationCap) {
  std::vector<PairElement> xs;
  for (const auto& x : enumerate_group(FactoredModulus(q), cap)) xs.push_back({x, x});
  return GroupSet::from_elements(xs, q, q, cap);
}

}  // namespace sapx
