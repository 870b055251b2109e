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

// Experiment runner: one subcommand per process, outputs plus a manifest in a
// fresh timestamped run directory. Needs OpenSSL (libcrypto) for digests.

#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sapx/addcomb.hpp"
#include "sapx/approxhom.hpp"
#include "sapx/commutator.hpp"
#include "sapx/growth.hpp"
#include "sapx/integral.hpp"
#include "sapx/spectral.hpp"
#include "sapx/walks.hpp"

namespace sapx::cli {

inline constexpr const char* kVersion = "sapx 0.1.0";
inline constexpr const char* kOutputRootEnv = "SAPX_OUTPUT_ROOT";

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitHypothesis = 2;
inline constexpr int kExitUsage = 64;

/// Thrown for configurations outside the documented ranges; maps to exit 64.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Artifact {
  std::string name;
  std::string body;
};

/// What a subcommand produced. `ok` is false when the report records a failed
/// hypothesis or a failed verification; the outputs are still written.
struct Outcome {
  std::vector<Artifact> files;
  bool ok = true;
  std::vector<std::string> notes;
};

struct ExperimentConfig {
  std::string subcommand;
  std::string out_root;
  unsigned threads = 0;
  bool force = false;
  u64 seed = 1;
  std::map<std::string, std::string> params;  // every flag, defaults included
};

struct RunManifest {
  ExperimentConfig config;
  std::string version = kVersion;
  std::string started_utc;
  double wall_seconds = 0;
  int exit_code = 0;
  std::vector<std::pair<std::string, std::string>> digests;  // file, sha256
  std::vector<std::size_t> sizes;
  std::vector<std::string> notes;

  nlohmann::json to_json() const {
    nlohmann::json outputs = nlohmann::json::array();
    for (std::size_t i = 0; i < digests.size(); ++i) {
      outputs.push_back(
          {{"file", digests[i].first}, {"sha256", digests[i].second}, {"bytes", std::to_string(sizes[i])}});
    }
    return {{"version", version},
            {"subcommand", config.subcommand},
            {"config", config.params},
            {"seed", std::to_string(config.seed)},
            {"threads", std::to_string(config.threads)},
            {"force", config.force},
            {"started_utc", started_utc},
            {"wall_seconds", wall_seconds},
            {"exit_code", exit_code},
            {"outputs", outputs},
            {"notes", notes}};
  }
};

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream out;
  for (unsigned i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return out.str();
}

namespace detail {

inline std::string utc_stamp(std::chrono::system_clock::time_point t, const char* fmt) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, fmt, &tm);
  return buf;
}

inline void write_file(const std::filesystem::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  out << body;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

inline bool is_prime(u64 p) {
  if (p < 2) return false;
  const auto f = FactoredModulus(p).factors();
  return f.size() == 1 && f[0].exponent == 1;
}

inline void require_modulus(u64 q, const char* name) {
  require(q >= 1 && q < 65536, std::string(name) + " must lie in [1, 65535]");
}

// A matrix [[a,b],[c,d]] or a pair [M1, M2]; single matrices get the identity
// on the right.
inline std::vector<RatPair> load_matrix_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
  if (!j.is_array()) throw ConfigError(path + " must hold a JSON array");
  std::vector<RatPair> out;
  for (const auto& item : j) {
    if (!item.is_array() || item.size() != 2) throw ConfigError("bad matrix entry in " + path);
    const bool is_pair = item[0].is_array() && item[0].size() == 2 && item[0][0].is_array();
    RatPair g;
    if (is_pair) {
      g = {parse_matrix(item[0]), parse_matrix(item[1])};
    } else {
      g = {parse_matrix(item), rat_matrix(1, 0, 0, 1)};
    }
    if (det(g.left) != 1 || det(g.right) != 1) throw ConfigError("matrix with determinant != 1 in " + path);
    out.push_back(g);
  }
  if (out.empty()) throw ConfigError(path + " is empty");
  return out;
}

inline GroupSet reduce_set(const std::vector<RatPair>& xs, u64 q1, u64 q2) {
  std::vector<PairElement> out;
  for (const auto& g : xs) out.push_back(reduce(g, q1, q2));
  return GroupSet::from_elements(out, q1, q2);
}

inline GeneratorSet generators_or_default(const std::string& path) {
  return path.empty() ? standard_pair_generators() : load_generators(path);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

inline i64 parse_int(const std::string& s) {
  std::size_t used = 0;
  i64 v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ConfigError("not an integer: '" + s + "'");
  return v;
}

// e1 | e2 | w:N | linear:c1,...,c8:N | integral:c1,...,c8:N
inline EventSpec parse_event(const std::string& text, int side) {
  const Side sd = side == 2 ? Side::kRight : Side::kLeft;
  std::string t = text;
  for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (t == "e1" || t == "parabolic") return ParabolicEvent{sd};
  if (t == "e2" || t == "lower") return LowerEntryEvent{sd};
  const auto parts = split(t, ':');
  if (parts.size() == 2 && (parts[0] == "w" || parts[0] == "trace")) {
    return TraceValueEvent{parse_int(parts[1]), sd};
  }
  if (parts.size() == 3 && (parts[0] == "linear" || parts[0] == "integral")) {
    const auto cs = split(parts[1], ',');
    if (cs.size() != 8) throw ConfigError("linear events need 8 coefficients");
    std::array<i64, 8> c{};
    for (int i = 0; i < 8; ++i) c[i] = parse_int(cs[i]);
    LinearForm8 form;
    try {
      form = LinearForm8::make(c);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (parts[0] == "linear") return LinearEvent{form, parse_int(parts[2])};
    return IntegralLinearEvent{form, parse_int(parts[2])};
  }
  throw ConfigError("unknown event '" + text + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands. Each reads its own option block and returns the artifacts.

struct SpectralArgs {
  std::vector<u64> q;
  std::string gens;
  std::string method = "auto";
  double tol = 1e-10;
  u64 cap = kDefaultEnumerationCap;
};

inline Outcome run_spectral(const SpectralArgs& a, const ExperimentConfig& cfg) {
  detail::require(!a.q.empty(), "--q needs at least one modulus");
  for (u64 q : a.q) {
    detail::require_modulus(q, "--q");
    detail::require(cfg.force || q <= 64, "--q above 64 needs --force");
  }
  const std::map<std::string, EigenMethod> methods{{"auto", EigenMethod::kAuto},
                                                   {"dense", EigenMethod::kDense},
                                                   {"power", EigenMethod::kPower},
                                                   {"lanczos", EigenMethod::kLanczos}};
  detail::require(methods.count(a.method) > 0, "--method must be auto, dense, power or lanczos");
  detail::require(a.tol > 0 && a.tol < 1e-3, "--tol must lie in (0, 1e-3)");
  const GeneratorSet gens = detail::generators_or_default(a.gens);
  SpectralOptions opt;
  opt.tol = a.tol;
  opt.seed = cfg.seed;
  opt.method = methods.at(a.method);
  const auto rows = gap_sweep(gens, a.q, opt, true, a.cap);

  Outcome out;
  nlohmann::json js = nlohmann::json::array();
  for (const auto& r : rows) {
    js.push_back({{"q", std::to_string(r.q)},
                  {"N", std::to_string(r.N)},
                  {"degree", std::to_string(r.degree)},
                  {"lambda2", r.report.lambda2},
                  {"method", r.report.method},
                  {"converged", r.report.converged},
                  {"iterations", std::to_string(r.report.iterations)}});
    if (!r.report.converged) {
      out.ok = false;
      out.notes.push_back("eigensolver did not converge at q = " + std::to_string(r.q));
    }
  }
  out.files.push_back({"gap.csv", gap_csv(rows)});
  out.files.push_back({"spectral.json", js.dump(2) + "\n"});
  return out;
}

struct GrowthArgs {
  std::string set;
  u64 q1 = 1, q2 = 1;
  std::optional<double> delta;
  unsigned kmax = 3;
};

inline Outcome run_growth(const GrowthArgs& a, const ExperimentConfig& cfg) {
  detail::require_modulus(a.q1, "--q1");
  detail::require_modulus(a.q2, "--q2");
  detail::require(a.kmax >= 1 && (cfg.force || a.kmax <= 16), "--kmax must lie in [1, 16]");
  if (a.delta) detail::require(*a.delta > 0 && *a.delta < 1, "--delta must lie in (0, 1)");
  const GroupSet A = detail::reduce_set(detail::load_matrix_list(a.set), a.q1, a.q2);
  const GrowthReport r = tripling(A, a.delta, a.kmax);
  const u64 bound = a.delta ? generation_bound(a.q1, a.q2, *a.delta) : 1;
  const GenerationResult gen = bounded_generation_search(A, a.kmax, bound);

  Outcome out;
  out.ok = r.bound_violations.empty();
  if (!out.ok) out.notes.push_back("power-size bound violated");
  nlohmann::json traj = nlohmann::json::array();
  for (auto s : r.trajectory) traj.push_back(std::to_string(s));
  nlohmann::json j{{"size_a", std::to_string(r.size_a)},
                   {"size_aaa", std::to_string(r.size_aaa)},
                   {"exponent", r.exponent},
                   {"symmetric", r.symmetric},
                   {"trajectory", traj},
                   {"bound_violations", r.bound_violations},
                   {"generation",
                    {{"found", gen.found},
                     {"k", gen.k},
                     {"q1p", std::to_string(gen.q1p)},
                     {"q2p", std::to_string(gen.q2p)},
                     {"max_product", std::to_string(bound)}}}};
  if (r.grows) j["grows"] = *r.grows;
  out.files.push_back({"growth.csv", growth_csv(r)});
  out.files.push_back({"growth.json", j.dump(2) + "\n"});
  return out;
}

struct NonconcArgs {
  std::string event = "e2";
  int side = 1;
  u64 Q = 5;
  unsigned lmin = 1, lmax = 20;
  std::size_t samples = 10000;
  std::string gens;
};

inline Outcome run_nonconc(const NonconcArgs& a, const ExperimentConfig& cfg) {
  detail::require(a.side == 1 || a.side == 2, "--side must be 1 or 2");
  detail::require(a.lmin >= 1 && a.lmin <= a.lmax, "need 1 <= --lmin <= --lmax");
  detail::require(cfg.force || a.lmax <= 2000, "--lmax above 2000 needs --force");
  const EventSpec ev = detail::parse_event(a.event, a.side);
  const GeneratorSet gens = detail::generators_or_default(a.gens);
  Outcome out;
  if (const auto* e = std::get_if<IntegralLinearEvent>(&ev)) {
    detail::require(a.samples >= 1, "--samples must be positive");
    const auto rep = archimedean_decay(gens, *e, a.lmin, a.lmax, a.samples, cfg.seed);
    out.files.push_back({"archimedean.csv", archimedean_csv(rep)});
    out.files.push_back(
        {"nonconc.json",
         nlohmann::json{{"event", a.event}, {"rate", rep.rate}, {"fitted_points", rep.fitted_points}}.dump(2) +
             "\n"});
    return out;
  }
  detail::require_modulus(a.Q, "--Q");
  detail::require(a.Q >= 2 && (cfg.force || a.Q <= 64), "--Q must lie in [2, 64] (or pass --force)");
  std::vector<unsigned> ls;
  for (unsigned l = a.lmin; l <= a.lmax; ++l) ls.push_back(l);
  const auto prof = decay_profile(gens, ev, a.Q, ls);
  out.files.push_back({"decay.csv", decay_csv(prof)});
  out.files.push_back({"nonconc.json", nlohmann::json{{"event", a.event},
                                                      {"Q", std::to_string(a.Q)},
                                                      {"group_order", std::to_string(prof.group_order)},
                                                      {"uniform_mass", prof.uniform_mass},
                                                      {"c_hat", prof.c_hat}}
                                                       .dump(2) +
                                           "\n"});
  return out;
}

struct AddcombArgs {
  u64 q = 0, q1 = 0, q2 = 0;
  double density = 0.9;
  unsigned folds = 0;
  unsigned trials = 10;
  double gamma = 0.2;
  double delta = 0.1;
};

inline Outcome run_addcomb(const AddcombArgs& a, const ExperimentConfig& cfg) {
  const bool single = a.q != 0;
  detail::require(single != (a.q1 != 0 || a.q2 != 0), "give either --q or both --q1 and --q2");
  const u64 m1 = single ? 1 : a.q1, m2 = single ? a.q : a.q2;
  detail::require(m1 >= 1 && m2 >= 1, "give either --q or both --q1 and --q2");
  detail::require(cfg.force || m1 * m2 <= 65536, "q1 q2 above 65536 needs --force");
  detail::require(m1 * m2 <= kResidueSetLimit, "residue set too large");
  detail::require(a.density > 0 && a.density <= 1, "--density must lie in (0, 1]");
  detail::require(a.trials >= 1, "--trials must be positive");
  const unsigned folds = a.folds ? a.folds : (single ? 24 : 96);
  if (single) detail::require(cfg.force || a.gamma < 0.25, "--gamma must be below 1/4 (or pass --force)");
  if (!single) detail::require(cfg.force || a.delta < 0.125, "--delta must be below 1/8 (or pass --force)");

  std::mt19937_64 rng(cfg.seed);
  const std::size_t size =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(a.density * static_cast<double>(m1 * m2))));
  Outcome out;
  std::ostringstream csv;
  csv << "trial,size_a,size_b,hypothesis,q1p,q2p,verified\n";
  for (unsigned t = 0; t < a.trials; ++t) {
    const ResidueSet A = random_residue_set(m1, m2, size, rng);
    const ResidueSet B = random_residue_set(m1, m2, size, rng);
    bool hyp = false, ver = false;
    u64 q1p = 1, q2p = 1;
    if (single) {
      const auto r = covering_1159(A, B, folds, a.gamma);
      hyp = r.hypothesis;
      ver = r.verified;
      q2p = r.q_prime;
    } else {
      const auto r = covering_1241(A, B, folds, a.delta);
      hyp = r.hypothesis;
      ver = r.within_10delta;
      q1p = r.q1p;
      q2p = r.q2p;
    }
    if (!hyp || !ver) out.ok = false;
    csv << t << ',' << A.size() << ',' << B.size() << ',' << hyp << ',' << q1p << ',' << q2p << ',' << ver
        << '\n';
  }
  if (!out.ok) out.notes.push_back("some trial failed its size hypothesis or its modulus bound");
  out.files.push_back({"addcomb.csv", csv.str()});
  return out;
}

struct ApproxhomArgs {
  std::string family = "sl2";
  u64 n1 = 6, n2 = 3;
  std::string g1, g2, map;
  std::size_t corrupt = 0;
  double epsilon = 1.0 / 1700;
};

inline Outcome run_approxhom(const ApproxhomArgs& a, const ExperimentConfig& cfg) {
  detail::require(a.epsilon > 0 && a.epsilon < 1, "--epsilon must lie in (0, 1)");
  detail::require(cfg.force || a.epsilon < kDichotomyEpsilonLimit, "--epsilon at or above 1/1600 needs --force");
  FiniteGroupTable G1, G2;
  MapTable hom;
  const bool from_files = !a.g1.empty() || !a.g2.empty() || !a.map.empty();
  if (from_files) {
    detail::require(!a.g1.empty() && !a.g2.empty() && !a.map.empty(), "--g1, --g2 and --map go together");
    auto load = [](const std::string& p) {
      std::ifstream in(p);
      if (!in) throw ConfigError("cannot open " + p);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid JSON in " + p + ": " + e.what());
      }
      return j;
    };
    G1 = FiniteGroupTable::from_json(load(a.g1));
    G2 = FiniteGroupTable::from_json(load(a.g2));
    hom = load(a.map).get<MapTable>();
  } else if (a.family == "sl2") {
    detail::require(a.n1 >= 1 && a.n2 >= 1 && a.n1 % a.n2 == 0, "sl2 family needs --n2 dividing --n1");
    detail::require(sl2_order(FactoredModulus(a.n1)) <= kExactAgreementLimit, "SL2(n1) is too large");
    G1 = FiniteGroupTable::sl2(a.n1);
    G2 = FiniteGroupTable::sl2(a.n2);
    const auto& target = G2.sl2_elements();
    for (const auto& x : G1.sl2_elements()) {
      auto it = std::lower_bound(target.begin(), target.end(), reduce(x, a.n2));
      if (it == target.end() || *it != reduce(x, a.n2)) throw std::logic_error("SL2 enumeration is not sorted");
      hom.push_back(static_cast<Elem>(it - target.begin()));
    }
  } else if (a.family == "cyclic") {
    detail::require(a.n1 >= 1 && a.n2 >= 1 && a.n1 % a.n2 == 0, "cyclic family needs --n2 dividing --n1");
    detail::require(a.n1 <= kExactAgreementLimit, "--n1 is too large");
    G1 = FiniteGroupTable::cyclic(a.n1);
    G2 = FiniteGroupTable::cyclic(a.n2);
    for (Elem x = 0; x < a.n1; ++x) hom.push_back(static_cast<Elem>(x % a.n2));
  } else {
    throw ConfigError("--family must be sl2 or cyclic");
  }
  check_map(hom, G1, G2);
  detail::require(a.corrupt <= G1.order(), "--corrupt exceeds |G1|");
  detail::require(G2.order() >= 2 || a.corrupt == 0, "cannot corrupt a map into the trivial group");

  MapTable psi = hom;
  std::mt19937_64 rng(cfg.seed);
  std::vector<Elem> pts(G1.order());
  for (Elem i = 0; i < pts.size(); ++i) pts[i] = i;
  std::shuffle(pts.begin(), pts.end(), rng);
  for (std::size_t i = 0; i < a.corrupt; ++i) {
    std::uniform_int_distribution<Elem> d(1, static_cast<Elem>(G2.order() - 1));
    psi[pts[i]] = G2.mul(psi[pts[i]], d(rng));  // any non-identity shift changes the value
  }

  const DichotomyResult r = dichotomy(psi, G1, G2, a.epsilon, cfg.force);
  std::size_t agree_input = 0;
  for (Elem x = 0; x < G1.order(); ++x) agree_input += !r.f.empty() && r.f[x] == hom[x];
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"holds", c.holds}});
  }
  nlohmann::json j{{"branch", branch_name(r.branch)},
                   {"order_g1", std::to_string(G1.order())},
                   {"order_g2", std::to_string(G2.order())},
                   {"corrupted", std::to_string(a.corrupt)},
                   {"agreement", {{"good", std::to_string(r.agreement.good)},
                                  {"total", std::to_string(r.agreement.total)}}},
                   {"structured_set", std::to_string(r.S.size())},
                   {"agrees_with_uncorrupted", std::to_string(agree_input)},
                   {"checks", checks},
                   {"failure", r.failure},
                   {"epsilon_override", r.epsilon_override}};
  if (r.agreement.witness) {
    j["witness"] = {std::to_string(r.agreement.witness->first), std::to_string(r.agreement.witness->second)};
  }
  Outcome out;
  out.ok = r.branch != Branch::kConstructionFailed;
  if (!out.ok) out.notes.push_back("construction failed: " + r.failure);
  std::ostringstream csv;
  csv << "branch,good,total,structured_set,agrees_with_uncorrupted\n"
      << branch_name(r.branch) << ',' << r.agreement.good << ',' << r.agreement.total << ',' << r.S.size() << ','
      << agree_input << '\n';
  out.files.push_back({"approxhom.csv", csv.str()});
  out.files.push_back({"approxhom.json", j.dump(2) + "\n"});
  return out;
}

struct GlueArgs {
  u64 q1 = 1, q2 = 5, q3 = 5;
  double theta = 0.3;
  std::string b = "diagonal";
  std::string a = "none";
  unsigned kmax = 8;
  unsigned closure_rounds = 12;
  double defect_threshold = 1e-4;
};

inline Outcome run_glue(const GlueArgs& a, const ExperimentConfig& cfg) {
  detail::require_modulus(a.q1 * a.q3, "q1 q3");
  detail::require_modulus(a.q2, "--q2");
  GluingConfig gc;
  gc.q1 = a.q1;
  gc.q2 = a.q2;
  gc.q3 = a.q3;
  gc.theta = a.theta;
  gc.k_max = a.kmax;
  gc.closure_rounds = a.closure_rounds;
  gc.defect_threshold = a.defect_threshold;
  detail::require(cfg.force || sl2_order(FactoredModulus(a.q1 * a.q3)) * sl2_order(FactoredModulus(a.q2)) <= gc.cap,
                  "pair group above 4e6 elements needs --force");
  if (cfg.force) gc.cap = kDefaultEnumerationCap;
  const u64 m1 = a.q1 * a.q3, m2 = a.q2;
  auto load = [&](const std::string& spec) -> std::optional<GroupSet> {
    if (spec == "none") return std::nullopt;
    if (spec == "diagonal") {
      detail::require(m1 == m2, "the diagonal set needs q1 q3 = q2");
      return diagonal_set(m1);
    }
    if (spec == "standard") return GroupSet::from_elements(standard_pair_generators().reduce_all(m1, m2), m1, m2);
    return detail::reduce_set(detail::load_matrix_list(spec), m1, m2);
  };
  const auto B = load(a.b);
  detail::require(B.has_value(), "--b cannot be none");
  const GluingReport r = glue_pipeline(load(a.a), *B, gc);

  Outcome out;
  bool replayed = true;
  for (const auto& c : r.certificates) replayed = replayed && c.replayed;
  out.ok = r.status != "CONSTRUCTION_INCOMPLETE" && replayed;
  if (!out.ok) out.notes.push_back("gluing status " + r.status);
  std::ostringstream csv;
  csv << "p,n,depth,half_depth,branch,agreement,structured_fraction,half_trivial\n";
  for (const auto& p : r.primes) {
    csv << p.p << ',' << p.n << ',' << p.depth << ',' << p.half_depth << ',' << branch_name(p.branch) << ','
        << format_double(p.agreement) << ',' << format_double(p.structured_fraction) << ',' << p.half_trivial
        << '\n';
  }
  out.files.push_back({"glue_primes.csv", csv.str()});
  out.files.push_back({"glue.json", r.to_json().dump(2) + "\n"});
  return out;
}

struct LemmaArgs {
  std::string lemma;
  u64 p = 3;
  unsigned depth = 4;
  u64 q = 105;
  unsigned trials = 100;
  u64 cap = 128;
};

inline Outcome run_lemma_check(const LemmaArgs& a, const ExperimentConfig& cfg) {
  const std::map<std::string, std::string> names{{"1946", "commutator"}, {"commutator", "commutator"},
                                                 {"16301", "bracket"},   {"bracket", "bracket"},
                                                 {"1521", "amplify"},    {"amplify", "amplify"}};
  detail::require(names.count(a.lemma) > 0, "--lemma must be commutator, bracket or amplify");
  const std::string which = names.at(a.lemma);
  Outcome out;
  std::ostringstream csv;
  if (which == "commutator") {
    detail::require(detail::is_prime(a.p), "--p must be prime");
    detail::require(a.depth >= 1, "--depth must be positive");
    const double qd = std::pow(static_cast<double>(a.p), a.depth);
    detail::require(qd <= 4096, "p^depth must be at most 4096");
    const auto s = sweep_commutator_congruence(a.p, a.depth);
    out.ok = s.violations == 0;
    csv << "p,n,pairs,violations\n" << s.p << ',' << s.n << ',' << s.pairs << ',' << s.violations << '\n';
    out.files.push_back({"lemma.csv", csv.str()});
    out.notes.push_back(s.violations == 0 ? "exhaustive sweep: no violations"
                                          : std::to_string(s.violations) + " violations");
  } else if (which == "bracket") {
    detail::require(a.q >= 2 && a.q < 65536, "--q must lie in [2, 65535]");
    detail::require(a.trials >= 1, "--trials must be positive");
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<u64> d(0, a.q - 1);
    csv << "trial,v,w,covers,certificates_ok\n";
    std::size_t failures = 0;
    for (unsigned t = 0; t < a.trials; ++t) {
      LieVector v, w;
      do {
        v = {a.q, d(rng), d(rng), d(rng)};
        w = {a.q, d(rng), d(rng), d(rng)};
      } while (!is_primitive(v) || !is_primitive(w) || dependence_prime(v, w));
      const auto r = bracket_span_cover(v, w);
      bool certs = r.covers;
      for (const auto& c : r.certificates) certs = certs && check_certificate(v, w, c);
      failures += !(r.covers && certs);
      auto vs = [](const LieVector& x) {
        return std::to_string(x.h) + " " + std::to_string(x.e) + " " + std::to_string(x.f);
      };
      csv << t << ',' << vs(v) << ',' << vs(w) << ',' << r.covers << ',' << certs << '\n';
    }
    out.ok = failures == 0;
    out.files.push_back({"lemma.csv", csv.str()});
    out.notes.push_back(std::to_string(failures) + " failures in " + std::to_string(a.trials) + " instances");
  } else {
    detail::require(detail::is_prime(a.p), "--p must be prime");
    detail::require(a.cap >= 1 && (cfg.force || a.cap <= 512), "--cap above 512 needs --force");
    csv << "p,m1,m2,n1,n2,verified,product_size,target_size,target_covered\n";
    std::size_t bad = 0;
    // Every window 1 <= m1 <= m2 <= 2 m1, 1 <= n1 <= n2 <= 2 n1 with p^(m2+n2) <= cap.
    auto fits = [&](unsigned e) { return std::pow(static_cast<double>(a.p), e) <= static_cast<double>(a.cap); };
    for (unsigned m1 = 1; fits(m1 + 1); ++m1) {
      for (unsigned m2 = m1; m2 <= 2 * m1 && fits(m2 + 1); ++m2) {
        for (unsigned n1 = 1; fits(m2 + n1); ++n1) {
          for (unsigned n2 = n1; n2 <= 2 * n1 && fits(m2 + n2); ++n2) {
            const auto c = sapx::detail::verify_amplify_window(a.p, m1, m2, n1, n2);
            bad += !c.verified;
            csv << c.p << ',' << c.m1 << ',' << c.m2 << ',' << c.n1 << ',' << c.n2 << ',' << c.verified << ','
                << c.product_size << ',' << c.target_size << ',' << c.target_covered << '\n';
          }
        }
      }
    }
    out.ok = bad == 0;
    out.files.push_back({"lemma.csv", csv.str()});
    out.notes.push_back(std::to_string(bad) + " windows not covered");
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace detail {

inline void snapshot(const CLI::App& app, std::map<std::string, std::string>& params) {
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_name();
    if (name.empty() || name == "--help" || name == "--version") continue;
    std::string v;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) v += (v.empty() ? "" : ",") + r;
    } else {
      v = opt->get_default_str();
    }
    params[name] = v;
  }
}

inline std::filesystem::path fresh_run_dir(const std::filesystem::path& root, const std::string& sub,
                                           std::chrono::system_clock::time_point t) {
  const std::string base = sub + "-" + utc_stamp(t, "%Y%m%dT%H%M%SZ");
  std::filesystem::create_directories(root);
  for (unsigned i = 0;; ++i) {
    auto p = root / (i == 0 ? base : base + "-" + std::to_string(i));
    if (std::filesystem::create_directory(p)) return p;
  }
}

}  // namespace detail

/// Parses argv, runs one subcommand and persists its outputs.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Desk-scale experiments on SL2 over Z/qZ and its products"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1, 1);
  app.fallthrough();

  ExperimentConfig cfg;
  if (const char* env = std::getenv(kOutputRootEnv)) cfg.out_root = env;
  if (cfg.out_root.empty()) cfg.out_root = "runs";
  app.add_option("--out", cfg.out_root, "output root (default $" + std::string(kOutputRootEnv) + " or ./runs)");
  app.add_option("--threads", cfg.threads, "OpenMP threads (0 keeps the runtime default)");
  app.add_option("--seed", cfg.seed, "seed for every random choice")->capture_default_str();
  app.add_flag("--force", cfg.force, "allow parameters outside the documented ranges");

  SpectralArgs sp;
  auto* s_sp = app.add_subcommand("spectral", "second eigenvalue of Cayley graphs");
  s_sp->add_option("--q", sp.q, "moduli")->required()->delimiter(',');
  s_sp->add_option("--gens", sp.gens, "generator JSON (default: built-in Zariski-dense pairs)")
      ->check(CLI::ExistingFile);
  s_sp->add_option("--method", sp.method, "auto, dense, power or lanczos")->capture_default_str();
  s_sp->add_option("--tol", sp.tol, "eigensolver tolerance")->capture_default_str();
  s_sp->add_option("--cap", sp.cap, "enumeration cap")->capture_default_str();

  GrowthArgs gr;
  double gr_delta = 0;
  auto* s_gr = app.add_subcommand("growth", "tripling and bounded generation of a set");
  s_gr->add_option("--set", gr.set, "JSON list of matrices or matrix pairs")->required()->check(CLI::ExistingFile);
  s_gr->add_option("--q1", gr.q1)->capture_default_str();
  s_gr->add_option("--q2", gr.q2)->capture_default_str();
  auto* gr_delta_opt = s_gr->add_option("--delta", gr_delta, "growth exponent to test");
  s_gr->add_option("--kmax", gr.kmax, "largest power examined")->capture_default_str();

  NonconcArgs nc;
  auto* s_nc = app.add_subcommand("nonconc", "event mass under random walks");
  s_nc->add_option("--event", nc.event, "e1, e2, w:N, linear:c1,...,c8:N or integral:c1,...,c8:N")
      ->capture_default_str();
  s_nc->add_option("--side", nc.side, "factor read by single-sided events")->capture_default_str();
  s_nc->add_option("--Q", nc.Q, "modulus for modular events")->capture_default_str();
  s_nc->add_option("--lmin", nc.lmin)->capture_default_str();
  s_nc->add_option("--lmax", nc.lmax)->capture_default_str();
  s_nc->add_option("--samples", nc.samples, "walks sampled for integral events")->capture_default_str();
  s_nc->add_option("--gens", nc.gens, "generator JSON")->check(CLI::ExistingFile);

  AddcombArgs ac;
  auto* s_ac = app.add_subcommand("addcomb", "folded sum-product coverings of random dense sets");
  s_ac->add_option("--q", ac.q, "single modulus");
  s_ac->add_option("--q1", ac.q1);
  s_ac->add_option("--q2", ac.q2);
  s_ac->add_option("--density", ac.density)->capture_default_str();
  s_ac->add_option("--folds", ac.folds, "folds (default 24 for --q, 96 for --q1/--q2)");
  s_ac->add_option("--trials", ac.trials)->capture_default_str();
  s_ac->add_option("--gamma", ac.gamma, "size exponent for --q")->capture_default_str();
  s_ac->add_option("--delta", ac.delta, "size exponent for --q1/--q2")->capture_default_str();

  ApproxhomArgs ah;
  auto* s_ah = app.add_subcommand("approxhom", "defect-or-structure dichotomy for a corrupted homomorphism");
  s_ah->add_option("--family", ah.family, "sl2 (reduction) or cyclic")->capture_default_str();
  s_ah->add_option("--n1", ah.n1)->capture_default_str();
  s_ah->add_option("--n2", ah.n2)->capture_default_str();
  s_ah->add_option("--g1", ah.g1, "group table JSON")->check(CLI::ExistingFile);
  s_ah->add_option("--g2", ah.g2, "group table JSON")->check(CLI::ExistingFile);
  s_ah->add_option("--map", ah.map, "JSON array psi[x]")->check(CLI::ExistingFile);
  s_ah->add_option("--corrupt", ah.corrupt, "points to corrupt")->capture_default_str();
  s_ah->add_option("--epsilon", ah.epsilon)->capture_default_str();

  GlueArgs gl;
  auto* s_gl = app.add_subcommand("glue", "gluing pipeline over coprime moduli");
  s_gl->add_option("--q1", gl.q1)->capture_default_str();
  s_gl->add_option("--q2", gl.q2)->capture_default_str();
  s_gl->add_option("--q3", gl.q3)->capture_default_str();
  s_gl->add_option("--theta", gl.theta)->capture_default_str();
  s_gl->add_option("--b", gl.b, "diagonal, standard or a matrix JSON file")->capture_default_str();
  s_gl->add_option("--a", gl.a, "none, standard or a matrix JSON file")->capture_default_str();
  s_gl->add_option("--kmax", gl.kmax)->capture_default_str();
  s_gl->add_option("--closure-rounds", gl.closure_rounds)->capture_default_str();
  s_gl->add_option("--defect-threshold", gl.defect_threshold)->capture_default_str();

  LemmaArgs lm;
  auto* s_lm = app.add_subcommand("lemma-check", "exhaustive or randomized checks of the congruence lemmas");
  s_lm->add_option("--lemma", lm.lemma, "commutator, bracket or amplify")->required();
  s_lm->add_option("--p", lm.p)->capture_default_str();
  s_lm->add_option("--depth", lm.depth)->capture_default_str();
  s_lm->add_option("--q", lm.q, "modulus for bracket instances")->capture_default_str();
  s_lm->add_option("--trials", lm.trials)->capture_default_str();
  s_lm->add_option("--cap", lm.cap, "largest p^(m2+n2) for amplify windows")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const CLI::App* sub = app.get_subcommands().front();
  cfg.subcommand = sub->get_name();
  detail::snapshot(app, cfg.params);
  detail::snapshot(*sub, cfg.params);
  cfg.params["--out"] = cfg.out_root;
  cfg.params["--threads"] = std::to_string(cfg.threads);
  cfg.params["--force"] = cfg.force ? "true" : "false";
  if (gr_delta_opt->count() > 0) gr.delta = gr_delta;
#ifdef _OPENMP
  if (cfg.threads > 0) omp_set_num_threads(static_cast<int>(cfg.threads));
#endif

  const auto t0 = std::chrono::system_clock::now();
  const auto s0 = std::chrono::steady_clock::now();
  Outcome res;
  try {
    if (cfg.subcommand == "spectral") res = run_spectral(sp, cfg);
    if (cfg.subcommand == "growth") res = run_growth(gr, cfg);
    if (cfg.subcommand == "nonconc") res = run_nonconc(nc, cfg);
    if (cfg.subcommand == "addcomb") res = run_addcomb(ac, cfg);
    if (cfg.subcommand == "approxhom") res = run_approxhom(ah, cfg);
    if (cfg.subcommand == "glue") res = run_glue(gl, cfg);
    if (cfg.subcommand == "lemma-check") res = run_lemma_check(lm, cfg);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n\n" << sub->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }

  RunManifest man;
  man.config = cfg;
  man.started_utc = detail::utc_stamp(t0, "%Y-%m-%dT%H:%M:%SZ");
  man.exit_code = res.ok ? kExitOk : kExitHypothesis;
  man.notes = res.notes;
  try {
    const auto dir = detail::fresh_run_dir(cfg.out_root, cfg.subcommand, t0);
    for (const auto& f : res.files) {
      detail::write_file(dir / f.name, f.body);
      man.digests.emplace_back(f.name, sha256_hex(f.body));
      man.sizes.push_back(f.body.size());
    }
    man.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
    detail::write_file(dir / "manifest.json.tmp", man.to_json().dump(2) + "\n");
    std::filesystem::rename(dir / "manifest.json.tmp", dir / "manifest.json");
    out << dir.string() << '\n';
    for (const auto& n : res.notes) err << "note: " << n << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
  return man.exit_code;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"sapx"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace sapx::cli
