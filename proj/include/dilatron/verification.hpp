#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dilatron/dilation.hpp"
#include "dilatron/error.hpp"
#include "dilatron/markov_core.hpp"
#include "dilatron/quantum.hpp"
#include "dilatron/random_inputs.hpp"
#include "dilatron/simulator.hpp"
#include "dilatron/statistics.hpp"

// The verification suite behind `dilatron verify` and `dilatron quantum-check`.
// Each check reports a residual against a tolerance; a failing or throwing
// check never stops the others.

namespace dilatron::verify {

inline constexpr const char* kSchemaVersion = "1";

struct Options {
  std::uint64_t seed = 1;
  std::uint64_t paths = 100'000;
  std::vector<double> times = {0.5, 1.0, 2.0};
  double tol_alg = 1e-12;
  double tol_exp = 1e-8;
  double alpha = stats::kChiSquareAlpha;
  double se_factor = stats::kStandardErrors;
  std::size_t identity_samples = 1000;
  std::size_t flow_paths = 10'000;
  std::size_t random_functions = 20;
  /// Test hook: replace φ by a non-injective table before checking.
  bool corrupt_coupling = false;
};

enum class Status { Pass, Fail, Skipped };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Pass: return "pass";
    case Status::Fail: return "fail";
    case Status::Skipped: return "skipped";
  }
  return "fail";
}

struct CheckResult {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  Status status = Status::Pass;
  std::string detail;
};

struct Report {
  std::vector<CheckResult> checks;
  bool all_pass() const {
    return std::none_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.status == Status::Fail; });
  }
};

/// Streams for suite-level randomness live far above the per-path indices.
inline constexpr std::uint64_t kSuiteStreamBase = 1ull << 62;

namespace detail {

inline CheckResult run_check(const std::string& name, double tolerance, const std::function<CheckResult()>& body) {
  try {
    CheckResult r = body();
    r.name = name;
    r.tolerance = tolerance;
    return r;
  } catch (const Error& e) {
    return {name, 0.0, tolerance, Status::Fail, e.what()};
  } catch (const std::exception& e) {
    return {name, 0.0, tolerance, Status::Fail, e.what()};
  }
}

inline CheckResult bounded(double residual, double tolerance, std::string detail = {}) {
  return {"", residual, tolerance, residual <= tolerance ? Status::Pass : Status::Fail, std::move(detail)};
}

inline CheckResult skipped(std::string why) { return {"", 0.0, 0.0, Status::Skipped, std::move(why)}; }

inline double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace detail

/// Replaces the image of one completed point by that of another, breaking
/// injectivity while leaving the prescribed part (and hence the law) intact.
inline Coupling corrupt(const Coupling& phi) {
  if (!phi.is_dense()) throw Error(ErrorCode::TooLargeForDenseCoupling, "cannot corrupt a lazy coupling");
  auto table = phi.forward_table();
  const auto& prov = phi.provenance();
  std::vector<std::size_t> completed;
  for (std::size_t x = 0; x < prov.size() && completed.size() < 2; ++x) {
    if (prov[x] == Provenance::Completed) completed.push_back(x);
  }
  if (completed.size() < 2) {
    table[1 % table.size()] = table[0];
  } else {
    table[completed[1]] = table[completed[0]];
  }
  return Coupling::from_table(phi.states(), std::move(table), false);
}

/// Cocycle identity ψ_{t+s} = θ_{-t}∘ψ_s∘θ_t∘ψ_t and group law checks on
/// random inputs; residual = number of mismatches (exact equality expected).
inline CheckResult cocycle_check(const Coupling& phi, std::size_t samples, RandomStream& rng) {
  std::size_t bad = 0;
  const Time lo = Time::from_seconds(-3.0), hi = Time::from_seconds(7.0);
  for (std::size_t k = 0; k < samples; ++k) {
    const auto gamma = random::configuration(phi.space(), rng, lo, hi, 1 + rng.next_u32() % 12);
    const auto i = static_cast<State>(rng.next_u32() % phi.states());
    const Time t = random::time_between(rng, Time::zero(), Time::from_seconds(3.0));
    const Time s = random::time_between(rng, Time::zero(), Time::from_seconds(3.0));
    const auto lhs = psi_apply(phi, t + s, i, gamma);
    const auto step = psi_apply(phi, t, i, gamma);
    const auto mid = psi_apply(phi, s, step.state, theta_shift(t, step.config));
    const SystemEnvironment rhs{mid.state, theta_shift(-t, mid.config)};
    if (!(lhs == rhs)) ++bad;
  }
  return detail::bounded(static_cast<double>(bad), 0.0, std::to_string(samples) + " samples");
}

inline CheckResult group_check(const Coupling& phi, std::size_t samples, RandomStream& rng) {
  std::size_t bad = 0;
  const Time lo = Time::from_seconds(-6.0), hi = Time::from_seconds(6.0);
  for (std::size_t k = 0; k < samples; ++k) {
    const auto gamma = random::configuration(phi.space(), rng, lo, hi, 1 + rng.next_u32() % 12);
    const auto i = static_cast<State>(rng.next_u32() % phi.states());
    const Time t = random::time_between(rng, Time::from_seconds(-2.5), Time::from_seconds(2.5));
    const Time s = random::time_between(rng, Time::from_seconds(-2.5), Time::from_seconds(2.5));
    const auto at = alpha(phi, t, i, gamma);
    const auto back = alpha(phi, -t, at.state, at.config);
    if (!(back == SystemEnvironment{i, gamma})) ++bad;
    const auto ast = alpha(phi, s, at.state, at.config);
    if (!(ast == alpha(phi, t + s, i, gamma))) ++bad;
  }
  return detail::bounded(static_cast<double>(bad), 0.0, std::to_string(samples) + " samples, inverse and composition");
}

/// Sector permutation checks while the sector stays enumerable.
inline CheckResult sector_check(const Coupling& phi, std::size_t max_points = 3) {
  if (!phi.is_dense()) return detail::skipped("lazy coupling");
  std::size_t checked = 0, bad = 0;
  for (std::size_t m = 0; m <= max_points; ++m) {
    std::uint64_t size = phi.states();
    for (std::size_t k = 0; k < m; ++k) size *= phi.space().size();
    if (size > 2'000'000) break;
    for (std::size_t inside = 0; inside <= m; ++inside) {
      const auto r = check_sector_permutation(phi, m, inside);
      ++checked;
      if (!r.permutation || !r.times_preserved) ++bad;
    }
  }
  return detail::bounded(static_cast<double>(bad), 0.0, std::to_string(checked) + " arrival patterns");
}

inline std::vector<CheckResult> quantum_checks(const RateMatrix& r, const Dilation& d, const Options& opt) {
  std::vector<CheckResult> out;
  const std::size_t n = r.size();
  if (!d.coupling.is_dense() || n > quantum::kMaxDenseUnitaryStates) {
    for (const char* name : {"quantum.S_unitary", "quantum.generator_extension", "quantum.semigroup_extension", "quantum.choi_psd",
                             "quantum.flow_coefficient_identity", "quantum.generator_triangle", "quantum.completion_invariance",
                             "quantum.rn_density_identity"}) {
      CheckResult c = detail::skipped("dense S requires n <= 3");
      c.name = name;
      out.push_back(c);
    }
    return out;
  }

  const auto [lambda, p] = uniformize(r);
  const auto dec = decompose(p);
  const auto& space = d.space();

  out.push_back(detail::run_check("quantum.S_unitary", 0.0, [&] {
    const auto s = quantum::build_S(d.coupling);
    const bool ok = s.is_permutation() && s.is_unitary_exact();
    return CheckResult{"", ok ? 0.0 : 1.0, 0.0, ok ? Status::Pass : Status::Fail, "exact permutation and S*S = SS* = I"};
  }));

  out.push_back(detail::run_check("quantum.generator_extension", opt.tol_alg, [&] {
    const auto s = quantum::build_S(d.coupling);
    const auto l = quantum::lindblad_rext0(s, d.law.support(), space, d.law.rate());
    return detail::bounded(quantum::generator_extension_residual(l, r), opt.tol_alg, "L m_f = m_{Rf}, canonical f");
  }));

  out.push_back(detail::run_check("quantum.semigroup_extension", opt.tol_exp, [&] {
    const auto s = quantum::build_S(d.coupling);
    const auto l = quantum::lindblad_rext0(s, d.law.support(), space, d.law.rate());
    std::vector<double> ts;
    for (double t : opt.times) {
      if (t >= 0.0) ts.push_back(t);
    }
    const auto res = quantum::check_extension(l, r, ts);
    return detail::bounded(std::max(res.max_residual, res.max_off_diagonal), opt.tol_exp, "e^{Lt} m_f = m_{e^{Rt} f}");
  }));

  out.push_back(detail::run_check("quantum.choi_psd", 1e-10, [&] {
    const auto l = quantum::lindblad_rext(dec, lambda);
    double worst = 0.0;
    for (double t : opt.times) {
      if (t < 0.0) continue;
      const auto tl = quantum::superop_exp(l, t);
      worst = std::max(worst, -quantum::choi_min_eigenvalue(tl));
      const auto id = quantum::Operator::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
      worst = std::max(worst, quantum::max_abs(tl(id) - id));
    }
    return detail::bounded(std::max(worst, 0.0), 1e-10, "-min eig(Choi) and |T_t(I) - I|");
  }));

  out.push_back(detail::run_check("quantum.flow_coefficient_identity", opt.tol_alg, [&] {
    const auto s = quantum::build_S(d.coupling);
    RandomStream rng(opt.seed, kSuiteStreamBase + 10);
    double worst = 0.0;
    for (std::size_t k = 0; k < opt.random_functions; ++k) {
      std::vector<quantum::Complex> f(n);
      for (auto& v : f) v = {2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0};
      worst = std::max(worst, quantum::flow_coefficient_identity(s, d.coupling, f).max_residual);
    }
    return detail::bounded(worst, opt.tol_alg, std::to_string(opt.random_functions) + " random f, all g, g'");
  }));

  out.push_back(detail::run_check("quantum.generator_triangle", opt.tol_alg, [&] {
    const auto s = quantum::build_S(d.coupling);
    const auto l_ext = quantum::lindblad_rext(dec, lambda);
    const auto l_0 = quantum::lindblad_rext0(s, d.law.support(), space, d.law.rate());
    const auto kraus = quantum::kraus_from_S_nu(s, quantum::nu_from_law(d.law, space));
    const auto l_k = quantum::lindblad_from_kraus(quantum::Operator::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)), kraus);
    const double res = std::max({quantum::max_abs(l_ext.matrix() - l_0.matrix()), quantum::max_abs(l_0.matrix() - l_k.matrix()),
                                 quantum::max_abs(l_ext.matrix() - l_k.matrix())});
    return detail::bounded(res, opt.tol_alg, "Rext vs Rext0 vs Kraus form");
  }));

  out.push_back(detail::run_check("quantum.completion_invariance", 1e-14, [&] {
    const auto s = quantum::build_S(d.coupling);
    const auto s_rev = quantum::build_S(complete_coupling(n, CompletionOrder::Reversed));
    const auto a = quantum::lindblad_rext0(s, d.law.support(), space, d.law.rate());
    const auto b = quantum::lindblad_rext0(s_rev, d.law.support(), space, d.law.rate());
    return detail::bounded(quantum::max_abs(a.matrix() - b.matrix()), 1e-14, "reversed completion of phi");
  }));

  out.push_back(detail::run_check("quantum.rn_density_identity", opt.tol_alg, [&] {
    // Σ over G^m (m ≤ 2, or 3 when |G| is small) of |G|^{-m} · density · h
    // against Σ over supp(q)^m of q^{⊗m} · h, for random h.
    RandomStream rng(opt.seed, kSuiteStreamBase + 11);
    const std::uint64_t gsize = space.size();
    const std::size_t m_max = gsize <= 8 ? 3 : 2;
    double worst = 0.0;
    for (std::size_t m = 1; m <= m_max; ++m) {
      std::uint64_t cells = 1;
      for (std::size_t k = 0; k < m; ++k) cells *= gsize;
      for (std::size_t rep = 0; rep < opt.random_functions; ++rep) {
        std::vector<double> h(cells);
        for (auto& v : h) v = 2.0 * rng.uniform() - 1.0;
        double lhs = 0.0;
        std::vector<MarkedPoint> pts(m);
        for (std::uint64_t c = 0; c < cells; ++c) {
          std::uint64_t rest = c;
          for (std::size_t k = m; k-- > 0;) {
            pts[k] = {space.mark(rest % gsize), Time::from_seconds(static_cast<double>(k + 1))};
            rest /= gsize;
          }
          const MarkedConfiguration cfg(pts, Time::zero(), Time::from_seconds(static_cast<double>(m + 1)));
          lhs += quantum::rn_density(cfg, d.law, space) * h[c] / std::pow(static_cast<double>(gsize), static_cast<double>(m));
        }
        double rhs = 0.0;
        const auto& sup = d.law.support();
        std::vector<std::size_t> pos(m, 0);
        for (;;) {
          double w = 1.0;
          std::uint64_t c = 0;
          for (std::size_t k = 0; k < m; ++k) {
            w *= sup[pos[k]].weight;
            c = c * gsize + space.index(sup[pos[k]].mark);
          }
          rhs += w * h[c];
          std::size_t k = m;
          while (k > 0 && ++pos[k - 1] == sup.size()) pos[--k] = 0;
          if (k == 0) break;
        }
        worst = std::max(worst, std::abs(lhs - rhs));
      }
    }
    return detail::bounded(worst, opt.tol_alg, "E_uniform[density h] = E_q[h], exact sums");
  }));

  return out;
}

/// The full suite for one rate matrix.
inline Report run_all(const RateMatrix& r, const Options& opt) {
  Report rep;
  const std::size_t n = r.size();
  auto d = build_universal(r);
  if (opt.corrupt_coupling) d.coupling = corrupt(d.coupling);

  rep.checks.push_back(detail::run_check("uniformization", opt.tol_alg, [&] {
    const auto u = uniformize(r);
    const Eigen::MatrixXd back = u.rate * (u.jump_matrix.matrix() - Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
    return detail::bounded(detail::max_abs(back - r.matrix()), opt.tol_alg, "lambda (P - I) = R");
  }));

  rep.checks.push_back(detail::run_check("decomposition_roundtrip", opt.tol_alg, [&] {
    const auto p = uniformize(r).jump_matrix;
    const auto dec = decompose(p);
    const double res = std::max(detail::max_abs(recompose(dec).matrix() - p.matrix()), std::abs(dec.total_weight() - 1.0));
    return detail::bounded(res, opt.tol_alg, std::to_string(dec.atoms.size()) + " atoms");
  }));

  rep.checks.push_back(detail::run_check("coupling_bijection", 0.0, [&] {
    if (!d.coupling.is_dense()) return detail::skipped("lazy coupling (n > 4)");
    const bool ok = d.coupling.is_bijective();
    return CheckResult{"", ok ? 0.0 : 1.0, 0.0, ok ? Status::Pass : Status::Fail, "phi is a permutation of E x G"};
  }));

  rep.checks.push_back(detail::run_check("induced_generator", opt.tol_alg, [&] {
    const auto ig = induced_generator(d);
    return detail::bounded(detail::max_abs(ig.rates.matrix() - r.matrix()), opt.tol_alg * std::max(1.0, d.law.rate()), "R recovered from (phi, q, lambda)");
  }));

  rep.checks.push_back(detail::run_check("cocycle_identity", 0.0, [&] {
    if (!d.coupling.is_dense()) return detail::skipped("lazy coupling (n > 4)");
    RandomStream rng(opt.seed, kSuiteStreamBase + 1);
    return cocycle_check(d.coupling, opt.identity_samples, rng);
  }));

  rep.checks.push_back(detail::run_check("group_law", 0.0, [&] {
    if (!d.coupling.is_dense()) return detail::skipped("lazy coupling (n > 4)");
    RandomStream rng(opt.seed, kSuiteStreamBase + 2);
    return group_check(d.coupling, opt.identity_samples, rng);
  }));

  rep.checks.push_back(detail::run_check("sector_permutation", 0.0, [&] { return sector_check(d.coupling); }));

  for (double t : opt.times) {
    for (std::size_t k = 0; k < n; ++k) {
      rep.checks.push_back(detail::run_check("markov_semigroup[k=" + std::to_string(k + 1) + ",t=" + dilatron::detail::fmt_double(t) + "]", opt.se_factor, [&] {
        const auto s = semigroup_report(d, r, static_cast<State>(k), t, opt.paths, opt.seed + 7919 * k, opt.se_factor, opt.alpha);
        return CheckResult{"", s.max_z, opt.se_factor, s.pass ? Status::Pass : Status::Fail,
                           "residual = max |dev|/SE; chi2=" + dilatron::detail::fmt_double(s.chi2) + " p=" + dilatron::detail::fmt_double(s.p_value) + " (needs p > " +
                               dilatron::detail::fmt_double(opt.alpha) + ")"};
      }));
    }
  }

  rep.checks.push_back(detail::run_check("markov_property", opt.se_factor, [&] {
    // X_{t+s} | X_t = i against row i of e^{Rs}.
    double t = 0.0;
    for (double v : opt.times) t = std::max(t, v);
    if (t <= 0.0) return detail::skipped("no positive time");
    const double s = t;
    const auto joint = empirical_joint(d, 0, Time::from_seconds(t), Time::from_seconds(t + s), opt.paths, opt.seed ^ 0x5eedull);
    const auto es = expm_rate(r, s);
    double worst_p = 1.0, worst_z = 0.0;
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::uint64_t> row(joint.begin() + static_cast<std::ptrdiff_t>(i * n), joint.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
      std::vector<double> ex(n);
      for (std::size_t j = 0; j < n; ++j) ex[j] = es(i, j);
      std::uint64_t tot = 0;
      for (auto c : row) tot += c;
      if (tot < 50) continue;
      const auto rep_i = compare_distribution(static_cast<State>(i), s, row, ex, opt.se_factor, opt.alpha);
      worst_p = std::min(worst_p, rep_i.p_value);
      worst_z = std::max(worst_z, rep_i.max_z);
      ok = ok && rep_i.pass;
    }
    return CheckResult{"", worst_z, opt.se_factor, ok ? Status::Pass : Status::Fail,
                       "conditional law vs e^{Rs}, s = t = " + dilatron::detail::fmt_double(t) + "; min p=" + dilatron::detail::fmt_double(worst_p)};
  }));

  rep.checks.push_back(detail::run_check("flow_sde", 0.0, [&] {
    double horizon = 0.0;
    for (double v : opt.times) horizon = std::max(horizon, v);
    if (horizon <= 0.0) horizon = 1.0;
    std::size_t bad = 0, innovation_bad = 0;
    const std::size_t paths = std::min<std::size_t>(opt.flow_paths, opt.paths);
    for (std::size_t p = 0; p < paths; ++p) {
      RandomStream rng(opt.seed, kSuiteStreamBase + 100 + p);
      const auto k = static_cast<State>(p % n);
      const auto traj = simulate_path(d, k, Time::from_seconds(horizon), rng);
      for (std::size_t j = 0; j < n; ++j) {
        if (!verify_flow_sde(traj, d.coupling, quantum::indicator(n, j))) ++bad;
      }
      if (!(innovation_reconstruct(k, traj.counting(), d.coupling, traj.horizon) == traj)) ++innovation_bad;
    }
    return detail::bounded(static_cast<double>(bad + innovation_bad), 0.0,
                           std::to_string(paths) + " paths x " + std::to_string(n) + " indicators; innovation replay included");
  }));

  for (auto& c : quantum_checks(r, d, opt)) rep.checks.push_back(std::move(c));
  return rep;
}

inline Report run_quantum(const RateMatrix& r, const Options& opt) {
  Report rep;
  auto d = build_universal(r);
  if (opt.corrupt_coupling) d.coupling = corrupt(d.coupling);
  rep.checks = quantum_checks(r, d, opt);
  return rep;
}

inline nlohmann::json report_json(const Report& rep, const Options& opt, const std::string& command) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : rep.checks) {
    checks.push_back({{"name", c.name}, {"residual", c.residual}, {"tolerance", c.tolerance}, {"status", to_string(c.status)},
                      {"pass", c.status != Status::Fail}, {"detail", c.detail}});
  }
  return {{"schema", kSchemaVersion},
          {"command", command},
          {"rng", RandomStream::kGeneratorName},
          {"seed", opt.seed},
          {"paths", opt.paths},
          {"times", opt.times},
          {"tolerances", {{"alg", opt.tol_alg}, {"exp", opt.tol_exp}, {"alpha", opt.alpha}, {"se_factor", opt.se_factor}}},
          {"checks", std::move(checks)},
          {"verdict", rep.all_pass() ? "pass" : "fail"}};
}

}  // namespace dilatron::verify
