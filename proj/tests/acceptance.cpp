// Acceptance suite: one PASS/FAIL line per criterion, each under its own
// wall-clock budget. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "dilatron/dilation.hpp"
#include "dilatron/markov_core.hpp"
#include "dilatron/quantum.hpp"
#include "dilatron/random_inputs.hpp"
#include "dilatron/simulator.hpp"
#include "dilatron/statistics.hpp"
#include "dilatron/verification.hpp"

using namespace dilatron;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

RateMatrix two_state() {
  Eigen::MatrixXd r(2, 2);
  r << -1.0, 1.0, 2.0, -2.0;
  return RateMatrix::validate(r);
}

RateMatrix random_three_state() {
  RandomStream rng(20260301, 0);
  return random::rate_matrix(3, rng, 2.0);
}

Outcome ac1_decomposition() {
  RandomStream rng(20260101, 0);
  double worst_matrix = 0.0, worst_weight = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 2 + static_cast<std::size_t>(k % 4);
    const auto p = random::stochastic_matrix(n, rng, k % 3 == 0 ? 0.3 : 0.0);
    const auto d = decompose(p);
    worst_matrix = std::max(worst_matrix, max_abs(recompose(d).matrix() - p.matrix()));
    worst_weight = std::max(worst_weight, std::abs(d.total_weight() - 1.0));
  }
  return {worst_matrix < 1e-12 && worst_weight < 1e-12,
          "100 matrices, n=2..5: max |sum p D - P| = " + sci(worst_matrix) + ", max |sum p - 1| = " + sci(worst_weight)};
}

Outcome ac2_uniformization() {
  RandomStream rng(20260102, 0);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const std::size_t n = 2 + static_cast<std::size_t>(k % 4);
    const auto r = random::rate_matrix(n, rng, 1.0, k % 2 ? 0.25 : 0.0);
    const auto u = uniformize(r);
    for (double t : {0.5, 1.0, 2.0}) {
      worst = std::max(worst, max_abs(expm_rate(r, t).matrix() - uniformized_series(u.rate, u.jump_matrix, t, 60)));
    }
  }
  return {worst < 1e-10, "20 generators x 3 times: max |e^{Rt} - series| = " + sci(worst)};
}

Outcome ac3_cocycle_group() {
  RandomStream rng(20260103, 0);
  const Coupling couplings[] = {complete_coupling(2), complete_coupling(3), complete_coupling(4)};
  std::size_t cocycle_bad = 0, inverse_bad = 0, compose_bad = 0;
  const int samples = 1000;
  for (int k = 0; k < samples; ++k) {
    const Coupling& phi = couplings[k % 3];
    const auto i = static_cast<State>(rng.next_u32() % phi.states());
    const auto gamma = random::configuration(phi.space(), rng, Time::from_seconds(-6.0), Time::from_seconds(6.0), 1 + rng.next_u32() % 12);

    // ψ_{t+s} = θ_{-t} ∘ ψ_s ∘ θ_t ∘ ψ_t for t, s ≥ 0
    const Time t = random::time_between(rng, Time::zero(), Time::from_seconds(3.0));
    const Time s = random::time_between(rng, Time::zero(), Time::from_seconds(3.0));
    const auto lhs = psi_apply(phi, t + s, i, gamma);
    const auto step = psi_apply(phi, t, i, gamma);
    const auto mid = psi_apply(phi, s, step.state, theta_shift(t, step.config));
    if (!(lhs == SystemEnvironment{mid.state, theta_shift(-t, mid.config)})) ++cocycle_bad;

    // α_{-u} ∘ α_u = id and α_v ∘ α_u = α_{u+v} for u, v of either sign
    const Time u = random::time_between(rng, Time::from_seconds(-2.5), Time::from_seconds(2.5));
    const Time v = random::time_between(rng, Time::from_seconds(-2.5), Time::from_seconds(2.5));
    const auto au = alpha(phi, u, i, gamma);
    if (!(alpha(phi, -u, au.state, au.config) == SystemEnvironment{i, gamma})) ++inverse_bad;
    if (!(alpha(phi, v, au.state, au.config) == alpha(phi, u + v, i, gamma))) ++compose_bad;
  }
  return {cocycle_bad + inverse_bad + compose_bad == 0,
          std::to_string(samples) + " samples, n=2..4: mismatches cocycle=" + std::to_string(cocycle_bad) +
              " inverse=" + std::to_string(inverse_bad) + " composition=" + std::to_string(compose_bad)};
}

Outcome ac4_sector_permutation() {
  const auto phi = complete_coupling(2);
  std::size_t patterns = 0, bad = 0;
  std::uint64_t states = 0;
  for (std::size_t m = 0; m <= 3; ++m) {
    for (std::size_t inside = 0; inside <= m; ++inside) {
      const auto r = check_sector_permutation(phi, m, inside);
      ++patterns;
      states += r.sector_size;
      if (!r.permutation || !r.times_preserved) ++bad;
    }
  }
  // A non-injective table must be caught, or the check proves nothing.
  const auto broken = verify::corrupt(phi);
  bool caught = false;
  for (std::size_t m = 1; m <= 3 && !caught; ++m) {
    for (std::size_t inside = 1; inside <= m && !caught; ++inside) caught = !check_sector_permutation(broken, m, inside).permutation;
  }
  return {bad == 0 && caught, "|E x G| = " + std::to_string(phi.domain_size()) + ", " + std::to_string(patterns) + " arrival patterns (" +
                                  std::to_string(states) + " sector points), non-permutations " + std::to_string(bad) +
                                  (caught ? ", corrupted coupling detected" : ", corrupted coupling NOT detected")};
}

Outcome ac5_markov() {
  const std::uint64_t paths = 100'000;
  const std::vector<double> times{0.5, 1.0, 2.0};
  bool ok = true;
  double worst_z = 0.0, worst_p = 1.0, worst_hom_p = 1.0;
  std::size_t reports = 0;
  std::uint64_t seed = 20260105;
  for (const auto& r : {two_state(), random_three_state()}) {
    const auto d = build_universal(r);
    const std::size_t n = r.size();
    for (double t : times) {
      for (State k = 0; k < n; ++k) {
        const auto rep = semigroup_report(d, r, k, t, paths, ++seed);
        ok = ok && rep.pass;
        worst_z = std::max(worst_z, rep.max_z);
        worst_p = std::min(worst_p, rep.p_value);
        ++reports;
      }
      // Conditional law of X_{t+s} given X_t = i, with s = t: against row i of
      // e^{Rs} and, by a homogeneity test, against fresh paths started at i.
      const auto joint = empirical_joint(d, 0, Time::from_seconds(t), Time::from_seconds(2.0 * t), paths, ++seed);
      const auto es = expm_rate(r, t);
      for (State i = 0; i < n; ++i) {
        std::vector<std::uint64_t> row(joint.begin() + i * n, joint.begin() + (i + 1) * n);
        std::uint64_t total = 0;
        for (auto c : row) total += c;
        if (total == 0) continue;
        std::vector<double> exact(n);
        for (std::size_t j = 0; j < n; ++j) exact[j] = es(i, j);
        const auto rep = compare_distribution(i, t, row, exact);
        ok = ok && rep.pass;
        worst_z = std::max(worst_z, rep.max_z);
        worst_p = std::min(worst_p, rep.p_value);
        ++reports;
        const auto fresh = empirical_semigroup(d, i, Time::from_seconds(t), paths, ++seed);
        const auto hom = stats::chi_square_homogeneity(row, fresh.counts);
        worst_hom_p = std::min(worst_hom_p, hom.p_value);
        ok = ok && hom.p_value > stats::kChiSquareAlpha;
      }
    }
  }
  return {ok, std::to_string(reports) + " laws at 1e5 paths: max |dev|/SE = " + sci(worst_z) + " (<= 3), min GOF p = " + sci(worst_p) +
                  ", min homogeneity p = " + sci(worst_hom_p) + " (> 0.001)"};
}

Outcome ac6_flow_sde() {
  RandomStream gen(20260106, 0);
  std::vector<RateMatrix> rates{two_state(), random_three_state(), random::rate_matrix(5, gen, 1.0, 0.3)};
  std::size_t bad = 0, replay_bad = 0, checked = 0;
  const std::uint64_t paths = 10'000;
  for (std::size_t m = 0; m < rates.size(); ++m) {
    const auto d = build_universal(rates[m]);
    const std::size_t n = rates[m].size();
    for (std::uint64_t p = 0; p < paths; ++p) {
      RandomStream rng(20260106 + m, p);
      const auto traj = simulate_path(d, static_cast<State>(p % n), Time::from_seconds(2.0), rng);
      for (std::size_t j = 0; j < n; ++j) {
        ++checked;
        if (!verify_flow_sde(traj, d.coupling, quantum::indicator(n, j))) ++bad;
      }
      if (!(innovation_reconstruct(traj.initial, traj.counting(), d.coupling, traj.horizon) == traj)) ++replay_bad;
    }
  }
  return {bad == 0 && replay_bad == 0, "n=2,3,5 x 1e4 paths, " + std::to_string(checked) + " path/indicator pairs: failures " +
                                           std::to_string(bad) + ", innovation replay mismatches " + std::to_string(replay_bad)};
}

std::vector<RateMatrix> quantum_cases() {
  RandomStream rng(20260107, 0);
  return {two_state(), random::rate_matrix(2, rng), random_three_state(), random::rate_matrix(3, rng, 1.0, 0.4)};
}

Outcome ac7_quantum_extension() {
  bool s_ok = true;
  double gen = 0.0, semi = 0.0;
  for (const auto& r : quantum_cases()) {
    const auto d = build_universal(r);
    const auto s = quantum::build_S(d.coupling);
    s_ok = s_ok && s.is_permutation() && s.is_unitary_exact();
    const auto l = quantum::lindblad_rext0(s, d.law.support(), d.space(), d.law.rate());
    gen = std::max(gen, quantum::generator_extension_residual(l, r));
    const auto ext = quantum::check_extension(l, r, std::vector<double>{0.3, 1.0, 2.0});
    semi = std::max({semi, ext.max_residual, ext.max_off_diagonal});
  }
  return {s_ok && gen < 1e-12 && semi < 1e-8, std::string("S exact permutation: ") + (s_ok ? "yes" : "NO") + ", L m_f - m_{Rf} = " +
                                                  sci(gen) + ", e^{Lt} m_f - m_{e^{Rt}f} = " + sci(semi) + " (n=2,3; t=0.3,1,2)"};
}

Outcome ac8_flow_coefficient() {
  RandomStream rng(20260108, 0);
  double worst = 0.0;
  for (std::size_t n : {2u, 3u}) {
    const auto phi = complete_coupling(n);
    const auto s = quantum::build_S(phi);
    for (int k = 0; k < 20; ++k) {
      std::vector<quantum::Complex> f(n);
      for (auto& v : f) v = {2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0};
      worst = std::max(worst, quantum::flow_coefficient_identity(s, phi, f).max_residual);
    }
  }
  return {worst < 1e-12, "20 random f, n=2,3, all (g, g') blocks: max residual = " + sci(worst)};
}

Outcome ac9_generator_triangle() {
  double triangle = 0.0, completion = 0.0;
  for (const auto& r : quantum_cases()) {
    const auto d = build_universal(r);
    const std::size_t n = r.size();
    const auto [lambda, p] = uniformize(r);
    const auto s = quantum::build_S(d.coupling);
    const auto l_ext = quantum::lindblad_rext(decompose(p), lambda);
    const auto l_0 = quantum::lindblad_rext0(s, d.law.support(), d.space(), d.law.rate());
    const auto ni = static_cast<Eigen::Index>(n);
    const auto l_k = quantum::lindblad_from_kraus(quantum::Operator::Zero(ni, ni), quantum::kraus_from_S_nu(s, quantum::nu_from_law(d.law, d.space())));
    triangle = std::max({triangle, quantum::max_abs(l_ext.matrix() - l_0.matrix()), quantum::max_abs(l_0.matrix() - l_k.matrix()),
                         quantum::max_abs(l_ext.matrix() - l_k.matrix())});
    const auto s_rev = quantum::build_S(complete_coupling(n, CompletionOrder::Reversed));
    const auto l_rev = quantum::lindblad_rext0(s_rev, d.law.support(), d.space(), d.law.rate());
    completion = std::max(completion, quantum::max_abs(l_0.matrix() - l_rev.matrix()));
  }
  return {triangle < 1e-12 && completion < 1e-14,
          "Rext / Rext0 / Kraus max gap = " + sci(triangle) + " (< 1e-12), reversed completion gap = " + sci(completion) + " (< 1e-14)"};
}

// A test function on G^m built from a counter-based hash, so it can be
// evaluated at any cell without storing it.
double test_function(std::uint64_t cell, std::uint32_t which, std::uint32_t m) {
  const auto out = Philox4x32::generate({static_cast<std::uint32_t>(cell), static_cast<std::uint32_t>(cell >> 32), which, m}, {0x5eed, 10});
  return static_cast<double>(out[0]) / 4294967296.0 * 2.0 - 1.0;
}

Outcome ac10_radon_nikodym() {
  double exact_worst = 0.0;
  for (const auto& r : {two_state(), random_three_state()}) {
    const auto d = build_universal(r);
    const auto& space = d.space();
    const std::uint64_t gsize = space.size();
    for (std::uint32_t m = 1; m <= 3; ++m) {
      std::uint64_t cells = 1;
      for (std::uint32_t k = 0; k < m; ++k) cells *= gsize;
      const double uniform_mass = std::pow(static_cast<double>(gsize), -static_cast<double>(m));
      std::vector<double> lhs(20, 0.0), rhs(20, 0.0);
      std::vector<MarkedPoint> pts(m);
      for (std::uint64_t c = 0; c < cells; ++c) {
        std::uint64_t rest = c;
        for (std::size_t k = m; k-- > 0;) {
          pts[k] = {space.mark(rest % gsize), Time::from_seconds(static_cast<double>(k + 1))};
          rest /= gsize;
        }
        const double density = quantum::rn_density(MarkedConfiguration(pts, Time::zero(), Time::from_seconds(m + 1.0)), d.law, space);
        if (density == 0.0) continue;
        for (std::uint32_t h = 0; h < 20; ++h) lhs[h] += uniform_mass * density * test_function(c, h, m);
      }
      // E_q[h] summed over supp(q)^m only.
      const auto& sup = d.law.support();
      std::vector<std::size_t> pos(m, 0);
      for (;;) {
        double w = 1.0;
        std::uint64_t c = 0;
        for (std::size_t k = 0; k < m; ++k) {
          w *= sup[pos[k]].weight;
          c = c * gsize + space.index(sup[pos[k]].mark);
        }
        for (std::uint32_t h = 0; h < 20; ++h) rhs[h] += w * test_function(c, h, m);
        std::size_t k = m;
        while (k > 0 && ++pos[k - 1] == sup.size()) pos[--k] = 0;
        if (k == 0) break;
      }
      for (std::uint32_t h = 0; h < 20; ++h) exact_worst = std::max(exact_worst, std::abs(lhs[h] - rhs[h]));
    }
  }

  // Monte Carlo: Poisson(λ) arrivals on (0, 1] with uniform marks, threaded
  // through φ from state 1 and reweighted by the density, must reproduce
  // P(X_1 = 1) = (e^R)_{11}.
  const auto r = two_state();
  const auto d = build_universal(r);
  const std::uint64_t gsize = d.space().size();
  const std::vector<EnvironmentLaw::Weight> uniform_weights = [&] {
    std::vector<EnvironmentLaw::Weight> w;
    for (std::uint64_t g = 0; g < gsize; ++g) w.push_back({d.space().mark(g), 1.0 / static_cast<double>(gsize)});
    return w;
  }();
  const EnvironmentLaw uniform(d.law.rate(), uniform_weights);
  stats::RunningMoments est;
  const std::uint64_t samples = 400'000;
  for (std::uint64_t p = 0; p < samples; ++p) {
    RandomStream rng(20260110, p);
    const auto gamma = sample_configuration(uniform, Time::from_seconds(1.0), rng);
    const double w = quantum::rn_density(gamma, d.law, d.space());
    const auto traj = thread_configuration(d.coupling, 0, gamma, Time::from_seconds(1.0));
    est.add(w * (traj.final_state() == 0 ? 1.0 : 0.0));
  }
  const double exact = expm_rate(r, 1.0)(0, 0);
  const double z = std::abs(est.mean() - exact) / est.standard_error();
  return {exact_worst < 1e-12 && z <= 3.0, "exact sums over G^m, m<=3, n=2,3, 20 h: max gap = " + sci(exact_worst) +
                                               "; reweighted MC " + sci(est.mean()) + " vs " + sci(exact) + " (" + sci(z) + " SE)"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "decomposition round-trip", 5.0, ac1_decomposition},
      {2, "uniformization consistency", 5.0, ac2_uniformization},
      {3, "cocycle and group identities", 5.0, ac3_cocycle_group},
      {4, "sector permutation (measure preservation)", 30.0, ac4_sector_permutation},
      {5, "Markov semigroup and Markov property", 60.0, ac5_markov},
      {6, "flow SDE pathwise", 30.0, ac6_flow_sde},
      {7, "quantum extension", 60.0, ac7_quantum_extension},
      {8, "flow coefficient identity", 30.0, ac8_flow_coefficient},
      {9, "generator triangle and completion invariance", 10.0, ac9_generator_triangle},
      {10, "Radon-Nikodym identity", 30.0, ac10_radon_nikodym},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.budget_seconds;
    const bool pass = out.pass && in_time;
    if (!pass) ++failures;
    std::printf("AC%-2d %s  %s: %s [%.2f s of %.0f s%s]\n", c.id, pass ? "PASS" : "FAIL", c.title, out.detail.c_str(), secs, c.budget_seconds,
                in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
