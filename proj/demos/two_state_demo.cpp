// Builds the universal dilation of a two-state chain, follows one path, and
// compares the empirical law of X_t with e^{Rt}.

#include <cstdio>

#include "dilatron/dilation.hpp"
#include "dilatron/simulator.hpp"

int main() {
  using namespace dilatron;

  Eigen::MatrixXd raw(2, 2);
  raw << -1.0, 1.0, 2.0, -2.0;
  const auto r = RateMatrix::validate(raw);
  const auto d = build_universal(r);

  std::printf("lambda = %g, |G| = %llu\n", d.law.rate(), static_cast<unsigned long long>(d.space().size()));
  for (const auto& w : d.law.support()) {
    const auto beta = DeterministicMap::from_index(2, w.mark.ell);
    std::printf("  q(1, l=%llu) = %g   beta = (%u, %u)\n", static_cast<unsigned long long>(w.mark.ell), w.weight, beta(0) + 1, beta(1) + 1);
  }

  const auto traj = simulate_path(d, 0, Time::from_seconds(3.0), 2024);
  std::printf("path from state 1 on (0, 3]:");
  for (const auto& j : traj.jumps) std::printf(" %.3f->%u", j.time.seconds(), j.state + 1);
  std::printf("\n");

  const double t = 1.0;
  const auto emp = empirical_semigroup(d, 0, Time::from_seconds(t), 200000, 7);
  const auto exact = expm_rate(r, t);
  for (std::size_t j = 0; j < 2; ++j) {
    std::printf("P(X_%g = %zu | X_0 = 1): empirical %.4f, exact %.4f\n", t, j + 1, emp.frequency(j), exact(0, j));
  }
}
