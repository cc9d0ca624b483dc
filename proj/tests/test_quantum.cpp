#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "dilatron/quantum.hpp"
#include "dilatron/random_inputs.hpp"

using namespace dilatron;
using namespace dilatron::quantum;

namespace {

RateMatrix two_state() {
  Eigen::MatrixXd r(2, 2);
  r << -1.0, 1.0, 2.0, -2.0;
  return RateMatrix::validate(r);
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::ParseError;
}

struct Generators {
  Superoperator rext, rext0, kraus;
};

Generators all_generators(const RateMatrix& r) {
  const auto d = build_universal(r);
  const auto [lambda, p] = uniformize(r);
  const auto s = build_S(d.coupling);
  const auto n = static_cast<Eigen::Index>(r.size());
  return {lindblad_rext(decompose(p), lambda), lindblad_rext0(s, d.law.support(), d.space(), d.law.rate()),
          lindblad_from_kraus(Operator::Zero(n, n), kraus_from_S_nu(s, nu_from_law(d.law, d.space())))};
}

}  // namespace

TEST(Vectorization, ColumnStacking) {
  Operator a(2, 2);
  a << 1.0, 2.0, 3.0, 4.0;
  const auto v = vec(a);
  EXPECT_EQ(v(0), Complex(1.0));
  EXPECT_EQ(v(1), Complex(3.0));
  EXPECT_EQ(v(2), Complex(2.0));
  EXPECT_EQ(unvec(v, 2), a);
}

TEST(Superoperator, MatrixActsOnVec) {
  const auto l = lindblad_rext(decompose(uniformize(two_state()).jump_matrix), 2.0);
  RandomStream rng(301, 0);
  Operator a(2, 2);
  for (Eigen::Index k = 0; k < 4; ++k) a(k % 2, k / 2) = {rng.uniform(), rng.uniform()};
  EXPECT_LT(max_abs(l.matrix() * vec(a) - vec(l(a))), 1e-15);
}

TEST(CouplingUnitary, PermutationForSmallN) {
  for (std::size_t n = 1; n <= 3; ++n) {
    const auto s = build_S(complete_coupling(n));
    EXPECT_TRUE(s.is_permutation());
    EXPECT_TRUE(s.is_unitary_exact());
    EXPECT_EQ(s.marks(), static_cast<Eigen::Index>(n * map_count(n)));
  }
  EXPECT_EQ(code_of([] { build_S(complete_coupling(4)); }), ErrorCode::TooLarge);
  EXPECT_EQ(code_of([] { build_S(Coupling::lazy(2)); }), ErrorCode::TooLarge);
}

TEST(CouplingUnitary, BlocksFollowPrescribedCoupling) {
  // φ(i,(1,ℓ)) = (β_ℓ(i), (i,ℓ)) puts |β_ℓ(i)⟩⟨i| into block (g, g') = ((i,ℓ), (1,ℓ)).
  const auto phi = complete_coupling(2);
  const auto s = build_S(phi);
  const MarkSpace& g = phi.space();
  for (State i = 0; i < 2; ++i) {
    for (MapIndex ell = 0; ell < 4; ++ell) {
      const auto blk = s.block(g.index({i, ell}), g.index({0, ell}));
      EXPECT_EQ(blk(g.map_image(ell, i), i), Complex(1.0));
    }
  }
}

TEST(CouplingUnitary, CorruptedCouplingIsNotAPermutation) {
  auto table = complete_coupling(2).forward_table();
  table[1] = table[0];
  const auto s = build_S(Coupling::from_table(2, table, false));
  EXPECT_FALSE(s.is_permutation());
  EXPECT_FALSE(s.is_unitary_exact());
}

TEST(Kraus, NormalizationSumsToLambda) {
  // Σ_g R_g* R_g = ‖ν‖² I = λ I because S is unitary.
  RandomStream rng(302, 0);
  for (std::size_t n : {2u, 3u}) {
    const auto r = random::rate_matrix(n, rng, 2.0, 0.2);
    const auto d = build_universal(r);
    const auto nu = nu_from_law(d.law, d.space());
    EXPECT_NEAR(nu.squared_norm(), d.law.rate(), 1e-12);
    const auto ks = kraus_from_S_nu(build_S(d.coupling), nu);
    const auto ni = static_cast<Eigen::Index>(n);
    Operator sum = Operator::Zero(ni, ni);
    for (const auto& k : ks) sum += k.adjoint() * k;
    EXPECT_LT(max_abs(sum - d.law.rate() * Operator::Identity(ni, ni)), 1e-12);
  }
}

TEST(Lindblad, TwoStateRextByHand) {
  // Diagonal part reproduces R; off-diagonal matrix units decay at rate λ.
  const auto l = lindblad_rext(decompose(uniformize(two_state()).jump_matrix), 2.0);
  const auto e01 = basis_operator(2, 0, 1);
  EXPECT_LT(max_abs(l(e01) + 2.0 * e01), 1e-15);
  const auto m = l(mult_operator(std::vector<double>{1.0, 0.0}));
  Operator expected = Operator::Zero(2, 2);
  expected(0, 0) = -1.0;
  expected(1, 1) = 2.0;
  EXPECT_LT(max_abs(m - expected), 1e-15);
}

TEST(Lindblad, AnnihilatesIdentity) {
  RandomStream rng(303, 0);
  for (std::size_t n : {2u, 3u}) {
    const auto g = all_generators(random::rate_matrix(n, rng));
    const auto id = Operator::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    EXPECT_LT(max_abs(g.rext(id)), 1e-12);
    EXPECT_LT(max_abs(g.rext0(id)), 1e-12);
    EXPECT_LT(max_abs(g.kraus(id)), 1e-12);
  }
}

TEST(Lindblad, PropertyGeneratorTriangle) {
  RandomStream rng(304, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 2 + rep % 2;
    const auto g = all_generators(random::rate_matrix(n, rng, 2.0, rep % 3 == 0 ? 0.4 : 0.0));
    EXPECT_LT(max_abs(g.rext.matrix() - g.rext0.matrix()), 1e-12);
    EXPECT_LT(max_abs(g.rext0.matrix() - g.kraus.matrix()), 1e-12);
  }
}

TEST(Lindblad, PropertyExtendsClassicalGenerator) {
  RandomStream rng(305, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 2 + rep % 2;
    const auto r = random::rate_matrix(n, rng);
    const auto g = all_generators(r);
    EXPECT_LT(generator_extension_residual(g.rext0, r), 1e-12);
    // Random f, not just indicators.
    std::vector<double> f(n);
    for (auto& v : f) v = 2.0 * rng.uniform() - 1.0;
    const Eigen::VectorXd rf = r.matrix() * Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(n));
    EXPECT_LT(max_abs(g.rext0(mult_operator(f)) - mult_operator(std::vector<double>(rf.data(), rf.data() + rf.size()))), 1e-12);
  }
}

TEST(Lindblad, SemigroupExtendsMarkovSemigroup) {
  RandomStream rng(306, 0);
  for (std::size_t n : {2u, 3u}) {
    const auto r = random::rate_matrix(n, rng);
    const auto g = all_generators(r);
    const auto res = check_extension(g.rext0, r, std::vector<double>{0.3, 1.0, 2.0});
    EXPECT_LT(res.max_residual, 1e-8);
    EXPECT_LT(res.max_off_diagonal, 1e-8);
  }
}

TEST(Lindblad, CompletionInvariance) {
  RandomStream rng(307, 0);
  for (std::size_t n : {2u, 3u}) {
    const auto r = random::rate_matrix(n, rng);
    const auto d = build_universal(r);
    const auto a = lindblad_rext0(build_S(complete_coupling(n)), d.law.support(), d.space(), d.law.rate());
    const auto b = lindblad_rext0(build_S(complete_coupling(n, CompletionOrder::Reversed)), d.law.support(), d.space(), d.law.rate());
    EXPECT_LT(max_abs(a.matrix() - b.matrix()), 1e-14);
  }
}

TEST(Lindblad, RejectsNonSelfAdjointHamiltonian) {
  Operator h = Operator::Zero(2, 2);
  h(0, 1) = 1.0;
  EXPECT_EQ(code_of([&] { lindblad_from_kraus(h, {}); }), ErrorCode::NotSelfAdjoint);
}

TEST(Lindblad, HamiltonianPartIsCommutator) {
  Operator h(2, 2);
  h << 1.0, Complex(0.0, 0.5), Complex(0.0, -0.5), -1.0;
  const auto l = lindblad_from_kraus(h, {});
  const auto a = basis_operator(2, 0, 1);
  EXPECT_LT(max_abs(l(a) - Complex(0.0, 1.0) * (h * a - a * h)), 1e-15);
}

TEST(Choi, IdentityChannel) {
  const auto c = choi_matrix(Superoperator::identity(2));
  EXPECT_NEAR(choi_min_eigenvalue(Superoperator::identity(2)), 0.0, 1e-14);
  // Unnormalized maximally entangled projector: trace d, rank one with eigenvalue d.
  EXPECT_NEAR(c.trace().real(), 2.0, 1e-15);
}

TEST(Choi, TransposeIsNotCompletelyPositive) {
  const auto t = Superoperator::from_map(2, [](const Operator& a) { return Operator(a.transpose()); });
  EXPECT_LT(choi_min_eigenvalue(t), -0.5);
}

TEST(Choi, EvolutionIsCompletelyPositiveAndUnital) {
  RandomStream rng(308, 0);
  for (std::size_t n : {2u, 3u}) {
    const auto r = random::rate_matrix(n, rng);
    const auto l = lindblad_rext(decompose(uniformize(r).jump_matrix), uniformize(r).rate);
    for (double t : {0.3, 1.0, 2.0}) {
      const auto tt = superop_exp(l, t);
      EXPECT_GT(choi_min_eigenvalue(tt), -1e-10);
      const auto id = Operator::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
      EXPECT_LT(max_abs(tt(id) - id), 1e-12);
    }
  }
}

TEST(FlowCoefficient, PropertyIdentityHolds) {
  RandomStream rng(309, 0);
  for (std::size_t n : {2u, 3u}) {
    const auto phi = complete_coupling(n);
    const auto s = build_S(phi);
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<Complex> f(n);
      for (auto& v : f) v = {rng.uniform(), rng.uniform()};
      const auto res = flow_coefficient_identity(s, phi, f);
      EXPECT_LT(res.max_residual, 1e-12);
      EXPECT_EQ(res.max_off_diagonal_block, 0.0);
    }
  }
}

TEST(FlowCoefficient, BrokenCouplingViolatesIdentity) {
  auto table = complete_coupling(2).forward_table();
  table[1] = table[0];
  const auto bad = Coupling::from_table(2, table, false);
  const std::vector<Complex> f{1.0, 5.0};
  EXPECT_GT(flow_coefficient_identity(build_S(bad), bad, f).max_residual, 0.5);
}

TEST(RnDensity, TwoStateByHand) {
  // |G| = 8 for n = 2 and q puts 1/2 on (1,(1,1)) and 1/2 on (1,(2,1)), 1-based.
  const auto d = build_universal(two_state());
  const MarkedConfiguration one({{{0, 0}, 1_t}}, Time::zero(), 2_t);
  EXPECT_DOUBLE_EQ(rn_density(one, d.law, d.space()), 4.0);
  const MarkedConfiguration two({{{0, 0}, 1_t}, {{0, 2}, 1.5_t}}, Time::zero(), 2_t);
  EXPECT_DOUBLE_EQ(rn_density(two, d.law, d.space()), 16.0);
  const MarkedConfiguration off({{{1, 0}, 1_t}}, Time::zero(), 2_t);
  EXPECT_EQ(rn_density(off, d.law, d.space()), 0.0);
  EXPECT_EQ(rn_density(MarkedConfiguration({}, Time::zero(), 2_t), d.law, d.space()), 1.0);
  const MarkedConfiguration outside({{{2, 0}, 1_t}}, Time::zero(), 2_t);
  EXPECT_EQ(code_of([&] { rn_density(outside, d.law, d.space()); }), ErrorCode::OutOfRange);
}

TEST(RnDensity, UniformExpectationOfDensityIsOne) {
  // Σ_{g ∈ G} |G|^{-1} · |G| q_g = 1 for one point; exact sum.
  RandomStream rng(310, 0);
  const auto d = build_universal(random::rate_matrix(3, rng));
  double sum = 0.0;
  for (std::uint64_t g = 0; g < d.space().size(); ++g) {
    const MarkedConfiguration c({{d.space().mark(g), 1_t}}, Time::zero(), 2_t);
    sum += rn_density(c, d.law, d.space()) / static_cast<double>(d.space().size());
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}
