#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "contourlab/fock.hpp"
#include "contourlab/hubbard.hpp"

using namespace contourlab;
namespace hb = contourlab::hubbard;

namespace {

Matrix anticommutator(const Matrix& a, const Matrix& b) { return a * b + b * a; }

double classical_brute_z(const hb::Params& p, const Torus& t, double beta) {
  auto V = hb::classical_block(p);
  FockBasis b(t);
  double z = 0;
  for (std::int64_t n = 0; n < b.dimension(); ++n)
    z += std::exp(-beta * total_energy(V, t, b.configuration(static_cast<std::uint64_t>(n))));
  return z;
}

}  // namespace

TEST(Car, AllModePairs) {
  for (auto t : {Torus(std::vector{2}), Torus(2, 2)}) {
    FockBasis b(t);
    const auto dim = b.dimension();
    std::vector<Matrix> c;
    for (int x = 0; x < b.site_count(); ++x)
      for (Spin s : {Spin::Up, Spin::Down}) c.push_back(creation_operator(b, x, s));
    Matrix I = Matrix::Identity(dim, dim);
    for (std::size_t i = 0; i < c.size(); ++i) {
      EXPECT_EQ((c[i] * c[i]).cwiseAbs().maxCoeff(), 0.0);
      for (std::size_t j = 0; j < c.size(); ++j) {
        Matrix ann = c[j].transpose();
        EXPECT_EQ((anticommutator(c[i], c[j])).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ((anticommutator(ann, c[i]) - (i == j ? I : Matrix::Zero(dim, dim))).cwiseAbs().maxCoeff(), 0.0);
      }
    }
  }
}

TEST(Fock, DimensionCap) { EXPECT_THROW(FockBasis(Torus(2, 3)), BudgetExceeded); }

TEST(Fock, BasisRoundTrip) {
  FockBasis b(Torus(2, 2));
  for (std::uint64_t n = 0; n < 256; ++n) EXPECT_EQ(b.index_of(b.configuration(n)), n);
  EXPECT_EQ(b.configuration(0b1110).at(0), hb::Down);
}

TEST(AssembleHamiltonian, ClassicalLimitDiagonal) {
  hb::Params p{.t = 0, .U = 1.4, .W = 0.9, .mu = 0.7};
  Torus t(2, 2);
  FockBasis b(t);
  Matrix H = hb::hamiltonian(p, b);
  EXPECT_EQ(H.rows(), 256);
  EXPECT_LE(hermiticity_defect(H), 0.0);
  auto V = hb::classical_block(p);
  for (std::uint64_t n = 0; n < 256; ++n) EXPECT_NEAR(H(n, n), total_energy(V, t, b.configuration(n)), 1e-13);
  Matrix off = H;
  off.diagonal().setZero();
  EXPECT_EQ(off.cwiseAbs().maxCoeff(), 0.0);
}

TEST(AssembleHamiltonian, PureHopping) {
  FockBasis b(Torus(2, 2));
  Matrix T = hb::hopping_perturbation({.t = 0.3}, b);
  Matrix Z = Matrix::Zero(256, 256);
  EXPECT_EQ((assemble_hamiltonian(Z, T) - T).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(assemble_hamiltonian(T, T), ConfigError);
  EXPECT_THROW(assemble_hamiltonian(Matrix::Zero(4, 4), T), ConfigError);
}

TEST(TraceExp, ZeroHamiltonian) {
  Vector ev = Vector::Zero(64);
  EXPECT_NEAR(trace_exp(ev, 3.0, 3).Z, 64.0, 1e-12);
}

TEST(TraceExp, ClassicalBruteForce) {
  hb::Params p{.t = 0, .U = 1.4, .W = 0.9, .mu = 0.7};
  Torus t(2, 2);
  FockBasis b(t);
  auto spec = diagonalize(hb::hamiltonian(p, b));
  for (double beta : {0.3, 1.0, 2.5}) {
    double z = classical_brute_z(p, t, beta);
    EXPECT_NEAR(trace_exp(spec, beta, 4).Z / z - 1, 0.0, 1e-12);
  }
  EXPECT_NEAR(trace_exp(spec, 1e-12, 4).Z, 256.0, 1e-6);
}

TEST(TraceExp, SpectralReconstruction) {
  FockBasis b(Torus(2, 2));
  Matrix H = hb::hamiltonian({.t = 0.4, .U = 1.0, .W = 0.5, .mu = 0.8}, b);
  auto s = diagonalize(H);
  Matrix R = s.vectors * s.values.asDiagonal() * s.vectors.transpose();
  EXPECT_LE((R - H).cwiseAbs().maxCoeff(), 1e-8 * H.cwiseAbs().maxCoeff());
}

TEST(TraceExp, MonotoneInBetaForNonNegativeH) {
  FockBasis b(Torus(2, 2));
  auto s = diagonalize(hb::hamiltonian({.t = 0.4, .U = 1.0, .W = 0.5, .mu = 0.8}, b));
  Vector shifted = s.values.array() - s.values.minCoeff();
  double prev = 1e300;
  for (double beta = 0.1; beta < 5; beta += 0.1) {
    double z = trace_exp(shifted, beta, 4).Z;
    EXPECT_LT(z, prev);
    prev = z;
  }
}

TEST(TraceExp, FreeEnergyConcaveInCoupling) {
  FockBasis b(Torus(2, 2));
  Matrix H = hb::hamiltonian({.t = 0.4, .U = 1.0, .W = 0.5, .mu = 0.8}, b);
  std::mt19937 rng(5);
  std::normal_distribution<double> g;
  Matrix K(256, 256);
  for (int i = 0; i < 256; ++i)
    for (int j = 0; j <= i; ++j) K(i, j) = K(j, i) = g(rng) * 0.01;
  const double beta = 1.5, eps = 1e-3;
  for (double eta : {-0.5, 0.0, 0.7}) {
    auto f = [&](double e) { return trace_exp(diagonalize(H + e * K), beta, 4).free_energy_per_site; };
    EXPECT_LE(f(eta + eps) - 2 * f(eta) + f(eta - eps), 1e-12);
  }
}

TEST(Gibbs, IdentityAndClassicalAverages) {
  hb::Params p{.t = 0, .U = 1.4, .W = 0.9, .mu = -3.0};
  Torus t(2, 2);
  FockBasis b(t);
  auto s = diagonalize(hb::hamiltonian(p, b));
  const double beta = 2.0;
  EXPECT_NEAR(gibbs_expectation(s, Matrix::Identity(256, 256), beta), 1.0, 1e-12);
  // Classical average of n_0 by enumeration.
  auto V = hb::classical_block(p);
  double z = 0, acc = 0;
  for (std::uint64_t n = 0; n < 256; ++n) {
    auto w = b.configuration(n);
    double weight = std::exp(-beta * total_energy(V, t, w));
    z += weight;
    acc += weight * hb::kCharge[w[0]];
  }
  Matrix n0 = number_operator(b, 0, Spin::Up) + number_operator(b, 0, Spin::Down);
  double got = gibbs_expectation(s, n0, beta);
  EXPECT_NEAR(got / (acc / z) - 1, 0.0, 1e-12);
  // Deep in the empty phase the single-site closed form bounds the density.
  const double single = (2 * std::exp(beta * p.mu) + 2 * std::exp(2 * beta * p.mu)) /
                        (1 + 2 * std::exp(beta * p.mu) + std::exp(2 * beta * p.mu));
  EXPECT_LE(got, 1.01 * single);
  auto diag = gibbs_expectations_diagonal(s, {n0.diagonal()}, beta);
  EXPECT_NEAR(diag[0], got, 1e-12);
}

TEST(Projector, Laws) {
  Torus t(2, 2);
  FockBasis b(t);
  auto m = hb::classical_model({.U = 1, .W = 1, .mu = 0});
  std::vector<int> cls{0, 1, 1, 2};
  Matrix I = Matrix::Identity(256, 256);
  EXPECT_EQ((projector_onto_restricted(b, cls, m.motive("1"), Region::sites({})) - I).cwiseAbs().maxCoeff(), 0.0);
  // (0,2): site 0 lies on the charge-0 sublattice.
  Matrix P = projector_onto_restricted(b, cls, m.motive("(0,2)"), Region::sites({0}));
  EXPECT_EQ(P.trace(), 64.0);
  for (const auto& g : m.motives) {
    Matrix Q = projector_onto_restricted(b, cls, g, Region::sites({0, 3}));
    EXPECT_EQ((Q * Q - Q).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(hermiticity_defect(Q), 0.0);
  }
}

TEST(HoleParticle, UnitaryAndMapsVacuumToFull) {
  FockBasis b(Torus(2, 2));
  Matrix W = hole_particle_transform(b);
  EXPECT_LE((W * W.transpose() - Matrix::Identity(256, 256)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(std::abs(W(255, 0)), 1.0);
}

TEST(HoleParticle, ConjugatesCreationToSignedAnnihilation) {
  FockBasis b(Torus(2, 2));
  for (bool signed_version : {true, false}) {
    Matrix W = hole_particle_transform(b, signed_version);
    for (int x = 0; x < 4; ++x)
      for (Spin s : {Spin::Up, Spin::Down}) {
        double eps = signed_version ? sublattice_sign(b.torus(), x) : 1.0;
        Matrix lhs = W * creation_operator(b, x, s) * W.transpose();
        EXPECT_LE((lhs - eps * annihilation_operator(b, x, s)).cwiseAbs().maxCoeff(), 0.0);
      }
    Matrix T = hb::hopping_perturbation({.t = 0.6}, b);
    double sign = signed_version ? 1.0 : -1.0;
    EXPECT_LE((W * T * W.transpose() - sign * T).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(HoleParticle, SpectrumShift) {
  FockBasis b(Torus(2, 2));
  hb::Params p{.t = 0.3, .U = 1.6, .W = 0.7, .mu = 0.4};
  hb::Params q = p;
  q.mu = hb::symmetric_mu(p);
  Vector a = diagonalize(hb::hamiltonian(p, b)).values;
  Vector c = diagonalize(hb::hamiltonian(q, b)).values;
  const double shift = 4 * (-p.U - 4 * p.nu * p.W + 2 * p.mu);
  EXPECT_LE((c.array() - (a.array() + shift)).abs().maxCoeff(), 1e-8);
}

TEST(HoleParticle, DensitiesAddToTwo) {
  FockBasis b(Torus(2, 2));
  hb::Params p{.t = 0, .U = 1.6, .W = 0.7, .mu = 0.4};
  hb::Params q = p;
  q.mu = hb::symmetric_mu(p);
  Matrix n0 = number_operator(b, 0, Spin::Up) + number_operator(b, 0, Spin::Down);
  for (double beta : {0.5, 3.0}) {
    double a = gibbs_expectation(diagonalize(hb::hamiltonian(p, b)), n0, beta);
    double c = gibbs_expectation(diagonalize(hb::hamiltonian(q, b)), n0, beta);
    EXPECT_NEAR(a + c, 2.0, 1e-10);
  }
}
