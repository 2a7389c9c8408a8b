#include <gtest/gtest.h>

#include <cmath>

#include "contourlab/phasediag.hpp"
#include "contourlab/toy.hpp"

using namespace contourlab;
namespace hb = contourlab::hubbard;

namespace {

ContourModel toy_model(Torus t, double J, double h) {
  auto m = toy::two_state(t.dimension(), J, h);
  return ContourModel(std::move(t), m.block, m.partition, m.motives);
}

double brute_force_free_energy(const ContourModel& M, double beta) {
  const int n = M.torus().site_count();
  Configuration w(n, 0);
  std::vector<double> es;
  while (true) {
    es.push_back(total_energy(M.interaction(), M.torus(), w));
    int k = 0;
    while (k < n && ++w[k] == M.num_states()) w[k++] = 0;
    if (k == n) break;
  }
  double emin = *std::min_element(es.begin(), es.end()), acc = 0;
  for (double e : es) acc += std::exp(-beta * (e - emin));
  return (emin - std::log(acc) / beta) / n;
}

const Axis kU{"u", -4.0, 12.0, 400};
const Axis kM{"m", -6.0, 18.0, 400};

}  // namespace

TEST(Metastable, ZeroOrderIsRestrictedFreeEnergy) {
  hb::Params p{.U = 1.7, .W = 0.8, .mu = 0.6};
  auto cm = hb::classical_model(p);
  ContourModel M(Torus(2, 4, 2), cm.block, cm.partition, cm.motives);
  const double beta = 3.0;
  auto set = metastable_free_energies(M, beta, 0);
  for (std::size_t d = 0; d < set.names.size(); ++d) {
    EXPECT_EQ(set.f[d], set.h[d]);
    EXPECT_NEAR(set.f[d], hb::family_free_energy(p, hb::family_of(set.names[d]), beta), 1e-12) << set.names[d];
  }
}

TEST(Metastable, SymmetricToyHasEqualFreeEnergies) {
  auto M = toy_model(Torus(2, 10), 1.0, 0.0);
  auto set = metastable_free_energies(M, 1.2, 16);
  EXPECT_FALSE(set.refused);
  EXPECT_LT(set.correction[0], 0.0);
  EXPECT_EQ(set.f[0], set.f[1]);
}

TEST(Metastable, CorrectionsApproachBruteForce) {
  const double beta = 1.0, J = 1.0, h = 0.5;
  auto host = toy_model(Torus(2, 10), J, h);
  auto small = toy_model(Torus(2, 4), J, h);
  const double exact = brute_force_free_energy(small, beta);
  auto f0 = metastable_free_energies(host, beta, 0);
  auto f1 = metastable_free_energies(host, beta, 16);
  const double fmin0 = std::min(f0.f[0], f0.f[1]), fmin1 = std::min(f1.f[0], f1.f[1]);
  EXPECT_LT(std::abs(fmin1 - exact), std::abs(fmin0 - exact) / 5);
  // At beta = 1 the decay rate is too small for the animal-count bound.
  EXPECT_TRUE(std::isinf(f1.remainder[0]));
  auto cold = metastable_free_energies(host, 16.0, 16);
  EXPECT_TRUE(std::isfinite(cold.remainder[0]));
  EXPECT_LT(cold.remainder[0], 1e-9);
}

TEST(Metastable, NoGapRefusesCorrections) {
  auto M = toy_model(Torus(2, 10), 0.0, 0.0);
  auto set = metastable_free_energies(M, 1.0, 16);
  EXPECT_TRUE(set.refused);
  EXPECT_EQ(set.f, set.h);
}

TEST(Scan, ZeroTemperatureDomainCounts) {
  auto pos = hb::scan_families(1.0, 2, INFINITY, kU, kM);
  auto neg = hb::scan_families(-1.0, 2, INFINITY, kU, kM);
  EXPECT_EQ(phase_domain_count(diagram_domains(pos)), 6);
  EXPECT_EQ(phase_domain_count(diagram_domains(neg)), 3);
  EXPECT_EQ(hb::boundary_line_violations(pos, 1.0, 2, INFINITY), 0);
  EXPECT_EQ(hb::boundary_line_violations(neg, -1.0, 2, INFINITY), 0);
}

TEST(Scan, KnownBoundaryPositions) {
  // M_0 / M_(0,2) at mu = U/2 and M_(0,2) / M_2 at mu = U/2 + 4 nu W, in units of nu W.
  auto f = hb::family_scan_function(1.0, 2, INFINITY);
  auto argmin = [&](double u, double m) {
    auto v = f(u, m);
    return hb::motive_families()[std::min_element(v.begin(), v.end()) - v.begin()];
  };
  EXPECT_EQ(argmin(-2.0, -1.0 - 1e-3), "0");
  EXPECT_EQ(argmin(-2.0, -1.0 + 1e-3), "(0,2)");
  EXPECT_EQ(argmin(-2.0, 3.0 - 1e-3), "(0,2)");
  EXPECT_EQ(argmin(-2.0, 3.0 + 1e-3), "2");
}

TEST(Scan, MatchesPeriodicPatternSearch) {
  // Every pattern of period <= 2 lives on the 2x2 torus; bond counting there
  // matches the infinite lattice.
  Torus t(2, 2);
  Axis u{"u", -4, 12, 33}, m{"m", -6, 18, 33};
  for (double W : {1.0, -1.0}) {
    auto g = hb::scan_families(W, 2, INFINITY, u, m);
    for (int j = 0; j < m.n; ++j)
      for (int i = 0; i < u.n; ++i) {
        hb::Params p{.U = u.at(i) * 2 * std::abs(W), .W = W, .mu = m.at(j) * 2 * std::abs(W)};
        auto V = hb::classical_block(p);
        double best = INFINITY;
        for (int code = 0; code < 256; ++code) {
          Configuration w{code & 3, (code >> 2) & 3, (code >> 4) & 3, (code >> 6) & 3};
          best = std::min(best, total_energy(V, t, w) / 4);
        }
        EXPECT_NEAR(g.value[g.index(i, j)] * 2 * std::abs(W), best, 1e-12);
      }
  }
}

TEST(Scan, GaugeShiftKeepsLabels) {
  auto f = hb::family_scan_function(1.0, 2, INFINITY);
  auto shifted = [&](double u, double m) {
    auto v = f(u, m);
    for (auto& x : v) x += 1.0;
    return v;
  };
  Axis u{"u", -4, 12, 101}, m{"m", -6, 18, 101};
  auto a = scan_diagram(hb::motive_families(), u, m, f);
  auto b = scan_diagram(hb::motive_families(), u, m, shifted);
  EXPECT_EQ(a.argmin, b.argmin);
}

TEST(Scan, ParallelScanIsIdentical) {
  auto a = hb::scan_families(1.0, 2, 5.0, kU, kM, 1e-9, 1);
  auto b = hb::scan_families(1.0, 2, 5.0, kU, kM, 1e-9, 4);
  EXPECT_EQ(a.argmin, b.argmin);
  EXPECT_EQ(a.value, b.value);
}

TEST(Scan, CellBudget) {
  Axis big{"u", 0, 1, 4000};
  EXPECT_THROW(hb::scan_families(1.0, 2, INFINITY, big, big), BudgetExceeded);
}

TEST(Scan, HoleParticleReflection) {
  // Equal steps in u and m keep reflected points on the grid.
  Axis u{"u", -4, 12, 401}, m{"m", -6, 18, 601};
  for (double beta : {double(INFINITY), 3.0}) {
    auto g = hb::scan_families(1.0, 2, beta, u, m);
    auto [compared, bad] = hb::reflection_mismatches(g, 1.0);
    EXPECT_GT(compared, 100000);
    EXPECT_EQ(bad, 0);
  }
}

TEST(Scan, EntropyShiftOfTheM1Boundary) {
  const double W = 1.0;
  const int nu = 2;
  for (double beta : {2.0, 5.0, 20.0}) {
    const double U = hb::m1_m02_boundary(W, nu, beta);
    // Solving h_1 = h_(0,2) with h_1 = nu W - mu - log2/beta, h_(0,2) = U/2 - mu.
    EXPECT_NEAR(U, 2 * nu * W - 2 * std::log(2.0) / beta, 1e-12);
    // The segment u = 2, m in [2, 4] lies in M_1.
    auto f = hb::family_scan_function(W, nu, beta);
    for (double m = 2.0; m <= 4.0; m += 0.25) {
      auto v = f(2.0, m);
      EXPECT_EQ(std::min_element(v.begin(), v.end()) - v.begin(), 1) << m;
    }
  }
}

TEST(GibbsRule, ThreeGenericPlanes) {
  Axis x{"x", -1, 1, 201}, y{"y", -1, 1, 201};
  auto f = [](double a, double b) { return std::vector<double>{0.0, a + 0.1, b - 0.2 + 0.3 * a}; };
  auto g = scan_diagram({"A", "B", "C"}, x, y, f);
  auto rep = gibbs_rule_check(g, 3);
  EXPECT_TRUE(rep.ok);
  EXPECT_EQ(rep.phase_domains, 3);
  EXPECT_EQ(rep.lines.size(), 3u);
  for (auto& [k, n] : rep.lines) EXPECT_EQ(n, 1) << k;
  EXPECT_EQ(rep.max_coexistence, 3);
  EXPECT_EQ(rep.maximal_points, 1);
}

TEST(GibbsRule, DegenerateFamilyIsReported) {
  Axis x{"x", -1, 1, 51}, y{"y", -1, 1, 51};
  auto f = [](double a, double b) { return std::vector<double>{a, a, b}; };
  auto rep = gibbs_rule_check(scan_diagram({"A", "A'", "C"}, x, y, f), 3);
  EXPECT_FALSE(rep.ok);
}

TEST(GibbsRule, HubbardRepulsiveStructure) {
  // Triple points at (u, m) = (0,0), (2,2), (2,4), (0,4); nine interfaces.
  auto g = hb::scan_families(1.0, 2, INFINITY, kU, kM);
  auto rep = gibbs_rule_check(g, 6);
  EXPECT_TRUE(rep.ok);
  EXPECT_EQ(rep.max_coexistence, 3);
  EXPECT_EQ(rep.maximal_points, 4);
  EXPECT_EQ(rep.lines.size(), 9u);
  for (auto& [k, n] : rep.lines) EXPECT_EQ(n, 1) << k;
}

TEST(DerivativeMatrix, HubbardIntegerEntries) {
  hb::Params p{.U = 4, .W = 1, .mu = 2};
  auto m = hb::classical_model(p);
  std::vector<Motive> D{m.motive("0"), m.motive("1"), m.motive("2")};
  auto rep = derivative_matrix(m.block, m.partition, D, {0, 2}, 5.0);
  Eigen::Matrix2d expect;
  expect << -1, 2, -1, 1;
  EXPECT_LE((rep.e_version.matrix - expect).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_FALSE(rep.e_version.singular);
  EXPECT_TRUE(std::isfinite(rep.e_version.condition));
  EXPECT_FALSE(rep.h_version.singular);
}

TEST(DerivativeMatrix, IdenticalMotivesAreSingular) {
  auto rep = derivative_matrix({{1.0, 2.0}, {1.0, 2.0}}, {0});
  EXPECT_TRUE(rep.singular);
  EXPECT_TRUE(std::isinf(rep.condition));
}

TEST(DerivativeMatrix, CommonShiftLeavesConditionNumber) {
  std::vector<std::vector<double>> g{{0, 0, 0}, {0, 2, -1}, {1, 8, -2}}, s = g;
  for (auto& r : s)
    for (std::size_t k = 0; k < r.size(); ++k) r[k] += 0.3 * (k + 1);
  EXPECT_NEAR(derivative_matrix(g, {0, 2}).condition, derivative_matrix(s, {0, 2}).condition, 1e-12);
}

TEST(StateCheck, ZeroHoppingErrorDecreasesWithBeta) {
  hb::Params p{.t = 0.0, .U = 4, .W = 1, .mu = -1};
  double prev = INFINITY;
  for (double beta : {5.0, 10.0, 20.0}) {
    auto rep = single_phase_state_check(p, Torus(2, 2), beta, "0");
    EXPECT_LT(rep.epsilon, prev);
    prev = rep.epsilon;
  }
}

TEST(StateCheck, DeepEmptyPhaseDensity) {
  // Single-site Gibbs at t = 0: adding a particle costs at least -mu.
  hb::Params p{.t = 0.0, .U = 4, .W = 1, .mu = -4};
  for (double beta : {1.0, 2.0}) {
    auto rep = single_phase_state_check(p, Torus(2, 2), beta, "0");
    for (double n : rep.density) EXPECT_LE(n, 4 * std::exp(-beta * 4.0));
  }
  // With hopping, one particle gains at most 8t of kinetic energy on the 2x2 torus.
  const double t = 0.05;
  auto hop = single_phase_state_check({.t = t, .U = 4, .W = 1, .mu = -4}, Torus(2, 2), 2.0, "0");
  for (double n : hop.density) EXPECT_LE(n, 4 * std::exp(-2.0 * (4.0 - 8 * t)));
}

TEST(StateCheck, HoleParticlePairsAgree) {
  hb::Params p{.t = 0.005, .U = 4, .W = 1, .mu = -4};
  hb::Params q = p;
  q.mu = hb::symmetric_mu(p);
  auto a = single_phase_state_check(p, Torus(2, 2), 20.0, "0");
  auto b = single_phase_state_check(q, Torus(2, 2), 20.0, "2");
  EXPECT_NEAR(a.epsilon, b.epsilon, 1e-10);
  EXPECT_NEAR(a.density_deviation, b.density_deviation, 1e-10);
}

TEST(StateCheck, DeepPhasesAtIntermediateTemperature) {
  const double beta = 20.0;
  struct Point {
    double U, mu;
    const char* motive;
  };
  for (auto pt : {Point{4, -4, "0"}, Point{12, 10, "1"}, Point{4, 16, "2"}}) {
    auto rep = single_phase_state_check({.t = 0.1 / beta, .U = pt.U, .W = 1, .mu = pt.mu}, Torus(2, 2), beta, pt.motive);
    EXPECT_LE(rep.epsilon, 0.05) << pt.motive;
    EXPECT_LE(rep.density_deviation, 0.05) << pt.motive;
  }
}
