#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "contourlab/classical.hpp"
#include "contourlab/contour.hpp"
#include "contourlab/duhamel.hpp"
#include "contourlab/fock.hpp"
#include "contourlab/hubbard.hpp"

namespace contourlab {

inline constexpr std::uint64_t kBruteForceCap = std::uint64_t{1} << 24;

/// log Z by summing every configuration of the torus.
inline double brute_force_log_Z(const BlockInteraction& V, const Torus& t, double beta) {
  const int n = t.site_count(), S = V.num_states;
  if (std::pow(static_cast<double>(S), n) > static_cast<double>(kBruteForceCap))
    throw BudgetExceeded("brute-force sum exceeds 2^24 configurations");
  Configuration w(n, 0);
  double top = -std::numeric_limits<double>::infinity(), acc = 0.0;
  while (true) {
    const double x = -beta * total_energy(V, t, w);
    if (x > top) {
      acc = acc * std::exp(top - x) + 1.0;
      top = x;
    } else {
      acc += std::exp(x - top);
    }
    int k = 0;
    while (k < n && ++w[k] == S) w[k++] = 0;
    if (k == n) break;
  }
  return top + std::log(acc);
}

/// max |spec H(mu') - spec H(mu) - |Lambda| (-U - 4 nu W + 2 mu)| with mu' the
/// hole-particle partner.
inline double hole_particle_spectrum_deviation(const hubbard::Params& p, const Torus& t) {
  FockBasis b(t);
  hubbard::Params q = p;
  q.mu = hubbard::symmetric_mu(p);
  Vector a = diagonalize(hubbard::hamiltonian(p, b)).values;
  Vector c = diagonalize(hubbard::hamiltonian(q, b)).values;
  const double shift = t.site_count() * (-p.U - 4 * p.nu * p.W + 2 * p.mu);
  return (c.array() - (a.array() + shift)).abs().maxCoeff();
}

struct PropertyResult {
  std::string name;
  double metric = 0.0;     // worst observed deviation
  double threshold = 0.0;  // passes when metric <= threshold
  bool ok = false;
};

namespace properties {

inline PropertyResult car_algebra() {
  double worst = 0.0;
  for (auto t : {Torus(std::vector{2}), Torus(2, 2)}) {
    FockBasis b(t);
    const auto dim = b.dimension();
    std::vector<Matrix> c;
    for (int x = 0; x < b.site_count(); ++x)
      for (Spin s : {Spin::Up, Spin::Down}) c.push_back(creation_operator(b, x, s));
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i; j < c.size(); ++j) {
        Matrix a = c[j].transpose();
        Matrix cc = c[i] * c[j] + c[j] * c[i];
        Matrix ac = a * c[i] + c[i] * a;
        if (i == j) ac -= Matrix::Identity(dim, dim);
        worst = std::max({worst, cc.cwiseAbs().maxCoeff(), ac.cwiseAbs().maxCoeff()});
        if (i != j) {
          Matrix a2 = c[i].transpose();
          worst = std::max(worst, (a2 * c[j] + c[j] * a2).cwiseAbs().maxCoeff());
        }
      }
  }
  return {"car_algebra", worst, 0.0, worst == 0.0};
}

inline PropertyResult simplex_shift_covariance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2, 2);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 12;
    const double s = u(rng), beta = 0.5 + trial % 5;
    std::vector<double> e(n), f(n);
    for (int i = 0; i < n; ++i) {
      e[i] = u(rng);
      f[i] = e[i] + s;
    }
    const double r = simplex_exponential_integral(f, beta) / (std::exp(-beta * s) * simplex_exponential_integral(e, beta));
    worst = std::max(worst, std::abs(r - 1.0));
  }
  return {"simplex_shift_covariance", worst, 1e-12, worst <= 1e-12};
}

/// Sweeps eps = 1e-4 .. 1e-12 through a near-confluent cluster; reports the
/// worst |v(eps) - v(0)| / (10 eps |v(0)| + 1e-15 |v(0)|), which stays <= 1
/// when there is no cancellation spike.
inline PropertyResult simplex_confluent_continuity() {
  const double beta = 2.0;
  double worst = 0.0;
  for (const auto& base : std::vector<std::vector<double>>{{0.5, 0.5, 0.5, -0.2}, {1.0, 1.0, 1.0, 1.0, 1.0}, {0.0, 0.0, 3.0}}) {
    const double v0 = simplex_exponential_integral(base, beta);
    for (double eps = 1e-4; eps >= 1e-12 * 0.999; eps /= 10) {
      std::vector<double> e = base;
      for (std::size_t i = 1; i < e.size() && e[i] == base[0]; ++i) e[i] += i * eps;
      const double v = simplex_exponential_integral(e, beta);
      worst = std::max(worst, std::abs(v - v0) / (10 * eps * std::abs(v0) + 1e-15 * std::abs(v0)));
    }
  }
  return {"simplex_confluent_continuity", worst, 1.0, worst <= 1.0};
}

inline PropertyResult restricted_free_energy_L_independence(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2, 3);
  double worst = 0.0;
  for (int trial = 0; trial < 4; ++trial) {
    hubbard::Params p{.t = 0, .U = u(rng), .W = u(rng), .mu = u(rng)};
    auto m = hubbard::classical_model(p);
    const double beta = 0.5 + trial;
    for (const auto& g : m.motives) {
      auto E = restricted_ensemble(m.block, m.partition, g);
      const double h = restricted_free_energy(E, beta);
      for (int L : {2, 4, 6}) worst = std::max(worst, std::abs(restricted_free_energy(E, Torus(2, L), beta) - h));
    }
  }
  return {"restricted_free_energy_L_independence", worst, 1e-12, worst <= 1e-12};
}

inline PropertyResult dh_dmu_finite_difference(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2, 3);
  const double step = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 4; ++trial) {
    hubbard::Params p{.t = 0, .U = u(rng), .W = u(rng), .mu = u(rng)};
    auto m = hubbard::classical_model(p);
    const double beta = 0.7 + trial;
    const int k = 2;  // parameter order (U, W, mu)
    for (const auto& g : m.motives) {
      const double analytic = restricted_free_energy_gradient(restricted_ensemble(m.block, m.partition, g), beta)[k];
      auto up = m.block.params, down = m.block.params;
      up[k] += step;
      down[k] -= step;
      const double hu = restricted_free_energy(restricted_ensemble(m.block.with_params(up), m.partition, g), beta);
      const double hd = restricted_free_energy(restricted_ensemble(m.block.with_params(down), m.partition, g), beta);
      worst = std::max(worst, std::abs((hu - hd) / (2 * step) - analytic));
    }
  }
  return {"dh_dmu_finite_difference", worst, 1e-6, worst <= 1e-6};
}

}  // namespace properties

inline std::vector<PropertyResult> run_property_suites(std::uint64_t seed) {
  return {properties::car_algebra(), properties::simplex_shift_covariance(seed), properties::simplex_confluent_continuity(),
          properties::restricted_free_energy_L_independence(seed + 1), properties::dh_dmu_finite_difference(seed + 2)};
}

}  // namespace contourlab
