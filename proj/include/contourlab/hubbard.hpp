#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <string>
#include <vector>

#include "contourlab/classical.hpp"
#include "contourlab/errors.hpp"
#include "contourlab/duhamel.hpp"
#include "contourlab/fock.hpp"

namespace contourlab::hubbard {

/// Local states in the order 0, up, down, doubly occupied.
enum LocalState : int { Empty = 0, Up = 1, Down = 2, Double = 3 };

inline constexpr std::array<int, 4> kCharge{0, 1, 1, 2};
inline const std::array<std::string, 4> kStateLabels{"0", "up", "down", "2"};

struct Params {
  double t = 0.0;
  double U = 0.0;
  double W = 1.0;
  double mu = 0.0;
  int nu = 2;
  double t_up_scale = 1.0;    // t_up = t * t_up_scale
  double t_down_scale = 1.0;  // t_down = t * t_down_scale

  void validate() const {
    for (double v : {t, U, W, mu, t_up_scale, t_down_scale})
      if (!std::isfinite(v)) throw ConfigError("Hubbard parameters must be finite");
    if (t < 0) throw ConfigError("hopping t must be >= 0");
    if (nu < 1) throw ConfigError("dimension must be >= 1");
  }
};

inline double pair_interaction(const Params& p, int qx, int qy) {
  if (qx < 0 || qx > 2 || qy < 0 || qy > 2) throw ConfigError("charge must be 0, 1 or 2");
  return p.U / (2.0 * p.nu) * ((qx == 2) + (qy == 2)) + p.W * qx * qy - p.mu / (2.0 * p.nu) * (qx + qy);
}

/// mu' = U + 4 nu W - mu.
inline double symmetric_mu(const Params& p) { return p.U + 4.0 * p.nu * p.W - p.mu; }

inline double symmetry_shift_per_pair(const Params& p) { return -p.U / p.nu - 4.0 * p.W + 2.0 * p.mu / p.nu; }

/// Classical model on a subset of the four local states.
struct ClassicalModel {
  Params params;
  std::vector<int> alphabet;  // model state index -> local state
  BlockInteraction block;
  MotivePartition partition;     // classes are the charges present in the alphabet
  std::vector<int> class_charge;  // class -> charge
  std::vector<Motive> motives;    // standard motives whose charges are available

  int charge_of_state(int s) const { return kCharge[alphabet[s]]; }
  int class_of_charge(int q) const {
    for (std::size_t c = 0; c < class_charge.size(); ++c)
      if (class_charge[c] == q) return static_cast<int>(c);
    return -1;
  }
  const Motive& motive(const std::string& name) const {
    for (const auto& m : motives)
      if (m.name == name) return m;
    throw ConfigError("unknown motive '" + name + "'");
  }
};

/// Unit-cube block term. Parameters are ordered (U, W, mu).
inline BlockInteraction classical_block(const Params& p, const std::vector<int>& alphabet = {0, 1, 2, 3}) {
  p.validate();
  const int nu = p.nu;
  auto offsets = unit_cube_block(nu);
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < static_cast<int>(offsets.size()); ++a)
    for (int b = a + 1; b < static_cast<int>(offsets.size()); ++b) {
      int diff = 0;
      for (int d = 0; d < nu; ++d) diff += std::abs(offsets[a][d] - offsets[b][d]);
      if (diff == 1) pairs.emplace_back(a, b);
    }
  std::vector<int> charge(alphabet.size());
  for (std::size_t s = 0; s < alphabet.size(); ++s) {
    if (alphabet[s] < 0 || alphabet[s] > 3) throw ConfigError("Hubbard local state out of range");
    charge[s] = kCharge[alphabet[s]];
  }
  const double cube = std::ldexp(1.0, nu), half = std::ldexp(1.0, nu - 1);

  // Coefficients of U, W, mu for a local pattern.
  auto coeffs = [charge, pairs, cube, half](std::span<const int> local) {
    double nd = 0, qq = 0, qs = 0;
    for (int s : local) {
      nd += charge[s] == 2;
      qs += charge[s];
    }
    for (auto [a, b] : pairs) qq += charge[local[a]] * charge[local[b]];
    return std::array<double, 3>{nd / cube, qq / half, -qs / cube};
  };

  BlockInteraction V;
  V.num_states = static_cast<int>(alphabet.size());
  V.block = offsets;
  V.period = std::vector<int>(nu, 1);
  V.param_names = {"U", "W", "mu"};
  V.params = {p.U, p.W, p.mu};
  V.phi = [coeffs](std::span<const int>, std::span<const int> local, std::span<const double> par) {
    auto c = coeffs(local);
    return c[0] * par[0] + c[1] * par[1] + c[2] * par[2];
  };
  V.dphi = [coeffs](std::span<const int>, std::span<const int> local, std::span<const double>, std::span<double> out) {
    auto c = coeffs(local);
    for (int j = 0; j < 3; ++j) out[j] = c[j];
  };
  return V;
}

/// Chessboard motive with charge a on even sites and b on odd sites.
inline Motive chessboard(int nu, int class_even, int class_odd, std::string name) {
  std::vector<int> period(nu, 2), pattern(1 << nu);
  for (int k = 0; k < (1 << nu); ++k) pattern[k] = std::popcount(static_cast<unsigned>(k)) % 2 == 0 ? class_even : class_odd;
  return {std::move(name), period, pattern};
}

inline Motive uniform_motive(int nu, int cls, std::string name) { return {std::move(name), std::vector<int>(nu, 1), {cls}}; }

/// Family names of the six standard motives.
inline const std::vector<std::string>& motive_families() {
  static const std::vector<std::string> f{"0", "1", "2", "(0,1)", "(0,2)", "(1,2)"};
  return f;
}

/// Family of a concrete motive name: "(1,0)" belongs to "(0,1)".
inline std::string family_of(const std::string& name) {
  if (name.size() == 5 && name[0] == '(' && name[2] == ',' && name[1] > name[3])
    return std::string("(") + name[3] + "," + name[1] + ")";
  return name;
}

inline ClassicalModel classical_model(const Params& p, std::vector<int> alphabet = {0, 1, 2, 3}) {
  ClassicalModel m;
  m.params = p;
  m.alphabet = alphabet;
  m.block = classical_block(p, alphabet);
  std::array<int, 3> present{0, 0, 0};
  for (int s : alphabet) present[kCharge[s]] = 1;
  for (int q = 0; q < 3; ++q)
    if (present[q]) m.class_charge.push_back(q);
  std::vector<int> cls(alphabet.size());
  for (std::size_t s = 0; s < alphabet.size(); ++s) cls[s] = m.class_of_charge(kCharge[alphabet[s]]);
  m.partition = MotivePartition(static_cast<int>(m.class_charge.size()), cls);
  for (int q = 0; q < 3; ++q)
    if (present[q]) m.motives.push_back(uniform_motive(p.nu, m.class_of_charge(q), std::to_string(q)));
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      if (present[a] && present[b]) {
        std::string ab = "(" + std::to_string(a) + "," + std::to_string(b) + ")";
        std::string ba = "(" + std::to_string(b) + "," + std::to_string(a) + ")";
        m.motives.push_back(chessboard(p.nu, m.class_of_charge(a), m.class_of_charge(b), ab));
        m.motives.push_back(chessboard(p.nu, m.class_of_charge(b), m.class_of_charge(a), ba));
      }
  return m;
}

/// Zero-temperature per-site energy of a motive family.
inline double family_energy(const Params& p, const std::string& family) {
  const double nu = p.nu, U = p.U, W = p.W, mu = p.mu;
  if (family == "0") return 0.0;
  if (family == "1") return nu * W - mu;
  if (family == "2") return U + 4 * nu * W - 2 * mu;
  if (family == "(0,1)") return -mu / 2;
  if (family == "(0,2)") return U / 2 - mu;
  if (family == "(1,2)") return (U + 4 * nu * W - 3 * mu) / 2;
  throw ConfigError("unknown motive family '" + family + "'");
}

/// Restricted free energy per site of a motive family, in closed form.
inline double family_free_energy(const Params& p, const std::string& family, double beta) {
  double e = family_energy(p, family);
  if (family == "1") return e - std::log(2.0) / beta;
  if (family == "(0,1)" || family == "(1,2)") return e - std::log(2.0) / (2 * beta);
  return e;
}

/// Derivatives of family_energy with respect to (U, W, mu).
inline std::array<double, 3> family_energy_gradient(const Params& p, const std::string& family) {
  const double nu = p.nu;
  if (family == "0") return {0, 0, 0};
  if (family == "1") return {0, nu, -1};
  if (family == "2") return {1, 4 * nu, -2};
  if (family == "(0,1)") return {0, 0, -0.5};
  if (family == "(0,2)") return {0.5, 0, -1};
  if (family == "(1,2)") return {0.5, 2 * nu, -1.5};
  throw ConfigError("unknown motive family '" + family + "'");
}

/// Charge reflection q -> 2 - q on family names.
inline std::string reflected_family(const std::string& family) {
  if (family == "0") return "2";
  if (family == "2") return "0";
  if (family == "1") return "1";
  if (family == "(0,1)") return "(1,2)";
  if (family == "(1,2)") return "(0,1)";
  if (family == "(0,2)") return "(0,2)";
  throw ConfigError("unknown motive family '" + family + "'");
}

/// One bond (x, x + e_d) per site and direction; on an extent-2 direction both
/// bonds join the same pair of sites.
inline std::vector<std::pair<int, int>> bonds(const Torus& t) {
  std::vector<std::pair<int, int>> out;
  for (int x = 0; x < t.site_count(); ++x)
    for (int d = 0; d < t.dimension(); ++d) out.emplace_back(x, t.shifted(x, d, 1));
  return out;
}

inline std::vector<Hop> hopping_terms(const Params& p, const Torus& t) {
  p.validate();
  std::vector<Hop> hops;
  if (p.t == 0.0) return hops;
  const double amp[2] = {-p.t * p.t_up_scale, -p.t * p.t_down_scale};
  for (auto [x, y] : bonds(t))
    for (Spin s : {Spin::Up, Spin::Down}) {
      const double a = amp[static_cast<int>(s)];
      if (a == 0.0) continue;
      hops.push_back({FockBasis::mode(y, s), FockBasis::mode(x, s), a});
      hops.push_back({FockBasis::mode(x, s), FockBasis::mode(y, s), a});
    }
  return hops;
}

inline Matrix hopping_perturbation(const Params& p, const FockBasis& b) {
  const auto dim = b.dimension();
  Matrix T = Matrix::Zero(dim, dim);
  for (const auto& h : hopping_terms(p, b.torus()))
    for (std::int64_t n = 0; n < dim; ++n) {
      std::uint64_t m;
      double sign;
      if (apply_hop(static_cast<std::uint64_t>(n), h.from_mode, h.to_mode, m, sign))
        T(static_cast<Eigen::Index>(m), n) += h.amplitude * sign;
    }
  return T;
}

inline Matrix hamiltonian(const Params& p, const FockBasis& b) {
  if (p.nu != b.torus().dimension()) throw ConfigError("parameter dimension differs from torus dimension");
  return assemble_hamiltonian(classical_diagonal(b, classical_block(p)), hopping_perturbation(p, b));
}

/// Diagonal classical energies plus hops, for the expansion routines.
inline QuantumModel quantum_model(const Params& p, const Torus& t) {
  FockBasis b(t);
  if (p.nu != t.dimension()) throw ConfigError("parameter dimension differs from torus dimension");
  Matrix V = classical_diagonal(b, classical_block(p));
  return {b, V.diagonal(), hopping_terms(p, t)};
}

}  // namespace contourlab::hubbard
