#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "contourlab/classical.hpp"
#include "contourlab/errors.hpp"
#include "contourlab/lattice.hpp"

namespace contourlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr std::int64_t kDenseDimensionCap = 1 << 16;

enum class Spin : int { Up = 0, Down = 1 };

/// Occupation basis for spin-1/2 fermions. Mode 2x + sigma; basis index bit
/// 2x is (x, up), bit 2x + 1 is (x, down). The local state at x is therefore
/// (index >> 2x) & 3 in the order 0, up, down, doubly occupied.
class FockBasis {
 public:
  explicit FockBasis(Torus t) : torus_(std::move(t)) {
    const int n = torus_.site_count();
    if (2 * n >= 63 || (std::int64_t{1} << (2 * n)) > kDenseDimensionCap)
      throw BudgetExceeded("Fock dimension 4^" + std::to_string(n) + " exceeds the dense cap of 65536");
    dim_ = std::int64_t{1} << (2 * n);
  }

  const Torus& torus() const { return torus_; }
  int site_count() const { return torus_.site_count(); }
  int mode_count() const { return 2 * torus_.site_count(); }
  std::int64_t dimension() const { return dim_; }
  static int mode(int site, Spin s) { return 2 * site + static_cast<int>(s); }

  static int local_state(std::uint64_t index, int site) { return static_cast<int>((index >> (2 * site)) & 3u); }

  Configuration configuration(std::uint64_t index) const {
    Configuration w(site_count());
    for (int x = 0; x < site_count(); ++x) w[x] = local_state(index, x);
    return w;
  }

  std::uint64_t index_of(const Configuration& w) const {
    if (static_cast<int>(w.size()) != site_count()) throw ConfigError("configuration size differs from site count");
    std::uint64_t idx = 0;
    for (int x = site_count() - 1; x >= 0; --x) {
      if (w[x] < 0 || w[x] > 3) throw ConfigError("local state out of range");
      idx = (idx << 2) | static_cast<std::uint64_t>(w[x]);
    }
    return idx;
  }

  bool operator==(const FockBasis& o) const { return torus_ == o.torus_; }

 private:
  Torus torus_;
  std::int64_t dim_ = 0;
};

namespace detail {
/// (-1)^{number of occupied modes below k}.
inline double jw_sign(std::uint64_t state, int k) {
  return std::popcount(state & ((std::uint64_t{1} << k) - 1)) % 2 ? -1.0 : 1.0;
}
}  // namespace detail

/// Directed hop: amplitude * c+_{to} c_{from}.
struct Hop {
  int from_mode;
  int to_mode;
  double amplitude;
};

/// Applies c+_{to} c_{from} to a basis state; returns false when the result vanishes.
inline bool apply_hop(std::uint64_t state, int from, int to, std::uint64_t& out, double& sign) {
  if (!(state >> from & 1u)) return false;
  sign = detail::jw_sign(state, from);
  std::uint64_t mid = state ^ (std::uint64_t{1} << from);
  if (mid >> to & 1u) return false;
  sign *= detail::jw_sign(mid, to);
  out = mid | (std::uint64_t{1} << to);
  return true;
}

inline Matrix creation_operator(const FockBasis& b, int site, Spin s) {
  const int k = FockBasis::mode(site, s);
  const auto dim = b.dimension();
  Matrix c = Matrix::Zero(dim, dim);
  for (std::int64_t n = 0; n < dim; ++n) {
    auto u = static_cast<std::uint64_t>(n);
    if (u >> k & 1u) continue;
    c(static_cast<Eigen::Index>(u | (std::uint64_t{1} << k)), n) = detail::jw_sign(u, k);
  }
  return c;
}

inline Matrix annihilation_operator(const FockBasis& b, int site, Spin s) {
  return creation_operator(b, site, s).transpose();
}

inline Matrix number_operator(const FockBasis& b, int site, Spin s) {
  const int k = FockBasis::mode(site, s);
  Vector d(b.dimension());
  for (std::int64_t n = 0; n < b.dimension(); ++n) d(n) = static_cast<double>(static_cast<std::uint64_t>(n) >> k & 1u);
  return d.asDiagonal();
}

/// Diagonal operator with entries f(configuration).
template <class F>
Matrix diagonal_operator(const FockBasis& b, F&& f) {
  Vector d(b.dimension());
  for (std::int64_t n = 0; n < b.dimension(); ++n) d(n) = f(b.configuration(static_cast<std::uint64_t>(n)));
  return d.asDiagonal();
}

/// Classical part V as a diagonal operator; V must act on the four local states.
inline Matrix classical_diagonal(const FockBasis& b, const BlockInteraction& V) {
  if (V.num_states != 4) throw ConfigError("classical diagonal needs the full four-state alphabet");
  require_compatible(V, b.torus());
  return diagonal_operator(b, [&](const Configuration& w) {
    double e = 0.0;
    for (int x = 0; x < b.site_count(); ++x) e += block_value(V, b.torus(), x, w);
    return e;
  });
}

inline double hermiticity_defect(const Matrix& m) {
  return m.rows() ? (m - m.transpose()).cwiseAbs().maxCoeff() : 0.0;
}

inline Matrix assemble_hamiltonian(const Matrix& V, const Matrix& T) {
  if (V.rows() != T.rows() || V.cols() != T.cols() || V.rows() != V.cols())
    throw ConfigError("operator dimensions do not match");
  Matrix off = V;
  off.diagonal().setZero();
  if (off.cwiseAbs().maxCoeff() > 0.0) throw ConfigError("classical part must be diagonal");
  if (hermiticity_defect(T) > 1e-12) throw ConfigError("perturbation must be self-adjoint");
  return V + T;
}

struct SpectralDecomposition {
  Vector values;   // ascending
  Matrix vectors;  // columns are eigenvectors
};

inline SpectralDecomposition diagonalize(const Matrix& H) {
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  if (hermiticity_defect(H) > 1e-12 * scale) throw ConfigError("matrix is not self-adjoint");
  Eigen::SelfAdjointEigenSolver<Matrix> es(H);
  if (es.info() != Eigen::Success) throw StructuralError("eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

struct TraceResult {
  double Z;
  double log_Z;
  double free_energy_per_site;
};

inline TraceResult trace_exp(const Vector& eigenvalues, double beta, int sites) {
  if (!(beta > 0)) throw ConfigError("beta must be positive");
  const double lmin = eigenvalues.minCoeff();
  double acc = 0.0;
  for (Eigen::Index k = 0; k < eigenvalues.size(); ++k) acc += std::exp(-beta * (eigenvalues(k) - lmin));
  const double logz = -beta * lmin + std::log(acc);
  return {std::exp(logz), logz, -logz / (beta * sites)};
}

inline TraceResult trace_exp(const SpectralDecomposition& s, double beta, int sites) {
  return trace_exp(s.values, beta, sites);
}

/// Tr(e^{-beta H} K) / Tr(e^{-beta H}).
inline double gibbs_expectation(const SpectralDecomposition& s, const Matrix& K, double beta) {
  if (K.rows() != s.vectors.rows() || K.cols() != s.vectors.rows()) throw ConfigError("observable dimension mismatch");
  if (!(beta > 0)) throw ConfigError("beta must be positive");
  const double lmin = s.values.minCoeff();
  Vector w(s.values.size());
  for (Eigen::Index k = 0; k < w.size(); ++k) w(k) = std::exp(-beta * (s.values(k) - lmin));
  // Diagonal of Q^T K Q.
  Vector diag = (s.vectors.transpose() * K * s.vectors).diagonal();
  return w.dot(diag) / w.sum();
}

/// Gibbs expectations of a family of diagonal observables, given by their diagonals.
inline std::vector<double> gibbs_expectations_diagonal(const SpectralDecomposition& s, const std::vector<Vector>& diags,
                                                       double beta) {
  const double lmin = s.values.minCoeff();
  Vector w(s.values.size());
  for (Eigen::Index k = 0; k < w.size(); ++k) w(k) = std::exp(-beta * (s.values(k) - lmin));
  // Basis-state probabilities p_n = sum_k w_k Q_{nk}^2 / sum w.
  Vector p = s.vectors.cwiseAbs2() * w / w.sum();
  std::vector<double> out;
  for (const auto& d : diags) out.push_back(p.dot(d));
  return out;
}

/// Diagonal 0/1 projection onto basis states whose restriction to `region`
/// (a site region) lies in motive g. `class_of_local` maps each of the four
/// local states to a motive class, or -1 for states outside the model.
inline Matrix projector_onto_restricted(const FockBasis& b, const std::vector<int>& class_of_local, const Motive& g,
                                        const Region& region) {
  if (region.kind != RegionKind::Sites) throw ConfigError("projector region must be site-level");
  if (!g.compatible_with(b.torus())) throw IncompatibleConfiguration("motive period does not fit the torus");
  std::vector<int> want(region.members.size());
  for (std::size_t i = 0; i < region.members.size(); ++i) want[i] = g.class_at(b.torus(), region.members[i]);
  return diagonal_operator(b, [&](const Configuration& w) {
    for (std::size_t i = 0; i < region.members.size(); ++i)
      if (class_of_local[w[region.members[i]]] != want[i]) return 0.0;
    return 1.0;
  });
}

/// Parity (-1)^{x_0 + ... + x_{nu-1}} of a site; requires even extents.
inline double sublattice_sign(const Torus& t, int site) {
  auto c = t.coords(site);
  int s = 0;
  for (int v : c) s += v;
  return s % 2 ? -1.0 : 1.0;
}

/// Unitary W with W c+_{x s} W^{-1} = eps_x c_{x s}, W|vac> = |full>.
/// eps_x is the sublattice sign when `sublattice_sign` is set and 1 otherwise;
/// the signed version leaves nearest-neighbor hopping invariant.
inline Matrix hole_particle_transform(const FockBasis& b, bool with_sublattice_sign = true) {
  const Torus& t = b.torus();
  if (with_sublattice_sign)
    for (int d = 0; d < t.dimension(); ++d)
      if (t.extent(d) % 2) throw ConfigError("sublattice sign needs even extents");
  const auto dim = b.dimension();
  const std::uint64_t full = static_cast<std::uint64_t>(dim) - 1;
  Matrix W = Matrix::Zero(dim, dim);
  for (std::int64_t n = 0; n < dim; ++n) {
    auto occ = static_cast<std::uint64_t>(n);
    std::uint64_t m = full;
    double sign = 1.0;
    // W|n> = prod eps * c_{k1} ... c_{kr} |full>, rightmost (largest k) first.
    for (int k = b.mode_count() - 1; k >= 0; --k) {
      if (!(occ >> k & 1u)) continue;
      sign *= detail::jw_sign(m, k);
      m ^= std::uint64_t{1} << k;
      if (with_sublattice_sign) sign *= sublattice_sign(t, k / 2);
    }
    W(static_cast<Eigen::Index>(m), n) = sign;
  }
  return W;
}

}  // namespace contourlab
