#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "contourlab/errors.hpp"
#include "contourlab/fock.hpp"

namespace contourlab {

inline constexpr std::uint64_t kDefaultSequenceBudget = 100'000'000;

// ---------------------------------------------------------------------------
// Simplex integrals

/// Integral over 0 < tau_1 < ... < tau_m < beta of
/// prod_{j=1}^{m+1} exp(-(tau_j - tau_{j-1}) E_j), tau_0 = 0, tau_{m+1} = beta.
///
/// Evaluated as the (1, m+1) entry of exp(M), M upper bidiagonal with
/// diagonal -beta E_j and superdiagonal beta. M is shifted so its diagonal is
/// <= 0; then every scaled Taylor term and every squaring only combines
/// nonnegative entries, and coinciding energies need no special case.
inline double simplex_exponential_integral(std::span<const double> energies, double beta) {
  const int n = static_cast<int>(energies.size());
  if (n == 0) throw ConfigError("simplex integral needs at least one energy");
  if (!(beta >= 0)) throw ConfigError("beta must be >= 0");
  for (double e : energies)
    if (!std::isfinite(e)) throw ConfigError("energies must be finite");
  const double emin = *std::min_element(energies.begin(), energies.end());
  if (n == 1) return std::exp(-beta * energies[0]);
  if (beta == 0) return 0.0;

  // Diagonal entries d_j = -beta (E_j - emin) <= 0; superdiagonal beta.
  std::vector<double> d(n);
  double norm = beta;
  for (int j = 0; j < n; ++j) {
    d[j] = -beta * (energies[j] - emin);
    norm = std::max(norm, -d[j] + beta);
  }
  int s = 0;
  while (norm > 0.5) {
    norm *= 0.5;
    ++s;
  }
  const double scale = std::ldexp(1.0, -s);

  // A = M 2^{-s}; exp(A) for upper triangular A = D + N with N on the
  // superdiagonal. Entry (i, k) of exp(A) is the divided difference of exp
  // at a_i..a_k times (beta 2^{-s})^{k-i}, computed from the Taylor series.
  using Mat = Eigen::MatrixXd;
  Mat A = Mat::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    A(j, j) = d[j] * scale;
    if (j + 1 < n) A(j, j + 1) = beta * scale;
  }
  // Shift the scaled diagonal into [0, 0.5] so that all Taylor terms are
  // nonnegative; undo with a scalar factor.
  double amin = 0.0;
  for (int j = 0; j < n; ++j) amin = std::min(amin, A(j, j));
  Mat B = A;
  for (int j = 0; j < n; ++j) B(j, j) -= amin;
  Mat term = Mat::Identity(n, n), E = Mat::Identity(n, n);
  // ||B|| <= 1, so 40 terms past the last superdiagonal reach far below rounding.
  for (int k = 1; k < n + 40; ++k) {
    term = (term * B) / static_cast<double>(k);
    E += term;
  }
  E *= std::exp(amin);
  for (int k = 0; k < s; ++k) {
    Mat sq = E.triangularView<Eigen::Upper>() * E;
    E = sq.triangularView<Eigen::Upper>();
  }
  return std::exp(-beta * emin) * E(0, n - 1);
}

// ---------------------------------------------------------------------------
// Quantum model: diagonal classical part plus a list of hops

struct QuantumModel {
  FockBasis basis;
  Vector classical_energy;  // per basis state
  std::vector<Hop> hops;    // H = diag(classical_energy) + sum_h amplitude c+_to c_from

  int site_count() const { return basis.site_count(); }

  /// Largest total |amplitude| of hops touching a single site.
  double per_site_transition_norm() const {
    std::vector<double> acc(basis.site_count(), 0.0);
    for (const auto& h : hops) {
      acc[h.from_mode / 2] += std::abs(h.amplitude);
      if (h.to_mode / 2 != h.from_mode / 2) acc[h.to_mode / 2] += std::abs(h.amplitude);
    }
    return acc.empty() ? 0.0 : *std::max_element(acc.begin(), acc.end());
  }

  Matrix hamiltonian() const {
    Matrix H = classical_energy.asDiagonal();
    const auto dim = basis.dimension();
    for (const auto& h : hops)
      for (std::int64_t n = 0; n < dim; ++n) {
        std::uint64_t m;
        double sign;
        if (apply_hop(static_cast<std::uint64_t>(n), h.from_mode, h.to_mode, m, sign))
          H(static_cast<Eigen::Index>(m), n) += h.amplitude * sign;
      }
    return H;
  }
};

struct ExpansionResult {
  std::vector<double> order_terms;   // contribution of order m
  std::vector<double> partial_sums;  // Z_m
  std::uint64_t sequences = 0;       // retained sequences (nonzero product)
  std::uint64_t evaluations = 0;     // matrix-element evaluations
  bool converged = false;            // last retained additions below 1e-15 Z
};

/// One retained transition sequence, reported to enumeration observers.
struct SequenceRecord {
  std::uint64_t start_state;
  std::span<const int> hops;         // indices into QuantumModel::hops
  std::span<const std::uint64_t> path;  // omega^1 .. omega^m (omega^{m+1} = omega^1)
  double amplitude;                  // product of (-T) matrix elements
  double integral;                   // simplex integral
};

/// Enumerates all closed transition sequences of length <= m_max by depth
/// first search and sums their contributions. Only sequences whose every
/// matrix element is nonzero are retained.
template <std::invocable<const SequenceRecord&> Observer>
ExpansionResult expand_partition_function_enumerated(const QuantumModel& model, double beta, int m_max,
                                                     Observer&& observe,
                                                     std::uint64_t budget = kDefaultSequenceBudget) {
  if (m_max < 0) throw ConfigError("m_max must be >= 0");
  if (!(beta > 0)) throw ConfigError("beta must be positive");
  ExpansionResult res;
  res.order_terms.assign(m_max + 1, 0.0);
  const auto dim = model.basis.dimension();
  std::vector<int> hop_stack;
  std::vector<std::uint64_t> path;
  std::vector<double> energies;

  struct Frame {
    std::uint64_t state;
    double amplitude;
  };
  for (std::int64_t s0 = 0; s0 < dim; ++s0) {
    const auto start = static_cast<std::uint64_t>(s0);
    res.order_terms[0] += std::exp(-beta * model.classical_energy(s0));
    if (m_max == 0) continue;
    // Iterative DFS over hop indices.
    hop_stack.clear();
    path.assign(1, start);
    std::vector<Frame> frames{{start, 1.0}};
    std::vector<int> next_hop{0};
    while (!next_hop.empty()) {
      const int depth = static_cast<int>(next_hop.size()) - 1;  // hops applied so far
      int& h = next_hop.back();
      if (depth >= m_max || h >= static_cast<int>(model.hops.size())) {
        next_hop.pop_back();
        frames.pop_back();
        if (!hop_stack.empty()) {
          hop_stack.pop_back();
          path.pop_back();
        }
        continue;
      }
      const Hop& hop = model.hops[h];
      const int hop_index = h++;
      if (++res.evaluations > budget)
        throw BudgetExceeded("Duhamel enumeration budget exhausted at order " + std::to_string(depth + 1));
      std::uint64_t nxt;
      double sign;
      if (!apply_hop(frames.back().state, hop.from_mode, hop.to_mode, nxt, sign)) continue;
      const double amp = frames.back().amplitude * (-hop.amplitude * sign);
      hop_stack.push_back(hop_index);
      const int m = depth + 1;
      if (nxt == start) {
        energies.resize(m + 1);
        for (int j = 0; j < m; ++j) energies[j] = model.classical_energy(static_cast<Eigen::Index>(path[j]));
        energies[m] = energies[0];
        const double integral = simplex_exponential_integral(energies, beta);
        res.order_terms[m] += amp * integral;
        ++res.sequences;
        observe(SequenceRecord{start, hop_stack, path, amp, integral});
      }
      path.push_back(nxt);
      frames.push_back({nxt, amp});
      next_hop.push_back(0);
    }
  }
  double z = 0.0;
  for (double v : res.order_terms) res.partial_sums.push_back(z += v);
  return res;
}

inline ExpansionResult expand_partition_function_enumerated(const QuantumModel& model, double beta, int m_max,
                                                            std::uint64_t budget = kDefaultSequenceBudget) {
  return expand_partition_function_enumerated(model, beta, m_max, [](const SequenceRecord&) {}, budget);
}

namespace detail {

/// Invariant subspaces of the hop graph (connected components over basis states).
inline std::vector<std::vector<std::uint64_t>> hop_sectors(const QuantumModel& model) {
  const auto dim = static_cast<std::size_t>(model.basis.dimension());
  std::vector<std::size_t> parent(dim);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& h : model.hops)
    for (std::size_t n = 0; n < dim; ++n) {
      std::uint64_t m;
      double sign;
      if (apply_hop(n, h.from_mode, h.to_mode, m, sign)) parent[find(n)] = find(static_cast<std::size_t>(m));
    }
  std::vector<std::vector<std::uint64_t>> sectors;
  std::vector<long> slot(dim, -1);
  for (std::size_t n = 0; n < dim; ++n) {
    auto r = find(n);
    if (slot[r] < 0) {
      slot[r] = static_cast<long>(sectors.size());
      sectors.emplace_back();
    }
    sectors[slot[r]].push_back(n);
  }
  return sectors;
}

/// Truncated polynomial in a formal coupling with matrix coefficients.
using MatrixPoly = std::vector<Matrix>;

inline MatrixPoly poly_mul(const MatrixPoly& a, const MatrixPoly& b, int order) {
  const auto d = a[0].rows();
  MatrixPoly c(order + 1, Matrix::Zero(d, d));
  for (int i = 0; i <= order; ++i)
    for (int j = 0; i + j <= order; ++j) c[i + j].noalias() += a[i] * b[j];
  return c;
}

}  // namespace detail

/// Exact order-by-order Dyson coefficients Tr F_m(beta) of
/// Tr exp(-beta (V + lambda T)) = sum_m lambda^m Tr F_m, computed per
/// invariant sector by truncated-polynomial scaling and squaring. This sums
/// the same terms as the explicit enumeration without listing sequences.
inline ExpansionResult expand_partition_function_aggregated(const QuantumModel& model, double beta, int m_max) {
  if (m_max < 0) throw ConfigError("m_max must be >= 0");
  if (!(beta > 0)) throw ConfigError("beta must be positive");
  ExpansionResult res;
  res.order_terms.assign(m_max + 1, 0.0);
  const double emin = model.classical_energy.minCoeff();
  for (const auto& sector : detail::hop_sectors(model)) {
    const auto d = static_cast<Eigen::Index>(sector.size());
    std::vector<long> local(static_cast<std::size_t>(model.basis.dimension()), -1);
    for (Eigen::Index i = 0; i < d; ++i) local[sector[i]] = i;
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = model.classical_energy(static_cast<Eigen::Index>(sector[i])) - emin;
    Matrix T = Matrix::Zero(d, d);
    for (const auto& h : model.hops)
      for (Eigen::Index i = 0; i < d; ++i) {
        std::uint64_t m;
        double sign;
        if (apply_hop(sector[i], h.from_mode, h.to_mode, m, sign)) T(local[m], i) += h.amplitude * sign;
      }
    // B(lambda) = -beta (V + lambda T) / 2^s.
    const double norm = beta * (v.cwiseAbs().maxCoeff() + T.cwiseAbs().colwise().sum().maxCoeff());
    int s = 0;
    while (std::ldexp(norm, -s) > 0.5) ++s;
    const double scale = -beta * std::ldexp(1.0, -s);
    Vector b0 = scale * v;
    Matrix b1 = scale * T;
    // Taylor series of exp(B): P <- P B / k.
    detail::MatrixPoly term(m_max + 1, Matrix::Zero(d, d)), E;
    term[0] = Matrix::Identity(d, d);
    E = term;
    for (int k = 1; k <= m_max + 40; ++k) {
      detail::MatrixPoly next(m_max + 1, Matrix::Zero(d, d));
      for (int j = 0; j <= m_max; ++j) {
        next[j] += term[j] * b0.asDiagonal();
        if (j + 1 <= m_max) next[j + 1].noalias() += term[j] * b1;
      }
      for (int j = 0; j <= m_max; ++j) {
        next[j] /= static_cast<double>(k);
        E[j] += next[j];
      }
      term.swap(next);
    }
    for (int k = 0; k < s; ++k) E = detail::poly_mul(E, E, m_max);
    for (int j = 0; j <= m_max; ++j) res.order_terms[j] += E[j].trace();
  }
  const double factor = std::exp(-beta * emin);
  double z = 0.0;
  for (auto& t : res.order_terms) {
    t *= factor;
    res.partial_sums.push_back(z += t);
  }
  return res;
}

/// Runs the aggregated route with increasing order until two consecutive
/// orders add less than rel_tol * Z (odd orders may vanish identically).
inline ExpansionResult expand_partition_function_converged(const QuantumModel& model, double beta, double rel_tol = 1e-15,
                                                           int max_order = 120) {
  int m = 16;
  while (true) {
    auto res = expand_partition_function_aggregated(model, beta, m);
    const double z = res.partial_sums.back();
    for (int k = 1; k + 1 <= m; ++k)
      if (std::abs(res.order_terms[k]) < rel_tol * std::abs(z) && std::abs(res.order_terms[k + 1]) < rel_tol * std::abs(z) &&
          k >= 2) {
        // All later terms are smaller still for a convergent series tail.
        bool tail_small = true;
        for (int j = k; j <= m; ++j) tail_small &= std::abs(res.order_terms[j]) < rel_tol * std::abs(z);
        if (tail_small) {
          res.order_terms.resize(k + 2);
          res.partial_sums.resize(k + 2);
          res.converged = true;
          return res;
        }
      }
    if (m >= max_order) throw BudgetExceeded("Duhamel series did not converge by order " + std::to_string(max_order));
    m = std::min(2 * m, max_order);
  }
}

struct ConvergenceRow {
  int m;
  double Z_m;
  double rel_err;
  double ratio;  // rel_err(m) / rel_err(m-1); NaN for m = 0
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  double Z_exact = 0.0;
  double beta_t_norm = 0.0;  // beta times the largest hop amplitude
  bool in_regime = false;    // beta |t| <= 1
};

inline ConvergenceReport convergence_report(const ExpansionResult& expansion, double Z_exact, double beta, double t) {
  ConvergenceReport rep;
  rep.Z_exact = Z_exact;
  rep.beta_t_norm = beta * std::abs(t);
  rep.in_regime = rep.beta_t_norm <= 1.0;
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t m = 0; m < expansion.partial_sums.size(); ++m) {
    double err = std::abs(Z_exact - expansion.partial_sums[m]) / std::abs(Z_exact);
    rep.rows.push_back({static_cast<int>(m), expansion.partial_sums[m], err, m == 0 ? std::numeric_limits<double>::quiet_NaN() : err / prev});
    prev = err;
  }
  return rep;
}

inline double max_abs_amplitude(const QuantumModel& model) {
  double t = 0.0;
  for (const auto& h : model.hops) t = std::max(t, std::abs(h.amplitude));
  return t;
}

}  // namespace contourlab
