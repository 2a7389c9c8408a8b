#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "contourlab/errors.hpp"
#include "contourlab/lattice.hpp"

namespace contourlab {

inline constexpr std::uint64_t kDefaultPatternBudget = 10'000'000;

struct StateAlphabet {
  std::vector<std::string> labels;

  explicit StateAlphabet(std::vector<std::string> l) : labels(std::move(l)) {
    if (labels.empty()) throw ConfigError("alphabet needs at least one state");
    for (std::size_t i = 0; i < labels.size(); ++i)
      for (std::size_t j = i + 1; j < labels.size(); ++j)
        if (labels[i] == labels[j]) throw ConfigError("alphabet labels must be distinct");
  }
  int size() const { return static_cast<int>(labels.size()); }
};

/// Partition of single-site states into motive classes (0-based).
struct MotivePartition {
  int class_count = 0;
  std::vector<int> class_of;  // state -> class

  MotivePartition() = default;
  MotivePartition(int n, std::vector<int> classes) : class_count(n), class_of(std::move(classes)) {
    std::vector<int> used(n, 0);
    for (int c : class_of) {
      if (c < 0 || c >= n) throw ConfigError("motive class index out of range");
      used[c] = 1;
    }
    for (int u : used)
      if (!u) throw ConfigError("every motive class must contain at least one state");
  }
  static MotivePartition identity(int M) {
    std::vector<int> c(M);
    std::iota(c.begin(), c.end(), 0);
    return {M, c};
  }
  std::vector<int> states_in(int cls) const {
    std::vector<int> out;
    for (int s = 0; s < static_cast<int>(class_of.size()); ++s)
      if (class_of[s] == cls) out.push_back(s);
    return out;
  }
};

/// Site -> state index, in site order.
using Configuration = std::vector<int>;

namespace detail {

inline int lcm_int(int a, int b) { return std::lcm(a, b); }

inline std::vector<int> lcm_period(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out(a.size());
  for (std::size_t d = 0; d < a.size(); ++d) out[d] = lcm_int(a[d], b[d]);
  return out;
}

inline int cell_volume(const std::vector<int>& period) {
  int v = 1;
  for (int p : period) v *= p;
  return v;
}

/// Coordinates of the k-th point of a periodic cell (first coordinate fastest).
inline Site cell_point(const std::vector<int>& period, int k) {
  Site c(period.size());
  for (std::size_t d = 0; d < period.size(); ++d) {
    c[d] = k % period[d];
    k /= period[d];
  }
  return c;
}

inline int cell_index(const std::vector<int>& period, std::span<const int> coords) {
  int idx = 0;
  for (int d = static_cast<int>(period.size()) - 1; d >= 0; --d)
    idx = idx * period[d] + Torus::mod(coords[d], period[d]);
  return idx;
}

/// Calls f(pattern) for every element of the product of `choices`.
template <class F>
void for_each_product(const std::vector<std::vector<int>>& choices, F&& f) {
  std::vector<int> pick(choices.size(), 0), pattern(choices.size());
  for (const auto& c : choices)
    if (c.empty()) return;
  while (true) {
    for (std::size_t i = 0; i < choices.size(); ++i) pattern[i] = choices[i][pick[i]];
    f(std::span<const int>(pattern));
    std::size_t i = 0;
    while (i < choices.size() && pick[i] + 1 == static_cast<int>(choices[i].size())) pick[i++] = 0;
    if (i == choices.size()) return;
    ++pick[i];
  }
}

inline std::uint64_t product_size(const std::vector<std::vector<int>>& choices) {
  std::uint64_t n = 1;
  for (const auto& c : choices) {
    if (c.empty()) return 0;
    if (n > std::numeric_limits<std::uint64_t>::max() / c.size()) return std::numeric_limits<std::uint64_t>::max();
    n *= c.size();
  }
  return n;
}

}  // namespace detail

/// Periodic assignment of motive classes.
struct Motive {
  std::string name;
  std::vector<int> period;
  std::vector<int> pattern;  // class index per point of the period cell

  Motive() = default;
  Motive(std::string n, std::vector<int> p, std::vector<int> pat)
      : name(std::move(n)), period(std::move(p)), pattern(std::move(pat)) {
    for (int v : period)
      if (v < 1) throw ConfigError("motive period entries must be >= 1");
    if (static_cast<int>(pattern.size()) != detail::cell_volume(period))
      throw ConfigError("motive pattern size does not match its period cell");
  }

  int class_at(std::span<const int> coords) const { return pattern[detail::cell_index(period, coords)]; }
  int class_at(const Torus& t, int site) const { return class_at(t.coords(site)); }

  /// Motive translated by `offset` (class at x equals original class at x - offset).
  Motive translated(std::span<const int> offset, std::string new_name) const {
    std::vector<int> pat(pattern.size());
    for (int k = 0; k < static_cast<int>(pattern.size()); ++k) {
      Site c = detail::cell_point(period, k);
      for (std::size_t d = 0; d < c.size(); ++d) c[d] -= offset[d];
      pat[k] = class_at(c);
    }
    return {std::move(new_name), period, std::move(pat)};
  }

  bool compatible_with(const Torus& t) const {
    for (int d = 0; d < t.dimension(); ++d)
      if (t.extent(d) % period[d] != 0) return false;
    return true;
  }
};

/// Classical block interaction: V = sum_x Phi_x(omega_{U(x)}), with U(x) = x + block.
/// Phi_x depends on x only through x modulo `period`.
struct BlockInteraction {
  using Eval = std::function<double(std::span<const int> cell, std::span<const int> local, std::span<const double> params)>;
  using Grad = std::function<void(std::span<const int> cell, std::span<const int> local, std::span<const double> params,
                                  std::span<double> out)>;

  int num_states = 0;
  std::vector<Site> block;
  std::vector<int> period;
  std::vector<std::string> param_names;
  std::vector<double> params;
  Eval phi;
  Grad dphi;  // optional; finite differences are used when absent

  int dimension() const { return static_cast<int>(period.size()); }
  int block_size() const { return static_cast<int>(block.size()); }

  double value_at_cell(std::span<const int> cell, std::span<const int> local) const { return phi(cell, local, params); }

  void gradient_at_cell(std::span<const int> cell, std::span<const int> local, std::span<double> out) const {
    if (dphi) {
      dphi(cell, local, params, out);
      return;
    }
    constexpr double h = 1e-5;
    std::vector<double> p = params;
    for (std::size_t j = 0; j < params.size(); ++j) {
      p[j] = params[j] + h;
      double up = phi(cell, local, p);
      p[j] = params[j] - h;
      double down = phi(cell, local, p);
      p[j] = params[j];
      out[j] = (up - down) / (2 * h);
    }
  }

  BlockInteraction with_params(std::vector<double> p) const {
    BlockInteraction out = *this;
    out.params = std::move(p);
    return out;
  }

  /// Adds a constant to every block term.
  BlockInteraction shifted(double c) const {
    BlockInteraction out = *this;
    auto base = phi;
    out.phi = [base, c](std::span<const int> cell, std::span<const int> local, std::span<const double> p) {
      return base(cell, local, p) + c;
    };
    return out;
  }

  /// Largest offset spread of the block along direction d.
  int span(int d) const {
    int lo = 0, hi = 0;
    for (std::size_t k = 0; k < block.size(); ++k) {
      lo = k == 0 ? block[k][d] : std::min(lo, block[k][d]);
      hi = k == 0 ? block[k][d] : std::max(hi, block[k][d]);
    }
    return hi - lo;
  }
};

/// Block of radius R: all offsets in [-R, R]^nu.
inline std::vector<Site> cubic_block(int nu, int R) {
  std::vector<Site> out;
  Site off(nu, -R);
  while (true) {
    out.push_back(off);
    int d = 0;
    while (d < nu && off[d] == R) off[d++] = -R;
    if (d == nu) break;
    ++off[d];
  }
  return out;
}

/// Unit-cube block {0,1}^nu anchored at x.
inline std::vector<Site> unit_cube_block(int nu) {
  std::vector<Site> out;
  for (int k = 0; k < (1 << nu); ++k) {
    Site off(nu);
    for (int d = 0; d < nu; ++d) off[d] = (k >> d) & 1;
    out.push_back(off);
  }
  return out;
}

inline void require_compatible(const BlockInteraction& V, const Torus& t) {
  if (V.dimension() != t.dimension()) throw IncompatibleConfiguration("interaction and torus dimensions differ");
  for (int d = 0; d < t.dimension(); ++d) {
    if (t.extent(d) % V.period[d] != 0)
      throw IncompatibleConfiguration("torus extent is not a multiple of the interaction period");
    if (V.span(d) >= t.extent(d)) throw IncompatibleConfiguration("block overlaps itself on this torus");
  }
}

inline Site cell_of(const BlockInteraction& V, const Torus& t, int x) {
  Site c = t.coords(x);
  for (int d = 0; d < t.dimension(); ++d) c[d] %= V.period[d];
  return c;
}

inline std::vector<int> block_sites(const BlockInteraction& V, const Torus& t, int x) {
  std::vector<int> out(V.block.size());
  for (std::size_t k = 0; k < V.block.size(); ++k) out[k] = t.translate(x, V.block[k]);
  return out;
}

inline double block_value(const BlockInteraction& V, const Torus& t, int x, const Configuration& w) {
  std::vector<int> local(V.block.size());
  for (std::size_t k = 0; k < V.block.size(); ++k) local[k] = w[t.translate(x, V.block[k])];
  Site cell = cell_of(V, t, x);
  return V.value_at_cell(cell, local);
}

/// Sum of Phi_x over all sites.
inline double total_energy(const BlockInteraction& V, const Torus& t, const Configuration& w) {
  require_compatible(V, t);
  if (static_cast<int>(w.size()) != t.site_count()) throw ConfigError("configuration size differs from site count");
  for (int s : w)
    if (s < 0 || s >= V.num_states) throw ConfigError("configuration state out of range");
  double e = 0.0;
  for (int x = 0; x < t.site_count(); ++x) e += block_value(V, t, x, w);
  return e;
}

// ---------------------------------------------------------------------------
// m-potential check

struct MPotentialResult {
  bool is_m_potential = false;
  /// Periodic witnesses, each given on the period cell (first coordinate fastest).
  std::vector<Configuration> witnesses;
  /// Smallest excess sum_x [Phi_x - min Phi_x] over all enumerated periodic
  /// configurations; zero iff the answer is yes.
  double best_excess = 0.0;
  std::vector<double> local_minima;  // per cell point of the interaction period
};

/// Decides whether some configuration of period `ell` (per direction)
/// minimizes every block term simultaneously.
inline MPotentialResult is_m_potential(const BlockInteraction& V, const std::vector<int>& ell,
                                       std::uint64_t budget = kDefaultPatternBudget, double tol = 1e-12) {
  const int nu = V.dimension();
  for (int d = 0; d < nu; ++d)
    if (ell[d] % V.period[d] != 0) throw ConfigError("witness period must be a multiple of the interaction period");
  const int vcell = detail::cell_volume(V.period);
  const int wcell = detail::cell_volume(ell);

  std::vector<std::vector<int>> all_states(V.block.size());
  for (auto& s : all_states) {
    s.resize(V.num_states);
    std::iota(s.begin(), s.end(), 0);
  }
  const std::uint64_t local = detail::product_size(all_states);
  std::uint64_t global = 1;
  for (int k = 0; k < wcell; ++k) {
    if (global > budget) break;
    global *= static_cast<std::uint64_t>(V.num_states);
  }
  if (local > budget / std::max(vcell, 1) || global > budget)
    throw BudgetExceeded("m-potential enumeration exceeds the pattern budget");

  MPotentialResult res;
  res.local_minima.assign(vcell, std::numeric_limits<double>::infinity());
  for (int k = 0; k < vcell; ++k) {
    Site cell = detail::cell_point(V.period, k);
    detail::for_each_product(all_states, [&](std::span<const int> pat) {
      res.local_minima[k] = std::min(res.local_minima[k], V.value_at_cell(cell, pat));
    });
  }

  res.best_excess = std::numeric_limits<double>::infinity();
  std::vector<std::vector<int>> cell_states(wcell, all_states[0]);
  std::vector<int> local_pat(V.block.size());
  detail::for_each_product(cell_states, [&](std::span<const int> conf) {
    double excess = 0.0;
    for (int k = 0; k < wcell; ++k) {
      Site x = detail::cell_point(ell, k);
      for (std::size_t b = 0; b < V.block.size(); ++b) {
        Site y = x;
        for (int d = 0; d < nu; ++d) y[d] += V.block[b][d];
        local_pat[b] = conf[detail::cell_index(ell, y)];
      }
      Site cell = x;
      for (int d = 0; d < nu; ++d) cell[d] %= V.period[d];
      excess += V.value_at_cell(cell, local_pat) - res.local_minima[detail::cell_index(V.period, cell)];
    }
    res.best_excess = std::min(res.best_excess, excess);
    if (excess <= tol * std::max(1.0, static_cast<double>(wcell))) res.witnesses.emplace_back(conf.begin(), conf.end());
  });
  res.is_m_potential = !res.witnesses.empty();
  return res;
}

// ---------------------------------------------------------------------------
// Local motive membership

/// Allowed states at each block site of U(x) when restricted to motive g.
inline std::vector<std::vector<int>> restricted_choices(const BlockInteraction& V, const MotivePartition& part,
                                                        const Motive& g, std::span<const int> x) {
  std::vector<std::vector<int>> choices(V.block.size());
  for (std::size_t b = 0; b < V.block.size(); ++b) {
    Site y(x.begin(), x.end());
    for (std::size_t d = 0; d < y.size(); ++d) y[d] += V.block[b][d];
    choices[b] = part.states_in(g.class_at(y));
  }
  return choices;
}

inline bool pattern_in_motive(const BlockInteraction& V, const MotivePartition& part, const Motive& g,
                              std::span<const int> x, std::span<const int> pat) {
  for (std::size_t b = 0; b < V.block.size(); ++b) {
    Site y(x.begin(), x.end());
    for (std::size_t d = 0; d < y.size(); ++d) y[d] += V.block[b][d];
    if (part.class_of[pat[b]] != g.class_at(y)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Restricted ensembles

/// Restriction of a block interaction to one motive, where it reduces to an
/// on-site interaction Phi^d_x(omega_x).
struct RestrictedEnsemble {
  Motive motive;
  std::vector<int> period;                  // lcm of interaction and motive periods
  std::vector<std::vector<double>> energy;  // [cell point][state], +inf outside the class
  std::vector<std::vector<std::vector<double>>> denergy;  // [cell point][state][param]
  std::vector<std::vector<int>> allowed;                  // [cell point] -> states of the class

  int cell_volume() const { return detail::cell_volume(period); }
  double onsite(std::span<const int> coords, int state) const {
    return energy[detail::cell_index(period, coords)][state];
  }
};

/// Builds Phi^d by enumerating every restricted block pattern. Fails with a
/// StructuralError when Phi_x on the motive depends on more than omega_x.
inline RestrictedEnsemble restricted_ensemble(const BlockInteraction& V, const MotivePartition& part, const Motive& g,
                                              std::uint64_t budget = kDefaultPatternBudget, double tol = 1e-10) {
  if (g.period.size() != V.period.size()) throw ConfigError("motive dimension differs from interaction");
  RestrictedEnsemble E;
  E.motive = g;
  E.period = detail::lcm_period(V.period, g.period);
  const int cells = E.cell_volume();
  const auto inf = std::numeric_limits<double>::infinity();
  const std::size_t np = V.params.size();
  E.energy.assign(cells, std::vector<double>(V.num_states, inf));
  E.denergy.assign(cells, std::vector<std::vector<double>>(V.num_states, std::vector<double>(np, 0.0)));
  E.allowed.resize(cells);

  int self = -1;
  for (std::size_t b = 0; b < V.block.size(); ++b)
    if (std::all_of(V.block[b].begin(), V.block[b].end(), [](int v) { return v == 0; })) self = static_cast<int>(b);

  std::uint64_t work = 0;
  for (int k = 0; k < cells; ++k) {
    Site x = detail::cell_point(E.period, k);
    auto choices = restricted_choices(V, part, g, x);
    work += detail::product_size(choices);
    if (work > budget) throw BudgetExceeded("restricted ensemble enumeration exceeds the pattern budget");
    E.allowed[k] = part.states_in(g.class_at(x));
    Site cell = x;
    for (std::size_t d = 0; d < cell.size(); ++d) cell[d] %= V.period[d];
    std::vector<char> seen(V.num_states, 0);
    std::vector<double> grad(np);
    detail::for_each_product(choices, [&](std::span<const int> pat) {
      int s = self >= 0 ? pat[self] : E.allowed[k].front();
      double v = V.value_at_cell(cell, pat);
      if (!seen[s]) {
        seen[s] = 1;
        E.energy[k][s] = v;
        if (np) {
          V.gradient_at_cell(cell, pat, grad);
          E.denergy[k][s] = grad;
        }
      } else if (std::abs(E.energy[k][s] - v) > tol * std::max(1.0, std::abs(v))) {
        std::string where;
        for (int c : x) where += std::to_string(c) + ",";
        throw StructuralError("block interaction is not on-site on motive '" + g.name + "' at cell point (" + where +
                              ") for state " + std::to_string(s));
      }
    });
  }
  return E;
}

struct PartitionValue {
  double value;
  double log_value;
};

namespace detail {
inline double log_sum_exp_site(const std::vector<double>& energy, const std::vector<int>& allowed, double beta) {
  double emin = std::numeric_limits<double>::infinity();
  for (int s : allowed) emin = std::min(emin, energy[s]);
  double acc = 0.0;
  for (int s : allowed) acc += std::exp(-beta * (energy[s] - emin));
  return -beta * emin + std::log(acc);
}
}  // namespace detail

/// Exact restricted partition function: product over sites of the on-site sums.
inline PartitionValue restricted_partition_function(const RestrictedEnsemble& E, const Torus& t, double beta) {
  if (!(beta > 0)) throw ConfigError("beta must be positive");
  for (int d = 0; d < t.dimension(); ++d)
    if (t.extent(d) % E.period[d] != 0) throw IncompatibleConfiguration("torus incompatible with motive period");
  double logz = 0.0;
  for (int x = 0; x < t.site_count(); ++x) {
    int k = detail::cell_index(E.period, t.coords(x));
    logz += detail::log_sum_exp_site(E.energy[k], E.allowed[k], beta);
  }
  return {std::exp(logz), logz};
}

/// h_d per site; volume independent under the on-site condition.
inline double restricted_free_energy(const RestrictedEnsemble& E, double beta) {
  if (!(beta > 0)) throw ConfigError("beta must be positive");
  double acc = 0.0;
  for (int k = 0; k < E.cell_volume(); ++k) acc += detail::log_sum_exp_site(E.energy[k], E.allowed[k], beta);
  return -acc / (beta * E.cell_volume());
}

inline double restricted_free_energy(const RestrictedEnsemble& E, const Torus& t, double beta) {
  return -restricted_partition_function(E, t, beta).log_value / (beta * t.site_count());
}

/// e_d = lim_{beta -> infinity} h_d.
inline double zero_T_energy(const RestrictedEnsemble& E) {
  double acc = 0.0;
  for (int k = 0; k < E.cell_volume(); ++k) {
    double m = std::numeric_limits<double>::infinity();
    for (int s : E.allowed[k]) m = std::min(m, E.energy[k][s]);
    acc += m;
  }
  return acc / E.cell_volume();
}

/// Analytic dh_d/dparam_j (Gibbs average of dPhi^d over each site).
inline std::vector<double> restricted_free_energy_gradient(const RestrictedEnsemble& E, double beta) {
  const std::size_t np = E.denergy.empty() || E.denergy[0].empty() ? 0 : E.denergy[0][0].size();
  std::vector<double> g(np, 0.0);
  for (int k = 0; k < E.cell_volume(); ++k) {
    double emin = std::numeric_limits<double>::infinity();
    for (int s : E.allowed[k]) emin = std::min(emin, E.energy[k][s]);
    double norm = 0.0;
    std::vector<double> acc(np, 0.0);
    for (int s : E.allowed[k]) {
      double w = std::isinf(beta) ? (E.energy[k][s] <= emin + 1e-12 ? 1.0 : 0.0) : std::exp(-beta * (E.energy[k][s] - emin));
      norm += w;
      for (std::size_t j = 0; j < np; ++j) acc[j] += w * E.denergy[k][s][j];
    }
    for (std::size_t j = 0; j < np; ++j) g[j] += acc[j] / norm;
  }
  for (auto& v : g) v /= E.cell_volume();
  return g;
}

inline std::vector<double> zero_T_energy_gradient(const RestrictedEnsemble& E) {
  return restricted_free_energy_gradient(E, std::numeric_limits<double>::infinity());
}

// ---------------------------------------------------------------------------
// Gap conditions

struct GapWitness {
  Site cell_point;
  std::vector<int> pattern;
  double excess = 0.0;
};

struct GapReport {
  double delta0 = std::numeric_limits<double>::infinity();  // high/low gap
  double delta = std::numeric_limits<double>::infinity();   // gap to the motives in D
  std::optional<GapWitness> delta_witness;
  std::optional<GapWitness> delta0_witness;
  /// Per motive of D: min_s Phi^d_x(s) is the same for every x.
  std::vector<bool> ground_energy_constant;
  std::vector<double> ground_energy;
};

/// Computes the largest gaps for which the high/low condition (low set G) and
/// the motive-gap condition (motives D) hold, by local pattern enumeration.
/// `G == nullopt` means every configuration is low energy.
inline GapReport check_gaps(const BlockInteraction& V, const MotivePartition& part,
                            const std::optional<std::vector<Motive>>& G, const std::vector<Motive>& D,
                            std::uint64_t budget = kDefaultPatternBudget) {
  const int nu = V.dimension();
  std::vector<int> period = V.period;
  if (G)
    for (const auto& g : *G) period = detail::lcm_period(period, g.period);
  for (const auto& d : D) period = detail::lcm_period(period, d.period);

  GapReport rep;
  for (const auto& d : D) {
    auto E = restricted_ensemble(V, part, d, budget);  // throws on a non on-site block
    rep.ground_energy.push_back(zero_T_energy(E));
    bool constant = true;
    double first = 0.0;
    for (int k = 0; k < E.cell_volume(); ++k) {
      double m = std::numeric_limits<double>::infinity();
      for (int s : E.allowed[k]) m = std::min(m, E.energy[k][s]);
      if (k == 0) first = m;
      if (std::abs(m - first) > 1e-10 * std::max(1.0, std::abs(first))) constant = false;
    }
    rep.ground_energy_constant.push_back(constant);
  }

  std::vector<std::vector<int>> all_states(V.block.size());
  for (auto& s : all_states) {
    s.resize(V.num_states);
    std::iota(s.begin(), s.end(), 0);
  }
  const int cells = detail::cell_volume(period);
  if (detail::product_size(all_states) > budget / std::max(cells, 1))
    throw BudgetExceeded("gap enumeration exceeds the pattern budget");

  const auto inf = std::numeric_limits<double>::infinity();
  for (int k = 0; k < cells; ++k) {
    Site x = detail::cell_point(period, k);
    Site cell = x;
    for (int d = 0; d < nu; ++d) cell[d] %= V.period[d];
    double max_low = -inf, min_ground = inf;
    detail::for_each_product(all_states, [&](std::span<const int> pat) {
      double v = V.value_at_cell(cell, pat);
      bool low = !G || std::any_of(G->begin(), G->end(), [&](const Motive& g) { return pattern_in_motive(V, part, g, x, pat); });
      bool ground = std::any_of(D.begin(), D.end(), [&](const Motive& d) { return pattern_in_motive(V, part, d, x, pat); });
      if (low) max_low = std::max(max_low, v);
      if (ground) min_ground = std::min(min_ground, v);
    });
    detail::for_each_product(all_states, [&](std::span<const int> pat) {
      double v = V.value_at_cell(cell, pat);
      bool low = !G || std::any_of(G->begin(), G->end(), [&](const Motive& g) { return pattern_in_motive(V, part, g, x, pat); });
      bool ground = std::any_of(D.begin(), D.end(), [&](const Motive& d) { return pattern_in_motive(V, part, d, x, pat); });
      if (!low && v - max_low < rep.delta0) {
        rep.delta0 = v - max_low;
        rep.delta0_witness = GapWitness{x, {pat.begin(), pat.end()}, rep.delta0};
      }
      if (!ground && v - min_ground < rep.delta) {
        rep.delta = v - min_ground;
        rep.delta_witness = GapWitness{x, {pat.begin(), pat.end()}, rep.delta};
      }
    });
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Interaction norm

struct InteractionTerm {
  std::vector<int> support;  // sites
  double op_norm = 0.0;
};

/// Number of sites of the smallest nearest-neighbor connected set containing
/// `terminals` (unit-weight Steiner tree, Dreyfus-Wagner).
inline int connected_hull_size(const Torus& t, std::vector<int> terminals) {
  std::sort(terminals.begin(), terminals.end());
  terminals.erase(std::unique(terminals.begin(), terminals.end()), terminals.end());
  const int k = static_cast<int>(terminals.size());
  if (k <= 1) return k;
  if (k > 12) throw BudgetExceeded("connected hull: too many terminals");
  const int n = t.site_count();
  // All-pairs BFS distances.
  std::vector<std::vector<int>> dist(n, std::vector<int>(n, -1));
  for (int s = 0; s < n; ++s) {
    std::queue<int> q;
    q.push(s);
    dist[s][s] = 0;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int d = 0; d < t.dimension(); ++d)
        for (int step : {-1, 1}) {
          int v = t.shifted(u, d, step);
          if (dist[s][v] < 0) {
            dist[s][v] = dist[s][u] + 1;
            q.push(v);
          }
        }
    }
  }
  const int full = (1 << k) - 1;
  const int big = std::numeric_limits<int>::max() / 4;
  std::vector<std::vector<int>> dp(1 << k, std::vector<int>(n, big));
  for (int i = 0; i < k; ++i)
    for (int v = 0; v < n; ++v) dp[1 << i][v] = dist[terminals[i]][v];
  for (int S = 1; S <= full; ++S) {
    if ((S & (S - 1)) == 0) continue;
    for (int v = 0; v < n; ++v)
      for (int sub = (S - 1) & S; sub > 0; sub = (sub - 1) & S)
        dp[S][v] = std::min(dp[S][v], dp[sub][v] + dp[S ^ sub][v]);
    for (int v = 0; v < n; ++v)
      for (int u = 0; u < n; ++u) dp[S][v] = std::min(dp[S][v], dp[S][u] + dist[u][v]);
  }
  int best = big;
  for (int v = 0; v < n; ++v) best = std::min(best, dp[full][v]);
  return best + 1;
}

/// sup_a sum_{A containing a} ||H_A|| e^{r |A|}.
inline double interaction_norm(const Torus& t, const std::vector<InteractionTerm>& terms, double r) {
  if (r < 0) throw ConfigError("decay rate r must be >= 0");
  std::vector<double> per_site(t.site_count(), 0.0);
  for (const auto& term : terms) {
    std::vector<int> s = term.support;
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    double w = term.op_norm * std::exp(r * connected_hull_size(t, s));
    for (int a : s) per_site[a] += w;
  }
  double best = 0.0;
  for (double v : per_site) best = std::max(best, v);
  return best;
}

}  // namespace contourlab
