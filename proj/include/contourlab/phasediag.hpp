#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "contourlab/classical.hpp"
#include "contourlab/contour.hpp"
#include "contourlab/fock.hpp"
#include "contourlab/hubbard.hpp"

namespace contourlab {

inline constexpr std::int64_t kMaxDiagramCells = 1'000'000;

// ---------------------------------------------------------------------------
// Metastable free energies

struct MetastableSet {
  std::vector<std::string> names;
  std::vector<double> h;           // restricted free energy per site
  std::vector<double> correction;  // single-contour correction per site
  std::vector<double> f;           // h + correction
  std::vector<double> tau;         // empirical decay rate of the corrections (per site)
  std::vector<double> remainder;   // estimate of omitted contours, per site
  std::vector<std::size_t> shapes; // contour shapes used
  int corr_max = 0;
  bool refused = false;            // some correction had no positive decay rate
};

/// f_d = h_d - (1 / (beta ell^nu)) sum over non-winding support shapes A with
/// at most corr_max cubes, all labels d, of z(A) e^{beta h_d |A|}. Shapes are
/// counted once per cube position, so the sum is a density per cube.
/// The torus of M is only used to host the shapes; it should be large enough
/// that they do not wind.
inline MetastableSet metastable_free_energies(const ContourModel& M, double beta, int corr_max,
                                              std::uint64_t budget = kDefaultContourBudget) {
  if (!(beta > 0)) throw ConfigError("beta must be positive");
  if (corr_max < 0) throw ConfigError("corr_max must be >= 0");
  MetastableSet out;
  out.corr_max = corr_max;
  const int p = M.motive_count(), per = M.cube_volume(), nu = M.torus().dimension();
  for (int d = 0; d < p; ++d) {
    out.names.push_back(M.motives()[d].name);
    out.h.push_back(restricted_free_energy(M.ensemble(d), beta));
  }
  out.correction.assign(p, 0.0);
  out.tau.assign(p, std::numeric_limits<double>::infinity());
  out.remainder.assign(p, 0.0);
  out.shapes.assign(p, 0);
  if (corr_max > 0) {
    for (int d = 0; d < p; ++d) {
      double sum = 0.0;
      for (const auto& r : contour_inventory(M, beta, corr_max, d, budget)) {
        if (r.contour.winding) continue;
        const double zbar = r.weight.value * std::exp(beta * out.h[d] * r.sites);
        sum += zbar;
        ++out.shapes[d];
        if (zbar != 0.0) out.tau[d] = std::min(out.tau[d], -std::log(std::abs(zbar)) / r.sites);
      }
      if (!(out.tau[d] > 0)) {
        out.refused = true;
        continue;
      }
      out.correction[d] = -sum / (beta * per);
      // Connected sets of n cubes containing a given cube number at most (e (3^nu - 1))^n.
      const double r = std::exp(1.0) * (std::pow(3.0, nu) - 1) * std::exp(-out.tau[d] * per);
      out.remainder[d] = r < 1 ? std::pow(r, corr_max + 1) / (1 - r) / (beta * per)
                               : std::numeric_limits<double>::infinity();
    }
    if (out.refused) std::fill(out.correction.begin(), out.correction.end(), 0.0);
  }
  for (int d = 0; d < p; ++d) out.f.push_back(out.h[d] + out.correction[d]);
  return out;
}

// ---------------------------------------------------------------------------
// Diagram scans

struct Axis {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  int n = 2;  // grid points, >= 2

  double step() const { return (hi - lo) / (n - 1); }
  double at(int i) const { return lo + step() * i; }
};

inline void to_json(nlohmann::json& j, const Axis& a) { j = {{"name", a.name}, {"lo", a.lo}, {"hi", a.hi}, {"n", a.n}}; }

struct DiagramGrid {
  Axis x, y;
  std::vector<std::string> labels;
  std::vector<std::uint64_t> argmin;  // per cell, bit set of labels within tie_tol of the minimum
  std::vector<double> value;          // minimum f per cell
  double tie_tol = 1e-9;

  int index(int i, int j) const { return j * x.n + i; }
  int coexistence(int cell) const { return std::popcount(argmin[cell]); }
  std::string label_set(std::uint64_t mask) const {
    std::string s;
    for (std::size_t k = 0; k < labels.size(); ++k)
      if ((mask >> k) & 1u) s += (s.empty() ? "" : "|") + labels[k];
    return s;
  }
};

using FreeEnergyFn = std::function<std::vector<double>(double, double)>;

/// Per-cell argmin over the labels of f(x, y). Cells are independent; `workers`
/// threads split them by rows, results do not depend on the split.
inline DiagramGrid scan_diagram(std::vector<std::string> labels, Axis x, Axis y, const FreeEnergyFn& f,
                                double tie_tol = 1e-9, int workers = 1) {
  if (labels.empty() || labels.size() > 64) throw ConfigError("scan needs 1..64 labels");
  if (x.n < 2 || y.n < 2) throw ConfigError("axes need at least two grid points");
  if (!(x.hi > x.lo) || !(y.hi > y.lo)) throw ConfigError("axis ranges must be increasing");
  if (static_cast<std::int64_t>(x.n) * y.n > kMaxDiagramCells)
    throw BudgetExceeded("scan grid exceeds " + std::to_string(kMaxDiagramCells) + " cells");
  if (!(tie_tol >= 0)) throw ConfigError("tie tolerance must be >= 0");
  DiagramGrid g{x, y, std::move(labels), {}, {}, tie_tol};
  const std::size_t cells = static_cast<std::size_t>(x.n) * y.n;
  g.argmin.assign(cells, 0);
  g.value.assign(cells, 0.0);
  auto rows = [&](int j0, int j1) {
    for (int j = j0; j < j1; ++j)
      for (int i = 0; i < x.n; ++i) {
        auto v = f(x.at(i), y.at(j));
        if (v.size() != g.labels.size()) throw ConfigError("free-energy callback returned the wrong number of values");
        const double m = *std::min_element(v.begin(), v.end());
        std::uint64_t mask = 0;
        for (std::size_t k = 0; k < v.size(); ++k)
          if (v[k] - m <= tie_tol) mask |= std::uint64_t{1} << k;
        g.argmin[g.index(i, j)] = mask;
        g.value[g.index(i, j)] = m;
      }
  };
  workers = std::max(1, std::min(workers, y.n));
  if (workers == 1) {
    rows(0, y.n);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          rows(y.n * w / workers, y.n * (w + 1) / workers);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return g;
}

struct Domain {
  std::uint64_t labels = 0;
  std::vector<int> cells;
};

/// Connected components (4-neighbor) of cells with equal argmin sets.
inline std::vector<Domain> diagram_domains(const DiagramGrid& g) {
  const int nx = g.x.n, ny = g.y.n;
  std::vector<int> comp(g.argmin.size(), -1);
  std::vector<Domain> out;
  for (int start = 0; start < static_cast<int>(g.argmin.size()); ++start) {
    if (comp[start] >= 0) continue;
    Domain d{g.argmin[start], {}};
    std::vector<int> stack{start};
    comp[start] = static_cast<int>(out.size());
    while (!stack.empty()) {
      int c = stack.back();
      stack.pop_back();
      d.cells.push_back(c);
      const int i = c % nx, j = c / nx;
      const int nb[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
      for (auto& q : nb) {
        if (q[0] < 0 || q[0] >= nx || q[1] < 0 || q[1] >= ny) continue;
        int k = g.index(q[0], q[1]);
        if (comp[k] < 0 && g.argmin[k] == d.labels) {
          comp[k] = comp[start];
          stack.push_back(k);
        }
      }
    }
    std::sort(d.cells.begin(), d.cells.end());
    out.push_back(std::move(d));
  }
  return out;
}

/// Number of domains whose argmin set is a single label.
inline int phase_domain_count(const std::vector<Domain>& domains) {
  return static_cast<int>(std::count_if(domains.begin(), domains.end(),
                                        [](const Domain& d) { return std::popcount(d.labels) == 1; }));
}

/// Pairs of 4-neighbor cells with different argmin sets (each pair once).
inline std::vector<std::pair<int, int>> boundary_pairs(const DiagramGrid& g) {
  std::vector<std::pair<int, int>> out;
  for (int j = 0; j < g.y.n; ++j)
    for (int i = 0; i < g.x.n; ++i) {
      const int c = g.index(i, j);
      if (i + 1 < g.x.n && g.argmin[c] != g.argmin[g.index(i + 1, j)]) out.emplace_back(c, g.index(i + 1, j));
      if (j + 1 < g.y.n && g.argmin[c] != g.argmin[g.index(i, j + 1)]) out.emplace_back(c, g.index(i, j + 1));
    }
  return out;
}

struct GibbsRuleReport {
  int phase_domains = 0;
  std::map<std::string, int> lines;      // two-phase interface -> connected pieces
  int max_coexistence = 0;               // most labels meeting at a grid vertex
  int maximal_points = 0;                // clusters of vertices reaching max_coexistence
  std::vector<std::string> violations;
  bool ok = true;
};

/// Structure of a two-parameter scan. Two-phase interfaces are chains of
/// neighbor pairs; q labels meeting at a vertex (2x2 cells) mark a q-phase
/// point. Violations: coexistence sets with interior cells (a tie over an open
/// region), a vertex where more than three phases meet, or more labels than p.
inline GibbsRuleReport gibbs_rule_check(const DiagramGrid& g, int p) {
  GibbsRuleReport rep;
  auto domains = diagram_domains(g);
  rep.phase_domains = phase_domain_count(domains);
  const int nx = g.x.n, ny = g.y.n;

  for (int j = 1; j + 1 < ny; ++j)
    for (int i = 1; i + 1 < nx; ++i) {
      const int c = g.index(i, j);
      if (g.coexistence(c) < 2) continue;
      if (g.argmin[g.index(i - 1, j)] == g.argmin[c] && g.argmin[g.index(i + 1, j)] == g.argmin[c] &&
          g.argmin[g.index(i, j - 1)] == g.argmin[c] && g.argmin[g.index(i, j + 1)] == g.argmin[c]) {
        rep.violations.push_back("coexistence of " + g.label_set(g.argmin[c]) + " over an open region");
        break;
      }
    }

  // Interfaces: union-find over neighbor pairs with the same label pair.
  auto pairs = boundary_pairs(g);
  std::map<std::string, std::vector<std::pair<int, int>>> by_key;
  for (auto [a, b] : pairs) {
    std::uint64_t u = g.argmin[a] | g.argmin[b];
    if (std::popcount(u) != 2) continue;  // includes steps onto tie cells of the same two labels
    by_key[g.label_set(u)].emplace_back(a, b);
  }
  for (auto& [key, list] : by_key) {
    // Two interface pairs are connected when their cells are within one step.
    std::vector<int> parent(list.size());
    for (std::size_t k = 0; k < list.size(); ++k) parent[k] = static_cast<int>(k);
    std::function<int(int)> find = [&](int k) { return parent[k] == k ? k : parent[k] = find(parent[k]); };
    std::map<int, std::vector<int>> at_cell;
    for (std::size_t k = 0; k < list.size(); ++k) {
      at_cell[list[k].first].push_back(static_cast<int>(k));
      at_cell[list[k].second].push_back(static_cast<int>(k));
    }
    for (std::size_t k = 0; k < list.size(); ++k)
      for (int c : {list[k].first, list[k].second}) {
        const int i = c % nx, j = c / nx;
        for (int dj = -1; dj <= 1; ++dj)
          for (int di = -1; di <= 1; ++di) {
            const int a = i + di, b = j + dj;
            if (a < 0 || a >= nx || b < 0 || b >= ny) continue;
            auto it = at_cell.find(g.index(a, b));
            if (it == at_cell.end()) continue;
            for (int o : it->second) parent[find(o)] = find(static_cast<int>(k));
          }
      }
    std::set<int> roots;
    for (std::size_t k = 0; k < list.size(); ++k) roots.insert(find(static_cast<int>(k)));
    rep.lines[key] = static_cast<int>(roots.size());
  }

  // Vertices: labels meeting in each 2x2 block.
  std::vector<int> vertex_q((nx - 1) * (ny - 1), 0);
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      std::uint64_t u = g.argmin[g.index(i, j)] | g.argmin[g.index(i + 1, j)] | g.argmin[g.index(i, j + 1)] |
                        g.argmin[g.index(i + 1, j + 1)];
      vertex_q[j * (nx - 1) + i] = std::popcount(u);
      rep.max_coexistence = std::max(rep.max_coexistence, std::popcount(u));
    }
  for (int c = 0; c < static_cast<int>(g.argmin.size()); ++c)
    rep.max_coexistence = std::max(rep.max_coexistence, g.coexistence(c));
  {
    std::vector<char> seen(vertex_q.size(), 0);
    for (int v = 0; v < static_cast<int>(vertex_q.size()); ++v) {
      if (seen[v] || vertex_q[v] != rep.max_coexistence) continue;
      ++rep.maximal_points;
      std::vector<int> stack{v};
      seen[v] = 1;
      while (!stack.empty()) {
        int k = stack.back();
        stack.pop_back();
        const int i = k % (nx - 1), j = k / (nx - 1);
        for (int dj = -1; dj <= 1; ++dj)
          for (int di = -1; di <= 1; ++di) {
            const int a = i + di, b = j + dj;
            if (a < 0 || a >= nx - 1 || b < 0 || b >= ny - 1) continue;
            const int o = b * (nx - 1) + a;
            if (!seen[o] && vertex_q[o] == rep.max_coexistence) {
              seen[o] = 1;
              stack.push_back(o);
            }
          }
      }
    }
  }
  if (rep.max_coexistence > 3)
    rep.violations.push_back(std::to_string(rep.max_coexistence) + " phases meet at one point of a two-parameter scan");
  if (rep.max_coexistence > p) rep.violations.push_back("more coexisting labels than motives");
  rep.ok = rep.violations.empty();
  return rep;
}

inline std::string diagram_csv(const DiagramGrid& g) {
  std::ostringstream os;
  os.precision(17);
  os << g.x.name << ',' << g.y.name << ",argmin,f,coexistence\n";
  for (int j = 0; j < g.y.n; ++j)
    for (int i = 0; i < g.x.n; ++i) {
      const int c = g.index(i, j);
      os << g.x.at(i) << ',' << g.y.at(j) << ',' << g.label_set(g.argmin[c]) << ',' << g.value[c] << ','
         << g.coexistence(c) << '\n';
    }
  return os.str();
}

inline nlohmann::json diagram_summary(const DiagramGrid& g, int p) {
  auto domains = diagram_domains(g);
  auto rep = gibbs_rule_check(g, p);
  nlohmann::json j;
  j["x"] = g.x;
  j["y"] = g.y;
  j["tie_tol"] = g.tie_tol;
  j["phase_domains"] = rep.phase_domains;
  nlohmann::json ds = nlohmann::json::array();
  for (const auto& d : domains)
    if (d.cells.size() > 1 || std::popcount(d.labels) == 1)
      ds.push_back({{"labels", g.label_set(d.labels)}, {"cells", d.cells.size()}});
  j["domains"] = ds;
  j["lines"] = rep.lines;
  j["max_coexistence"] = rep.max_coexistence;
  j["maximal_points"] = rep.maximal_points;
  j["violations"] = rep.violations;
  return j;
}

// ---------------------------------------------------------------------------
// Derivative matrix

struct DerivativeMatrix {
  Eigen::MatrixXd matrix;  // rows i < p-1: d(f_i - f_{p-1}) / du_j
  double condition = std::numeric_limits<double>::infinity();
  bool singular = true;
};

/// `gradients[d][k]` = df_d/du_k over the full parameter vector; `coords`
/// selects the p-1 coordinates.
inline DerivativeMatrix derivative_matrix(const std::vector<std::vector<double>>& gradients, const std::vector<int>& coords) {
  const int p = static_cast<int>(gradients.size());
  if (p < 2) throw ConfigError("derivative matrix needs at least two motives");
  if (static_cast<int>(coords.size()) != p - 1) throw ConfigError("need exactly p - 1 coordinates");
  DerivativeMatrix out;
  out.matrix.resize(p - 1, p - 1);
  for (int i = 0; i + 1 < p; ++i)
    for (int j = 0; j + 1 < p; ++j) {
      const int k = coords[j];
      if (k < 0 || k >= static_cast<int>(gradients[i].size()) || k >= static_cast<int>(gradients[p - 1].size()))
        throw ConfigError("coordinate index out of range");
      out.matrix(i, j) = gradients[i][k] - gradients[p - 1][k];
    }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.matrix);
  const auto& s = svd.singularValues();
  const double smax = s.maxCoeff(), smin = s.minCoeff();
  out.singular = !(smin > 1e-12 * std::max(1.0, smax));
  out.condition = out.singular ? std::numeric_limits<double>::infinity() : smax / smin;
  return out;
}

struct DerivativeReport {
  DerivativeMatrix e_version;  // zero-temperature energies
  DerivativeMatrix h_version;  // restricted free energies at beta
};

/// Both versions for motives D of a block interaction; coords index V.params.
inline DerivativeReport derivative_matrix(const BlockInteraction& V, const MotivePartition& part,
                                          const std::vector<Motive>& D, const std::vector<int>& coords, double beta) {
  std::vector<std::vector<double>> ge, gh;
  for (const auto& g : D) {
    auto E = restricted_ensemble(V, part, g);
    ge.push_back(zero_T_energy_gradient(E));
    gh.push_back(restricted_free_energy_gradient(E, beta));
  }
  return {derivative_matrix(ge, coords), derivative_matrix(gh, coords)};
}

// ---------------------------------------------------------------------------
// Extended Hubbard helpers

namespace hubbard {

/// Family energies in units of nu|W| at (u, m) = (U, mu) / (nu|W|); beta = inf
/// gives e_d, finite beta the restricted free energies h_d.
inline FreeEnergyFn family_scan_function(double W, int nu, double beta) {
  if (W == 0.0) throw ConfigError("W must be nonzero for the nu|W| units");
  return [W, nu, beta](double u, double m) {
    const double s = nu * std::abs(W);
    Params p{.t = 0, .U = u * s, .W = W, .mu = m * s, .nu = nu};
    std::vector<double> v;
    for (const auto& fam : motive_families())
      v.push_back((std::isinf(beta) ? family_energy(p, fam) : family_free_energy(p, fam, beta)) / s);
    return v;
  };
}

inline DiagramGrid scan_families(double W, int nu, double beta, Axis u, Axis m, double tie_tol = 1e-9, int workers = 1) {
  return scan_diagram(motive_families(), std::move(u), std::move(m), family_scan_function(W, nu, beta), tie_tol, workers);
}

/// Neighbor pairs of single-label cells whose label-pair equality line
/// e_a = e_b (in the scan's (u, m) plane) is farther than one grid step
/// (diagonal) from either cell.
inline int boundary_line_violations(const DiagramGrid& g, double W, int nu, double beta) {
  auto f = family_scan_function(W, nu, beta);
  const double tol = std::hypot(g.x.step(), g.y.step()) * (1 + 1e-12);
  int bad = 0;
  for (auto [a, b] : boundary_pairs(g)) {
    if (g.coexistence(a) != 1 || g.coexistence(b) != 1) continue;
    const int la = std::countr_zero(g.argmin[a]), lb = std::countr_zero(g.argmin[b]);
    for (int c : {a, b}) {
      const double u = g.x.at(c % g.x.n), m = g.y.at(c / g.x.n);
      // The difference is affine in (u, m); gradient by unit differences.
      auto v0 = f(u, m), vu = f(u + 1, m), vm = f(u, m + 1);
      const double d0 = v0[la] - v0[lb], gu = (vu[la] - vu[lb]) - d0, gm = (vm[la] - vm[lb]) - d0;
      const double norm = std::hypot(gu, gm);
      if (norm == 0 || std::abs(d0) / norm > tol) ++bad;
    }
  }
  return bad;
}

/// Cells whose reflection (u, m) -> (u, u + 4 W/|W| - m) lands on a grid point
/// and carries a different label set after charge reflection. Returns
/// {compared, mismatched}.
inline std::pair<int, int> reflection_mismatches(const DiagramGrid& g, double W) {
  const auto& fams = motive_families();
  std::vector<int> refl(fams.size());
  for (std::size_t k = 0; k < fams.size(); ++k)
    refl[k] = static_cast<int>(std::find(fams.begin(), fams.end(), reflected_family(fams[k])) - fams.begin());
  const double shift = 4.0 * (W > 0 ? 1 : -1);
  int compared = 0, bad = 0;
  for (int j = 0; j < g.y.n; ++j)
    for (int i = 0; i < g.x.n; ++i) {
      const double m2 = g.x.at(i) + shift - g.y.at(j);
      const double jr = (m2 - g.y.lo) / g.y.step();
      const long jj = std::lround(jr);
      if (std::abs(jr - static_cast<double>(jj)) > 1e-6 || jj < 0 || jj >= g.y.n) continue;
      std::uint64_t mapped = 0, here = g.argmin[g.index(i, j)];
      for (std::size_t k = 0; k < fams.size(); ++k)
        if ((here >> k) & 1u) mapped |= std::uint64_t{1} << refl[k];
      ++compared;
      if (mapped != g.argmin[g.index(i, static_cast<int>(jj))]) ++bad;
    }
  return {compared, bad};
}

/// U at which h_1 = h_(0,2), found by bisection on the restricted free
/// energies of the classical module (not the closed forms).
inline double m1_m02_boundary(double W, int nu, double beta, double mu = 0.0) {
  auto diff = [&](double U) {
    auto m = classical_model({.U = U, .W = W, .mu = mu, .nu = nu});
    double h1 = restricted_free_energy(restricted_ensemble(m.block, m.partition, m.motive("1")), beta);
    double h02 = restricted_free_energy(restricted_ensemble(m.block, m.partition, m.motive("(0,2)")), beta);
    return h02 - h1;
  };
  double lo = 2 * nu * W - 10.0, hi = 2 * nu * W + 10.0;
  if (diff(lo) * diff(hi) > 0) throw StructuralError("no M1/M(0,2) crossing in the bracket");
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (diff(lo) * diff(mid) <= 0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace hubbard

// ---------------------------------------------------------------------------
// Single-phase state check

struct StateCheckRow {
  int site = 0;
  std::string observable;
  double gibbs = 0.0;
  double restricted = 0.0;
};

struct StateCheckReport {
  std::string motive;
  double beta = 0.0;
  double epsilon = 0.0;            // max |Gibbs - restricted average| over single-site diagonal observables
  double density_deviation = 0.0;  // max_x |<n_x> - charge of the motive at x|
  std::vector<double> density;
  std::vector<StateCheckRow> rows;
};

/// Exact Gibbs state of the Hubbard Hamiltonian on a small torus against the
/// uniform average over the motive's restricted configurations at each site.
inline StateCheckReport single_phase_state_check(const hubbard::Params& p, const Torus& t, double beta,
                                                 const std::string& motive) {
  if (!(beta > 0)) throw ConfigError("beta must be positive");
  FockBasis basis(t);
  auto model = hubbard::classical_model(p);
  const Motive& g = model.motive(motive);
  if (!g.compatible_with(t)) throw IncompatibleConfiguration("motive period does not fit the torus");
  auto spec = diagonalize(hubbard::hamiltonian(p, basis));

  static const char* names[5] = {"P_0", "P_up", "P_down", "P_2", "n"};
  std::vector<Vector> diags;
  for (int x = 0; x < t.site_count(); ++x)
    for (int k = 0; k < 5; ++k) {
      Vector d(basis.dimension());
      for (std::int64_t n = 0; n < basis.dimension(); ++n) {
        int s = FockBasis::local_state(static_cast<std::uint64_t>(n), x);
        d(n) = k < 4 ? (s == k ? 1.0 : 0.0) : static_cast<double>(hubbard::kCharge[s]);
      }
      diags.push_back(std::move(d));
    }
  auto vals = gibbs_expectations_diagonal(spec, diags, beta);

  StateCheckReport rep;
  rep.motive = motive;
  rep.beta = beta;
  for (int x = 0; x < t.site_count(); ++x) {
    const int cls = g.class_at(t, x);
    std::vector<int> allowed = model.partition.states_in(cls);
    const int charge = model.class_charge[cls];
    for (int k = 0; k < 5; ++k) {
      double avg = 0.0;
      for (int s : allowed) avg += k < 4 ? (s == k ? 1.0 : 0.0) : hubbard::kCharge[s];
      avg /= static_cast<double>(allowed.size());
      const double gv = vals[x * 5 + k];
      rep.rows.push_back({x, names[k], gv, avg});
      rep.epsilon = std::max(rep.epsilon, std::abs(gv - avg));
      if (k == 4) {
        rep.density.push_back(gv);
        rep.density_deviation = std::max(rep.density_deviation, std::abs(gv - charge));
      }
    }
  }
  return rep;
}

}  // namespace contourlab
