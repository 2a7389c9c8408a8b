#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "contourlab/classical.hpp"
#include "contourlab/duhamel.hpp"
#include "contourlab/errors.hpp"
#include "contourlab/fock.hpp"
#include "contourlab/lattice.hpp"

namespace contourlab {

inline constexpr int kDefaultMaxContourCubes = 12;
inline constexpr std::uint64_t kDefaultContourBudget = 10'000'000;

namespace detail {

/// Fixed-size bit set over cube indices.
struct CubeBits {
  std::vector<std::uint64_t> w;

  CubeBits() = default;
  explicit CubeBits(int n) : w((n + 63) / 64, 0) {}
  void set(int i) { w[i >> 6] |= std::uint64_t{1} << (i & 63); }
  bool test(int i) const { return (w[i >> 6] >> (i & 63)) & 1u; }
  bool intersects(const CubeBits& o) const {
    for (std::size_t k = 0; k < w.size(); ++k)
      if (w[k] & o.w[k]) return true;
    return false;
  }
  CubeBits& operator|=(const CubeBits& o) {
    for (std::size_t k = 0; k < w.size(); ++k) w[k] |= o.w[k];
    return *this;
  }
};

}  // namespace detail

/// Everything the contour expansion needs about a classical model on a torus:
/// block interaction, motive set D, restricted ensembles and site tables.
///
/// Requirements: ell is a multiple of the interaction period and of every
/// motive period (all cubes are then equivalent), the block reaches at most
/// ell sites, and distinct motives differ somewhere on the block closure of
/// every cube (so a calm cube determines its motive).
class ContourModel {
 public:
  ContourModel(Torus t, BlockInteraction V, MotivePartition part, std::vector<Motive> D,
               std::uint64_t budget = kDefaultPatternBudget)
      : torus_(std::move(t)), V_(std::move(V)), part_(std::move(part)), motives_(std::move(D)) {
    require_compatible(V_, torus_);
    const int nu = torus_.dimension(), ell = torus_.ell();
    if (motives_.empty()) throw ConfigError("motive set D is empty");
    if (motives_.size() > 64) throw ConfigError("at most 64 motives are supported");
    if (static_cast<int>(part_.class_of.size()) != V_.num_states)
      throw ConfigError("motive partition does not cover the interaction's states");
    for (int d = 0; d < nu; ++d)
      if (ell % V_.period[d] != 0) throw IncompatibleConfiguration("cube side must be a multiple of the interaction period");
    for (const auto& g : motives_) {
      if (static_cast<int>(g.period.size()) != nu) throw ConfigError("motive dimension differs from torus");
      for (int d = 0; d < nu; ++d)
        if (ell % g.period[d] != 0)
          throw IncompatibleConfiguration("cube side must be a multiple of the period of motive '" + g.name + "'");
    }
    reach_ = 0;
    for (const auto& off : V_.block)
      for (int v : off) reach_ = std::max(reach_, std::abs(v));
    if (reach_ > ell) throw IncompatibleConfiguration("block reach exceeds the cube side");

    for (const auto& g : motives_) {
      ensembles_.push_back(restricted_ensemble(V_, part_, g, budget));
      ground_.push_back(zero_T_energy(ensembles_.back()));
    }
    e0_ = *std::min_element(ground_.begin(), ground_.end());

    const int n = torus_.site_count(), M = V_.num_states, p = motive_count();
    U_.resize(n);
    cell_.resize(n);
    mask_.assign(static_cast<std::size_t>(n) * M, 0);
    class_.assign(p, std::vector<int>(n));
    for (int x = 0; x < n; ++x) {
      U_[x] = block_sites(V_, torus_, x);
      cell_[x] = cell_of(V_, torus_, x);
      for (int d = 0; d < p; ++d) class_[d][x] = motives_[d].class_at(torus_, x);
      for (int s = 0; s < M; ++s) {
        std::uint64_t m = 0;
        for (int d = 0; d < p; ++d)
          if (class_[d][x] == part_.class_of[s]) m |= std::uint64_t{1} << d;
        mask_[static_cast<std::size_t>(x) * M + s] = m;
      }
    }
    dependents_.resize(n);
    for (int x = 0; x < n; ++x)
      for (int y : U_[x]) dependents_[y].push_back(x);
    for (auto& v : dependents_) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    const int nc = torus_.cube_count();
    cube_sites_.resize(nc);
    touch_.resize(nc);
    for (int c = 0; c < nc; ++c) {
      cube_sites_[c] = torus_.cube_sites(c);
      touch_[c] = torus_.touching_cubes(c);
    }
    // Calm cubes must determine their motive.
    for (int c = 0; c < nc; ++c) {
      std::vector<int> closure;
      for (int x : cube_sites_[c]) closure.insert(closure.end(), U_[x].begin(), U_[x].end());
      for (int a = 0; a < p; ++a)
        for (int b = a + 1; b < p; ++b) {
          bool differ = std::any_of(closure.begin(), closure.end(), [&](int y) { return class_[a][y] != class_[b][y]; });
          if (!differ)
            throw StructuralError("motives '" + motives_[a].name + "' and '" + motives_[b].name +
                                  "' coincide on the block closure of cube " + std::to_string(c));
        }
    }
  }

  const Torus& torus() const { return torus_; }
  const BlockInteraction& interaction() const { return V_; }
  const MotivePartition& partition() const { return part_; }
  const std::vector<Motive>& motives() const { return motives_; }
  int motive_count() const { return static_cast<int>(motives_.size()); }
  const RestrictedEnsemble& ensemble(int d) const { return ensembles_.at(d); }
  double ground_energy(int d) const { return ground_.at(d); }
  /// e_0 = min_d e_d.
  double e0() const { return e0_; }
  int reach() const { return reach_; }
  int num_states() const { return V_.num_states; }

  const std::vector<int>& block_of(int x) const { return U_[x]; }
  const std::vector<int>& dependents(int y) const { return dependents_[y]; }
  const std::vector<int>& cube_sites(int c) const { return cube_sites_[c]; }
  const std::vector<int>& touching(int c) const { return touch_[c]; }
  int motive_class(int d, int y) const { return class_[d][y]; }

  /// Some state of motive d's class at site y.
  int representative(int d, int y) const {
    const int cls = class_[d][y];
    for (int s = 0; s < num_states(); ++s)
      if (part_.class_of[s] == cls) return s;
    throw StructuralError("empty motive class");
  }

  /// Motives d (as a bit mask) with state s allowed at y.
  std::uint64_t site_mask(int y, int s) const { return mask_[static_cast<std::size_t>(y) * num_states() + s]; }

  /// S_x: motives d with omega_{U(x)} in Omega_{d, U(x)}.
  std::uint64_t allowed_motives(int x, const Configuration& w) const {
    std::uint64_t m = ~std::uint64_t{0};
    for (int y : U_[x]) m &= site_mask(y, w[y]);
    return m & full_mask();
  }
  std::uint64_t full_mask() const {
    return motive_count() == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << motive_count()) - 1;
  }

  /// Phi_x(omega_{U(x)}); `scratch` is a reusable buffer.
  double phi(int x, const Configuration& w, std::vector<int>& scratch) const {
    scratch.resize(U_[x].size());
    for (std::size_t k = 0; k < U_[x].size(); ++k) scratch[k] = w[U_[x][k]];
    return V_.value_at_cell(cell_[x], scratch);
  }

  /// log of sum_{omega_C in Omega_{d,C}} exp(-beta sum_{x in C} Phi^d_x), i.e. -beta h_d ell^nu.
  double log_cube_factor(int d, double beta) const {
    const auto& E = ensembles_.at(d);
    double acc = 0.0;
    for (int x : cube_sites_[0]) {
      int k = detail::cell_index(E.period, torus_.coords(x));
      acc += detail::log_sum_exp_site(E.energy[k], E.allowed[k], beta);
    }
    return acc;
  }

  int cube_volume() const { return static_cast<int>(cube_sites_[0].size()); }

 private:
  Torus torus_;
  BlockInteraction V_;
  MotivePartition part_;
  std::vector<Motive> motives_;
  std::vector<RestrictedEnsemble> ensembles_;
  std::vector<double> ground_;
  double e0_ = 0.0;
  int reach_ = 0;
  std::vector<std::vector<int>> U_;
  std::vector<Site> cell_;
  std::vector<std::uint64_t> mask_;
  std::vector<std::vector<int>> class_;
  std::vector<std::vector<int>> dependents_;
  std::vector<std::vector<int>> cube_sites_;
  std::vector<std::vector<int>> touch_;
};

// ---------------------------------------------------------------------------
// Cube classification

enum class CubeKind { Calm, Neighbor, ClassicallyExcited, QuantumExcited };

inline const char* to_string(CubeKind k) {
  switch (k) {
    case CubeKind::Calm: return "calm";
    case CubeKind::Neighbor: return "neighbor";
    case CubeKind::ClassicallyExcited: return "classically-excited";
    case CubeKind::QuantumExcited: return "quantum-excited";
  }
  return "?";
}

struct CubeClassification {
  std::vector<CubeKind> kind;
  std::vector<int> label;  // motive index for calm cubes, -1 otherwise
};

/// One expansion term: configurations omega^1..omega^m and the site sets B_i
/// of its transitions. A classical term has one configuration and no transitions.
struct ExpansionTerm {
  std::vector<Configuration> path;
  std::vector<std::vector<int>> transitions;
};

/// Cubes met by B-bar = union of the radius-`reach` neighborhoods of B.
inline std::vector<int> transition_cubes(const ContourModel& M, const std::vector<int>& B) {
  std::vector<int> out;
  for (int x : B)
    for (int y : neighborhood(M.torus(), x, M.reach()).members) out.push_back(M.torus().cube_of(y));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline CubeClassification classify_cubes(const ContourModel& M, const ExpansionTerm& term) {
  const Torus& t = M.torus();
  if (term.path.empty()) throw ConfigError("expansion term needs at least one configuration");
  for (const auto& w : term.path) {
    if (static_cast<int>(w.size()) != t.site_count()) throw ConfigError("configuration size differs from site count");
    for (int s : w)
      if (s < 0 || s >= M.num_states()) throw ConfigError("configuration state out of range");
  }
  const int nc = t.cube_count();
  CubeClassification out;
  out.kind.assign(nc, CubeKind::Calm);
  out.label.assign(nc, -1);
  for (const auto& B : term.transitions)
    for (int c : transition_cubes(M, B)) out.kind[c] = CubeKind::QuantumExcited;
  for (int c = 0; c < nc; ++c) {
    if (out.kind[c] != CubeKind::Calm) continue;
    bool excited = false;
    for (const auto& w : term.path)
      for (int x : M.cube_sites(c))
        if (M.allowed_motives(x, w) == 0) excited = true;
    if (excited) out.kind[c] = CubeKind::ClassicallyExcited;
  }
  for (int c = 0; c < nc; ++c) {
    if (out.kind[c] != CubeKind::Calm) continue;
    for (int o : M.touching(c))
      if (out.kind[o] == CubeKind::QuantumExcited || out.kind[o] == CubeKind::ClassicallyExcited) {
        out.kind[c] = CubeKind::Neighbor;
        break;
      }
  }
  for (int c = 0; c < nc; ++c) {
    if (out.kind[c] != CubeKind::Calm) continue;
    std::uint64_t m = M.full_mask();
    for (int x : M.cube_sites(c)) m &= M.allowed_motives(x, term.path.front());
    if (std::popcount(m) != 1)
      throw StructuralError("calm cube " + std::to_string(c) + " matches " + std::to_string(std::popcount(m)) +
                            " motives; the motive set D is incomplete for this configuration");
    out.label[c] = std::countr_zero(m);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Contours

/// Support A (cubes), the exterior cubes touching A grouped into connected
/// components (the cube-level boundary components), and one motive label per
/// component.
struct Contour {
  std::vector<int> cubes;
  std::vector<std::vector<int>> boundary;
  std::vector<int> labels;
  bool winding = false;

  int site_count(const Torus& t) const {
    int per = 1;
    for (int d = 0; d < t.dimension(); ++d) per *= t.ell();
    return static_cast<int>(cubes.size()) * per;
  }
};

inline std::vector<int> dilate_cubes(const ContourModel& M, const std::vector<int>& cubes) {
  std::vector<int> out = cubes;
  for (int c : cubes) out.insert(out.end(), M.touching(c).begin(), M.touching(c).end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Cubes of A all of whose touching cubes lie in A.
inline std::vector<int> interior_cubes(const ContourModel& M, const std::vector<int>& cubes) {
  std::vector<int> out;
  for (int c : cubes) {
    bool inside = true;
    for (int o : M.touching(c))
      if (!std::binary_search(cubes.begin(), cubes.end(), o)) inside = false;
    if (inside) out.push_back(c);
  }
  return out;
}

/// A can be the support of a contour iff it is connected and A = dilate(interior(A)).
inline bool is_possible_support(const ContourModel& M, const std::vector<int>& cubes) {
  if (cubes.empty()) return false;
  if (connected_components(M.torus(), Region::cubes(cubes), Adjacency::CubeTouch).size() != 1) return false;
  auto in = interior_cubes(M, cubes);
  return !in.empty() && dilate_cubes(M, in) == cubes;
}

/// Builds a contour from its support, computing the boundary components.
inline Contour make_contour(const ContourModel& M, std::vector<int> cubes, std::vector<int> labels = {}) {
  std::sort(cubes.begin(), cubes.end());
  cubes.erase(std::unique(cubes.begin(), cubes.end()), cubes.end());
  Contour c;
  std::vector<int> layer;
  for (int x : dilate_cubes(M, cubes))
    if (!std::binary_search(cubes.begin(), cubes.end(), x)) layer.push_back(x);
  for (auto& comp : connected_components(M.torus(), Region::cubes(layer), Adjacency::CubeTouch))
    c.boundary.push_back(comp.members);
  c.winding = spans_torus(M.torus(), cubes);
  if (!labels.empty() && labels.size() != c.boundary.size())
    throw ConfigError("one label per boundary component is required");
  for (int l : labels)
    if (l < 0 || l >= M.motive_count()) throw ConfigError("contour label out of range");
  c.cubes = std::move(cubes);
  c.labels = std::move(labels);
  return c;
}

struct AdmissibleContourSet {
  std::vector<Contour> contours;
  std::vector<std::vector<int>> calm;  // W_d as cube lists, per motive
};

namespace detail {
inline std::vector<std::vector<int>> calm_components(const ContourModel& M, const std::vector<Contour>& contours) {
  std::vector<char> used(M.torus().cube_count(), 0);
  for (const auto& c : contours)
    for (int x : c.cubes) used[x] = 1;
  std::vector<int> rest;
  for (int x = 0; x < M.torus().cube_count(); ++x)
    if (!used[x]) rest.push_back(x);
  std::vector<std::vector<int>> out;
  for (auto& r : connected_components(M.torus(), Region::cubes(rest), Adjacency::CubeTouch)) out.push_back(r.members);
  return out;
}
}  // namespace detail

/// Connected components of the non-calm cubes become contour supports; labels
/// are read off the calm cubes of each boundary component.
inline AdmissibleContourSet extract_contours(const ContourModel& M, const CubeClassification& cls) {
  const Torus& t = M.torus();
  if (static_cast<int>(cls.kind.size()) != t.cube_count()) throw ConfigError("classification size differs from cube count");
  std::vector<int> hot;
  for (int c = 0; c < t.cube_count(); ++c)
    if (cls.kind[c] != CubeKind::Calm) hot.push_back(c);
  AdmissibleContourSet out;
  out.calm.resize(M.motive_count());
  for (auto& comp : connected_components(t, Region::cubes(hot), Adjacency::CubeTouch)) {
    Contour c = make_contour(M, comp.members);
    for (const auto& b : c.boundary) {
      int label = -1;
      for (int x : b) {
        if (cls.kind[x] != CubeKind::Calm || cls.label[x] < 0)
          throw StructuralError("boundary cube " + std::to_string(x) + " of a contour is not calm");
        if (label >= 0 && cls.label[x] != label)
          throw StructuralError("inconsistent labels on one boundary component of a contour");
        label = cls.label[x];
      }
      c.labels.push_back(label);
    }
    out.contours.push_back(std::move(c));
  }
  for (const auto& comp : detail::calm_components(M, out.contours)) {
    int label = cls.label[comp.front()];
    for (int x : comp) {
      if (cls.label[x] < 0 || cls.label[x] >= M.motive_count()) throw StructuralError("calm cube without a motive label");
      if (cls.label[x] != label) throw StructuralError("calm component carries two motive labels");
      out.calm[label].push_back(x);
    }
  }
  for (auto& v : out.calm) std::sort(v.begin(), v.end());
  return out;
}

/// Supports pairwise disjoint and non-touching, labels present, and every
/// calm component sees a single label on all adjacent boundary components.
inline bool is_admissible(const ContourModel& M, const std::vector<Contour>& contours) {
  const int nc = M.torus().cube_count();
  std::vector<int> owner(nc, -1);
  for (std::size_t i = 0; i < contours.size(); ++i) {
    const auto& c = contours[i];
    if (c.cubes.empty() || c.labels.size() != c.boundary.size()) return false;
    if (connected_components(M.torus(), Region::cubes(c.cubes), Adjacency::CubeTouch).size() != 1) return false;
    for (int x : c.cubes) {
      if (owner[x] >= 0) return false;
      owner[x] = static_cast<int>(i);
    }
  }
  for (std::size_t i = 0; i < contours.size(); ++i)
    for (int x : contours[i].cubes)
      for (int o : M.touching(x))
        if (owner[o] >= 0 && owner[o] != static_cast<int>(i)) return false;
  auto comps = detail::calm_components(M, contours);
  std::vector<int> comp_of(nc, -1);
  for (std::size_t k = 0; k < comps.size(); ++k)
    for (int x : comps[k]) comp_of[x] = static_cast<int>(k);
  std::vector<int> label(comps.size(), -1);
  for (const auto& c : contours)
    for (std::size_t b = 0; b < c.boundary.size(); ++b) {
      int k = comp_of[c.boundary[b].front()];
      if (k < 0) return false;
      if (label[k] >= 0 && label[k] != c.labels[b]) return false;
      label[k] = c.labels[b];
    }
  return true;
}

// ---------------------------------------------------------------------------
// Contour weights

struct ContourWeight {
  std::vector<double> orders;  // [0] classical part, [k] transition order k
  double value = 0.0;          // sum of orders
  std::uint64_t terms = 0;     // retained configurations or sequences
  double min_energy = std::numeric_limits<double>::infinity();  // lowest retained classical energy
};

namespace detail {

/// Site-level bookkeeping for enumerating configurations on a support.
struct SupportFrame {
  std::vector<int> sites;          // sites of A in enumeration order
  std::vector<int> pos;            // site -> position in `sites`, -1 outside A
  std::vector<int> label_of_site;  // boundary label for exterior sites, -1 otherwise
  std::vector<int> outer;          // exterior sites y with U(y) meeting A
  std::vector<int> cube_pos;       // cube -> index in support, -1 outside
  std::vector<char> interior;      // per support cube
  std::vector<std::vector<int>> touch_local;  // per support cube: touching support cubes (local indices)
  Configuration w;                 // exterior filled with label representatives
};

inline SupportFrame make_frame(const ContourModel& M, const Contour& c) {
  const Torus& t = M.torus();
  if (c.labels.size() != c.boundary.size()) throw ConfigError("contour needs one label per boundary component");
  SupportFrame f;
  const int n = t.site_count(), nu = t.dimension();
  f.pos.assign(n, -1);
  f.label_of_site.assign(n, -1);
  f.cube_pos.assign(t.cube_count(), -1);
  for (std::size_t k = 0; k < c.cubes.size(); ++k) f.cube_pos[c.cubes[k]] = static_cast<int>(k);

  // Unwrap along axes where the support leaves a gap, so that the sweep order
  // completes blocks early.
  std::vector<int> start(nu, 0);
  for (int d = 0; d < nu; ++d) {
    std::vector<char> hit(t.cubes_per_side(d), 0);
    for (int x : c.cubes) hit[t.cube_coords(x)[d]] = 1;
    for (int g = 0; g < t.cubes_per_side(d); ++g)
      if (!hit[g]) {
        start[d] = ((g + 1) % t.cubes_per_side(d)) * t.ell();
        break;
      }
  }
  std::vector<std::pair<long, int>> keyed;
  for (int x : c.cubes)
    for (int s : M.cube_sites(x)) {
      Site co = t.coords(s);
      long key = 0;
      for (int d = nu - 1; d >= 0; --d) key = key * t.extent(d) + Torus::mod(co[d] - start[d], t.extent(d));
      keyed.emplace_back(key, s);
    }
  std::sort(keyed.begin(), keyed.end());
  for (auto [k, s] : keyed) {
    f.pos[s] = static_cast<int>(f.sites.size());
    f.sites.push_back(s);
  }
  f.w.assign(n, 0);
  for (std::size_t b = 0; b < c.boundary.size(); ++b)
    for (int cube : c.boundary[b])
      for (int s : M.cube_sites(cube)) {
        f.label_of_site[s] = c.labels[b];
        f.w[s] = M.representative(c.labels[b], s);
      }
  std::vector<char> seen(n, 0);
  for (int x : f.sites)
    for (int y : M.dependents(x))
      if (f.pos[y] < 0 && !seen[y]) {
        seen[y] = 1;
        if (f.label_of_site[y] < 0) throw StructuralError("exterior site next to a support lies outside its boundary layer");
        f.outer.push_back(y);
      }
  std::sort(f.outer.begin(), f.outer.end());
  f.interior.assign(c.cubes.size(), 0);
  f.touch_local.resize(c.cubes.size());
  for (std::size_t k = 0; k < c.cubes.size(); ++k) {
    bool inside = true;
    for (int o : M.touching(c.cubes[k])) {
      if (f.cube_pos[o] < 0)
        inside = false;
      else
        f.touch_local[k].push_back(f.cube_pos[o]);
    }
    f.interior[k] = inside;
  }
  return f;
}

/// Every support cube is excited or touches an excited support cube.
inline bool covered(const SupportFrame& f, const std::vector<int>& excited_count) {
  for (std::size_t k = 0; k < f.interior.size(); ++k) {
    if (excited_count[k] > 0) continue;
    bool ok = false;
    for (int o : f.touch_local[k])
      if (excited_count[o] > 0) {
        ok = true;
        break;
      }
    if (!ok) return false;
  }
  return true;
}

}  // namespace detail

/// Classical weight: sum over configurations on A compatible with the labels
/// (every exterior site whose block meets A stays in its label's motive),
/// whose excited cubes avoid the cubes touching the exterior and whose other
/// cubes all touch an excited cube, of exp(-beta sum_{x in A} Phi_x).
inline ContourWeight contour_weight_classical(const ContourModel& M, const Contour& c, double beta,
                                              std::uint64_t budget = kDefaultContourBudget) {
  if (!(beta > 0)) throw ConfigError("beta must be positive");
  auto f = detail::make_frame(M, c);
  const int nA = static_cast<int>(f.sites.size()), S = M.num_states();
  const double e_ref = M.e0() * nA;
  // Sites to evaluate, grouped by the position at which their block is complete.
  std::vector<std::vector<int>> due(nA + 1);
  auto completion = [&](int z) {
    int p = -1;
    for (int y : M.block_of(z)) p = std::max(p, f.pos[y]);
    return p + 1;  // 0: complete before any assignment
  };
  for (int x : f.sites) due[completion(x)].push_back(x);
  for (int y : f.outer) due[completion(y)].push_back(y);

  ContourWeight out;
  out.orders.assign(1, 0.0);
  std::vector<int> excited(c.cubes.size(), 0), scratch;
  std::uint64_t nodes = 0;
  Configuration& w = f.w;

  // Returns the energy added at this step or NaN when a constraint fails.
  auto process = [&](int step, std::vector<int>& bumped) -> double {
    double e = 0.0;
    for (int z : due[step]) {
      std::uint64_t allowed = M.allowed_motives(z, w);
      if (f.pos[z] >= 0) {
        if (allowed == 0) {
          int k = f.cube_pos[M.torus().cube_of(z)];
          if (!f.interior[k]) return std::numeric_limits<double>::quiet_NaN();
          ++excited[k];
          bumped.push_back(k);
        }
        e += M.phi(z, w, scratch);
      } else if (!((allowed >> f.label_of_site[z]) & 1u)) {
        return std::numeric_limits<double>::quiet_NaN();
      }
    }
    return e;
  };

  std::vector<int> bumped0;
  double e_start = process(0, bumped0);
  if (std::isnan(e_start)) return out;

  // Iterative depth-first search over site states.
  std::vector<int> state(nA, -1);
  std::vector<double> energy(nA + 1, 0.0);
  std::vector<std::vector<int>> bumped(nA);
  energy[0] = e_start;
  int p = 0;
  while (p >= 0) {
    for (int k : bumped[p]) --excited[k];
    bumped[p].clear();
    if (++state[p] >= S) {
      state[p] = -1;
      --p;
      continue;
    }
    if (++nodes > budget) throw BudgetExceeded("contour weight enumeration exceeds the configuration budget");
    w[f.sites[p]] = state[p];
    double e = process(p + 1, bumped[p]);
    if (std::isnan(e)) continue;
    energy[p + 1] = energy[p] + e;
    if (p + 1 < nA) {
      ++p;
      continue;
    }
    if (!detail::covered(f, excited)) continue;
    out.orders[0] += std::exp(-beta * (energy[nA] - e_ref));
    out.min_energy = std::min(out.min_energy, energy[nA]);
    ++out.terms;
  }
  out.orders[0] *= std::exp(-beta * e_ref);
  out.value = out.orders[0];
  return out;
}

/// Quantum weight by transition order: order 0 is the classical weight; order
/// k sums closed sequences of k hops whose B-bar lies in A, starting from every
/// configuration of A, with the placement rules applied to the quantum excited
/// cubes Q (cubes met by some B-bar) and the classically excited cubes.
/// Requires the four-state fermion alphabet.
inline ContourWeight contour_weight_quantum(const ContourModel& M, std::span<const Hop> hops, const Contour& c, double beta,
                                            int m_max, std::uint64_t budget = kDefaultSequenceBudget) {
  if (m_max < 0) throw ConfigError("m_max must be >= 0");
  if (M.num_states() != 4) throw ConfigError("quantum contour weights need the four-state fermion alphabet");
  ContourWeight out = contour_weight_classical(M, c, beta, budget);
  out.orders.resize(m_max + 1, 0.0);
  if (m_max == 0) return out;
  auto f = detail::make_frame(M, c);
  const int nA = static_cast<int>(f.sites.size()), ncA = static_cast<int>(c.cubes.size());
  if (ncA > 64) throw BudgetExceeded("quantum contour weights support at most 64 cubes");
  if (2 * nA > 16) throw BudgetExceeded("support too large for quantum enumeration (4^|A| > 65536)");

  std::uint64_t interior_mask = 0, all_mask = 0;
  std::vector<std::uint64_t> closed_mask(ncA);
  for (int k = 0; k < ncA; ++k) {
    all_mask |= std::uint64_t{1} << k;
    if (f.interior[k]) interior_mask |= std::uint64_t{1} << k;
    closed_mask[k] = std::uint64_t{1} << k;
    for (int o : f.touch_local[k]) closed_mask[k] |= std::uint64_t{1} << o;
  }
  // Admissible hops and their Q masks.
  std::vector<int> hop_ids;
  std::vector<std::uint64_t> hop_q;
  for (std::size_t h = 0; h < hops.size(); ++h) {
    std::vector<int> B{hops[h].from_mode / 2, hops[h].to_mode / 2};
    std::uint64_t q = 0;
    bool inside = true;
    for (int cube : transition_cubes(M, B)) {
      if (f.cube_pos[cube] < 0) inside = false;
      else q |= std::uint64_t{1} << f.cube_pos[cube];
    }
    if (inside) {
      hop_ids.push_back(static_cast<int>(h));
      hop_q.push_back(q);
    }
  }

  struct Info {
    std::uint64_t excited;
    bool outer_ok;
    double energy;
  };
  std::unordered_map<std::uint64_t, Info> cache;
  std::vector<int> scratch;
  auto info = [&](std::uint64_t state) -> const Info& {
    auto it = cache.find(state);
    if (it != cache.end()) return it->second;
    Configuration& w = f.w;
    for (int x : f.sites) w[x] = FockBasis::local_state(state, x);
    Info r{0, true, 0.0};
    for (int x : f.sites) {
      if (M.allowed_motives(x, w) == 0) r.excited |= std::uint64_t{1} << f.cube_pos[M.torus().cube_of(x)];
      r.energy += M.phi(x, w, scratch);
    }
    for (int y : f.outer)
      if (!((M.allowed_motives(y, w) >> f.label_of_site[y]) & 1u)) r.outer_ok = false;
    return cache.emplace(state, r).first->second;
  };

  std::uint64_t evaluations = 0;
  std::vector<std::uint64_t> path;
  std::vector<double> energies;
  struct Frame {
    std::uint64_t state;
    double amplitude;
    std::uint64_t q;
    std::uint64_t excited;
    bool ok;
  };
  const std::uint64_t starts = std::uint64_t{1} << (2 * nA);
  for (std::uint64_t code = 0; code < starts; ++code) {
    std::uint64_t start = 0;
    for (int i = 0; i < nA; ++i) start |= ((code >> (2 * i)) & 3u) << (2 * f.sites[i]);
    const Info& i0 = info(start);
    path.assign(1, start);
    std::vector<Frame> frames{{start, 1.0, 0, i0.excited, i0.outer_ok}};
    std::vector<int> next{0};
    while (!next.empty()) {
      const int depth = static_cast<int>(next.size()) - 1;
      int& h = next.back();
      if (depth >= m_max || h >= static_cast<int>(hop_ids.size())) {
        next.pop_back();
        frames.pop_back();
        if (path.size() > 1) path.pop_back();
        continue;
      }
      const int local = h++;
      const Hop& hop = hops[hop_ids[local]];
      if (++evaluations > budget)
        throw BudgetExceeded("quantum contour enumeration budget exhausted at order " + std::to_string(depth + 1));
      std::uint64_t nxt;
      double sign;
      const Frame& top = frames.back();
      if (!apply_hop(top.state, hop.from_mode, hop.to_mode, nxt, sign)) continue;
      const double amp = top.amplitude * (-hop.amplitude * sign);
      const std::uint64_t q = top.q | hop_q[local];
      const int m = depth + 1;
      if (nxt == start && top.ok) {
        const std::uint64_t hot = q | (top.excited & ~q);
        std::uint64_t cover = 0;
        for (int k = 0; k < ncA; ++k)
          if ((hot >> k) & 1u) cover |= closed_mask[k];
        if ((hot & ~interior_mask) == 0 && cover == all_mask) {
          energies.resize(m + 1);
          for (int j = 0; j < m; ++j) energies[j] = info(path[j]).energy;
          energies[m] = energies[0];
          out.orders[m] += amp * simplex_exponential_integral(energies, beta);
          ++out.terms;
        }
      }
      const Info& in = info(nxt);
      path.push_back(nxt);
      frames.push_back({nxt, amp, q, top.excited | in.excited, top.ok && in.outer_ok});
      next.push_back(0);
    }
  }
  out.value = 0.0;
  for (double v : out.orders) out.value += v;
  return out;
}

// ---------------------------------------------------------------------------
// Support enumeration

/// Possible supports up to translation by whole cubes.
struct SupportInventory {
  std::vector<Contour> shapes;    // one representative per translation class, unlabeled
  std::vector<int> translates;    // number of distinct translates of each shape
  bool truncated = false;         // larger supports exist but were skipped
};

namespace detail {
inline std::vector<int> translate_cubes(const Torus& t, const std::vector<int>& cubes, std::span<const int> offset) {
  std::vector<int> out;
  out.reserve(cubes.size());
  for (int c : cubes) {
    Site cc = t.cube_coords(c);
    for (int d = 0; d < t.dimension(); ++d) cc[d] += offset[d];
    out.push_back(t.cube_index(cc));
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<int> canonical_translate(const Torus& t, const std::vector<int>& cubes) {
  std::vector<int> best;
  for (int o = 0; o < t.cube_count(); ++o) {
    auto tr = translate_cubes(t, cubes, t.cube_coords(o));
    if (best.empty() || tr < best) best = std::move(tr);
  }
  return best;
}
}  // namespace detail

/// Enumerates every possible support with at most `max_cubes` cubes
/// (max_cubes < 0: no cap) by growing excited sets E containing cube 0 and
/// taking A = dilate(E).
inline SupportInventory enumerate_supports(const ContourModel& M, int max_cubes = kDefaultMaxContourCubes,
                                           std::uint64_t budget = kDefaultContourBudget) {
  const Torus& t = M.torus();
  const int nc = t.cube_count();
  const int cap = max_cubes < 0 ? nc : max_cubes;
  // Cubes within cube sup-distance 3 keep dilate(E) connected.
  std::vector<std::vector<int>> near(nc);
  for (int a = 0; a < nc; ++a) {
    Site ca = t.cube_coords(a);
    for (int b = 0; b < nc; ++b) {
      if (a == b) continue;
      Site cb = t.cube_coords(b);
      bool ok = true;
      for (int d = 0; d < t.dimension(); ++d)
        if (Torus::circular_distance(ca[d], cb[d], t.cubes_per_side(d)) > 3) ok = false;
      if (ok) near[a].push_back(b);
    }
  }
  SupportInventory inv;
  std::set<std::vector<int>> seen_e, shapes;
  std::vector<std::vector<int>> stack{{0}};
  seen_e.insert({0});
  std::uint64_t work = 0;
  while (!stack.empty()) {
    auto E = std::move(stack.back());
    stack.pop_back();
    if (++work > budget) throw BudgetExceeded("support enumeration exceeds the budget");
    auto A = dilate_cubes(M, E);
    if (static_cast<int>(A.size()) > cap) {
      inv.truncated = true;
      continue;
    }
    if (is_possible_support(M, A)) shapes.insert(detail::canonical_translate(t, A));
    std::vector<int> cand;
    for (int e : E)
      for (int b : near[e])
        if (!std::binary_search(E.begin(), E.end(), b)) cand.push_back(b);
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    for (int b : cand) {
      auto F = E;
      F.insert(std::upper_bound(F.begin(), F.end(), b), b);
      if (seen_e.insert(F).second) stack.push_back(std::move(F));
    }
  }
  for (const auto& s : shapes) {
    inv.shapes.push_back(make_contour(M, s));
    std::set<std::vector<int>> tr;
    for (int o = 0; o < nc; ++o) tr.insert(detail::translate_cubes(t, s, t.cube_coords(o)));
    inv.translates.push_back(static_cast<int>(tr.size()));
  }
  return inv;
}

// ---------------------------------------------------------------------------
// Contour-model partition function

struct ContourPartitionResult {
  double Z = 0.0;
  double log_Z = 0.0;
  std::vector<double> order_terms;   // by total transition order (size 1 when classical)
  std::vector<double> partial_sums;  // Z_m
  std::size_t support_shapes = 0;
  std::size_t supports = 0;
  std::size_t admissible_sets = 0;   // including the empty set
  bool truncated = false;
  int max_cubes = -1;
};

namespace detail {

using WeightFn = std::function<std::vector<double>(const Contour&)>;

/// Sum over admissible sets of prod z(A_j) prod_d exp(-beta h_d |W_d|), as a
/// polynomial in the transition order. Weights enter scaled by
/// exp(beta e0 |A|) and restricted-ensemble factors by exp(beta e0 ell^nu).
inline ContourPartitionResult assemble(const ContourModel& M, double beta, int orders, int max_cubes,
                                       std::uint64_t budget, const WeightFn& weight) {
  if (!(beta > 0)) throw ConfigError("beta must be positive");
  const Torus& t = M.torus();
  const int nc = t.cube_count(), p = M.motive_count();
  auto inv = enumerate_supports(M, max_cubes, budget);

  struct Entry {
    int shape;
    Contour contour;
    CubeBits cubes, blocked;
  };
  std::vector<Entry> entries;
  for (std::size_t s = 0; s < inv.shapes.size(); ++s) {
    std::set<std::vector<int>> done;
    for (int o = 0; o < nc; ++o) {
      Site off = t.cube_coords(o);
      auto cubes = translate_cubes(t, inv.shapes[s].cubes, off);
      if (!done.insert(cubes).second) continue;
      Entry e{static_cast<int>(s), {}, CubeBits(nc), CubeBits(nc)};
      e.contour.cubes = cubes;
      e.contour.winding = inv.shapes[s].winding;
      for (const auto& b : inv.shapes[s].boundary) e.contour.boundary.push_back(translate_cubes(t, b, off));
      for (int c : cubes) e.cubes.set(c);
      for (int c : dilate_cubes(M, cubes)) e.blocked.set(c);
      entries.push_back(std::move(e));
    }
  }

  std::vector<double> zeta(p);
  for (int d = 0; d < p; ++d) zeta[d] = std::exp(M.log_cube_factor(d, beta) + beta * M.e0() * M.cube_volume());
  const int per = M.cube_volume();

  std::map<std::pair<int, std::vector<int>>, std::vector<double>> cache;
  auto scaled_weight = [&](const Entry& e, const std::vector<int>& labels) -> const std::vector<double>& {
    auto key = std::make_pair(e.shape, labels);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    Contour rep = inv.shapes[e.shape];
    rep.labels = labels;
    auto z = weight(rep);
    z.resize(orders, 0.0);
    const double scale = std::exp(beta * M.e0() * static_cast<double>(rep.cubes.size() * per));
    for (auto& v : z) v *= scale;
    return cache.emplace(key, std::move(z)).first->second;
  };

  ContourPartitionResult res;
  res.order_terms.assign(orders, 0.0);
  res.support_shapes = inv.shapes.size();
  res.supports = entries.size();
  res.truncated = inv.truncated;
  res.max_cubes = max_cubes;
  std::uint64_t work = 0;

  std::vector<int> chosen;
  auto evaluate = [&]() {
    ++res.admissible_sets;
    std::vector<Contour> cs;
    for (int i : chosen) cs.push_back(entries[i].contour);
    auto comps = calm_components(M, cs);
    std::vector<int> comp_of(nc, -1);
    for (std::size_t k = 0; k < comps.size(); ++k)
      for (int x : comps[k]) comp_of[x] = static_cast<int>(k);
    const int k = static_cast<int>(comps.size());
    std::vector<int> lab(k, 0);
    while (true) {
      if (++work > budget) throw BudgetExceeded("admissible-set enumeration exceeds the budget");
      std::vector<double> poly(orders, 0.0);
      poly[0] = 1.0;
      for (int c = 0; c < k; ++c) poly[0] *= std::pow(zeta[lab[c]], static_cast<double>(comps[c].size()));
      for (int i : chosen) {
        const Entry& e = entries[i];
        std::vector<int> labels;
        for (const auto& b : e.contour.boundary) labels.push_back(lab[comp_of[b.front()]]);
        const auto& z = scaled_weight(e, labels);
        std::vector<double> next(orders, 0.0);
        for (int a = 0; a < orders; ++a)
          if (poly[a] != 0.0)
            for (int b = 0; a + b < orders; ++b) next[a + b] += poly[a] * z[b];
        poly = std::move(next);
      }
      for (int a = 0; a < orders; ++a) res.order_terms[a] += poly[a];
      int c = 0;
      while (c < k && ++lab[c] == p) lab[c++] = 0;
      if (c == k) break;
    }
  };

  // Admissible sets: supports pairwise disjoint and non-touching.
  std::vector<CubeBits> blocked_stack{CubeBits(nc)};
  std::vector<int> next{0};
  evaluate();
  while (!next.empty()) {
    int& i = next.back();
    if (i >= static_cast<int>(entries.size())) {
      next.pop_back();
      blocked_stack.pop_back();
      if (!chosen.empty()) chosen.pop_back();
      continue;
    }
    const int cur = i++;
    if (entries[cur].cubes.intersects(blocked_stack.back())) continue;
    chosen.push_back(cur);
    evaluate();
    CubeBits b = blocked_stack.back();
    b |= entries[cur].blocked;
    blocked_stack.push_back(std::move(b));
    next.push_back(cur + 1);
  }

  const double shift = -beta * M.e0() * t.site_count();
  double total = 0.0;
  for (double v : res.order_terms) total += v;
  res.log_Z = std::log(total) + shift;
  res.Z = std::exp(res.log_Z);
  const double factor = std::exp(shift);
  double acc = 0.0;
  for (auto& v : res.order_terms) {
    v *= factor;
    acc += v;
    res.partial_sums.push_back(acc);
  }
  return res;
}

}  // namespace detail

/// Classical contour-model partition function. max_cubes < 0 includes every support.
inline ContourPartitionResult contour_partition_function(const ContourModel& M, double beta, int max_cubes = -1,
                                                         std::uint64_t budget = kDefaultContourBudget) {
  return detail::assemble(M, beta, 1, max_cubes, budget,
                          [&](const Contour& c) { return contour_weight_classical(M, c, beta, budget).orders; });
}

/// Contour-model partition function by total transition order 0..m_max.
inline ContourPartitionResult contour_partition_function_quantum(const ContourModel& M, std::span<const Hop> hops,
                                                                 double beta, int m_max, int max_cubes = -1,
                                                                 std::uint64_t budget = kDefaultSequenceBudget) {
  return detail::assemble(M, beta, m_max + 1, max_cubes, budget, [&](const Contour& c) {
    return contour_weight_quantum(M, hops, c, beta, m_max, budget).orders;
  });
}

// ---------------------------------------------------------------------------
// Inventories and the decay bound

struct ContourRecord {
  Contour contour;
  int translates = 1;
  int sites = 0;
  ContourWeight weight;
};

/// Classical weights of every labeled support shape with at most `max_cubes`
/// cubes. `labels`: when set, only the uniform labeling by that motive.
inline std::vector<ContourRecord> contour_inventory(const ContourModel& M, double beta,
                                                    int max_cubes = kDefaultMaxContourCubes,
                                                    std::optional<int> uniform_label = std::nullopt,
                                                    std::uint64_t budget = kDefaultContourBudget) {
  auto inv = enumerate_supports(M, max_cubes, budget);
  const int p = M.motive_count();
  std::vector<ContourRecord> out;
  for (std::size_t s = 0; s < inv.shapes.size(); ++s) {
    const auto& shape = inv.shapes[s];
    const int k = static_cast<int>(shape.boundary.size());
    std::vector<int> lab(k, uniform_label.value_or(0));
    while (true) {
      ContourRecord r;
      r.contour = shape;
      r.contour.labels = lab;
      r.translates = inv.translates[s];
      r.sites = shape.site_count(M.torus());
      r.weight = contour_weight_classical(M, r.contour, beta, budget);
      out.push_back(std::move(r));
      if (uniform_label) break;
      int c = 0;
      while (c < k && ++lab[c] == p) lab[c++] = 0;
      if (c == k) break;
    }
  }
  return out;
}

struct DecayRow {
  std::size_t record = 0;
  int cubes = 0;
  int sites = 0;
  double abs_weight = 0.0;
  double tau = 0.0;  // -(log|z| + beta e0 |A|) / |A|; +inf for a vanishing weight
  bool winding = false;
  bool passes = true;
};

struct DecayReport {
  double beta = 0.0;
  double tau = 0.0;             // requested decay rate
  double e0 = 0.0;
  double gap = 0.0;             // Delta of the motive set
  double tau_certified = 0.0;   // largest tau valid for every non-winding contour
  double tau_sufficient = 0.0;  // beta Delta / (2 nu ell^nu) - log M
  bool bound_holds = true;      // |z| e^{tau|A|} e^{beta e0 |A|} <= 1 for every non-winding contour
  bool consistent = true;       // tau_certified >= tau_sufficient whenever the latter is positive
  std::size_t winding_excluded = 0;
  std::vector<DecayRow> rows;
};

inline DecayReport verify_decay_bound(const std::vector<ContourRecord>& records, const ContourModel& M, double beta,
                                      double tau) {
  DecayReport rep;
  rep.beta = beta;
  rep.tau = tau;
  rep.e0 = M.e0();
  rep.gap = check_gaps(M.interaction(), M.partition(), std::nullopt, M.motives()).delta;
  const int nu = M.torus().dimension();
  rep.tau_sufficient = beta * rep.gap / (2.0 * nu * M.cube_volume()) - std::log(static_cast<double>(M.num_states()));
  rep.tau_certified = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    DecayRow row;
    row.record = i;
    row.cubes = static_cast<int>(r.contour.cubes.size());
    row.sites = r.sites;
    row.abs_weight = std::abs(r.weight.value);
    row.winding = r.contour.winding;
    row.tau = row.abs_weight > 0 ? -(std::log(row.abs_weight) + beta * rep.e0 * r.sites) / r.sites
                                 : std::numeric_limits<double>::infinity();
    row.passes = row.tau >= tau;
    if (row.winding) {
      ++rep.winding_excluded;
    } else {
      rep.tau_certified = std::min(rep.tau_certified, row.tau);
      if (!row.passes) rep.bound_holds = false;
    }
    rep.rows.push_back(row);
  }
  rep.consistent = rep.tau_sufficient <= 0 || rep.tau_certified >= rep.tau_sufficient;
  return rep;
}

inline std::string decay_csv(const DecayReport& rep) {
  std::ostringstream os;
  os.precision(17);
  os << "record,cubes,sites,abs_weight,tau,winding,passes\n";
  for (const auto& r : rep.rows)
    os << r.record << ',' << r.cubes << ',' << r.sites << ',' << r.abs_weight << ',' << r.tau << ','
       << (r.winding ? 1 : 0) << ',' << (r.passes ? 1 : 0) << '\n';
  return os.str();
}

inline nlohmann::json to_json(const ContourModel& M, const Contour& c) {
  nlohmann::json j;
  j["cubes"] = c.cubes;
  j["boundary"] = c.boundary;
  std::vector<std::string> names;
  for (int l : c.labels) names.push_back(M.motives()[l].name);
  j["labels"] = names;
  j["winding"] = c.winding;
  return j;
}

inline nlohmann::json to_json(const ContourModel& M, const ContourRecord& r) {
  nlohmann::json j = to_json(M, r.contour);
  j["translates"] = r.translates;
  j["sites"] = r.sites;
  j["weight"] = r.weight.value;
  j["orders"] = r.weight.orders;
  j["terms"] = r.weight.terms;
  return j;
}

}  // namespace contourlab
