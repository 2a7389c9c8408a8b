#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "contourlab/errors.hpp"

namespace contourlab {

using Site = std::vector<int>;

/// Periodic hypercubic lattice (Z/L_0 Z) x ... x (Z/L_{nu-1} Z) partitioned
/// into cubes of side ell.
///
/// Sites are numbered lexicographically with the first coordinate running
/// fastest (last coordinate most significant). This numbering is the fixed
/// total order used for fermionic signs. Cubes are numbered the same way on
/// the coarse cube lattice.
class Torus {
 public:
  Torus(int nu, int L, int ell = 1) : Torus(std::vector<int>(nu > 0 ? nu : 0, L), ell) {
    if (nu < 1) throw ConfigError("torus dimension must be >= 1");
  }

  explicit Torus(std::vector<int> extents, int ell = 1) : extents_(std::move(extents)), ell_(ell) {
    if (extents_.empty()) throw ConfigError("torus dimension must be >= 1");
    if (ell_ < 1) throw ConfigError("cube side must be >= 1");
    sites_ = 1;
    cubes_ = 1;
    for (int L : extents_) {
      if (L < 2) throw ConfigError("torus extents must be >= 2");
      if (L % ell_ != 0) throw ConfigError("cube side must divide every torus extent");
      sites_ *= L;
      cubes_ *= L / ell_;
    }
  }

  int dimension() const { return static_cast<int>(extents_.size()); }
  int extent(int d) const { return extents_[d]; }
  const std::vector<int>& extents() const { return extents_; }
  bool is_uniform() const {
    return std::all_of(extents_.begin(), extents_.end(), [&](int L) { return L == extents_[0]; });
  }
  int ell() const { return ell_; }
  int site_count() const { return sites_; }
  int cube_count() const { return cubes_; }
  int cubes_per_side(int d) const { return extents_[d] / ell_; }

  Site coords(int index) const {
    Site c(extents_.size());
    for (std::size_t d = 0; d < extents_.size(); ++d) {
      c[d] = index % extents_[d];
      index /= extents_[d];
    }
    return c;
  }

  /// Index of a site; coordinates are reduced modulo the extents.
  int index(std::span<const int> c) const {
    int idx = 0;
    for (int d = dimension() - 1; d >= 0; --d) idx = idx * extents_[d] + mod(c[d], extents_[d]);
    return idx;
  }
  int index(std::initializer_list<int> c) const { return index(std::span<const int>(c.begin(), c.size())); }

  int shifted(int site, int dir, int step) const {
    Site c = coords(site);
    c[dir] += step;
    return index(c);
  }

  int translate(int site, std::span<const int> offset) const {
    Site c = coords(site);
    for (std::size_t d = 0; d < c.size(); ++d) c[d] += offset[d];
    return index(c);
  }

  /// Torus sup-distance between two sites.
  int sup_distance(int a, int b) const {
    Site ca = coords(a), cb = coords(b);
    int best = 0;
    for (int d = 0; d < dimension(); ++d) best = std::max(best, circular_distance(ca[d], cb[d], extents_[d]));
    return best;
  }

  // Cube geometry.
  Site cube_coords(int cube) const {
    Site c(extents_.size());
    for (int d = 0; d < dimension(); ++d) {
      c[d] = cube % cubes_per_side(d);
      cube /= cubes_per_side(d);
    }
    return c;
  }
  int cube_index(std::span<const int> c) const {
    int idx = 0;
    for (int d = dimension() - 1; d >= 0; --d) idx = idx * cubes_per_side(d) + mod(c[d], cubes_per_side(d));
    return idx;
  }
  int cube_of(int site) const {
    Site c = coords(site);
    for (auto& v : c) v /= ell_;
    return cube_index(c);
  }
  std::vector<int> cube_sites(int cube) const {
    Site base = cube_coords(cube);
    for (auto& v : base) v *= ell_;
    std::vector<int> out;
    int per = 1;
    for (int d = 0; d < dimension(); ++d) per *= ell_;
    out.reserve(per);
    Site c(base.size());
    for (int k = 0; k < per; ++k) {
      int r = k;
      for (int d = 0; d < dimension(); ++d) {
        c[d] = base[d] + r % ell_;
        r /= ell_;
      }
      out.push_back(index(c));
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Distinct cubes C != C' are neighbors iff they contain sites at
  /// sup-distance 1, i.e. their cube coordinates are at cube sup-distance 1.
  /// Diagonal contact counts.
  bool cubes_touch(int a, int b) const {
    if (a == b) return false;
    Site ca = cube_coords(a), cb = cube_coords(b);
    for (int d = 0; d < dimension(); ++d)
      if (circular_distance(ca[d], cb[d], cubes_per_side(d)) > 1) return false;
    return true;
  }

  std::vector<int> touching_cubes(int cube) const {
    std::vector<int> out;
    for (int c = 0; c < cubes_; ++c)
      if (cubes_touch(cube, c)) out.push_back(c);
    return out;
  }

  static int mod(int a, int n) {
    int r = a % n;
    return r < 0 ? r + n : r;
  }
  static int circular_distance(int a, int b, int n) {
    int d = mod(a - b, n);
    return std::min(d, n - d);
  }

  friend bool operator==(const Torus& a, const Torus& b) { return a.extents_ == b.extents_ && a.ell_ == b.ell_; }

 private:
  std::vector<int> extents_;
  int ell_;
  int sites_ = 0;
  int cubes_ = 0;
};

enum class RegionKind { Sites, Cubes };

/// Finite set of sites or of cubes, kept sorted and duplicate free.
struct Region {
  RegionKind kind = RegionKind::Sites;
  std::vector<int> members;

  Region() = default;
  Region(RegionKind k, std::vector<int> m) : kind(k), members(std::move(m)) {
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
  }
  static Region sites(std::vector<int> m) { return {RegionKind::Sites, std::move(m)}; }
  static Region cubes(std::vector<int> m) { return {RegionKind::Cubes, std::move(m)}; }

  bool contains(int x) const { return std::binary_search(members.begin(), members.end(), x); }
  std::size_t size() const { return members.size(); }
  bool empty() const { return members.empty(); }
  friend bool operator==(const Region&, const Region&) = default;
};

/// All sites within sup-distance R of x on the torus.
inline Region neighborhood(const Torus& t, int x, int R) {
  if (R < 0) throw ConfigError("neighborhood radius must be >= 0");
  std::vector<int> out;
  const int nu = t.dimension();
  Site base = t.coords(x);
  Site off(nu, -R);
  while (true) {
    Site c = base;
    for (int d = 0; d < nu; ++d) c[d] += off[d];
    out.push_back(t.index(c));
    int d = 0;
    while (d < nu && off[d] == R) off[d++] = -R;
    if (d == nu) break;
    ++off[d];
  }
  return Region::sites(std::move(out));
}

enum class Adjacency { SiteNearestNeighbor, CubeTouch };

/// Partition of a region into maximal connected pieces. Components are
/// returned ordered by their smallest member.
inline std::vector<Region> connected_components(const Torus& t, const Region& r, Adjacency adj) {
  const bool cubes = adj == Adjacency::CubeTouch;
  if (cubes != (r.kind == RegionKind::Cubes))
    throw ConfigError("region representation does not match adjacency kind");
  std::vector<Region> out;
  std::vector<char> seen(r.size(), 0);
  auto position = [&](int x) -> long {
    auto it = std::lower_bound(r.members.begin(), r.members.end(), x);
    return (it != r.members.end() && *it == x) ? it - r.members.begin() : -1;
  };
  for (std::size_t s = 0; s < r.size(); ++s) {
    if (seen[s]) continue;
    std::vector<int> comp;
    std::queue<std::size_t> q;
    q.push(s);
    seen[s] = 1;
    while (!q.empty()) {
      int x = r.members[q.front()];
      q.pop();
      comp.push_back(x);
      std::vector<int> nbrs;
      if (cubes) {
        nbrs = t.touching_cubes(x);
      } else {
        for (int d = 0; d < t.dimension(); ++d) {
          nbrs.push_back(t.shifted(x, d, 1));
          nbrs.push_back(t.shifted(x, d, -1));
        }
      }
      for (int y : nbrs) {
        long p = position(y);
        if (p >= 0 && !seen[p]) {
          seen[p] = 1;
          q.push(static_cast<std::size_t>(p));
        }
      }
    }
    out.push_back(Region(r.kind, std::move(comp)));
  }
  return out;
}

/// Unit face between site `site` and site + e_dir.
struct Plaquette {
  int site;
  int dir;
  friend auto operator<=>(const Plaquette&, const Plaquette&) = default;
};

struct BoundaryComponentSet {
  std::vector<std::vector<Plaquette>> components;
  std::size_t plaquette_count() const {
    std::size_t n = 0;
    for (const auto& c : components) n += c.size();
    return n;
  }
};

/// Closed unit faces separating members from non-members, grouped into
/// components of touching faces (any common point counts).
inline BoundaryComponentSet region_boundary(const Torus& t, const Region& r) {
  if (r.kind != RegionKind::Sites) throw ConfigError("region_boundary expects a site region");
  if (r.empty() || static_cast<int>(r.size()) >= t.site_count())
    throw BoundaryUndefined("boundary is undefined for the empty region or the whole torus");
  std::vector<Plaquette> faces;
  for (int x : r.members) {
    for (int d = 0; d < t.dimension(); ++d) {
      int up = t.shifted(x, d, 1);
      int down = t.shifted(x, d, -1);
      if (!r.contains(up)) faces.push_back({x, d});
      if (!r.contains(down)) faces.push_back({down, d});
    }
  }
  std::sort(faces.begin(), faces.end());
  faces.erase(std::unique(faces.begin(), faces.end()), faces.end());

  // Doubled coordinates: face center 2x + e_dir, half-widths 0 along dir
  // and 1 across.
  const int nu = t.dimension();
  auto touch = [&](const Plaquette& a, const Plaquette& b) {
    Site ca = t.coords(a.site), cb = t.coords(b.site);
    for (int i = 0; i < nu; ++i) {
      int pa = 2 * ca[i] + (a.dir == i ? 1 : 0);
      int pb = 2 * cb[i] + (b.dir == i ? 1 : 0);
      int reach = (a.dir == i ? 0 : 1) + (b.dir == i ? 0 : 1);
      if (Torus::circular_distance(pa, pb, 2 * t.extent(i)) > reach) return false;
    }
    return true;
  };

  BoundaryComponentSet out;
  std::vector<char> seen(faces.size(), 0);
  for (std::size_t s = 0; s < faces.size(); ++s) {
    if (seen[s]) continue;
    std::vector<Plaquette> comp;
    std::vector<std::size_t> stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      std::size_t i = stack.back();
      stack.pop_back();
      comp.push_back(faces[i]);
      for (std::size_t j = 0; j < faces.size(); ++j)
        if (!seen[j] && touch(faces[i], faces[j])) {
          seen[j] = 1;
          stack.push_back(j);
        }
    }
    std::sort(comp.begin(), comp.end());
    out.components.push_back(std::move(comp));
  }
  return out;
}

/// Site order index (bijection onto 0..|sites|-1).
inline int site_order(const Torus& t, std::span<const int> coords) { return t.index(coords); }

/// A cube set "spans" the torus when its projection onto some axis covers
/// every cube coordinate. Supports of this kind may wrap around and are
/// flagged as winding.
inline bool spans_torus(const Torus& t, const std::vector<int>& cubes) {
  for (int d = 0; d < t.dimension(); ++d) {
    std::vector<char> hit(t.cubes_per_side(d), 0);
    for (int c : cubes) hit[t.cube_coords(c)[d]] = 1;
    if (std::all_of(hit.begin(), hit.end(), [](char h) { return h != 0; })) return true;
  }
  return false;
}

// JSON form: {"nu":2,"L":4,"ell":2,"sites":[[0,0],...]} with sites in site
// order. Non-uniform tori carry an "extents" array instead of "L".
inline nlohmann::json to_json(const Torus& t, const Region& r) {
  nlohmann::json j;
  j["nu"] = t.dimension();
  if (t.is_uniform())
    j["L"] = t.extent(0);
  else
    j["extents"] = t.extents();
  j["ell"] = t.ell();
  nlohmann::json members = nlohmann::json::array();
  if (r.kind == RegionKind::Sites) {
    for (int x : r.members) members.push_back(t.coords(x));
    j["sites"] = members;
  } else {
    for (int c : r.members) members.push_back(t.cube_coords(c));
    j["cubes"] = members;
  }
  return j;
}

inline std::pair<Torus, Region> torus_region_from_json(const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k != "nu" && k != "L" && k != "extents" && k != "ell" && k != "sites" && k != "cubes")
      throw ConfigError("unknown region field '" + k + "'");
  }
  int nu = j.at("nu").get<int>();
  int ell = j.value("ell", 1);
  std::vector<int> ext = j.contains("extents") ? j.at("extents").get<std::vector<int>>()
                                               : std::vector<int>(nu, j.at("L").get<int>());
  if (static_cast<int>(ext.size()) != nu) throw ConfigError("extents length differs from nu");
  Torus t(ext, ell);
  std::vector<int> members;
  if (j.contains("cubes")) {
    for (const auto& c : j.at("cubes")) members.push_back(t.cube_index(c.get<std::vector<int>>()));
    return {t, Region::cubes(std::move(members))};
  }
  if (j.contains("sites"))
    for (const auto& c : j.at("sites")) members.push_back(t.index(c.get<std::vector<int>>()));
  return {t, Region::sites(std::move(members))};
}

}  // namespace contourlab
