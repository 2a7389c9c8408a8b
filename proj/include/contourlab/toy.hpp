#pragma once

#include <cmath>
#include <vector>

#include "contourlab/classical.hpp"

namespace contourlab::toy {

/// Two-state model (states "+" = 0 and "-" = 1) with energy J per disagreeing
/// nearest-neighbor bond and h per "-" site, written as a unit-cube block
/// interaction. Parameters are ordered (J, h).
struct TwoStateModel {
  BlockInteraction block;
  MotivePartition partition;
  std::vector<Motive> motives;  // "+" and "-"
};

inline TwoStateModel two_state(int nu, double J, double h = 0.0) {
  auto offsets = unit_cube_block(nu);
  std::vector<std::pair<int, int>> edges;
  for (int a = 0; a < static_cast<int>(offsets.size()); ++a)
    for (int b = a + 1; b < static_cast<int>(offsets.size()); ++b) {
      int diff = 0;
      for (int d = 0; d < nu; ++d) diff += std::abs(offsets[a][d] - offsets[b][d]);
      if (diff == 1) edges.emplace_back(a, b);
    }
  const double edge_share = std::ldexp(1.0, -(nu - 1)), site_share = std::ldexp(1.0, -nu);
  auto coeffs = [edges, edge_share, site_share](std::span<const int> local) {
    double bad = 0, minus = 0;
    for (auto [a, b] : edges) bad += local[a] != local[b];
    for (int s : local) minus += s;
    return std::pair{bad * edge_share, minus * site_share};
  };
  TwoStateModel m;
  m.block.num_states = 2;
  m.block.block = offsets;
  m.block.period = std::vector<int>(nu, 1);
  m.block.param_names = {"J", "h"};
  m.block.params = {J, h};
  m.block.phi = [coeffs](std::span<const int>, std::span<const int> local, std::span<const double> p) {
    auto [a, b] = coeffs(local);
    return a * p[0] + b * p[1];
  };
  m.block.dphi = [coeffs](std::span<const int>, std::span<const int> local, std::span<const double>, std::span<double> out) {
    auto [a, b] = coeffs(local);
    out[0] = a;
    out[1] = b;
  };
  m.partition = MotivePartition::identity(2);
  m.motives = {Motive("+", std::vector<int>(nu, 1), {0}), Motive("-", std::vector<int>(nu, 1), {1})};
  return m;
}

}  // namespace contourlab::toy
