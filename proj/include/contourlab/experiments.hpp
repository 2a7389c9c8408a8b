#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "contourlab/classical.hpp"
#include "contourlab/config.hpp"
#include "contourlab/contour.hpp"
#include "contourlab/duhamel.hpp"
#include "contourlab/fock.hpp"
#include "contourlab/hubbard.hpp"
#include "contourlab/oracles.hpp"
#include "contourlab/phasediag.hpp"

namespace contourlab {

/// Invariant violation detected by a run (exit status 4).
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

struct RunResult {
  std::vector<std::pair<std::string, std::string>> files;  // file name, contents
  nlohmann::json summary;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline int resolve_workers(int w) { return w > 0 ? w : std::max(1u, std::thread::hardware_concurrency()); }

inline double single_beta(const ExperimentConfig& c) {
  if (c.beta.size() != 1) throw ConfigError(c.command + " takes a single beta");
  return c.beta[0];
}

inline void require_finite_betas(const ExperimentConfig& c) {
  for (double b : c.beta)
    if (std::isinf(b)) throw ConfigError(c.command + " needs finite beta");
}

inline nlohmann::json witness_json(const std::optional<GapWitness>& w) {
  if (!w) return nullptr;
  return {{"cell_point", w->cell_point}, {"pattern", w->pattern}, {"excess", w->excess}};
}

/// Cells whose argmin holds only chessboard families, grouped into connected
/// regions; reported descriptively as the merged chessboard domain.
inline nlohmann::json chessboard_region(const DiagramGrid& g) {
  std::uint64_t cb = 0;
  for (std::size_t k = 0; k < g.labels.size(); ++k)
    if (g.labels[k].front() == '(') cb |= std::uint64_t{1} << k;
  std::vector<int> comp(g.argmin.size(), -1);
  int regions = 0;
  std::size_t cells = 0;
  for (int s = 0; s < static_cast<int>(g.argmin.size()); ++s) {
    if (comp[s] >= 0 || (g.argmin[s] & ~cb) != 0) continue;
    std::vector<int> stack{s};
    comp[s] = regions;
    while (!stack.empty()) {
      const int c = stack.back();
      stack.pop_back();
      ++cells;
      const int i = c % g.x.n, j = c / g.x.n;
      const int nb[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
      for (auto& q : nb) {
        if (q[0] < 0 || q[0] >= g.x.n || q[1] < 0 || q[1] >= g.y.n) continue;
        const int k = g.index(q[0], q[1]);
        if (comp[k] < 0 && (g.argmin[k] & ~cb) == 0) {
          comp[k] = regions;
          stack.push_back(k);
        }
      }
    }
    ++regions;
  }
  return {{"cells", cells}, {"regions", regions}};
}

}  // namespace detail

inline RunResult run_verify_classical(const ExperimentConfig& c) {
  detail::require_finite_betas(c);
  auto S = classical_setup(c.model);
  ContourModel M(S.torus, S.block, S.partition, S.motives, c.budget);
  const double tol = c.resolved_tolerance();
  RunResult r;
  std::string csv = "beta,log_Z_contour,log_Z_brute,rel_err,supports,admissible_sets\n";
  r.summary["rows"] = nlohmann::json::array();
  for (double beta : c.beta) {
    auto z = contour_partition_function(M, beta, -1, c.budget);
    const double lb = brute_force_log_Z(S.block, S.torus, beta);
    const double rel = std::abs(std::expm1(z.log_Z - lb));
    csv += detail::fmt(beta) + ',' + detail::fmt(z.log_Z) + ',' + detail::fmt(lb) + ',' + detail::fmt(rel) + ',' +
           std::to_string(z.supports) + ',' + std::to_string(z.admissible_sets) + '\n';
    r.summary["rows"].push_back({{"beta", beta},
                                 {"log_Z_contour", z.log_Z},
                                 {"log_Z_brute", lb},
                                 {"rel_err", rel},
                                 {"support_shapes", z.support_shapes},
                                 {"supports", z.supports},
                                 {"admissible_sets", z.admissible_sets}});
    if (z.truncated) r.violations.push_back("contour sum truncated at beta " + detail::fmt(beta));
    if (!(rel <= tol)) r.violations.push_back("rel_err " + detail::fmt(rel) + " > " + detail::fmt(tol) + " at beta " + detail::fmt(beta));
  }
  r.files.emplace_back("verify-classical.csv", csv);
  return r;
}

inline RunResult run_verify_quantum(const ExperimentConfig& c) {
  detail::require_finite_betas(c);
  const auto& p = require_hubbard(c.model, c.command);
  auto qm = hubbard::quantum_model(p, Torus(c.model.extents, c.model.ell));
  const auto spec = diagonalize(qm.hamiltonian());
  const double tol = c.resolved_tolerance(), tmax = max_abs_amplitude(qm);
  RunResult r;
  std::string csv = "beta,m,Z_m,rel_err,ratio\n";
  r.summary["rows"] = nlohmann::json::array();
  for (double beta : c.beta) {
    const double Z = trace_exp(spec, beta, qm.site_count()).Z;
    auto rep = convergence_report(expand_partition_function_aggregated(qm, beta, c.m_max), Z, beta, tmax);
    for (const auto& row : rep.rows)
      csv += detail::fmt(beta) + ',' + std::to_string(row.m) + ',' + detail::fmt(row.Z_m) + ',' + detail::fmt(row.rel_err) +
             ',' + detail::fmt(row.ratio) + '\n';
    auto full = expand_partition_function_converged(qm, beta);
    const double rel = std::abs(full.partial_sums.back() - Z) / std::abs(Z);
    nlohmann::json errs = nlohmann::json::array();
    for (const auto& row : rep.rows) errs.push_back(row.rel_err);
    r.summary["rows"].push_back({{"beta", beta},
                                 {"Z_exact", Z},
                                 {"beta_t", rep.beta_t_norm},
                                 {"in_regime", rep.in_regime},
                                 {"rel_err_by_order", errs},
                                 {"converged_order", static_cast<int>(full.partial_sums.size()) - 1},
                                 {"converged_rel_err", rel}});
    if (!(rel <= tol)) r.violations.push_back("converged series off by " + detail::fmt(rel) + " at beta " + detail::fmt(beta));
  }
  r.files.emplace_back("verify-quantum.csv", csv);
  return r;
}

inline RunResult run_scan(const ExperimentConfig& c) {
  const auto& p = require_hubbard(c.model, c.command);
  const double beta = detail::single_beta(c);
  auto g = hubbard::scan_families(p.W, p.nu, beta, c.u, c.m, c.tie_tol, detail::resolve_workers(c.workers));
  RunResult r;
  r.summary = diagram_summary(g, static_cast<int>(g.labels.size()));
  const int bad = hubbard::boundary_line_violations(g, p.W, p.nu, beta);
  r.summary["boundary_line_violations"] = bad;
  r.summary["chessboard_region"] = detail::chessboard_region(g);
  r.summary["units"] = "u = U/(nu|W|), m = mu/(nu|W|)";
  r.summary["free_energies"] = std::isinf(beta) ? "zero-temperature family energies" : "restricted free energies";
  if (bad > 0) r.violations.push_back(std::to_string(bad) + " boundary cells off the derived equality lines");
  for (const auto& v : r.summary["violations"]) r.violations.push_back(v.get<std::string>());
  r.files.emplace_back("scan.csv", diagram_csv(g));
  return r;
}

inline RunResult run_gaps(const ExperimentConfig& c) {
  auto S = classical_setup(c.model);
  auto rep = check_gaps(S.block, S.partition, std::nullopt, S.motives, c.budget);
  RunResult r;
  nlohmann::json names = nlohmann::json::array();
  for (const auto& g : S.motives) names.push_back(g.name);
  r.summary = {{"motives", names},
               {"delta0", std::isinf(rep.delta0) ? nlohmann::json("inf") : nlohmann::json(rep.delta0)},
               {"delta", std::isinf(rep.delta) ? nlohmann::json("inf") : nlohmann::json(rep.delta)},
               {"delta_witness", detail::witness_json(rep.delta_witness)},
               {"delta0_witness", detail::witness_json(rep.delta0_witness)},
               {"ground_energy", rep.ground_energy},
               {"ground_energy_constant", rep.ground_energy_constant}};
  if (c.model.kind == "hubbard" && std::isfinite(c.beta[0])) {
    auto m = hubbard::classical_model(c.model.hubbard, c.model.alphabet);
    std::vector<Motive> D;
    for (const char* n : {"0", "1", "2"})
      for (const auto& g : m.motives)
        if (g.name == n) D.push_back(g);
    if (D.size() == 3) {
      auto dm = derivative_matrix(m.block, m.partition, D, {0, 2}, c.beta[0]);
      auto mat = [](const DerivativeMatrix& d) {
        std::vector<std::vector<double>> rows(d.matrix.rows());
        for (Eigen::Index i = 0; i < d.matrix.rows(); ++i)
          for (Eigen::Index j = 0; j < d.matrix.cols(); ++j) rows[i].push_back(d.matrix(i, j));
        return nlohmann::json{{"matrix", rows},
                              {"condition", std::isinf(d.condition) ? nlohmann::json("inf") : nlohmann::json(d.condition)},
                              {"singular", d.singular}};
      };
      r.summary["derivative_matrix"] = {{"motives", {"0", "1", "2"}},
                                        {"coords", {"U", "mu"}},
                                        {"e_version", mat(dm.e_version)},
                                        {"h_version", mat(dm.h_version)}};
    }
  }
  return r;
}

inline RunResult run_decay(const ExperimentConfig& c) {
  detail::require_finite_betas(c);
  auto S = classical_setup(c.model);
  ContourModel M(S.torus, S.block, S.partition, S.motives, c.budget);
  RunResult r;
  std::string csv;
  r.summary["rows"] = nlohmann::json::array();
  for (double beta : c.beta) {
    auto rep = verify_decay_bound(contour_inventory(M, beta, c.max_cubes, std::nullopt, c.budget), M, beta, c.tau);
    std::istringstream lines(decay_csv(rep));
    std::string line;
    bool header = true;
    while (std::getline(lines, line)) {
      if (header) {
        if (csv.empty()) csv = "beta," + line + '\n';
        header = false;
        continue;
      }
      csv += detail::fmt(beta) + ',' + line + '\n';
    }
    r.summary["rows"].push_back({{"beta", beta},
                                 {"beta_gap", beta * rep.gap},
                                 {"gap", rep.gap},
                                 {"tau", rep.tau},
                                 {"tau_certified", rep.tau_certified},
                                 {"tau_sufficient", rep.tau_sufficient},
                                 {"bound_holds", rep.bound_holds},
                                 {"consistent", rep.consistent},
                                 {"records", rep.rows.size()},
                                 {"winding_excluded", rep.winding_excluded}});
    if (!rep.bound_holds) r.violations.push_back("decay bound fails at beta " + detail::fmt(beta));
    if (!rep.consistent) r.violations.push_back("certified rate below the sufficient rate at beta " + detail::fmt(beta));
  }
  r.files.emplace_back("decay.csv", csv);
  return r;
}

inline RunResult run_state_check(const ExperimentConfig& c) {
  detail::require_finite_betas(c);
  const auto& p = require_hubbard(c.model, c.command);
  Torus t(c.model.extents, c.model.ell);
  RunResult r;
  std::string csv = "beta,site,observable,gibbs,restricted\n";
  r.summary["rows"] = nlohmann::json::array();
  for (double beta : c.beta) {
    auto rep = single_phase_state_check(p, t, beta, c.motive);
    for (const auto& row : rep.rows)
      csv += detail::fmt(beta) + ',' + std::to_string(row.site) + ',' + row.observable + ',' + detail::fmt(row.gibbs) + ',' +
             detail::fmt(row.restricted) + '\n';
    r.summary["rows"].push_back({{"beta", beta},
                                 {"motive", rep.motive},
                                 {"epsilon", rep.epsilon},
                                 {"density_deviation", rep.density_deviation},
                                 {"density", rep.density}});
    if (!(rep.epsilon <= c.epsilon))
      r.violations.push_back("epsilon " + detail::fmt(rep.epsilon) + " > " + detail::fmt(c.epsilon) + " at beta " + detail::fmt(beta));
    if (!(rep.density_deviation <= c.epsilon))
      r.violations.push_back("density deviation " + detail::fmt(rep.density_deviation) + " at beta " + detail::fmt(beta));
  }
  r.files.emplace_back("state-check.csv", csv);
  return r;
}

inline RunResult run_symmetry(const ExperimentConfig& c) {
  const auto& p = require_hubbard(c.model, c.command);
  const double tol = c.resolved_tolerance();
  RunResult r;
  const double dev = hole_particle_spectrum_deviation(p, Torus(c.model.extents, c.model.ell));
  r.summary["spectrum"] = {{"mu", p.mu}, {"mu_reflected", hubbard::symmetric_mu(p)}, {"max_deviation", dev}};
  if (!(dev <= tol)) r.violations.push_back("spectrum shift deviates by " + detail::fmt(dev));
  r.summary["reflection"] = nlohmann::json::array();
  for (double beta : c.beta) {
    auto g = hubbard::scan_families(p.W, p.nu, beta, c.u, c.m, c.tie_tol, detail::resolve_workers(c.workers));
    auto [compared, bad] = hubbard::reflection_mismatches(g, p.W);
    r.summary["reflection"].push_back(
        {{"beta", std::isinf(beta) ? nlohmann::json("inf") : nlohmann::json(beta)}, {"compared", compared}, {"mismatched", bad}});
    if (compared == 0) r.violations.push_back("no grid cell reflects onto the grid; align the m axis");
    if (bad > 0) r.violations.push_back(std::to_string(bad) + " reflected cells carry a different label set");
  }
  return r;
}

inline RunResult run_verify(const ExperimentConfig& c) {
  RunResult r;
  r.summary["properties"] = nlohmann::json::array();
  for (const auto& p : run_property_suites(c.seed)) {
    r.summary["properties"].push_back({{"name", p.name}, {"metric", p.metric}, {"threshold", p.threshold}, {"ok", p.ok}});
    if (!p.ok) r.violations.push_back(p.name + ": " + detail::fmt(p.metric) + " > " + detail::fmt(p.threshold));
  }
  return r;
}

inline RunResult run_experiment(const ExperimentConfig& c) {
  RunResult r;
  if (c.command == "verify-classical") r = run_verify_classical(c);
  else if (c.command == "verify-quantum") r = run_verify_quantum(c);
  else if (c.command == "scan") r = run_scan(c);
  else if (c.command == "gaps") r = run_gaps(c);
  else if (c.command == "decay") r = run_decay(c);
  else if (c.command == "state-check") r = run_state_check(c);
  else if (c.command == "symmetry") r = run_symmetry(c);
  else if (c.command == "verify") r = run_verify(c);
  else throw ConfigError("unknown command '" + c.command + "'");
  r.summary["violations"] = r.violations;
  r.summary["ok"] = r.ok();
  r.files.emplace_back(c.command + ".json", r.summary.dump(2) + '\n');
  return r;
}

}  // namespace contourlab
