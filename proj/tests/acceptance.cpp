#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "contourlab/experiments.hpp"

#ifndef CONTOURLAB_CONFIG_DIR
#error "CONTOURLAB_CONFIG_DIR must point at tools/configs"
#endif

using namespace contourlab;
namespace hb = contourlab::hubbard;

namespace {

ExperimentConfig bundled(const std::string& name) {
  std::ifstream in(std::string(CONTOURLAB_CONFIG_DIR) + "/" + name);
  if (!in) throw ConfigError("missing bundled config " + name);
  return parse_config(nlohmann::json::parse(in));
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome classical_equivalence() {
  Outcome o{true, ""};
  for (const char* name : {"verify-classical-toy.json", "verify-classical-hubbard.json"}) {
    auto t0 = std::chrono::steady_clock::now();
    auto r = run_verify_classical(bundled(name));
    const double secs = seconds_since(t0);
    double worst = 0;
    for (const auto& row : r.summary["rows"]) worst = std::max(worst, row["rel_err"].get<double>());
    o.pass = o.pass && r.ok() && worst <= 1e-10 && secs <= 300;
    o.detail += std::string(o.detail.empty() ? "" : "; ") + name + " max rel_err " + sci(worst) + " in " + fixed(secs, 1) + " s";
  }
  return o;
}

Outcome quantum_convergence() {
  auto t0 = std::chrono::steady_clock::now();
  auto base = bundled("verify-quantum.json");
  const std::vector<double> ts{0.05, 0.1, 0.2};
  std::vector<std::vector<double>> errs;
  bool converged_ok = true;
  double worst_conv = 0;
  for (double t : ts) {
    auto c = base;
    c.model.hubbard.t = t;
    c.beta = {1.0};
    auto r = run_verify_quantum(c);
    const auto& row = r.summary["rows"][0];
    errs.push_back(row["rel_err_by_order"].get<std::vector<double>>());
    worst_conv = std::max(worst_conv, row["converged_rel_err"].get<double>());
    converged_ok = converged_ok && r.ok();
  }
  // Orders where both errors sit above the double-precision floor.
  bool scaling_ok = true;
  double worst_margin = INFINITY;
  int compared = 0;
  for (std::size_t a = 0; a < ts.size(); ++a)
    for (std::size_t b = a + 1; b < ts.size(); ++b)
      for (std::size_t m = 0; m < errs[a].size(); ++m) {
        if (errs[a][m] < 1e-13 || errs[b][m] < 1e-13) continue;
        const double need = std::pow(ts[b] / ts[a], m + 1.0) / 3.0, got = errs[b][m] / errs[a][m];
        ++compared;
        worst_margin = std::min(worst_margin, got / need);
        if (got < need) scaling_ok = false;
      }
  const double secs = seconds_since(t0);
  return {converged_ok && scaling_ok && compared > 0 && worst_conv <= 1e-10 && secs <= 600,
          std::to_string(compared) + " order/pair ratios, worst ratio/required " + fixed(worst_margin) +
              "; converged sums off by at most " + sci(worst_conv) + " in " + fixed(secs, 1) + " s"};
}

Outcome zero_temperature_structure() {
  auto t0 = std::chrono::steady_clock::now();
  auto pos = run_scan(bundled("scan-repulsive.json"));
  auto neg = run_scan(bundled("scan-attractive.json"));
  const double secs = seconds_since(t0);
  const int dp = pos.summary["phase_domains"], dn = neg.summary["phase_domains"];
  const int bp = pos.summary["boundary_line_violations"], bn = neg.summary["boundary_line_violations"];
  const bool grid = pos.summary["x"]["n"] == 400 && pos.summary["y"]["n"] == 400;
  return {dp == 6 && dn == 3 && bp == 0 && bn == 0 && grid && secs <= 60,
          "W>0: " + std::to_string(dp) + " domains, W<0: " + std::to_string(dn) + " domains, off-line boundary cells " +
              std::to_string(bp + bn) + ", 400x400 grids in " + fixed(secs, 2) + " s"};
}

Outcome entropy_shift() {
  const double W = 1.0, log2 = std::log(2.0);
  const int nu = 2;
  double worst_stated = 0, worst_derived = 0;
  bool segment_ok = true;
  for (double beta : {1.0, 2.0, 5.0, 20.0}) {
    const double U = hb::m1_m02_boundary(W, nu, beta);
    worst_stated = std::max(worst_stated, std::abs(U - (2 * nu * W + 2 * log2 / beta)));
    worst_derived = std::max(worst_derived, std::abs(U - (2 * nu * W - 2 * log2 / beta)));
    // Open segment (2,2)-(2,4) in units of nu W: U = 2 nu W, mu in (2 nu W, 4 nu W).
    for (int k = 1; k < 20; ++k) {
      hb::Params p{.U = 2 * nu * W, .W = W, .mu = nu * W * (2 + 2 * k / 20.0), .nu = nu};
      std::string best;
      double f = INFINITY;
      for (const auto& fam : hb::motive_families()) {
        const double v = hb::family_free_energy(p, fam, beta);
        if (v < f) f = v, best = fam;
      }
      segment_ok = segment_ok && best == "1";
    }
  }
  return {worst_stated <= 1e-12 && segment_ok,
          "stated U = 2nuW + 2log2/beta off by " + sci(worst_stated) + "; solved h_1 = h_(0,2) gives U = 2nuW - 2log2/beta to " +
              sci(worst_derived) + "; segment in M_1: " + (segment_ok ? "yes" : "no")};
}

Outcome hole_particle() {
  auto t0 = std::chrono::steady_clock::now();
  auto c = bundled("symmetry.json");
  auto a = run_symmetry(c);
  c.model.hubbard.W = -c.model.hubbard.W;
  auto b = run_symmetry(c);
  c.model.hubbard = {.t = 0.1, .U = 4.0, .W = 1.0, .mu = 1.0};
  const double dev3 = hole_particle_spectrum_deviation(c.model.hubbard, Torus(2, 2));
  const double secs = seconds_since(t0);
  const double dev = std::max({a.summary["spectrum"]["max_deviation"].get<double>(),
                               b.summary["spectrum"]["max_deviation"].get<double>(), dev3});
  int compared = 0, bad = 0;
  for (const auto* r : {&a, &b})
    for (const auto& row : r->summary["reflection"]) {
      compared += row["compared"].get<int>();
      bad += row["mismatched"].get<int>();
    }
  return {a.ok() && b.ok() && dev <= 1e-8 && bad == 0 && compared > 0 && secs <= 120,
          "max eigenvalue deviation " + sci(dev) + "; " + std::to_string(compared) + " reflected cells, " + std::to_string(bad) +
              " mismatched; " + fixed(secs, 2) + " s"};
}

Outcome decay_certification() {
  auto t0 = std::chrono::steady_clock::now();
  auto c = bundled("decay-toy.json");
  auto S = classical_setup(c.model);
  const double gap = check_gaps(S.block, S.partition, std::nullopt, S.motives).delta;
  c.beta.clear();
  for (double bd : {8.0, 12.0, 16.0}) c.beta.push_back(bd / gap);
  auto r = run_decay(c);
  bool ok = r.ok() && c.max_cubes <= 12;
  double prev = -INFINITY;
  std::string taus;
  for (const auto& row : r.summary["rows"]) {
    const double tau = row["tau_certified"];
    ok = ok && tau > 0 && tau > prev && row["bound_holds"].get<bool>() && row["consistent"].get<bool>();
    prev = tau;
    taus += (taus.empty() ? "" : ", ") + fixed(tau) + " (suff. " + fixed(row["tau_sufficient"].get<double>()) + ")";
  }
  const double secs = seconds_since(t0);
  return {ok && secs <= 600, "certified tau at beta*Delta = 8, 12, 16: " + taus + "; " + fixed(secs, 2) + " s"};
}

Outcome state_proximity() {
  auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;
  for (const char* d : {"0", "2", "1"}) {
    auto c = bundled(std::string("state-check-") + d + ".json");
    const auto& p = c.model.hubbard;
    const double beta = c.beta.at(0);
    // The point must lie inside the motive's domain of the scanned free energies.
    std::string best;
    double f = INFINITY;
    for (const auto& fam : hb::motive_families()) {
      const double v = hb::family_free_energy(p, fam, beta);
      if (v < f) f = v, best = fam;
    }
    const bool params_ok = std::abs(beta * std::abs(p.W) - 20) < 1e-12 && std::abs(beta * p.t - 0.1) < 1e-12 && c.epsilon <= 0.05;
    auto r = run_state_check(c);
    const auto& row = r.summary["rows"][0];
    ok = ok && r.ok() && best == d && params_ok;
    detail += std::string(detail.empty() ? "" : "; ") + "M_" + d + ": eps " + sci(row["epsilon"].get<double>()) + ", density dev " +
              sci(row["density_deviation"].get<double>());
  }
  const double secs = seconds_since(t0);
  return {ok && secs <= 300, detail + "; " + fixed(secs, 2) + " s"};
}

Outcome property_suites() {
  auto t0 = std::chrono::steady_clock::now();
  auto r = run_verify(bundled("verify.json"));
  const double secs = seconds_since(t0);
  std::string detail;
  for (const auto& p : r.summary["properties"])
    detail += std::string(detail.empty() ? "" : ", ") + p["name"].get<std::string>() + (p["ok"].get<bool>() ? " ok" : " FAILED");
  return {r.ok() && secs <= 600, detail + "; " + fixed(secs, 2) + " s"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"classical contour-oracle equivalence", classical_equivalence},
      {"quantum expansion convergence", quantum_convergence},
      {"zero-temperature phase diagram structure", zero_temperature_structure},
      {"intermediate-temperature entropy shift", entropy_shift},
      {"hole-particle symmetry", hole_particle},
      {"Peierls decay certification", decay_certification},
      {"single-phase state proximity", state_proximity},
      {"property suites", property_suites}};
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << k + 1 << "] " << criteria[k].first << ": " << o.detail << std::endl;
  }
  std::cout << criteria.size() - failed << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
