#pragma once

#include "bhom/config.hpp"
#include "bhom/corrector.hpp"
#include "bhom/extrapolation.hpp"
#include "bhom/fem.hpp"
#include "bhom/geometry.hpp"
#include "bhom/harness.hpp"
#include "bhom/report_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace bhom::cli {

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"dump-layout", "solve-eps",    "solve-hom", "corrector-scan",
                                                 "mu-limit",    "check-lemmas", "converge"};
  return names;
}

struct Options {
  std::filesystem::path out_dir;
  int threads = 1;
  std::ostream* log = &std::cerr;
};

namespace detail {

inline std::string indexed(const std::string& stem, std::size_t i, const std::string& ext) {
  return stem + "_" + std::to_string(i) + "." + ext;
}

class Artifacts {
 public:
  Artifacts(const RunConfig& cfg, std::filesystem::path dir) : cfg_(cfg), dir_(std::move(dir)) {}
  void csv(const std::string& name, const std::string& body) const {
    if (cfg_.write_csv) io::write_file(dir_ / name, body);
  }
  void json(const std::string& name, const nlohmann::json& j) const {
    if (cfg_.write_json) io::write_file(dir_ / name, io::dump(j));
  }

 private:
  const RunConfig& cfg_;
  std::filesystem::path dir_;
};

inline double slope_or_nan(const std::vector<double>& eps, const std::vector<double>& v) {
  if (eps.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  for (double x : v)
    if (!(x > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return loglog_slope(eps, v);
}

inline int dump_layout(const RunConfig& cfg, const Artifacts& out) {
  nlohmann::json summary = nlohmann::json::array();
  for (std::size_t i = 0; i < cfg.eps.size(); ++i) {
    const PatchLayout layout = build_layout(cfg.domain, cfg.eps[i], cfg.tilde_r, cfg.c1, cfg.c2, cfg.gamma);
    out.csv(indexed("layout", i, "csv"), io::layout_csv(layout));
    summary.push_back({{"eps", cfg.eps[i]}, {"patches", layout.size()}, {"min_radius", layout.min_radius()}});
  }
  out.json("layout.json", summary);
  return 0;
}

inline int corrector_scan(const RunConfig& cfg, const Artifacts& out) {
  const GreenKernel kernel(cfg.gamma, cfg.kernel_c, cfg.kernel_c_prime);
  std::vector<double> l2, h1, g1, q2, mu;
  for (double eps : cfg.eps) {
    const PatchLayout layout = build_layout(cfg.domain, eps, cfg.tilde_r, cfg.c1, cfg.c2, cfg.gamma);
    const Corrector omega(layout, kernel);
    const int order = cfg.quad.radial_order;
    l2.push_back(omega_l2(omega, order).total);
    h1.push_back(omega_h1_seminorm(omega, order).total);
    g1.push_back(omega_gradient_l1(omega, order).total);
    q2.push_back(q_gradient_l2(AuxiliaryFunction(layout, cfg.c_tilde), order).total);
    mu.push_back(mu_weak_pairing(MuDensity(layout, cfg.c_tilde, cfg.mu_sign), Field::constant(1.0), cfg.quad));
  }
  const std::vector<std::pair<std::string, const std::vector<double>*>> cols = {
      {"omega_l2_total", &l2}, {"omega_h1_total", &h1},  {"omega_grad_l1_total", &g1},
      {"q_grad_l2_total", &q2}, {"mu_pairing", &mu}};
  std::vector<std::string> header{"epsilon"};
  for (const auto& c : cols) header.push_back(c.first);
  std::vector<double> slopes;
  for (const auto& c : cols) {
    header.push_back("slope_" + c.first);
    std::vector<double> mag;
    for (double v : *c.second) mag.push_back(std::abs(v));
    slopes.push_back(slope_or_nan(cfg.eps, mag));
  }
  io::Csv csv(header);
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < cfg.eps.size(); ++i) {
    std::vector<double> r{cfg.eps[i]};
    nlohmann::json row{{"epsilon", cfg.eps[i]}};
    for (const auto& c : cols) r.push_back((*c.second)[i]), row[c.first] = (*c.second)[i];
    r.insert(r.end(), slopes.begin(), slopes.end());
    csv.row_numbers(r);
    rows.push_back(row);
  }
  nlohmann::json sl = nlohmann::json::object();
  for (std::size_t j = 0; j < cols.size(); ++j) sl[cols[j].first] = slopes[j];
  out.csv("corrector_scan.csv", csv.str());
  out.json("corrector_scan.json", {{"rows", rows}, {"slopes", sl}});
  return 0;
}

inline double density(const RunConfig& cfg) {
  return limit_density(cfg.domain, cfg.tilde_r, cfg.c1, cfg.c2, cfg.gamma, cfg.c_tilde, SignMode::PositiveNormalized,
                       cfg.density_eps(), cfg.quad)
      .limit;
}

inline int mu_limit(const RunConfig& cfg, const Artifacts& out) {
  const DensityLimit d = limit_density(cfg.domain, cfg.tilde_r, cfg.c1, cfg.c2, cfg.gamma, cfg.c_tilde, cfg.mu_sign,
                                       cfg.density_eps(), cfg.quad);
  io::Csv csv({"epsilon", "normalized_pairing"});
  for (std::size_t i = 0; i < d.eps.size(); ++i) csv.row_numbers({d.eps[i], d.values[i]});
  out.csv("mu_limit.csv", csv.str());
  out.json("mu_limit.json", {{"eps", d.eps},
                             {"values", d.values},
                             {"limit", d.limit},
                             {"order", d.order},
                             {"sigma_area", cfg.domain.sigma_area()}});
  return 0;
}

inline int solve_eps(const RunConfig& cfg, const Artifacts& out) {
  const double mu_value = cfg.mu.value_or(0.0);
  const ProblemData data = cfg.problem_data(mu_value);
  nlohmann::json runs = nlohmann::json::array();
  int status = 0;
  for (std::size_t i = 0; i < cfg.eps.size(); ++i) {
    nlohmann::json entry{{"eps", cfg.eps[i]}};
    try {
      const PatchLayout layout = build_layout(cfg.domain, cfg.eps[i], cfg.tilde_r, cfg.c1, cfg.c2, cfg.gamma);
      const double h = cfg.mesh_spacing(i, layout);
      const Mesh mesh = build_mesh(cfg.domain, layout, h, cfg.mesh);
      const SparseOperator K = assemble_stiffness(mesh, cfg.gamma);
      const ObstacleSolution sol = solve_obstacle(K, data, mesh, layout, cfg.solver);
      out.csv(indexed("u_eps", i, "csv"), io::field_csv(mesh, sol.u));
      entry["h"] = h;
      entry["nodes"] = mesh.num_nodes();
      entry["complementarity"] = sol.complementarity;
      entry["report"] = io::to_json(sol.report, cfg.timings);
      if (!sol.report.converged) status = 1;
    } catch (const std::exception& e) {
      entry["error"] = e.what();
      runs.push_back(entry);
      out.json("solve_eps.json", runs);
      throw;
    }
    runs.push_back(entry);
  }
  out.json("solve_eps.json", runs);
  return status;
}

inline int solve_hom(const RunConfig& cfg, const Artifacts& out) {
  const double mu_value = cfg.mu ? *cfg.mu : density(cfg);
  const ProblemData data = cfg.problem_data(mu_value);
  const double h = cfg.h.value_or(cfg.h_homogenized);
  const Mesh mesh = build_mesh(cfg.domain, h, cfg.mesh);
  const SparseOperator K = assemble_stiffness(mesh, cfg.gamma);
  const HomogenizedSolution sol = solve_homogenized(K, data, mesh, cfg.solver);
  out.csv("u_hom.csv", io::field_csv(mesh, sol.u));
  out.json("solve_hom.json", {{"mu", mu_value},
                              {"h", h},
                              {"nodes", mesh.num_nodes()},
                              {"energy_history", sol.energy_history},
                              {"report", io::to_json(sol.report, cfg.timings)}});
  return sol.report.converged ? 0 : 1;
}

inline int check_lemmas(const RunConfig& cfg, const Artifacts& out) {
  const LemmaCheckReport rep = run_lemma_checks(cfg.lemma_context(), cfg.test_functions());
  io::Csv csv({"name", "epsilon", "value", "limit", "target", "tol", "pass"});
  for (const auto& e : rep.entries)
    for (std::size_t i = 0; i < e.values.size(); ++i)
      csv.row({e.name, io::format_number(e.eps.at(i)), io::format_number(e.values[i]), io::format_number(e.limit),
               io::format_number(e.target), io::format_number(e.tol), e.pass ? "true" : "false"});
  out.csv("lemmas.csv", csv.str());
  out.json("lemmas.json", io::to_json(rep));
  return rep.all_pass() ? 0 : 1;
}

inline int converge(const RunConfig& cfg, const Artifacts& out, int threads) {
  ConvergenceSetup s = cfg.convergence_setup();
  s.threads = threads;
  if (!cfg.mu_eps.empty() && !s.mu_override) s.mu_override = density(cfg);
  const ConvergenceReport rep = convergence_study(s);
  io::Csv csv({"epsilon", "h", "nodes", "energy", "l2_domain", "l2_sigma", "active_fraction", "fixed_mesh_energy"});
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& r = rep.rows[i];
    const double fixed =
        i < rep.fixed_mesh_energy.size() ? rep.fixed_mesh_energy[i] : std::numeric_limits<double>::quiet_NaN();
    csv.row({io::format_number(r.eps), io::format_number(r.h), std::to_string(r.nodes), io::format_number(r.energy),
             io::format_number(r.l2_domain), io::format_number(r.l2_sigma), io::format_number(r.active_fraction),
             io::format_number(fixed)});
  }
  out.csv("converge.csv", csv.str());
  out.json("converge.json", io::to_json(rep, cfg.timings));
  return rep.all_pass() ? 0 : 1;
}

}  // namespace detail

/// Runs one subcommand and writes its artifacts. Returns 0 iff every pass
/// flag of that subcommand holds; pipeline exceptions leave an error.json.
inline int dispatch(const std::string& sub, const RunConfig& cfg, const Options& opt = {}) {
  const std::filesystem::path dir = opt.out_dir.empty() ? std::filesystem::path(cfg.out_dir) : opt.out_dir;
  const detail::Artifacts out(cfg, dir);
  try {
    if (sub == "dump-layout") return detail::dump_layout(cfg, out);
    if (sub == "corrector-scan") return detail::corrector_scan(cfg, out);
    if (sub == "mu-limit") return detail::mu_limit(cfg, out);
    if (sub == "solve-eps") return detail::solve_eps(cfg, out);
    if (sub == "solve-hom") return detail::solve_hom(cfg, out);
    if (sub == "check-lemmas") return detail::check_lemmas(cfg, out);
    if (sub == "converge") return detail::converge(cfg, out, opt.threads);
  } catch (const std::exception& e) {
    *opt.log << "bhom " << sub << ": " << e.what() << "\n";
    try {
      io::write_file(dir / "error.json", io::dump({{"subcommand", sub}, {"error", e.what()}}));
    } catch (const std::exception& io_err) {
      *opt.log << "bhom: " << io_err.what() << "\n";
    }
    return 1;
  }
  *opt.log << "bhom: unknown subcommand '" << sub << "'\n";
  return 2;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read config " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Exit codes: 0 all pass, 1 a pass flag failed or a pipeline threw,
/// 2 usage or configuration error.
inline int run_cli(int argc, char** argv) {
  CLI::App app{"Boundary obstacle homogenization laboratory"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  int threads = 1;
  unsigned long seed = 0;
  for (const auto& name : subcommands()) {
    CLI::App* sc = app.add_subcommand(name);
    sc->add_option("--config", config_path, "JSON run configuration")->required()->envname("BHOM_CONFIG");
    sc->add_option("--out", out_dir, "artifact directory (overrides output.dir)")->envname("BHOM_OUT");
    sc->add_option("--threads", threads, "worker threads for independent eps levels")
        ->check(CLI::PositiveNumber)
        ->envname("BHOM_THREADS");
    sc->add_option("--seed", seed, "reserved; every pipeline is deterministic")->envname("BHOM_SEED");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string sub = app.get_subcommands().front()->get_name();
  RunConfig cfg;
  try {
    cfg = parse_config(read_text(config_path));
  } catch (const std::exception& e) {
    std::cerr << "bhom: " << e.what() << "\n";
    return 2;
  }
  Options opt;
  opt.out_dir = out_dir;
  opt.threads = threads;
  return dispatch(sub, cfg, opt);
}

}  // namespace bhom::cli
