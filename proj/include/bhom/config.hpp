#pragma once

#include "bhom/corrector.hpp"
#include "bhom/expression.hpp"
#include "bhom/fem.hpp"
#include "bhom/geometry.hpp"
#include "bhom/harness.hpp"
#include "bhom/kernel.hpp"
#include "bhom/sparse.hpp"

#include <json.hpp>

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace bhom {

/// Base of all configuration failures; `path()` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class ConfigSyntaxError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class UnknownKeyError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ConfigInvariantError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct RunConfig {
  // domain
  DomainSpec domain = DomainSpec::unit_box(3);
  // patches
  std::vector<double> eps;
  std::vector<double> tilde_r = {1.0};
  double c1 = 0.5, c2 = 2.0;
  // coefficients
  CoefficientField gamma = CoefficientField::identity(3);
  std::vector<double> kernel_c = {1.0};
  std::vector<double> kernel_c_prime;
  std::vector<double> c_tilde = {1.0};
  SignMode mu_sign = SignMode::PositiveNormalized;
  // problem
  std::string psi_text = "0", phi_text = "0", phi_test_text;
  Field psi = Field::constant(0.0), phi = Field::constant(0.0), phi_test = Field::constant(0.0);
  double c_n = 1.0;
  std::optional<double> mu;
  std::vector<std::string> v_texts;
  std::vector<Field> v_fields;
  double v_bound = 10.0;
  // solver
  SolverConfig solver;
  QuadratureOptions quad;
  std::optional<double> h;
  std::vector<double> h_list;
  double h_factor = 0.5;
  double h_homogenized = 1.0 / 32.0;
  double h_fixed = 1.0 / 128.0;
  MeshOptions mesh;
  bool reduce_to_cell = true;
  std::vector<double> mu_eps;  // eps sequence for the density limit; defaults to eps
  // output
  std::string out_dir = "out";
  bool write_csv = true, write_json = true;
  bool timings = true;

  ProblemData problem_data(double mu_value) const {
    ProblemData d;
    d.psi = psi;
    d.phi = phi;
    d.c_n = c_n;
    d.mu = mu_value;
    return d;
  }

  TestFunctionSpec test_functions() const {
    TestFunctionSpec tf;
    tf.phi_name = phi_test_text;
    tf.phi = phi_test;
    tf.v = {VField::zero(), VField::one(), VField::one_minus_omega()};
    for (std::size_t i = 0; i < v_fields.size(); ++i) tf.v.push_back(VField::custom(v_texts[i], v_fields[i]));
    tf.v_bound = v_bound;
    return tf;
  }

  LemmaContext lemma_context() const {
    LemmaContext ctx;
    ctx.spec = domain;
    ctx.eps_list = eps;
    ctx.tilde_r = tilde_r.front();
    ctx.c1 = c1;
    ctx.c2 = c2;
    ctx.coeff = gamma;
    ctx.kernel_c = kernel_c;
    ctx.kernel_c_prime = kernel_c_prime;
    ctx.c_tilde = c_tilde;
    ctx.quad = quad;
    return ctx;
  }

  ConvergenceSetup convergence_setup() const {
    ConvergenceSetup s;
    s.spec = domain;
    s.eps_list = eps;
    s.tilde_r = tilde_r.front();
    s.c1 = c1;
    s.c2 = c2;
    s.coeff = gamma;
    s.c_tilde = c_tilde;
    s.data = problem_data(0.0);
    s.mu_override = mu;
    s.solver = solver;
    s.quad = quad;
    s.h_factor = h_factor;
    if (!h_list.empty()) s.h_list = h_list;
    else if (h) s.h_list.assign(eps.size(), *h);
    s.h_homogenized = h_homogenized;
    s.h_fixed = h_fixed;
    s.mesh = mesh;
    s.reduce_to_cell = reduce_to_cell;
    return s;
  }

  const std::vector<double>& density_eps() const { return mu_eps.empty() ? eps : mu_eps; }

  /// Mesh spacing for eps index i: explicit list, single value or h_factor * r_min.
  double mesh_spacing(std::size_t i, const PatchLayout& layout) const {
    if (!h_list.empty()) return h_list.at(i);
    if (h) return *h;
    return h_factor * layout.min_radius();
  }
};

namespace detail {

class Reader {
 public:
  Reader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigInvariantError(path_, "expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!ok.count(it.key())) throw UnknownKeyError(sub(it.key()), "unknown key");
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const nlohmann::json& at(const char* key) const { return j_.at(key); }
  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const char* key, double def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigInvariantError(sub(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigInvariantError(sub(key), "must be finite");
    return x;
  }

  int integer(const char* key, int def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigInvariantError(sub(key), "expected an integer");
    return v.get<int>();
  }

  bool boolean(const char* key, bool def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigInvariantError(sub(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const char* key, const std::string& def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (v.is_number()) return v.dump();
    if (!v.is_string()) throw ConfigInvariantError(sub(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const char* key, std::vector<double> def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array()) throw ConfigInvariantError(sub(key), "expected a number or a list of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigInvariantError(sub(key), "list entries must be numbers");
      out.push_back(e.get<double>());
      if (!std::isfinite(out.back())) throw ConfigInvariantError(sub(key), "entries must be finite");
    }
    return out;
  }

  std::vector<std::string> strings(const char* key, std::vector<std::string> def) const {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ConfigInvariantError(sub(key), "expected a list of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) throw ConfigInvariantError(sub(key), "list entries must be strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
};

inline Field parse_field(const std::string& text, int n, const std::string& path) {
  try {
    return Expression::parse(text, n).field();
  } catch (const ExpressionError& e) {
    throw ConfigInvariantError(path, e.what());
  }
}

/// Smooth test function equal to 1 on Sigma and 0 on Gamma.
inline std::string default_phi_test(const DomainSpec& d) {
  const int n = d.n;
  std::string s = "(1 - x" + std::to_string(n) + "/" + nlohmann::json(d.extent(n - 1)).dump() + ")";
  if (!d.lateral_periodic())
    for (int i = 0; i + 1 < n; ++i) {
      const std::string L = nlohmann::json(d.extent(i)).dump();
      const std::string x = "x" + std::to_string(i + 1);
      s += "*4*" + x + "*(" + L + " - " + x + ")/" + L + "^2";
    }
  return s;
}

}  // namespace detail

/// Strict parser: unknown keys and invariant violations raise errors that
/// carry the key path.
inline RunConfig parse_config(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigSyntaxError("", std::string("syntax error: ") + e.what());
  }
  if (!root.is_object()) throw ConfigSyntaxError("", "top level must be an object");
  detail::Reader top(root, "");
  top.allow({"domain", "patches", "coefficients", "problem", "solver", "output"});
  if (!top.has("patches")) throw ConfigInvariantError("patches", "block is required");
  static const nlohmann::json empty = nlohmann::json::object();
  auto block = [&](const char* key) -> const nlohmann::json& { return top.has(key) ? root.at(key) : empty; };

  RunConfig c;
  {
    detail::Reader r(block("domain"), "domain");
    r.allow({"n", "extents", "lateral_periodic"});
    const int n = r.integer("n", 3);
    if (n < 3) throw ConfigInvariantError("domain.n", "dimension must be at least 3");
    if (n > kMaxDim) throw ConfigInvariantError("domain.n", "dimension exceeds the supported maximum");
    c.domain.n = n;
    c.domain.extents = r.numbers("extents", std::vector<double>(static_cast<std::size_t>(n), 1.0));
    if (static_cast<int>(c.domain.extents.size()) != n)
      throw ConfigInvariantError("domain.extents", "needs one entry per axis");
    for (double e : c.domain.extents)
      if (!(e > 0.0)) throw ConfigInvariantError("domain.extents", "extents must be positive");
    c.domain.mode = r.boolean("lateral_periodic", false) ? BoundaryMode::PeriodicTop : BoundaryMode::DirichletRest;
  }
  const int n = c.domain.n;
  {
    detail::Reader r(block("patches"), "patches");
    r.allow({"eps", "tilde_r", "c1", "c2"});
    if (!r.has("eps")) throw ConfigInvariantError("patches.eps", "is required");
    c.eps = r.numbers("eps", {});
    if (c.eps.empty()) throw ConfigInvariantError("patches.eps", "needs at least one value");
    for (double e : c.eps)
      if (!(e > 0.0)) throw ConfigInvariantError("patches.eps", "values must be positive");
    for (std::size_t i = 1; i < c.eps.size(); ++i)
      if (!(c.eps[i] < c.eps[i - 1])) throw ConfigInvariantError("patches.eps", "eps not strictly decreasing");
    c.tilde_r = r.numbers("tilde_r", {1.0});
    c.c1 = r.number("c1", 0.5);
    c.c2 = r.number("c2", 2.0);
    if (!(c.c1 > 0.0 && c.c2 >= c.c1)) throw ConfigInvariantError("patches.c1", "need 0 < c1 <= c2");
    for (double t : c.tilde_r)
      if (t < c.c1 || t > c.c2) throw ConfigInvariantError("patches.tilde_r", "tilde_r outside [c1, c2]");
  }
  {
    detail::Reader r(block("coefficients"), "coefficients");
    r.allow({"gamma", "kernel_c", "kernel_c_prime", "c_tilde", "mu_sign"});
    try {
      if (!r.has("gamma") || (r.at("gamma").is_string() && r.at("gamma").get<std::string>() == "identity")) {
        c.gamma = CoefficientField::identity(n);
      } else {
        const auto g = r.numbers("gamma", {});
        if (static_cast<int>(g.size()) != n * n)
          throw ConfigInvariantError("coefficients.gamma", "expected \"identity\" or n*n row-major entries");
        c.gamma = CoefficientField::from_row_major(n, g);
      }
    } catch (const DomainError& e) {
      throw ConfigInvariantError("coefficients.gamma", e.what());
    }
    c.kernel_c = r.numbers("kernel_c", {1.0});
    c.kernel_c_prime = r.numbers("kernel_c_prime", {});
    c.c_tilde = r.numbers("c_tilde", {1.0});
    if (c.kernel_c.empty()) throw ConfigInvariantError("coefficients.kernel_c", "needs at least one coefficient");
    if (c.c_tilde.empty()) throw ConfigInvariantError("coefficients.c_tilde", "needs at least one coefficient");
    const std::string sign = r.string("mu_sign", "positive");
    if (sign == "positive") c.mu_sign = SignMode::PositiveNormalized;
    else if (sign == "verbatim") c.mu_sign = SignMode::Verbatim;
    else throw ConfigInvariantError("coefficients.mu_sign", "expected \"positive\" or \"verbatim\"");
  }
  {
    detail::Reader r(block("problem"), "problem");
    r.allow({"psi", "phi", "c_n", "mu", "phi_test", "v_fields", "v_bound"});
    c.psi_text = r.string("psi", "0");
    c.phi_text = r.string("phi", "0");
    c.psi = detail::parse_field(c.psi_text, n, "problem.psi");
    c.phi = detail::parse_field(c.phi_text, n, "problem.phi");
    c.c_n = r.number("c_n", 1.0);
    if (!(c.c_n > 0.0)) throw ConfigInvariantError("problem.c_n", "must be positive");
    if (r.has("mu")) {
      c.mu = r.number("mu", 0.0);
      if (*c.mu < 0.0) throw ConfigInvariantError("problem.mu", "must be nonnegative");
    }
    c.phi_test_text = r.string("phi_test", detail::default_phi_test(c.domain));
    c.phi_test = detail::parse_field(c.phi_test_text, n, "problem.phi_test");
    const std::string xn = "x" + std::to_string(n);
    c.v_texts = r.strings("v_fields", {"1 + 0.5*x1^2", "exp(-" + xn + ")"});
    for (std::size_t i = 0; i < c.v_texts.size(); ++i)
      c.v_fields.push_back(detail::parse_field(c.v_texts[i], n, "problem.v_fields[" + std::to_string(i) + "]"));
    c.v_bound = r.number("v_bound", 10.0);
  }
  {
    detail::Reader r(block("solver"), "solver");
    r.allow({"tolerance", "max_iterations", "max_outer_iterations", "pdas_c", "newton_tolerance", "max_halvings",
             "radial_order", "polar", "azimuth", "h", "h_factor", "h_homogenized", "h_fixed", "node_cap",
             "resolution_override", "reduce_to_cell", "mu_eps"});
    c.solver.tolerance = r.number("tolerance", 1e-10);
    c.solver.max_iterations = r.integer("max_iterations", 20000);
    c.solver.max_outer_iterations = r.integer("max_outer_iterations", 100);
    c.solver.pdas_c = r.number("pdas_c", 0.0);
    c.solver.newton_tolerance = r.number("newton_tolerance", 1e-10);
    c.solver.max_halvings = r.integer("max_halvings", 30);
    if (!(c.solver.tolerance > 0.0)) throw ConfigInvariantError("solver.tolerance", "must be positive");
    if (c.solver.max_iterations < 1) throw ConfigInvariantError("solver.max_iterations", "must be positive");
    c.quad.radial_order = r.integer("radial_order", 32);
    c.quad.polar = r.integer("polar", 32);
    c.quad.azimuth = r.integer("azimuth", 64);
    if (c.quad.radial_order < 3) throw ConfigInvariantError("solver.radial_order", "quadrature order must be at least 3");
    if (c.quad.polar < 1 || c.quad.azimuth < 3) throw ConfigInvariantError("solver.polar", "hemisphere rule too coarse");
    if (r.has("h")) {
      const auto hv = r.numbers("h", {});
      for (double x : hv)
        if (!(x > 0.0)) throw ConfigInvariantError("solver.h", "mesh spacing must be positive");
      if (r.at("h").is_array()) {
        if (hv.size() != c.eps.size()) throw ConfigInvariantError("solver.h", "needs one spacing per eps");
        c.h_list = hv;
      } else {
        c.h = hv.front();
      }
    }
    c.h_factor = r.number("h_factor", 0.5);
    c.h_homogenized = r.number("h_homogenized", 1.0 / 32.0);
    c.h_fixed = r.number("h_fixed", 1.0 / 128.0);
    c.mesh.node_cap = static_cast<std::size_t>(r.number("node_cap", 2e7));
    c.mesh.resolution_override = r.boolean("resolution_override", false);
    c.reduce_to_cell = r.boolean("reduce_to_cell", true);
    c.mu_eps = r.numbers("mu_eps", {});
    for (std::size_t i = 1; i < c.mu_eps.size(); ++i)
      if (!(c.mu_eps[i] < c.mu_eps[i - 1])) throw ConfigInvariantError("solver.mu_eps", "eps not strictly decreasing");
  }
  {
    detail::Reader r(block("output"), "output");
    r.allow({"dir", "formats", "timings"});
    c.out_dir = r.string("dir", "out");
    const auto formats = r.strings("formats", {"csv", "json"});
    c.write_csv = c.write_json = false;
    for (const auto& f : formats) {
      if (f == "csv") c.write_csv = true;
      else if (f == "json") c.write_json = true;
      else throw ConfigInvariantError("output.formats", "unknown format '" + f + "'");
    }
    c.timings = r.boolean("timings", true);
  }
  return c;
}

}  // namespace bhom
