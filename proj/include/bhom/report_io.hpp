#pragma once

#include "bhom/fem.hpp"
#include "bhom/geometry.hpp"
#include "bhom/harness.hpp"
#include "bhom/sparse.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace bhom::io {

/// Shortest form with 17 significant digits, '.' decimal, locale-free.
inline std::string format_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace detail {
inline void write_json(std::string& out, const nlohmann::json& j, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += inner + nlohmann::json(it.key()).dump() + ": ";
        write_json(out, it.value(), indent + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case nlohmann::json::value_t::array: {
      bool scalars = std::all_of(j.begin(), j.end(), [](const auto& e) { return e.is_primitive(); });
      if (j.empty()) {
        out += "[]";
        return;
      }
      if (scalars) {
        out += "[";
        bool first = true;
        for (const auto& e : j) {
          if (!first) out += ", ";
          first = false;
          write_json(out, e, indent + 1);
        }
        out += "]";
        return;
      }
      out += "[\n";
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += ",\n";
        first = false;
        out += inner;
        write_json(out, e, indent + 1);
      }
      out += "\n" + pad + "]";
      return;
    }
    case nlohmann::json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format_number(v) : "null";
      return;
    }
    default:
      out += j.dump();
  }
}
}  // namespace detail

/// JSON text with floats at 17 significant digits and a trailing newline.
inline std::string dump(const nlohmann::json& j) {
  std::string out;
  detail::write_json(out, j, 0);
  out += "\n";
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << content;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : header_(std::move(header)) {}
  void row(const std::vector<std::string>& cells) {
    require(cells.size() == header_.size(), "CSV row width does not match the header");
    rows_.push_back(cells);
  }
  void row_numbers(const std::vector<double>& values) {
    std::vector<std::string> cells;
    for (double v : values) cells.push_back(format_number(v));
    row(cells);
  }
  std::size_t size() const { return rows_.size(); }
  std::string str() const {
    std::string out = join(header_);
    for (const auto& r : rows_) out += join(r);
    return out;
  }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) s += ',';
      s += cells[i];
    }
    return s + "\n";
  }
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline nlohmann::json to_json(const SolveReport& r, bool timings = true) {
  return nlohmann::json{{"iterations", r.iterations},
                        {"residual", r.residual},
                        {"energy", r.energy},
                        {"active_set", r.active_set},
                        {"wall_ms", timings ? r.wall_ms : 0.0},
                        {"converged", r.converged}};
}

inline nlohmann::json to_json(const LemmaCheckEntry& e) {
  nlohmann::json j{{"name", e.name}, {"eps", e.eps},   {"values", e.values}, {"limit", e.limit},
                   {"target", e.target}, {"tol", e.tol}, {"pass", e.pass}};
  if (!e.note.empty()) j["note"] = e.note;
  for (const auto& [k, v] : e.extra) j[k] = v;
  return j;
}

inline nlohmann::json to_json(const LemmaCheckReport& r) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : r.entries) arr.push_back(to_json(e));
  for (const auto& e : r.errors) arr.push_back({{"name", e.name}, {"error", e.message}, {"pass", false}});
  return arr;
}

inline nlohmann::json to_json(const ConvergenceReport& r, bool timings = true) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"eps", row.eps},
                    {"h", row.h},
                    {"nodes", row.nodes},
                    {"energy", row.energy},
                    {"l2_domain", row.l2_domain},
                    {"l2_sigma", row.l2_sigma},
                    {"active_fraction", row.active_fraction},
                    {"report", to_json(row.report, timings)}});
  nlohmann::json pass = nlohmann::json::object();
  for (const auto& [k, v] : r.pass) pass[k] = v;
  nlohmann::json slopes = nlohmann::json::object();
  for (const auto& [k, v] : r.slopes) slopes[k] = v;
  nlohmann::json j{{"mu", r.mu},
                   {"reduced_to_cell", r.reduced},
                   {"rows", rows},
                   {"fixed_mesh_energy", r.fixed_mesh_energy},
                   {"homogenized_energy", r.homogenized_energy},
                   {"homogenized_penalty", r.homogenized_penalty},
                   {"penalty_recomputed", r.penalty_recomputed},
                   {"homogenized_sigma_mean", r.homogenized_sigma_mean},
                   {"homogenized_report", to_json(r.homogenized_report, timings)},
                   {"slopes", slopes},
                   {"pass", pass},
                   {"all_pass", r.all_pass()}};
  if (!r.message.empty()) j["error"] = r.message;
  return j;
}

/// (node, x1..xn, value) rows.
inline std::string field_csv(const Mesh& mesh, const DiscreteField& u) {
  std::vector<std::string> header{"node"};
  for (int i = 0; i < mesh.dim(); ++i) header.push_back("x" + std::to_string(i + 1));
  header.push_back("value");
  Csv csv(header);
  for (std::size_t k = 0; k < mesh.num_nodes(); ++k) {
    std::vector<std::string> cells{std::to_string(k)};
    const Point x = mesh.coord(k);
    for (int i = 0; i < mesh.dim(); ++i) cells.push_back(format_number(x(i)));
    cells.push_back(format_number(u[k]));
    csv.row(cells);
  }
  return csv.str();
}

/// (k, x1..xn, r) rows.
inline std::string layout_csv(const PatchLayout& layout) {
  std::vector<std::string> header{"k"};
  for (int i = 0; i < layout.dim(); ++i) header.push_back("x" + std::to_string(i + 1));
  header.push_back("r");
  Csv csv(header);
  for (std::size_t k = 0; k < layout.size(); ++k) {
    std::vector<std::string> cells{std::to_string(k)};
    for (int i = 0; i < layout.dim(); ++i) cells.push_back(format_number(layout.center(k)(i)));
    cells.push_back(format_number(layout.radius(k)));
    csv.row(cells);
  }
  return csv.str();
}

}  // namespace bhom::io
