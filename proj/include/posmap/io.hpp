#pragma once

// JSON problem files and reports. External indices are 1-based; numbers are
// written with 12 significant digits.

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <nlohmann/json.hpp>
#include "posmap/errors.hpp"
#include "posmap/forms.hpp"
#include "posmap/positivity.hpp"
#include "posmap/separability.hpp"

namespace posmap {

using Json = nlohmann::json;

namespace io {

inline double round12(double x) {
  if (!std::isfinite(x)) return x;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return std::strtod(buf, nullptr);
}

inline Json number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return round12(x);
}

inline Json vector(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

inline Json matrix(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector(m.row(r).transpose()));
  return rows;
}

inline const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw InputError(std::string("missing field \"") + key + "\"");
  }
  return j.at(key);
}

inline double to_double(const Json& j, const std::string& what) {
  if (!j.is_number()) throw InputError(what + " must be a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw InputError(what + " must be finite");
  return x;
}

inline int to_int(const Json& j, const std::string& what) {
  if (!j.is_number_integer()) throw InputError(what + " must be an integer");
  return j.get<int>();
}

inline double get_double(const Json& j) { return j.is_null() ? NAN : j.get<double>(); }

inline Eigen::VectorXd read_vector(const Json& j, Eigen::Index n, const std::string& what) {
  if (!j.is_array() || (n >= 0 && static_cast<Eigen::Index>(j.size()) != n)) {
    throw InputError(what + " must be an array" +
                     (n >= 0 ? " of length " + std::to_string(n) : std::string()));
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = to_double(j[i], what);
  return v;
}

inline Eigen::MatrixXd read_matrix(const Json& j, Eigen::Index rows, Eigen::Index cols,
                                   const std::string& what) {
  if (!j.is_array() || (rows >= 0 && static_cast<Eigen::Index>(j.size()) != rows)) {
    throw InputError(what + " must have " + std::to_string(rows) + " rows");
  }
  const auto r = static_cast<Eigen::Index>(j.size());
  const Eigen::Index c = cols >= 0 ? cols : (r ? static_cast<Eigen::Index>(j[0].size()) : 0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    m.row(i) = read_vector(j[static_cast<std::size_t>(i)], c, what + " row").transpose();
  return m;
}

inline void read_dims(const Json& j, int& p, int& q) {
  p = to_int(field(j, "p"), "p");
  q = to_int(field(j, "q"), "q");
  if (p < 1 || q < 1) throw InputError("p and q must be positive");
}

}  // namespace io

/// {"p", "q", "form": {"kind": "gram" | "tensor" | "omega", ...}}.
inline BiQuadraticForm parse_positivity_input(const Json& j) {
  int p = 0, q = 0;
  io::read_dims(j, p, q);
  const Json& form = io::field(j, "form");
  const Json& kind = io::field(form, "kind");
  if (!kind.is_string()) throw InputError("form kind must be a string");
  const std::string k = kind.get<std::string>();
  if (k == "gram") {
    const Eigen::MatrixXd m = io::read_matrix(io::field(form, "matrix"), p * q, p * q, "matrix");
    return from_gram(p, q, 0.5 * (m + m.transpose()));
  }
  if (k == "tensor") {
    const Json& t = io::field(form, "values");
    std::vector<double> f;
    f.reserve(static_cast<std::size_t>(p * q * p * q));
    const auto bad = [] { return InputError("tensor values must be nested p x q x p x q"); };
    if (!t.is_array() || static_cast<int>(t.size()) != p) throw bad();
    for (const auto& a : t) {
      if (!a.is_array() || static_cast<int>(a.size()) != q) throw bad();
      for (const auto& b : a) {
        if (!b.is_array() || static_cast<int>(b.size()) != p) throw bad();
        for (const auto& c : b) {
          if (!c.is_array() || static_cast<int>(c.size()) != q) throw bad();
          for (const auto& d : c) f.push_back(io::to_double(d, "tensor value"));
        }
      }
    }
    return from_full_tensor(p, q, f);
  }
  if (k == "omega") {
    BiQuadraticForm b(p, q);
    const Json& entries = io::field(form, "entries");
    if (!entries.is_array()) throw InputError("omega entries must be an array");
    for (const auto& e : entries) {
      const int i = io::to_int(io::field(e, "i"), "i"), jj = io::to_int(io::field(e, "j"), "j");
      const int kk = io::to_int(io::field(e, "k"), "k"), l = io::to_int(io::field(e, "l"), "l");
      if (i < 1 || i > p || kk < 1 || kk > p || jj < 1 || jj > q || l < 1 || l > q) {
        throw InputError("omega entry index out of range");
      }
      b.add_to(i - 1, jj - 1, kk - 1, l - 1, io::to_double(io::field(e, "value"), "value"));
    }
    return b;
  }
  throw InputError("unknown form kind \"" + k + "\"");
}

/// {"p", "q", "matrix"?, "atoms"?: [{"u", "v", "weight"?}]}; the atoms are
/// added to the matrix (zero when absent). With `upper_entries` only the
/// entries A[pi(i,j), pi(k,l)], i <= k, j <= l, of the matrix are read.
inline KroneckerMatrix parse_separability_input(const Json& j, bool upper_entries = false) {
  int p = 0, q = 0;
  io::read_dims(j, p, q);
  const bool has_matrix = j.contains("matrix"), has_atoms = j.contains("atoms");
  if (!has_matrix && !has_atoms) throw InputError("need \"matrix\" or \"atoms\"");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p * q, p * q);
  if (has_matrix) m = io::read_matrix(j.at("matrix"), p * q, p * q, "matrix");
  if (upper_entries) m = kronecker_from_upper_entries(p, q, m).matrix();
  if (has_atoms) {
    const Json& atoms = j.at("atoms");
    if (!atoms.is_array()) throw InputError("atoms must be an array");
    for (const auto& a : atoms) {
      const Eigen::VectorXd u = io::read_vector(io::field(a, "u"), p, "atom u");
      const Eigen::VectorXd v = io::read_vector(io::field(a, "v"), q, "atom v");
      const double w = a.contains("weight") ? io::to_double(a.at("weight"), "weight") : 1.0;
      m += w * kron_rank1(u, v).matrix();
    }
  }
  return KroneckerMatrix(p, q, m);
}

// ---------------------------------------------------------------------------
// Reports.

inline Json to_json(const PositivityReport& r) {
  Json j;
  j["status"] = to_string(r.status);
  j["b_min"] = r.has_b_min ? io::number(r.b_min) : Json(nullptr);
  j["boundary"] = r.boundary;
  j["rounded"] = r.rounded;
  j["order_used"] = r.order_used;
  j["flat_t"] = r.flat_t;
  j["moment_rank"] = r.moment_rank;
  j["bound_sequence"] = Json::array();
  for (const auto& b : r.bound_sequence) {
    j["bound_sequence"].push_back({{"k", b.k},
                                   {"primal", io::number(b.primal)},
                                   {"dual", io::number(b.dual)},
                                   {"solver_status", b.solver_status}});
  }
  j["minimizers"] = Json::array();
  for (const auto& m : r.minimizers) {
    j["minimizers"].push_back({{"u", io::vector(m.u)},
                               {"v", io::vector(m.v)},
                               {"value", io::number(m.value)},
                               {"weight", io::number(m.weight)}});
  }
  j["timings"] = {{"build", io::number(r.timings.build_seconds)},
                  {"solve", io::number(r.timings.solve_seconds)},
                  {"extract", io::number(r.timings.extract_seconds)},
                  {"total", io::number(r.timings.total_seconds)}};
  j["diagnostics"] = r.diagnostics;
  return j;
}

inline PositivityStatus positivity_status_from(const std::string& s) {
  if (s == "Positive") return PositivityStatus::kPositive;
  if (s == "NotPositive") return PositivityStatus::kNotPositive;
  if (s == "Inconclusive") return PositivityStatus::kInconclusive;
  throw InputError("unknown positivity status \"" + s + "\"");
}

inline PositivityReport positivity_report_from_json(const Json& j) {
  PositivityReport r;
  r.status = positivity_status_from(j.at("status").get<std::string>());
  r.has_b_min = !j.at("b_min").is_null();
  if (r.has_b_min) r.b_min = j.at("b_min").get<double>();
  r.boundary = j.at("boundary").get<bool>();
  r.rounded = j.at("rounded").get<bool>();
  r.order_used = j.at("order_used").get<int>();
  r.flat_t = j.at("flat_t").get<int>();
  r.moment_rank = j.at("moment_rank").get<int>();
  for (const auto& b : j.at("bound_sequence")) {
    r.bound_sequence.push_back({b.at("k").get<int>(), io::get_double(b.at("primal")),
                                io::get_double(b.at("dual")),
                                b.at("solver_status").get<std::string>()});
  }
  for (const auto& m : j.at("minimizers")) {
    r.minimizers.push_back({io::read_vector(m.at("u"), -1, "u"), io::read_vector(m.at("v"), -1, "v"),
                            io::get_double(m.at("value")), io::get_double(m.at("weight"))});
  }
  const Json& t = j.at("timings");
  r.timings = {io::get_double(t.at("build")), io::get_double(t.at("solve")),
               io::get_double(t.at("extract")), io::get_double(t.at("total"))};
  r.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
  return r;
}

inline Json to_json(const SeparabilityReport& r) {
  Json j;
  j["status"] = to_string(r.status);
  j["atoms"] = Json::array();
  for (const auto& a : r.atoms) {
    j["atoms"].push_back(
        {{"a", io::vector(a.a)}, {"b", io::vector(a.b)}, {"weight", io::number(a.weight)}});
  }
  j["reconstruction_residual"] = io::number(r.reconstruction_residual);
  if (r.infeasibility_ray) {
    Json blocks = Json::array();
    for (const auto& z : r.infeasibility_ray->block_multipliers) blocks.push_back(io::matrix(z));
    j["infeasibility_ray"] = {{"block_multipliers", blocks},
                              {"equality_multipliers",
                               io::vector(r.infeasibility_ray->equality_multipliers)}};
  } else {
    j["infeasibility_ray"] = nullptr;
  }
  if (r.ray_check) {
    j["ray_check"] = {{"min_eig", io::number(r.ray_check->min_eig)},
                      {"value", io::number(r.ray_check->value)},
                      {"adjoint_residual", io::number(r.ray_check->adjoint_residual)},
                      {"passes", r.ray_check->passes}};
  } else {
    j["ray_check"] = nullptr;
  }
  j["order_used"] = r.order_used;
  j["flat_t"] = r.flat_t;
  j["moment_rank"] = r.moment_rank;
  j["seed"] = r.seed;
  j["rounded"] = r.rounded;
  j["timings"] = {{"build", io::number(r.timings.build_seconds)},
                  {"solve", io::number(r.timings.solve_seconds)},
                  {"extract", io::number(r.timings.extract_seconds)},
                  {"total", io::number(r.timings.total_seconds)}};
  j["diagnostics"] = r.diagnostics;
  return j;
}

inline SeparabilityStatus separability_status_from(const std::string& s) {
  if (s == "Separable") return SeparabilityStatus::kSeparable;
  if (s == "NotSeparable") return SeparabilityStatus::kNotSeparable;
  if (s == "Inconclusive") return SeparabilityStatus::kInconclusive;
  throw InputError("unknown separability status \"" + s + "\"");
}

inline SeparabilityReport separability_report_from_json(const Json& j) {
  SeparabilityReport r;
  r.status = separability_status_from(j.at("status").get<std::string>());
  for (const auto& a : j.at("atoms")) {
    r.atoms.push_back({io::read_vector(a.at("a"), -1, "a"), io::read_vector(a.at("b"), -1, "b"),
                       io::get_double(a.at("weight"))});
  }
  r.reconstruction_residual = io::get_double(j.at("reconstruction_residual"));
  if (!j.at("infeasibility_ray").is_null()) {
    FarkasRay ray;
    for (const auto& z : j.at("infeasibility_ray").at("block_multipliers"))
      ray.block_multipliers.push_back(io::read_matrix(z, -1, -1, "block multiplier"));
    ray.equality_multipliers =
        io::read_vector(j.at("infeasibility_ray").at("equality_multipliers"), -1, "multipliers");
    r.infeasibility_ray = std::move(ray);
  }
  if (!j.at("ray_check").is_null()) {
    const Json& c = j.at("ray_check");
    r.ray_check = CertificateCheck{io::get_double(c.at("min_eig")), io::get_double(c.at("value")),
                                   io::get_double(c.at("adjoint_residual")),
                                   c.at("passes").get<bool>()};
  }
  r.order_used = j.at("order_used").get<int>();
  r.flat_t = j.at("flat_t").get<int>();
  r.moment_rank = j.at("moment_rank").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.rounded = j.at("rounded").get<bool>();
  const Json& t = j.at("timings");
  r.timings = {io::get_double(t.at("build")), io::get_double(t.at("solve")),
               io::get_double(t.at("extract")), io::get_double(t.at("total"))};
  r.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
  return r;
}

// ---------------------------------------------------------------------------
// Plain text mirrors the JSON fields.

namespace io {

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

inline std::string fmt(const Eigen::VectorXd& v) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v(i));
  return s + ")";
}

}  // namespace io

inline void write_text(const PositivityReport& r, std::ostream& os) {
  os << "status: " << to_string(r.status) << "\n";
  os << "b_min: " << (r.has_b_min ? io::fmt(r.b_min) : "none") << "\n";
  os << "boundary: " << (r.boundary ? "true" : "false") << "\n";
  os << "rounded: " << (r.rounded ? "true" : "false") << "\n";
  os << "order_used: " << r.order_used << "\nflat_t: " << r.flat_t
     << "\nmoment_rank: " << r.moment_rank << "\n";
  for (const auto& b : r.bound_sequence) {
    os << "bound k=" << b.k << ": primal " << io::fmt(b.primal) << ", dual " << io::fmt(b.dual)
       << " [" << b.solver_status << "]\n";
  }
  for (const auto& m : r.minimizers) {
    os << "minimizer: u=" << io::fmt(m.u) << " v=" << io::fmt(m.v)
       << " value=" << io::fmt(m.value) << " weight=" << io::fmt(m.weight) << "\n";
  }
  os << "timings: build " << io::fmt(r.timings.build_seconds) << " s, solve "
     << io::fmt(r.timings.solve_seconds) << " s, extract " << io::fmt(r.timings.extract_seconds)
     << " s, total " << io::fmt(r.timings.total_seconds) << " s\n";
  for (const auto& d : r.diagnostics) os << "note: " << d << "\n";
}

inline void write_text(const SeparabilityReport& r, std::ostream& os) {
  os << "status: " << to_string(r.status) << "\n";
  for (const auto& a : r.atoms) {
    os << "atom: a=" << io::fmt(a.a) << " b=" << io::fmt(a.b) << " weight=" << io::fmt(a.weight)
       << "\n";
  }
  os << "reconstruction_residual: " << io::fmt(r.reconstruction_residual) << "\n";
  if (r.ray_check) {
    os << "ray: min_eig " << io::fmt(r.ray_check->min_eig) << ", value "
       << io::fmt(r.ray_check->value) << ", adjoint residual "
       << io::fmt(r.ray_check->adjoint_residual) << (r.ray_check->passes ? " (passes)" : " (fails)")
       << "\n";
  }
  os << "order_used: " << r.order_used << "\nflat_t: " << r.flat_t
     << "\nmoment_rank: " << r.moment_rank << "\nseed: " << r.seed
     << "\nrounded: " << (r.rounded ? "true" : "false") << "\n";
  os << "timings: build " << io::fmt(r.timings.build_seconds) << " s, solve "
     << io::fmt(r.timings.solve_seconds) << " s, extract " << io::fmt(r.timings.extract_seconds)
     << " s, total " << io::fmt(r.timings.total_seconds) << " s\n";
  for (const auto& d : r.diagnostics) os << "note: " << d << "\n";
}

}  // namespace posmap
