// posmap: positivity of linear maps and separability of Kronecker matrices.
//
//   posmap positivity   <file.json> [flags]   exit 0 Positive, 1 NotPositive, 2 Inconclusive
//   posmap separability <file.json> [flags]   exit 0 Separable, 1 NotSeparable, 2 Inconclusive
//
// Malformed input exits 64, an unreadable file 66, anything else 70.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "posmap/posmap.hpp"

namespace {

constexpr int kExitInput = 64;
constexpr int kExitNoInput = 66;
constexpr int kExitSoftware = 70;

struct Flags {
  std::string input;
  int max_order = 6;
  double rank_tol = 1e-6;
  double psd_tol = 1e-7;
  double eq_tol = 1e-6;
  double solver_tol = 1e-8;
  double positivity_tol = 1e-6;
  std::uint64_t seed = 0;
  std::string format = "json";
  std::string dump_sdp;
  bool upper_entries = false;
  bool verbose = false;
};

struct NoInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

posmap::Json read_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NoInput("cannot open " + path);
  try {
    return posmap::Json::parse(in);
  } catch (const posmap::Json::parse_error& e) {
    throw posmap::InputError(std::string("not valid JSON: ") + e.what());
  }
}

posmap::FlatnessTolerances flatness(const Flags& f) {
  posmap::FlatnessTolerances t;
  t.rank_tol = f.rank_tol;
  t.psd_tol = f.psd_tol;
  t.eq_tol = f.eq_tol;
  return t;
}

std::function<void(const posmap::Relaxation&)> dumper(const Flags& f) {
  if (f.dump_sdp.empty()) return {};
  return [path = f.dump_sdp](const posmap::Relaxation& rel) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    posmap::dump_triplets(rel.sdp, out);
  };
}

template <class Report>
void emit(const Report& r, const Flags& f) {
  if (f.format == "text") {
    posmap::write_text(r, std::cout);
  } else {
    std::cout << posmap::to_json(r).dump(2) << "\n";
  }
}

int run_positivity(const Flags& f) {
  const posmap::BiQuadraticForm b = posmap::parse_positivity_input(read_input(f.input));
  posmap::PositivityOptions o;
  o.k_max = f.max_order;
  o.positivity_tol = f.positivity_tol;
  o.seed = f.seed;
  o.flatness = flatness(f);
  o.solver.tol = f.solver_tol;
  if (f.verbose) o.solver.log = &std::cerr;
  o.on_relaxation = dumper(f);
  const posmap::PositivityReport r = posmap::check_positivity(b, o);
  emit(r, f);
  switch (r.status) {
    case posmap::PositivityStatus::kPositive: return 0;
    case posmap::PositivityStatus::kNotPositive: return 1;
    default: return 2;
  }
}

int run_separability(const Flags& f) {
  const posmap::KroneckerMatrix a =
      posmap::parse_separability_input(read_input(f.input), f.upper_entries);
  posmap::SeparabilityOptions o;
  o.k_max = f.max_order;
  o.seed = f.seed;
  o.flatness = flatness(f);
  o.solver.tol = f.solver_tol;
  if (f.verbose) o.solver.log = &std::cerr;
  o.on_relaxation = dumper(f);
  const posmap::SeparabilityReport r = posmap::check_separability(a, o);
  emit(r, f);
  switch (r.status) {
    case posmap::SeparabilityStatus::kSeparable: return 0;
    case posmap::SeparabilityStatus::kNotSeparable: return 1;
    default: return 2;
  }
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("input", f.input, "problem file (JSON)")->required();
  cmd->add_option("--max-order", f.max_order, "largest relaxation order k")
      ->capture_default_str()
      ->check(CLI::Range(3, 20));
  cmd->add_option("--rank-tol", f.rank_tol, "absolute eigenvalue cutoff for numerical rank")
      ->capture_default_str();
  cmd->add_option("--psd-tol", f.psd_tol, "PSD tolerance")->capture_default_str();
  cmd->add_option("--eq-tol", f.eq_tol, "equality tolerance")->capture_default_str();
  cmd->add_option("--solver-tol", f.solver_tol, "SDP solver tolerance")->capture_default_str();
  cmd->add_option("--seed", f.seed, "seed for random objectives")->capture_default_str();
  cmd->add_option("--format", f.format, "report format")
      ->check(CLI::IsMember({"json", "text"}))
      ->capture_default_str();
  cmd->add_option("--dump-sdp", f.dump_sdp, "write the last relaxation in triplet form");
  cmd->add_flag("-v,--verbose", f.verbose, "solver log on stderr");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Positivity of linear maps and separability of Kronecker matrices"};
  app.require_subcommand(1);
  Flags f;
  CLI::App* pos = app.add_subcommand("positivity", "minimize the bi-quadratic form over bi-spheres");
  add_common(pos, f);
  pos->add_option("--positivity-tol", f.positivity_tol, "b_min >= -tol counts as positive")
      ->capture_default_str();
  CLI::App* sep = app.add_subcommand("separability", "decide membership in the separable cone");
  add_common(sep, f);
  sep->add_flag("--upper-entries", f.upper_entries,
                "read only A[pi(i,j), pi(k,l)] with i <= k, j <= l and symmetrize");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    return pos->parsed() ? run_positivity(f) : run_separability(f);
  } catch (const NoInput& e) {
    std::cerr << "posmap: " << e.what() << "\n";
    return kExitNoInput;
  } catch (const posmap::InputError& e) {
    std::cerr << "posmap: malformed input: " << e.what() << "\n";
    return kExitInput;
  } catch (const posmap::Json::exception& e) {
    std::cerr << "posmap: malformed input: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "posmap: " << e.what() << "\n";
    return kExitSoftware;
  }
}
