// SPDX-License-Identifier: Apache-2.0
//
// Batch experiment driver. Subcommands mirror the run_* drivers; every run
// prints its assertions and exits 0 iff all of them pass. Results can be
// written as CSV / SVG / JSON with --out and --format.

#include <CLI11.hpp>

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <slspec/slspec.hpp>

using namespace slspec;

namespace {

struct output_options {
  std::string out_dir;
  std::string formats = "csv,json";
  int jobs = 1;
};

void add_output_options(CLI::App* cmd, output_options& oo) {
  cmd->add_option("--out", oo.out_dir, "output directory for artifacts");
  cmd->add_option("--format", oo.formats, "comma list of csv,svg,json")
      ->capture_default_str();
  cmd->add_option("--jobs", oo.jobs, "parallel workers over parameter cells")
      ->capture_default_str();
}

emit_formats parse_formats(const std::string& s) {
  emit_formats f{false, false, false};
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "csv") f.csv = true;
    else if (tok == "svg") f.svg = true;
    else if (tok == "json") f.json = true;
    else if (!tok.empty()) throw CLI::ValidationError("--format", "unknown format " + tok);
  }
  return f;
}

std::vector<int> parse_index_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  std::sort(out.begin(), out.end());
  return out;
}

inertia parse_partition(const std::string& s) {
  std::stringstream ss(s);
  std::string tok;
  std::vector<int> vals;
  while (std::getline(ss, tok, ',')) vals.push_back(std::stoi(tok));
  if (vals.size() != 3) throw CLI::ValidationError("partition", "expected n0,n+,n-");
  return inertia{vals[0], vals[1], vals[2]};
}

std::vector<double> geometric_sequence(int steps) {
  std::vector<double> s;
  for (int k = 0; k <= steps; ++k) s.push_back(std::pow(2.0, -k));
  return s;
}

int finish(const scan_report& r, const output_options& oo, const std::string& basename) {
  for (const auto& c : r.checks)
    std::printf("  [%s] %s%s%s\n", c.pass ? "pass" : "FAIL", c.name.c_str(),
                c.detail.empty() ? "" : ": ", c.detail.c_str());
  if (!oo.out_dir.empty()) {
    emit(r, oo.out_dir, basename, parse_formats(oo.formats));
    std::printf("  artifacts: %s/%s.{%s}\n", oo.out_dir.c_str(), basename.c_str(),
                oo.formats.c_str());
  }
  std::printf("%s\n", r.pass() ? "PASS" : "FAIL");
  return r.pass() ? 0 : 1;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spectra of d-dimensional self-adjoint Sturm-Liouville problems and the "
               "geometry of their boundary conditions"};
  app.require_subcommand(1);

  // ---- classify ----
  std::string classify_bc;
  auto* classify = app.add_subcommand("classify", "chart, layer and stratum of a boundary condition");
  classify->add_option("bc-file", classify_bc, "boundary condition (json)")->required();

  // ---- spectrum ----
  std::string sp_problem, sp_bc;
  double sp_r1 = 0.0, sp_r2 = 100.0, sp_tol = 1e-8;
  output_options sp_out;
  auto* spectrum = app.add_subcommand("spectrum", "eigenvalues in an interval with multiplicities");
  spectrum->add_option("problem", sp_problem, "problem file (json)")->required();
  spectrum->add_option("bc", sp_bc, "boundary condition file (json)")->required();
  spectrum->add_option("--range", [&](const std::vector<std::string>& v) {
    if (v.size() != 2) return false;
    sp_r1 = std::stod(v[0]);
    sp_r2 = std::stod(v[1]);
    return true;
  }, "interval r1 r2")->expected(2);
  spectrum->add_option("--tol", sp_tol, "bisection width target")->capture_default_str();
  add_output_options(spectrum, sp_out);

  // ---- rellich ----
  std::string rl_kappas;
  int rl_kmin = 3, rl_kmax = 12, rl_m = 2;
  output_options rl_out;
  auto* rellich = app.add_subcommand("rellich", "the classical u(0)=0, kappa u'(1)=u(1) jump scan");
  rellich->add_option("--kappas", rl_kappas, "explicit comma list of kappa values");
  rellich->add_option("--kpow-min", rl_kmin, "first k in kappa = 2^-k")->capture_default_str();
  rellich->add_option("--kpow-max", rl_kmax, "last k in kappa = 2^-k")->capture_default_str();
  rellich->add_option("--m", rl_m, "number of branches")->capture_default_str();
  add_output_options(rellich, rl_out);

  // ---- jump-scan ----
  std::string js_problem, js_chart, js_target, js_source;
  int js_steps = 12, js_m = 0;
  double js_floor = -1e6;
  output_options js_out;
  auto* jump = app.add_subcommand("jump-scan", "approach a singular stratum, verify the jump count");
  jump->add_option("problem", js_problem)->required();
  jump->add_option("--chart", js_chart, "chart indices, e.g. 1,2,3,4")->required();
  jump->add_option("--target", js_target, "target partition n0,n+,n-")->required();
  jump->add_option("--source", js_source, "source partition n0,n+,n-")->required();
  jump->add_option("--s-steps", js_steps, "s = 2^0 .. 2^-steps")->capture_default_str();
  jump->add_option("--m", js_m, "branches (default: jumps + 2)");
  jump->add_option("--divergence-floor", js_floor)->capture_default_str();
  add_output_options(jump, js_out);

  // ---- layer-path ----
  std::string lp_problem, lp_bc1, lp_bc2;
  int lp_steps = 64, lp_m = 1;
  output_options lp_out;
  auto* layer = app.add_subcommand("layer-path", "continuity along a constant-stratum path");
  layer->add_option("problem", lp_problem)->required();
  layer->add_option("bc1", lp_bc1)->required();
  layer->add_option("bc2", lp_bc2)->required();
  layer->add_option("--steps", lp_steps, "coarse sample count (fine = 2x)")->capture_default_str();
  layer->add_option("--m", lp_m, "branches")->capture_default_str();
  add_output_options(layer, lp_out);

  // ---- homotopy-scan ----
  std::string hs_src, hs_tgt, hs_chart, hs_target, hs_source;
  int hs_steps = 12, hs_m = 0;
  output_options hs_out;
  auto* homotopy = app.add_subcommand("homotopy-scan",
                                      "joint equation + boundary-condition limit scan");
  homotopy->add_option("problem-source", hs_src)->required();
  homotopy->add_option("problem-target", hs_tgt)->required();
  homotopy->add_option("--chart", hs_chart)->required();
  homotopy->add_option("--target", hs_target)->required();
  homotopy->add_option("--source", hs_source)->required();
  homotopy->add_option("--s-steps", hs_steps)->capture_default_str();
  homotopy->add_option("--m", hs_m);
  add_output_options(homotopy, hs_out);

  // ---- multiplicity-check ----
  std::uint64_t mc_seed = 1;
  int mc_trials = 20, mc_dim = 2, mc_eigs = 5;
  output_options mc_out;
  auto* mult = app.add_subcommand("multiplicity-check",
                                  "analytic vs geometric multiplicity on random problems");
  mult->add_option("--seed", mc_seed)->capture_default_str();
  mult->add_option("--trials", mc_trials)->capture_default_str();
  mult->add_option("--dim", mc_dim)->capture_default_str();
  mult->add_option("--eigs", mc_eigs, "eigenvalues per trial")->capture_default_str();
  add_output_options(mult, mc_out);

  // ---- derivative-check ----
  std::string dc_problem, dc_chart, dc_hfile;
  double dc_h0 = 1e-2;
  int dc_hsteps = 4, dc_branch = 1;
  output_options dc_out;
  auto* deriv = app.add_subcommand("derivative-check",
                                   "u*Hu against finite differences of the tracked branch");
  deriv->add_option("problem", dc_problem)->required();
  deriv->add_option("bc-chart", dc_chart, "boundary condition in chart form")->required();
  deriv->add_option("--H-file", dc_hfile, "Hermitian direction (json)")->required();
  deriv->add_option("--h0", dc_h0, "largest step")->capture_default_str();
  deriv->add_option("--h-steps", dc_hsteps, "number of halvings")->capture_default_str();
  deriv->add_option("--branch", dc_branch)->capture_default_str();
  add_output_options(deriv, dc_out);

  // ---- monotonicity-check ----
  std::string mo_problem, mo_chart, mo_hfile;
  double mo_tmax = 0.25;
  int mo_steps = 5, mo_branch = 1;
  std::uint64_t mo_seed = 0;
  output_options mo_out;
  auto* mono = app.add_subcommand("monotonicity-check",
                                  "branches are non-decreasing along PSD directions");
  mono->add_option("problem", mo_problem)->required();
  mono->add_option("bc-chart", mo_chart)->required();
  mono->add_option("--H-file", mo_hfile, "PSD direction (json); omit for a seeded random one");
  mono->add_option("--seed", mo_seed, "seed for the random PSD direction")->capture_default_str();
  mono->add_option("--t-max", mo_tmax)->capture_default_str();
  mono->add_option("--steps", mo_steps)->capture_default_str();
  mono->add_option("--branch", mo_branch)->capture_default_str();
  add_output_options(mono, mo_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (classify->parsed()) {
      const boundary_condition bc = load_bc(classify_bc);
      const chart_repr c = chart_decompose(bc);
      const stratum_label lab = stratum_of_chart(c);
      std::printf("dim:     %d\n", bc.dim);
      std::printf("layer:   %d (n0(B))\n", layer_index(bc));
      std::printf("chart K: %s\n", index_set_string(c.K).c_str());
      std::ostringstream os;
      os << lab.in;
      std::printf("inertia: %s of S_K\n", os.str().c_str());
      if (lab.K.empty())
        std::printf("margin:  - (empty K)\n");
      else
        std::printf("margin:  %.6g (smallest |eigenvalue| of S_K)\n", lab.margin);
      std::printf("%s\n", layer_index(bc) > 0 ? "SINGULAR (eigenvalue jumps nearby)"
                                              : "REGULAR (n-th eigenvalue continuous here)");
      return 0;
    }

    if (spectrum->parsed()) {
      std::vector<std::string> warnings;
      const coefficient_field f = load_problem(sp_problem, &warnings);
      print_warnings(warnings);
      const boundary_condition bc = load_bc(sp_bc);
      const spectrum_slice s = locate_eigenvalues(f, bc, sp_r1, sp_r2, sp_tol);
      std::printf("eigenvalues in (%.6g, %.6g):\n", s.r1, s.r2);
      scan_report r;
      r.kind = "spectrum";
      r.param_name = "index";
      int idx = 1;
      r.branches.assign(1, {});
      for (const auto& c : s.eigenvalues) {
        std::printf("  lambda_%d = %.12g  (multiplicity %d)\n", idx, c.value, c.multiplicity);
        for (int i = 0; i < c.multiplicity; ++i) {
          r.params.push_back(idx++);
          r.branches[0].push_back({c.value, false, false, ""});
        }
      }
      r.checks.push_back({"located", true,
                          std::to_string(s.total_multiplicity()) + " eigenvalues"});
      if (!sp_out.out_dir.empty())
        emit(r, sp_out.out_dir, "spectrum", parse_formats(sp_out.formats));
      return 0;
    }

    experiment_options opt;

    if (rellich->parsed()) {
      std::vector<double> kappas;
      if (!rl_kappas.empty()) {
        std::stringstream ss(rl_kappas);
        std::string tok;
        while (std::getline(ss, tok, ',')) kappas.push_back(std::stod(tok));
      } else {
        for (int k = rl_kmin; k <= rl_kmax; ++k) kappas.push_back(std::pow(2.0, -k));
      }
      opt.jobs = rl_out.jobs;
      const scan_report r = run_rellich(kappas, rl_m, opt);
      std::printf("rellich scan over %zu kappa values, %d branches\n", kappas.size(), rl_m);
      return finish(r, rl_out, "rellich");
    }

    if (jump->parsed()) {
      std::vector<std::string> warnings;
      const coefficient_field f = load_problem(js_problem, &warnings);
      print_warnings(warnings);
      opt.jobs = js_out.jobs;
      opt.divergence_floor = js_floor;
      const scan_report r = run_jump_scan(f, parse_index_list(js_chart),
                                          parse_partition(js_target),
                                          parse_partition(js_source),
                                          geometric_sequence(js_steps), js_m, opt);
      std::printf("jump scan: predicted diverging branches = %d\n", r.predicted_jumps);
      return finish(r, js_out, "jump-scan");
    }

    if (layer->parsed()) {
      std::vector<std::string> warnings;
      const coefficient_field f = load_problem(lp_problem, &warnings);
      print_warnings(warnings);
      opt.jobs = lp_out.jobs;
      const scan_report r =
          run_layer_continuity(f, load_bc(lp_bc1), load_bc(lp_bc2), lp_steps, lp_m, opt);
      std::printf("layer path in chart %s, stratum %s\n", r.meta.at("K").c_str(),
                  r.meta.at("stratum").c_str());
      return finish(r, lp_out, "layer-path");
    }

    if (homotopy->parsed()) {
      std::vector<std::string> warnings;
      const coefficient_field fs = load_problem(hs_src, &warnings);
      const coefficient_field ft = load_problem(hs_tgt, &warnings);
      print_warnings(warnings);
      opt.jobs = hs_out.jobs;
      const scan_report r = run_homotopy_scan(fs, ft, parse_index_list(hs_chart),
                                              parse_partition(hs_target),
                                              parse_partition(hs_source),
                                              geometric_sequence(hs_steps), hs_m, opt);
      std::printf("homotopy scan: predicted diverging branches = %d\n", r.predicted_jumps);
      return finish(r, hs_out, "homotopy-scan");
    }

    if (mult->parsed()) {
      opt.jobs = mc_out.jobs;
      const scan_report r = run_multiplicity_check(mc_seed, mc_trials, mc_dim, mc_eigs, opt);
      std::printf("multiplicity check: %d trials at d = %d, %d eigenvalues each\n", mc_trials,
                  mc_dim, mc_eigs);
      return finish(r, mc_out, "multiplicity-check");
    }

    if (deriv->parsed()) {
      std::vector<std::string> warnings;
      const coefficient_field f = load_problem(dc_problem, &warnings);
      print_warnings(warnings);
      const chart_repr chart = load_chart(dc_chart);
      const cmatrix H = load_hermitian(dc_hfile);
      std::vector<double> hs;
      for (int k = 0; k < dc_hsteps; ++k) hs.push_back(dc_h0 * std::pow(0.5, k));
      const scan_report r = run_derivative_check(f, chart, H, hs, dc_branch, opt);
      std::printf("derivative check at lambda = %s: u*Hu = %s, fd limit = %s\n",
                  r.meta.at("lambda").c_str(), r.meta.at("formula").c_str(),
                  r.meta.at("extrapolated").c_str());
      return finish(r, dc_out, "derivative-check");
    }

    if (mono->parsed()) {
      std::vector<std::string> warnings;
      const coefficient_field f = load_problem(mo_problem, &warnings);
      print_warnings(warnings);
      const chart_repr chart = load_chart(mo_chart);
      cmatrix H;
      if (!mo_hfile.empty()) {
        H = load_hermitian(mo_hfile);
      } else {
        std::mt19937_64 rng(mo_seed);
        std::normal_distribution<double> g(0.0, 1.0);
        cmatrix G(2 * chart.dim, 2 * chart.dim);
        for (int i = 0; i < G.rows(); ++i)
          for (int j = 0; j < G.cols(); ++j) G(i, j) = complex(g(rng), g(rng));
        H = G * G.adjoint();
        H /= std::max(1.0, max_abs(H));
      }
      std::vector<double> ts;
      for (int k = 0; k <= mo_steps; ++k) ts.push_back(mo_tmax * k / mo_steps);
      const scan_report r = run_monotonicity_check(f, chart, H, ts, mo_branch, opt);
      std::printf("monotonicity check over %d steps up to t = %.6g\n", mo_steps, mo_tmax);
      return finish(r, mo_out, "monotonicity-check");
    }
  } catch (const error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
