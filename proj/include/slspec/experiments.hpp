// SPDX-License-Identifier: Apache-2.0
//
// Batch experiment drivers. Each run_* function evaluates eigenvalue branches
// over a parameter sweep, applies the assertions that make the run meaningful
// (divergence pattern, index shift, continuity, derivative consistency,
// monotonicity, multiplicity equality), and returns a report that the
// emitters serialize as CSV, SVG or JSON. Reports are deterministic for a
// fixed seed and config, independently of the --jobs schedule.

#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "slspec/bc.hpp"
#include "slspec/problem.hpp"
#include "slspec/shooting.hpp"

namespace slspec {

struct scan_check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct scan_cell {
  double value = 0.0;
  bool diverged = false;
  bool failed = false;  // solver error; recorded, not fatal
  std::string note;
};

struct scan_report {
  std::string kind;
  std::string param_name = "s";
  std::vector<double> params;
  std::vector<std::vector<scan_cell>> branches;  // [branch][param index]
  int predicted_jumps = 0;
  std::vector<double> target_spectrum;
  std::vector<scan_check> checks;
  std::map<std::string, std::string> meta;

  bool pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

struct experiment_options {
  double divergence_floor = -1e6;
  double value_tol = 1e-8;
  double convergence_tol = 1e-3;  // relative |lambda_n(s_min) - shifted target|
  int jobs = 1;
};

namespace detail {

template <class F>
inline void parallel_for(int n, int jobs, F&& body) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) body(i);
    });
  for (auto& th : pool) th.join();
}

// First m eigenvalue branches at one parameter point. Solver errors become
// diverged cells with a note instead of aborting the sweep.
inline std::vector<scan_cell> scan_column(const coefficient_field& f,
                                          const boundary_condition& bc, int m,
                                          const experiment_options& opt) {
  std::vector<scan_cell> col(m);
  try {
    search_policy pol;
    pol.value_tol = opt.value_tol;
    spectral_locator loc(f, bc);
    const std::vector<double> vals = loc.first_n(m, pol);
    for (int i = 0; i < m; ++i) col[i] = {vals[i], vals[i] < opt.divergence_floor, false, ""};
  } catch (const error& e) {
    for (int i = 0; i < m; ++i) col[i] = {0.0, true, true, e.what()};
  }
  return col;
}

inline std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline bool cell_ok(const scan_cell& c) { return !c.diverged && !c.failed; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Jump scans: approach a more singular stratum along the explicit path and
// check the predicted number of diverging branches plus the index shift of
// the surviving ones.

namespace detail {

inline scan_report jump_scan_impl(const std::string& kind,
                                  const std::function<coefficient_field(double)>& field_at,
                                  const coefficient_field& target_field,
                                  const std::vector<int>& K, const inertia& target,
                                  const inertia& source, std::vector<double> s_values, int m,
                                  const experiment_options& opt) {
  std::sort(s_values.begin(), s_values.end(), std::greater<double>());
  const int d = target_field.dim;
  const int jumps = source.n_plus - target.n_plus;
  if (m <= 0) m = jumps + 2;
  if (m <= jumps) m = jumps + 1;
  approach_path(K, target, source, 1.0, d);  // validates the partition pair

  scan_report r;
  r.kind = kind;
  r.param_name = "s";
  r.params = s_values;
  r.predicted_jumps = jumps;
  r.meta["K"] = index_set_string(K);
  {
    std::ostringstream os;
    os << target << " <- " << source;
    r.meta["partitions"] = os.str();
  }

  const boundary_condition bc_target = canonical_singular(K, target, d);
  {
    search_policy pol;
    pol.value_tol = opt.value_tol;
    r.target_spectrum = spectral_locator(target_field, bc_target).first_n(m - jumps, pol);
  }

  const int np = static_cast<int>(s_values.size());
  std::vector<std::vector<scan_cell>> cols(np);
  detail::parallel_for(np, opt.jobs, [&](int k) {
    const double s = s_values[k];
    const boundary_condition bc_s = approach_path(K, target, source, s, d);
    cols[k] = detail::scan_column(field_at(s), bc_s, m, opt);
  });
  r.branches.assign(m, std::vector<scan_cell>(np));
  for (int k = 0; k < np; ++k)
    for (int b = 0; b < m; ++b) r.branches[b][k] = cols[k][b];

  // divergence markers occupy exactly branches 1..jumps at the smallest s
  {
    bool ok = true;
    std::ostringstream det;
    const int last = np - 1;
    for (int b = 0; b < m; ++b) {
      const bool want = b < jumps;
      if (r.branches[b][last].diverged != want) {
        ok = false;
        det << "branch " << b + 1 << (want ? " did not diverge" : " diverged") << " at s = "
            << s_values[last] << "; ";
      }
    }
    r.checks.push_back({"divergence-pattern", ok, det.str()});
  }
  // diverging branches decrease monotonically over the last three s values
  if (jumps > 0 && np >= 3) {
    bool ok = true;
    std::ostringstream det;
    for (int b = 0; b < jumps; ++b)
      for (int k = np - 3; k + 1 < np; ++k) {
        const auto& c1 = r.branches[b][k];
        const auto& c2 = r.branches[b][k + 1];
        if (c1.failed || c2.failed) continue;
        if (!(c2.value < c1.value)) {
          ok = false;
          det << "branch " << b + 1 << " not decreasing between s = " << s_values[k] << " and "
              << s_values[k + 1] << "; ";
        }
      }
    r.checks.push_back({"divergence-monotone", ok, det.str()});
  }
  // surviving branches approach the target spectrum shifted by `jumps`
  {
    bool ok = true;
    std::ostringstream det;
    const int last = np - 1;
    for (int b = jumps; b < m; ++b) {
      const double tgt = r.target_spectrum[b - jumps];
      const auto& c = r.branches[b][last];
      if (!detail::cell_ok(c)) {
        ok = false;
        det << "branch " << b + 1 << " unavailable; ";
        continue;
      }
      const double err = std::abs(c.value - tgt) / std::max(1.0, std::abs(tgt));
      if (err > opt.convergence_tol) {
        ok = false;
        det << "branch " << b + 1 << " relative error " << err << " at s = " << s_values[last]
            << "; ";
      }
    }
    r.checks.push_back({"shifted-convergence", ok, det.str()});
  }
  if (np >= 3) {
    bool ok = true;
    std::ostringstream det;
    for (int b = jumps; b < m; ++b) {
      const double tgt = r.target_spectrum[b - jumps];
      for (int k = np - 3; k + 1 < np; ++k) {
        const auto& c1 = r.branches[b][k];
        const auto& c2 = r.branches[b][k + 1];
        if (!detail::cell_ok(c1) || !detail::cell_ok(c2)) continue;
        const double slack = 1e-12 * std::max(1.0, std::abs(tgt));
        if (std::abs(c2.value - tgt) > std::abs(c1.value - tgt) + slack) {
          ok = false;
          det << "branch " << b + 1 << " distance to target not non-increasing at s = "
              << s_values[k + 1] << "; ";
        }
      }
    }
    r.checks.push_back({"convergence-monotone", ok, det.str()});
  }
  return r;
}

}  // namespace detail

inline scan_report run_jump_scan(const coefficient_field& f, const std::vector<int>& K,
                                 const inertia& target, const inertia& source,
                                 const std::vector<double>& s_values, int m = 0,
                                 const experiment_options& opt = {}) {
  return detail::jump_scan_impl("jump-scan", [&](double) { return f; }, f, K, target, source,
                                s_values, m, opt);
}

// Joint limit: the equation morphs via the convex homotopy (tau = 1 - s)
// while the boundary condition follows the approach path.
inline scan_report run_homotopy_scan(const coefficient_field& source_field,
                                     const coefficient_field& target_field,
                                     const std::vector<int>& K, const inertia& target,
                                     const inertia& source,
                                     const std::vector<double>& s_values, int m = 0,
                                     const experiment_options& opt = {}) {
  scan_report r = detail::jump_scan_impl(
      "homotopy-scan",
      [&](double s) { return blend(source_field, target_field, 1.0 - s); }, target_field, K,
      target, source, s_values, m, opt);
  return r;
}

// ---------------------------------------------------------------------------
// The classical jump example: -u'' = lambda u on [0,1], u(0) = 0,
// kappa u'(1) = u(1). As kappa -> 0+ the first eigenvalue diverges to
// -infinity and every later branch slides down one index.

inline boundary_condition rellich_bc(double kappa) {
  cmatrix A(2, 2), B(2, 2);
  A << -1, 0, 0, 1;
  B << 0, 0, 0, -kappa;
  return validate(A, B);
}

inline scan_report run_rellich(std::vector<double> kappas, int m = 3,
                               const experiment_options& opt = {}) {
  std::sort(kappas.begin(), kappas.end(), std::greater<double>());
  if (m < 2) m = 2;
  const coefficient_field f = scalar_field(1.0, 0.0, 1.0);

  scan_report r;
  r.kind = "rellich";
  r.param_name = "s";  // the kappa sequence plays the role of s
  r.params = kappas;
  r.predicted_jumps = 1;
  r.meta["bc"] = "u(0)=0, kappa*u'(1)=u(1)";
  {
    search_policy pol;
    pol.value_tol = opt.value_tol;
    r.target_spectrum = spectral_locator(f, rellich_bc(0.0)).first_n(m - 1, pol);
  }

  const int np = static_cast<int>(kappas.size());
  std::vector<std::vector<scan_cell>> cols(np);
  detail::parallel_for(np, opt.jobs, [&](int k) {
    cols[k] = detail::scan_column(f, rellich_bc(kappas[k]), m, opt);
  });
  r.branches.assign(m, std::vector<scan_cell>(np));
  for (int k = 0; k < np; ++k)
    for (int b = 0; b < m; ++b) r.branches[b][k] = cols[k][b];

  {
    bool ok = true;
    std::ostringstream det;
    for (int k = 0; k + 1 < np; ++k) {
      const auto& c1 = r.branches[0][k];
      const auto& c2 = r.branches[0][k + 1];
      if (c1.failed || c2.failed) {
        ok = false;
        det << "lambda_1 unavailable at step " << k << "; ";
        continue;
      }
      if (!(c2.value < c1.value)) {
        ok = false;
        det << "lambda_1 not strictly decreasing at kappa = " << kappas[k + 1] << "; ";
      }
    }
    r.checks.push_back({"lambda1-decreasing", ok, det.str()});
  }
  {
    // lambda_n(kappa) -> lambda_{n-1}(0), monotone approach over the tail
    bool ok = true;
    std::ostringstream det;
    const int tail = std::min(4, np);
    for (int b = 1; b < m; ++b) {
      const double tgt = r.target_spectrum[b - 1];
      for (int k = np - tail; k + 1 < np; ++k) {
        if (k < 0) continue;
        const auto& c1 = r.branches[b][k];
        const auto& c2 = r.branches[b][k + 1];
        if (!detail::cell_ok(c1) || !detail::cell_ok(c2)) {
          ok = false;
          det << "branch " << b + 1 << " unavailable; ";
          continue;
        }
        if (std::abs(c2.value - tgt) > std::abs(c1.value - tgt) + 1e-12 * std::max(1.0, std::abs(tgt))) {
          ok = false;
          det << "branch " << b + 1 << " not approaching " << tgt << " monotonically at kappa = "
              << kappas[k + 1] << "; ";
        }
      }
    }
    r.checks.push_back({"shifted-convergence-monotone", ok, det.str()});
  }
  return r;
}

// ---------------------------------------------------------------------------
// Layer continuity: sample eigenvalue branches along a constant-stratum path
// at `steps` and `2*steps` subdivisions; no branch may diverge, and the
// maximum adjacent jump of the first branch must shrink under refinement.

inline scan_report run_layer_continuity(const coefficient_field& f,
                                        const boundary_condition& bc1,
                                        const boundary_condition& bc2, int steps, int m = 1,
                                        const experiment_options& opt = {}) {
  if (steps < 2) steps = 2;
  if (m < 1) m = 1;
  const stratum_path path(bc1, bc2);

  scan_report r;
  r.kind = "layer-path";
  r.param_name = "tau";
  r.meta["K"] = index_set_string(path.chart_indices());
  {
    std::ostringstream os;
    os << path.label();
    r.meta["stratum"] = os.str();
  }

  auto sample = [&](int n) {
    std::vector<std::vector<scan_cell>> cols(n + 1);
    detail::parallel_for(n + 1, opt.jobs, [&](int k) {
      const double tau = static_cast<double>(k) / n;
      cols[k] = detail::scan_column(f, path.at(tau), m, opt);
    });
    return cols;
  };
  const auto coarse = sample(steps);
  const auto fine = sample(2 * steps);

  r.params.resize(2 * steps + 1);
  for (int k = 0; k <= 2 * steps; ++k) r.params[k] = static_cast<double>(k) / (2 * steps);
  r.branches.assign(m, std::vector<scan_cell>(2 * steps + 1));
  for (int k = 0; k <= 2 * steps; ++k)
    for (int b = 0; b < m; ++b) r.branches[b][k] = fine[k][b];

  bool all_finite = true;
  for (const auto& grid : {std::cref(coarse), std::cref(fine)})
    for (const auto& col : grid.get())
      for (const auto& c : col)
        if (!detail::cell_ok(c)) all_finite = false;
  r.checks.push_back({"no-divergence", all_finite,
                      all_finite ? "" : "divergence marker inside a constant-stratum path"});

  auto max_jump = [&](const std::vector<std::vector<scan_cell>>& cols) {
    double mj = 0.0;
    for (std::size_t k = 0; k + 1 < cols.size(); ++k)
      mj = std::max(mj, std::abs(cols[k + 1][0].value - cols[k][0].value));
    return mj;
  };
  const double jump_coarse = max_jump(coarse);
  const double jump_fine = max_jump(fine);
  r.meta["max-jump-coarse"] = detail::format_value(jump_coarse);
  r.meta["max-jump-fine"] = detail::format_value(jump_fine);
  const bool shrinks = (jump_coarse < 1e-12 && jump_fine < 1e-12) ||
                       jump_fine < 0.75 * jump_coarse;
  r.checks.push_back({"refinement-shrink", all_finite && shrinks,
                      "max jump " + detail::format_value(jump_coarse) + " -> " +
                          detail::format_value(jump_fine)});
  return r;
}

// ---------------------------------------------------------------------------
// Multiplicity equality: random problems, random charts; for every located
// eigenvalue the winding-number multiplicity must equal the kernel dimension.

inline scan_report run_multiplicity_check(std::uint64_t seed, int trials, int d,
                                          int eigs_per_trial = 5,
                                          const experiment_options& opt = {}) {
  scan_report r;
  r.kind = "multiplicity-check";
  r.param_name = "trial";
  r.meta["seed"] = std::to_string(seed);
  r.meta["dim"] = std::to_string(d);
  r.branches.assign(eigs_per_trial, std::vector<scan_cell>(trials));
  r.params.resize(trials);

  std::vector<scan_check> trial_checks(trials);
  std::vector<std::vector<scan_cell>> cols(trials, std::vector<scan_cell>(eigs_per_trial));

  // pre-generate deterministic trial data (independent of the schedule)
  struct trial_data {
    coefficient_field field;
    boundary_condition bc;
    std::string desc;
  };
  std::vector<trial_data> data;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int t = 0; t < trials; ++t) {
    const int pieces = 1 + static_cast<int>(unif(rng) * 3.0);
    std::vector<double> grid{0.0};
    for (int i = 1; i < pieces; ++i) grid.push_back(0.2 + 0.6 * unif(rng));
    grid.push_back(1.0);
    std::sort(grid.begin(), grid.end());
    std::vector<rmatrix> P, Q, W;
    for (int i = 0; i < pieces; ++i) {
      rmatrix rp(d, d), rw(d, d), q(d, d);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
          rp(a, b) = gauss(rng);
          rw(a, b) = gauss(rng);
          q(a, b) = gauss(rng);
        }
      P.push_back(rp * rp.transpose() + 0.4 * rmatrix::Identity(d, d));
      W.push_back(rw * rw.transpose() + 0.4 * rmatrix::Identity(d, d));
      Q.push_back((q + q.transpose()) * 1.0);
    }
    std::vector<int> K;
    for (int k = 1; k <= 2 * d; ++k)
      if (unif(rng) < 0.5) K.push_back(k);
    cmatrix S(2 * d, 2 * d);
    for (int a = 0; a < 2 * d; ++a) {
      S(a, a) = gauss(rng);
      for (int b = a + 1; b < 2 * d; ++b) {
        S(a, b) = complex(gauss(rng), gauss(rng)) / std::sqrt(2.0);
        S(b, a) = std::conj(S(a, b));
      }
    }
    trial_data td{make_field(d, grid, P, Q, W), chart_compose(K, S),
                  "K=" + index_set_string(K)};
    data.push_back(std::move(td));
  }

  detail::parallel_for(trials, opt.jobs, [&](int t) {
    std::ostringstream det;
    bool ok = true;
    try {
      spectral_locator loc(data[t].field, data[t].bc);
      search_policy pol;
      pol.value_tol = opt.value_tol;
      // bracket enough eigenvalues, then compare multiplicities per cluster
      double lo = lower_bound_estimate(data[t].field, data[t].bc);
      double hi = pol.origin + pol.delta;
      int total = 0;
      for (int j = 1; j <= pol.max_doublings; ++j) {
        double l = lo, h = hi;
        total = loc.certified_count(l, h, pol.value_tol);
        lo = l;
        hi = h;
        if (total >= eigs_per_trial) break;
        hi = pol.origin + pol.delta * std::pow(2.0, j);
      }
      const spectrum_slice slice = loc.locate(lo, hi, pol.value_tol);
      int covered = 0;
      for (const auto& cl : slice.eigenvalues) {
        if (covered >= eigs_per_trial) break;
        const int geo = geometric_multiplicity(data[t].field, data[t].bc, cl.value);
        // radius below the gap to the neighbours and inside the slice
        double gap = std::min(cl.value - slice.r1, slice.r2 - cl.value);
        for (const auto& other : slice.eigenvalues)
          if (other.value != cl.value)
            gap = std::min(gap, std::abs(other.value - cl.value));
        const double radius = std::max(1e-7, 0.45 * gap);
        const int ana = loc.analytic_multiplicity(cl.value, radius);
        for (int i = 0; i < cl.multiplicity && covered + i < eigs_per_trial; ++i)
          cols[t][covered + i] = {cl.value, false, false, ""};
        if (ana != geo || ana != cl.multiplicity) {
          ok = false;
          det << "lambda = " << cl.value << ": analytic " << ana << ", geometric " << geo
              << ", cluster " << cl.multiplicity << " (" << data[t].desc << "); ";
        }
        covered += cl.multiplicity;
      }
      if (covered < eigs_per_trial) {
        ok = false;
        det << "located only " << covered << " eigenvalues; ";
      }
    } catch (const error& e) {
      ok = false;
      det << "solver error: " << e.what();
      for (int i = 0; i < eigs_per_trial; ++i) cols[t][i] = {0.0, true, true, e.what()};
    }
    trial_checks[t] = {"trial-" + std::to_string(t), ok, det.str()};
  });

  for (int t = 0; t < trials; ++t) {
    r.params[t] = t;
    for (int b = 0; b < eigs_per_trial; ++b) r.branches[b][t] = cols[t][b];
    r.checks.push_back(trial_checks[t]);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Derivative formula: compare u*Hu against centered finite differences of the
// tracked simple branch, with a Richardson consistency table.

struct derivative_result {
  double lambda_star = 0.0;
  double formula = 0.0;        // u* H u
  double extrapolated = 0.0;   // Richardson limit of the finite differences
  double observed_order = 0.0;
};

namespace detail {

// eigenvalue of (f, chart(K, S)) nearest to lambda_ref inside a half-gap
// window; throws branch_tracking_error when the match is ambiguous.
inline double tracked_eigenvalue(const coefficient_field& f, const std::vector<int>& K,
                                 const cmatrix& S, double lambda_ref, double half_gap,
                                 double value_tol) {
  const boundary_condition bc = chart_compose(K, S);
  spectral_locator loc(f, bc);
  const spectrum_slice slice = loc.locate(lambda_ref - half_gap, lambda_ref + half_gap,
                                          value_tol);
  if (slice.eigenvalues.empty())
    throw branch_tracking_error("no eigenvalue inside the tracking window around " +
                                std::to_string(lambda_ref));
  double best = slice.eigenvalues.front().value;
  for (const auto& c : slice.eigenvalues)
    if (std::abs(c.value - lambda_ref) < std::abs(best - lambda_ref)) best = c.value;
  if (std::abs(best - lambda_ref) > 0.5 * half_gap)
    throw branch_tracking_error("nearest eigenvalue " + std::to_string(best) +
                                " is more than half the spectral gap away from " +
                                std::to_string(lambda_ref));
  return best;
}

}  // namespace detail

inline scan_report run_derivative_check(const coefficient_field& f, const chart_repr& chart,
                                        const cmatrix& H, std::vector<double> h_values,
                                        int branch = 1, const experiment_options& opt = {}) {
  require_hermitian(H, "run_derivative_check(H)");
  std::sort(h_values.begin(), h_values.end(), std::greater<double>());
  const boundary_condition bc0 = chart_compose(chart.K, chart.S);
  spectral_locator loc(f, bc0);
  search_policy pol;
  pol.value_tol = std::min(opt.value_tol, 1e-9);

  const std::vector<double> base = loc.first_n(branch + 1, pol);
  const double lambda_star = base[branch - 1];
  double gap = std::abs(base[branch] - lambda_star);
  if (branch >= 2) gap = std::min(gap, std::abs(lambda_star - base[branch - 2]));
  if (!(gap > 0.0) || loc.analytic_multiplicity(lambda_star, std::max(1e-7, 0.45 * gap)) != 1)
    throw not_simple_error("branch " + std::to_string(branch) + " at lambda = " +
                           std::to_string(lambda_star) + " is not simple");

  // u from the boundary trace of the normalized eigenfunction, split by K
  const eigenfunction_data ef = eigenfunction(f, bc0, lambda_star, 0);
  const int two_d = 2 * f.dim;
  cvector u(two_d);
  for (int i = 1; i <= two_d; ++i)
    u(i - 1) = detail::contains(chart.K, i) ? ef.trace(two_d + i - 1) : ef.trace(i - 1);
  const double formula = std::real((u.adjoint() * H * u)(0, 0));

  scan_report r;
  r.kind = "derivative-check";
  r.param_name = "h";
  r.params = h_values;
  r.meta["lambda"] = detail::format_value(lambda_star);
  r.meta["formula"] = detail::format_value(formula);
  r.branches.assign(2, std::vector<scan_cell>(h_values.size()));

  const double half_gap = 0.5 * gap;
  std::vector<double> fd(h_values.size());
  for (std::size_t j = 0; j < h_values.size(); ++j) {
    const double h = h_values[j];
    const double lp = detail::tracked_eigenvalue(f, chart.K, chart.S + h * H, lambda_star,
                                                 half_gap, pol.value_tol);
    const double lm = detail::tracked_eigenvalue(f, chart.K, chart.S - h * H, lambda_star,
                                                 half_gap, pol.value_tol);
    fd[j] = (lp - lm) / (2.0 * h);
    r.branches[0][j] = {fd[j], false, false, "fd"};
    r.branches[1][j] = {std::abs(fd[j] - formula), false, false, "error"};
  }

  // observed order from consecutive error ratios; the centered difference of
  // an analytic simple branch is O(h^2)
  const double noise = 1e-11 * (1.0 + std::abs(formula));
  double order = std::numeric_limits<double>::infinity();
  bool measurable = false;
  for (std::size_t j = 0; j + 1 < h_values.size(); ++j) {
    const double e1 = std::abs(fd[j] - formula);
    const double e2 = std::abs(fd[j + 1] - formula);
    if (e1 < noise || e2 < noise) continue;
    measurable = true;
    order = std::min(order, std::log(e1 / e2) / std::log(h_values[j] / h_values[j + 1]));
  }
  if (!measurable) order = 2.0;  // differences at the noise floor
  double extrapolated = fd.back();
  if (h_values.size() >= 2) {
    const double h1 = h_values[h_values.size() - 2], h2 = h_values.back();
    const double q = (h1 / h2) * (h1 / h2);
    extrapolated = (q * fd.back() - fd[fd.size() - 2]) / (q - 1.0);
  }
  r.meta["observed-order"] = detail::format_value(order);
  r.meta["extrapolated"] = detail::format_value(extrapolated);

  r.checks.push_back({"order", order >= 1.9,
                      "observed order " + detail::format_value(order)});
  const double lim_err = std::abs(extrapolated - formula);
  r.checks.push_back({"extrapolated-limit", lim_err <= 1e-6 * (1.0 + std::abs(formula)),
                      "|fd limit - u*Hu| = " + detail::format_value(lim_err)});
  return r;
}

inline derivative_result derivative_summary(const scan_report& r) {
  derivative_result out;
  out.lambda_star = std::stod(r.meta.at("lambda"));
  out.formula = std::stod(r.meta.at("formula"));
  out.extrapolated = std::stod(r.meta.at("extrapolated"));
  out.observed_order = std::stod(r.meta.at("observed-order"));
  return out;
}

// ---------------------------------------------------------------------------
// Monotonicity along a positive-semidefinite direction: since every branch is
// non-decreasing, the n-th eigenvalue keeps its index and can be compared
// directly step by step.

inline scan_report run_monotonicity_check(const coefficient_field& f, const chart_repr& chart,
                                          const cmatrix& H, std::vector<double> t_values,
                                          int branch = 1, const experiment_options& opt = {}) {
  require_hermitian(H, "run_monotonicity_check(H)");
  {
    const inertia in = hermitian_inertia(H, default_inertia_tol(H));
    if (in.n_minus > 0)
      throw invalid_partition_error("run_monotonicity_check: H must be positive semidefinite");
  }
  std::sort(t_values.begin(), t_values.end());
  scan_report r;
  r.kind = "monotonicity-check";
  r.param_name = "t";
  r.params = t_values;
  r.branches.assign(1, std::vector<scan_cell>(t_values.size()));

  search_policy pol;
  pol.value_tol = std::min(opt.value_tol, 1e-9);
  for (std::size_t j = 0; j < t_values.size(); ++j) {
    const boundary_condition bc = chart_compose(chart.K, chart.S + t_values[j] * H);
    const double lam = spectral_locator(f, bc).nth(branch, pol);
    r.branches[0][j] = {lam, false, false, ""};
  }

  bool ok = true;
  std::ostringstream det;
  for (std::size_t j = 0; j + 1 < t_values.size(); ++j) {
    if (r.branches[0][j + 1].value < r.branches[0][j].value - 1e-9) {
      ok = false;
      det << "decrease at t = " << t_values[j + 1] << ": "
          << detail::format_value(r.branches[0][j].value) << " -> "
          << detail::format_value(r.branches[0][j + 1].value) << "; ";
    }
  }
  r.checks.push_back({"non-decreasing", ok, det.str()});
  return r;
}

// ---------------------------------------------------------------------------
// Emitters

inline void emit_csv(const scan_report& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << r.param_name << ",branch,value,status\n";
  for (std::size_t k = 0; k < r.params.size(); ++k)
    for (std::size_t b = 0; b < r.branches.size(); ++b) {
      const scan_cell& c = r.branches[b][k];
      out << detail::format_value(r.params[k]) << "," << b + 1 << ",";
      if (!c.failed) out << detail::format_value(c.value);
      out << "," << (c.failed ? "FAILED" : (c.diverged ? "DIVERGED" : "ok")) << "\n";
    }
  if (!out) throw io_error("write failed: " + path);
}

// Minimal self-contained line plot: branches vs parameter index, divergence
// markers as crosses along the bottom edge.
inline void emit_svg(const scan_report& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  const double W = 720, Hh = 480, ml = 70, mr = 20, mt = 30, mb = 40;
  double lo = 0.0, hi = 1.0;
  bool any = false;
  for (const auto& br : r.branches)
    for (const auto& c : br)
      if (detail::cell_ok(c)) {
        if (!any) {
          lo = hi = c.value;
          any = true;
        }
        lo = std::min(lo, c.value);
        hi = std::max(hi, c.value);
      }
  if (!any) {
    lo = 0;
    hi = 1;
  }
  if (hi - lo < 1e-12) {
    hi += 1.0;
    lo -= 1.0;
  }
  const int np = static_cast<int>(r.params.size());
  const auto xpos = [&](int k) {
    return ml + (W - ml - mr) * (np > 1 ? static_cast<double>(k) / (np - 1) : 0.5);
  };
  const auto ypos = [&](double v) { return mt + (Hh - mt - mb) * (hi - v) / (hi - lo); };
  char buf[160];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh
      << "\" viewBox=\"0 0 " << W << " " << Hh << "\">\n";
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << (W - ml - mr)
      << "\" height=\"" << (Hh - mt - mb)
      << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n";
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"13\" font-family=\"monospace\">%s</text>\n",
                ml, mt - 10.0, (r.kind + "  (" + r.param_name + " sweep)").c_str());
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"4\" y=\"%.1f\" font-size=\"11\" font-family=\"monospace\">%.6g</text>\n",
                mt + 10.0, hi);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"4\" y=\"%.1f\" font-size=\"11\" font-family=\"monospace\">%.6g</text>\n",
                Hh - mb, lo);
  out << buf;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  for (std::size_t b = 0; b < r.branches.size(); ++b) {
    const char* color = palette[b % 8];
    std::string poly;
    for (int k = 0; k < np; ++k) {
      const scan_cell& c = r.branches[b][k];
      if (detail::cell_ok(c)) {
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", xpos(k), ypos(c.value));
        poly += buf;
      } else {
        if (!poly.empty()) {
          out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
              << poly << "\"/>\n";
          poly.clear();
        }
        const double x = xpos(k), y = Hh - mb - 6;
        std::snprintf(buf, sizeof(buf),
                      "<path d=\"M %.2f %.2f l 8 8 m 0 -8 l -8 8\" stroke=\"%s\" "
                      "stroke-width=\"1.5\" fill=\"none\"/>\n",
                      x - 4, y - 4, color);
        out << buf;
      }
    }
    if (!poly.empty())
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
          << poly << "\"/>\n";
  }
  out << "</svg>\n";
  if (!out) throw io_error("write failed: " + path);
}

inline void emit_json_summary(const scan_report& r, const std::string& path) {
  nlohmann::json j;
  j["kind"] = r.kind;
  j["param_name"] = r.param_name;
  j["params"] = r.params;
  j["predicted_jumps"] = r.predicted_jumps;
  j["target_spectrum"] = r.target_spectrum;
  nlohmann::json branches = nlohmann::json::array();
  for (const auto& br : r.branches) {
    nlohmann::json col = nlohmann::json::array();
    for (const auto& c : br) {
      nlohmann::json cell;
      cell["value"] = c.value;
      cell["status"] = c.failed ? "FAILED" : (c.diverged ? "DIVERGED" : "ok");
      if (!c.note.empty() && c.failed) cell["note"] = c.note;
      col.push_back(cell);
    }
    branches.push_back(col);
  }
  j["branches"] = branches;
  nlohmann::json checks = nlohmann::json::array();
  bool all = true;
  for (const auto& c : r.checks) {
    nlohmann::json jc;
    jc["name"] = c.name;
    jc["pass"] = c.pass;
    if (!c.detail.empty()) jc["detail"] = c.detail;
    checks.push_back(jc);
    all = all && c.pass;
  }
  j["assertions"] = checks;
  j["pass"] = all;
  j["meta"] = r.meta;
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw io_error("write failed: " + path);
}

struct emit_formats {
  bool csv = true;
  bool svg = false;
  bool json = true;
};

inline void emit(const scan_report& r, const std::string& dir, const std::string& basename,
                 const emit_formats& fmt) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create output directory " + dir);
  const std::string stem = dir + "/" + basename;
  if (fmt.csv) emit_csv(r, stem + ".csv");
  if (fmt.svg) emit_svg(r, stem + ".svg");
  if (fmt.json) emit_json_summary(r, stem + ".json");
}

}  // namespace slspec
