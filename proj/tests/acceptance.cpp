// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one criterion per section, each printed as a single
// PASS/FAIL line with timing. Exit code 0 iff everything passes.

#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <slspec/slspec.hpp>

using namespace slspec;

namespace {

const double PI2 = M_PI * M_PI;

int failures = 0;

class criterion {
public:
  criterion(int number, std::string title)
      : number_(number), title_(std::move(title)), start_(clock::now()) {}

  void check(bool ok, const std::string& what) {
    if (!ok) {
      ok_ = false;
      if (!detail_.empty()) detail_ += "; ";
      detail_ += what;
    }
  }
  void note(const std::string& s) {
    if (!notes_.empty()) notes_ += ", ";
    notes_ += s;
  }
  void budget(double seconds) {
    const double el = elapsed();
    if (el > seconds) {
      ok_ = false;
      detail_ += (detail_.empty() ? "" : "; ") + std::string("runtime ") +
                 std::to_string(el) + " s exceeds budget " + std::to_string(seconds) + " s";
    }
  }
  double elapsed() const {
    return std::chrono::duration<double>(clock::now() - start_).count();
  }
  ~criterion() {
    std::printf("[%s] criterion %d: %s (%.1f s%s%s)%s%s\n", ok_ ? "PASS" : "FAIL", number_,
                title_.c_str(), elapsed(), notes_.empty() ? "" : "; ",
                notes_.c_str(), detail_.empty() ? "" : " -- ", detail_.c_str());
    std::fflush(stdout);
    if (!ok_) ++failures;
  }

private:
  using clock = std::chrono::steady_clock;
  int number_;
  std::string title_;
  clock::time_point start_;
  bool ok_ = true;
  std::string detail_, notes_;
};

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

std::string fmt(double v) {
  char b[40];
  std::snprintf(b, sizeof(b), "%.6g", v);
  return b;
}

int jobs() {
  const unsigned hc = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(4u, hc == 0 ? 1u : hc));
}

cmatrix seeded_hermitian(std::mt19937_64& rng, int n, bool real_only = false) {
  std::normal_distribution<double> g(0.0, 1.0);
  cmatrix m(n, n);
  for (int i = 0; i < n; ++i) {
    m(i, i) = g(rng);
    for (int j = i + 1; j < n; ++j) {
      m(i, j) = real_only ? complex(g(rng), 0.0) : complex(g(rng), g(rng)) / std::sqrt(2.0);
      m(j, i) = std::conj(m(i, j));
    }
  }
  return m;
}

coefficient_field seeded_field(std::mt19937_64& rng, int d, int max_pieces = 2) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int pieces = 1 + static_cast<int>(u(rng) * max_pieces) % max_pieces;
  std::vector<double> grid{0.0};
  for (int i = 1; i < pieces; ++i) grid.push_back(0.2 + 0.6 * u(rng));
  grid.push_back(1.0);
  std::sort(grid.begin(), grid.end());
  std::vector<rmatrix> P, Q, W;
  for (int i = 0; i < pieces; ++i) {
    rmatrix rp(d, d), rw(d, d), q(d, d);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) rp(a, b) = g(rng), rw(a, b) = g(rng), q(a, b) = g(rng);
    P.push_back(rp * rp.transpose() + 0.5 * rmatrix::Identity(d, d));
    W.push_back(rw * rw.transpose() + 0.5 * rmatrix::Identity(d, d));
    Q.push_back(q + q.transpose());
  }
  return make_field(d, grid, P, Q, W);
}

std::vector<double> geometric_s(int k0, int k1) {
  std::vector<double> s;
  for (int k = k0; k <= k1; ++k) s.push_back(std::pow(2.0, -k));
  return s;
}

}  // namespace

// 1. exact piecewise propagation reproduces the closed-form free spectra
static void criterion_1() {
  criterion c(1, "closed-form Dirichlet and Neumann spectra, n <= 10, rel err <= 1e-8");
  const coefficient_field f = scalar_field(1.0, 0.0, 1.0);
  search_policy pol;
  pol.value_tol = 1e-9;

  const std::vector<double> dir = spectral_locator(f, dirichlet_bc(1)).first_n(10, pol);
  double worst = 0.0;
  for (int n = 1; n <= 10; ++n)
    worst = std::max(worst, rel_err(dir[n - 1], n * n * PI2));
  c.check(worst <= 1e-8, "Dirichlet worst rel err " + fmt(worst));
  c.note("dirichlet err " + fmt(worst));

  const std::vector<double> neu = spectral_locator(f, neumann_bc(1)).first_n(10, pol);
  double worst_n = 0.0;
  for (int n = 1; n <= 10; ++n)
    worst_n = std::max(worst_n, rel_err(neu[n - 1], (n - 1) * (n - 1) * PI2));
  c.check(worst_n <= 1e-8, "Neumann worst rel err " + fmt(worst_n));
  c.note("neumann err " + fmt(worst_n));
  c.budget(5.0);
}

// 2. analytic (winding) multiplicity equals geometric (kernel) multiplicity
static void criterion_2() {
  criterion c(2, "multiplicity equality on 20 random d=2 problems x 5 eigenvalues");
  experiment_options opt;
  opt.jobs = jobs();
  const scan_report r = run_multiplicity_check(0x5157ECu, 20, 2, 5, opt);
  int bad = 0;
  std::string first;
  for (const auto& ch : r.checks)
    if (!ch.pass) {
      ++bad;
      if (first.empty()) first = ch.name + ": " + ch.detail;
    }
  c.check(bad == 0, std::to_string(bad) + " mismatching trials; first: " + first);
  c.budget(120.0);
}

// 3. the Rellich jump: lambda_1 diverges like -1/kappa^2, lambda_2 -> pi^2
static void criterion_3() {
  criterion c(3, "Rellich scan kappa = 2^-3..2^-12");
  experiment_options opt;
  opt.jobs = jobs();
  const scan_report r = run_rellich(geometric_s(3, 12), 2, opt);
  for (const auto& ch : r.checks) c.check(ch.pass, ch.name + ": " + ch.detail);

  const double l1 = r.branches[0].back().value;
  const double kappa = r.params.back();
  c.check(l1 < -1.5e7, "lambda_1(2^-12) = " + fmt(l1) + " not below -1.5e7");
  const double leading = -1.0 / (kappa * kappa);
  c.check(std::abs(l1 - leading) <= 0.2 * std::abs(leading),
          "lambda_1 " + fmt(l1) + " not within 20% of " + fmt(leading));
  c.note("lambda_1(2^-12) = " + fmt(l1));

  // monotone approach of lambda_2 to pi^2 over the last four samples
  const int np = static_cast<int>(r.params.size());
  for (int k = np - 4; k + 1 < np; ++k) {
    const double e1 = std::abs(r.branches[1][k].value - PI2);
    const double e2 = std::abs(r.branches[1][k + 1].value - PI2);
    c.check(e2 <= e1, "lambda_2 approach not monotone at kappa = " + fmt(r.params[k + 1]));
  }
}

// 4. jump-count law over every admissible source partition on the full chart
static void criterion_4() {
  criterion c(4, "jump-count law, d in {1,2}, all source partitions, K full");
  experiment_options opt;
  opt.jobs = jobs();
  opt.convergence_tol = 1e-3;
  const std::vector<double> s = geometric_s(0, 12);
  int scans = 0;
  for (int d : {1, 2}) {
    const coefficient_field f =
        d == 1 ? scalar_field(1, 0, 1)
               : decoupled_field({scalar_field(1, 0, 1), scalar_field(1, 5, 1)});
    std::vector<int> K(2 * d);
    for (int k = 0; k < 2 * d; ++k) K[k] = k + 1;
    const inertia target{2 * d, 0, 0};
    for (int n0 = 0; n0 < 2 * d; ++n0)
      for (int np = 0; np + n0 <= 2 * d; ++np) {
        const inertia source{n0, np, 2 * d - n0 - np};
        const int expected_jumps = np;  // target n+ = 0
        const scan_report r = run_jump_scan(f, K, target, source, s, expected_jumps + 2, opt);
        ++scans;
        std::ostringstream tag;
        tag << "d=" << d << " source " << source;
        c.check(r.predicted_jumps == expected_jumps, tag.str() + ": predicted jump count");
        int observed = 0;
        for (const auto& br : r.branches)
          if (br.back().diverged) ++observed;
        c.check(observed == expected_jumps,
                tag.str() + ": observed " + std::to_string(observed) + " divergences, want " +
                    std::to_string(expected_jumps));
        for (const auto& ch : r.checks)
          c.check(ch.pass, tag.str() + " " + ch.name + ": " + ch.detail);
      }
  }
  c.note(std::to_string(scans) + " scans");
  c.budget(600.0);
}

// 5. layer continuity along five constant-stratum paths with refinement
static void criterion_5() {
  criterion c(5, "layer continuity along 5 constant-stratum paths (64 vs 128 samples)");
  experiment_options opt;
  opt.jobs = jobs();
  const coefficient_field f1 = scalar_field(1, 0, 1);
  const coefficient_field f2 =
      decoupled_field({scalar_field(1, 0, 1), scalar_field(1, 3, 1)});

  struct path_case {
    std::string name;
    coefficient_field f;
    boundary_condition bc1, bc2;
  };
  std::vector<path_case> cases;
  cases.push_back({"d1 regular chart S:0->I", f1, chart_compose({}, cmatrix::Zero(2, 2)),
                   chart_compose({}, cmatrix::Identity(2, 2))});
  {
    cmatrix S1 = cmatrix::Identity(2, 2), S2 = cmatrix::Zero(2, 2);
    S2(0, 0) = 4.0;
    S2(1, 1) = 9.0;
    cases.push_back({"d1 definite stratum", f1, chart_compose({1, 2}, S1),
                     chart_compose({1, 2}, S2)});
  }
  {
    cmatrix S1 = cmatrix::Zero(2, 2), S2 = cmatrix::Zero(2, 2);
    S1(0, 0) = 1.0;
    S1(1, 1) = -1.0;
    S2(0, 0) = 2.0;
    S2(1, 1) = -3.0;
    cases.push_back({"d1 indefinite stratum", f1, chart_compose({1, 2}, S1),
                     chart_compose({1, 2}, S2)});
  }
  {
    // inside the first singular layer: S_K keeps one zero eigenvalue
    cmatrix S1 = cmatrix::Zero(2, 2), S2 = cmatrix::Zero(2, 2);
    S1(1, 1) = 1.0;
    S2(1, 1) = 3.0;
    cases.push_back({"d1 singular layer (1,1,0)", f1, chart_compose({1, 2}, S1),
                     chart_compose({1, 2}, S2)});
  }
  {
    std::mt19937_64 rng(0xACCE5u);
    const cmatrix S2 = seeded_hermitian(rng, 4);
    cases.push_back({"d2 regular chart", f2, chart_compose({}, cmatrix::Zero(4, 4)),
                     chart_compose({}, S2)});
  }

  for (const auto& pc : cases) {
    const scan_report r = run_layer_continuity(pc.f, pc.bc1, pc.bc2, 64, 1, opt);
    for (const auto& ch : r.checks) c.check(ch.pass, pc.name + " " + ch.name + ": " + ch.detail);
  }
}

// 6. derivative formula dLambda(H) = u*Hu with Richardson-consistent FD
static void criterion_6() {
  criterion c(6, "derivative formula: 10 random simple configurations + d=1 chart case");
  std::mt19937_64 rng(0xD1FFu);
  const std::vector<double> hs{1e-2, 5e-3, 2.5e-3, 1.25e-3};
  int done = 0, attempts = 0;
  while (done < 10 && attempts < 60) {
    ++attempts;
    const int d = 1 + (attempts % 2);
    const coefficient_field f = seeded_field(rng, d);
    std::vector<int> K;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 1; k <= 2 * d; ++k)
      if (u(rng) < 0.5) K.push_back(k);
    chart_repr chart;
    chart.dim = d;
    chart.K = K;
    chart.S = seeded_hermitian(rng, 2 * d);
    cmatrix H = seeded_hermitian(rng, 2 * d);
    H /= std::max(1.0, max_abs(H));
    try {
      std::vector<double> h = hs;
      scan_report r;
      for (int shrink = 0;; ++shrink) {
        try {
          r = run_derivative_check(f, chart, H, h, 1);
          break;
        } catch (const branch_tracking_error&) {
          if (shrink >= 3) throw;
          for (double& x : h) x /= 8.0;
        }
      }
      const derivative_result dres = derivative_summary(r);
      for (const auto& ch : r.checks)
        c.check(ch.pass, "config " + std::to_string(done) + " " + ch.name + ": " + ch.detail +
                             " (formula " + fmt(dres.formula) + ")");
      ++done;
    } catch (const not_simple_error&) {
      continue;  // reroll degenerate first eigenvalues
    } catch (const branch_tracking_error&) {
      continue;
    }
  }
  c.check(done == 10, "only " + std::to_string(done) + " simple configurations exercised");

  // the hand-checked chart case: Neumann chart, H = I, derivative 2
  const coefficient_field f = scalar_field(1, 0, 1);
  chart_repr chart;
  chart.dim = 1;
  chart.K = {};
  chart.S = cmatrix::Zero(2, 2);
  const scan_report r = run_derivative_check(f, chart, cmatrix::Identity(2, 2), hs, 1);
  const derivative_result dres = derivative_summary(r);
  c.check(std::abs(dres.formula - 2.0) <= 1e-6, "u*Hu = " + fmt(dres.formula) + ", want 2");
  c.check(std::abs(dres.extrapolated - 2.0) <= 1e-6,
          "fd limit = " + fmt(dres.extrapolated) + ", want 2");
  for (const auto& ch : r.checks) c.check(ch.pass, "chart case " + ch.name + ": " + ch.detail);
}

// 7. monotonicity along random PSD directions
static void criterion_7() {
  criterion c(7, "monotone branches along 10 random PSD directions");
  std::mt19937_64 rng(0x300700u);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<double> ts{0.0, 0.05, 0.1, 0.15, 0.2, 0.25};
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 1 + trial % 2;
    const coefficient_field f = seeded_field(rng, d);
    std::vector<int> K;
    for (int k = 1; k <= 2 * d; ++k)
      if (u(rng) < 0.5) K.push_back(k);
    chart_repr chart;
    chart.dim = d;
    chart.K = K;
    chart.S = seeded_hermitian(rng, 2 * d);
    const cmatrix G = seeded_hermitian(rng, 2 * d);
    cmatrix H = G * G.adjoint();  // PSD
    H /= std::max(1.0, max_abs(H));
    const scan_report r = run_monotonicity_check(f, chart, H, ts, 1);
    for (const auto& ch : r.checks)
      c.check(ch.pass, "trial " + std::to_string(trial) + " " + ch.name + ": " + ch.detail);
  }
}

// 8. chart round trip and layer consistency on 100 random charts
static void criterion_8() {
  criterion c(8, "chart round trip preserves row space on 100 random (K,S)");
  std::mt19937_64 rng(0xC4A7u);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int rt_fail = 0, layer_fail = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + trial % 2;
    std::vector<int> K;
    for (int k = 1; k <= 2 * d; ++k)
      if (u(rng) < 0.5) K.push_back(k);
    const cmatrix S = seeded_hermitian(rng, 2 * d);
    const boundary_condition bc = chart_compose(K, S);
    const chart_repr dec = chart_decompose(bc);
    if (!same_boundary_condition(bc, compose(dec))) ++rt_fail;
    if (layer_index(bc) != stratum_of_chart(dec).in.n_zero) ++layer_fail;
  }
  c.check(rt_fail == 0, std::to_string(rt_fail) + " round-trip failures");
  c.check(layer_fail == 0, std::to_string(layer_fail) + " layer/chart inconsistencies");
}

// 9. the decoupled characteristic function factors into scalar ones
static void criterion_9() {
  criterion c(9, "decoupling identity: Gamma_d2 = product of scalar Gammas (50-point grid)");
  const coefficient_field fa = scalar_field(1, 0, 1);
  const coefficient_field fb = scalar_field(1, 5, 1);
  const coefficient_field f2 = decoupled_field({fa, fb});
  cmatrix S4 = cmatrix::Zero(4, 4);
  S4(0, 0) = 0.3;
  S4(1, 1) = 0.7;
  S4(2, 2) = 0.4;
  S4(3, 3) = 0.9;
  const boundary_condition bc2 = chart_compose({1, 2, 3, 4}, S4);
  cmatrix Sa = cmatrix::Zero(2, 2), Sb = cmatrix::Zero(2, 2);
  Sa(0, 0) = 0.3;
  Sa(1, 1) = 0.4;
  Sb(0, 0) = 0.7;
  Sb(1, 1) = 0.9;
  const boundary_condition bca = chart_compose({1, 2}, Sa);
  const boundary_condition bcb = chart_compose({1, 2}, Sb);

  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const complex lam(-20.0 + 140.0 * k / 49.0, 0.0);
    const scaled_complex g2 = gamma_scaled(f2, bc2, lam);
    const scaled_complex prod = gamma_scaled(fa, bca, lam) * gamma_scaled(fb, bcb, lam);
    const double err = std::abs((g2 / prod).value() - complex(1.0, 0.0));
    worst = std::max(worst, err);
  }
  c.check(worst <= 1e-8, "worst relative deviation " + fmt(worst));
  c.note("worst rel dev " + fmt(worst));
}

int main() {
  std::printf("slspec acceptance suite\n");
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  std::printf("%s (%d failing criteria)\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
