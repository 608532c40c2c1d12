// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <slspec/experiments.hpp>
#include <slspec/io.hpp>

using namespace slspec;
using Catch::Approx;

namespace {

const double PI2 = M_PI * M_PI;

// scalar transcendental oracle for u(0)=0, kappa u'(1)=u(1): the negative
// eigenvalue is -tau^2 with tanh(tau) = kappa tau, found by bisection
double rellich_negative_root_oracle(double kappa) {
  auto g = [&](double tau) { return std::tanh(tau) - kappa * tau; };
  double lo = 1.0, hi = 2.0 / kappa;
  REQUIRE(g(lo) > 0.0);
  REQUIRE(g(hi) < 0.0);
  for (int it = 0; it < 200; ++it) {
    const double mid = (lo + hi) / 2.0;
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return -lo * lo;
}

// positive eigenvalues solve tan(s) = kappa s with lambda = s^2; root in
// (n pi, n pi + pi/2) for kappa in (0, 1]
double rellich_positive_root_oracle(double kappa, int n) {
  auto g = [&](double s) { return std::tan(s) - kappa * s; };
  double lo = n * M_PI + 1e-9, hi = n * M_PI + M_PI / 2.0 - 1e-9;
  for (int it = 0; it < 200; ++it) {
    const double mid = (lo + hi) / 2.0;
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  return lo * lo;
}

std::vector<double> geometric_s(int kmax) {
  std::vector<double> s;
  for (int k = 0; k <= kmax; ++k) s.push_back(std::pow(2.0, -k));
  return s;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("rellich scan reproduces the classical jump") {
  std::vector<double> kappas;
  for (int k = 3; k <= 8; ++k) kappas.push_back(std::pow(2.0, -k));
  const scan_report r = run_rellich(kappas, 3);
  CHECK(r.pass());
  CHECK(r.predicted_jumps == 1);

  // lambda_1(kappa) tracks the tanh-root oracle
  for (std::size_t k = 0; k < kappas.size(); ++k) {
    const double oracle = rellich_negative_root_oracle(r.params[k]);
    CHECK(r.branches[0][k].value == Approx(oracle).epsilon(1e-6));
  }
  // spec anchor: lambda_1(0.1) < -80 (leading order -1/kappa^2 = -100)
  const scan_report r01 = run_rellich({0.1}, 2);
  CHECK(r01.branches[0][0].value < -80.0);
  CHECK(r01.branches[0][0].value == Approx(rellich_negative_root_oracle(0.1)).epsilon(1e-8));
}

TEST_CASE("rellich kappa = 1 spectrum matches the tan(s) = s roots") {
  const coefficient_field f = scalar_field(1, 0, 1);
  spectral_locator loc(f, rellich_bc(1.0));
  const std::vector<double> vals = loc.first_n(4, {});
  CHECK(std::abs(vals[0]) < 1e-8);  // lambda = 0 solves u = t, u(1) = u'(1)
  for (int n = 1; n <= 3; ++n)
    CHECK(vals[n] == Approx(rellich_positive_root_oracle(1.0, n)).epsilon(1e-8));
}

TEST_CASE("rellich lambda_2 approaches pi^2 monotonically") {
  const scan_report r = run_rellich({1.0 / 64, 1.0 / 128, 1.0 / 256, 1.0 / 512}, 2);
  CHECK(r.pass());
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& c : r.branches[1]) {
    CHECK(std::abs(c.value - PI2) < prev);
    prev = std::abs(c.value - PI2);
  }
}

TEST_CASE("jump scan d=1: both branches diverge for source (0,2,0)") {
  const coefficient_field f = scalar_field(1, 0, 1);
  const scan_report r =
      run_jump_scan(f, {1, 2}, inertia{2, 0, 0}, inertia{0, 2, 0}, geometric_s(12), 4);
  INFO([&] {
    std::ostringstream os;
    for (const auto& c : r.checks) os << c.name << ": " << (c.pass ? "pass " : "FAIL ") << c.detail << "\n";
    return os.str();
  }());
  CHECK(r.pass());
  CHECK(r.predicted_jumps == 2);
  // lambda_3(s) -> lambda_1(Dirichlet) = pi^2
  const scan_cell& last = r.branches[2].back();
  CHECK(last.value == Approx(PI2).epsilon(2e-3));
}

TEST_CASE("jump scan d=1: one divergence for source (0,1,1)") {
  const coefficient_field f = scalar_field(1, 0, 1);
  const scan_report r =
      run_jump_scan(f, {1, 2}, inertia{2, 0, 0}, inertia{0, 1, 1}, geometric_s(12), 3);
  CHECK(r.pass());
  CHECK(r.predicted_jumps == 1);
  CHECK(r.branches[1].back().value == Approx(PI2).epsilon(2e-3));
}

TEST_CASE("jump scan with no divergence when n+ matches") {
  // source (1,0,1) -> target (2,0,0): i = 0, plain layer approach
  const coefficient_field f = scalar_field(1, 0, 1);
  const scan_report r =
      run_jump_scan(f, {1, 2}, inertia{2, 0, 0}, inertia{1, 0, 1}, geometric_s(10), 2);
  CHECK(r.pass());
  CHECK(r.predicted_jumps == 0);
}

TEST_CASE("homotopy scan: constant field reduces to the jump scan") {
  const coefficient_field f = scalar_field(1, 0, 1);
  const auto s = geometric_s(6);
  const scan_report jump =
      run_jump_scan(f, {1, 2}, inertia{2, 0, 0}, inertia{0, 1, 1}, s, 2);
  const scan_report homo =
      run_homotopy_scan(f, f, {1, 2}, inertia{2, 0, 0}, inertia{0, 1, 1}, s, 2);
  REQUIRE(jump.params == homo.params);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (jump.branches[b][k].failed || homo.branches[b][k].failed) continue;
      CHECK(homo.branches[b][k].value ==
            Approx(jump.branches[b][k].value).margin(1e-7).epsilon(1e-9));
    }
}

TEST_CASE("homotopy scan with a moving equation") {
  const coefficient_field src = scalar_field(1, 0, 1);
  const coefficient_field tgt = scalar_field(1, 2, 1);  // shifted potential
  const scan_report r = run_homotopy_scan(src, tgt, {1, 2}, inertia{2, 0, 0},
                                          inertia{0, 1, 1}, geometric_s(12), 3);
  CHECK(r.pass());
  // the surviving branch converges to the *target equation* Dirichlet value
  CHECK(r.branches[1].back().value == Approx(PI2 + 2.0).epsilon(2e-3));
}

TEST_CASE("layer continuity along stratum paths") {
  const coefficient_field f = scalar_field(1, 0, 1);
  SECTION("constant path has zero variation") {
    const boundary_condition bc = chart_compose({}, 0.5 * cmatrix::Identity(2, 2));
    const scan_report r = run_layer_continuity(f, bc, bc, 8, 2);
    CHECK(r.pass());
    CHECK(std::stod(r.meta.at("max-jump-fine")) < 1e-12);
  }
  SECTION("Neumann chart path S: 0 -> I refines towards continuity") {
    const boundary_condition bc1 = chart_compose({}, cmatrix::Zero(2, 2));
    const boundary_condition bc2 = chart_compose({}, cmatrix::Identity(2, 2));
    const scan_report r = run_layer_continuity(f, bc1, bc2, 32, 1);
    CHECK(r.pass());
    CHECK(std::stod(r.meta.at("max-jump-fine")) <
          0.75 * std::stod(r.meta.at("max-jump-coarse")));
  }
  SECTION("indefinite stratum path stays finite") {
    cmatrix S1 = cmatrix::Zero(2, 2), S2 = cmatrix::Zero(2, 2);
    S1(0, 0) = 1.0;
    S1(1, 1) = -1.0;
    S2(0, 0) = 2.0;
    S2(1, 1) = -3.0;
    const scan_report r = run_layer_continuity(f, chart_compose({1, 2}, S1),
                                               chart_compose({1, 2}, S2), 16, 1);
    CHECK(r.pass());
    for (const auto& c : r.branches[0]) CHECK(!c.diverged);
  }
  SECTION("strata mismatch is an error") {
    CHECK_THROWS_AS(run_layer_continuity(f, dirichlet_bc(1), neumann_bc(1), 8, 1),
                    strata_mismatch_error);
  }
}

TEST_CASE("multiplicity check over random problems") {
  const scan_report r = run_multiplicity_check(20260810u, 5, 2, 3);
  INFO([&] {
    std::ostringstream os;
    for (const auto& c : r.checks) os << c.name << ": " << (c.pass ? "pass " : "FAIL ") << c.detail << "\n";
    return os.str();
  }());
  CHECK(r.pass());
}

TEST_CASE("multiplicity check on the designed degenerate case") {
  const coefficient_field f2 =
      decoupled_field({scalar_field(1, 0, 1), scalar_field(1, 0, 1)});
  spectral_locator loc(f2, dirichlet_bc(2));
  CHECK(loc.analytic_multiplicity(PI2, 1.0) == 2);
  CHECK(geometric_multiplicity(f2, dirichlet_bc(2), PI2) == 2);
}

TEST_CASE("derivative check: the d=1 Neumann chart case gives 2 for H = I") {
  const coefficient_field f = scalar_field(1, 0, 1);
  chart_repr chart;
  chart.dim = 1;
  chart.K = {};
  chart.S = cmatrix::Zero(2, 2);
  const cmatrix H = cmatrix::Identity(2, 2);
  const scan_report r = run_derivative_check(f, chart, H, {1e-2, 5e-3, 2.5e-3, 1.25e-3});
  INFO([&] {
    std::ostringstream os;
    for (const auto& c : r.checks) os << c.name << ": " << (c.pass ? "pass " : "FAIL ") << c.detail << "\n";
    return os.str();
  }());
  CHECK(r.pass());
  const derivative_result d = derivative_summary(r);
  CHECK(d.formula == Approx(2.0).epsilon(1e-10));
  CHECK(std::abs(d.lambda_star) < 1e-9);
  CHECK(d.extrapolated == Approx(2.0).margin(1e-6));
}

TEST_CASE("derivative check: H = diag(1,0) gives 1, H = 0 gives 0") {
  const coefficient_field f = scalar_field(1, 0, 1);
  chart_repr chart;
  chart.dim = 1;
  chart.K = {};
  chart.S = cmatrix::Zero(2, 2);

  cmatrix H = cmatrix::Zero(2, 2);
  H(0, 0) = 1.0;
  const scan_report r1 = run_derivative_check(f, chart, H, {1e-2, 5e-3, 2.5e-3});
  CHECK(r1.pass());
  CHECK(derivative_summary(r1).formula == Approx(1.0).epsilon(1e-10));

  const scan_report r0 = run_derivative_check(f, chart, cmatrix::Zero(2, 2), {1e-2, 5e-3});
  CHECK(r0.pass());
  CHECK(derivative_summary(r0).formula == Approx(0.0).margin(1e-12));
}

TEST_CASE("derivative check requires a simple branch") {
  const coefficient_field f2 =
      decoupled_field({scalar_field(1, 0, 1), scalar_field(1, 0, 1)});
  chart_repr chart;
  chart.dim = 2;
  chart.K = {1, 2, 3, 4};
  chart.S = cmatrix::Zero(4, 4);  // double Dirichlet: lambda_1 has multiplicity 2
  CHECK_THROWS_AS(run_derivative_check(f2, chart, cmatrix::Identity(4, 4), {1e-2, 5e-3}),
                  not_simple_error);
}

TEST_CASE("monotonicity along PSD directions") {
  const coefficient_field f = scalar_field(1, 0, 1);
  chart_repr chart;
  chart.dim = 1;
  chart.K = {};
  chart.S = cmatrix::Zero(2, 2);
  SECTION("lambda_1(0) = 0 <= lambda_1(t I)") {
    const scan_report r =
        run_monotonicity_check(f, chart, cmatrix::Identity(2, 2), {0.0, 0.25, 0.5, 1.0});
    CHECK(r.pass());
    CHECK(std::abs(r.branches[0][0].value) < 1e-9);
    CHECK(r.branches[0].back().value > 0.5);
  }
  SECTION("H = 0 gives a constant branch") {
    const scan_report r =
        run_monotonicity_check(f, chart, cmatrix::Zero(2, 2), {0.0, 0.5, 1.0});
    CHECK(r.pass());
    CHECK(r.branches[0][0].value == Approx(r.branches[0].back().value).margin(1e-10));
  }
  SECTION("negative directions are rejected") {
    CHECK_THROWS_AS(
        run_monotonicity_check(f, chart, -cmatrix::Identity(2, 2), {0.0, 0.5}),
        invalid_partition_error);
  }
}

TEST_CASE("emitters") {
  const coefficient_field f = scalar_field(1, 0, 1);
  const scan_report r =
      run_jump_scan(f, {1, 2}, inertia{2, 0, 0}, inertia{0, 1, 1}, geometric_s(4), 2);
  const std::string dir = std::filesystem::temp_directory_path().string() + "/slspec-test-emit";
  std::filesystem::remove_all(dir);

  SECTION("CSV has the documented header and is deterministic") {
    emit(r, dir, "scan", emit_formats{true, true, true});
    const std::string csv1 = slurp(dir + "/scan.csv");
    CHECK(csv1.rfind("s,branch,value,status\n", 0) == 0);
    const scan_report r2 =
        run_jump_scan(f, {1, 2}, inertia{2, 0, 0}, inertia{0, 1, 1}, geometric_s(4), 2);
    emit(r2, dir, "scan2", emit_formats{true, false, false});
    CHECK(csv1 == slurp(dir + "/scan2.csv"));
    CHECK(std::filesystem::exists(dir + "/scan.svg"));
  }
  SECTION("empty report yields a header-only CSV") {
    scan_report empty;
    empty.kind = "empty";
    emit_csv(empty, dir + "/empty.csv");
    CHECK(slurp(dir + "/empty.csv") == "s,branch,value,status\n");
  }
  SECTION("JSON summary carries a pass boolean per assertion") {
    emit_json_summary(r, dir + "/scan.json");
    const json j = read_json_file(dir + "/scan.json");
    REQUIRE(j.contains("assertions"));
    CHECK(j["assertions"].size() == r.checks.size());
    for (const auto& a : j["assertions"]) CHECK(a.contains("pass"));
    CHECK(j["pass"].get<bool>() == r.pass());
  }
}
