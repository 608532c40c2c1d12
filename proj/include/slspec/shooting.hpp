// SPDX-License-Identifier: Apache-2.0
//
// Spectral core. Fundamental solutions are propagated exactly across each
// constant-coefficient piece by scaled matrix exponentials, and the
// characteristic function Gamma(lambda) = det(A*Phi + B*Psi) is evaluated
// through exterior-power (compound-matrix) propagation: every k-th compound
// of the transfer matrix carries its own log-scale, so Gamma keeps full
// relative accuracy even when the propagation modes spread over thousands of
// e-folds on the diverging eigenvalue branches. Eigenvalues are located with
// analytic multiplicity by argument-principle winding counts over rectangles
// (all zeros of Gamma are real for self-adjoint boundary conditions),
// refined by bisection and polished by Newton steps on simple zeros.

#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "slspec/bc.hpp"
#include "slspec/matrix.hpp"
#include "slspec/problem.hpp"

namespace slspec {

// ---------------------------------------------------------------------------
// Propagation of the fundamental system
//
// First-order form: (y, Py')' = G (y, Py'), G = [[0, P^-1], [Q - lambda W, 0]].
// The transfer matrix X(b) maps (y(a), Py'(a)) to (y(b), Py'(b)); its columns
// are the fundamental solutions with identity initial data at a.

struct propagation {
  complex lambda{0.0, 0.0};
  int dim = 0;
  cmatrix transfer;       // scaled transfer matrix: X(b) = exp(log_scale) * transfer
  double log_scale = 0.0;

  // Phi has block rows (-y_j(a)) and (y_j(b)); Psi has (P y_j')(a),(P y_j')(b).
  // These exponentiate the scale and are meant for the moderate-lambda regime;
  // the winding machinery below never calls them.
  cmatrix phi() const {
    const int d = dim;
    cmatrix out(2 * d, 2 * d);
    out.topLeftCorner(d, d) = -cmatrix::Identity(d, d);
    out.topRightCorner(d, d).setZero();
    out.bottomRows(d) = std::exp(log_scale) * transfer.topRows(d);
    return out;
  }
  cmatrix psi() const {
    const int d = dim;
    cmatrix out(2 * d, 2 * d);
    out.topLeftCorner(d, d).setZero();
    out.topRightCorner(d, d) = cmatrix::Identity(d, d);
    out.bottomRows(d) = std::exp(log_scale) * transfer.bottomRows(d);
    return out;
  }
};

namespace detail {

inline cmatrix piece_generator(const coefficient_field& f, int piece, complex lambda) {
  const int d = f.dim;
  cmatrix g = cmatrix::Zero(2 * d, 2 * d);
  g.topRightCorner(d, d) =
      f.P[piece].partialPivLu().solve(rmatrix::Identity(d, d)).cast<complex>();
  g.bottomLeftCorner(d, d) = (f.Q[piece].cast<complex>() - lambda * f.W[piece].cast<complex>());
  return g;
}

}  // namespace detail

inline propagation propagate(const coefficient_field& f, complex lambda) {
  const int d = f.dim;
  propagation p;
  p.lambda = lambda;
  p.dim = d;
  p.transfer = cmatrix::Identity(2 * d, 2 * d);
  p.log_scale = 0.0;
  for (int i = 0; i < f.pieces(); ++i) {
    const double dt = f.breakpoints[i + 1] - f.breakpoints[i];
    const scaled_matrix e = matrix_exp_scaled(detail::piece_generator(f, i, lambda) * dt);
    p.transfer = e.m * p.transfer;
    p.log_scale += e.log_scale;
    const double mx = max_abs(p.transfer);
    if (mx > 0.0) {
      p.transfer /= mx;
      p.log_scale += std::log(mx);
    }
  }
  return p;
}

// Transfer matrix with the scale applied (moderate lambda only).
inline cmatrix transfer_matrix(const propagation& p) {
  return std::exp(p.log_scale) * p.transfer;
}

// ---------------------------------------------------------------------------
// Characteristic matrix A*Phi + B*Psi in row-equilibrated scaled form:
// kernel(C) = kernel(m). Used for geometric multiplicity and eigenfunctions
// at located (moderate) eigenvalues; the determinant route for Gamma is the
// compound-matrix path below.

struct char_matrix {
  cmatrix m;
  double log_det_offset = 0.0;
};

inline char_matrix characteristic_matrix(const boundary_condition& bc, const propagation& p) {
  const int d = bc.dim;
  const int two_d = 2 * d;
  // C = C0 + e^sigma * D with C0 = (-A_1 | B_1), D = [A_2 B_2] X(b)
  cmatrix c0(two_d, two_d);
  c0.leftCols(d) = -bc.A.leftCols(d);
  c0.rightCols(d) = bc.B.leftCols(d);
  cmatrix a2b2(two_d, two_d);
  a2b2.leftCols(d) = bc.A.rightCols(d);
  a2b2.rightCols(d) = bc.B.rightCols(d);
  const cmatrix dmat = a2b2 * p.transfer;

  char_matrix out;
  out.m.resize(two_d, two_d);
  out.log_det_offset = 0.0;
  const double sigma = p.log_scale;
  for (int i = 0; i < two_d; ++i) {
    const double m0 = c0.row(i).cwiseAbs().maxCoeff();
    const double m1 = dmat.row(i).cwiseAbs().maxCoeff();
    const double l0 = m0 > 0.0 ? std::log(m0) : -std::numeric_limits<double>::infinity();
    const double l1 = m1 > 0.0 ? std::log(m1) + sigma : -std::numeric_limits<double>::infinity();
    const double lm = std::max(l0, l1);
    if (!std::isfinite(lm)) {
      out.m.row(i).setZero();
      continue;
    }
    // normalize each addend before weighting so that a dominant scale never
    // meets a structurally zero row as 0 * inf
    out.m.row(i).setZero();
    if (m0 > 0.0) out.m.row(i) += (c0.row(i) / m0) * std::exp(l0 - lm);
    if (m1 > 0.0) out.m.row(i) += (dmat.row(i) / m1) * std::exp(l1 - lm);
    out.log_det_offset += lm;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exterior powers. For sorted index subsets I, J of {0,...,n-1}:
//   (compound_k M)_{IJ} = det M[I,J],   compound_k(MN) = compound_k(M) compound_k(N),
//   compound_k(exp G)   = exp(additive_compound_k G).
// Each compound of the transfer matrix is propagated with its own scale, so
// the k-mode growth products stay at full relative accuracy.

namespace detail {

struct compound_level {
  std::vector<unsigned> masks;                    // subset bitmasks, fixed order
  std::vector<std::vector<int>> elems;            // sorted elements per subset
  std::vector<int> elem_sum;                      // sum of 0-based elements
  std::vector<int> index_of_mask;                 // mask -> position, -1 otherwise
  // sparsity pattern of the additive compound: (i, j, a, b, sign), i != j
  struct off_entry {
    int i, j, a, b;
    double sign;
  };
  std::vector<off_entry> off;
  int size() const { return static_cast<int>(masks.size()); }
};

struct compound_table {
  int n = 0;
  std::vector<compound_level> level;  // k = 0..n
};

inline compound_table build_compound_table(int n) {
  compound_table t;
  t.n = n;
  t.level.resize(n + 1);
  for (int k = 0; k <= n; ++k) {
    compound_level& lv = t.level[k];
    lv.index_of_mask.assign(1u << n, -1);
    for (unsigned m = 0; m < (1u << n); ++m)
      if (__builtin_popcount(m) == k) {
        lv.index_of_mask[m] = static_cast<int>(lv.masks.size());
        lv.masks.push_back(m);
        std::vector<int> e;
        int s = 0;
        for (int i = 0; i < n; ++i)
          if (m & (1u << i)) {
            e.push_back(i);
            s += i;
          }
        lv.elems.push_back(std::move(e));
        lv.elem_sum.push_back(s);
      }
    for (int i = 0; i < lv.size(); ++i)
      for (int j = 0; j < lv.size(); ++j) {
        if (i == j) continue;
        const unsigned I = lv.masks[i], J = lv.masks[j];
        const unsigned di = I & ~J, dj = J & ~I;
        if (__builtin_popcount(di) != 1 || __builtin_popcount(dj) != 1) continue;
        const int a = __builtin_ctz(di), b = __builtin_ctz(dj);
        const auto& ei = lv.elems[i];
        const auto& ej = lv.elems[j];
        const int ra = static_cast<int>(std::find(ei.begin(), ei.end(), a) - ei.begin());
        const int cb = static_cast<int>(std::find(ej.begin(), ej.end(), b) - ej.begin());
        lv.off.push_back({i, j, a, b, ((ra + cb) % 2) ? -1.0 : 1.0});
      }
  }
  return t;
}

inline const compound_table& compounds(int n) {
  static std::mutex mu;
  static std::array<std::unique_ptr<compound_table>, 13> cache;
  std::lock_guard<std::mutex> lock(mu);
  if (n < 0 || n >= static_cast<int>(cache.size()))
    throw error("compound table: dimension too large");
  if (!cache[n]) cache[n] = std::make_unique<compound_table>(build_compound_table(n));
  return *cache[n];
}

inline cmatrix additive_compound(const cmatrix& g, const compound_level& lv) {
  cmatrix out = cmatrix::Zero(lv.size(), lv.size());
  for (int i = 0; i < lv.size(); ++i) {
    complex s = 0.0;
    for (int e : lv.elems[i]) s += g(e, e);
    out(i, i) = s;
  }
  for (const auto& o : lv.off) out(o.i, o.j) = o.sign * g(o.a, o.b);
  return out;
}

// matrix of k x k minors (the multiplicative compound)
inline cmatrix compound_minors(const cmatrix& m, const compound_level& lv) {
  cmatrix out(lv.size(), lv.size());
  for (int i = 0; i < lv.size(); ++i)
    for (int j = 0; j < lv.size(); ++j) {
      const auto& r = lv.elems[i];
      const auto& c = lv.elems[j];
      if (r.empty()) {
        out(i, j) = 1.0;
        continue;
      }
      cmatrix sub(r.size(), c.size());
      for (std::size_t a = 0; a < r.size(); ++a)
        for (std::size_t b = 0; b < c.size(); ++b) sub(a, b) = m(r[a], c[b]);
      out(i, j) = sub.determinant();
    }
  return out;
}

}  // namespace detail

// Per-boundary-condition data for the compound route: the minor matrices of
// C0 = (-A_1 | B_1) and V0 = (A_2 | B_2), plus the Laplace sign pattern.
struct bc_compounds {
  int n = 0;
  std::vector<cmatrix> c0_comp;  // [k] = compound_k(C0)
  std::vector<cmatrix> v0_comp;  // [k] = compound_k(V0)
};

inline bc_compounds make_bc_compounds(const boundary_condition& bc) {
  const int d = bc.dim;
  const int n = 2 * d;
  cmatrix c0(n, n), v0(n, n);
  c0.leftCols(d) = -bc.A.leftCols(d);
  c0.rightCols(d) = bc.B.leftCols(d);
  v0.leftCols(d) = bc.A.rightCols(d);
  v0.rightCols(d) = bc.B.rightCols(d);
  const auto& tab = detail::compounds(n);
  bc_compounds out;
  out.n = n;
  out.c0_comp.reserve(n + 1);
  out.v0_comp.reserve(n + 1);
  for (int k = 0; k <= n; ++k) {
    out.c0_comp.push_back(detail::compound_minors(c0, tab.level[k]));
    out.v0_comp.push_back(detail::compound_minors(v0, tab.level[k]));
  }
  return out;
}

// Gamma(lambda) = det(C0 + V0 X(b)) assembled from the Laplace expansion
//   det(U + V) = sum_k sum_{R,S} (-1)^{sum R + sum S} det V[R,S] det U[R',S']
// with det V[R,S] taken from compound_k(V0) compound_k(X), each compound
// carrying its own log-scale.
inline scaled_complex gamma_scaled(const coefficient_field& f, const bc_compounds& bcc,
                                   complex lambda) {
  const int n = bcc.n;
  const auto& tab = detail::compounds(n);

  // propagate every compound of the transfer matrix
  std::vector<scaled_matrix> xk(n + 1);
  for (int k = 0; k <= n; ++k)
    xk[k] = {cmatrix::Identity(tab.level[k].size(), tab.level[k].size()), 0.0};
  for (int i = 0; i < f.pieces(); ++i) {
    const double dt = f.breakpoints[i + 1] - f.breakpoints[i];
    const cmatrix g = detail::piece_generator(f, i, lambda) * dt;
    for (int k = 1; k <= n; ++k) {
      const scaled_matrix e = matrix_exp_scaled(detail::additive_compound(g, tab.level[k]));
      xk[k].m = e.m * xk[k].m;
      xk[k].log_scale += e.log_scale;
      xk[k].renormalize();
    }
  }

  scaled_complex total{complex(0.0, 0.0), 0.0};
  const unsigned full = (n >= 32) ? 0u : ((1u << n) - 1u);
  for (int k = 0; k <= n; ++k) {
    const auto& lv = tab.level[k];
    const auto& lv_c = tab.level[n - k];
    const cmatrix yk = bcc.v0_comp[k] * xk[k].m;  // compound_k(V0 X), scaled
    for (int i = 0; i < lv.size(); ++i) {
      const int ic = lv_c.index_of_mask[full & ~lv.masks[i]];
      for (int j = 0; j < lv.size(); ++j) {
        const complex v = yk(i, j);
        if (v == complex(0.0, 0.0)) continue;
        const int jc = lv_c.index_of_mask[full & ~lv.masks[j]];
        const complex u = bcc.c0_comp[n - k](ic, jc);
        if (u == complex(0.0, 0.0)) continue;
        const double sign = ((lv.elem_sum[i] + lv.elem_sum[j]) % 2) ? -1.0 : 1.0;
        total = total + scaled_complex{sign * u * v, xk[k].log_scale};
      }
    }
  }
  return total.normalized();
}

inline scaled_complex gamma_scaled(const coefficient_field& f, const boundary_condition& bc,
                                   complex lambda) {
  return gamma_scaled(f, make_bc_compounds(bc), lambda);
}

// Gamma as a plain complex number; overflows to inf deep in the divergence
// regime, where the scaled form must be used.
inline complex gamma(const coefficient_field& f, const boundary_condition& bc, complex lambda) {
  return gamma_scaled(f, bc, lambda).value();
}

namespace detail {

// direct determinant of the row-equilibrated characteristic matrix; valid in
// the moderate regime, kept as the independent second route for tests
inline scaled_complex gamma_scaled_direct(const coefficient_field& f,
                                          const boundary_condition& bc, complex lambda) {
  const char_matrix c = characteristic_matrix(bc, propagate(f, lambda));
  scaled_complex det = det_scaled(c.m);
  det.log_scale += c.log_det_offset;
  return det.normalized();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Eigenvalue containers

struct eigenvalue_cluster {
  double value = 0.0;
  int multiplicity = 0;
};

struct spectrum_slice {
  double r1 = 0.0, r2 = 0.0;
  std::vector<eigenvalue_cluster> eigenvalues;  // strictly increasing values
  bool certified = false;                       // r1, r2 verified non-eigenvalues

  int total_multiplicity() const {
    int n = 0;
    for (const auto& c : eigenvalues) n += c.multiplicity;
    return n;
  }
  std::vector<double> expanded() const {
    std::vector<double> out;
    for (const auto& c : eigenvalues)
      for (int i = 0; i < c.multiplicity; ++i) out.push_back(c.value);
    return out;
  }
};

// How nth_eigenvalue brackets the spectrum from below: a user-supplied bound,
// a coercivity estimate computed from the problem data (default), or the
// doubling guard-band scan.
struct search_policy {
  std::optional<double> lower_bound{};  // trusted lower bound for the spectrum
  bool prefer_scan = false;             // use the doubling scan instead of the estimate
  double origin = 0.0;                  // L0
  double delta = 10.0;                  // doubling quantum
  double guard = 5.0;                   // guard-band width for the scan
  int max_doublings = 40;
  double value_tol = 1e-8;
};

// Lower bound on the first eigenvalue from the quadratic form:
// <Ty,y>_W >= mu1 ||y'||^2 - qmax ||y||^2 - |boundary term|, with the
// boundary term controlled through an orthonormal row representation of the
// boundary condition; kappa = ||C1|| measures how strongly derivative traces
// couple back to value traces.
inline double lower_bound_estimate(const coefficient_field& f, const boundary_condition& bc) {
  double qmax = 0.0;
  for (const auto& q : f.Q) {
    Eigen::SelfAdjointEigenSolver<rmatrix> es(q, Eigen::EigenvaluesOnly);
    qmax = std::max({qmax, std::abs(es.eigenvalues()(0)),
                     std::abs(es.eigenvalues()(q.rows() - 1))});
  }
  Eigen::JacobiSVD<cmatrix> svd(bc.B, Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  double kappa = 0.0;
  if (smax > 0.0) {
    std::vector<int> kept;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv(i) > 1e-13 * smax) kept.push_back(static_cast<int>(i));
    if (!kept.empty()) {
      cmatrix c1(kept.size(), bc.rows());
      for (std::size_t r = 0; r < kept.size(); ++r)
        c1.row(r) = svd.matrixU().col(kept[r]).adjoint() * bc.A / sv(kept[r]);
      Eigen::JacobiSVD<cmatrix> svd_c1(c1);
      kappa = svd_c1.singularValues()(0);
    }
  }
  const double len = f.b() - f.a();
  double c0 = qmax;
  if (kappa > 0.0) c0 += 2.0 * kappa / len + 8.0 * kappa * kappa / f.mu1;
  return -c0 / f.mu2 - 1.0;
}

// ---------------------------------------------------------------------------
// The locator: memoized Gamma evaluation plus all contour / bisection logic.

struct locator_options {
  // Contour half-height is proportional to the interval width (width/8), so
  // that isolated deep zeros stay visible at every range scale; the winding
  // number itself is height-independent because the spectrum is real. Set
  // forced_delta to pin the height instead.
  std::optional<double> forced_delta{};
  double floor_rel = 1e-8;      // certification floor relative to local probes
  long max_contour_evals = 4000000;
  int max_refine_depth = 60;
  int max_bisection_depth = 200;
  int nudge_tries = 8;
  double rel_tol = 1e-9;        // relative component of the bisection width target
  bool polish_simple = true;    // Newton-polish simple eigenvalues
};

class spectral_locator {
public:
  spectral_locator(coefficient_field field, boundary_condition bc, locator_options opts = {})
      : field_(std::move(field)), bc_(std::move(bc)), opts_(opts),
        bcc_(make_bc_compounds(bc_)) {
    // oscillation bounds for the contour phase budget (Gershgorin row sums)
    wbound_ = qbound_ = 0.0;
    for (const auto& w : field_.W)
      wbound_ = std::max(wbound_, w.cwiseAbs().rowwise().sum().maxCoeff());
    for (const auto& q : field_.Q)
      qbound_ = std::max(qbound_, q.cwiseAbs().rowwise().sum().maxCoeff());
    // below this floor sit only the finitely many boundary-driven branches
    // (the Dirichlet problem has no spectrum there)
    dirichlet_floor_ = -qbound_ / field_.mu2 - 1.0;
  }

  const coefficient_field& field() const { return field_; }
  const boundary_condition& bc() const { return bc_; }

  scaled_complex gamma_at(complex lambda) const {
    const std::array<double, 2> key{lambda.real(), lambda.imag()};
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    ++eval_count_;
    const scaled_complex g = gamma_scaled(field_, bcc_, lambda);
    cache_.emplace(key, g);
    return g;
  }

  long evaluations() const { return eval_count_; }

  // Number of eigenvalues in (r1, r2), counted with analytic multiplicity.
  // Intervals straddling the Dirichlet floor are counted as two rectangles,
  // so the deep region (few isolated boundary-driven zeros, large dynamic
  // range) and the oscillatory region get contours at their own scale.
  int count(double r1, double r2) const {
    if (!(r1 < r2)) throw error("count_in_interval: need r1 < r2");
    const double fl = dirichlet_floor_;
    if (opts_.forced_delta || r2 <= fl || r1 >= fl) return raw_count(r1, r2);
    const double margin = std::max(1.0, 1e-3 * std::abs(fl));
    std::vector<double> splits{fl};
    for (int j = 1; j <= opts_.nudge_tries; ++j) {
      splits.push_back(fl - j * margin);
      splits.push_back(fl + j * margin);
    }
    for (double m : splits) {
      if (!(m > r1 && m < r2)) continue;
      try {
        return raw_count(r1, m) + raw_count(m, r2);
      } catch (const endpoint_too_close_error& e) {
        if (e.endpoint == m) continue;  // unlucky split point, try the next
        throw;
      }
    }
    return raw_count(r1, r2);
  }

  // Winding number around a circle; the order of lambda* as a zero of Gamma.
  int analytic_multiplicity(double center, double radius) const {
    if (!(radius > 0.0)) throw error("analytic_multiplicity: radius must be positive");
    budget_ = opts_.max_contour_evals;
    const int n = std::max(
        16, 2 * edge_seeds(complex(center - radius, 0.0), complex(center + radius, 0.0)));
    std::vector<std::pair<complex, scaled_complex>> pts;
    double max_log = -std::numeric_limits<double>::infinity();
    double min_log = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      const double th = 2.0 * M_PI * j / n;
      const complex z = complex(center, 0.0) + radius * complex(std::cos(th), std::sin(th));
      const scaled_complex g = gamma_at(z);
      if (g.is_zero())
        throw zero_on_contour_error("Gamma vanishes on the circle at lambda = " +
                                    std::to_string(z.real()));
      max_log = std::max(max_log, g.log_abs());
      min_log = std::min(min_log, g.log_abs());
      pts.emplace_back(z, g);
    }
    if (min_log < max_log + std::log(opts_.floor_rel))
      throw zero_on_contour_error("Gamma nearly vanishes on the circle around " +
                                  std::to_string(center));
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
      const auto& [za, ga] = pts[k];
      const auto& [zb, gb] = pts[(k + 1) % n];
      total += arc(za, ga, zb, gb, 0);
    }
    return static_cast<int>(std::lround(total / (2.0 * M_PI)));
  }

  // Certified interval count with outward nudging of uncertifiable endpoints;
  // the nudge escalates geometrically to clear the neighbourhood of a zero in
  // a bounded number of retries.
  int certified_count(double& r1, double& r2, double nudge) const {
    for (int tries = 0; tries <= opts_.nudge_tries; ++tries) {
      try {
        return count(r1, r2);
      } catch (const endpoint_too_close_error& e) {
        if (tries == opts_.nudge_tries) throw;
        const double step = nudge * std::pow(4.0, tries);
        if (e.endpoint == r1)
          r1 -= step;
        else
          r2 += step;
      }
    }
    throw search_exhausted_error("unreachable");
  }

  // distance-to-nearest-zero estimate |Gamma / Gamma'|, used to pick split
  // points with healthy margin
  double zero_distance_estimate(double m, double width) const {
    const double h = std::max(1e-3 * width, 1e-12 * std::max(1.0, std::abs(m)));
    const scaled_complex g = gamma_at(complex(m, 0.0));
    if (g.is_zero()) return 0.0;
    const scaled_complex gp =
        (gamma_at(complex(m + h, 0.0)) - gamma_at(complex(m - h, 0.0))) *
        complex(1.0 / (2.0 * h), 0.0);
    if (gp.is_zero()) return std::numeric_limits<double>::infinity();
    const double log_ratio = g.log_abs() - gp.log_abs();
    if (log_ratio > 600.0) return std::numeric_limits<double>::infinity();
    return std::exp(log_ratio);
  }

  spectrum_slice locate(double r1, double r2, double value_tol) const {
    value_tol = std::max(value_tol, 1e-10);
    const int n = certified_count(r1, r2, value_tol);
    spectrum_slice out;
    out.r1 = r1;
    out.r2 = r2;
    out.certified = true;
    if (n > 0) subdivide(r1, r2, n, value_tol, 0, out.eigenvalues);
    return out;
  }

  double nth(int n, const search_policy& pol) const {
    if (n < 1) throw error("nth_eigenvalue: n must be >= 1");
    const auto [lo, hi, total] = bracket(n, pol);
    return nth_in(lo, hi, n, total, pol.value_tol, 0);
  }

  // First n eigenvalues (expanded by multiplicity), lowest first.
  std::vector<double> first_n(int n, const search_policy& pol) const {
    const auto [lo, hi, total] = bracket(n, pol);
    std::vector<double> vals = locate(lo, hi, pol.value_tol).expanded();
    vals.resize(n);
    return vals;
  }

private:
  std::tuple<double, double, int> bracket(int n, const search_policy& pol) const {
    double lo = bracket_below(pol);
    double hi = 0.0;
    int total = 0;
    for (int j = 0; j <= pol.max_doublings; ++j) {
      hi = pol.origin + pol.delta * std::pow(2.0, j);
      if (hi <= lo) continue;
      double l = lo, h = hi;
      total = certified_count(l, h, pol.value_tol);
      lo = l;
      hi = h;
      if (total >= n) return {lo, hi, total};
    }
    throw search_exhausted_error("only " + std::to_string(total) +
                                 " eigenvalues found below " + std::to_string(hi));
  }

  double bracket_below(const search_policy& pol) const {
    if (pol.lower_bound) return *pol.lower_bound;
    if (!pol.prefer_scan) return lower_bound_estimate(field_, bc_);
    // doubling guard-band scan; documented failure mode: near a singular
    // boundary condition the scan exhausts and reports divergence
    for (int k = 0; k <= pol.max_doublings; ++k) {
      const double L = pol.origin - pol.delta * std::pow(2.0, k);
      double g1 = L - pol.guard, g2 = L;
      try {
        if (certified_count(g1, g2, pol.value_tol) == 0) return g2;
      } catch (const error&) {
        continue;
      }
    }
    throw search_exhausted_error("lower doubling scan exhausted");
  }

  int raw_count(double r1, double r2) const {
    const double width = r2 - r1;
    const double delta = opts_.forced_delta ? std::min(*opts_.forced_delta, width)
                                            : width / 8.0;

    const std::vector<complex> verts = {complex(r1, -delta), complex(r2, -delta),
                                        complex(r2, 0.0),    complex(r2, delta),
                                        complex(r1, delta),  complex(r1, 0.0)};
    budget_ = opts_.max_contour_evals;
    std::vector<std::pair<complex, scaled_complex>> pts;
    for (std::size_t e = 0; e < verts.size(); ++e) {
      const complex za = verts[e];
      const complex zb = verts[(e + 1) % verts.size()];
      const int seeds = edge_seeds(za, zb);
      for (int j = 0; j < seeds; ++j) {
        const complex z = za + (zb - za) * (static_cast<double>(j) / seeds);
        pts.emplace_back(z, gamma_at(z));
      }
    }

    certify_endpoint(r1, delta);
    certify_endpoint(r2, delta);

    double total = 0.0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const auto& [za, ga] = pts[k];
      const auto& [zb, gb] = pts[(k + 1) % pts.size()];
      total += arc(za, ga, zb, gb, 0);
    }
    const double w = total / (2.0 * M_PI);
    const long rounded = std::lround(w);
    if (std::abs(w - static_cast<double>(rounded)) > 0.25)
      throw contour_refinement_error("winding number did not converge to an integer (" +
                                     std::to_string(w) + ")");
    if (rounded < 0)
      throw contour_refinement_error("negative winding number: contour inconsistent");
    return static_cast<int>(rounded);
  }

  // The phase rate of Gamma is bounded by the mode exponents
  // omega(z) = sqrt((q - z w)/p); only |Im omega| turns the argument. On
  // axis-parallel segments |Im omega| is piecewise monotone, so a five-point
  // variation sum bounds the oscillatory argument change.
  double im_omega(complex z) const {
    const complex w2 = (complex(qbound_, 0.0) - z * wbound_) / field_.mu1;
    return std::abs(std::sqrt(w2).imag());
  }
  double phase_budget(complex za, complex zb) const {
    const double len = field_.b() - field_.a();
    double var = 0.0;
    double prev = im_omega(za);
    for (int j = 1; j <= 4; ++j) {
      const double cur = im_omega(za + (zb - za) * (j / 4.0));
      var += std::abs(cur - prev);
      prev = cur;
    }
    return 3.0 * field_.dim * len * var;
  }
  int edge_seeds(complex za, complex zb) const {
    return 4 + static_cast<int>(std::min(60000.0, std::ceil(phase_budget(za, zb) / 1.5)));
  }

  // "r is not an eigenvalue" is certified locally: |Gamma(r)| must not be
  // tiny relative to |Gamma| a short distance off the axis. The probe height
  // stays O(1) so the smooth off-axis growth cannot swamp the comparison.
  void certify_endpoint(double r, double delta) const {
    const double h = std::min(1.0, delta / 2.0);
    const double probe = std::max(gamma_at(complex(r, h)).log_abs(),
                                  gamma_at(complex(r, -h)).log_abs());
    const scaled_complex g0 = gamma_at(complex(r, 0.0));
    if (g0.is_zero() || g0.log_abs() < probe + std::log(opts_.floor_rel))
      throw endpoint_too_close_error(
          "interval endpoint " + std::to_string(r) + " is too close to an eigenvalue", r,
          g0.log_abs());
  }

  // Signed argument increment along a contour segment. A segment is accepted
  // only when (i) its midpoint confirms the increment, (ii) both halves stay
  // below pi/2, and (iii) the WKB phase budget rules out hidden full turns.
  double arc(complex za, const scaled_complex& ga, complex zb, const scaled_complex& gb,
             int depth) const {
    if (ga.is_zero() || gb.is_zero())
      throw contour_refinement_error("Gamma vanishes on the contour near lambda = " +
                                     std::to_string(za.real()));
    if (depth > opts_.max_refine_depth)
      throw contour_refinement_error("contour refinement depth exceeded near lambda = " +
                                     std::to_string(za.real()));
    if (--budget_ < 0) throw contour_refinement_error("contour evaluation budget exceeded");
    const double dth = std::arg(gb.mantissa * std::conj(ga.mantissa));
    const complex zm = (za + zb) / 2.0;
    if (zm == za || zm == zb) return dth;  // cannot split further
    const scaled_complex gm = gamma_at(zm);
    if (gm.is_zero())
      throw contour_refinement_error("Gamma vanishes on the contour near lambda = " +
                                     std::to_string(zm.real()));
    const double dl = std::arg(gm.mantissa * std::conj(ga.mantissa));
    const double dr = std::arg(gb.mantissa * std::conj(gm.mantissa));
    if (std::abs(dl) < M_PI_2 && std::abs(dr) < M_PI_2 && std::abs(dl + dr - dth) < 1e-9 &&
        phase_budget(za, zb) < 2.0)
      return dl + dr;
    return arc(za, ga, zm, gm, depth + 1) + arc(zm, gm, zb, gb, depth + 1);
  }

  // Split point near the middle that certifies as a non-eigenvalue and
  // conserves the winding count. Candidates without healthy distance to the
  // nearest zero are skipped first (contours hugging a zero are correct but
  // expensive); if no candidate has margin, the best one is still tried.
  double certified_split(double r1, double r2, int n, double value_tol, int& n_left,
                         int& n_right) const {
    const double w = r2 - r1;
    const std::vector<double> fractions{0.5,   0.46875, 0.53125, 0.4375, 0.5625,
                                        0.375, 0.625,   0.25,    0.75,   0.3125,
                                        0.6875, 0.125,  0.875};
    std::vector<double> candidates;
    for (double fr : fractions) candidates.push_back(r1 + fr * w);
    candidates.push_back((r1 + r2) / 2.0 + value_tol);
    candidates.push_back((r1 + r2) / 2.0 - value_tol);

    double best = candidates.front();
    double best_dist = -1.0;
    for (double m : candidates) {
      if (!(m > r1 && m < r2)) continue;
      double dist;
      try {
        dist = zero_distance_estimate(m, w);
      } catch (const error&) {
        continue;
      }
      if (dist > best_dist) {
        best_dist = dist;
        best = m;
      }
      if (dist < w / 64.0) continue;  // too close to a zero, try the next spot
      try {
        n_left = count(r1, m);
        n_right = count(m, r2);
      } catch (const error&) {
        continue;
      }
      if (n_left + n_right == n) return m;
    }
    // last resort: the candidate with the largest margin
    if (best_dist > 0.0) {
      try {
        n_left = count(r1, best);
        n_right = count(best, r2);
        if (n_left + n_right == n) return best;
      } catch (const error&) {
      }
    }
    throw bisection_depth_error("no certifiable split point inside (" + std::to_string(r1) +
                                ", " + std::to_string(r2) + ")");
  }

  // A cluster is emitted when the bracket is narrow enough, or when no split
  // point certifies anymore: a numerically multiple zero cannot be separated
  // beyond the Gamma noise scale (~sqrt(eps) relative for a double zero), and
  // at that point the bracket midpoint with the total count is the answer.
  bool at_cluster_scale(double r1, double r2) const {
    return r2 - r1 <= 1e-4 * std::max({1.0, std::abs(r1), std::abs(r2)});
  }

  void subdivide(double r1, double r2, int n, double value_tol, int depth,
                 std::vector<eigenvalue_cluster>& out) const {
    if (n == 0) return;
    if (depth > opts_.max_bisection_depth)
      throw bisection_depth_error("bisection depth exceeded");
    const double scale = std::max(std::abs(r1), std::abs(r2));
    if (r2 - r1 <= std::max(value_tol, opts_.rel_tol * scale)) {
      double v = (r1 + r2) / 2.0;
      if (opts_.polish_simple) v = polish(v, r2 - r1, n);
      out.push_back({v, n});
      return;
    }
    int nl = 0, nr = 0;
    double m;
    try {
      m = certified_split(r1, r2, n, value_tol, nl, nr);
    } catch (const bisection_depth_error&) {
      if (!at_cluster_scale(r1, r2)) throw;
      double v = (r1 + r2) / 2.0;
      if (opts_.polish_simple) v = polish(v, r2 - r1, n);
      out.push_back({v, n});
      return;
    }
    subdivide(r1, m, nl, value_tol, depth + 1, out);
    subdivide(m, r2, nr, value_tol, depth + 1, out);
  }

  double nth_in(double r1, double r2, int n, int total, double value_tol, int depth) const {
    const double scale = std::max(std::abs(r1), std::abs(r2));
    if (r2 - r1 <= std::max(value_tol, opts_.rel_tol * scale)) {
      double v = (r1 + r2) / 2.0;
      if (opts_.polish_simple) v = polish(v, r2 - r1, total);
      return v;
    }
    if (depth > opts_.max_bisection_depth)
      throw bisection_depth_error("bisection depth exceeded");
    int nl = 0, nr = 0;
    double m;
    try {
      m = certified_split(r1, r2, total, value_tol, nl, nr);
    } catch (const bisection_depth_error&) {
      if (!at_cluster_scale(r1, r2)) throw;
      double v = (r1 + r2) / 2.0;
      if (opts_.polish_simple) v = polish(v, r2 - r1, total);
      return v;
    }
    if (n <= nl) return nth_in(r1, m, n, nl, value_tol, depth + 1);
    return nth_in(m, r2, n - nl, nr, value_tol, depth + 1);
  }

  // Newton refinement with the multiplicity-aware step m Gamma/Gamma'; the
  // scaled ratio is scale-free, so this works unchanged on the deep diverging
  // branches. Falls back to the bracket midpoint when it fails to settle
  // (e.g. inside the noise disc of a numerically multiple zero).
  double polish(double v0, double halfwidth, int multiplicity) const {
    complex lam(v0, 0.0);
    const double guard = std::max(4.0 * halfwidth, 1e-9 * std::max(1.0, std::abs(v0)));
    bool settled = false;
    for (int it = 0; it < 16; ++it) {
      const double h = 1e-7 * std::max(1.0, std::abs(lam));
      const scaled_complex g = gamma_at(lam);
      const scaled_complex gp = (gamma_at(lam + complex(h, 0)) - gamma_at(lam - complex(h, 0))) *
                                complex(1.0 / (2 * h), 0.0);
      if (g.is_zero()) break;
      if (gp.is_zero()) return v0;
      const scaled_complex ratio = g / gp;
      if (ratio.log_abs() > std::log(guard)) return v0;  // escaped: keep the bracket value
      const complex step = static_cast<double>(multiplicity) * ratio.value();
      lam -= step;
      if (std::abs(lam - complex(v0, 0.0)) > guard) return v0;
      if (std::abs(step) <= 1e-14 * std::max(1.0, std::abs(lam))) {
        settled = true;
        break;
      }
    }
    if (multiplicity > 1 && !settled) return v0;
    if (std::abs(lam.imag()) > 1e-8 * std::max(1.0, std::abs(lam.real()))) return v0;
    return lam.real();
  }

  coefficient_field field_;
  boundary_condition bc_;
  locator_options opts_;
  bc_compounds bcc_;
  double wbound_ = 0.0, qbound_ = 0.0;
  double dirichlet_floor_ = 0.0;
  mutable std::map<std::array<double, 2>, scaled_complex> cache_;
  mutable long eval_count_ = 0;
  mutable long budget_ = 0;
};

// ---------------------------------------------------------------------------
// Free-function surface

inline int count_in_interval(const coefficient_field& f, const boundary_condition& bc,
                             double r1, double r2) {
  return spectral_locator(f, bc).count(r1, r2);
}

inline int analytic_multiplicity(const coefficient_field& f, const boundary_condition& bc,
                                 double lambda_star, double radius) {
  return spectral_locator(f, bc).analytic_multiplicity(lambda_star, radius);
}

inline int geometric_multiplicity(const coefficient_field& f, const boundary_condition& bc,
                                  double lambda_star) {
  const char_matrix c = characteristic_matrix(bc, propagate(f, complex(lambda_star, 0.0)));
  return bc.rows() - rank_tol(c.m);
}

inline spectrum_slice locate_eigenvalues(const coefficient_field& f,
                                         const boundary_condition& bc, double r1, double r2,
                                         double value_tol) {
  return spectral_locator(f, bc).locate(r1, r2, value_tol);
}

inline double nth_eigenvalue(const coefficient_field& f, const boundary_condition& bc, int n,
                             const search_policy& pol = {}) {
  return spectral_locator(f, bc).nth(n, pol);
}

// ---------------------------------------------------------------------------
// Eigenfunctions
//
// A kernel vector c of the characteristic matrix gives the eigenfunction
// y(t) = [I 0] X(t) c. The W-norm is integrated exactly per piece with the
// block-exponential quadrature for int exp(G* s) C exp(G s) ds.

struct eigenfunction_data {
  double lambda = 0.0;
  std::vector<double> t;
  std::vector<cvector> y;    // y(t_k), d components
  std::vector<cvector> py;   // (P y')(t_k)
  cvector trace;             // Y(a,b) = (-y(a), y(b), Py'(a), Py'(b))
};

namespace detail {

// Gram matrix N with int_a^b y* W y dt = c* N c for y built from the
// fundamental system with coefficient vector c.
inline cmatrix wnorm_gram(const coefficient_field& f, double lambda) {
  const int d = f.dim;
  const int n = 2 * d;
  cmatrix gram = cmatrix::Zero(n, n);
  cmatrix x = cmatrix::Identity(n, n);
  double logx = 0.0;
  for (int i = 0; i < f.pieces(); ++i) {
    const double dt = f.breakpoints[i + 1] - f.breakpoints[i];
    const cmatrix g = piece_generator(f, i, complex(lambda, 0.0));
    cmatrix c = cmatrix::Zero(n, n);
    c.topLeftCorner(d, d) = f.W[i].cast<complex>();
    cmatrix block = cmatrix::Zero(2 * n, 2 * n);
    block.topLeftCorner(n, n) = -g.adjoint();
    block.topRightCorner(n, n) = c;
    block.bottomRightCorner(n, n) = g;
    const scaled_matrix e = matrix_exp_scaled(block * dt);
    // H = F11^{-1} G; the overall scale of e cancels in the ratio
    const cmatrix h = e.m.topLeftCorner(n, n).partialPivLu().solve(e.m.topRightCorner(n, n));
    const cmatrix xs = std::exp(logx) * x;
    gram += xs.adjoint() * h * xs;
    const scaled_matrix step = matrix_exp_scaled(g * dt);
    x = step.m * x;
    logx += step.log_scale;
    const double mx = max_abs(x);
    if (mx > 0) {
      x /= mx;
      logx += std::log(mx);
    }
    if (logx > 300.0)
      throw error("eigenfunction: propagation grows too fast for norm integration");
  }
  return (gram + gram.adjoint()) / 2.0;
}

}  // namespace detail

inline eigenfunction_data eigenfunction(const coefficient_field& f,
                                        const boundary_condition& bc, double lambda_star,
                                        int kernel_index, int n_samples = 201) {
  const int d = f.dim;
  const propagation p = propagate(f, complex(lambda_star, 0.0));
  const char_matrix cm = characteristic_matrix(bc, p);
  const cmatrix kernel = null_space(cm.m);
  if (kernel_index < 0 || kernel_index >= kernel.cols())
    throw index_out_of_range_error("eigenfunction: kernel index " +
                                   std::to_string(kernel_index) + " out of range (dim " +
                                   std::to_string(kernel.cols()) + ")");
  cvector c = kernel.col(kernel_index);

  // normalize in the W-inner product
  const cmatrix gram = detail::wnorm_gram(f, lambda_star);
  const double norm2 = std::real((c.adjoint() * gram * c)(0, 0));
  if (!(norm2 > 0.0)) throw error("eigenfunction: degenerate W-norm");
  c /= std::sqrt(norm2);

  // phase fix: the first component of (y(a), y(b), Py'(a), Py'(b)) with
  // modulus above the phase floor is rotated to the positive real axis
  const cmatrix xb = transfer_matrix(p);
  cvector yb = xb * c;
  cvector plain(4 * d);
  plain.head(d) = c.head(d);
  plain.segment(d, d) = yb.head(d);
  plain.segment(2 * d, d) = c.tail(d);
  plain.tail(d) = yb.tail(d);
  const double phase_tol = 1e-8 * plain.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < plain.size(); ++i) {
    if (std::abs(plain(i)) > phase_tol) {
      const complex rot = std::conj(plain(i)) / std::abs(plain(i));
      c *= rot;
      plain *= rot;
      yb *= rot;
      break;
    }
  }
  cvector trace(4 * d);
  trace.head(d) = -c.head(d);
  trace.segment(d, d) = yb.head(d);
  trace.segment(2 * d, d) = c.tail(d);
  trace.tail(d) = yb.tail(d);

  eigenfunction_data out;
  out.lambda = lambda_star;
  out.trace = trace;
  out.t.reserve(n_samples);
  out.y.reserve(n_samples);
  out.py.reserve(n_samples);
  const double a = f.a(), b = f.b();
  cvector state = c;
  int piece = 0;
  double t_state = a;
  for (int k = 0; k < n_samples; ++k) {
    const double t = a + (b - a) * k / (n_samples - 1);
    while (piece + 1 < f.pieces() && t > f.breakpoints[piece + 1]) {
      const double dt = f.breakpoints[piece + 1] - t_state;
      state = (matrix_exp(detail::piece_generator(f, piece, complex(lambda_star, 0.0)) * dt) *
               state)
                  .eval();
      t_state = f.breakpoints[piece + 1];
      ++piece;
    }
    if (t > t_state) {
      state = (matrix_exp(detail::piece_generator(f, piece, complex(lambda_star, 0.0)) *
                          (t - t_state)) *
               state)
                  .eval();
      t_state = t;
    }
    out.t.push_back(t);
    out.y.push_back(state.head(d));
    out.py.push_back(state.tail(d));
  }
  return out;
}

}  // namespace slspec
