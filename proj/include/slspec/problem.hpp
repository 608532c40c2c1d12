// SPDX-License-Identifier: Apache-2.0
//
// The equation side of a Sturm-Liouville problem: a triple (P,Q,W) of d x d
// real symmetric piecewise-constant matrix functions on [a,b], with P and W
// uniformly positive definite. Piecewise-constant coefficients admit exact
// propagation per piece, so the spectral core carries no integrator
// truncation error.

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "slspec/matrix.hpp"

namespace slspec {

struct coefficient_field {
  int dim = 0;
  std::vector<double> breakpoints;  // a = t0 < t1 < ... < tm = b
  std::vector<rmatrix> P, Q, W;     // one matrix per piece
  double mu1 = 0.0;                 // min eigenvalue of P over all pieces
  double mu2 = 0.0;                 // min eigenvalue of W over all pieces

  double a() const { return breakpoints.front(); }
  double b() const { return breakpoints.back(); }
  int pieces() const { return static_cast<int>(P.size()); }

  // index of the piece containing t (clamped at the ends)
  int piece_at(double t) const {
    const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
    const int i = static_cast<int>(it - breakpoints.begin()) - 1;
    return std::clamp(i, 0, pieces() - 1);
  }
};

namespace detail {

inline double min_eigenvalue(const rmatrix& m) {
  Eigen::SelfAdjointEigenSolver<rmatrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline rmatrix symmetrized(const rmatrix& m, int piece, const char* which) {
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()))
    throw hypothesis_violation(std::string(which) + " is not symmetric on piece " +
                                   std::to_string(piece) + " (asymmetry " +
                                   std::to_string(asym) + ")",
                               piece, std::string(which) + " symmetric");
  return (m + m.transpose()) / 2.0;
}

}  // namespace detail

// Validates the standing assumptions and computes mu1, mu2.
inline coefficient_field make_field(int dim, std::vector<double> breakpoints,
                                    std::vector<rmatrix> P, std::vector<rmatrix> Q,
                                    std::vector<rmatrix> W) {
  if (dim < 1) throw hypothesis_violation("dim must be >= 1", -1, "d >= 1");
  if (breakpoints.size() < 2)
    throw hypothesis_violation("need at least two breakpoints", -1, "a < b");
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i)
    if (!(breakpoints[i] < breakpoints[i + 1]))
      throw hypothesis_violation("breakpoints not strictly increasing at index " +
                                     std::to_string(i),
                                 static_cast<int>(i), "breakpoints increasing");
  const std::size_t n = breakpoints.size() - 1;
  if (P.size() != n || Q.size() != n || W.size() != n)
    throw hypothesis_violation("coefficient count does not match piece count", -1,
                               "one matrix per piece");

  coefficient_field f;
  f.dim = dim;
  f.breakpoints = std::move(breakpoints);
  f.P.reserve(n);
  f.Q.reserve(n);
  f.W.reserve(n);
  f.mu1 = std::numeric_limits<double>::infinity();
  f.mu2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (const rmatrix* m : {&P[i], &Q[i], &W[i]}) {
      if (m->rows() != dim || m->cols() != dim)
        throw hypothesis_violation("matrix on piece " + std::to_string(i) + " is not " +
                                       std::to_string(dim) + "x" + std::to_string(dim),
                                   static_cast<int>(i), "dimension");
      if (!m->allFinite())
        throw hypothesis_violation("non-finite entry on piece " + std::to_string(i),
                                   static_cast<int>(i), "finite entries");
    }
    f.P.push_back(detail::symmetrized(P[i], static_cast<int>(i), "P"));
    f.Q.push_back(detail::symmetrized(Q[i], static_cast<int>(i), "Q"));
    f.W.push_back(detail::symmetrized(W[i], static_cast<int>(i), "W"));
    const double p_min = detail::min_eigenvalue(f.P.back());
    const double w_min = detail::min_eigenvalue(f.W.back());
    if (p_min <= 0.0)
      throw hypothesis_violation("P not positive definite on piece " + std::to_string(i) +
                                     " (min eigenvalue " + std::to_string(p_min) + ")",
                                 static_cast<int>(i), "P >= mu1 > 0");
    if (w_min <= 0.0)
      throw hypothesis_violation("W not positive definite on piece " + std::to_string(i) +
                                     " (min eigenvalue " + std::to_string(w_min) + ")",
                                 static_cast<int>(i), "W >= mu2 > 0");
    f.mu1 = std::min(f.mu1, p_min);
    f.mu2 = std::min(f.mu2, w_min);
  }
  return f;
}

// d = 1 convenience: constant scalar coefficients on [a,b].
inline coefficient_field scalar_field(double p, double q, double w, double a = 0.0,
                                      double b = 1.0) {
  rmatrix pm(1, 1), qm(1, 1), wm(1, 1);
  pm << p;
  qm << q;
  wm << w;
  return make_field(1, {a, b}, {pm}, {qm}, {wm});
}

// Diagonal field assembled from d scalar problems on a common interval; its
// spectrum with a decoupled boundary condition is the multiset union of the
// scalar spectra. Breakpoint grids are merged.
inline coefficient_field decoupled_field(const std::vector<coefficient_field>& comps) {
  if (comps.empty()) throw hypothesis_violation("no components", -1, "d >= 1");
  const double a = comps.front().a(), b = comps.front().b();
  const double span = b - a;
  std::vector<double> grid;
  for (const auto& c : comps) {
    if (c.dim != 1)
      throw hypothesis_violation("decoupled_field expects scalar components", -1, "d = 1");
    if (std::abs(c.a() - a) > 1e-12 * std::max(1.0, std::abs(a)) ||
        std::abs(c.b() - b) > 1e-12 * std::max(1.0, std::abs(b)))
      throw hypothesis_violation("component intervals differ", -1, "common [a,b]");
    grid.insert(grid.end(), c.breakpoints.begin(), c.breakpoints.end());
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(),
                         [&](double x, double y) { return std::abs(x - y) < 1e-12 * span; }),
             grid.end());
  grid.front() = a;
  grid.back() = b;

  const int d = static_cast<int>(comps.size());
  std::vector<rmatrix> P, Q, W;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double mid = (grid[i] + grid[i + 1]) / 2.0;
    rmatrix p = rmatrix::Zero(d, d), q = rmatrix::Zero(d, d), w = rmatrix::Zero(d, d);
    for (int j = 0; j < d; ++j) {
      const int k = comps[j].piece_at(mid);
      p(j, j) = comps[j].P[k](0, 0);
      q(j, j) = comps[j].Q[k](0, 0);
      w(j, j) = comps[j].W[k](0, 0);
    }
    P.push_back(p);
    Q.push_back(q);
    W.push_back(w);
  }
  return make_field(d, grid, P, Q, W);
}

// Convex combination tau*target + (1-tau)*source per piece; stays inside the
// admissible set because the positive-definite cone is convex.
inline coefficient_field blend(const coefficient_field& source, const coefficient_field& target,
                               double tau) {
  if (source.dim != target.dim)
    throw hypothesis_violation("blend: dimensions differ", -1, "equal dim");
  if (source.breakpoints.size() != target.breakpoints.size())
    throw hypothesis_violation("blend: breakpoint grids differ", -1, "equal grid");
  for (std::size_t i = 0; i < source.breakpoints.size(); ++i)
    if (std::abs(source.breakpoints[i] - target.breakpoints[i]) >
        1e-12 * std::max(1.0, std::abs(source.breakpoints[i])))
      throw hypothesis_violation("blend: breakpoint grids differ", static_cast<int>(i),
                                 "equal grid");
  std::vector<rmatrix> P, Q, W;
  for (int i = 0; i < source.pieces(); ++i) {
    P.push_back(tau * target.P[i] + (1.0 - tau) * source.P[i]);
    Q.push_back(tau * target.Q[i] + (1.0 - tau) * source.Q[i]);
    W.push_back(tau * target.W[i] + (1.0 - tau) * source.W[i]);
  }
  return make_field(source.dim, source.breakpoints, P, Q, W);
}

struct homotopy_point {
  double tau = 0.0;
  coefficient_field source;
  coefficient_field target;

  coefficient_field field() const { return blend(source, target, tau); }
};

}  // namespace slspec
