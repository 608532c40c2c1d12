// SPDX-License-Identifier: Apache-2.0
//
// Dense complex matrix kernel: Hermitian inertia, tolerance-based rank and
// null space, determinants, and a matrix exponential that tracks a separate
// log-scale so propagators can grow like exp(sqrt(|lambda|)*(b-a)) without
// overflowing.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <limits>
#include <ostream>

#include "slspec/errors.hpp"

namespace slspec {

using complex = std::complex<double>;
using cmatrix = Eigen::MatrixXcd;
using cvector = Eigen::VectorXcd;
using rmatrix = Eigen::MatrixXd;
using rvector = Eigen::VectorXd;

inline double max_abs(const cmatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline bool all_finite(const cmatrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!std::isfinite(m(i, j).real()) || !std::isfinite(m(i, j).imag())) return false;
  return true;
}

inline void require_finite(const cmatrix& m, const char* what) {
  if (!all_finite(m)) throw error(std::string(what) + ": non-finite entry");
}

inline void require_square(const cmatrix& m, const char* what) {
  if (m.rows() != m.cols())
    throw non_square_error(std::string(what) + ": matrix is " + std::to_string(m.rows()) +
                           "x" + std::to_string(m.cols()));
}

// ---------------------------------------------------------------------------
// Inertia of a Hermitian matrix: multiplicities of zero / positive / negative
// eigenvalues under a declared zero band.

struct inertia {
  int n_zero = 0;
  int n_plus = 0;
  int n_minus = 0;

  int dim() const { return n_zero + n_plus + n_minus; }
  friend bool operator==(const inertia& a, const inertia& b) {
    return a.n_zero == b.n_zero && a.n_plus == b.n_plus && a.n_minus == b.n_minus;
  }
  friend bool operator!=(const inertia& a, const inertia& b) { return !(a == b); }
  friend std::ostream& operator<<(std::ostream& os, const inertia& in) {
    return os << "(" << in.n_zero << "," << in.n_plus << "," << in.n_minus << ")";
  }
};

// Classification near an inertia-change is intrinsically ill-posed, so the
// zero band is always explicit in the API.
inline double default_inertia_tol(const cmatrix& m) { return 1e-9 * std::max(1.0, max_abs(m)); }

inline double hermitian_residual(const cmatrix& m) {
  return m.size() == 0 ? 0.0 : (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline void require_hermitian(const cmatrix& m, const char* what) {
  require_square(m, what);
  const double res = hermitian_residual(m);
  const double tol = 1e-12 * std::max(1.0, max_abs(m));
  if (res > tol)
    throw not_hermitian_error(std::string(what) + ": |M - M*| = " + std::to_string(res), res);
}

inline rvector hermitian_eigenvalues(const cmatrix& m) {
  // (M + M*)/2 removes roundoff-level asymmetry; the caller has already
  // checked the residual.
  Eigen::SelfAdjointEigenSolver<cmatrix> es((m + m.adjoint()) / 2.0,
                                            Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline inertia hermitian_inertia(const cmatrix& m, double tol_zero) {
  require_hermitian(m, "hermitian_inertia");
  inertia out;
  if (m.size() == 0) return out;
  const rvector ev = hermitian_eigenvalues(m);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (std::abs(ev(i)) <= tol_zero)
      ++out.n_zero;
    else if (ev(i) > 0)
      ++out.n_plus;
    else
      ++out.n_minus;
  }
  return out;
}

inline inertia hermitian_inertia(const cmatrix& m) {
  return hermitian_inertia(m, default_inertia_tol(m));
}

// ---------------------------------------------------------------------------
// Rank and null space by singular values. Rank decisions gate layer
// classification and multiplicity claims, so SVD rather than pivoted LU.

inline constexpr double default_rank_tol = 1e-10;

inline int rank_tol(const cmatrix& m, double rel_tol = default_rank_tol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<cmatrix> svd(m);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > rel_tol * smax) ++r;
  return r;
}

// Orthonormal basis of the numerical kernel, one column per kernel vector.
inline cmatrix null_space(const cmatrix& m, double rel_tol = default_rank_tol) {
  if (m.size() == 0) return cmatrix(0, 0);
  Eigen::JacobiSVD<cmatrix> svd(m, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > rel_tol * smax) ++r;
  return svd.matrixV().rightCols(m.cols() - r);
}

inline complex determinant(const cmatrix& m) {
  require_square(m, "determinant");
  if (m.size() == 0) return complex(1.0, 0.0);
  return m.partialPivLu().determinant();
}

// ---------------------------------------------------------------------------
// Scaled scalars and matrices: value = mantissa * exp(log_scale). Everything
// downstream of the propagator uses these, because |Gamma| routinely exceeds
// the double range on the diverging eigenvalue branches.

struct scaled_complex {
  complex mantissa{0.0, 0.0};
  double log_scale = 0.0;

  bool is_zero() const { return mantissa == complex(0.0, 0.0); }
  double log_abs() const {
    return is_zero() ? -std::numeric_limits<double>::infinity()
                     : std::log(std::abs(mantissa)) + log_scale;
  }
  double arg() const { return std::arg(mantissa); }
  complex value() const { return mantissa * std::exp(log_scale); }

  scaled_complex normalized() const {
    if (is_zero()) return {complex(0, 0), 0.0};
    const double a = std::abs(mantissa);
    return {mantissa / a, log_scale + std::log(a)};
  }
  friend scaled_complex operator*(const scaled_complex& x, const scaled_complex& y) {
    return scaled_complex{x.mantissa * y.mantissa, x.log_scale + y.log_scale}.normalized();
  }
  friend scaled_complex operator/(const scaled_complex& x, const scaled_complex& y) {
    return scaled_complex{x.mantissa / y.mantissa, x.log_scale - y.log_scale}.normalized();
  }
  friend scaled_complex operator*(const scaled_complex& x, complex c) {
    return scaled_complex{x.mantissa * c, x.log_scale}.normalized();
  }
  friend scaled_complex operator-(const scaled_complex& x) {
    return {-x.mantissa, x.log_scale};
  }
  friend scaled_complex operator+(const scaled_complex& x, const scaled_complex& y) {
    if (x.is_zero()) return y;
    if (y.is_zero()) return x;
    const double s = std::max(x.log_scale, y.log_scale);
    const complex m =
        x.mantissa * std::exp(x.log_scale - s) + y.mantissa * std::exp(y.log_scale - s);
    return scaled_complex{m, s}.normalized();
  }
  friend scaled_complex operator-(const scaled_complex& x, const scaled_complex& y) {
    return x + (-y);
  }
};

struct scaled_matrix {
  cmatrix m;
  double log_scale = 0.0;

  cmatrix value() const { return m * std::exp(log_scale); }
  void renormalize() {
    const double f = max_abs(m);
    if (f > 0.0 && std::isfinite(f)) {
      m /= f;
      log_scale += std::log(f);
    }
  }
};

// Determinant as a scaled value. Rows are equilibrated first so that rows of
// wildly different magnitude (common in characteristic matrices at deep
// negative lambda) do not underflow inside the LU.
inline scaled_complex det_scaled(const cmatrix& m) {
  require_square(m, "det_scaled");
  if (m.size() == 0) return {complex(1, 0), 0.0};
  cmatrix a = m;
  double logs = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double f = a.row(i).cwiseAbs().maxCoeff();
    if (f == 0.0) return {complex(0, 0), 0.0};  // exact zero row
    a.row(i) /= f;
    logs += std::log(f);
  }
  const complex d = a.partialPivLu().determinant();
  return scaled_complex{d, logs}.normalized();
}

namespace detail {

// LAPACK-style two-sided diagonal balancing with powers of two. Returns the
// scale vector d; a is replaced by D^-1 A D.
inline rvector balance_in_place(cmatrix& a) {
  const Eigen::Index n = a.rows();
  rvector d = rvector::Ones(n);
  bool converged = false;
  int sweeps = 0;
  while (!converged && sweeps++ < 8) {
    converged = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      double c = 0, r = 0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        c += std::abs(a(j, i));
        r += std::abs(a(i, j));
      }
      if (c == 0.0 || r == 0.0) continue;
      const double s = c + r;
      double f = 1.0;
      while (c < r / 2.0) {
        c *= 2.0;
        r /= 2.0;
        f *= 2.0;
      }
      while (c >= r * 2.0) {
        c /= 2.0;
        r *= 2.0;
        f /= 2.0;
      }
      if (c + r < 0.95 * s) {
        converged = false;
        d(i) *= f;
        a.col(i) *= f;
        a.row(i) /= f;
      }
    }
  }
  return d;
}

}  // namespace detail

// exp(M) = mantissa-matrix * exp(log_scale), via trace shift, balancing and
// [13/13] Pade with scaling and squaring; every squaring renormalizes so the
// mantissa stays representable for arbitrarily large ||M||.
inline scaled_matrix matrix_exp_scaled(const cmatrix& m) {
  require_square(m, "matrix_exp");
  require_finite(m, "matrix_exp");
  const Eigen::Index n = m.rows();
  if (n == 0) return {cmatrix(0, 0), 0.0};

  const complex mu = m.trace() / static_cast<double>(n);
  cmatrix a = m - mu * cmatrix::Identity(n, n);
  const rvector bal = detail::balance_in_place(a);

  static const double b[14] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                               1187353796428800.0,  129060195264000.0,   10559470521600.0,
                               670442572800.0,      33522128640.0,       1323241920.0,
                               40840800.0,          960960.0,            16380.0,
                               182.0,               1.0};
  const double theta13 = 5.371920351148152;
  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  int s = 0;
  if (norm1 > theta13) s = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
  const cmatrix as = a / std::pow(2.0, s);

  const cmatrix I = cmatrix::Identity(n, n);
  const cmatrix a2 = as * as;
  const cmatrix a4 = a2 * a2;
  const cmatrix a6 = a4 * a2;
  const cmatrix u =
      as * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 +
            b[1] * I);
  const cmatrix v =
      a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * I;

  scaled_matrix out;
  out.m = (v - u).partialPivLu().solve(v + u);
  out.log_scale = 0.0;
  for (int k = 0; k < s; ++k) {
    out.m = out.m * out.m;
    out.log_scale *= 2.0;
    out.renormalize();
  }
  // undo balancing, fold the trace shift into scale and phase
  out.m = bal.asDiagonal() * out.m * bal.cwiseInverse().asDiagonal();
  out.renormalize();
  out.log_scale += mu.real();
  out.m *= std::exp(complex(0.0, mu.imag()));
  return out;
}

inline cmatrix matrix_exp(const cmatrix& m) {
  const scaled_matrix e = matrix_exp_scaled(m);
  return e.value();
}

}  // namespace slspec
