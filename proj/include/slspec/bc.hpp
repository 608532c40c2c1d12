// SPDX-License-Identifier: Apache-2.0
//
// The manifold of self-adjoint boundary conditions [A|B] (rank(A|B) = 2d,
// AB* = BA*): validation, the canonical chart atlas indexed by column subsets
// K with Hermitian coordinates S, inertia-based stratum and layer labels, the
// canonical singular representatives, and constructive paths approaching them
// or moving inside a stratum.
//
// Chart indices K are 1-based column indices into {1,...,2d}, matching the
// file formats.

#pragma once

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "slspec/matrix.hpp"

namespace slspec {

struct boundary_condition {
  int dim = 0;    // d; A and B are 2d x 2d
  cmatrix A, B;

  int rows() const { return 2 * dim; }
};

struct chart_repr {
  int dim = 0;
  std::vector<int> K;  // sorted, 1-based
  cmatrix S;           // 2d x 2d Hermitian
};

struct stratum_label {
  std::vector<int> K;
  inertia in;       // inertia of the principal submatrix S_K
  double margin;    // smallest |eigenvalue| of S_K (classification headroom)

  friend bool operator==(const stratum_label& a, const stratum_label& b) {
    return a.K == b.K && a.in == b.in;
  }
  friend bool operator!=(const stratum_label& a, const stratum_label& b) { return !(a == b); }
};

inline std::string index_set_string(const std::vector<int>& K) {
  std::ostringstream os;
  os << "{";
  for (std::size_t i = 0; i < K.size(); ++i) os << (i ? "," : "") << K[i];
  os << "}";
  return os.str();
}

namespace detail {

inline void check_index_set(const std::vector<int>& K, int two_d) {
  for (std::size_t i = 0; i < K.size(); ++i) {
    if (K[i] < 1 || K[i] > two_d)
      throw invalid_partition_error("chart index " + std::to_string(K[i]) + " out of range");
    if (i > 0 && K[i] <= K[i - 1])
      throw invalid_partition_error("chart indices must be strictly increasing");
  }
}

inline bool contains(const std::vector<int>& K, int k) {
  return std::binary_search(K.begin(), K.end(), k);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Validation and equivalence

inline boundary_condition validate(const cmatrix& A, const cmatrix& B,
                                   double rank_rel_tol = default_rank_tol,
                                   double sa_rel_tol = 1e-10) {
  if (A.rows() != A.cols() || B.rows() != B.cols() || A.rows() != B.rows() ||
      A.rows() % 2 != 0 || A.rows() == 0)
    throw non_square_error("validate: A and B must be equal square 2d x 2d matrices");
  require_finite(A, "validate(A)");
  require_finite(B, "validate(B)");
  const int two_d = static_cast<int>(A.rows());

  cmatrix AB(two_d, 2 * two_d);
  AB << A, B;
  const int r = rank_tol(AB, rank_rel_tol);
  if (r != two_d)
    throw rank_deficient_error("validate: rank(A|B) = " + std::to_string(r) +
                                   ", expected " + std::to_string(two_d),
                               r);

  const cmatrix comm = A * B.adjoint() - B * A.adjoint();
  const double scale = std::max(1.0, max_abs(A) * max_abs(B));
  const double res = max_abs(comm);
  if (res > sa_rel_tol * scale)
    throw not_self_adjoint_error("validate: |AB* - BA*| = " + std::to_string(res), res);

  return boundary_condition{two_d / 2, A, B};
}

// Row-space (GL-equivalence) test: two representatives describe the same
// boundary condition iff stacking them does not increase the rank.
inline bool same_boundary_condition(const boundary_condition& x, const boundary_condition& y,
                                    double rel_tol = default_rank_tol) {
  if (x.dim != y.dim) return false;
  const int two_d = x.rows();
  cmatrix stacked(2 * two_d, 2 * two_d);
  stacked.topRows(two_d) << x.A, x.B;
  stacked.bottomRows(two_d) << y.A, y.B;
  return rank_tol(stacked, rel_tol) == two_d;
}

inline boundary_condition dirichlet_bc(int d) {
  return validate(cmatrix::Identity(2 * d, 2 * d), cmatrix::Zero(2 * d, 2 * d));
}

inline boundary_condition neumann_bc(int d) {
  return validate(cmatrix::Zero(2 * d, 2 * d), cmatrix::Identity(2 * d, 2 * d));
}

inline boundary_condition conjugated(const boundary_condition& bc) {
  return boundary_condition{bc.dim, bc.A.conjugate(), bc.B.conjugate()};
}

// ---------------------------------------------------------------------------
// Chart atlas

// [A|B] with a_i = -e_i (i in K), s_i (i not in K); b_i = s_i (i in K),
// e_i (i not in K).
inline boundary_condition chart_compose(const std::vector<int>& K, const cmatrix& S) {
  require_hermitian(S, "chart_compose(S)");
  const int two_d = static_cast<int>(S.rows());
  if (two_d % 2 != 0 || two_d == 0)
    throw non_square_error("chart_compose: S must be 2d x 2d");
  detail::check_index_set(K, two_d);

  cmatrix A = cmatrix::Zero(two_d, two_d), B = cmatrix::Zero(two_d, two_d);
  const cmatrix Sh = (S + S.adjoint()) / 2.0;
  for (int k = 1; k <= two_d; ++k) {
    if (detail::contains(K, k)) {
      A(k - 1, k - 1) = -1.0;
      B.col(k - 1) = Sh.col(k - 1);
    } else {
      A.col(k - 1) = Sh.col(k - 1);
      B(k - 1, k - 1) = 1.0;
    }
  }
  return validate(A, B);
}

inline boundary_condition compose(const chart_repr& c) { return chart_compose(c.K, c.S); }

// Membership test for a specific chart: [A|B] lies in chart K iff the mixed
// column matrix M (a_k at position k for k in K, b_k otherwise) is
// invertible; the chart coordinates are then read off after normalizing with
// T = N M^{-1}, N = diag(-1 on K, +1 off K).
inline std::optional<chart_repr> chart_in(const boundary_condition& bc,
                                          const std::vector<int>& K,
                                          double rel_tol = default_rank_tol) {
  const int two_d = bc.rows();
  detail::check_index_set(K, two_d);

  cmatrix M(two_d, two_d);
  rvector signs(two_d);
  for (int k = 1; k <= two_d; ++k) {
    const bool in_k = detail::contains(K, k);
    M.col(k - 1) = in_k ? bc.A.col(k - 1) : bc.B.col(k - 1);
    signs(k - 1) = in_k ? -1.0 : 1.0;
  }
  if (rank_tol(M, rel_tol) != two_d) return std::nullopt;

  const auto lu = M.partialPivLu();
  const cmatrix TA = signs.asDiagonal() * lu.solve(bc.A);
  const cmatrix TB = signs.asDiagonal() * lu.solve(bc.B);

  cmatrix S(two_d, two_d);
  for (int k = 1; k <= two_d; ++k)
    S.col(k - 1) = detail::contains(K, k) ? TB.col(k - 1) : TA.col(k - 1);
  // AB* = BA* forces S = S* in exact arithmetic
  const double herm_res = hermitian_residual(S);
  if (herm_res > 1e-8 * std::max(1.0, max_abs(S))) return std::nullopt;
  return chart_repr{bc.dim, K, (S + S.adjoint()) / 2.0};
}

// The lexicographically smallest K with #K = rank(A) whose columns of A
// achieve that rank (greedy prefix selection). Deterministic across runs, and
// invariant under left GL action because column rank relations are.
inline std::vector<int> lex_chart_indices(const boundary_condition& bc,
                                          double rel_tol = default_rank_tol) {
  const int two_d = bc.rows();
  const int m0 = rank_tol(bc.A, rel_tol);
  std::vector<int> K;
  K.reserve(m0);
  cmatrix sel(two_d, m0);
  int cur = 0;
  for (int k = 1; k <= two_d && cur < m0; ++k) {
    sel.col(cur) = bc.A.col(k - 1);
    if (rank_tol(sel.leftCols(cur + 1), rel_tol) == cur + 1) {
      K.push_back(k);
      ++cur;
    }
  }
  return K;
}

inline chart_repr chart_decompose(const boundary_condition& bc,
                                  double rel_tol = default_rank_tol) {
  const std::vector<int> K = lex_chart_indices(bc, rel_tol);
  auto c = chart_in(bc, K, rel_tol);
  if (!c)
    throw error("chart_decompose: mixed column matrix singular for K = " +
                index_set_string(K) + " (ill-conditioned boundary condition)");
  return *c;
}

inline cmatrix principal_submatrix(const cmatrix& S, const std::vector<int>& K) {
  const int m = static_cast<int>(K.size());
  cmatrix out(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) out(i, j) = S(K[i] - 1, K[j] - 1);
  return out;
}

// ---------------------------------------------------------------------------
// Layers and strata

// n^0(B): the layer index. The singular set is the union of layers with
// positive index.
inline int layer_index(const boundary_condition& bc, double rel_tol = default_rank_tol) {
  return bc.rows() - rank_tol(bc.B, rel_tol);
}

inline stratum_label stratum_of_chart(const chart_repr& c, double tol_zero = -1.0) {
  const cmatrix sk = principal_submatrix(c.S, c.K);
  if (tol_zero < 0.0) tol_zero = default_inertia_tol(sk);
  stratum_label out;
  out.K = c.K;
  out.margin = std::numeric_limits<double>::infinity();
  if (sk.size() == 0) {
    out.in = inertia{};
    return out;
  }
  out.in = hermitian_inertia(sk, tol_zero);
  const rvector ev = hermitian_eigenvalues(sk);
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    out.margin = std::min(out.margin, std::abs(ev(i)));
  return out;
}

inline stratum_label stratum_of(const boundary_condition& bc, double tol_zero = -1.0) {
  return stratum_of_chart(chart_decompose(bc), tol_zero);
}

// ---------------------------------------------------------------------------
// Canonical singular representatives and paths (the constructive side of the
// singular-set description)

// [-I | (b_1,...,b_2d)] with b = 0 on the first n0 indices of K, +e on the
// next n_plus and on all off-K indices, -e on the last n_minus indices of K.
inline boundary_condition canonical_singular(const std::vector<int>& K, const inertia& part,
                                             int d) {
  const int two_d = 2 * d;
  detail::check_index_set(K, two_d);
  if (part.n_zero < 0 || part.n_plus < 0 || part.n_minus < 0 ||
      part.dim() != static_cast<int>(K.size()))
    throw invalid_partition_error("canonical_singular: partition " + std::to_string(part.n_zero) +
                                  "+" + std::to_string(part.n_plus) + "+" +
                                  std::to_string(part.n_minus) + " does not sum to #K");
  cmatrix A = -cmatrix::Identity(two_d, two_d);
  cmatrix B = cmatrix::Zero(two_d, two_d);
  for (int k = 1; k <= two_d; ++k)
    if (!detail::contains(K, k)) B(k - 1, k - 1) = 1.0;
  for (std::size_t l = 0; l < K.size(); ++l) {
    const int k = K[l];
    if (static_cast<int>(l) < part.n_zero)
      B(k - 1, k - 1) = 0.0;
    else if (static_cast<int>(l) < part.n_zero + part.n_plus)
      B(k - 1, k - 1) = 1.0;
    else
      B(k - 1, k - 1) = -1.0;
  }
  return validate(A, B);
}

// The explicit path A_s, s in (0,1], sitting in the source stratum for every
// s > 0 and converging entrywise to canonical_singular(K, target) as s -> 0+.
// Requires n0 < n0_target, n_plus >= n_plus_target, n_minus >= n_minus_target.
inline boundary_condition approach_path(const std::vector<int>& K, const inertia& target,
                                        const inertia& source, double s, int d) {
  const int two_d = 2 * d;
  detail::check_index_set(K, two_d);
  const int m0 = static_cast<int>(K.size());
  if (target.dim() != m0 || source.dim() != m0)
    throw invalid_partition_error("approach_path: partitions must sum to #K");
  if (!(source.n_zero < target.n_zero && source.n_plus >= target.n_plus &&
        source.n_minus >= target.n_minus))
    throw invalid_partition_error(
        "approach_path: need n0 < n0_target, n+ >= n+_target, n- >= n-_target");
  if (!(s > 0.0 && s <= 1.0)) throw invalid_partition_error("approach_path: s must be in (0,1]");

  cmatrix A = -cmatrix::Identity(two_d, two_d);
  cmatrix B = cmatrix::Zero(two_d, two_d);
  for (int k = 1; k <= two_d; ++k)
    if (!detail::contains(K, k)) B(k - 1, k - 1) = 1.0;

  const int shrink_plus = source.n_plus - target.n_plus;   // collapse to 0 from above
  const int shrink_minus = source.n_minus - target.n_minus;  // collapse to 0 from below
  for (int l = 0; l < m0; ++l) {
    const int k = K[l];
    double v = 0.0;
    if (l < source.n_zero)
      v = 0.0;
    else if (l < source.n_zero + shrink_plus)
      v = s;
    else if (l < source.n_zero + shrink_plus + shrink_minus)
      v = -s;
    else if (l < target.n_zero + target.n_plus)
      v = 1.0;
    else
      v = -1.0;
    B(k - 1, k - 1) = v;
  }
  return validate(A, B);
}

// ---------------------------------------------------------------------------
// Paths inside a stratum

// Connects two boundary conditions carrying the same stratum label in a
// common chart. Off-K entries of S interpolate linearly; the K-block follows
// the congruence path R(tau)* J R(tau), which keeps the inertia constant for
// every tau. R(tau) interpolates through the principal matrix logarithm when
// it exists, otherwise through a polar-decomposition detour via the identity.
class stratum_path {
public:
  stratum_path(const boundary_condition& bc1, const boundary_condition& bc2,
               double tol_zero = -1.0) {
    // find a chart containing both endpoints
    std::optional<chart_repr> c1, c2;
    {
      const chart_repr d1 = chart_decompose(bc1);
      if (auto m2 = chart_in(bc2, d1.K)) {
        c1 = d1;
        c2 = m2;
      } else {
        const chart_repr d2 = chart_decompose(bc2);
        if (auto m1 = chart_in(bc1, d2.K)) {
          c1 = m1;
          c2 = d2;
        }
      }
    }
    if (!c1 || !c2)
      throw strata_mismatch_error("stratum_path: no common chart for the two endpoints");
    K_ = c1->K;
    S1_ = c1->S;
    S2_ = c2->S;
    dim_ = c1->dim;

    const cmatrix sk1 = principal_submatrix(S1_, K_);
    const cmatrix sk2 = principal_submatrix(S2_, K_);
    if (tol_zero < 0.0)
      tol_zero = std::max(default_inertia_tol(sk1), default_inertia_tol(sk2));
    const inertia in1 = sk1.size() ? hermitian_inertia(sk1, tol_zero) : inertia{};
    const inertia in2 = sk2.size() ? hermitian_inertia(sk2, tol_zero) : inertia{};
    if (in1 != in2) {
      std::ostringstream os;
      os << "stratum_path: inertia mismatch in chart " << index_set_string(K_) << ": " << in1
         << " vs " << in2;
      throw strata_mismatch_error(os.str());
    }
    in_ = in1;

    const int m0 = static_cast<int>(K_.size());
    if (m0 == 0) return;  // pure linear interpolation

    const bool real_inputs = max_abs(S1_.imag()) + max_abs(S2_.imag()) <
                             1e-12 * std::max(1.0, max_abs(S1_) + max_abs(S2_));
    R1_ = congruence_factor(sk1, tol_zero, real_inputs);
    R2_ = congruence_factor(sk2, tol_zero, real_inputs);

    // try the principal logarithm of R1^{-1} R2
    const cmatrix X = R1_.partialPivLu().solve(R2_);
    Eigen::ComplexEigenSolver<cmatrix> es(X);
    bool log_ok = es.info() == Eigen::Success;
    if (log_ok) {
      for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const complex ev = es.eigenvalues()(i);
        if (ev.real() <= 0.0 && std::abs(ev.imag()) < 1e-12 * std::abs(ev)) log_ok = false;
        if (std::abs(ev) == 0.0) log_ok = false;
      }
    }
    if (log_ok) {
      const cmatrix V = es.eigenvectors();
      cvector lg(es.eigenvalues().size());
      for (Eigen::Index i = 0; i < lg.size(); ++i) lg(i) = std::log(es.eigenvalues()(i));
      const cmatrix L = V * lg.asDiagonal() * V.partialPivLu().solve(cmatrix::Identity(m0, m0));
      if (max_abs(X - matrix_exp(L)) <= 1e-8 * std::max(1.0, max_abs(X))) {
        log_ = L;
        direct_ = true;
        return;
      }
    }
    // polar detour R1 -> I -> R2
    polar1_ = polar_parts(R1_);
    polar2_ = polar_parts(R2_);
    direct_ = false;
  }

  const std::vector<int>& chart_indices() const { return K_; }
  const inertia& label() const { return in_; }

  boundary_condition at(double tau) const {
    tau = std::clamp(tau, 0.0, 1.0);
    cmatrix S = (1.0 - tau) * S1_ + tau * S2_;  // off-K entries (and a placeholder on K)
    const int m0 = static_cast<int>(K_.size());
    if (m0 > 0) {
      const cmatrix R = factor_at(tau);
      cmatrix jhat = cmatrix::Zero(m0, m0);
      for (int i = 0; i < m0; ++i)
        jhat(i, i) = i < in_.n_zero ? 0.0 : (i < in_.n_zero + in_.n_plus ? 1.0 : -1.0);
      cmatrix skt = R.adjoint() * jhat * R;
      skt = (skt + skt.adjoint()) / 2.0;
      for (int i = 0; i < m0; ++i)
        for (int j = 0; j < m0; ++j) S(K_[i] - 1, K_[j] - 1) = skt(i, j);
    }
    return chart_compose(K_, (S + S.adjoint()) / 2.0);
  }

private:
  struct polar {
    cmatrix log_unitary;  // skew-Hermitian generator of the unitary part
    cmatrix hermitian;    // positive-definite factor
  };

  // R with S_K = R* J R, J = diag(0, I, -I): eigendecompose, order the
  // eigenvalues (zero, positive, negative), scale by sqrt|eigenvalue|.
  static cmatrix congruence_factor(const cmatrix& sk, double tol_zero, bool make_det_positive) {
    const int m = static_cast<int>(sk.rows());
    Eigen::SelfAdjointEigenSolver<cmatrix> es((sk + sk.adjoint()) / 2.0);
    const rvector ev = es.eigenvalues();
    std::vector<int> order;
    for (int i = 0; i < m; ++i)
      if (std::abs(ev(i)) <= tol_zero) order.push_back(i);
    for (int i = m - 1; i >= 0; --i)
      if (ev(i) > tol_zero) order.push_back(i);
    for (int i = 0; i < m; ++i)
      if (ev(i) < -tol_zero) order.push_back(i);

    cmatrix R(m, m);
    for (int r = 0; r < m; ++r) {
      const int i = order[r];
      const double scale = std::abs(ev(i)) <= tol_zero ? 1.0 : std::sqrt(std::abs(ev(i)));
      R.row(r) = scale * es.eigenvectors().col(i).adjoint();
    }
    if (make_det_positive) {
      // real case refinement: a row sign flip keeps R* J R while fixing det > 0
      const complex det = R.determinant();
      if (det.real() < 0.0) R.row(0) *= -1.0;
    }
    return R;
  }

  static polar parts_of(const cmatrix& R) {
    Eigen::JacobiSVD<cmatrix> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const cmatrix Q = svd.matrixU() * svd.matrixV().adjoint();
    const cmatrix H =
        svd.matrixV() * svd.singularValues().asDiagonal() * svd.matrixV().adjoint();
    // log of the unitary factor through its (normal) eigendecomposition
    Eigen::ComplexEigenSolver<cmatrix> es(Q);
    cvector lg(es.eigenvalues().size());
    for (Eigen::Index i = 0; i < lg.size(); ++i) lg(i) = std::log(es.eigenvalues()(i));
    const cmatrix V = es.eigenvectors();
    const cmatrix L =
        V * lg.asDiagonal() * V.partialPivLu().solve(cmatrix::Identity(R.rows(), R.rows()));
    return polar{L, H};
  }

  static polar polar_parts(const cmatrix& R) { return parts_of(R); }

  cmatrix factor_at(double tau) const {
    const int m0 = static_cast<int>(K_.size());
    if (direct_) return R1_ * matrix_exp(tau * log_);
    const cmatrix I = cmatrix::Identity(m0, m0);
    if (tau <= 0.5) {
      const double u = 1.0 - 2.0 * tau;
      return matrix_exp(u * polar1_.log_unitary) * ((1.0 - u) * I + u * polar1_.hermitian);
    }
    const double u = 2.0 * tau - 1.0;
    return matrix_exp(u * polar2_.log_unitary) * ((1.0 - u) * I + u * polar2_.hermitian);
  }

  int dim_ = 0;
  std::vector<int> K_;
  cmatrix S1_, S2_;
  inertia in_;
  cmatrix R1_, R2_;
  bool direct_ = true;
  cmatrix log_;
  polar polar1_, polar2_;
};

inline boundary_condition connect_within_stratum(const boundary_condition& bc1,
                                                 const boundary_condition& bc2, double tau) {
  return stratum_path(bc1, bc2).at(tau);
}

}  // namespace slspec
