// SPDX-License-Identifier: Apache-2.0
//
// Error types shared across the library. Every failure mode that callers are
// expected to handle gets its own type; all derive from slspec::error.

#pragma once

#include <stdexcept>
#include <string>

namespace slspec {

class error : public std::runtime_error {
public:
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// matrix kernel
class non_square_error : public error {
public:
  using error::error;
};

class not_hermitian_error : public error {
public:
  explicit not_hermitian_error(const std::string& msg, double residual = 0.0)
      : error(msg), residual(residual) {}
  double residual;
};

// problem model
class parse_error : public error {
public:
  using error::error;
};

class hypothesis_violation : public error {
public:
  hypothesis_violation(const std::string& msg, int piece, std::string condition)
      : error(msg), piece(piece), condition(std::move(condition)) {}
  int piece;              // offending piece index, -1 if global
  std::string condition;  // which part of the standing assumptions failed
};

// boundary-condition space
class rank_deficient_error : public error {
public:
  rank_deficient_error(const std::string& msg, int rank) : error(msg), rank(rank) {}
  int rank;
};

class not_self_adjoint_error : public error {
public:
  not_self_adjoint_error(const std::string& msg, double residual)
      : error(msg), residual(residual) {}
  double residual;
};

class invalid_partition_error : public error {
public:
  using error::error;
};

class strata_mismatch_error : public error {
public:
  using error::error;
};

// shooting solver
class endpoint_too_close_error : public error {
public:
  endpoint_too_close_error(const std::string& msg, double endpoint, double log_abs_gamma)
      : error(msg), endpoint(endpoint), log_abs_gamma(log_abs_gamma) {}
  double endpoint;
  double log_abs_gamma;  // log|Gamma| at the failing endpoint
};

class zero_on_contour_error : public error {
public:
  using error::error;
};

class contour_refinement_error : public error {
public:
  using error::error;
};

class bisection_depth_error : public error {
public:
  using error::error;
};

class search_exhausted_error : public error {
public:
  using error::error;
};

class index_out_of_range_error : public error {
public:
  using error::error;
};

// experiments
class not_simple_error : public error {
public:
  using error::error;
};

class branch_tracking_error : public error {
public:
  using error::error;
};

class io_error : public error {
public:
  using error::error;
};

}  // namespace slspec
