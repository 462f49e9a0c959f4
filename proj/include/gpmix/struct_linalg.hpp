#pragma once

// Inversion, log-determinant and quadratic forms for covariance matrices of
// the form C = sigma^2 I_{nD} + J_n (x) A, where A is a symmetric Toeplitz
// D x D matrix and J_n is the n x n matrix of ones.
//
// Woodbury reduces C^{-1} to the D x D Toeplitz matrix Q = I_D + (n/sigma^2) A:
//
//   C^{-1}   = sigma^-2 I_{nD} - 1/(n sigma^2) J_n (x) (I_D - Z),   Z = Q^{-1}
//   det(C)   = (sigma^2)^{nD} det(Q)
//
// Z and log det(Q) come from a Durbin recursion followed by the Trench
// persymmetric fill-in, O(D^2) overall. The nD x nD inverse is never formed.

#include <span>

#include <Eigen/Dense>

namespace gpmix::linalg {

/// Symmetric Toeplitz matrix stored by its first row.
struct ToeplitzSpec {
  Eigen::VectorXd first_row;

  Eigen::Index size() const { return first_row.size(); }
  Eigen::MatrixXd dense() const;
};

/// sigma^2 I_{nD} + J_n (x) A, kept in factored form.
struct StructuredCovariance {
  ToeplitzSpec a;
  double sigma2 = 1.0;
  int n = 1;

  Eigen::Index block_size() const { return a.size(); }
  Eigen::Index dim() const { return static_cast<Eigen::Index>(n) * a.size(); }

  /// Applies C to vec(X) for a D x n matrix X, returning the D x n result.
  Eigen::MatrixXd apply(const Eigen::MatrixXd &x) const;

  Eigen::MatrixXd dense() const;
};

struct StructuredInverse {
  Eigen::MatrixXd z; ///< Q^{-1}
  double sigma2 = 1.0;
  int n = 1;
  double log_det = 0.0; ///< log det C

  Eigen::Index block_size() const { return z.rows(); }

  /// Applies C^{-1} to vec(X) for a D x n matrix X.
  Eigen::MatrixXd apply(const Eigen::MatrixXd &x) const;

  /// sigma^-2 I - 1/(n sigma^2) J_n (x) (I - Z), materialised. Test use only.
  Eigen::MatrixXd implied_dense() const;
};

struct DurbinResult {
  Eigen::VectorXd z;
  double log_beta_sum = 0.0;
};

/// Extended Durbin recursion. For xi of length m, solves T_m z = -xi where T_m
/// is the m x m symmetric Toeplitz matrix with first row (1, xi_1..xi_{m-1}).
/// log_beta_sum is log det of the (m+1) x (m+1) matrix with first row
/// (1, xi_1..xi_m). Throws NotPositiveDefinite on a non-positive beta.
DurbinResult durbin(std::span<const double> xi);

struct VectorInverseResult {
  Eigen::VectorXd v; ///< last column of Q^{-1}
  double log_det = 0.0;
};

/// Last column of Q^{-1} and log det Q for the SPD Toeplitz Q with first row q.
VectorInverseResult vector_inverse(std::span<const double> q);

/// Full inverse of a symmetric Toeplitz matrix via the persymmetric fill-in.
Eigen::MatrixXd toeplitz_inverse(std::span<const double> q, double *log_det = nullptr);

StructuredInverse trench_inverse(const StructuredCovariance &cov);

/// vec(X)^T C^{-1} vec(X) from the row sums Y = X e_n and ||X||_F^2.
double quadratic_form(const StructuredInverse &inv, const Eigen::VectorXd &row_sums,
                      double frobenius_sq);
double quadratic_form(const StructuredInverse &inv, const Eigen::MatrixXd &x);

/// Row sums Y_i = sum_j X_ij.
Eigen::VectorXd row_sums(const Eigen::MatrixXd &x);

inline constexpr Eigen::Index kDenseGuard = 2048;

struct DenseInverse {
  Eigen::MatrixXd inverse;
  double log_det = 0.0;
};

/// Materialises C and inverts it by dense Cholesky. Refuses nD > kDenseGuard.
DenseInverse dense_oracle(const StructuredCovariance &cov);

} // namespace gpmix::linalg
