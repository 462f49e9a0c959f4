#pragma once

// Squared-exponential GP components on a unit-spaced fraction grid.
//
// Each component k has a latent profile mu_k ~ GP(0, A) with
// A(t_i, t_j) = a^2 exp(-(t_i - t_j)^2 / l), and its n_k member profiles are
// x_j = mu_k + N(0, sigma^2 I_D). Marginalising mu_k gives the stacked
// covariance sigma^2 I + J_n (x) A, handled by struct_linalg. Every quantity
// below depends on the members only through (n, row sums Y, ||X||_F^2).

#include <Eigen/Dense>

#include "gpmix/random.hpp"
#include "gpmix/struct_linalg.hpp"

namespace gpmix::gp {

/// Log-scale hyperparameters: l = exp(theta1), a^2 = exp(2 theta2),
/// sigma^2 = exp(2 theta3).
struct GpHypers {
  double theta1 = 0.0;
  double theta2 = 0.0;
  double theta3 = 0.0;

  double length_scale() const;
  double amplitude2() const;
  double noise_var() const;

  Eigen::Vector3d vec() const { return {theta1, theta2, theta3}; }
  static GpHypers from(const Eigen::Vector3d &v) { return {v[0], v[1], v[2]}; }
  bool finite() const;
};

/// t_j = j for j = 1..D.
struct FractionGrid {
  int d = 0;

  explicit FractionGrid(int fractions);
  Eigen::VectorXd points() const;
};

/// Sufficient statistics of the profiles currently assigned to a component.
struct ComponentStats {
  int n = 0;
  Eigen::VectorXd row_sums; ///< Y = X e_n
  double frob_sq = 0.0;     ///< ||X||_F^2

  ComponentStats() = default;
  explicit ComponentStats(Eigen::Index fractions);
  /// From a D x n matrix whose columns are profiles.
  static ComponentStats from_columns(const Eigen::MatrixXd &x);

  Eigen::Index fractions() const { return row_sums.size(); }
  void add(const Eigen::Ref<const Eigen::VectorXd> &profile);
  void remove(const Eigen::Ref<const Eigen::VectorXd> &profile);
};

struct GpPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd pred_cov; ///< cov + sigma^2 I
};

linalg::ToeplitzSpec kernel_toeplitz(const FractionGrid &grid, const GpHypers &h);

/// C = sigma^2 I + J_n (x) A for n members.
linalg::StructuredCovariance marginal_covariance(const FractionGrid &grid, const GpHypers &h,
                                                 int n);

double log_marginal(const ComponentStats &data, const GpHypers &h);
double log_marginal(const Eigen::MatrixXd &x, const GpHypers &h);

struct ValueAndGradient {
  double value = 0.0;
  Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
};

/// log marginal likelihood and its gradient in (theta1, theta2, theta3) from a
/// single structured inverse.
ValueAndGradient log_marginal_and_grad(const ComponentStats &data, const GpHypers &h);

Eigen::Vector3d grad_log_marginal(const ComponentStats &data, const GpHypers &h);
Eigen::Vector3d grad_log_marginal(const Eigen::MatrixXd &x, const GpHypers &h);

/// Posterior of mu on the grid; n = 0 returns the prior.
GpPosterior posterior(const ComponentStats &data, const GpHypers &h, const FractionGrid &grid);

/// One draw mu ~ N(mean, cov).
Eigen::VectorXd sample_posterior_function(const GpPosterior &post, Rng &rng);

/// log N(x; mu, sigma2 I).
double profile_loglik_given_function(const Eigen::Ref<const Eigen::VectorXd> &x,
                                     const Eigen::Ref<const Eigen::VectorXd> &mu, double sigma2);

/// Posterior-predictive density of a new profile, N(mean, pred_cov), with the
/// factorisation cached.
class PredictiveDensity {
public:
  explicit PredictiveDensity(const GpPosterior &post);
  double log_density(const Eigen::Ref<const Eigen::VectorXd> &x) const;

private:
  Eigen::VectorXd mean_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_norm_ = 0.0;
};

} // namespace gpmix::gp
