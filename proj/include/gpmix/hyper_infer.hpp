#pragma once

// Hyperparameter inference for a single GP component: empirical-Bayes L-BFGS
// on the log marginal likelihood, random-walk Metropolis-Hastings, and HMC
// with leapfrog integration and partial momentum refreshment.

#include <array>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gpmix/gp_kernel.hpp"
#include "gpmix/random.hpp"

namespace gpmix::hyper {

using gp::ComponentStats;
using gp::GpHypers;
using gp::ValueAndGradient;

/// Independent Gaussian priors on (theta1, theta2, theta3).
struct HyperPrior {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d sd = Eigen::Vector3d::Ones();

  void validate() const;
  double log_density(const Eigen::Vector3d &theta) const;
  Eigen::Vector3d grad_log_density(const Eigen::Vector3d &theta) const;
};

struct HmcConfig {
  int leapfrog_steps = 20;
  double step_min = 0.005;
  double step_max = 0.03;
  double refresh = 0.9; ///< partial momentum refreshment alpha in [0, 1)
  Eigen::Vector3d mass_diag = Eigen::Vector3d::Ones();

  void validate() const;
};

struct OptimReport {
  GpHypers theta_hat;
  double log_ml = 0.0;
  double grad_norm = 0.0;
  int grid_starts = 0;
  bool converged = false;
};

struct LbfgsOptions {
  int memory = 10;
  int max_iterations = 500;
  double grad_tol = 1e-8; ///< relative to max(1, |log ML|)
  /// Coordinates with false are held at their start value.
  std::array<bool, 3> free = {true, true, true};
};

/// theta1 in {-1,0,1} x theta2 in {-3,-2,-1} x theta3 in {-5,-4,-3}.
std::vector<GpHypers> default_start_grid();

/// Maximises the log marginal likelihood from every start and keeps the best.
OptimReport optimize_empirical_bayes(const ComponentStats &data, std::span<const GpHypers> starts,
                                     const LbfgsOptions &opts = {});

/// Unnormalised log posterior log p(X | theta) + log p0(theta) and gradient.
/// An empty component contributes only the prior.
ValueAndGradient log_posterior_and_grad(const ComponentStats &data, const GpHypers &h,
                                        const HyperPrior &prior);

/// log posterior, or -inf when the covariance is not positive definite.
double log_posterior_or_neg_inf(const ComponentStats &data, const GpHypers &h,
                                const HyperPrior &prior);

struct MhResult {
  GpHypers state;
  bool accepted = false;
  double log_ratio = 0.0;
};

/// Random-walk MH with theta' = theta + proposal_sd * xi, xi ~ N(0, I_3).
MhResult mh_step(const GpHypers &h, const ComponentStats &data, const HyperPrior &prior, Rng &rng,
                 double proposal_sd = 1.0);

/// MH accept/reject for a given increment and uniform draw.
MhResult mh_step_with(const GpHypers &h, const ComponentStats &data, const HyperPrior &prior,
                      const Eigen::Vector3d &increment, double u);

using LogTarget = std::function<double(const Eigen::Vector3d &)>;

/// Generic random-walk MH on a 3-D log density.
bool mh_step_generic(Eigen::Vector3d &x, double &log_p, const LogTarget &log_target, Rng &rng,
                     double proposal_sd = 1.0);

/// Returns U and grad U at x. May throw NumericalError to signal an invalid state.
using Potential = std::function<ValueAndGradient(const Eigen::Vector3d &)>;

struct PhasePoint {
  Eigen::Vector3d x;
  Eigen::Vector3d p;
};

/// L leapfrog steps of size delta with kinetic energy p^T M^{-1} p / 2.
PhasePoint leapfrog(Eigen::Vector3d x, Eigen::Vector3d p, double delta, int steps,
                    const Eigen::Vector3d &mass_diag,
                    const std::function<Eigen::Vector3d(const Eigen::Vector3d &)> &grad_u);

struct HmcResult {
  Eigen::Vector3d x;
  Eigen::Vector3d momentum; ///< carried into the next partial refreshment
  bool accepted = false;
  double log_ratio = 0.0;
};

HmcResult hmc_step_generic(const Eigen::Vector3d &x, const Eigen::Vector3d &p_prev,
                           const Potential &potential, const HmcConfig &cfg, Rng &rng);

struct HyperHmcResult {
  GpHypers state;
  Eigen::Vector3d momentum;
  bool accepted = false;
};

/// HMC on U(theta) = -log p(X | theta) - log p0(theta).
HyperHmcResult hmc_step(const GpHypers &h, const ComponentStats &data, const HyperPrior &prior,
                        const HmcConfig &cfg, const Eigen::Vector3d &p_prev, Rng &rng);

} // namespace gpmix::hyper
