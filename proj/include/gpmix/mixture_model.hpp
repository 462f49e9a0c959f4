#pragma once

// Semi-supervised finite mixture of K GP components plus a multivariate-t
// outlier component. Labelled proteins keep their indicator and are never
// flagged as outliers; only unlabelled proteins are resampled.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gpmix/gp_kernel.hpp"
#include "gpmix/random.hpp"

namespace gpmix::mixture {

using gp::GpHypers;

enum class AllocationMode { sampled_function, marginalised };

inline constexpr int kUnlabelled = -1;

/// Profiles as rows (N x D) and marker labels (kUnlabelled or 0..K-1).
struct MixtureData {
  Eigen::MatrixXd profiles;
  std::vector<int> labels;
  int components = 0;

  Eigen::Index proteins() const { return profiles.rows(); }
  Eigen::Index fractions() const { return profiles.cols(); }
  bool labelled(Eigen::Index i) const { return labels[static_cast<std::size_t>(i)] != kUnlabelled; }
  void validate() const;
};

struct DirichletConfig {
  double alpha = 1.0;
};

struct OutlierModel {
  double kappa = 4.0;
  Eigen::VectorXd location;
  Eigen::MatrixXd scale;
  double beta_u = 2.0;
  double beta_v = 10.0;

  /// Location = global mean profile, scale = half the empirical covariance.
  static OutlierModel from_profiles(const Eigen::MatrixXd &profiles, double kappa = 4.0,
                                    double beta_u = 2.0, double beta_v = 10.0);
};

struct MixtureState {
  std::vector<int> z;
  std::vector<std::uint8_t> phi; ///< 1 = member of a GP component, 0 = outlier
  Eigen::VectorXd pi;
  double eps = 0.0;
  std::vector<GpHypers> hypers;
  std::vector<Eigen::VectorXd> mus; ///< sampled_function mode only

  /// Labelled proteins take their label, others component 0; phi = 1,
  /// pi uniform, eps at the Beta prior mean.
  static MixtureState initial(const MixtureData &data, std::vector<GpHypers> hypers,
                              const OutlierModel &om);
};

struct SweepWarnings {
  int forced_outliers = 0; ///< every component density was -inf
  int kept_flags = 0;      ///< both inlier and outlier densities were -inf
};

/// Collapsed prior weight (n_{-i,k} + alpha/K) / (N - 1 + alpha).
double indicator_prior_weight(int n_minus_ik, int n, int k, double alpha);

/// Sufficient statistics for each component over phi = 1 members.
std::vector<gp::ComponentStats> component_stats(const MixtureState &state,
                                                const MixtureData &data);

/// Draws mu_k from each component's GP posterior (sampled_function mode).
void draw_component_functions(MixtureState &state, const MixtureData &data, Rng &rng);

/// N x K log F(x_i | theta_k) under the sampled functions.
Eigen::MatrixXd component_loglik(const MixtureState &state, const MixtureData &data);

/// Resamples z for unlabelled proteins. Rows of alloc_probs (N x K) receive the
/// allocation probabilities used; labelled rows are one-hot.
///
/// sampled_function: p_ik ~ pi_k N(x_i; mu_k, sigma_k^2 I), all proteins at once.
/// marginalised:     p_ik ~ (n_{-i,k} + alpha/K) * predictive density given the
///                   current members minus i, proteins in turn.
/// Proteins flagged as outliers carry no likelihood information about z and are
/// drawn from the prior weights.
void sample_indicators(MixtureState &state, const MixtureData &data, AllocationMode mode,
                       const DirichletConfig &dir, Rng &rng, Eigen::MatrixXd &alloc_probs,
                       SweepWarnings &warnings);

/// Dir(alpha/K + n_1, ..., alpha/K + n_K) with counts over phi = 1 proteins.
Eigen::VectorXd sample_mixing_proportions(const std::vector<int> &z,
                                          const std::vector<std::uint8_t> &phi, int k,
                                          const DirichletConfig &dir, Rng &rng);

/// Standard multivariate Student-t log density with (kappa, location, scale).
double outlier_logdensity(const Eigen::Ref<const Eigen::VectorXd> &x, const OutlierModel &om);

/// Multivariate-t density with the scale factorised once.
class OutlierDensity {
public:
  explicit OutlierDensity(const OutlierModel &om);
  double log_density(const Eigen::Ref<const Eigen::VectorXd> &x) const;

private:
  double kappa_;
  Eigen::VectorXd location_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_norm_ = 0.0;
};

/// phi_i ~ Bernoulli with odds (1 - eps) F(x_i | theta_{z_i}) : eps G(x_i) for
/// unlabelled proteins. inlier_loglik[i] is log F(x_i | theta_{z_i}).
/// outlier_probs[i] receives P(phi_i = 0).
void sample_outlier_flags(MixtureState &state, const MixtureData &data,
                          const Eigen::VectorXd &inlier_loglik, const OutlierDensity &outlier,
                          Rng &rng, Eigen::VectorXd &outlier_probs, SweepWarnings &warnings);

/// log F(x_i | theta_{z_i}) for every protein under the current mode.
Eigen::VectorXd assigned_loglik(const MixtureState &state, const MixtureData &data,
                                AllocationMode mode);

/// eps ~ Beta(u + #{phi = 0}, v + #{phi = 1}) over unlabelled proteins.
double sample_epsilon(const std::vector<std::uint8_t> &phi, const std::vector<int> &labels,
                      const OutlierModel &om, Rng &rng);

} // namespace gpmix::mixture
