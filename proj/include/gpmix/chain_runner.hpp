#pragma once

// Hamiltonian-within-Gibbs driver. One iteration:
//   1. draw mu_k from each GP posterior (sampled_function mode only)
//   2. resample indicators z
//   3. resample outlier flags phi, then eps
//   4. resample mixing weights pi (sampled_function mode only)
//   5. every T iterations refresh theta_k by HMC or MH (nothing for fixed-EB)

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpmix/hyper_infer.hpp"
#include "gpmix/mixture_model.hpp"

namespace gpmix::chain {

using gp::GpHypers;
using mixture::AllocationMode;
using mixture::MixtureData;

enum class HyperSampler { hmc, mh, fixed_eb };

struct RunConfig {
  int iterations = 20000;
  int burnin = 10000;
  int thin = 5;
  int hyper_every = 1;
  HyperSampler sampler = HyperSampler::hmc;
  int chains = 2;
  std::uint64_t seed = 1;
  AllocationMode mode = AllocationMode::sampled_function;
  bool outlier_component = true;
  /// Hyperparameter updates use labelled and allocated unlabelled members
  /// (true) or labelled markers only (false).
  bool semi_supervised_hypers = true;
  double mh_proposal_sd = 1.0;
  hyper::HmcConfig hmc;
  /// Keep per-iteration allocation matrices in the record.
  bool keep_allocations = true;

  void validate() const;
  int retained() const;
};

struct Priors {
  hyper::HyperPrior hyper;
  mixture::DirichletConfig dirichlet;
  double outlier_u = 2.0;
  double outlier_v = 10.0;
  double kappa = 4.0;
};

struct ChainRecord {
  std::vector<int> iteration;
  std::vector<std::vector<int>> z;
  std::vector<std::vector<std::uint8_t>> phi;
  std::vector<Eigen::VectorXd> pi;
  std::vector<double> eps;
  std::vector<std::vector<GpHypers>> theta;
  std::vector<Eigen::MatrixXd> alloc;        ///< N x K per retained iteration
  std::vector<Eigen::VectorXd> outlier_prob; ///< P(phi_i = 0) per retained iteration
  std::vector<double> wall_seconds;          ///< elapsed time at each retained iteration

  /// Running sums over retained iterations (filled even without keep_allocations).
  Eigen::MatrixXd alloc_sum;
  Eigen::VectorXd outlier_sum;
  Eigen::VectorXd entropy_sum;
  int retained = 0;

  std::vector<GpHypers> initial_hypers;
  std::vector<int> hyper_proposals;
  std::vector<int> hyper_accepts;
  mixture::SweepWarnings warnings;
  double total_seconds = 0.0;

  std::size_t size() const { return iteration.size(); }
};

/// EB hyperparameters for each component fitted on its labelled markers.
std::vector<GpHypers> fit_marker_hypers(const MixtureData &data);

/// Runs one chain. The stream is derived from (config.seed, chain_index).
/// initial_hypers, when given, replaces the marker EB fit used as the start.
ChainRecord run_chain(const MixtureData &data, const RunConfig &config, const Priors &priors,
                      std::uint64_t chain_index = 0,
                      const std::vector<GpHypers> *initial_hypers = nullptr);

/// Runs config.chains independent chains, in parallel when possible. All
/// chains start from the same marker EB fit (computed when not given).
std::vector<ChainRecord> run_chains(const MixtureData &data, const RunConfig &config,
                                    const Priors &priors,
                                    const std::vector<GpHypers> *initial_hypers = nullptr);

/// Per-protein Monte Carlo average of the allocation entropy over the record.
Eigen::VectorXd entropy_mc_average(const ChainRecord &record);

struct Interval {
  double mean = 0.0;
  double lower = 0.0; ///< 2.5% quantile
  double upper = 0.0; ///< 97.5% quantile
};

struct ScalarDiagnostics {
  double rhat = 0.0;
  double rhat_upper = 0.0;
  bool rhat_defined = false;
  double ess = 0.0;
  double ess_per_second = 0.0;
  bool ess_defined = false;
};

struct PosteriorSummary {
  Eigen::MatrixXd allocation; ///< N x (K + 1); last column is the outlier probability
  Eigen::VectorXd entropy;
  std::vector<std::array<Interval, 3>> hypers; ///< per component
  Interval eps;
  std::map<std::string, ScalarDiagnostics> diagnostics;
  std::vector<double> hyper_acceptance; ///< per component, pooled over chains
  int retained = 0;
};

/// Monitored scalar names: theta1[k], theta2[k], theta3[k] and eps.
std::vector<std::string> monitored_names(int components);
/// Trace of a monitored scalar in one record.
std::vector<double> monitored_trace(const ChainRecord &record, const std::string &name);

PosteriorSummary summarise(const std::vector<ChainRecord> &records);

} // namespace gpmix::chain
