#pragma once

// Tiny mixture whose allocation posterior can be enumerated: two components,
// one marker each, three unlabelled proteins in two fractions.

#include <array>
#include <cmath>
#include <vector>

#include "gpmix/mixture_model.hpp"
#include "oracles.hpp"

namespace enumeration {

inline gpmix::mixture::MixtureData tiny_data() {
  gpmix::mixture::MixtureData data;
  data.components = 2;
  data.profiles.resize(5, 2);
  data.profiles << 0.0, 0.2,  // marker, component 0
      0.5, 0.6,               // marker, component 1
      0.15, 0.3,              // near component 0
      0.3, 0.45,              // in between
      0.45, 0.5;              // near component 1
  data.labels = {0, 1, -1, -1, -1};
  return data;
}

inline std::vector<gpmix::gp::GpHypers> tiny_hypers() {
  return {{0.0, -1.0, -1.5}, {0.3, -1.2, -1.7}};
}

/// Index of an allocation of the unlabelled proteins as a 3-bit number.
inline int code(const std::vector<int> &z) { return z[2] + 2 * z[3] + 4 * z[4]; }

/// Exact p(z | X): Dirichlet-multinomial prior with alpha/K per component
/// times each component's dense GP marginal likelihood.
inline std::array<double, 8> exact_posterior(double alpha) {
  const auto data = tiny_data();
  const auto hypers = tiny_hypers();
  std::vector<double> logp(8);
  for (int c = 0; c < 8; ++c) {
    std::vector<int> z = {0, 1, c & 1, (c >> 1) & 1, (c >> 2) & 1};
    double lp = 0.0;
    for (int k = 0; k < 2; ++k) {
      std::vector<int> members;
      for (int i = 0; i < 5; ++i)
        if (z[static_cast<std::size_t>(i)] == k)
          members.push_back(i);
      const auto nk = static_cast<double>(members.size());
      lp += std::lgamma(nk + alpha / 2.0) - std::lgamma(alpha / 2.0);
      Eigen::MatrixXd x(2, static_cast<Eigen::Index>(members.size()));
      for (std::size_t j = 0; j < members.size(); ++j)
        x.col(static_cast<Eigen::Index>(j)) = data.profiles.row(members[j]).transpose();
      const auto &h = hypers[static_cast<std::size_t>(k)];
      lp += oracle::gp_log_marginal(x, h.length_scale(), h.amplitude2(), h.noise_var());
    }
    logp[static_cast<std::size_t>(c)] = lp;
  }
  const double norm = oracle::log_sum_exp(logp);
  std::array<double, 8> p{};
  for (std::size_t c = 0; c < 8; ++c)
    p[c] = std::exp(logp[c] - norm);
  return p;
}

/// Gibbs frequencies of each allocation over `sweeps` sweeps.
inline std::array<double, 8> gibbs_frequencies(gpmix::mixture::AllocationMode mode, int sweeps,
                                               std::uint64_t seed, double alpha = 1.0) {
  using namespace gpmix;
  using namespace gpmix::mixture;
  const auto data = tiny_data();
  const auto om = OutlierModel::from_profiles(data.profiles);
  MixtureState state = MixtureState::initial(data, tiny_hypers(), om);
  const DirichletConfig dir{alpha};
  Rng rng = make_rng(seed);
  Eigen::MatrixXd probs;
  SweepWarnings warn;
  std::array<double, 8> counts{};
  const int burn = 1000;
  for (int t = 0; t < sweeps + burn; ++t) {
    if (mode == AllocationMode::sampled_function) {
      draw_component_functions(state, data, rng);
      sample_indicators(state, data, mode, dir, rng, probs, warn);
      state.pi = sample_mixing_proportions(state.z, state.phi, 2, dir, rng);
    } else {
      sample_indicators(state, data, mode, dir, rng, probs, warn);
    }
    if (t >= burn)
      counts[static_cast<std::size_t>(code(state.z))] += 1.0;
  }
  for (double &c : counts)
    c /= sweeps;
  return counts;
}

inline double total_variation(const std::array<double, 8> &a, const std::array<double, 8> &b) {
  double tv = 0.0;
  for (std::size_t c = 0; c < 8; ++c)
    tv += std::abs(a[c] - b[c]);
  return 0.5 * tv;
}

} // namespace enumeration
