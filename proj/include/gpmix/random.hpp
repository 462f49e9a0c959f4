#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace gpmix {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; used to derive independent child seeds from a master
/// seed so that chains and CV splits never share a stream.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng{mix_seed(seed, stream)};
}

double standard_normal(Rng &rng);
double uniform01(Rng &rng);
Eigen::VectorXd standard_normal_vector(Rng &rng, Eigen::Index n);

double gamma_draw(Rng &rng, double shape);
double beta_draw(Rng &rng, double a, double b);
Eigen::VectorXd dirichlet_draw(Rng &rng, std::span<const double> alpha);

/// Normalises unnormalised log-weights in place into probabilities. Returns
/// false when every weight is -inf or NaN (probabilities left untouched).
bool normalise_log_weights(std::span<double> log_w);

/// Index drawn from a probability vector (assumed normalised).
int categorical_draw(Rng &rng, std::span<const double> probs);

} // namespace gpmix
