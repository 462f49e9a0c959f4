#include "gpmix/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gpmix {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double standard_normal(Rng &rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

double uniform01(Rng &rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

Eigen::VectorXd standard_normal_vector(Rng &rng, Eigen::Index n) {
  Eigen::VectorXd v(n);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i)
    v[i] = dist(rng);
  return v;
}

double gamma_draw(Rng &rng, double shape) {
  std::gamma_distribution<double> dist(shape, 1.0);
  return dist(rng);
}

double beta_draw(Rng &rng, double a, double b) {
  const double x = gamma_draw(rng, a);
  const double y = gamma_draw(rng, b);
  if (x + y <= 0.0)
    return a >= b ? 1.0 : 0.0;
  return x / (x + y);
}

Eigen::VectorXd dirichlet_draw(Rng &rng, std::span<const double> alpha) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(alpha.size()));
  double total = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    out[static_cast<Eigen::Index>(k)] = gamma_draw(rng, alpha[k]);
    total += out[static_cast<Eigen::Index>(k)];
  }
  if (total <= 0.0) {
    // Every gamma underflowed (tiny shapes); put the mass on the largest shape.
    out.setZero();
    const auto it = std::max_element(alpha.begin(), alpha.end());
    out[it - alpha.begin()] = 1.0;
    return out;
  }
  return out / total;
}

bool normalise_log_weights(std::span<double> log_w) {
  double max_w = -std::numeric_limits<double>::infinity();
  for (double w : log_w)
    if (w > max_w)
      max_w = w;
  if (!std::isfinite(max_w))
    return false;
  double total = 0.0;
  for (double &w : log_w) {
    w = std::exp(w - max_w);
    total += w;
  }
  for (double &w : log_w)
    w /= total;
  return true;
}

int categorical_draw(Rng &rng, std::span<const double> probs) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc)
      return static_cast<int>(k);
  }
  // Round-off: fall back to the last category with positive mass.
  for (std::size_t k = probs.size(); k-- > 0;)
    if (probs[k] > 0.0)
      return static_cast<int>(k);
  return 0;
}

} // namespace gpmix
