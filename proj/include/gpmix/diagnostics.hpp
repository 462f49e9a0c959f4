#pragma once

#include <span>
#include <vector>

namespace gpmix::diag {

/// -sum p log p with natural log and 0 log 0 = 0.
double shannon_entropy(std::span<const double> p);

struct Rhat {
  double point = 0.0;
  double upper95 = 0.0;
  bool defined = false; ///< false when the within-chain variance is zero
};

/// Split potential scale reduction factor: each chain is halved, then the
/// Brooks-Gelman corrected estimate and its upper 95% limit are computed over
/// the 2m half-chains. Needs >= 2 equal-length traces of length >= 10.
Rhat gelman_rubin(const std::vector<std::vector<double>> &chains);

struct Ess {
  double ess = 0.0;
  double per_second = 0.0;
};

/// Geyer initial positive (monotone) sequence estimator. Length >= 100.
Ess effective_sample_size(std::span<const double> trace, double wall_seconds);

/// Linear-interpolation quantile (R type 7).
double quantile(std::vector<double> values, double prob);

} // namespace gpmix::diag
