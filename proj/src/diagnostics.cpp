#include "gpmix/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>

#include "gpmix/error.hpp"

namespace gpmix::diag {

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double var_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v)
    s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double cov_of(std::span<const double> a, std::span<const double> b) {
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(a.size() - 1);
}

double f_quantile(double p, double df1, double df2) {
  if (!std::isfinite(df2) || df2 > 1e12) {
    boost::math::chi_squared chi(df1);
    return boost::math::quantile(chi, p) / df1;
  }
  boost::math::fisher_f f(df1, df2);
  return boost::math::quantile(f, p);
}

} // namespace

double shannon_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0)
      h -= v * std::log(v);
  return h;
}

Rhat gelman_rubin(const std::vector<std::vector<double>> &chains) {
  if (chains.size() < 2)
    throw ValidationError("gelman_rubin: need at least two chains");
  const std::size_t len = chains.front().size();
  for (const auto &c : chains)
    if (c.size() != len)
      throw ValidationError("gelman_rubin: traces must have equal length");
  if (len < 10)
    throw ValidationError("gelman_rubin: traces must have length >= 10");

  // Split each chain; an odd middle draw is dropped.
  const std::size_t half = len / 2;
  std::vector<std::span<const double>> parts;
  for (const auto &c : chains) {
    parts.emplace_back(c.data(), half);
    parts.emplace_back(c.data() + (len - half), half);
  }
  const double m = static_cast<double>(parts.size());
  const double n = static_cast<double>(half);

  std::vector<double> xbar;
  std::vector<double> s2;
  for (const auto &p : parts) {
    xbar.push_back(mean_of(p));
    s2.push_back(var_of(p));
  }
  const double w = mean_of(s2);
  Rhat out;
  if (!(w > 0.0))
    return out;

  const double b = n * var_of(xbar);
  const double muhat = mean_of(xbar);
  std::vector<double> xbar_sq(xbar.size());
  for (std::size_t i = 0; i < xbar.size(); ++i)
    xbar_sq[i] = xbar[i] * xbar[i];

  const double var_w = var_of(s2) / m;
  const double var_b = 2.0 * b * b / (m - 1.0);
  const double cov_wb = (n / m) * (cov_of(s2, xbar_sq) - 2.0 * muhat * cov_of(s2, xbar));
  const double v = (n - 1.0) / n * w + (1.0 + 1.0 / m) * b / n;
  const double var_v = ((n - 1.0) * (n - 1.0) * var_w + (1.0 + 1.0 / m) * (1.0 + 1.0 / m) * var_b +
                        2.0 * (n - 1.0) * (1.0 + 1.0 / m) * cov_wb) /
                       (n * n);
  const double df_v = var_v > 0.0 ? 2.0 * v * v / var_v : std::numeric_limits<double>::infinity();
  const double df_adj = std::isfinite(df_v) ? (df_v + 3.0) / (df_v + 1.0) : 1.0;
  const double b_df = m - 1.0;
  const double w_df = var_w > 0.0 ? 2.0 * w * w / var_w : std::numeric_limits<double>::infinity();

  const double r2_fixed = (n - 1.0) / n;
  const double r2_random = (1.0 + 1.0 / m) * (1.0 / n) * (b / w);
  out.point = std::sqrt(df_adj * (r2_fixed + r2_random));
  out.upper95 = std::sqrt(df_adj * (r2_fixed + f_quantile(0.975, b_df, w_df) * r2_random));
  out.defined = true;
  return out;
}

Ess effective_sample_size(std::span<const double> trace, double wall_seconds) {
  const std::size_t n = trace.size();
  if (n < 100)
    throw ValidationError("effective_sample_size: trace must have length >= 100");
  const double mu = mean_of(trace);
  std::vector<double> centred(n);
  for (std::size_t i = 0; i < n; ++i)
    centred[i] = trace[i] - mu;

  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i)
      s += centred[i] * centred[i + lag];
    return s / static_cast<double>(n);
  };

  Ess out;
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) {
    out.ess = 1.0;
  } else {
    double tau = -1.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
      double pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
      if (!(pair > 0.0))
        break;
      pair = std::min(pair, prev_pair);
      prev_pair = pair;
      tau += 2.0 * pair;
    }
    tau = std::max(tau, 1.0 / std::log10(static_cast<double>(n)));
    out.ess = static_cast<double>(n) / tau;
  }
  out.per_second = wall_seconds > 0.0 ? out.ess / wall_seconds : 0.0;
  return out;
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty())
    throw ValidationError("quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

} // namespace gpmix::diag
