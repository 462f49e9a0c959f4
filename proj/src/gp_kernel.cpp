#include "gpmix/gp_kernel.hpp"

#include <cmath>
#include <sstream>

#include "gpmix/error.hpp"

namespace gpmix::gp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

std::string describe(const GpHypers &h) {
  std::ostringstream os;
  os << "theta=(" << h.theta1 << ", " << h.theta2 << ", " << h.theta3 << ")";
  return os.str();
}

void check_hypers(const GpHypers &h) {
  if (!h.finite())
    throw NumericalError("non-finite GP hyperparameters " + describe(h));
}

// Sums of W along each diagonal offset, both sides, so that
// sum_ij W_ij T_ij = diag_sums . t for a symmetric Toeplitz T with first row t.
Eigen::VectorXd diagonal_sums(const Eigen::MatrixXd &w) {
  const Eigen::Index d = w.rows();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      out[std::abs(i - j)] += w(i, j);
  return out;
}

Eigen::VectorXd toeplitz_times(const Eigen::VectorXd &row, const Eigen::VectorXd &v) {
  const Eigen::Index d = row.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      out[i] += row[std::abs(i - j)] * v[j];
  return out;
}

linalg::StructuredInverse structured_inverse(const ComponentStats &data, const GpHypers &h) {
  check_hypers(h);
  const FractionGrid grid(static_cast<int>(data.fractions()));
  try {
    return linalg::trench_inverse(marginal_covariance(grid, h, data.n));
  } catch (const NotPositiveDefinite &e) {
    throw NotPositiveDefinite(std::string(e.what()) + " at " + describe(h));
  }
}

} // namespace

double GpHypers::length_scale() const { return std::exp(theta1); }
double GpHypers::amplitude2() const { return std::exp(2.0 * theta2); }
double GpHypers::noise_var() const { return std::exp(2.0 * theta3); }
bool GpHypers::finite() const {
  return std::isfinite(theta1) && std::isfinite(theta2) && std::isfinite(theta3);
}

FractionGrid::FractionGrid(int fractions) : d(fractions) {
  if (fractions < 1)
    throw ValidationError("FractionGrid: need at least one fraction");
}

Eigen::VectorXd FractionGrid::points() const {
  return Eigen::VectorXd::LinSpaced(d, 1.0, static_cast<double>(d));
}

ComponentStats::ComponentStats(Eigen::Index fractions)
    : row_sums(Eigen::VectorXd::Zero(fractions)) {}

ComponentStats ComponentStats::from_columns(const Eigen::MatrixXd &x) {
  ComponentStats s(x.rows());
  s.n = static_cast<int>(x.cols());
  s.row_sums = x.rowwise().sum();
  s.frob_sq = x.squaredNorm();
  return s;
}

void ComponentStats::add(const Eigen::Ref<const Eigen::VectorXd> &profile) {
  ++n;
  row_sums += profile;
  frob_sq += profile.squaredNorm();
}

void ComponentStats::remove(const Eigen::Ref<const Eigen::VectorXd> &profile) {
  if (n <= 0)
    throw ValidationError("ComponentStats::remove on an empty component");
  --n;
  row_sums -= profile;
  frob_sq -= profile.squaredNorm();
  if (n == 0) {
    row_sums.setZero();
    frob_sq = 0.0;
  }
}

linalg::ToeplitzSpec kernel_toeplitz(const FractionGrid &grid, const GpHypers &h) {
  const double a2 = h.amplitude2();
  const double l = h.length_scale();
  linalg::ToeplitzSpec out;
  out.first_row.resize(grid.d);
  for (int lag = 0; lag < grid.d; ++lag)
    out.first_row[lag] = a2 * std::exp(-static_cast<double>(lag * lag) / l);
  return out;
}

linalg::StructuredCovariance marginal_covariance(const FractionGrid &grid, const GpHypers &h,
                                                 int n) {
  return {kernel_toeplitz(grid, h), h.noise_var(), n};
}

double log_marginal(const ComponentStats &data, const GpHypers &h) {
  if (data.n < 1)
    throw ValidationError("log_marginal: component has no members");
  const linalg::StructuredInverse inv = structured_inverse(data, h);
  const double qf = linalg::quadratic_form(inv, data.row_sums, data.frob_sq);
  const double nd = static_cast<double>(data.n) * static_cast<double>(data.fractions());
  return -0.5 * qf - 0.5 * inv.log_det - 0.5 * nd * kLog2Pi;
}

double log_marginal(const Eigen::MatrixXd &x, const GpHypers &h) {
  return log_marginal(ComponentStats::from_columns(x), h);
}

ValueAndGradient log_marginal_and_grad(const ComponentStats &data, const GpHypers &h) {
  if (data.n < 1)
    throw ValidationError("log_marginal_and_grad: component has no members");
  const Eigen::Index d = data.fractions();
  const double n = static_cast<double>(data.n);
  const double s2 = h.noise_var();
  const double l = h.length_scale();

  const linalg::StructuredInverse inv = structured_inverse(data, h);
  const Eigen::VectorXd &y = data.row_sums;
  const Eigen::MatrixXd w = Eigen::MatrixXd::Identity(d, d) - inv.z;
  const Eigen::VectorXd wy = w * y;
  const Eigen::VectorXd zy = y - wy;
  const double ywy = y.dot(wy);

  ValueAndGradient out;
  const double qf = data.frob_sq / s2 - ywy / (n * s2);
  out.value = -0.5 * qf - 0.5 * inv.log_det - 0.5 * n * static_cast<double>(d) * kLog2Pi;

  // Kernel derivatives as Toeplitz first rows.
  const linalg::ToeplitzSpec a = kernel_toeplitz(FractionGrid(static_cast<int>(d)), h);
  Eigen::VectorXd da1(d);
  for (Eigen::Index lag = 0; lag < d; ++lag)
    da1[lag] = a.first_row[lag] * static_cast<double>(lag * lag) / l;
  const Eigen::VectorXd da2 = 2.0 * a.first_row;

  // Sum over members of C^{-1} x_j equals Z Y / sigma^2.
  const Eigen::VectorXd s = zy / s2;
  const Eigen::VectorXd wdiag = diagonal_sums(w);
  const double dd = static_cast<double>(d);

  auto kernel_term = [&](const Eigen::VectorXd &da) {
    const double fit = 0.5 * s.dot(toeplitz_times(da, s));
    const double trace = (n / s2) * (dd * da[0] - wdiag.dot(da));
    return fit - 0.5 * trace;
  };
  out.gradient[0] = kernel_term(da1);
  out.gradient[1] = kernel_term(da2);

  // d C / d theta3 = 2 sigma^2 I.
  const double alpha_sq = (data.frob_sq - 2.0 * ywy / n + wy.squaredNorm() / n) / (s2 * s2);
  out.gradient[2] = s2 * alpha_sq - (n * dd - w.trace());
  return out;
}

Eigen::Vector3d grad_log_marginal(const ComponentStats &data, const GpHypers &h) {
  return log_marginal_and_grad(data, h).gradient;
}

Eigen::Vector3d grad_log_marginal(const Eigen::MatrixXd &x, const GpHypers &h) {
  return grad_log_marginal(ComponentStats::from_columns(x), h);
}

GpPosterior posterior(const ComponentStats &data, const GpHypers &h, const FractionGrid &grid) {
  if (data.fractions() != grid.d)
    throw ValidationError("posterior: data and grid disagree on D");
  check_hypers(h);
  const Eigen::MatrixXd a = kernel_toeplitz(grid, h).dense();
  const double s2 = h.noise_var();
  GpPosterior out;
  if (data.n == 0) {
    out.mean = Eigen::VectorXd::Zero(grid.d);
    out.cov = a;
  } else {
    // cov = A - A (sum of C^{-1} blocks) A = A Z, mean = A Z Y / sigma^2.
    const linalg::StructuredInverse inv = structured_inverse(data, h);
    const Eigen::MatrixXd az = a * inv.z;
    out.cov = 0.5 * (az + az.transpose());
    out.mean = az * data.row_sums / s2;
  }
  out.pred_cov = out.cov;
  out.pred_cov.diagonal().array() += s2;
  return out;
}

Eigen::VectorXd sample_posterior_function(const GpPosterior &post, Rng &rng) {
  const Eigen::Index d = post.mean.size();
  const Eigen::VectorXd eps = standard_normal_vector(rng, d);
  if (post.cov.isZero(0.0))
    return post.mean;
  Eigen::LLT<Eigen::MatrixXd> llt(post.cov);
  if (llt.info() != Eigen::Success) {
    Eigen::MatrixXd jittered = post.cov;
    jittered.diagonal().array() += 1e-10;
    llt.compute(jittered);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite("sample_posterior_function: posterior covariance not PSD");
  }
  return post.mean + llt.matrixL() * eps;
}

double profile_loglik_given_function(const Eigen::Ref<const Eigen::VectorXd> &x,
                                     const Eigen::Ref<const Eigen::VectorXd> &mu, double sigma2) {
  if (x.size() != mu.size())
    throw ValidationError("profile_loglik_given_function: length mismatch");
  const double d = static_cast<double>(x.size());
  return -0.5 * (x - mu).squaredNorm() / sigma2 - 0.5 * d * (kLog2Pi + std::log(sigma2));
}

PredictiveDensity::PredictiveDensity(const GpPosterior &post)
    : mean_(post.mean), llt_(post.pred_cov) {
  if (llt_.info() != Eigen::Success)
    throw NotPositiveDefinite("PredictiveDensity: predictive covariance not positive definite");
  const Eigen::MatrixXd l = llt_.matrixL();
  log_norm_ = -l.diagonal().array().log().sum() - 0.5 * static_cast<double>(mean_.size()) * kLog2Pi;
}

double PredictiveDensity::log_density(const Eigen::Ref<const Eigen::VectorXd> &x) const {
  const Eigen::VectorXd r = llt_.matrixL().solve(x - mean_);
  return log_norm_ - 0.5 * r.squaredNorm();
}

} // namespace gpmix::gp
