#include "gpmix/struct_linalg.hpp"

#include <cmath>
#include <sstream>

#include "gpmix/error.hpp"

namespace gpmix::linalg {

Eigen::MatrixXd ToeplitzSpec::dense() const {
  const Eigen::Index d = size();
  Eigen::MatrixXd out(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      out(i, j) = first_row[std::abs(i - j)];
  return out;
}

Eigen::MatrixXd StructuredCovariance::apply(const Eigen::MatrixXd &x) const {
  if (x.rows() != block_size() || x.cols() != n)
    throw ValidationError("StructuredCovariance::apply: dimension mismatch");
  const Eigen::VectorXd ay = a.dense() * row_sums(x);
  Eigen::MatrixXd out = sigma2 * x;
  out.colwise() += ay;
  return out;
}

Eigen::MatrixXd StructuredCovariance::dense() const {
  const Eigen::Index d = block_size();
  const Eigen::MatrixXd a_dense = a.dense();
  Eigen::MatrixXd out(dim(), dim());
  for (int bi = 0; bi < n; ++bi)
    for (int bj = 0; bj < n; ++bj)
      out.block(bi * d, bj * d, d, d) = a_dense;
  out.diagonal().array() += sigma2;
  return out;
}

Eigen::MatrixXd StructuredInverse::apply(const Eigen::MatrixXd &x) const {
  if (x.rows() != block_size() || x.cols() != n)
    throw ValidationError("StructuredInverse::apply: dimension mismatch");
  const Eigen::VectorXd y = row_sums(x);
  const Eigen::VectorXd wy = y - z * y; // (I - Z) Y
  Eigen::MatrixXd out = x / sigma2;
  out.colwise() -= wy / (n * sigma2);
  return out;
}

Eigen::MatrixXd StructuredInverse::implied_dense() const {
  const Eigen::Index d = block_size();
  const Eigen::MatrixXd w =
      (Eigen::MatrixXd::Identity(d, d) - z) / (static_cast<double>(n) * sigma2);
  Eigen::MatrixXd out(n * d, n * d);
  for (int bi = 0; bi < n; ++bi)
    for (int bj = 0; bj < n; ++bj)
      out.block(bi * d, bj * d, d, d) = -w;
  out.diagonal().array() += 1.0 / sigma2;
  return out;
}

DurbinResult durbin(std::span<const double> xi) {
  const std::size_t m = xi.size();
  DurbinResult res;
  res.z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  if (m == 0)
    return res;

  Eigen::VectorXd &z = res.z;
  Eigen::VectorXd prev(static_cast<Eigen::Index>(m));
  double alpha = -xi[0];
  double beta = 1.0;
  z[0] = alpha;

  auto shrink_beta = [&](std::size_t step) {
    beta *= (1.0 - alpha * alpha);
    if (!(beta > 0.0)) {
      std::ostringstream msg;
      msg << "durbin: matrix not positive definite (beta=" << beta << " at order "
          << step + 1 << ")";
      throw NotPositiveDefinite(msg.str());
    }
    res.log_beta_sum += std::log(beta);
  };

  for (std::size_t i = 1; i < m; ++i) {
    shrink_beta(i);
    double s = xi[i];
    for (std::size_t j = 0; j < i; ++j)
      s += xi[i - 1 - j] * z[static_cast<Eigen::Index>(j)];
    alpha = -s / beta;
    prev.head(static_cast<Eigen::Index>(i)) = z.head(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < i; ++j)
      z[static_cast<Eigen::Index>(j)] += alpha * prev[static_cast<Eigen::Index>(i - 1 - j)];
    z[static_cast<Eigen::Index>(i)] = alpha;
  }
  shrink_beta(m);
  return res;
}

VectorInverseResult vector_inverse(std::span<const double> q) {
  if (q.empty())
    throw ValidationError("vector_inverse: empty first row");
  const double q0 = q[0];
  if (!(q0 > 0.0)) {
    std::ostringstream msg;
    msg << "vector_inverse: leading entry q[0]=" << q0 << " must be positive";
    throw NotPositiveDefinite(msg.str());
  }
  const auto d = static_cast<Eigen::Index>(q.size());
  Eigen::VectorXd xi(d - 1);
  for (Eigen::Index i = 1; i < d; ++i)
    xi[i - 1] = q[static_cast<std::size_t>(i)] / q0;

  const DurbinResult dr = durbin(std::span<const double>(xi.data(), static_cast<std::size_t>(d - 1)));

  VectorInverseResult out;
  out.log_det = dr.log_beta_sum + static_cast<double>(d) * std::log(q0);
  out.v.resize(d);
  const double last = 1.0 / ((1.0 + xi.dot(dr.z)) * q0);
  out.v[d - 1] = last;
  for (Eigen::Index i = 0; i < d - 1; ++i)
    out.v[i] = last * dr.z[d - 2 - i];
  return out;
}

Eigen::MatrixXd toeplitz_inverse(std::span<const double> q, double *log_det) {
  const VectorInverseResult vi = vector_inverse(q);
  const Eigen::Index d = vi.v.size();
  Eigen::MatrixXd zb(d, d);

  // 1-based accessors keep the fill-in recurrence readable.
  auto v = [&](Eigen::Index i) { return vi.v[i - 1]; };
  auto at = [&](Eigen::Index i, Eigen::Index j) -> double & { return zb(i - 1, j - 1); };

  for (Eigen::Index j = 1; j <= d; ++j) {
    at(1, j) = v(d + 1 - j);
    at(j, 1) = v(d + 1 - j);
    at(d, j) = v(j);
    at(j, d) = v(j);
  }
  const double vd = v(d);
  for (Eigen::Index i = 2; i <= (d - 1) / 2 + 1; ++i) {
    for (Eigen::Index j = i; j <= d - i + 1; ++j) {
      const double val =
          at(i - 1, j - 1) + (v(d + 1 - j) * v(d + 1 - i) - v(i - 1) * v(j - 1)) / vd;
      at(i, j) = val;
      at(j, i) = val;
      at(d - i + 1, d - j + 1) = val;
      at(d - j + 1, d - i + 1) = val;
    }
  }
  if (log_det)
    *log_det = vi.log_det;
  return zb;
}

StructuredInverse trench_inverse(const StructuredCovariance &cov) {
  const Eigen::Index d = cov.block_size();
  if (d < 1 || cov.n < 1)
    throw ValidationError("trench_inverse: need D >= 1 and n >= 1");
  if (!(cov.sigma2 > 0.0) || !std::isfinite(cov.sigma2))
    throw NotPositiveDefinite("trench_inverse: sigma^2 must be positive and finite");

  const double scale = static_cast<double>(cov.n) / cov.sigma2;
  Eigen::VectorXd q = scale * cov.a.first_row;
  q[0] += 1.0;

  StructuredInverse out;
  out.sigma2 = cov.sigma2;
  out.n = cov.n;
  double log_det_q = 0.0;
  try {
    out.z = toeplitz_inverse(std::span<const double>(q.data(), static_cast<std::size_t>(d)),
                             &log_det_q);
  } catch (const NotPositiveDefinite &e) {
    std::ostringstream msg;
    msg << e.what() << "; Q = I + n/sigma^2 A with sigma^2=" << cov.sigma2 << ", n=" << cov.n
        << ", A(0,0)=" << cov.a.first_row[0];
    throw NotPositiveDefinite(msg.str());
  }
  out.log_det = static_cast<double>(cov.n * d) * std::log(cov.sigma2) + log_det_q;
  return out;
}

Eigen::VectorXd row_sums(const Eigen::MatrixXd &x) { return x.rowwise().sum(); }

double quadratic_form(const StructuredInverse &inv, const Eigen::VectorXd &y,
                      double frobenius_sq) {
  if (y.size() != inv.block_size())
    throw ValidationError("quadratic_form: row-sum length does not match D");
  const double ywy = y.squaredNorm() - y.dot(inv.z * y);
  return frobenius_sq / inv.sigma2 - ywy / (static_cast<double>(inv.n) * inv.sigma2);
}

double quadratic_form(const StructuredInverse &inv, const Eigen::MatrixXd &x) {
  if (x.rows() != inv.block_size() || x.cols() != inv.n)
    throw ValidationError("quadratic_form: X must be D x n matching the inverse");
  return quadratic_form(inv, row_sums(x), x.squaredNorm());
}

DenseInverse dense_oracle(const StructuredCovariance &cov) {
  if (cov.dim() > kDenseGuard) {
    std::ostringstream msg;
    msg << "dense_oracle: nD=" << cov.dim() << " exceeds the dense size guard " << kDenseGuard;
    throw ValidationError(msg.str());
  }
  const Eigen::MatrixXd c = cov.dense();
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("dense_oracle: covariance not positive definite");
  DenseInverse out;
  out.inverse = llt.solve(Eigen::MatrixXd::Identity(c.rows(), c.cols()));
  const Eigen::MatrixXd l = llt.matrixL();
  out.log_det = 2.0 * l.diagonal().array().log().sum();
  return out;
}

} // namespace gpmix::linalg
