#include "gpmix/mixture_model.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "gpmix/error.hpp"

namespace gpmix::mixture {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

} // namespace

void MixtureData::validate() const {
  if (components < 1)
    throw ValidationError("MixtureData: need at least one component");
  if (static_cast<Eigen::Index>(labels.size()) != proteins())
    throw ValidationError("MixtureData: label count does not match profile count");
  for (int l : labels)
    if (l != kUnlabelled && (l < 0 || l >= components))
      throw ValidationError("MixtureData: label out of range");
  if (!profiles.allFinite())
    throw ValidationError("MixtureData: profiles contain non-finite values");
}

OutlierModel OutlierModel::from_profiles(const Eigen::MatrixXd &profiles, double kappa,
                                         double beta_u, double beta_v) {
  if (profiles.rows() < 2)
    throw ValidationError("OutlierModel: need at least two profiles");
  OutlierModel om;
  om.kappa = kappa;
  om.beta_u = beta_u;
  om.beta_v = beta_v;
  om.location = profiles.colwise().mean().transpose();
  const Eigen::MatrixXd centred = profiles.rowwise() - om.location.transpose();
  om.scale = 0.5 * (centred.transpose() * centred) / static_cast<double>(profiles.rows() - 1);
  return om;
}

MixtureState MixtureState::initial(const MixtureData &data, std::vector<GpHypers> hypers,
                                   const OutlierModel &om) {
  data.validate();
  if (static_cast<int>(hypers.size()) != data.components)
    throw ValidationError("MixtureState: one hyperparameter set per component required");
  MixtureState s;
  const auto n = static_cast<std::size_t>(data.proteins());
  s.z.assign(n, 0);
  s.phi.assign(n, 1);
  for (std::size_t i = 0; i < n; ++i)
    if (data.labels[i] != kUnlabelled)
      s.z[i] = data.labels[i];
  s.pi = Eigen::VectorXd::Constant(data.components, 1.0 / data.components);
  s.eps = om.beta_u / (om.beta_u + om.beta_v);
  s.hypers = std::move(hypers);
  return s;
}

double indicator_prior_weight(int n_minus_ik, int n, int k, double alpha) {
  return (static_cast<double>(n_minus_ik) + alpha / static_cast<double>(k)) /
         (static_cast<double>(n) - 1.0 + alpha);
}

std::vector<gp::ComponentStats> component_stats(const MixtureState &state,
                                                const MixtureData &data) {
  std::vector<gp::ComponentStats> stats(static_cast<std::size_t>(data.components),
                                        gp::ComponentStats(data.fractions()));
  for (Eigen::Index i = 0; i < data.proteins(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (state.phi[ui])
      stats[static_cast<std::size_t>(state.z[ui])].add(data.profiles.row(i).transpose());
  }
  return stats;
}

void draw_component_functions(MixtureState &state, const MixtureData &data, Rng &rng) {
  const gp::FractionGrid grid(static_cast<int>(data.fractions()));
  const auto stats = component_stats(state, data);
  state.mus.resize(static_cast<std::size_t>(data.components));
  for (int k = 0; k < data.components; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    const gp::GpPosterior post = gp::posterior(stats[uk], state.hypers[uk], grid);
    state.mus[uk] = gp::sample_posterior_function(post, rng);
  }
}

Eigen::MatrixXd component_loglik(const MixtureState &state, const MixtureData &data) {
  const Eigen::Index n = data.proteins();
  const double d = static_cast<double>(data.fractions());
  Eigen::MatrixXd out(n, data.components);
  const Eigen::VectorXd row_sq = data.profiles.rowwise().squaredNorm();
  for (int k = 0; k < data.components; ++k) {
    const auto uk = static_cast<std::size_t>(k);
    const Eigen::VectorXd &mu = state.mus[uk];
    const double s2 = state.hypers[uk].noise_var();
    // ||x_i - mu||^2 for every row at once.
    const Eigen::VectorXd dist =
        row_sq - 2.0 * (data.profiles * mu) + Eigen::VectorXd::Constant(n, mu.squaredNorm());
    out.col(k) = -0.5 * dist.array().max(0.0) / s2 -
                 0.5 * d * (std::log(2.0 * std::numbers::pi) + std::log(s2));
  }
  return out;
}

void sample_indicators(MixtureState &state, const MixtureData &data, AllocationMode mode,
                       const DirichletConfig &dir, Rng &rng, Eigen::MatrixXd &alloc_probs,
                       SweepWarnings &warnings) {
  const Eigen::Index n = data.proteins();
  const int kc = data.components;
  alloc_probs.setZero(n, kc);
  std::vector<double> w(static_cast<std::size_t>(kc));

  if (mode == AllocationMode::sampled_function) {
    if (static_cast<int>(state.mus.size()) != kc)
      throw ValidationError("sample_indicators: component functions have not been drawn");
    const Eigen::MatrixXd ll = component_loglik(state, data);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (data.labelled(i)) {
        alloc_probs(i, state.z[ui]) = 1.0;
        continue;
      }
      for (int k = 0; k < kc; ++k)
        w[static_cast<std::size_t>(k)] = safe_log(state.pi[k]) + ll(i, k);
      if (!normalise_log_weights(w)) {
        ++warnings.forced_outliers;
        state.phi[ui] = 0;
        for (int k = 0; k < kc; ++k)
          w[static_cast<std::size_t>(k)] = state.pi[k];
      }
      for (int k = 0; k < kc; ++k)
        alloc_probs(i, k) = w[static_cast<std::size_t>(k)];
      if (!state.phi[ui]) {
        for (int k = 0; k < kc; ++k)
          w[static_cast<std::size_t>(k)] = state.pi[k];
      }
      state.z[ui] = categorical_draw(rng, w);
    }
    return;
  }

  // Marginalised: sequential collapsed updates on the latest memberships.
  const gp::FractionGrid grid(static_cast<int>(data.fractions()));
  auto stats = component_stats(state, data);
  int members = 0;
  for (auto f : state.phi)
    members += f;
  std::vector<double> prior_w(static_cast<std::size_t>(kc));

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (data.labelled(i)) {
      alloc_probs(i, state.z[ui]) = 1.0;
      continue;
    }
    const auto x = data.profiles.row(i).transpose();
    if (state.phi[ui])
      stats[static_cast<std::size_t>(state.z[ui])].remove(x);
    const int n_eff = members + (state.phi[ui] ? 0 : 1);
    for (int k = 0; k < kc; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      prior_w[uk] = indicator_prior_weight(stats[uk].n, n_eff, kc, dir.alpha);
      double lp = kNegInf;
      try {
        const gp::PredictiveDensity pred(gp::posterior(stats[uk], state.hypers[uk], grid));
        lp = pred.log_density(x);
      } catch (const NumericalError &) {
      }
      w[uk] = safe_log(prior_w[uk]) + lp;
    }
    if (!normalise_log_weights(w)) {
      ++warnings.forced_outliers;
      if (state.phi[ui])
        --members;
      state.phi[ui] = 0;
      w = prior_w;
      double total = 0.0;
      for (double v : w)
        total += v;
      for (double &v : w)
        v /= total;
    }
    for (int k = 0; k < kc; ++k)
      alloc_probs(i, k) = w[static_cast<std::size_t>(k)];
    if (!state.phi[ui]) {
      double total = 0.0;
      for (int k = 0; k < kc; ++k)
        total += prior_w[static_cast<std::size_t>(k)];
      for (int k = 0; k < kc; ++k)
        w[static_cast<std::size_t>(k)] = prior_w[static_cast<std::size_t>(k)] / total;
    }
    state.z[ui] = categorical_draw(rng, w);
    if (state.phi[ui])
      stats[static_cast<std::size_t>(state.z[ui])].add(x);
  }
}

Eigen::VectorXd sample_mixing_proportions(const std::vector<int> &z,
                                          const std::vector<std::uint8_t> &phi, int k,
                                          const DirichletConfig &dir, Rng &rng) {
  if (!(dir.alpha > 0.0))
    throw ValidationError("DirichletConfig: alpha must be positive");
  std::vector<double> shape(static_cast<std::size_t>(k), dir.alpha / static_cast<double>(k));
  for (std::size_t i = 0; i < z.size(); ++i)
    if (phi[i])
      shape[static_cast<std::size_t>(z[i])] += 1.0;
  return dirichlet_draw(rng, shape);
}

OutlierDensity::OutlierDensity(const OutlierModel &om)
    : kappa_(om.kappa), location_(om.location), llt_(om.scale) {
  if (llt_.info() != Eigen::Success)
    throw NotPositiveDefinite("outlier scale matrix is not positive definite");
  const double d = static_cast<double>(location_.size());
  const Eigen::MatrixXd l = llt_.matrixL();
  log_norm_ = std::lgamma(0.5 * (kappa_ + d)) - std::lgamma(0.5 * kappa_) -
              0.5 * d * std::log(kappa_ * std::numbers::pi) - l.diagonal().array().log().sum();
}

double OutlierDensity::log_density(const Eigen::Ref<const Eigen::VectorXd> &x) const {
  const double d = static_cast<double>(location_.size());
  const double maha = llt_.matrixL().solve(x - location_).squaredNorm();
  return log_norm_ - 0.5 * (kappa_ + d) * std::log1p(maha / kappa_);
}

double outlier_logdensity(const Eigen::Ref<const Eigen::VectorXd> &x, const OutlierModel &om) {
  return OutlierDensity(om).log_density(x);
}

Eigen::VectorXd assigned_loglik(const MixtureState &state, const MixtureData &data,
                                AllocationMode mode) {
  const Eigen::Index n = data.proteins();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  if (mode == AllocationMode::sampled_function) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (data.labelled(i))
        continue;
      const auto k = static_cast<std::size_t>(state.z[ui]);
      out[i] = gp::profile_loglik_given_function(data.profiles.row(i).transpose(), state.mus[k],
                                                 state.hypers[k].noise_var());
    }
    return out;
  }
  const gp::FractionGrid grid(static_cast<int>(data.fractions()));
  auto stats = component_stats(state, data);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (data.labelled(i))
      continue;
    const auto k = static_cast<std::size_t>(state.z[ui]);
    const auto x = data.profiles.row(i).transpose();
    gp::ComponentStats others = stats[k];
    if (state.phi[ui])
      others.remove(x);
    try {
      out[i] = gp::PredictiveDensity(gp::posterior(others, state.hypers[k], grid)).log_density(x);
    } catch (const NumericalError &) {
      out[i] = kNegInf;
    }
  }
  return out;
}

void sample_outlier_flags(MixtureState &state, const MixtureData &data,
                          const Eigen::VectorXd &inlier_loglik, const OutlierDensity &outlier,
                          Rng &rng, Eigen::VectorXd &outlier_probs, SweepWarnings &warnings) {
  const Eigen::Index n = data.proteins();
  outlier_probs.setZero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (data.labelled(i)) {
      state.phi[ui] = 1;
      continue;
    }
    const double u = uniform01(rng);
    if (state.eps <= 0.0) {
      state.phi[ui] = 1;
      continue;
    }
    std::array<double, 2> w = {safe_log(state.eps) + outlier.log_density(data.profiles.row(i).transpose()),
                               safe_log(1.0 - state.eps) + inlier_loglik[i]};
    if (!normalise_log_weights(w)) {
      ++warnings.kept_flags;
      outlier_probs[i] = state.phi[ui] ? 0.0 : 1.0;
      continue;
    }
    outlier_probs[i] = w[0];
    state.phi[ui] = u < w[0] ? 0 : 1;
  }
}

double sample_epsilon(const std::vector<std::uint8_t> &phi, const std::vector<int> &labels,
                      const OutlierModel &om, Rng &rng) {
  double outliers = 0.0;
  double inliers = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    if (labels[i] != kUnlabelled)
      continue;
    if (phi[i])
      inliers += 1.0;
    else
      outliers += 1.0;
  }
  return beta_draw(rng, om.beta_u + outliers, om.beta_v + inliers);
}

} // namespace gpmix::mixture
