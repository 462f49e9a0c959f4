#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "enumeration.hpp"
#include "gpmix/error.hpp"
#include "gpmix/mixture_model.hpp"
#include "oracles.hpp"

using namespace gpmix;
using namespace gpmix::mixture;

namespace {

// Two well-separated flat components in four fractions with two markers each.
MixtureData separated_data() {
  MixtureData data;
  data.components = 2;
  data.profiles.resize(6, 4);
  data.profiles << 0.0, 0.0, 0.0, 0.0, //
      0.02, -0.01, 0.01, 0.0,          //
      2.0, 2.0, 2.0, 2.0,              //
      1.98, 2.01, 2.0, 1.99,           //
      0.01, 0.02, -0.01, 0.0,          //
      2.02, 1.99, 2.01, 2.0;
  data.labels = {0, 0, 1, 1, kUnlabelled, kUnlabelled};
  return data;
}

std::vector<GpHypers> tight_hypers() { return {{1.0, -1.0, -4.0}, {1.0, -1.0, -4.0}}; }

} // namespace

TEST_CASE("collapsed indicator prior weight") {
  CHECK(indicator_prior_weight(2, 4, 2, 1.0) == doctest::Approx(0.625));
  CHECK(indicator_prior_weight(3, 10, 3, 1e-12) == doctest::Approx(3.0 / 9.0));
  // Counts over the other N - 1 proteins sum to N - 1, so weights sum to one.
  const std::array<int, 4> counts = {3, 0, 5, 1};
  double total = 0.0;
  for (int c : counts)
    total += indicator_prior_weight(c, 10, 4, 2.5);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("identical components give even allocation probabilities") {
  MixtureData data;
  data.components = 2;
  data.profiles = Eigen::MatrixXd::Zero(3, 3);
  data.profiles.row(2) << 0.3, -0.2, 0.1;
  data.labels = {0, 1, kUnlabelled};
  const auto om = OutlierModel::from_profiles(data.profiles + Eigen::MatrixXd::Identity(3, 3));
  const std::vector<GpHypers> h = {{0.0, -1.0, -2.0}, {0.0, -1.0, -2.0}};
  MixtureState state = MixtureState::initial(data, h, om);
  state.mus = {Eigen::Vector3d(0.1, 0.1, 0.1), Eigen::Vector3d(0.1, 0.1, 0.1)};
  Rng rng = make_rng(1);
  Eigen::MatrixXd probs;
  SweepWarnings warn;
  sample_indicators(state, data, AllocationMode::sampled_function, {}, rng, probs, warn);
  CHECK(probs(2, 0) == doctest::Approx(0.5));
  CHECK(probs(2, 1) == doctest::Approx(0.5));
  CHECK(probs(0, 0) == 1.0);
  CHECK(probs(1, 1) == 1.0);
}

TEST_CASE("well-separated proteins are allocated confidently") {
  const auto data = separated_data();
  const auto om = OutlierModel::from_profiles(data.profiles);
  for (auto mode : {AllocationMode::sampled_function, AllocationMode::marginalised}) {
    MixtureState state = MixtureState::initial(data, tight_hypers(), om);
    Rng rng = make_rng(2);
    Eigen::MatrixXd probs;
    SweepWarnings warn;
    for (int t = 0; t < 5; ++t) {
      if (mode == AllocationMode::sampled_function)
        draw_component_functions(state, data, rng);
      sample_indicators(state, data, mode, {}, rng, probs, warn);
    }
    CHECK(probs(4, 0) > 0.99);
    CHECK(probs(5, 1) > 0.99);
    CHECK((probs.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(warn.forced_outliers == 0);
  }
}

TEST_CASE("marginalised weights equal prior weight times predictive density") {
  const auto data = enumeration::tiny_data();
  const auto hypers = enumeration::tiny_hypers();
  const auto om = OutlierModel::from_profiles(data.profiles);
  MixtureState state = MixtureState::initial(data, hypers, om);
  // Only protein 2 is resampled in this check; the others stay in component 0.
  MixtureData one = data;
  one.labels = {0, 1, kUnlabelled, 0, 0};
  state.z = {0, 1, 0, 0, 0};
  Rng rng = make_rng(3);
  Eigen::MatrixXd probs;
  SweepWarnings warn;
  sample_indicators(state, one, AllocationMode::marginalised, {1.0}, rng, probs, warn);

  std::array<double, 2> logw{};
  const Eigen::Vector2d x = data.profiles.row(2).transpose();
  const std::array<std::vector<int>, 2> others = {std::vector<int>{0, 3, 4}, std::vector<int>{1}};
  for (std::size_t k = 0; k < 2; ++k) {
    Eigen::MatrixXd xs(2, static_cast<Eigen::Index>(others[k].size()));
    for (std::size_t j = 0; j < others[k].size(); ++j)
      xs.col(static_cast<Eigen::Index>(j)) = data.profiles.row(others[k][j]).transpose();
    Eigen::MatrixXd with(2, xs.cols() + 1);
    with << xs, x;
    const auto &h = hypers[k];
    const double pred = oracle::gp_log_marginal(with, h.length_scale(), h.amplitude2(), h.noise_var()) -
                        oracle::gp_log_marginal(xs, h.length_scale(), h.amplitude2(), h.noise_var());
    logw[k] = std::log((static_cast<double>(others[k].size()) + 0.5) / 5.0) + pred;
  }
  const double p0 = 1.0 / (1.0 + std::exp(logw[1] - logw[0]));
  CHECK(probs(2, 0) == doctest::Approx(p0).epsilon(1e-10));
}

TEST_CASE("Gibbs allocation frequencies match exact enumeration") {
  const auto exact = enumeration::exact_posterior(1.0);
  double total = 0.0;
  for (double p : exact)
    total += p;
  CHECK(total == doctest::Approx(1.0));
  for (auto mode : {AllocationMode::marginalised, AllocationMode::sampled_function}) {
    const auto freq = enumeration::gibbs_frequencies(mode, 40000, 4);
    CHECK(enumeration::total_variation(freq, exact) < 0.03);
  }
}

TEST_CASE("mixing proportions follow the conjugate Dirichlet update") {
  const std::vector<int> z = {0, 0, 0, 1, 2, 2};
  const std::vector<std::uint8_t> phi = {1, 1, 1, 1, 1, 0};
  const DirichletConfig dir{1.5};
  Rng rng = make_rng(5);
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  const int draws = 50000;
  for (int t = 0; t < draws; ++t) {
    const Eigen::VectorXd pi = sample_mixing_proportions(z, phi, 3, dir, rng);
    CHECK_MESSAGE(std::abs(pi.sum() - 1.0) < 1e-12, "draw " << t);
    mean += pi;
  }
  mean /= draws;
  const double a = 1.5 / 3.0;
  const double denom = 1.5 + 5.0;
  CHECK(mean[0] == doctest::Approx((3.0 + a) / denom).epsilon(0.01));
  CHECK(mean[1] == doctest::Approx((1.0 + a) / denom).epsilon(0.02));
  CHECK(mean[2] == doctest::Approx((1.0 + a) / denom).epsilon(0.02));
  CHECK_THROWS_AS(sample_mixing_proportions(z, phi, 3, {0.0}, rng), ValidationError);
}

TEST_CASE("outlier model and multivariate t density") {
  Rng rng = make_rng(6);
  Eigen::MatrixXd x(30, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x.data()[i] = standard_normal(rng);
  const auto om = OutlierModel::from_profiles(x);
  CHECK((om.location - x.colwise().mean().transpose()).norm() < 1e-14);
  const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
  CHECK((om.scale - 0.5 * centred.transpose() * centred / 29.0).norm() < 1e-13);

  const Eigen::Vector3d y(0.3, -0.4, 1.0);
  CHECK(outlier_logdensity(y, om) ==
        doctest::Approx(oracle::mvt_logpdf(y, 4.0, om.location, om.scale)).epsilon(1e-12));

  OutlierModel one;
  one.location = Eigen::VectorXd::Zero(1);
  one.scale = Eigen::MatrixXd::Identity(1, 1);
  // Mode value: Gamma(5/2) / (Gamma(2) sqrt(4 pi)).
  CHECK(std::exp(outlier_logdensity(Eigen::VectorXd::Zero(1), one)) ==
        doctest::Approx(std::tgamma(2.5) / std::sqrt(4.0 * std::numbers::pi)).epsilon(1e-12));

  // Integrates to one: substitute x = tan(u) on (-pi/2, pi/2), midpoint rule.
  const OutlierDensity dens(one);
  const int m = 200000;
  double integral = 0.0;
  for (int j = 0; j < m; ++j) {
    const double u = -0.5 * std::numbers::pi + (j + 0.5) * std::numbers::pi / m;
    const double t = std::tan(u);
    integral += std::exp(dens.log_density(Eigen::VectorXd::Constant(1, t))) * (1.0 + t * t);
  }
  integral *= std::numbers::pi / m;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));

  // Polynomial tail with exponent -(kappa + D).
  const double r1 = 1e3;
  const double r2 = 2e3;
  const double slope = (dens.log_density(Eigen::VectorXd::Constant(1, r2)) -
                        dens.log_density(Eigen::VectorXd::Constant(1, r1))) /
                       std::log(r2 / r1);
  CHECK(std::abs(slope + 5.0) < 0.02 * 5.0);

  OutlierModel bad = one;
  bad.scale(0, 0) = -1.0;
  CHECK_THROWS_AS(OutlierDensity{bad}, NotPositiveDefinite);
}

TEST_CASE("outlier flags") {
  const auto data = separated_data();
  const auto om = OutlierModel::from_profiles(data.profiles);
  const OutlierDensity dens(om);
  MixtureState state = MixtureState::initial(data, tight_hypers(), om);
  Rng rng = make_rng(7);
  Eigen::VectorXd probs;
  SweepWarnings warn;

  state.eps = 0.0;
  Eigen::VectorXd ll = Eigen::VectorXd::Constant(6, -1e6);
  sample_outlier_flags(state, data, ll, dens, rng, probs, warn);
  for (auto f : state.phi)
    CHECK(f == 1);

  // Equal inlier and outlier densities: the flag probability is eps itself.
  state.eps = 0.3;
  for (Eigen::Index i = 0; i < 6; ++i)
    ll[i] = dens.log_density(data.profiles.row(i).transpose());
  sample_outlier_flags(state, data, ll, dens, rng, probs, warn);
  CHECK(probs[4] == doctest::Approx(0.3));
  CHECK(probs[5] == doctest::Approx(0.3));
  CHECK(probs[0] == 0.0);

  // A protein far from both components.
  MixtureData far = data;
  far.profiles.row(5) << 8.0, -7.0, 9.0, -8.0;
  state = MixtureState::initial(far, tight_hypers(), om);
  state.eps = 0.05;
  state.z[5] = 1;
  draw_component_functions(state, far, rng);
  const Eigen::VectorXd assigned = assigned_loglik(state, far, AllocationMode::sampled_function);
  sample_outlier_flags(state, far, assigned, dens, rng, probs, warn);
  CHECK(probs[5] > 0.95);
  CHECK(probs[4] < 0.05);
}

TEST_CASE("epsilon follows the conjugate Beta update") {
  const std::vector<std::uint8_t> phi = {1, 1, 0, 1, 0, 1, 1, 1};
  const std::vector<int> labels = {0, 1, kUnlabelled, kUnlabelled, kUnlabelled, kUnlabelled,
                                   kUnlabelled, kUnlabelled};
  OutlierModel om;
  Rng rng = make_rng(8);
  const int draws = 100000;
  double sum = 0.0;
  double sq = 0.0;
  for (int t = 0; t < draws; ++t) {
    const double e = sample_epsilon(phi, labels, om, rng);
    sum += e;
    sq += e * e;
  }
  // Unlabelled: 2 outliers and 4 inliers, so Beta(4, 14).
  const double a = 4.0;
  const double b = 14.0;
  const double mean = a / (a + b);
  const double var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
  CHECK(sum / draws == doctest::Approx(mean).epsilon(0.01));
  CHECK(sq / draws - (sum / draws) * (sum / draws) == doctest::Approx(var).epsilon(0.03));
}

TEST_CASE("labelled proteins never change") {
  const auto data = separated_data();
  const auto om = OutlierModel::from_profiles(data.profiles);
  const OutlierDensity dens(om);
  for (auto mode : {AllocationMode::sampled_function, AllocationMode::marginalised}) {
    MixtureState state = MixtureState::initial(data, tight_hypers(), om);
    state.eps = 0.5;
    Rng rng = make_rng(9);
    Eigen::MatrixXd probs;
    Eigen::VectorXd oprobs;
    SweepWarnings warn;
    for (int t = 0; t < 200; ++t) {
      if (mode == AllocationMode::sampled_function)
        draw_component_functions(state, data, rng);
      sample_indicators(state, data, mode, {}, rng, probs, warn);
      sample_outlier_flags(state, data, assigned_loglik(state, data, mode), dens, rng, oprobs, warn);
      for (std::size_t i = 0; i < 4; ++i) {
        CHECK(state.z[i] == data.labels[i]);
        CHECK(state.phi[i] == 1);
      }
    }
  }
}

TEST_CASE("sampled mode needs component functions") {
  const auto data = separated_data();
  const auto om = OutlierModel::from_profiles(data.profiles);
  MixtureState state = MixtureState::initial(data, tight_hypers(), om);
  Rng rng = make_rng(10);
  Eigen::MatrixXd probs;
  SweepWarnings warn;
  CHECK_THROWS_AS(
      sample_indicators(state, data, AllocationMode::sampled_function, {}, rng, probs, warn),
      ValidationError);
  MixtureData bad = data;
  bad.labels[0] = 5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK_THROWS_AS(MixtureState::initial(data, {GpHypers{}}, om), ValidationError);
}
