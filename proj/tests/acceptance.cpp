// Acceptance suite: one PASS/FAIL line per criterion, with the measured
// values and wall time. Exit status is the number of failing criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "enumeration.hpp"
#include "gpmix/chain_runner.hpp"
#include "gpmix/diagnostics.hpp"
#include "gpmix/error.hpp"
#include "gpmix/gp_kernel.hpp"
#include "gpmix/hyper_infer.hpp"
#include "gpmix/struct_linalg.hpp"
#include "gpmix/workbench.hpp"
#include "oracles.hpp"

using namespace gpmix;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const char *name, double budget_seconds, const std::function<Outcome()> &body) {
  const auto t0 = Clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception &e) {
    out = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = secs < budget_seconds;
  const bool pass = out.pass && in_time;
  failures += pass ? 0 : 1;
  std::printf("%s  %-22s %s; %.1f s (budget %.0f s%s)\n", pass ? "PASS" : "FAIL", name,
              out.detail.c_str(), secs, budget_seconds, in_time ? "" : ", exceeded");
  std::fflush(stdout);
}

std::string fmt(const char *f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Correlated Gaussian with known moments.
struct Target {
  Eigen::Vector3d mean{1.0, -2.0, 0.5};
  Eigen::Matrix3d cov;
  Eigen::Matrix3d prec;
  Target() {
    cov << 1.0, 0.3, 0.0, 0.3, 0.5, -0.1, 0.0, -0.1, 0.8;
    prec = cov.inverse();
  }
};

// Worst mean error in standard errors (ESS based) and worst covariance error
// relative to sqrt(S_jj S_kk).
std::pair<double, double> moment_errors(const std::vector<Eigen::Vector3d> &draws, const Target &t) {
  const auto n = static_cast<double>(draws.size());
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto &x : draws)
    mean += x;
  mean /= n;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto &x : draws)
    cov += (x - mean) * (x - mean).transpose();
  cov /= n - 1.0;
  double worst_se = 0.0;
  double worst_cov = 0.0;
  for (int j = 0; j < 3; ++j) {
    std::vector<double> trace(draws.size());
    for (std::size_t s = 0; s < draws.size(); ++s)
      trace[s] = draws[s][j];
    const double ess = diag::effective_sample_size(trace, 1.0).ess;
    worst_se = std::max(worst_se, std::abs(mean[j] - t.mean[j]) / std::sqrt(t.cov(j, j) / ess));
    for (int k = 0; k < 3; ++k)
      worst_cov = std::max(worst_cov, std::abs(cov(j, k) - t.cov(j, k)) / std::sqrt(t.cov(j, j) * t.cov(k, k)));
  }
  return {worst_se, worst_cov};
}

Outcome structured_solver() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> dim(1, 16);
  std::uniform_int_distribution<int> members(1, 8);
  std::uniform_real_distribution<double> noise(0.05, 2.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int d = dim(rng);
    const int n = members(rng);
    linalg::StructuredCovariance cov;
    cov.a.first_row = oracle::random_spd_row(rng, d, 0.1);
    cov.sigma2 = noise(rng);
    cov.n = n;
    const auto fast = linalg::trench_inverse(cov);
    const Eigen::MatrixXd dense = oracle::structured(cov.a.first_row, cov.sigma2, n);
    const Eigen::MatrixXd inv = dense.llt().solve(Eigen::MatrixXd::Identity(dense.rows(), dense.cols()));
    worst = std::max(worst, (fast.implied_dense() - inv).cwiseAbs().maxCoeff());
    worst = std::max(worst, std::abs(fast.log_det - oracle::logdet(dense)));
  }
  return {worst < 1e-8, "200 instances, max abs error " + fmt("%.2e", worst) + " (< 1e-8)"};
}

Outcome complexity() {
  workbench::LinalgBenchOptions o;
  o.dims = {256, 512};
  o.members = {10};
  o.repeats = 7;
  const auto b = workbench::bench_linalg(o);
  bool refused = true;
  for (const auto &r : b.rows)
    refused = refused && (r.d * r.n <= linalg::kDenseGuard || r.dense_refused);
  linalg::StructuredCovariance big;
  big.a.first_row = Eigen::VectorXd::Zero(512);
  big.a.first_row[0] = 1.0;
  big.n = 10;
  bool guard = false;
  try {
    linalg::dense_oracle(big);
  } catch (const ValidationError &) {
    guard = true;
  }
  const bool pass = b.ratio_512_256 > 0.0 && b.ratio_512_256 < 6.0 && refused && guard;
  return {pass, "T(512)/T(256) at n=10 = " + fmt("%.2f", b.ratio_512_256) + " (< 6); dense refused above " +
                    std::to_string(linalg::kDenseGuard) + ": " + (refused && guard ? "yes" : "no")};
}

Outcome gradient() {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> norm;
  std::uniform_real_distribution<double> t1(-1.0, 1.5);
  std::uniform_real_distribution<double> t2(-1.5, 0.5);
  std::uniform_real_distribution<double> t3(-2.5, 0.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + trial % 15;
    const int n = 1 + (trial * 7) % 12;
    Eigen::MatrixXd x(d, n);
    for (Eigen::Index i = 0; i < x.size(); ++i)
      x.data()[i] = norm(rng);
    const gp::GpHypers h{t1(rng), t2(rng), t3(rng)};
    const auto stats = gp::ComponentStats::from_columns(x);
    const Eigen::Vector3d g = gp::grad_log_marginal(stats, h);
    auto f = [&](const Eigen::Vector3d &t) { return gp::log_marginal(stats, gp::GpHypers::from(t)); };
    for (int j = 0; j < 3; ++j) {
      const double fd = oracle::central_diff(f, h.vec(), j);
      worst = std::max(worst, std::abs(g[j] - fd) / std::max(std::abs(fd), 1.0));
    }
  }
  return {worst < 1e-5, "100 draws, max relative error " + fmt("%.2e", worst) + " (< 1e-5)"};
}

Outcome sampler_validity() {
  const Target t;
  const int warm = 1000;
  const int keep = 10000;

  Rng rng = make_rng(31);
  Eigen::Vector3d x = t.mean;
  auto log_p = [&](const Eigen::Vector3d &y) {
    const Eigen::Vector3d r = y - t.mean;
    return -0.5 * r.dot(t.prec * r);
  };
  double lp = log_p(x);
  std::vector<Eigen::Vector3d> mh;
  for (int s = 0; s < warm + keep; ++s) {
    hyper::mh_step_generic(x, lp, log_p, rng, 1.0);
    if (s >= warm)
      mh.push_back(x);
  }

  hyper::HmcConfig cfg;
  cfg.step_min = 0.05;
  cfg.step_max = 0.2;
  auto potential = [&](const Eigen::Vector3d &y) {
    const Eigen::Vector3d r = y - t.mean;
    return gp::ValueAndGradient{0.5 * r.dot(t.prec * r), t.prec * r};
  };
  x = t.mean;
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  std::vector<Eigen::Vector3d> hmc;
  for (int s = 0; s < warm + keep; ++s) {
    const auto r = hyper::hmc_step_generic(x, p, potential, cfg, rng);
    x = r.x;
    p = r.momentum;
    if (s >= warm)
      hmc.push_back(x);
  }
  const auto [mh_se, mh_cov] = moment_errors(mh, t);
  const auto [hmc_se, hmc_cov] = moment_errors(hmc, t);
  const bool pass = mh_se < 4.0 && mh_cov < 0.1 && hmc_se < 4.0 && hmc_cov < 0.1;
  return {pass, "MH mean " + fmt("%.2f", mh_se) + " SE, cov " + fmt("%.3f", mh_cov) + "; HMC mean " +
                    fmt("%.2f", hmc_se) + " SE, cov " + fmt("%.3f", hmc_cov) + " (< 4 SE, < 0.1)"};
}

Outcome efficiency() {
  const auto b = workbench::bench_sampler({});
  bool pass = true;
  std::string detail = "HMC/MH ESS per second:";
  const char *names[3] = {"length-scale", "amplitude", "noise"};
  for (int j = 0; j < 3; ++j) {
    pass = pass && b.hmc_over_mh[static_cast<std::size_t>(j)] >= 1.0;
    detail += std::string(" ") + names[j] + " " + fmt("%.2f", b.hmc_over_mh[static_cast<std::size_t>(j)]);
  }
  detail += "; acceptance MH " + fmt("%.3f", b.rows[0].acceptance) + ", HMC " + fmt("%.3f", b.rows[1].acceptance);
  return {pass, detail + " (all >= 1)"};
}

Outcome enumeration_check() {
  const auto exact = enumeration::exact_posterior(1.0);
  const double tv_m = enumeration::total_variation(
      enumeration::gibbs_frequencies(mixture::AllocationMode::marginalised, 100000, 41), exact);
  const double tv_s = enumeration::total_variation(
      enumeration::gibbs_frequencies(mixture::AllocationMode::sampled_function, 100000, 42), exact);
  return {tv_m < 0.02 && tv_s < 0.02,
          "TV marginalised " + fmt("%.4f", tv_m) + ", sampled " + fmt("%.4f", tv_s) + " (< 0.02)"};
}

Outcome end_to_end() {
  workbench::SimOptions o;
  o.components = 3;
  o.fractions = 8;
  o.per_component = 50;
  o.marker_fraction = 0.3;
  o.eps = 0.05;
  o.seed = 2024;
  const auto ds = workbench::simulate(o).data;
  chain::RunConfig cfg;
  cfg.iterations = 5000;
  cfg.burnin = 1000;
  cfg.thin = 5;
  cfg.chains = 2;
  cfg.seed = 2024;
  const auto fit = workbench::fit(ds, cfg);
  const auto &alloc = fit.summary.allocation;
  int correct = 0;
  int inliers = 0;
  int outliers = 0;
  int found = 0;
  for (Eigen::Index i = 0; i < ds.proteins(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (ds.label_index(ui) != mixture::kUnlabelled)
      continue;
    if (ds.true_outlier[ui]) {
      ++outliers;
      found += alloc(i, 3) > 0.5;
      continue;
    }
    Eigen::Index best = 0;
    alloc.row(i).head(3).maxCoeff(&best);
    correct += best == ds.true_component[ui];
    ++inliers;
  }
  double worst_rhat = 0.0;
  bool all_defined = true;
  for (const auto &[name, d] : fit.summary.diagnostics) {
    all_defined = all_defined && d.rhat_defined;
    if (d.rhat_defined)
      worst_rhat = std::max(worst_rhat, d.rhat);
  }
  const double acc = double(correct) / inliers;
  const double recall = outliers > 0 ? double(found) / outliers : 1.0;
  const bool pass = acc >= 0.95 && recall >= 0.8 && all_defined && worst_rhat < 1.1;
  return {pass, "accuracy " + fmt("%.3f", acc) + " (>= 0.95), outlier recall " + std::to_string(found) + "/" +
                    std::to_string(outliers) + " (>= 0.8), max R-hat " + fmt("%.3f", worst_rhat) + " (< 1.1)"};
}

Outcome shrinkage() {
  const double true_theta3 = -3.0;
  int passes = 0;
  std::string per_seed;
  for (int s = 1; s <= 10; ++s) {
    workbench::SimOptions o;
    o.components = 3;
    o.fractions = 8;
    o.per_component = 50;
    o.marker_fraction = 0.3;
    o.seed = static_cast<std::uint64_t>(100 + s);
    o.theta = {{0.5, -1.0, true_theta3}};
    o.markers = workbench::MarkerSelection::low_noise;
    const auto ds = workbench::simulate(o).data;
    chain::RunConfig cfg;
    cfg.iterations = 2000;
    cfg.burnin = 500;
    cfg.thin = 2;
    cfg.chains = 2;
    cfg.seed = static_cast<std::uint64_t>(s);
    cfg.outlier_component = false;
    const auto semi = workbench::fit(ds, cfg);
    cfg.semi_supervised_hypers = false;
    const auto labelled = workbench::fit(ds, cfg);

    // Posterior SD and mean of theta3, averaged over components.
    auto moments = [&](const workbench::FitResult &f) {
      double sd = 0.0;
      double err = 0.0;
      for (int k = 0; k < 3; ++k) {
        std::vector<double> all;
        for (const auto &r : f.records)
          for (const auto &th : r.theta)
            all.push_back(th[static_cast<std::size_t>(k)].theta3);
        double m = 0.0;
        for (double v : all)
          m += v;
        m /= static_cast<double>(all.size());
        double var = 0.0;
        for (double v : all)
          var += (v - m) * (v - m);
        sd += std::sqrt(var / static_cast<double>(all.size() - 1)) / 3.0;
        err += std::abs(m - true_theta3) / 3.0;
      }
      return std::pair{sd, err};
    };
    const auto [sd_semi, err_semi] = moments(semi);
    const auto [sd_lab, err_lab] = moments(labelled);
    const bool ok = sd_semi <= sd_lab && err_semi <= err_lab;
    passes += ok;
    per_seed += ok ? '+' : '-';
  }
  return {passes >= 8, std::to_string(passes) + "/10 seeds with smaller SD and smaller error [" + per_seed + "] (>= 8)"};
}

Outcome cv_harness() {
  workbench::SimOptions o;
  o.per_component = 50;
  o.fractions = 8;
  o.seed = 55;
  const auto ds = workbench::simulate(o).data;
  workbench::CvOptions cv;
  cv.splits = 100;
  cv.seed = 55;
  cv.run.iterations = 200;
  cv.run.burnin = 50;
  cv.run.thin = 2;
  cv.run.chains = 1;

  cv.run.sampler = chain::HyperSampler::fixed_eb;
  const auto eb1 = workbench::cross_validate(ds, cv);
  const auto eb2 = workbench::cross_validate(ds, cv);
  cv.run.sampler = chain::HyperSampler::hmc;
  const auto fb1 = workbench::cross_validate(ds, cv);
  const auto fb2 = workbench::cross_validate(ds, cv);
  const bool same = eb1.losses == eb2.losses && fb1.losses == fb2.losses;
  const bool sized = eb1.losses.size() == 100 && fb1.losses.size() == 100;
  const double eb_median = diag::quantile(eb1.losses, 0.5);
  const double fb_median = diag::quantile(fb1.losses, 0.5);
  return {same && sized, "100 splits each; repeat runs identical: " + std::string(same ? "yes" : "no") +
                             "; median loss EB " + fmt("%.4f", eb_median) + ", FB " + fmt("%.4f", fb_median)};
}

} // namespace

int main() {
  std::printf("gpmix acceptance suite\n");
  criterion("structured-solver", 30, structured_solver);
  criterion("complexity", 60, complexity);
  criterion("gradient", 60, gradient);
  criterion("sampler-validity", 120, sampler_validity);
  criterion("hmc-efficiency", 300, efficiency);
  criterion("mixture-enumeration", 300, enumeration_check);
  criterion("end-to-end", 600, end_to_end);
  criterion("shrinkage", 600, shrinkage);
  criterion("cv-harness", 600, cv_harness);
  std::printf("%d criteria failed\n", failures);
  return failures;
}
