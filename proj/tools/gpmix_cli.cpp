// gpmix command-line driver. Links only the C interface.

#include <array>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gpmix/gpmix.h"

namespace {

int exit_code(int status) {
  switch (status) {
  case GPMIX_OK:
    return 0;
  case GPMIX_ERR_NUMERICAL:
    return 3;
  case GPMIX_ERR_INTERNAL:
    return 1;
  default:
    return 2;
  }
}

int report(int status, const char *what) {
  if (status != GPMIX_OK)
    std::cerr << "gpmix " << what << ": " << gpmix_last_error() << '\n';
  return exit_code(status);
}

// Owns a string returned by the library.
struct CString {
  char *p = nullptr;
  ~CString() { gpmix_string_free(p); }
};

int emit(const char *text, const std::string &path) {
  if (path.empty() || path == "-") {
    std::cout << text << '\n';
    return 0;
  }
  std::ofstream out(path);
  out << text << '\n';
  if (!out) {
    std::cerr << "gpmix: cannot write " << path << '\n';
    return 2;
  }
  return 0;
}

struct RunFlags {
  gpmix_run_options opts{};
  std::string sampler = "hmc";
  std::string mode = "sampled";
  std::vector<double> prior_mean;
  std::vector<double> prior_sd;
  bool no_outlier = false;
  bool labelled_only = false;

  void attach(CLI::App *cmd) {
    cmd->add_option("--iterations", opts.iterations, "MCMC iterations per chain")->capture_default_str();
    cmd->add_option("--burnin", opts.burnin, "Iterations discarded as burn-in")->capture_default_str();
    cmd->add_option("--thin", opts.thin, "Keep every k-th post-burn-in iteration")->capture_default_str();
    cmd->add_option("--hyper-every", opts.hyper_every, "Hyperparameter refresh period")->capture_default_str();
    cmd->add_option("--sampler", sampler, "Hyperparameter sampler")
        ->check(CLI::IsMember({"hmc", "mh", "eb"}))
        ->capture_default_str();
    cmd->add_option("--mode", mode, "Allocation update")
        ->check(CLI::IsMember({"sampled", "marginalised"}))
        ->capture_default_str();
    cmd->add_option("--chains", opts.chains, "Independent chains")->capture_default_str();
    cmd->add_option("--seed", opts.seed, "Master seed")->capture_default_str();
    cmd->add_option("--prior-mean", prior_mean, "Log-hyperparameter prior means (3 values)")->expected(3);
    cmd->add_option("--prior-sd", prior_sd, "Log-hyperparameter prior SDs (3 values)")->expected(3);
    cmd->add_option("--mh-sd", opts.mh_proposal_sd, "MH proposal SD")->capture_default_str();
    cmd->add_option("--leapfrog-steps", opts.leapfrog_steps, "HMC leapfrog steps")->capture_default_str();
    cmd->add_option("--step-min", opts.step_min, "HMC minimum step size")->capture_default_str();
    cmd->add_option("--step-max", opts.step_max, "HMC maximum step size")->capture_default_str();
    cmd->add_option("--refresh", opts.refresh, "HMC partial momentum refreshment")->capture_default_str();
    cmd->add_flag("--no-outlier", no_outlier, "Disable the outlier component");
    cmd->add_flag("--labelled-only-hypers", labelled_only,
                  "Update hyperparameters from labelled markers only");
  }

  void finish() {
    static const std::map<std::string, int> samplers = {
        {"hmc", GPMIX_SAMPLER_HMC}, {"mh", GPMIX_SAMPLER_MH}, {"eb", GPMIX_SAMPLER_EB}};
    opts.sampler = samplers.at(sampler);
    opts.mode = mode == "sampled" ? GPMIX_MODE_SAMPLED : GPMIX_MODE_MARGINALISED;
    for (std::size_t j = 0; j < prior_mean.size() && j < 3; ++j)
      opts.prior_mean[j] = prior_mean[j];
    for (std::size_t j = 0; j < prior_sd.size() && j < 3; ++j)
      opts.prior_sd[j] = prior_sd[j];
    if (no_outlier)
      opts.outlier_component = 0;
    if (labelled_only)
      opts.semi_supervised_hypers = 0;
  }
};

int load(const std::string &path, bool center, gpmix_dataset **ds) {
  return report(gpmix_dataset_load(path.c_str(), center ? 1 : 0, ds), "load");
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Semi-supervised GP mixture models for density-gradient profiles"};
  app.require_subcommand(1);
  app.set_version_flag("--version", gpmix_version());

  // fit
  auto *fit = app.add_subcommand("fit", "Run MCMC on a dataset and write allocation outputs");
  std::string fit_input;
  std::string fit_out = "gpmix_out";
  bool fit_center = false;
  RunFlags fit_flags;
  gpmix_run_options_default(&fit_flags.opts);
  fit->add_option("input", fit_input, "Profile CSV (id,f1..fD,marker)")->required()->check(CLI::ExistingFile);
  fit->add_option("-o,--out", fit_out, "Output directory")->capture_default_str();
  fit->add_flag("--center", fit_center, "Subtract the global mean profile");
  fit_flags.attach(fit);

  // cv
  auto *cv = app.add_subcommand("cv", "Stratified 80/20 cross-validation with quadratic loss");
  std::string cv_input;
  std::string cv_out;
  bool cv_center = false;
  RunFlags cv_flags;
  gpmix_run_options_default(&cv_flags.opts);
  cv_flags.opts.iterations = 10000;
  cv_flags.opts.burnin = 1000;
  gpmix_cv_options cv_opts{};
  gpmix_cv_options_default(&cv_opts);
  bool permutation = false;
  cv->add_option("input", cv_input, "Profile CSV")->required()->check(CLI::ExistingFile);
  cv->add_option("-o,--out", cv_out, "Write the JSON report here instead of stdout");
  cv->add_flag("--center", cv_center, "Subtract the global mean profile");
  cv->add_option("--splits", cv_opts.splits, "Number of splits")->capture_default_str();
  cv->add_option("--test-fraction", cv_opts.test_fraction, "Test share of each class")->capture_default_str();
  cv->add_option("--threads", cv_opts.threads, "Worker threads (0 = all cores)")->capture_default_str();
  cv->add_flag("--permutation-control", permutation, "Shuffle test profiles' fraction values");
  cv_flags.attach(cv);

  // simulate
  auto *sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  gpmix_sim_options sim_opts{};
  gpmix_sim_options_default(&sim_opts);
  std::string sim_out;
  std::string sim_truth;
  std::vector<double> sim_theta;
  bool low_noise = false;
  sim->add_option("-o,--out", sim_out, "Output CSV")->required();
  sim->add_option("--truth", sim_truth, "Write ground truth CSV here");
  sim->add_option("--components", sim_opts.components, "Number of niches")->capture_default_str();
  sim->add_option("--fractions", sim_opts.fractions, "Fractions per profile")->capture_default_str();
  sim->add_option("--per-component", sim_opts.per_component, "Proteins per niche")->capture_default_str();
  sim->add_option("--theta", sim_theta, "Log hyperparameters (3 values)")->expected(3);
  sim->add_option("--eps", sim_opts.eps, "Outlier share among unlabelled proteins")->capture_default_str();
  sim->add_option("--marker-fraction", sim_opts.marker_fraction, "Labelled share per niche")->capture_default_str();
  sim->add_option("--outlier-scale", sim_opts.outlier_scale, "Outlier spread")->capture_default_str();
  sim->add_option("--seed", sim_opts.seed, "Seed")->capture_default_str();
  sim->add_flag("--low-noise-markers", low_noise, "Draw markers from the low-noise half of each niche");

  // bench
  auto *bench = app.add_subcommand("bench", "Linear-algebra or sampler benchmark");
  std::string suite;
  std::string bench_out;
  gpmix_bench_options bench_opts{};
  gpmix_bench_options_default(&bench_opts);
  bench->add_option("suite", suite, "linalg or sampler")->required()->check(CLI::IsMember({"linalg", "sampler"}));
  bench->add_option("-o,--out", bench_out, "Write the JSON report here instead of stdout");
  bench->add_option("--seed", bench_opts.seed, "Seed")->capture_default_str();
  bench->add_option("--repeats", bench_opts.repeats, "Timing repeats (linalg)")->capture_default_str();
  bench->add_option("--max-dim", bench_opts.max_dim, "Largest D (linalg)")->capture_default_str();
  bench->add_option("--iterations", bench_opts.iterations, "Iterations (sampler)")->capture_default_str();
  bench->add_option("--burnin", bench_opts.burnin, "Burn-in (sampler)")->capture_default_str();

  // diagnose
  auto *diagnose = app.add_subcommand("diagnose", "R-hat and ESS from a traces.csv");
  std::string traces;
  std::string diag_out;
  diagnose->add_option("traces", traces, "traces.csv written by fit")->required()->check(CLI::ExistingFile);
  diagnose->add_option("-o,--out", diag_out, "Write the JSON report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*fit) {
    fit_flags.finish();
    gpmix_dataset *ds = nullptr;
    if (int rc = load(fit_input, fit_center, &ds))
      return rc;
    gpmix_fit *result = nullptr;
    int status = gpmix_fit_run(ds, &fit_flags.opts, &result);
    gpmix_dataset_free(ds);
    if (status != GPMIX_OK)
      return report(status, "fit");
    status = gpmix_fit_write(result, fit_out.c_str());
    gpmix_fit_free(result);
    if (status != GPMIX_OK)
      return report(status, "fit");
    std::cerr << "wrote " << fit_out << "/{allocations.csv,summary.json,pca.csv,traces.csv,timing.json}\n";
    return 0;
  }

  if (*cv) {
    cv_flags.finish();
    cv_opts.permutation_control = permutation ? 1 : 0;
    cv_opts.seed = cv_flags.opts.seed;
    gpmix_dataset *ds = nullptr;
    if (int rc = load(cv_input, cv_center, &ds))
      return rc;
    CString json;
    double seconds = 0.0;
    const int status = gpmix_cross_validate(ds, &cv_flags.opts, &cv_opts, nullptr, &json.p, &seconds);
    gpmix_dataset_free(ds);
    if (status != GPMIX_OK)
      return report(status, "cv");
    std::fprintf(stderr, "%d splits in %.1f s\n", cv_opts.splits, seconds);
    return emit(json.p, cv_out);
  }

  if (*sim) {
    if (!sim_theta.empty())
      for (int j = 0; j < 3; ++j)
        sim_opts.theta[j] = sim_theta[static_cast<std::size_t>(j)];
    sim_opts.low_noise_markers = low_noise ? 1 : 0;
    gpmix_dataset *ds = nullptr;
    if (int status = gpmix_simulate(&sim_opts, &ds))
      return report(status, "simulate");
    int status = gpmix_dataset_save(ds, sim_out.c_str());
    if (status == GPMIX_OK && !sim_truth.empty())
      status = gpmix_dataset_save_truth(ds, sim_truth.c_str());
    gpmix_dataset_free(ds);
    return report(status, "simulate");
  }

  if (*bench) {
    CString json;
    if (int status = gpmix_bench(suite.c_str(), &bench_opts, &json.p))
      return report(status, "bench");
    return emit(json.p, bench_out);
  }

  if (*diagnose) {
    CString json;
    if (int status = gpmix_diagnose(traces.c_str(), &json.p))
      return report(status, "diagnose");
    return emit(json.p, diag_out);
  }
  return 2;
}
