#pragma once

// Driver-level workflows behind the command line: dataset ingestion and
// serialisation, synthetic data, fitting, stratified cross-validation,
// benchmarks and trace diagnostics.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gpmix/chain_runner.hpp"

namespace gpmix::workbench {

using gp::GpHypers;

inline const std::string kUnknownLabel = "unknown";

struct ProfileDataset {
  std::vector<std::string> ids;
  Eigen::MatrixXd x; ///< N x D
  std::vector<std::string> labels; ///< niche name or "unknown"
  std::vector<std::string> niche_names;
  std::vector<std::string> fraction_names;

  /// Ground truth, present only for simulated data. true_component is -1 for
  /// outliers.
  std::vector<int> true_component;
  std::vector<std::uint8_t> true_outlier;

  Eigen::Index proteins() const { return x.rows(); }
  Eigen::Index fractions() const { return x.cols(); }
  int niches() const { return static_cast<int>(niche_names.size()); }
  bool has_truth() const { return !true_component.empty(); }

  /// Index into niche_names, or mixture::kUnlabelled.
  int label_index(std::size_t i) const;
  mixture::MixtureData to_mixture() const;

  /// Throws ValidationError when D < 2, a niche has fewer than min_markers
  /// labelled proteins, a label is not a known niche, or a value is not finite.
  void validate(int min_markers = 2) const;
};

struct LoadOptions {
  bool center = false;
  /// When non-empty, the niche list is fixed and any other label is an error.
  std::vector<std::string> expected_niches;
};

ProfileDataset parse_dataset(std::istream &in, const LoadOptions &opts = {},
                             const std::string &source = "<stream>");
ProfileDataset load_dataset(const std::filesystem::path &path, const LoadOptions &opts = {});

/// Shortest round-trip decimal output; load_dataset reads it back bit-exactly.
void write_dataset(std::ostream &out, const ProfileDataset &ds);
void save_dataset(const ProfileDataset &ds, const std::filesystem::path &path);
/// id, component, outlier. Requires ground truth.
void save_truth(const ProfileDataset &ds, const std::filesystem::path &path);

void center_profiles(ProfileDataset &ds);

enum class MarkerSelection {
  random,
  low_noise ///< markers drawn from the half of each component closest to its function
};

struct SimOptions {
  int components = 3;
  int fractions = 8;
  int per_component = 50;
  /// One entry per component, or a single entry shared by all.
  std::vector<GpHypers> theta = {GpHypers{0.5, -1.0, -3.0}};
  double eps = 0.0;
  double marker_fraction = 0.3;
  std::uint64_t seed = 1;
  /// Outliers are multivariate-t (4 dof) around the mean of the component
  /// functions, with isotropic scale outlier_scale times their pooled SD.
  double outlier_scale = 4.0;
  MarkerSelection markers = MarkerSelection::random;

  void validate() const;
};

struct Simulation {
  ProfileDataset data;
  std::vector<Eigen::VectorXd> functions; ///< latent mu_k on the grid
};

/// K * per_component proteins. round(eps * #unlabelled) unlabelled proteins
/// are replaced by outliers.
Simulation simulate(const SimOptions &opts);

struct ComponentDraw {
  Eigen::VectorXd mu;
  Eigen::MatrixXd x; ///< D x n, columns mu + N(0, sigma^2 I)
};

/// One function from the GP prior and n noisy replicates of it.
ComponentDraw draw_component(const GpHypers &h, int fractions, int n, Rng &rng);

/// sum_k (p_k - [k == truth])^2 for a probability vector p.
double quadratic_loss(std::span<const double> pred, int truth);

struct FitResult {
  chain::RunConfig config;
  chain::Priors priors;
  std::vector<GpHypers> marker_eb;
  std::vector<chain::ChainRecord> records;
  chain::PosteriorSummary summary;
  double seconds = 0.0;
};

FitResult fit(const ProfileDataset &ds, const chain::RunConfig &config,
              const chain::Priors &priors = {});

/// Writes allocations.csv, summary.json, pca.csv and traces.csv into dir.
void write_fit_outputs(const FitResult &result, const ProfileDataset &ds,
                       const std::filesystem::path &dir);
nlohmann::json summary_json(const FitResult &result, const ProfileDataset &ds);

struct CvOptions {
  int splits = 100;
  std::uint64_t seed = 1;
  double test_fraction = 0.2;
  int min_class_size = 5;
  chain::RunConfig run;
  chain::Priors priors;
  /// Shuffle each test protein's fraction values before fitting.
  bool permutation_control = false;
  int threads = 0; ///< 0 = hardware concurrency

  void validate() const;
};

struct CvReport {
  std::vector<double> losses;
  std::vector<std::uint64_t> split_seeds;
  std::vector<double> split_seconds;
  double seconds = 0.0;
};

/// Stratified train/test partition of the labelled proteins of each class.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
Split stratified_split(const ProfileDataset &ds, double test_fraction, int min_class_size,
                       Rng &rng);

CvReport cross_validate(const ProfileDataset &ds, const CvOptions &opts);
nlohmann::json cv_json(const CvReport &report, const CvOptions &opts);

struct LinalgBenchOptions {
  std::vector<int> dims = {16, 32, 64, 128, 256, 512};
  std::vector<int> members = {1, 10};
  int repeats = 5;
  std::uint64_t seed = 1;
};

struct LinalgBenchRow {
  int d = 0;
  int n = 0;
  double fast_seconds = 0.0;  ///< median over repeats
  double dense_seconds = 0.0; ///< 0 when refused
  bool dense_refused = false;
  double max_abs_diff = 0.0; ///< log det, fast vs dense (0 when refused)
};

struct LinalgBench {
  std::vector<LinalgBenchRow> rows;
  /// T(512) / T(256) at n = 10 when both were measured, else 0.
  double ratio_512_256 = 0.0;
  double seconds = 0.0;
};

LinalgBench bench_linalg(const LinalgBenchOptions &opts = {});

struct SamplerBenchOptions {
  int members = 100;
  int fractions = 10;
  int iterations = 5000;
  int burnin = 500;
  GpHypers truth{0.5, -1.0, -3.0};
  std::uint64_t seed = 1;
  hyper::HmcConfig hmc;
  double mh_proposal_sd = 1.0;
  hyper::HyperPrior prior;
};

struct SamplerBenchRow {
  std::string method;
  int iterations = 0;
  double acceptance = 0.0;
  std::array<double, 3> ess{};
  std::array<double, 3> ess_per_second{};
  double seconds = 0.0;
};

struct SamplerBench {
  std::vector<SamplerBenchRow> rows; ///< MH then HMC
  std::array<double, 3> hmc_over_mh{};
  double seconds = 0.0;
};

SamplerBench bench_sampler(const SamplerBenchOptions &opts = {});

nlohmann::json to_json(const LinalgBench &b);
nlohmann::json to_json(const SamplerBench &b);

struct Pca {
  Eigen::MatrixXd scores;     ///< N x 2
  Eigen::Vector2d variance;   ///< explained variance of each component
};

/// Top two principal components of the centred profiles.
Pca pca(const Eigen::MatrixXd &x);

/// R-hat and ESS for every column of a traces.csv written by write_fit_outputs.
nlohmann::json diagnose_traces(const std::filesystem::path &path);

} // namespace gpmix::workbench
