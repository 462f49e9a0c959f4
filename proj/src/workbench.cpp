#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "csv.hpp"
#include "gpmix/diagnostics.hpp"
#include "gpmix/error.hpp"
#include "gpmix/workbench.hpp"

namespace gpmix::workbench {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

const char *sampler_name(chain::HyperSampler s) {
  switch (s) {
  case chain::HyperSampler::hmc:
    return "hmc";
  case chain::HyperSampler::mh:
    return "mh";
  case chain::HyperSampler::fixed_eb:
    return "eb";
  }
  return "?";
}

const char *mode_name(mixture::AllocationMode m) {
  return m == mixture::AllocationMode::sampled_function ? "sampled" : "marginalised";
}

json vec_json(const Eigen::Vector3d &v) { return json::array({v[0], v[1], v[2]}); }

json config_json(const chain::RunConfig &c, const chain::Priors &p) {
  return {
      {"iterations", c.iterations},
      {"burnin", c.burnin},
      {"thin", c.thin},
      {"hyper_every", c.hyper_every},
      {"sampler", sampler_name(c.sampler)},
      {"mode", mode_name(c.mode)},
      {"chains", c.chains},
      {"seed", c.seed},
      {"outlier_component", c.outlier_component},
      {"semi_supervised_hypers", c.semi_supervised_hypers},
      {"mh_proposal_sd", c.mh_proposal_sd},
      {"hmc",
       {{"leapfrog_steps", c.hmc.leapfrog_steps},
        {"step_min", c.hmc.step_min},
        {"step_max", c.hmc.step_max},
        {"refresh", c.hmc.refresh},
        {"mass_diag", vec_json(c.hmc.mass_diag)}}},
      {"priors",
       {{"hyper_mean", vec_json(p.hyper.mean)},
        {"hyper_sd", vec_json(p.hyper.sd)},
        {"dirichlet_alpha", p.dirichlet.alpha},
        {"outlier_beta", {p.outlier_u, p.outlier_v}},
        {"kappa", p.kappa}}},
  };
}

json optional_number(bool defined, double v) { return defined && std::isfinite(v) ? json(v) : json(); }

json interval_json(const chain::Interval &iv) {
  return {{"mean", iv.mean}, {"lower", iv.lower}, {"upper", iv.upper}};
}

// theta1[0] -> theta1[<niche name>]
std::string display_name(const std::string &name, const std::vector<std::string> &niches) {
  const auto open = name.find('[');
  if (open == std::string::npos)
    return name;
  const int k = std::stoi(name.substr(open + 1));
  return name.substr(0, open) + "[" + niches[static_cast<std::size_t>(k)] + "]";
}

std::ofstream open_out(const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot write " + path.string());
  return out;
}

void write_json(const std::filesystem::path &path, const json &doc) {
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
  if (!out)
    throw IoError("write failed for " + path.string());
}

Eigen::VectorXd niche_probabilities(const chain::PosteriorSummary &s, Eigen::Index i, int k) {
  Eigen::VectorXd p = s.allocation.row(i).head(k).transpose();
  const double total = p.sum();
  if (total > 0.0)
    return p / total;
  return Eigen::VectorXd::Constant(k, 1.0 / k);
}

} // namespace

FitResult fit(const ProfileDataset &ds, const chain::RunConfig &config, const chain::Priors &priors) {
  ds.validate();
  config.validate();
  const auto start = Clock::now();
  const mixture::MixtureData data = ds.to_mixture();
  FitResult out;
  out.config = config;
  out.priors = priors;
  out.marker_eb = chain::fit_marker_hypers(data);
  out.records = chain::run_chains(data, config, priors, &out.marker_eb);
  out.summary = chain::summarise(out.records);
  out.seconds = seconds_since(start);
  return out;
}

json summary_json(const FitResult &r, const ProfileDataset &ds) {
  const auto &s = r.summary;
  json doc;
  doc["schema"] = 1;
  doc["proteins"] = ds.proteins();
  doc["fractions"] = ds.fractions();
  doc["niches"] = ds.niche_names;
  doc["config"] = config_json(r.config, r.priors);
  doc["retained"] = s.retained;

  json eb = json::object();
  json hypers = json::object();
  json acc = json::object();
  for (std::size_t k = 0; k < ds.niche_names.size(); ++k) {
    const auto &h = r.marker_eb[k];
    eb[ds.niche_names[k]] = {{"theta", vec_json(h.vec())},
                             {"length_scale", h.length_scale()},
                             {"amplitude", std::sqrt(h.amplitude2())},
                             {"noise_sd", std::sqrt(h.noise_var())}};
    hypers[ds.niche_names[k]] = {{"theta1", interval_json(s.hypers[k][0])},
                                 {"theta2", interval_json(s.hypers[k][1])},
                                 {"theta3", interval_json(s.hypers[k][2])}};
    acc[ds.niche_names[k]] = s.hyper_acceptance[k];
  }
  doc["marker_eb"] = eb;
  doc["hyperparameters"] = hypers;
  doc["hyper_acceptance"] = acc;
  doc["eps"] = interval_json(s.eps);

  json diag = json::object();
  for (const auto &[name, d] : s.diagnostics)
    diag[display_name(name, ds.niche_names)] = {{"rhat", optional_number(d.rhat_defined, d.rhat)},
                                                {"rhat_upper", optional_number(d.rhat_defined, d.rhat_upper)},
                                                {"ess", optional_number(d.ess_defined, d.ess)}};
  doc["diagnostics"] = diag;

  int forced = 0;
  int kept = 0;
  for (const auto &rec : r.records) {
    forced += rec.warnings.forced_outliers;
    kept += rec.warnings.kept_flags;
  }
  doc["warnings"] = {{"forced_outliers", forced}, {"kept_flags", kept}};

  if (ds.has_truth()) {
    const int kc = ds.niches();
    int inliers = 0;
    int correct = 0;
    int outliers = 0;
    int recalled = 0;
    for (Eigen::Index i = 0; i < ds.proteins(); ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (ds.labels[ui] != kUnknownLabel)
        continue;
      if (ds.true_outlier[ui]) {
        ++outliers;
        recalled += s.allocation(i, kc) > 0.5 ? 1 : 0;
      } else {
        ++inliers;
        Eigen::Index best = 0;
        s.allocation.row(i).head(kc).maxCoeff(&best);
        correct += best == ds.true_component[ui] ? 1 : 0;
      }
    }
    doc["truth"] = {{"unlabelled_inliers", inliers},
                    {"allocation_accuracy", inliers ? json(double(correct) / inliers) : json()},
                    {"outliers", outliers},
                    {"outlier_recall", outliers ? json(double(recalled) / outliers) : json()}};
  }
  return doc;
}

void write_fit_outputs(const FitResult &r, const ProfileDataset &ds, const std::filesystem::path &dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const auto &s = r.summary;
  const int kc = ds.niches();

  {
    auto out = open_out(dir / "allocations.csv");
    out << "id,marker";
    for (const auto &name : ds.niche_names)
      out << ',' << name;
    out << ",outlier,entropy,prediction\n";
    for (Eigen::Index i = 0; i < ds.proteins(); ++i) {
      out << ds.ids[static_cast<std::size_t>(i)] << ',' << ds.labels[static_cast<std::size_t>(i)];
      for (int k = 0; k <= kc; ++k)
        out << ',' << csv::format_double(s.allocation(i, k));
      Eigen::Index best = 0;
      s.allocation.row(i).head(kc).maxCoeff(&best);
      out << ',' << csv::format_double(s.entropy[i]) << ','
          << ds.niche_names[static_cast<std::size_t>(best)] << '\n';
    }
  }

  write_json(dir / "summary.json", summary_json(r, ds));

  {
    const Pca p = pca(ds.x);
    auto out = open_out(dir / "pca.csv");
    out << "id,marker,pc1,pc2\n";
    for (Eigen::Index i = 0; i < ds.proteins(); ++i)
      out << ds.ids[static_cast<std::size_t>(i)] << ',' << ds.labels[static_cast<std::size_t>(i)]
          << ',' << csv::format_double(p.scores(i, 0)) << ',' << csv::format_double(p.scores(i, 1))
          << '\n';
  }

  {
    const auto names = chain::monitored_names(kc);
    auto out = open_out(dir / "traces.csv");
    out << "chain,iteration";
    for (const auto &name : names)
      out << ',' << display_name(name, ds.niche_names);
    out << '\n';
    for (std::size_t c = 0; c < r.records.size(); ++c) {
      std::vector<std::vector<double>> cols;
      for (const auto &name : names)
        cols.push_back(chain::monitored_trace(r.records[c], name));
      for (std::size_t t = 0; t < r.records[c].size(); ++t) {
        out << c << ',' << r.records[c].iteration[t];
        for (const auto &col : cols)
          out << ',' << csv::format_double(col[t]);
        out << '\n';
      }
    }
  }

  // Wall-clock figures vary run to run, so they live apart from the
  // deterministic outputs.
  json timing;
  timing["seconds"] = r.seconds;
  json chains = json::array();
  for (const auto &rec : r.records)
    chains.push_back(rec.total_seconds);
  timing["chain_seconds"] = chains;
  json eps = json::object();
  for (const auto &[name, d] : s.diagnostics)
    eps[display_name(name, ds.niche_names)] = optional_number(d.ess_defined, d.ess_per_second);
  timing["ess_per_second"] = eps;
  write_json(dir / "timing.json", timing);
}

void CvOptions::validate() const {
  if (splits < 1)
    throw ValidationError("cv: splits must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ValidationError("cv: test_fraction must lie in (0, 1)");
  if (min_class_size < 2)
    throw ValidationError("cv: min_class_size must be >= 2");
  if (threads < 0)
    throw ValidationError("cv: threads must be >= 0");
  run.validate();
}

Split stratified_split(const ProfileDataset &ds, double test_fraction, int min_class_size, Rng &rng) {
  Split out;
  for (int k = 0; k < ds.niches(); ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.labels.size(); ++i)
      if (ds.label_index(i) == k)
        members.push_back(i);
    const int nk = static_cast<int>(members.size());
    if (nk < min_class_size) {
      std::ostringstream msg;
      msg << "class '" << ds.niche_names[static_cast<std::size_t>(k)] << "' has " << nk
          << " labelled proteins; stratified split needs at least " << min_class_size;
      throw ValidationError(msg.str());
    }
    std::shuffle(members.begin(), members.end(), rng);
    const int n_test = std::clamp(static_cast<int>(std::lround(test_fraction * nk)), 1, nk - 1);
    out.test.insert(out.test.end(), members.begin(), members.begin() + n_test);
    out.train.insert(out.train.end(), members.begin() + n_test, members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

CvReport cross_validate(const ProfileDataset &ds, const CvOptions &opts) {
  opts.validate();
  ds.validate();
  const auto start = Clock::now();
  const auto splits = static_cast<std::size_t>(opts.splits);

  CvReport report;
  report.losses.assign(splits, 0.0);
  report.split_seconds.assign(splits, 0.0);
  for (std::size_t s = 0; s < splits; ++s)
    report.split_seeds.push_back(mix_seed(opts.seed, s + 1));

  // Infeasible stratification is reported before any work starts.
  {
    Rng probe = make_rng(opts.seed, 0);
    stratified_split(ds, opts.test_fraction, opts.min_class_size, probe);
  }

  const mixture::MixtureData full = ds.to_mixture();
  auto run_split = [&](std::size_t s) {
    const auto split_start = Clock::now();
    const std::uint64_t seed = report.split_seeds[s];
    Rng rng = make_rng(seed, 0);
    const Split split = stratified_split(ds, opts.test_fraction, opts.min_class_size, rng);

    mixture::MixtureData masked = full;
    for (std::size_t i : split.test) {
      masked.labels[i] = mixture::kUnlabelled;
      if (opts.permutation_control) {
        Eigen::VectorXd row = masked.profiles.row(static_cast<Eigen::Index>(i)).transpose();
        std::shuffle(row.data(), row.data() + row.size(), rng);
        masked.profiles.row(static_cast<Eigen::Index>(i)) = row.transpose();
      }
    }

    chain::RunConfig rc = opts.run;
    rc.seed = seed;
    rc.keep_allocations = false;
    const auto init = chain::fit_marker_hypers(masked);
    std::vector<chain::ChainRecord> records;
    for (int c = 0; c < rc.chains; ++c)
      records.push_back(chain::run_chain(masked, rc, opts.priors, static_cast<std::uint64_t>(c), &init));
    const auto summary = chain::summarise(records);

    // Truth is read from the unmasked dataset only at scoring time.
    double loss = 0.0;
    for (std::size_t i : split.test) {
      const Eigen::VectorXd p = niche_probabilities(summary, static_cast<Eigen::Index>(i), full.components);
      loss += quadratic_loss(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                             full.labels[i]);
    }
    report.losses[s] = loss / static_cast<double>(split.test.size());
    report.split_seconds[s] = seconds_since(split_start);
  };

  unsigned workers = opts.threads > 0 ? static_cast<unsigned>(opts.threads)
                                      : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(splits));
  std::vector<std::exception_ptr> errors(splits);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t s = next++; s < splits; s = next++) {
      try {
        run_split(s);
      } catch (...) {
        errors[s] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back(worker);
    for (auto &t : pool)
      t.join();
  }
  for (const auto &e : errors)
    if (e)
      std::rethrow_exception(e);
  report.seconds = seconds_since(start);
  return report;
}

json cv_json(const CvReport &report, const CvOptions &opts) {
  json doc;
  doc["schema"] = 1;
  doc["splits"] = opts.splits;
  doc["seed"] = opts.seed;
  doc["test_fraction"] = opts.test_fraction;
  doc["permutation_control"] = opts.permutation_control;
  doc["config"] = config_json(opts.run, opts.priors);
  doc["losses"] = report.losses;
  doc["split_seeds"] = report.split_seeds;
  if (!report.losses.empty()) {
    double mean = 0.0;
    for (double l : report.losses)
      mean += l;
    mean /= static_cast<double>(report.losses.size());
    doc["loss_summary"] = {{"mean", mean},
                           {"median", diag::quantile(report.losses, 0.5)},
                           {"q25", diag::quantile(report.losses, 0.25)},
                           {"q75", diag::quantile(report.losses, 0.75)},
                           {"min", *std::min_element(report.losses.begin(), report.losses.end())},
                           {"max", *std::max_element(report.losses.begin(), report.losses.end())}};
  }
  return doc;
}

Pca pca(const Eigen::MatrixXd &x) {
  if (x.rows() < 2 || x.cols() < 2)
    throw ValidationError("pca: need at least 2 rows and 2 columns");
  const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(x.rows() - 1);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index d = cov.rows();
  Pca out;
  Eigen::MatrixXd loadings(d, 2);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - c);
    // Fix the sign so the largest loading is positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0)
      v = -v;
    loadings.col(c) = v;
    out.variance[c] = std::max(0.0, eig.eigenvalues()[d - 1 - c]);
  }
  out.scores = centred * loadings;
  return out;
}

json diagnose_traces(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw ValidationError(path.string() + ": empty trace file");
  const auto header = csv::split(line);
  if (header.size() < 3 || header[0] != "chain" || header[1] != "iteration")
    throw ValidationError(path.string() + ": header must start with chain,iteration");
  const std::size_t m = header.size() - 2;

  std::vector<std::string> chain_ids;
  std::map<std::string, std::vector<std::vector<double>>> by_chain;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty())
      continue;
    const auto fields = csv::split(line);
    if (fields.size() != header.size())
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": ragged row");
    const std::string id(fields[0]);
    auto [it, inserted] = by_chain.try_emplace(id, m);
    if (inserted)
      chain_ids.push_back(id);
    for (std::size_t j = 0; j < m; ++j) {
      double v = 0.0;
      if (!csv::parse_double(fields[j + 2], v))
        throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": non-numeric value '" +
                              std::string(fields[j + 2]) + "'");
      it->second[j].push_back(v);
    }
  }
  if (chain_ids.empty())
    throw ValidationError(path.string() + ": no trace rows");

  std::size_t len = by_chain[chain_ids.front()].front().size();
  for (const auto &id : chain_ids)
    len = std::min(len, by_chain[id].front().size());

  // Optional wall-clock times written next to the traces.
  std::vector<double> chain_seconds;
  const auto timing_path = path.parent_path() / "timing.json";
  if (std::ifstream t(timing_path); t) {
    try {
      const json timing = json::parse(t);
      if (timing.contains("chain_seconds"))
        chain_seconds = timing["chain_seconds"].get<std::vector<double>>();
    } catch (const json::exception &) {
      chain_seconds.clear();
    }
  }
  const bool timed = chain_seconds.size() == chain_ids.size();

  json doc;
  doc["schema"] = 1;
  doc["chains"] = chain_ids.size();
  doc["length"] = len;
  json scalars = json::object();
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<std::vector<double>> traces;
    for (const auto &id : chain_ids) {
      const auto &full = by_chain[id][j];
      traces.emplace_back(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(len));
    }
    json entry = {{"rhat", nullptr}, {"rhat_upper", nullptr}, {"ess", nullptr}};
    if (traces.size() >= 2 && len >= 10) {
      const auto rh = diag::gelman_rubin(traces);
      entry["rhat"] = optional_number(rh.defined, rh.point);
      entry["rhat_upper"] = optional_number(rh.defined, rh.upper95);
    }
    if (len >= 100) {
      double ess = 0.0;
      for (const auto &t : traces)
        ess += diag::effective_sample_size(t, 0.0).ess;
      entry["ess"] = ess;
      if (timed) {
        double secs = 0.0;
        for (double s : chain_seconds)
          secs += s;
        entry["ess_per_second"] = secs > 0.0 ? json(ess / secs) : json();
      }
    }
    scalars[std::string(header[j + 2])] = entry;
  }
  doc["scalars"] = scalars;
  return doc;
}

} // namespace gpmix::workbench
