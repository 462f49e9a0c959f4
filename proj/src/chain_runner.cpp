#include "gpmix/chain_runner.hpp"

#include <chrono>
#include <cstdio>
#include <limits>
#include <optional>
#include <exception>
#include <sstream>
#include <thread>

#include "gpmix/diagnostics.hpp"
#include "gpmix/error.hpp"

namespace gpmix::chain {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<gp::ComponentStats> marker_stats(const MixtureData &data) {
  std::vector<gp::ComponentStats> stats(static_cast<std::size_t>(data.components),
                                        gp::ComponentStats(data.fractions()));
  for (Eigen::Index i = 0; i < data.proteins(); ++i)
    if (data.labelled(i))
      stats[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])].add(
          data.profiles.row(i).transpose());
  return stats;
}

void require_markers(const MixtureData &data) {
  const auto stats = marker_stats(data);
  for (std::size_t k = 0; k < stats.size(); ++k)
    if (stats[k].n == 0) {
      std::ostringstream msg;
      msg << "component " << k << " has no labelled markers";
      throw ValidationError(msg.str());
    }
}

// Unlabelled proteins start in the component whose marker-only predictive
// density is highest.
void initial_allocation(mixture::MixtureState &state, const MixtureData &data,
                        const mixture::DirichletConfig &dir) {
  const gp::FractionGrid grid(static_cast<int>(data.fractions()));
  const auto stats = marker_stats(data);
  std::vector<gp::PredictiveDensity> preds;
  for (int k = 0; k < data.components; ++k)
    preds.emplace_back(gp::posterior(stats[static_cast<std::size_t>(k)],
                                     state.hypers[static_cast<std::size_t>(k)], grid));
  for (Eigen::Index i = 0; i < data.proteins(); ++i) {
    if (data.labelled(i))
      continue;
    int best = 0;
    double best_lp = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < data.components; ++k) {
      const double lp = preds[static_cast<std::size_t>(k)].log_density(data.profiles.row(i).transpose());
      if (lp > best_lp) {
        best_lp = lp;
        best = k;
      }
    }
    state.z[static_cast<std::size_t>(i)] = best;
  }
  Eigen::VectorXd counts = Eigen::VectorXd::Constant(data.components, dir.alpha / data.components);
  for (int zi : state.z)
    counts[zi] += 1.0;
  state.pi = counts / counts.sum();
}

} // namespace

void RunConfig::validate() const {
  if (iterations < 1)
    throw ValidationError("RunConfig: iterations must be >= 1");
  if (burnin < 0 || burnin > iterations)
    throw ValidationError("RunConfig: burnin must lie in [0, iterations]");
  if (thin < 1)
    throw ValidationError("RunConfig: thin must be >= 1");
  if (hyper_every < 1)
    throw ValidationError("RunConfig: hyper_every must be >= 1");
  if (chains < 1)
    throw ValidationError("RunConfig: chains must be >= 1");
  if (!(mh_proposal_sd > 0.0))
    throw ValidationError("RunConfig: mh_proposal_sd must be positive");
  hmc.validate();
}

int RunConfig::retained() const {
  const int kept = iterations - burnin;
  return kept <= 0 ? 0 : (kept + thin - 1) / thin;
}

std::vector<GpHypers> fit_marker_hypers(const MixtureData &data) {
  data.validate();
  require_markers(data);
  const auto stats = marker_stats(data);
  const auto grid = hyper::default_start_grid();
  std::vector<GpHypers> out;
  for (const auto &s : stats)
    out.push_back(hyper::optimize_empirical_bayes(s, grid).theta_hat);
  return out;
}

ChainRecord run_chain(const MixtureData &data, const RunConfig &config, const Priors &priors,
                      std::uint64_t chain_index, const std::vector<GpHypers> *initial_hypers) {
  config.validate();
  data.validate();
  priors.hyper.validate();
  require_markers(data);

  const int kc = data.components;
  const Eigen::Index n = data.proteins();
  Rng rng = make_rng(config.seed, chain_index);

  const mixture::OutlierModel om =
      mixture::OutlierModel::from_profiles(data.profiles, priors.kappa, priors.outlier_u,
                                           priors.outlier_v);
  std::optional<mixture::OutlierDensity> outlier;
  if (config.outlier_component)
    outlier.emplace(om);

  ChainRecord rec;
  rec.initial_hypers = initial_hypers ? *initial_hypers : fit_marker_hypers(data);
  if (static_cast<int>(rec.initial_hypers.size()) != kc)
    throw ValidationError("run_chain: initial hyperparameters do not match K");
  rec.hyper_proposals.assign(static_cast<std::size_t>(kc), 0);
  rec.hyper_accepts.assign(static_cast<std::size_t>(kc), 0);
  rec.alloc_sum = Eigen::MatrixXd::Zero(n, kc + 1);
  rec.outlier_sum = Eigen::VectorXd::Zero(n);
  rec.entropy_sum = Eigen::VectorXd::Zero(n);

  mixture::MixtureState state = mixture::MixtureState::initial(data, rec.initial_hypers, om);
  if (!config.outlier_component)
    state.eps = 0.0;
  initial_allocation(state, data, priors.dirichlet);

  const auto markers = marker_stats(data);
  std::vector<Eigen::Vector3d> momentum(static_cast<std::size_t>(kc), Eigen::Vector3d::Zero());
  Eigen::MatrixXd alloc;
  Eigen::VectorXd outlier_probs = Eigen::VectorXd::Zero(n);
  const bool sampled = config.mode == AllocationMode::sampled_function;

  const auto start = Clock::now();
  for (int t = 0; t < config.iterations; ++t) {
    if (sampled)
      mixture::draw_component_functions(state, data, rng);

    mixture::sample_indicators(state, data, config.mode, priors.dirichlet, rng, alloc,
                               rec.warnings);

    if (outlier) {
      const Eigen::VectorXd ll = mixture::assigned_loglik(state, data, config.mode);
      mixture::sample_outlier_flags(state, data, ll, *outlier, rng, outlier_probs, rec.warnings);
      state.eps = mixture::sample_epsilon(state.phi, data.labels, om, rng);
    }

    if (sampled) {
      state.pi = mixture::sample_mixing_proportions(state.z, state.phi, kc, priors.dirichlet, rng);
    } else {
      Eigen::VectorXd counts = Eigen::VectorXd::Constant(kc, priors.dirichlet.alpha / kc);
      for (std::size_t i = 0; i < state.z.size(); ++i)
        if (state.phi[i])
          counts[state.z[i]] += 1.0;
      state.pi = counts / counts.sum();
    }

    if (config.sampler != HyperSampler::fixed_eb && (t + 1) % config.hyper_every == 0) {
      const auto stats =
          config.semi_supervised_hypers ? mixture::component_stats(state, data) : markers;
      for (int k = 0; k < kc; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        ++rec.hyper_proposals[uk];
        if (config.sampler == HyperSampler::hmc) {
          const auto r = hyper::hmc_step(state.hypers[uk], stats[uk], priors.hyper, config.hmc,
                                         momentum[uk], rng);
          state.hypers[uk] = r.state;
          momentum[uk] = r.momentum;
          rec.hyper_accepts[uk] += r.accepted ? 1 : 0;
        } else {
          const auto r = hyper::mh_step(state.hypers[uk], stats[uk], priors.hyper, rng,
                                        config.mh_proposal_sd);
          state.hypers[uk] = r.state;
          rec.hyper_accepts[uk] += r.accepted ? 1 : 0;
        }
      }
    }

    if (t >= config.burnin && (t - config.burnin) % config.thin == 0) {
      rec.iteration.push_back(t);
      rec.z.push_back(state.z);
      rec.phi.push_back(state.phi);
      rec.pi.push_back(state.pi);
      rec.eps.push_back(state.eps);
      rec.theta.push_back(state.hypers);
      rec.wall_seconds.push_back(seconds_since(start));
      if (config.keep_allocations) {
        rec.alloc.push_back(alloc);
        rec.outlier_prob.push_back(outlier_probs);
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        const double po = outlier_probs[i];
        rec.alloc_sum.row(i).head(kc) += (1.0 - po) * alloc.row(i);
        rec.alloc_sum(i, kc) += po;
        const Eigen::VectorXd row = alloc.row(i).transpose();
        rec.entropy_sum[i] += diag::shannon_entropy(std::span<const double>(row.data(), row.size()));
      }
      rec.outlier_sum += outlier_probs;
      ++rec.retained;
    }
  }
  rec.total_seconds = seconds_since(start);
  return rec;
}

std::vector<ChainRecord> run_chains(const MixtureData &data, const RunConfig &config,
                                    const Priors &priors,
                                    const std::vector<GpHypers> *initial_hypers) {
  config.validate();
  const std::vector<GpHypers> init = initial_hypers ? *initial_hypers : fit_marker_hypers(data);
  const auto count = static_cast<std::size_t>(config.chains);
  std::vector<ChainRecord> out(count);
  std::vector<std::exception_ptr> errors(count);
  if (count == 1 || std::thread::hardware_concurrency() <= 1) {
    for (std::size_t c = 0; c < count; ++c)
      out[c] = run_chain(data, config, priors, c, &init);
    return out;
  }
  std::vector<std::thread> workers;
  for (std::size_t c = 0; c < count; ++c)
    workers.emplace_back([&, c] {
      try {
        out[c] = run_chain(data, config, priors, c, &init);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  for (auto &w : workers)
    w.join();
  for (const auto &e : errors)
    if (e)
      std::rethrow_exception(e);
  return out;
}

Eigen::VectorXd entropy_mc_average(const ChainRecord &record) {
  if (record.alloc.empty())
    throw ValidationError("entropy_mc_average: record holds no allocation matrices");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(record.alloc.front().rows());
  for (const auto &a : record.alloc)
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const Eigen::VectorXd row = a.row(i).transpose();
      out[i] += diag::shannon_entropy(std::span<const double>(row.data(), row.size()));
    }
  return out / static_cast<double>(record.alloc.size());
}

std::vector<std::string> monitored_names(int components) {
  std::vector<std::string> names;
  for (int k = 0; k < components; ++k)
    for (int j = 1; j <= 3; ++j)
      names.push_back("theta" + std::to_string(j) + "[" + std::to_string(k) + "]");
  names.push_back("eps");
  return names;
}

std::vector<double> monitored_trace(const ChainRecord &record, const std::string &name) {
  if (name == "eps")
    return record.eps;
  int j = 0;
  int k = 0;
  if (std::sscanf(name.c_str(), "theta%d[%d]", &j, &k) != 2 || j < 1 || j > 3)
    throw ValidationError("unknown monitored scalar " + name);
  std::vector<double> out;
  for (const auto &th : record.theta) {
    if (k < 0 || k >= static_cast<int>(th.size()))
      throw ValidationError("monitored scalar out of range: " + name);
    out.push_back(th[static_cast<std::size_t>(k)].vec()[j - 1]);
  }
  return out;
}

PosteriorSummary summarise(const std::vector<ChainRecord> &records) {
  if (records.empty())
    throw ValidationError("summarise: no chain records");
  const Eigen::Index n = records.front().alloc_sum.rows();
  const int kc = static_cast<int>(records.front().alloc_sum.cols()) - 1;
  PosteriorSummary out;
  out.allocation = Eigen::MatrixXd::Zero(n, kc + 1);
  out.entropy = Eigen::VectorXd::Zero(n);
  for (const auto &r : records) {
    if (r.alloc_sum.rows() != n || r.alloc_sum.cols() != kc + 1)
      throw ValidationError("summarise: records disagree on dimensions");
    out.allocation += r.alloc_sum;
    out.entropy += r.entropy_sum;
    out.retained += r.retained;
  }
  if (out.retained == 0)
    throw ValidationError("summarise: no retained iterations");
  out.allocation /= static_cast<double>(out.retained);
  out.entropy /= static_cast<double>(out.retained);

  auto interval = [](std::vector<double> v) {
    Interval iv;
    double s = 0.0;
    for (double x : v)
      s += x;
    iv.mean = s / static_cast<double>(v.size());
    iv.lower = diag::quantile(v, 0.025);
    iv.upper = diag::quantile(std::move(v), 0.975);
    return iv;
  };

  const auto names = monitored_names(kc);
  out.hypers.resize(static_cast<std::size_t>(kc));
  for (const auto &name : names) {
    std::vector<double> pooled;
    std::vector<std::vector<double>> per_chain;
    for (const auto &r : records) {
      per_chain.push_back(monitored_trace(r, name));
      pooled.insert(pooled.end(), per_chain.back().begin(), per_chain.back().end());
    }
    if (name == "eps") {
      out.eps = interval(pooled);
    } else {
      int j = 0;
      int k = 0;
      std::sscanf(name.c_str(), "theta%d[%d]", &j, &k);
      out.hypers[static_cast<std::size_t>(k)][static_cast<std::size_t>(j - 1)] = interval(pooled);
    }

    ScalarDiagnostics sd;
    const std::size_t len = per_chain.front().size();
    if (per_chain.size() >= 2 && len >= 10) {
      const auto rh = diag::gelman_rubin(per_chain);
      sd.rhat = rh.point;
      sd.rhat_upper = rh.upper95;
      sd.rhat_defined = rh.defined;
    }
    if (len >= 100) {
      double seconds = 0.0;
      for (std::size_t c = 0; c < per_chain.size(); ++c) {
        sd.ess += diag::effective_sample_size(per_chain[c], 0.0).ess;
        seconds += records[c].total_seconds;
      }
      sd.ess_per_second = seconds > 0.0 ? sd.ess / seconds : 0.0;
      sd.ess_defined = true;
    }
    out.diagnostics[name] = sd;
  }

  out.hyper_acceptance.assign(static_cast<std::size_t>(kc), 0.0);
  for (int k = 0; k < kc; ++k) {
    double prop = 0.0;
    double acc = 0.0;
    for (const auto &r : records) {
      prop += r.hyper_proposals[static_cast<std::size_t>(k)];
      acc += r.hyper_accepts[static_cast<std::size_t>(k)];
    }
    out.hyper_acceptance[static_cast<std::size_t>(k)] = prop > 0.0 ? acc / prop : 0.0;
  }
  return out;
}

} // namespace gpmix::chain
