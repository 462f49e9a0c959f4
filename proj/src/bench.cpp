#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

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

double median(std::vector<double> v) { return diag::quantile(std::move(v), 0.5); }

// Median per-call time, with enough calls per sample to rise above timer noise.
template <class F> double time_call(F &&f, int repeats) {
  int inner = 1;
  for (;;) {
    const auto start = Clock::now();
    for (int r = 0; r < inner; ++r)
      f();
    if (seconds_since(start) >= 2e-3 || inner >= (1 << 16))
      break;
    inner *= 2;
  }
  std::vector<double> samples;
  for (int r = 0; r < repeats; ++r) {
    const auto start = Clock::now();
    for (int i = 0; i < inner; ++i)
      f();
    samples.push_back(seconds_since(start) / inner);
  }
  return median(samples);
}

std::array<double, 3> ess3(const std::vector<Eigen::Vector3d> &trace, double seconds,
                           std::array<double, 3> &per_second) {
  std::array<double, 3> out{};
  std::vector<double> coord(trace.size());
  for (int j = 0; j < 3; ++j) {
    for (std::size_t t = 0; t < trace.size(); ++t)
      coord[t] = trace[t][j];
    out[static_cast<std::size_t>(j)] = diag::effective_sample_size(coord, seconds).ess;
    per_second[static_cast<std::size_t>(j)] = seconds > 0.0 ? out[static_cast<std::size_t>(j)] / seconds : 0.0;
  }
  return out;
}

} // namespace

LinalgBench bench_linalg(const LinalgBenchOptions &opts) {
  if (opts.repeats < 1)
    throw ValidationError("bench: repeats must be >= 1");
  const auto start = Clock::now();
  Rng rng = make_rng(opts.seed, 0);
  LinalgBench out;
  double t256 = 0.0;
  double t512 = 0.0;
  for (int n : opts.members) {
    for (int d : opts.dims) {
      if (d < 1 || n < 1)
        throw ValidationError("bench: sizes must be positive");
      const GpHypers h{std::log(1.0 + 2.0 * uniform01(rng)), -0.5 + uniform01(rng),
                       -1.5 + uniform01(rng)};
      const auto cov = gp::marginal_covariance(gp::FractionGrid(d), h, n);
      LinalgBenchRow row;
      row.d = d;
      row.n = n;
      double fast_logdet = 0.0;
      row.fast_seconds = time_call([&] { fast_logdet = linalg::trench_inverse(cov).log_det; },
                                   opts.repeats);
      if (cov.dim() > linalg::kDenseGuard) {
        try {
          linalg::dense_oracle(cov);
        } catch (const ValidationError &) {
          row.dense_refused = true;
        }
      }
      if (!row.dense_refused) {
        double dense_logdet = 0.0;
        std::vector<double> samples;
        for (int r = 0; r < opts.repeats; ++r) {
          const auto t0 = Clock::now();
          dense_logdet = linalg::dense_oracle(cov).log_det;
          samples.push_back(seconds_since(t0));
        }
        row.dense_seconds = median(samples);
        row.max_abs_diff = std::abs(dense_logdet - fast_logdet);
      }
      if (n == 10 && d == 256)
        t256 = row.fast_seconds;
      if (n == 10 && d == 512)
        t512 = row.fast_seconds;
      out.rows.push_back(row);
    }
  }
  out.ratio_512_256 = t256 > 0.0 && t512 > 0.0 ? t512 / t256 : 0.0;
  out.seconds = seconds_since(start);
  return out;
}

SamplerBench bench_sampler(const SamplerBenchOptions &opts) {
  if (opts.iterations < 100 + opts.burnin || opts.burnin < 0)
    throw ValidationError("bench: need at least 100 iterations after burn-in");
  if (opts.members < 1 || opts.fractions < 2)
    throw ValidationError("bench: invalid component size");
  opts.hmc.validate();
  opts.prior.validate();
  const auto start = Clock::now();

  Rng data_rng = make_rng(opts.seed, 0);
  const ComponentDraw draw = draw_component(opts.truth, opts.fractions, opts.members, data_rng);
  const auto stats = gp::ComponentStats::from_columns(draw.x);
  const auto grid = hyper::default_start_grid();
  const GpHypers init = hyper::optimize_empirical_bayes(stats, grid).theta_hat;

  SamplerBench out;
  {
    Rng rng = make_rng(opts.seed, 1);
    GpHypers h = init;
    std::vector<Eigen::Vector3d> trace;
    int accepted = 0;
    const auto t0 = Clock::now();
    for (int t = 0; t < opts.iterations; ++t) {
      const auto r = hyper::mh_step(h, stats, opts.prior, rng, opts.mh_proposal_sd);
      h = r.state;
      accepted += r.accepted ? 1 : 0;
      if (t >= opts.burnin)
        trace.push_back(h.vec());
    }
    SamplerBenchRow row;
    row.method = "MH";
    row.iterations = opts.iterations;
    row.seconds = seconds_since(t0);
    row.acceptance = static_cast<double>(accepted) / opts.iterations;
    row.ess = ess3(trace, row.seconds, row.ess_per_second);
    out.rows.push_back(row);
  }
  {
    Rng rng = make_rng(opts.seed, 2);
    GpHypers h = init;
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    std::vector<Eigen::Vector3d> trace;
    int accepted = 0;
    const auto t0 = Clock::now();
    for (int t = 0; t < opts.iterations; ++t) {
      const auto r = hyper::hmc_step(h, stats, opts.prior, opts.hmc, p, rng);
      h = r.state;
      p = r.momentum;
      accepted += r.accepted ? 1 : 0;
      if (t >= opts.burnin)
        trace.push_back(h.vec());
    }
    SamplerBenchRow row;
    row.method = "HMC";
    row.iterations = opts.iterations;
    row.seconds = seconds_since(t0);
    row.acceptance = static_cast<double>(accepted) / opts.iterations;
    row.ess = ess3(trace, row.seconds, row.ess_per_second);
    out.rows.push_back(row);
  }
  for (std::size_t j = 0; j < 3; ++j) {
    const double mh = out.rows[0].ess_per_second[j];
    out.hmc_over_mh[j] = mh > 0.0 ? out.rows[1].ess_per_second[j] / mh
                                  : std::numeric_limits<double>::infinity();
  }
  out.seconds = seconds_since(start);
  return out;
}

json to_json(const LinalgBench &b) {
  json rows = json::array();
  for (const auto &r : b.rows)
    rows.push_back({{"D", r.d},
                    {"n", r.n},
                    {"fast_seconds", r.fast_seconds},
                    {"dense_seconds", r.dense_refused ? json() : json(r.dense_seconds)},
                    {"dense_refused", r.dense_refused},
                    {"logdet_abs_diff", r.dense_refused ? json() : json(r.max_abs_diff)}});
  return {{"schema", 1},
          {"suite", "linalg"},
          {"dense_guard", linalg::kDenseGuard},
          {"rows", rows},
          {"ratio_512_256_n10", b.ratio_512_256 > 0.0 ? json(b.ratio_512_256) : json()},
          {"seconds", b.seconds}};
}

json to_json(const SamplerBench &b) {
  json rows = json::array();
  for (const auto &r : b.rows)
    rows.push_back({{"method", r.method},
                    {"iterations", r.iterations},
                    {"acceptance_rate", r.acceptance},
                    {"ess_length_scale", r.ess_per_second[0]},
                    {"ess_amplitude", r.ess_per_second[1]},
                    {"ess_noise", r.ess_per_second[2]},
                    {"raw_ess", {r.ess[0], r.ess[1], r.ess[2]}},
                    {"seconds", r.seconds}});
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(); };
  return {{"schema", 1},
          {"suite", "sampler"},
          {"columns",
           {"method", "iterations", "acceptance_rate", "ess_length_scale", "ess_amplitude", "ess_noise"}},
          {"rows", rows},
          {"hmc_over_mh",
           {finite_or_null(b.hmc_over_mh[0]), finite_or_null(b.hmc_over_mh[1]),
            finite_or_null(b.hmc_over_mh[2])}},
          {"seconds", b.seconds}};
}

} // namespace gpmix::workbench
