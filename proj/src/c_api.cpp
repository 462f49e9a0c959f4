#include "gpmix/gpmix.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include "gpmix/diagnostics.hpp"
#include "gpmix/error.hpp"
#include "gpmix/workbench.hpp"

struct gpmix_dataset {
  gpmix::workbench::ProfileDataset data;
};

struct gpmix_fit {
  gpmix::workbench::ProfileDataset data;
  gpmix::workbench::FitResult result;
};

namespace {

namespace wb = gpmix::workbench;

thread_local std::string last_error;

int fail(int status, const std::string &msg) {
  last_error = msg;
  return status;
}

template <class F> int guarded(F &&f) {
  try {
    last_error.clear();
    f();
    return GPMIX_OK;
  } catch (const gpmix::ValidationError &e) {
    return fail(GPMIX_ERR_VALIDATION, e.what());
  } catch (const gpmix::NumericalError &e) {
    return fail(GPMIX_ERR_NUMERICAL, e.what());
  } catch (const gpmix::IoError &e) {
    return fail(GPMIX_ERR_IO, e.what());
  } catch (const std::bad_alloc &) {
    return fail(GPMIX_ERR_INTERNAL, "out of memory");
  } catch (const std::exception &e) {
    return fail(GPMIX_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(GPMIX_ERR_INTERNAL, "unknown error");
  }
}

char *dup_string(const std::string &s) {
  char *out = static_cast<char *>(std::malloc(s.size() + 1));
  if (!out)
    throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

gpmix::chain::RunConfig to_config(const gpmix_run_options &o) {
  gpmix::chain::RunConfig c;
  c.iterations = o.iterations;
  c.burnin = o.burnin;
  c.thin = o.thin;
  c.hyper_every = o.hyper_every;
  switch (o.sampler) {
  case GPMIX_SAMPLER_HMC:
    c.sampler = gpmix::chain::HyperSampler::hmc;
    break;
  case GPMIX_SAMPLER_MH:
    c.sampler = gpmix::chain::HyperSampler::mh;
    break;
  case GPMIX_SAMPLER_EB:
    c.sampler = gpmix::chain::HyperSampler::fixed_eb;
    break;
  default:
    throw gpmix::ValidationError("unknown sampler " + std::to_string(o.sampler));
  }
  switch (o.mode) {
  case GPMIX_MODE_SAMPLED:
    c.mode = gpmix::mixture::AllocationMode::sampled_function;
    break;
  case GPMIX_MODE_MARGINALISED:
    c.mode = gpmix::mixture::AllocationMode::marginalised;
    break;
  default:
    throw gpmix::ValidationError("unknown mode " + std::to_string(o.mode));
  }
  c.chains = o.chains;
  c.seed = o.seed;
  c.outlier_component = o.outlier_component != 0;
  c.semi_supervised_hypers = o.semi_supervised_hypers != 0;
  c.mh_proposal_sd = o.mh_proposal_sd;
  c.hmc.leapfrog_steps = o.leapfrog_steps;
  c.hmc.step_min = o.step_min;
  c.hmc.step_max = o.step_max;
  c.hmc.refresh = o.refresh;
  c.validate();
  return c;
}

gpmix::chain::Priors to_priors(const gpmix_run_options &o) {
  gpmix::chain::Priors p;
  p.hyper.mean = {o.prior_mean[0], o.prior_mean[1], o.prior_mean[2]};
  p.hyper.sd = {o.prior_sd[0], o.prior_sd[1], o.prior_sd[2]};
  p.hyper.validate();
  return p;
}

} // namespace

extern "C" {

const char *gpmix_version(void) { return "0.1.0"; }

const char *gpmix_last_error(void) { return last_error.c_str(); }

void gpmix_string_free(char *s) { std::free(s); }

int gpmix_dataset_load(const char *path, int center, gpmix_dataset **out) {
  if (!path || !out)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_dataset_load: null argument");
  *out = nullptr;
  return guarded([&] {
    wb::LoadOptions opts;
    opts.center = center != 0;
    auto ds = std::make_unique<gpmix_dataset>();
    ds->data = wb::load_dataset(path, opts);
    *out = ds.release();
  });
}

int gpmix_dataset_save(const gpmix_dataset *ds, const char *path) {
  if (!ds || !path)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_dataset_save: null argument");
  return guarded([&] { wb::save_dataset(ds->data, path); });
}

int gpmix_dataset_save_truth(const gpmix_dataset *ds, const char *path) {
  if (!ds || !path)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_dataset_save_truth: null argument");
  return guarded([&] { wb::save_truth(ds->data, path); });
}

int gpmix_dataset_shape(const gpmix_dataset *ds, size_t *proteins, size_t *fractions, size_t *niches) {
  if (!ds)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_dataset_shape: null dataset");
  if (proteins)
    *proteins = static_cast<size_t>(ds->data.proteins());
  if (fractions)
    *fractions = static_cast<size_t>(ds->data.fractions());
  if (niches)
    *niches = static_cast<size_t>(ds->data.niches());
  return GPMIX_OK;
}

int gpmix_dataset_profiles(const gpmix_dataset *ds, double *out) {
  if (!ds || !out)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_dataset_profiles: null argument");
  const auto &x = ds->data.x;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      out[i * x.cols() + j] = x(i, j);
  return GPMIX_OK;
}

void gpmix_dataset_free(gpmix_dataset *ds) { delete ds; }

void gpmix_sim_options_default(gpmix_sim_options *opts) {
  if (!opts)
    return;
  const wb::SimOptions d;
  opts->components = d.components;
  opts->fractions = d.fractions;
  opts->per_component = d.per_component;
  opts->theta[0] = d.theta[0].theta1;
  opts->theta[1] = d.theta[0].theta2;
  opts->theta[2] = d.theta[0].theta3;
  opts->eps = d.eps;
  opts->marker_fraction = d.marker_fraction;
  opts->seed = d.seed;
  opts->outlier_scale = d.outlier_scale;
  opts->low_noise_markers = 0;
}

int gpmix_simulate(const gpmix_sim_options *opts, gpmix_dataset **out) {
  if (!opts || !out)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_simulate: null argument");
  *out = nullptr;
  return guarded([&] {
    wb::SimOptions so;
    so.components = opts->components;
    so.fractions = opts->fractions;
    so.per_component = opts->per_component;
    so.theta = {gpmix::gp::GpHypers{opts->theta[0], opts->theta[1], opts->theta[2]}};
    so.eps = opts->eps;
    so.marker_fraction = opts->marker_fraction;
    so.seed = opts->seed;
    so.outlier_scale = opts->outlier_scale;
    so.markers = opts->low_noise_markers ? wb::MarkerSelection::low_noise : wb::MarkerSelection::random;
    auto ds = std::make_unique<gpmix_dataset>();
    ds->data = wb::simulate(so).data;
    *out = ds.release();
  });
}

void gpmix_run_options_default(gpmix_run_options *opts) {
  if (!opts)
    return;
  const gpmix::chain::RunConfig c;
  const gpmix::chain::Priors p;
  opts->iterations = c.iterations;
  opts->burnin = c.burnin;
  opts->thin = c.thin;
  opts->hyper_every = c.hyper_every;
  opts->sampler = GPMIX_SAMPLER_HMC;
  opts->mode = GPMIX_MODE_SAMPLED;
  opts->chains = c.chains;
  opts->seed = c.seed;
  opts->outlier_component = c.outlier_component ? 1 : 0;
  opts->semi_supervised_hypers = c.semi_supervised_hypers ? 1 : 0;
  for (int j = 0; j < 3; ++j) {
    opts->prior_mean[j] = p.hyper.mean[j];
    opts->prior_sd[j] = p.hyper.sd[j];
  }
  opts->mh_proposal_sd = c.mh_proposal_sd;
  opts->leapfrog_steps = c.hmc.leapfrog_steps;
  opts->step_min = c.hmc.step_min;
  opts->step_max = c.hmc.step_max;
  opts->refresh = c.hmc.refresh;
}

int gpmix_fit_run(const gpmix_dataset *ds, const gpmix_run_options *opts, gpmix_fit **out) {
  if (!ds || !opts || !out)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_fit_run: null argument");
  *out = nullptr;
  return guarded([&] {
    auto f = std::make_unique<gpmix_fit>();
    f->data = ds->data;
    f->result = wb::fit(f->data, to_config(*opts), to_priors(*opts));
    *out = f.release();
  });
}

int gpmix_fit_allocation(const gpmix_fit *fit, double *out) {
  if (!fit || !out)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_fit_allocation: null argument");
  const auto &a = fit->result.summary.allocation;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index k = 0; k < a.cols(); ++k)
      out[i * a.cols() + k] = a(i, k);
  return GPMIX_OK;
}

int gpmix_fit_entropy(const gpmix_fit *fit, double *out) {
  if (!fit || !out)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_fit_entropy: null argument");
  const auto &e = fit->result.summary.entropy;
  std::copy(e.data(), e.data() + e.size(), out);
  return GPMIX_OK;
}

int gpmix_fit_summary_json(const gpmix_fit *fit, char **json) {
  if (!fit || !json)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_fit_summary_json: null argument");
  *json = nullptr;
  return guarded([&] { *json = dup_string(wb::summary_json(fit->result, fit->data).dump(2)); });
}

int gpmix_fit_write(const gpmix_fit *fit, const char *dir) {
  if (!fit || !dir)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_fit_write: null argument");
  return guarded([&] { wb::write_fit_outputs(fit->result, fit->data, dir); });
}

void gpmix_fit_free(gpmix_fit *fit) { delete fit; }

void gpmix_cv_options_default(gpmix_cv_options *opts) {
  if (!opts)
    return;
  const wb::CvOptions d;
  opts->splits = d.splits;
  opts->seed = d.seed;
  opts->test_fraction = d.test_fraction;
  opts->permutation_control = 0;
  opts->threads = d.threads;
}

int gpmix_cross_validate(const gpmix_dataset *ds, const gpmix_run_options *run,
                         const gpmix_cv_options *opts, double *losses, char **json, double *seconds) {
  if (!ds || !run || !opts)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_cross_validate: null argument");
  if (json)
    *json = nullptr;
  return guarded([&] {
    wb::CvOptions cv;
    cv.splits = opts->splits;
    cv.seed = opts->seed;
    cv.test_fraction = opts->test_fraction;
    cv.permutation_control = opts->permutation_control != 0;
    cv.threads = opts->threads;
    cv.run = to_config(*run);
    cv.priors = to_priors(*run);
    const auto report = wb::cross_validate(ds->data, cv);
    if (losses)
      std::copy(report.losses.begin(), report.losses.end(), losses);
    if (seconds)
      *seconds = report.seconds;
    if (json)
      *json = dup_string(wb::cv_json(report, cv).dump(2));
  });
}

void gpmix_bench_options_default(gpmix_bench_options *opts) {
  if (!opts)
    return;
  const wb::SamplerBenchOptions s;
  opts->seed = 1;
  opts->repeats = wb::LinalgBenchOptions{}.repeats;
  opts->max_dim = 512;
  opts->iterations = s.iterations;
  opts->burnin = s.burnin;
}

int gpmix_bench(const char *suite, const gpmix_bench_options *opts, char **json) {
  if (!suite || !opts || !json)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_bench: null argument");
  *json = nullptr;
  return guarded([&] {
    const std::string name(suite);
    if (name == "linalg") {
      wb::LinalgBenchOptions lo;
      lo.seed = opts->seed;
      lo.repeats = opts->repeats;
      lo.dims.clear();
      for (int d = 16; d <= opts->max_dim; d *= 2)
        lo.dims.push_back(d);
      if (lo.dims.empty())
        throw gpmix::ValidationError("bench: max_dim must be >= 16");
      *json = dup_string(wb::to_json(wb::bench_linalg(lo)).dump(2));
    } else if (name == "sampler") {
      wb::SamplerBenchOptions so;
      so.seed = opts->seed;
      so.iterations = opts->iterations;
      so.burnin = opts->burnin;
      *json = dup_string(wb::to_json(wb::bench_sampler(so)).dump(2));
    } else {
      throw gpmix::ValidationError("unknown bench suite '" + name + "' (expected linalg or sampler)");
    }
  });
}

int gpmix_diagnose(const char *traces_path, char **json) {
  if (!traces_path || !json)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_diagnose: null argument");
  *json = nullptr;
  return guarded([&] { *json = dup_string(wb::diagnose_traces(traces_path).dump(2)); });
}

int gpmix_quadratic_loss(const double *pred, size_t k, int truth, double *out) {
  if (!pred || !out)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_quadratic_loss: null argument");
  return guarded([&] { *out = wb::quadratic_loss(std::span<const double>(pred, k), truth); });
}

int gpmix_structured_logdet(const double *a_row, size_t d, double sigma2, int n, double *out) {
  if (!a_row || !out || d == 0 || n < 1 || !(sigma2 > 0.0))
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_structured_logdet: invalid argument");
  return guarded([&] {
    gpmix::linalg::StructuredCovariance cov;
    cov.a.first_row = Eigen::Map<const Eigen::VectorXd>(a_row, static_cast<Eigen::Index>(d));
    cov.sigma2 = sigma2;
    cov.n = n;
    *out = gpmix::linalg::trench_inverse(cov).log_det;
  });
}

int gpmix_gelman_rubin(const double *chains, size_t m, size_t len, double *rhat, double *upper95) {
  if (!chains || !rhat)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_gelman_rubin: null argument");
  return guarded([&] {
    std::vector<std::vector<double>> traces;
    for (size_t c = 0; c < m; ++c)
      traces.emplace_back(chains + c * len, chains + (c + 1) * len);
    const auto r = gpmix::diag::gelman_rubin(traces);
    if (!r.defined)
      throw gpmix::NumericalError("R-hat undefined: zero within-chain variance");
    *rhat = r.point;
    if (upper95)
      *upper95 = r.upper95;
  });
}

int gpmix_ess(const double *trace, size_t len, double *out) {
  if (!trace || !out)
    return fail(GPMIX_ERR_ARGUMENT, "gpmix_ess: null argument");
  return guarded([&] { *out = gpmix::diag::effective_sample_size(std::span<const double>(trace, len), 0.0).ess; });
}

} // extern "C"
