#include "gpmix/hyper_infer.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include "gpmix/error.hpp"

namespace gpmix::hyper {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double kinetic(const Eigen::Vector3d &p, const Eigen::Vector3d &mass_diag) {
  return 0.5 * p.cwiseQuotient(mass_diag).dot(p);
}

struct Objective {
  double f = kInf;
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  bool ok() const { return std::isfinite(f) && g.allFinite(); }
};

// f = -log marginal with fixed coordinates masked out of the gradient.
Objective evaluate(const ComponentStats &data, const Eigen::Vector3d &theta,
                   const std::array<bool, 3> &free) {
  Objective out;
  try {
    const ValueAndGradient vg = gp::log_marginal_and_grad(data, GpHypers::from(theta));
    out.f = -vg.value;
    out.g = -vg.gradient;
    for (int i = 0; i < 3; ++i)
      if (!free[static_cast<std::size_t>(i)])
        out.g[i] = 0.0;
  } catch (const NumericalError &) {
    out.f = kInf;
  }
  if (!out.ok())
    out.f = kInf;
  return out;
}

struct LocalResult {
  Eigen::Vector3d theta;
  Objective obj;
};

// The tolerance scales with |f|: at a few thousand nats the objective's
// rounding error swamps any decrease an absolute 1e-8 gradient could buy.
bool gradient_small(const Objective &o, double tol) {
  return o.g.norm() < tol * std::max(1.0, std::abs(o.f));
}

LocalResult lbfgs(const ComponentStats &data, Eigen::Vector3d theta, const LbfgsOptions &opts) {
  Objective cur = evaluate(data, theta, opts.free);
  if (!cur.ok())
    throw NotPositiveDefinite("start point not evaluable");

  std::deque<Eigen::Vector3d> s_hist;
  std::deque<Eigen::Vector3d> y_hist;
  std::deque<double> rho_hist;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    if (gradient_small(cur, opts.grad_tol))
      break;

    // Two-loop recursion.
    Eigen::Vector3d q = cur.g;
    const std::size_t m = s_hist.size();
    std::vector<double> alpha(m);
    for (std::size_t i = m; i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    double gamma = 1.0;
    if (m > 0)
      gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    else
      gamma = 1.0 / std::max(1.0, cur.g.norm());
    Eigen::Vector3d dir = gamma * q;
    for (std::size_t i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(dir);
      dir += (alpha[i] - beta) * s_hist[i];
    }
    dir = -dir;
    double slope = cur.g.dot(dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -cur.g / std::max(1.0, cur.g.norm());
      slope = cur.g.dot(dir);
    }

    // Backtracking line search with the Armijo condition.
    double step = 1.0;
    Objective trial;
    Eigen::Vector3d next;
    bool found = false;
    for (int ls = 0; ls < 60; ++ls) {
      next = theta + step * dir;
      trial = evaluate(data, next, opts.free);
      if (trial.ok() && trial.f <= cur.f + 1e-4 * step * slope) {
        found = true;
        break;
      }
      step *= 0.5;
    }
    if (!found) {
      // Near the optimum f stops resolving the Armijo decrease; take the full
      // step if it shrinks the gradient without raising f beyond rounding.
      next = theta + dir;
      trial = evaluate(data, next, opts.free);
      const double noise = 1e-12 * std::max(1.0, std::abs(cur.f));
      if (!trial.ok() || trial.f > cur.f + noise || trial.g.norm() >= cur.g.norm())
        break;
    }

    const Eigen::Vector3d s = next - theta;
    const Eigen::Vector3d y = trial.g - cur.g;
    const double sy = s.dot(y);
    if (sy > 1e-14 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    theta = next;
    cur = trial;
  }
  return {theta, cur};
}

} // namespace

void HyperPrior::validate() const {
  if (!(sd.array() > 0.0).all())
    throw ValidationError("HyperPrior: standard deviations must be positive");
}

double HyperPrior::log_density(const Eigen::Vector3d &theta) const {
  const Eigen::Vector3d z = (theta - mean).cwiseQuotient(sd);
  return -0.5 * z.squaredNorm() - sd.array().log().sum() - 1.5 * kLog2Pi;
}

Eigen::Vector3d HyperPrior::grad_log_density(const Eigen::Vector3d &theta) const {
  return -(theta - mean).cwiseQuotient(sd.cwiseProduct(sd));
}

void HmcConfig::validate() const {
  if (leapfrog_steps < 1)
    throw ValidationError("HmcConfig: leapfrog_steps must be >= 1");
  if (!(step_min > 0.0) || !(step_max >= step_min))
    throw ValidationError("HmcConfig: need 0 < step_min <= step_max");
  if (!(refresh >= 0.0 && refresh < 1.0))
    throw ValidationError("HmcConfig: refresh must lie in [0, 1)");
  if (!(mass_diag.array() > 0.0).all())
    throw ValidationError("HmcConfig: mass_diag must be positive");
}

std::vector<GpHypers> default_start_grid() {
  std::vector<GpHypers> grid;
  for (double t1 : {-1.0, 0.0, 1.0})
    for (double t2 : {-3.0, -2.0, -1.0})
      for (double t3 : {-5.0, -4.0, -3.0})
        grid.push_back({t1, t2, t3});
  return grid;
}

OptimReport optimize_empirical_bayes(const ComponentStats &data, std::span<const GpHypers> starts,
                                     const LbfgsOptions &opts) {
  if (data.n < 1)
    throw ValidationError("optimize_empirical_bayes: component has no members");
  if (starts.empty())
    throw ValidationError("optimize_empirical_bayes: no start points");

  OptimReport best;
  best.grid_starts = static_cast<int>(starts.size());
  bool have = false;
  double best_f = kInf;
  for (const GpHypers &start : starts) {
    LocalResult r;
    try {
      r = lbfgs(data, start.vec(), opts);
    } catch (const NumericalError &) {
      continue;
    }
    // Starts that reach the same optimum differ in f only by rounding; among
    // those prefer the smallest gradient.
    const double tie = 1e-12 * std::max(1.0, std::abs(best_f));
    const bool better = !have || r.obj.f < best_f - tie ||
                        (r.obj.f <= best_f + tie && r.obj.g.norm() < best.grad_norm);
    if (better) {
      have = true;
      best_f = r.obj.f;
      best.theta_hat = GpHypers::from(r.theta);
      best.log_ml = -r.obj.f;
      best.grad_norm = r.obj.g.norm();
    }
  }
  if (!have) {
    std::ostringstream msg;
    msg << "optimize_empirical_bayes: every start failed the positive-definiteness check:";
    for (const GpHypers &s : starts)
      msg << " (" << s.theta1 << "," << s.theta2 << "," << s.theta3 << ")";
    throw NumericalError(msg.str());
  }
  best.converged = best.grad_norm < opts.grad_tol * std::max(1.0, std::abs(best_f));
  return best;
}

ValueAndGradient log_posterior_and_grad(const ComponentStats &data, const GpHypers &h,
                                        const HyperPrior &prior) {
  ValueAndGradient out;
  if (data.n > 0)
    out = gp::log_marginal_and_grad(data, h);
  const Eigen::Vector3d theta = h.vec();
  out.value += prior.log_density(theta);
  out.gradient += prior.grad_log_density(theta);
  return out;
}

double log_posterior_or_neg_inf(const ComponentStats &data, const GpHypers &h,
                                const HyperPrior &prior) {
  if (!h.finite())
    return -kInf;
  try {
    double lp = prior.log_density(h.vec());
    if (data.n > 0)
      lp += gp::log_marginal(data, h);
    return std::isfinite(lp) ? lp : -kInf;
  } catch (const NumericalError &) {
    return -kInf;
  }
}

MhResult mh_step_with(const GpHypers &h, const ComponentStats &data, const HyperPrior &prior,
                      const Eigen::Vector3d &increment, double u) {
  const GpHypers proposal = GpHypers::from(h.vec() + increment);
  const double lp_new = log_posterior_or_neg_inf(data, proposal, prior);
  const double lp_old = log_posterior_or_neg_inf(data, h, prior);
  MhResult out;
  out.log_ratio = lp_new - lp_old;
  if (increment.isZero(0.0))
    out.log_ratio = 0.0;
  out.accepted = std::isfinite(lp_new) && std::log(u) <= out.log_ratio;
  out.state = out.accepted ? proposal : h;
  return out;
}

MhResult mh_step(const GpHypers &h, const ComponentStats &data, const HyperPrior &prior, Rng &rng,
                 double proposal_sd) {
  const Eigen::Vector3d xi = proposal_sd * standard_normal_vector(rng, 3);
  const double u = uniform01(rng);
  return mh_step_with(h, data, prior, xi, u);
}

bool mh_step_generic(Eigen::Vector3d &x, double &log_p, const LogTarget &log_target, Rng &rng,
                     double proposal_sd) {
  const Eigen::Vector3d proposal = x + proposal_sd * standard_normal_vector(rng, 3);
  const double u = uniform01(rng);
  const double lp = log_target(proposal);
  if (std::isfinite(lp) && std::log(u) <= lp - log_p) {
    x = proposal;
    log_p = lp;
    return true;
  }
  return false;
}

PhasePoint leapfrog(Eigen::Vector3d x, Eigen::Vector3d p, double delta, int steps,
                    const Eigen::Vector3d &mass_diag,
                    const std::function<Eigen::Vector3d(const Eigen::Vector3d &)> &grad_u) {
  // Adjacent half-kicks are merged; grad_u is evaluated steps + 1 times and
  // always last at the final position.
  p -= 0.5 * delta * grad_u(x);
  for (int i = 0; i < steps; ++i) {
    x += delta * p.cwiseQuotient(mass_diag);
    const double kick = (i + 1 == steps) ? 0.5 * delta : delta;
    p -= kick * grad_u(x);
  }
  return {x, p};
}

HmcResult hmc_step_generic(const Eigen::Vector3d &x, const Eigen::Vector3d &p_prev,
                           const Potential &potential, const HmcConfig &cfg, Rng &rng) {
  const Eigen::Vector3d noise =
      standard_normal_vector(rng, 3).cwiseProduct(cfg.mass_diag.cwiseSqrt());
  const Eigen::Vector3d p0 =
      cfg.refresh * p_prev + std::sqrt(1.0 - cfg.refresh * cfg.refresh) * noise;
  const double delta =
      cfg.step_min + (cfg.step_max - cfg.step_min) * uniform01(rng);
  const double u = uniform01(rng);

  HmcResult out{x, -p0, false, -kInf};
  double u0 = kInf;
  try {
    u0 = potential(x).value;
  } catch (const NumericalError &) {
  }
  if (!std::isfinite(u0))
    return out;

  // Gradients along the trajectory; the last evaluation also yields U(x*).
  ValueAndGradient last;
  auto grad_u = [&](const Eigen::Vector3d &pos) -> Eigen::Vector3d {
    last = potential(pos);
    return last.gradient;
  };
  PhasePoint end;
  try {
    end = leapfrog(x, p0, delta, cfg.leapfrog_steps, cfg.mass_diag, grad_u);
  } catch (const NumericalError &) {
    return out;
  }
  if (!end.x.allFinite() || !end.p.allFinite() || !std::isfinite(last.value))
    return out;

  const double h0 = u0 + kinetic(p0, cfg.mass_diag);
  const double h1 = last.value + kinetic(end.p, cfg.mass_diag);
  out.log_ratio = h0 - h1;
  if (std::isfinite(out.log_ratio) && std::log(u) < out.log_ratio) {
    out.x = end.x;
    out.momentum = end.p;
    out.accepted = true;
  }
  return out;
}

HyperHmcResult hmc_step(const GpHypers &h, const ComponentStats &data, const HyperPrior &prior,
                        const HmcConfig &cfg, const Eigen::Vector3d &p_prev, Rng &rng) {
  const Potential potential = [&](const Eigen::Vector3d &theta) {
    ValueAndGradient vg = log_posterior_and_grad(data, GpHypers::from(theta), prior);
    vg.value = -vg.value;
    vg.gradient = -vg.gradient;
    if (!std::isfinite(vg.value) || !vg.gradient.allFinite())
      throw NumericalError("non-finite potential");
    return vg;
  };
  const HmcResult r = hmc_step_generic(h.vec(), p_prev, potential, cfg, rng);
  return {GpHypers::from(r.x), r.momentum, r.accepted};
}

} // namespace gpmix::hyper
