#include "scoreflow/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "scoreflow/error.hpp"
#include "scoreflow/score_control.hpp"

namespace scoreflow::oracle {

namespace {

void check_time(double t, const char* who) {
  if (!(t >= 0.0 && t < 1.0)) throw DomainError(std::string(who) + ": t must lie in [0, 1), got " + std::to_string(t));
}

void check_dim(std::size_t expected, std::size_t got, const char* who) {
  if (expected != got) {
    throw ShapeError(std::string(who) + ": expected dimension " + std::to_string(expected) + ", got " +
                     std::to_string(got));
  }
}

double log_sum_exp(std::span<const double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

double component_var(const MixtureComponent& c, double t) { return (1.0 - t) * (1.0 - t) + t * t * c.var; }

double component_log_density(const MixtureComponent& c, std::span<const double> a, double t) {
  const double var = component_var(c, t);
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = a[i] - t * c.mean[i];
    sq += r * r;
  }
  const double d = static_cast<double>(a.size());
  return -0.5 * sq / var - 0.5 * d * std::log(2.0 * std::numbers::pi * var);
}

}  // namespace

GaussianData::GaussianData(std::vector<double> m, double s1_sq) : mean(std::move(m)), var(s1_sq) {
  if (!(var > 0.0)) throw DomainError("GaussianData: variance must be positive");
  if (mean.empty()) throw ShapeError("GaussianData: empty mean");
}

MixtureData::MixtureData(std::vector<MixtureComponent> comps) : components(std::move(comps)) {
  if (components.empty()) throw ConfigError("MixtureData: no components");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight > 0.0)) throw DomainError("MixtureData: weights must be positive");
    if (!(c.var > 0.0)) throw DomainError("MixtureData: variances must be positive");
    check_dim(components.front().mean.size(), c.mean.size(), "MixtureData");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("MixtureData: weights sum to " + std::to_string(total));
  if (components.front().mean.empty()) throw ShapeError("MixtureData: empty means");
}

std::vector<double> MixtureData::sample(Rng& rng) const {
  double u = rng.uniform();
  std::size_t k = 0;
  for (; k + 1 < components.size(); ++k) {
    if (u < components[k].weight) break;
    u -= components[k].weight;
  }
  const auto& c = components[k];
  const double sd = std::sqrt(c.var);
  std::vector<double> x(c.mean.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = c.mean[i] + sd * rng.normal();
  return x;
}

std::vector<double> gaussian_marginal_score(const GaussianData& data, std::span<const double> a, double t) {
  check_time(t, "gaussian_marginal_score");
  check_dim(data.mean.size(), a.size(), "gaussian_marginal_score");
  const double var = (1.0 - t) * (1.0 - t) + t * t * data.var;
  std::vector<double> s(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) s[i] = -(a[i] - t * data.mean[i]) / var;
  return s;
}

std::vector<double> gaussian_posterior_mean(const GaussianData& data, std::span<const double> a, double t) {
  check_time(t, "gaussian_posterior_mean");
  check_dim(data.mean.size(), a.size(), "gaussian_posterior_mean");
  // precision 1/s1^2 + t^2/(1-t)^2, scaled through by s1^2 (1-t)^2
  const double u = 1.0 - t;
  const double denom = u * u + t * t * data.var;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (data.mean[i] * u * u + t * a[i] * data.var) / denom;
  return out;
}

std::vector<double> gaussian_optimal_velocity(const GaussianData& data, std::span<const double> a, double t) {
  check_time(t, "gaussian_optimal_velocity");
  check_dim(data.mean.size(), a.size(), "gaussian_optimal_velocity");
  // (E - a) / (1 - t) with the common (1 - t) factor cancelled
  const double u = 1.0 - t;
  const double denom = u * u + t * t * data.var;
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[i] = ((data.mean[i] - a[i]) * u + a[i] * data.var * t) / denom;
  return v;
}

double duality_check(const GaussianData& data, std::span<const double> a, double t) {
  const auto v = gaussian_optimal_velocity(data, a, t);
  const auto recovered = control::closed_form_score(v, a, t);
  const auto exact = gaussian_marginal_score(data, a, t);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(recovered[i] - exact[i]));
  return worst;
}

SweepReport duality_sweep(std::size_t cases, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed, 0xd0a1);
  SweepReport rep;
  rep.cases = cases;
  std::vector<double> a(dim), m(dim);
  for (std::size_t c = 0; c < cases; ++c) {
    for (auto& x : a) x = rng.uniform(-3.0, 3.0);
    for (auto& x : m) x = rng.uniform(-3.0, 3.0);
    const double var = rng.uniform(0.05, 4.0);
    const double t = rng.uniform(0.0, 0.999);
    const double r = duality_check(GaussianData(m, var), a, t);
    if (!(r <= rep.max_residual)) {
      rep.max_residual = r;
      rep.worst_t = t;
    }
  }
  return rep;
}

double mixture_log_density(const MixtureData& data, std::span<const double> a, double t) {
  check_time(t, "mixture_log_density");
  check_dim(data.dim(), a.size(), "mixture_log_density");
  std::vector<double> logs;
  logs.reserve(data.components.size());
  for (const auto& c : data.components) logs.push_back(std::log(c.weight) + component_log_density(c, a, t));
  return log_sum_exp(logs);
}

std::vector<double> mixture_score(const MixtureData& data, std::span<const double> a, double t) {
  check_time(t, "mixture_score");
  check_dim(data.dim(), a.size(), "mixture_score");
  // every component collapses onto the N(0, I) source at t = 0
  if (t == 0.0) {
    std::vector<double> s(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) s[i] = -a[i];
    return s;
  }
  std::vector<double> logs;
  logs.reserve(data.components.size());
  for (const auto& c : data.components) logs.push_back(std::log(c.weight) + component_log_density(c, a, t));
  const double lse = log_sum_exp(logs);
  std::vector<double> s(a.size(), 0.0);
  for (std::size_t k = 0; k < data.components.size(); ++k) {
    const auto& c = data.components[k];
    const double resp = std::exp(logs[k] - lse);
    const double var = component_var(c, t);
    for (std::size_t i = 0; i < a.size(); ++i) s[i] += resp * (-(a[i] - t * c.mean[i]) / var);
  }
  return s;
}

McScore mc_posterior_score(const MixtureData& data, std::span<const double> a, double t, std::size_t n_samples,
                           std::uint64_t seed) {
  check_time(t, "mc_posterior_score");
  check_dim(data.dim(), a.size(), "mc_posterior_score");
  if (n_samples < 1000) throw DomainError("mc_posterior_score: need at least 1000 samples");
  const std::size_t d = a.size();
  const double u = 1.0 - t;
  const double var = u * u;

  Rng rng(seed, 0x3c);
  std::vector<double> logw(n_samples);
  std::vector<double> cond(n_samples * d);
  for (std::size_t n = 0; n < n_samples; ++n) {
    const auto a1 = data.sample(rng);
    double sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double r = a[i] - t * a1[i];
      sq += r * r;
      cond[n * d + i] = -r / var;
    }
    logw[n] = -0.5 * sq / var;
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  std::vector<double> w(n_samples);
  double sw = 0.0, sw2 = 0.0;
  for (std::size_t n = 0; n < n_samples; ++n) {
    w[n] = std::exp(logw[n] - top);
    sw += w[n];
    sw2 += w[n] * w[n];
  }

  McScore out;
  out.estimate.assign(d, 0.0);
  out.std_error.assign(d, 0.0);
  out.ess = sw * sw / sw2;
  out.low_ess = out.ess < 10.0;
  const double nn = static_cast<double>(n_samples);
  for (std::size_t i = 0; i < d; ++i) {
    double swc = 0.0;
    for (std::size_t n = 0; n < n_samples; ++n) swc += w[n] * cond[n * d + i];
    out.estimate[i] = swc / sw;
    // leave-one-out replicates
    double mean_loo = 0.0;
    std::vector<double> loo(n_samples);
    for (std::size_t n = 0; n < n_samples; ++n) {
      loo[n] = (swc - w[n] * cond[n * d + i]) / (sw - w[n]);
      mean_loo += loo[n];
    }
    mean_loo /= nn;
    double ss = 0.0;
    for (double x : loo) ss += (x - mean_loo) * (x - mean_loo);
    out.std_error[i] = std::sqrt((nn - 1.0) / nn * ss);
  }
  return out;
}

DualityReport trained_velocity_duality(const flow::VelocityField& field, const MixtureData& data,
                                       std::span<const double> a_grid, std::span<const double> t_grid) {
  if (data.dim() != 1 || field.action_dim != 1 || field.obs_dim != 0) {
    throw ShapeError("trained_velocity_duality: expects a 1-D observation-free field and 1-D data");
  }
  if (a_grid.empty() || t_grid.empty()) throw ShapeError("trained_velocity_duality: empty grid");
  DualityReport rep;
  rep.grid_points = a_grid.size() * t_grid.size();
  std::vector<double> log_dens;
  log_dens.reserve(rep.grid_points);
  const std::span<const double> no_obs;
  for (double t : t_grid) {
    for (double a : a_grid) {
      const double av[1] = {a};
      const auto v = flow::velocity(field, av, t, no_obs);
      const double s = control::closed_form_score(v, av, t)[0];
      rep.errors.push_back(std::abs(s - mixture_score(data, av, t)[0]));
      log_dens.push_back(mixture_log_density(data, av, t));
    }
  }
  std::vector<double> sorted = log_dens;
  std::sort(sorted.begin(), sorted.end());
  const auto cut_idx = static_cast<std::size_t>(std::floor(0.05 * static_cast<double>(sorted.size() - 1)));
  rep.density_cutoff = std::exp(sorted[cut_idx]);
  std::vector<double> bulk;
  rep.in_bulk.resize(rep.grid_points);
  for (std::size_t i = 0; i < rep.grid_points; ++i) {
    rep.in_bulk[i] = log_dens[i] >= sorted[cut_idx];
    if (rep.in_bulk[i]) bulk.push_back(rep.errors[i]);
  }
  rep.bulk_points = bulk.size();
  std::sort(bulk.begin(), bulk.end());
  const std::size_t n = bulk.size();
  rep.median_bulk_error = n % 2 == 1 ? bulk[n / 2] : 0.5 * (bulk[n / 2 - 1] + bulk[n / 2]);
  rep.max_bulk_error = bulk.back();
  return rep;
}

}  // namespace scoreflow::oracle
