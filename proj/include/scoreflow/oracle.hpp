#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scoreflow/flow.hpp"
#include "scoreflow/rng.hpp"

namespace scoreflow::oracle {

/// Isotropic Gaussian target N(mean, var I).
struct GaussianData {
  std::vector<double> mean;
  double var = 1.0;

  GaussianData(std::vector<double> m, double s1_sq);
};

struct MixtureComponent {
  double weight = 1.0;
  std::vector<double> mean;
  double var = 1.0;
};

/// Finite mixture of isotropic Gaussians; weights are validated to sum to 1.
struct MixtureData {
  std::vector<MixtureComponent> components;

  explicit MixtureData(std::vector<MixtureComponent> comps);
  std::size_t dim() const { return components.front().mean.size(); }
  /// Draws one target sample.
  std::vector<double> sample(Rng& rng) const;
};

/// Score of the path marginal N(t m, ((1 - t)^2 + t^2 s1^2) I).
std::vector<double> gaussian_marginal_score(const GaussianData& data, std::span<const double> a, double t);

/// E[a1 | a_t = a] under the conjugate prior N(m, s1^2 I) and likelihood N(t a1, (1 - t)^2 I).
std::vector<double> gaussian_posterior_mean(const GaussianData& data, std::span<const double> a, double t);

/// (E[a1 | a_t] - a) / (1 - t).
std::vector<double> gaussian_optimal_velocity(const GaussianData& data, std::span<const double> a, double t);

/// Max-abs gap between the score recovered from the optimal velocity and the analytic score.
double duality_check(const GaussianData& data, std::span<const double> a, double t);

struct SweepReport {
  std::size_t cases = 0;
  double max_residual = 0.0;
  double worst_t = 0.0;
};

/// Random (a, t, m, s1^2) draws: a, m ~ U[-3, 3]^d, s1^2 ~ U[0.05, 4], t ~ U[0, 0.999].
SweepReport duality_sweep(std::size_t cases, std::size_t dim, std::uint64_t seed);

/// log rho_t(a) for the mixture path marginal.
double mixture_log_density(const MixtureData& data, std::span<const double> a, double t);

/// Responsibility-weighted component scores, responsibilities taken in log space.
std::vector<double> mixture_score(const MixtureData& data, std::span<const double> a, double t);

struct McScore {
  std::vector<double> estimate;
  std::vector<double> std_error;  // jackknife, per dimension
  double ess = 0.0;
  bool low_ess = false;  // ess < 10
};

/// Self-normalized importance estimate of E[conditional score | a_t = a]
/// with a1 drawn from the data and weights from the conditional density.
McScore mc_posterior_score(const MixtureData& data, std::span<const double> a, double t, std::size_t n_samples,
                           std::uint64_t seed);

struct DualityReport {
  std::size_t grid_points = 0;
  std::size_t bulk_points = 0;
  double density_cutoff = 0.0;
  double median_bulk_error = 0.0;
  double max_bulk_error = 0.0;
  std::vector<double> errors;     // per grid point, row-major [t][a]
  std::vector<bool> in_bulk;
};

/// Compares the score implied by a trained observation-free velocity with the
/// analytic mixture score. Bulk = grid densities at or above their 5th percentile.
DualityReport trained_velocity_duality(const flow::VelocityField& field, const MixtureData& data,
                                       std::span<const double> a_grid, std::span<const double> t_grid);

}  // namespace scoreflow::oracle
