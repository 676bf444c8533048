#pragma once

// Test-only reference computations. Everything here evaluates the model by
// direct summation over grid-point pairs or dense Gaussian conditioning,
// without the distance-histogram machinery used by the library.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "sagp/data.hpp"
#include "sagp/geometry.hpp"
#include "sagp/kernel.hpp"
#include "sagp/random.hpp"

namespace sagp::testing {

inline double squared_distance(const GridSpec& grid, CellIndex a, CellIndex b) {
  return (grid.center(a) - grid.center(b)).squaredNorm();
}

inline HyperParams random_params(Rng& rng, int S, int L, double beta_lo = 0.8, double beta_hi = 3.0,
                                 double noise_hi = 0.5) {
  HyperParams p = HyperParams::zeros(S, L);
  for (int s = 0; s < S; ++s) {
    for (int l = 0; l < L; ++l) p.weights(s, l) = rng.normal();
    p.noise.lambda[s] = 0.05 + noise_hi * rng.uniform();
    p.noise.sigma2[s] = 0.01 + noise_hi * rng.uniform();
  }
  for (int l = 0; l < L; ++l) p.kernels[l].beta = beta_lo + (beta_hi - beta_lo) * rng.uniform();
  return p;
}

/// Random disjoint regions: shuffles the grid cells and deals out chunks.
inline Partition random_partition(Rng& rng, const GridSpec& grid, int regions, int max_cells,
                                  const std::string& prefix) {
  std::vector<CellIndex> cells(static_cast<std::size_t>(grid.size()));
  std::iota(cells.begin(), cells.end(), 0);
  for (std::size_t i = cells.size(); i > 1; --i) std::swap(cells[i - 1], cells[rng.below(i)]);
  Partition p;
  p.partition_id = prefix;
  std::size_t next = 0;
  for (int r = 0; r < regions && next < cells.size(); ++r) {
    const int count = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_cells)));
    Region region;
    region.region_id = prefix + "_" + std::to_string(r);
    for (int k = 0; k < count && next < cells.size(); ++k) region.cells.push_back(cells[next++]);
    std::sort(region.cells.begin(), region.cells.end());
    p.regions.push_back(std::move(region));
  }
  return p;
}

inline DomainData random_domain(Rng& rng, const GridSpec& grid, int S, int max_regions, int max_cells,
                                const std::string& domain_id = "d") {
  DomainData d;
  d.domain_id = domain_id;
  d.grid = grid;
  for (int s = 0; s < S; ++s) {
    const int regions = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_regions)));
    DatasetObservations obs;
    obs.dataset_id = "s" + std::to_string(s);
    obs.partition = random_partition(rng, grid, regions, max_cells, obs.dataset_id);
    obs.y.resize(static_cast<Eigen::Index>(obs.partition.size()));
    for (Eigen::Index i = 0; i < obs.y.size(); ++i) obs.y[i] = rng.normal();
    d.datasets.push_back(std::move(obs));
  }
  return d;
}

/// Discretized aggregation operator A (N x S*|G|) with rows ordered by
/// dataset then region, and columns ordered (dataset, grid point).
inline Eigen::MatrixXd aggregation_matrix(const DomainData& domain) {
  const Eigen::Index G = domain.grid.size();
  const Eigen::Index S = static_cast<Eigen::Index>(domain.datasets.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(domain.num_observations()), S * G);
  Eigen::Index row = 0;
  for (Eigen::Index s = 0; s < S; ++s) {
    const auto& d = domain.datasets[static_cast<std::size_t>(s)];
    for (const auto& region : d.partition.regions) {
      const auto w = aggregation_weights(region, d.scheme, domain.grid);
      for (std::size_t j = 0; j < region.cells.size(); ++j) A(row, s * G + region.cells[j]) = w[j];
      ++row;
    }
  }
  return A;
}

/// Prior covariance of f over all (dataset, grid point) pairs, from cross_cov.
inline Eigen::MatrixXd dense_prior(const DomainData& domain, const HyperParams& params) {
  const Eigen::Index G = domain.grid.size();
  const Eigen::Index S = params.num_datasets();
  Eigen::MatrixXd K(S * G, S * G);
  for (Eigen::Index s = 0; s < S; ++s) {
    for (Eigen::Index s2 = 0; s2 < S; ++s2) {
      for (CellIndex i = 0; i < G; ++i) {
        for (CellIndex j = 0; j < G; ++j) {
          K(s * G + i, s2 * G + j) = cross_cov(static_cast<int>(s), static_cast<int>(s2),
                                               squared_distance(domain.grid, i, j), i == j, params);
        }
      }
    }
  }
  return K;
}

inline Eigen::MatrixXd observation_noise(const DomainData& domain, const HyperParams& params) {
  Eigen::VectorXd diag(static_cast<Eigen::Index>(domain.num_observations()));
  Eigen::Index row = 0;
  for (std::size_t s = 0; s < domain.datasets.size(); ++s) {
    for (std::size_t n = 0; n < domain.datasets[s].partition.size(); ++n) {
      diag[row++] = params.noise.sigma2[static_cast<Eigen::Index>(s)];
    }
  }
  return diag.asDiagonal();
}

/// C by explicit double sums, O(|G|^2) per region pair.
inline Eigen::MatrixXd brute_force_C(const DomainData& domain, const HyperParams& params) {
  const Eigen::MatrixXd A = aggregation_matrix(domain);
  return A * dense_prior(domain, params) * A.transpose() + observation_noise(domain, params);
}

inline double gaussian_log_density(const Eigen::VectorXd& y, const Eigen::MatrixXd& C) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(C);
  const double logdet = ldlt.vectorD().array().log().sum();
  return -0.5 * y.dot(ldlt.solve(y)) - 0.5 * logdet -
         0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

inline Eigen::VectorXd stacked_observations(const DomainData& domain) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(domain.num_observations()));
  Eigen::Index row = 0;
  for (const auto& d : domain.datasets) {
    for (Eigen::Index n = 0; n < d.y.size(); ++n) y[row++] = d.y[n];
  }
  return y;
}

/// Posterior of f at every (dataset, grid point) by conditioning the dense
/// joint Gaussian of (f on the grid, y).
struct DensePosterior {
  Eigen::VectorXd mean;  // S*|G|
  Eigen::MatrixXd cov;   // S*|G| x S*|G|
};

inline DensePosterior dense_posterior(const DomainData& domain, const HyperParams& params) {
  const Eigen::MatrixXd K = dense_prior(domain, params);
  const Eigen::MatrixXd A = aggregation_matrix(domain);
  const Eigen::MatrixXd C = A * K * A.transpose() + observation_noise(domain, params);
  const Eigen::MatrixXd KAt = K * A.transpose();
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(C);
  DensePosterior post;
  post.mean = KAt * ldlt.solve(stacked_observations(domain));
  post.cov = K - KAt * ldlt.solve(KAt.transpose());
  return post;
}

/// Point-observation multi-output GP likelihood: each observation is f_s at
/// one location.
struct PointObservation {
  int dataset;
  Eigen::Vector2d location;
  CellIndex cell;
  double value;
};

inline double slfm_log_likelihood(const std::vector<PointObservation>& obs, const HyperParams& params) {
  const auto N = static_cast<Eigen::Index>(obs.size());
  Eigen::MatrixXd K(N, N);
  Eigen::VectorXd y(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    y[i] = obs[i].value;
    for (Eigen::Index j = 0; j < N; ++j) {
      const double d2 = (obs[i].location - obs[j].location).squaredNorm();
      K(i, j) = cross_cov(obs[i].dataset, obs[j].dataset, d2, obs[i].cell == obs[j].cell, params);
    }
    K(i, i) += params.noise.sigma2[obs[i].dataset];
  }
  return gaussian_log_density(y, K);
}

}  // namespace sagp::testing
