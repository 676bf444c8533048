#include "sagp/aggregation.hpp"

#include <algorithm>

#include "sagp/error.hpp"

namespace sagp {

namespace {

// Upper bound on cached histogram entries (packed pairs x |D|), ~128 MiB.
constexpr std::int64_t kHistogramBudget = std::int64_t{1} << 24;

void check_cells(const WeightedRegion& region, const GridSpec& grid) {
  for (CellIndex c : region.cells) {
    if (!grid.contains(c)) {
      throw Error(ErrorKind::GridMismatch, "cell " + std::to_string(c) + " lies outside the " +
                                               std::to_string(grid.nx) + "x" +
                                               std::to_string(grid.ny) + " grid");
    }
  }
}

}  // namespace

DistanceLattice::DistanceLattice(const GridSpec& grid) : grid_(grid) {
  grid_.validate();
  const std::int64_t max_key = std::int64_t{grid_.nx - 1} * (grid_.nx - 1) +
                               std::int64_t{grid_.ny - 1} * (grid_.ny - 1);
  std::vector<char> present(static_cast<std::size_t>(max_key + 1), 0);
  for (std::int64_t a = 0; a < grid_.nx; ++a) {
    for (std::int64_t b = 0; b < grid_.ny; ++b) present[a * a + b * b] = 1;
  }
  key_index_.assign(present.size(), -1);
  for (std::int64_t k = 0; k <= max_key; ++k) {
    if (present[k]) {
      key_index_[k] = static_cast<int>(keys_.size());
      keys_.push_back(k);
    }
  }
}

Eigen::VectorXd DistanceLattice::squared_distances() const {
  Eigen::VectorXd d2(size());
  for (int i = 0; i < size(); ++i) d2[i] = squared_distance(i);
  return d2;
}

DistanceCache build_distance_cache(const GridSpec& grid, const HyperParams& params) {
  return build_distance_cache(std::make_shared<const DistanceLattice>(grid), params);
}

DistanceCache build_distance_cache(std::shared_ptr<const DistanceLattice> lattice,
                                   const HyperParams& params) {
  DistanceCache cache;
  cache.lattice = std::move(lattice);
  const Eigen::VectorXd d2 = cache.lattice->squared_distances();
  for (const auto& kernel : params.kernels) {
    Eigen::VectorXd v(d2.size());
    for (Eigen::Index i = 0; i < d2.size(); ++i) v[i] = gamma(kernel, d2[i]);
    cache.values.push_back(std::move(v));
  }
  return cache;
}

std::vector<WeightedRegion> weigh_partition(const Partition& partition, AggregationScheme scheme,
                                            const GridSpec& grid) {
  std::vector<WeightedRegion> out;
  out.reserve(partition.size());
  for (const auto& region : partition.regions) {
    WeightedRegion w{region.cells, aggregation_weights(region, scheme, grid)};
    check_cells(w, grid);
    out.push_back(std::move(w));
  }
  return out;
}

Eigen::VectorXd pair_histogram(const DistanceLattice& lattice, const WeightedRegion& a,
                               const WeightedRegion& b) {
  const GridSpec& grid = lattice.grid();
  Eigen::VectorXd h = Eigen::VectorXd::Zero(lattice.size());
  std::vector<int> bcol(b.cells.size()), brow(b.cells.size());
  for (std::size_t j = 0; j < b.cells.size(); ++j) {
    bcol[j] = grid.col(b.cells[j]);
    brow[j] = grid.row(b.cells[j]);
  }
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    const int ci = grid.col(a.cells[i]);
    const int ri = grid.row(a.cells[i]);
    const double wi = a.weights[i];
    for (std::size_t j = 0; j < b.cells.size(); ++j) {
      h[lattice.index_of_offset(ci - bcol[j], ri - brow[j])] += wi * b.weights[j];
    }
  }
  return h;
}

Eigen::MatrixXd region_cov_block(int s, int s2, std::span<const WeightedRegion> a,
                                 std::span<const WeightedRegion> b, const DistanceCache& cache,
                                 const HyperParams& params, BlockNoise noise) {
  const DistanceLattice& lattice = *cache.lattice;
  for (const auto& r : a) check_cells(r, lattice.grid());
  for (const auto& r : b) check_cells(r, lattice.grid());
  const bool add_sigma = noise == BlockNoise::Observation && s == s2;
  if (add_sigma && a.size() != b.size()) {
    throw Error(ErrorKind::InvalidArgument, "observation-noise block needs the same partition on both sides");
  }
  const int L = params.num_latents();
  Eigen::VectorXd mix(L);
  for (int l = 0; l < L; ++l) mix[l] = params.weights(s, l) * params.weights(s2, l);

  Eigen::MatrixXd block(a.size(), b.size());
  for (std::size_t n = 0; n < a.size(); ++n) {
    for (std::size_t m = 0; m < b.size(); ++m) {
      const Eigen::VectorXd h = pair_histogram(lattice, a[n], b[m]);
      double v = 0.0;
      for (int l = 0; l < L; ++l) v += mix[l] * h.dot(cache.values[l]);
      if (s == s2) v += params.noise.lambda[s] * params.noise.lambda[s] * h[0];
      if (add_sigma && n == m) v += params.noise.sigma2[s];
      block(n, m) = v;
    }
  }
  return block;
}

DomainGeometry::DomainGeometry(const DomainData& domain, const DatasetCatalog& catalog)
    : lattice_(std::make_shared<const DistanceLattice>(domain.grid)) {
  std::vector<std::pair<int, const DatasetObservations*>> ordered;
  for (const auto& d : domain.datasets) ordered.emplace_back(catalog.index_of(d.dataset_id), &d);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& x, const auto& y) { return x.first < y.first; });

  std::vector<double> y;
  for (const auto& [s, d] : ordered) {
    if (static_cast<std::size_t>(d->y.size()) != d->partition.size()) {
      throw Error(ErrorKind::InvalidArgument, "dataset '" + d->dataset_id + "' observation count mismatch");
    }
    auto weighted = weigh_partition(d->partition, d->scheme, domain.grid);
    for (std::size_t n = 0; n < weighted.size(); ++n) {
      regions_.push_back(std::move(weighted[n]));
      index_.push_back({s, static_cast<int>(n)});
      y.push_back(d->y[static_cast<Eigen::Index>(n)]);
    }
  }
  y_ = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));

  const std::int64_t N = num_regions();
  const std::int64_t pairs = N * (N + 1) / 2;
  overlap_ = Eigen::MatrixXd::Zero(N, N);
  cached_ = pairs * lattice_->size() <= kHistogramBudget;
  if (cached_) histograms_.resize(pairs, lattice_->size());
  std::int64_t p = 0;
  for (std::int64_t r = 0; r < N; ++r) {
    for (std::int64_t r2 = r; r2 < N; ++r2, ++p) {
      const Eigen::VectorXd h = pair_histogram(*lattice_, regions_[r], regions_[r2]);
      overlap_(r, r2) = overlap_(r2, r) = h[0];
      if (cached_) histograms_.row(p) = h.transpose();
    }
  }
}

std::vector<Eigen::MatrixXd> DomainGeometry::integrate(const Eigen::MatrixXd& values) const {
  const Eigen::Index N = num_regions();
  const Eigen::Index K = values.cols();
  std::vector<Eigen::MatrixXd> out(K, Eigen::MatrixXd(N, N));
  Eigen::MatrixXd packed;
  if (cached_) packed = histograms_ * values;
  Eigen::Index p = 0;
  for (Eigen::Index r = 0; r < N; ++r) {
    for (Eigen::Index r2 = r; r2 < N; ++r2, ++p) {
      if (cached_) {
        for (Eigen::Index k = 0; k < K; ++k) out[k](r, r2) = out[k](r2, r) = packed(p, k);
      } else {
        const Eigen::RowVectorXd row =
            pair_histogram(*lattice_, regions_[r], regions_[r2]).transpose() * values;
        for (Eigen::Index k = 0; k < K; ++k) out[k](r, r2) = out[k](r2, r) = row[k];
      }
    }
  }
  return out;
}

MarginalMoments assemble_moments(const DomainGeometry& geometry, const DistanceCache& cache,
                                 const HyperParams& params) {
  const int N = geometry.num_regions();
  const int L = params.num_latents();
  Eigen::MatrixXd values(geometry.lattice().size(), L);
  for (int l = 0; l < L; ++l) values.col(l) = cache.values[l];
  const auto integrated = geometry.integrate(values);

  MarginalMoments m;
  m.mu = Eigen::VectorXd::Zero(N);
  m.C.resize(N, N);
  m.index = geometry.index();
  for (int r = 0; r < N; ++r) {
    const int s = geometry.dataset_of(r);
    for (int r2 = r; r2 < N; ++r2) {
      const int s2 = geometry.dataset_of(r2);
      double v = 0.0;
      for (int l = 0; l < L; ++l) v += params.weights(s, l) * params.weights(s2, l) * integrated[l](r, r2);
      if (s == s2) v += params.noise.lambda[s] * params.noise.lambda[s] * geometry.overlap()(r, r2);
      if (r == r2) v += params.noise.sigma2[s];
      m.C(r, r2) = v;
      m.C(r2, r) = v;
    }
  }
  return m;
}

MarginalMoments assemble_moments(const DomainData& domain, const DistanceCache& cache,
                                 const HyperParams& params, const DatasetCatalog& catalog) {
  return assemble_moments(DomainGeometry(domain, catalog), cache, params);
}

MarginalMoments assemble_moments(const DomainData& domain, const DistanceCache& cache,
                                 const HyperParams& params) {
  const DomainData* one = &domain;
  return assemble_moments(domain, cache, params, DatasetCatalog::from_domains({one, 1}));
}

Eigen::VectorXd point_to_region_cov(CellIndex x, int s_target, const DomainGeometry& geometry,
                                    const DistanceCache& cache, const HyperParams& params) {
  const DistanceLattice& lattice = geometry.lattice();
  if (!lattice.grid().contains(x)) {
    throw Error(ErrorKind::GridMismatch, "point " + std::to_string(x) + " is not a grid point");
  }
  const int L = params.num_latents();
  const int N = geometry.num_regions();
  Eigen::VectorXd h(N);
  Eigen::VectorXd latent(L);
  for (int r = 0; r < N; ++r) {
    const int s = geometry.dataset_of(r);
    const WeightedRegion& region = geometry.regions()[r];
    latent.setZero();
    double self_weight = 0.0;
    for (std::size_t j = 0; j < region.cells.size(); ++j) {
      const int d = lattice.index_between(region.cells[j], x);
      for (int l = 0; l < L; ++l) latent[l] += region.weights[j] * cache.values[l][d];
      if (region.cells[j] == x) self_weight += region.weights[j];
    }
    double v = 0.0;
    for (int l = 0; l < L; ++l) v += params.weights(s, l) * params.weights(s_target, l) * latent[l];
    if (s == s_target) v += params.noise.lambda[s] * params.noise.lambda[s] * self_weight;
    h[r] = v;
  }
  return h;
}

Eigen::VectorXd point_to_region_cov(CellIndex x, int s_target, const DomainData& domain,
                                    const DistanceCache& cache, const HyperParams& params,
                                    const DatasetCatalog& catalog) {
  return point_to_region_cov(x, s_target, DomainGeometry(domain, catalog), cache, params);
}

}  // namespace sagp
