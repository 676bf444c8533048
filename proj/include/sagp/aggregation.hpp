#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sagp/data.hpp"
#include "sagp/geometry.hpp"
#include "sagp/kernel.hpp"

namespace sagp {

/// The set D of realizable squared distances between grid points. On a
/// regular grid every pair distance is (dcol^2 + drow^2) * cell_size^2, so D
/// is enumerated exactly from integer lattice keys.
class DistanceLattice {
 public:
  explicit DistanceLattice(const GridSpec& grid);

  const GridSpec& grid() const { return grid_; }
  int size() const { return static_cast<int>(keys_.size()); }
  /// Integer keys dcol^2 + drow^2, ascending; key 0 is always at index 0.
  const std::vector<std::int64_t>& keys() const { return keys_; }
  double squared_distance(int index) const {
    return static_cast<double>(keys_[index]) * grid_.cell_size * grid_.cell_size;
  }
  Eigen::VectorXd squared_distances() const;

  int index_of_offset(int dcol, int drow) const {
    return key_index_[static_cast<std::size_t>(dcol * dcol + drow * drow)];
  }
  int index_between(CellIndex a, CellIndex b) const {
    return index_of_offset(grid_.col(a) - grid_.col(b), grid_.row(a) - grid_.row(b));
  }

 private:
  GridSpec grid_;
  std::vector<std::int64_t> keys_;
  std::vector<int> key_index_;
};

/// Latent kernel values gamma_l evaluated on every element of D.
struct DistanceCache {
  std::shared_ptr<const DistanceLattice> lattice;
  std::vector<Eigen::VectorXd> values;  // one entry per latent, indexed like lattice keys

  double gamma(int l, CellIndex a, CellIndex b) const {
    return values[l][lattice->index_between(a, b)];
  }
};

DistanceCache build_distance_cache(const GridSpec& grid, const HyperParams& params);
DistanceCache build_distance_cache(std::shared_ptr<const DistanceLattice> lattice,
                                   const HyperParams& params);

/// A region's cells together with their aggregation weights.
struct WeightedRegion {
  std::vector<CellIndex> cells;
  std::vector<double> weights;
};

std::vector<WeightedRegion> weigh_partition(const Partition& partition, AggregationScheme scheme,
                                            const GridSpec& grid);

/// h[d] = sum over (i in a, j in b) with squared distance D[d] of w_i w_j.
/// Bin 0 is the weighted overlap sum_{i in a and b} w_i w'_i.
Eigen::VectorXd pair_histogram(const DistanceLattice& lattice, const WeightedRegion& a,
                               const WeightedRegion& b);

enum class BlockNoise {
  LatentOnly,   // integrated k only
  Observation,  // adds sigma_s^2 on the diagonal when s == s2 (a and b must be the same partition)
};

/// Region-to-region covariance between the regions of dataset s (rows) and
/// dataset s2 (columns) on a shared grid.
Eigen::MatrixXd region_cov_block(int s, int s2, std::span<const WeightedRegion> a,
                                 std::span<const WeightedRegion> b, const DistanceCache& cache,
                                 const HyperParams& params, BlockNoise noise = BlockNoise::Observation);

struct BlockIndex {
  int dataset = 0;  // index into the catalog
  int region = 0;   // index into that dataset's partition
};

struct MarginalMoments {
  Eigen::VectorXd mu;
  Eigen::MatrixXd C;
  std::vector<BlockIndex> index;  // flat row -> (dataset, region)
};

/// Flattened, weighted regions of one domain ordered by catalog dataset
/// index, then region index; plus the pairwise distance histograms that do
/// not depend on hyperparameters.
class DomainGeometry {
 public:
  DomainGeometry(const DomainData& domain, const DatasetCatalog& catalog);

  const DistanceLattice& lattice() const { return *lattice_; }
  std::shared_ptr<const DistanceLattice> lattice_ptr() const { return lattice_; }
  int num_regions() const { return static_cast<int>(regions_.size()); }
  const std::vector<WeightedRegion>& regions() const { return regions_; }
  const std::vector<BlockIndex>& index() const { return index_; }
  int dataset_of(int r) const { return index_[r].dataset; }
  const Eigen::VectorXd& observations() const { return y_; }

  /// Symmetric N x N matrices sum_{i,j} w_i w_j v[d(i,j)] for every column v
  /// of `values` (|D| x K). Histograms are cached unless they exceed the
  /// memory budget, in which case they are recomputed per call.
  std::vector<Eigen::MatrixXd> integrate(const Eigen::MatrixXd& values) const;

  /// Weighted overlap sum_{i} w_i w'_i for every region pair (bin 0).
  const Eigen::MatrixXd& overlap() const { return overlap_; }

  bool histograms_cached() const { return cached_; }

 private:
  std::shared_ptr<const DistanceLattice> lattice_;
  std::vector<WeightedRegion> regions_;
  std::vector<BlockIndex> index_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd histograms_;  // packed upper-triangle pairs x |D|
  Eigen::MatrixXd overlap_;
  bool cached_ = false;
};

/// C = integrated K over region pairs + Sigma, and mu = 0 (zero-mean latents).
MarginalMoments assemble_moments(const DomainGeometry& geometry, const DistanceCache& cache,
                                 const HyperParams& params);
MarginalMoments assemble_moments(const DomainData& domain, const DistanceCache& cache,
                                 const HyperParams& params, const DatasetCatalog& catalog);
MarginalMoments assemble_moments(const DomainData& domain, const DistanceCache& cache,
                                 const HyperParams& params);

/// Column of H(x) for target dataset s_target: one entry per flat region.
Eigen::VectorXd point_to_region_cov(CellIndex x, int s_target, const DomainGeometry& geometry,
                                    const DistanceCache& cache, const HyperParams& params);
Eigen::VectorXd point_to_region_cov(CellIndex x, int s_target, const DomainData& domain,
                                    const DistanceCache& cache, const HyperParams& params,
                                    const DatasetCatalog& catalog);

}  // namespace sagp
