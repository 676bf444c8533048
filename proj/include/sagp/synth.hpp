#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sagp/data.hpp"
#include "sagp/evaluation.hpp"
#include "sagp/geometry.hpp"
#include "sagp/kernel.hpp"
#include "sagp/random.hpp"

namespace sagp {

/// How a dataset's partition is laid out on the grid.
struct PartitionRecipe {
  enum class Kind { Blocks, Voronoi, Strips, Cells };
  Kind kind = Kind::Blocks;
  int bx = 1;  // Blocks: blocks along x
  int by = 1;  // Blocks: blocks along y
  int count = 1;  // Voronoi: sites; Strips: strips across the short axis
  bool vertical = true;  // Strips: long axis along y
  int pieces = 1;  // Strips: segments along the long axis

  static PartitionRecipe blocks(int bx, int by) { return {Kind::Blocks, bx, by, 1, true, 1}; }
  static PartitionRecipe voronoi(int sites) { return {Kind::Voronoi, 1, 1, sites, true, 1}; }
  static PartitionRecipe strips(int count, bool vertical, int pieces = 1) {
    return {Kind::Strips, 1, 1, count, vertical, pieces};
  }
  static PartitionRecipe cells() { return {Kind::Cells, 1, 1, 1, true, 1}; }
};

Partition make_partition(const PartitionRecipe& recipe, const GridSpec& grid, const std::string& prefix,
                         Rng& rng);
const char* to_string(PartitionRecipe::Kind kind);
PartitionRecipe::Kind parse_recipe_kind(const std::string& text);

struct DatasetRecipe {
  std::string dataset_id;
  PartitionRecipe partition;
  AggregationScheme scheme = AggregationScheme::Average;
  /// Evaluation partition for a refinement target.
  std::optional<PartitionRecipe> fine;
};

struct DomainRecipe {
  std::string domain_id;
  GridSpec grid;
  std::vector<DatasetRecipe> datasets;
};

/// Generating model for one or more domains. Rows of params follow
/// dataset_ids; domains name their datasets by id, so reusing an id across
/// domains shares its row of W (and its noise levels).
struct SynthSpec {
  std::vector<DomainRecipe> domains;
  std::vector<std::string> dataset_ids;
  HyperParams params;
  double offset = 10.0;  // raw = offset + scale * f
  double scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthDataset {
  std::string dataset_id;
  Partition partition;
  AggregationScheme scheme = AggregationScheme::Average;
  Eigen::VectorXd observed_raw;  // aggregated field plus observation noise
  Eigen::VectorXd clean_raw;     // aggregated field
  std::optional<Partition> fine;
  Eigen::VectorXd fine_truth_raw;
};

struct SynthDomain {
  std::string domain_id;
  GridSpec grid;
  std::vector<SynthDataset> datasets;
  Eigen::MatrixXd field_raw;  // one row per dataset of this domain, |G| columns

  DomainData data() const;
  const SynthDataset& dataset(const std::string& dataset_id) const;
  /// Refinement task for a dataset that has a fine partition.
  RefinementTask task(const std::string& dataset_id, const std::string& task_id) const;
};

/// Largest grid edge and grid size for exact sampling.
inline constexpr int kMaxSampleEdge = 2048;
inline constexpr std::int64_t kMaxSamplePoints = std::int64_t{1} << 20;

/// Exact draws of the latent fields g_l on one grid. The squared-exponential
/// kernel on a regular grid factorizes as K_y (x) K_x, so each draw is
/// A_x Z A_y^T with A A^T = K from a symmetric eigendecomposition.
class LatentSampler {
 public:
  LatentSampler(const GridSpec& grid, const std::vector<LatentKernel>& kernels);
  /// |G| x L matrix, column l a draw of g_l in cell order.
  Eigen::MatrixXd draw(Rng& rng) const;

 private:
  GridSpec grid_;
  std::vector<Eigen::MatrixXd> root_x_;
  std::vector<Eigen::MatrixXd> root_y_;
};

/// f = W g + lambda * white noise on every grid point, S x |G|, for the
/// given rows of W.
Eigen::MatrixXd sample_field(const LatentSampler& sampler, const HyperParams& params,
                             const std::vector<int>& rows, Rng& rng);

std::vector<SynthDomain> sample_ground_truth(const SynthSpec& spec);

struct TransferScenario {
  SynthDomain rich;
  SynthDomain sparse;
};

/// Two domains drawn from one spec (V = 2); the second holds at most three
/// datasets.
TransferScenario make_transfer_scenario(const SynthSpec& spec);

/// Random generating parameters: W ~ N(0, 1), the given length-scales,
/// lambda and sigma2 constant.
HyperParams random_generating_params(Rng& rng, int S, const std::vector<double>& betas, double lambda,
                                     double sigma2);

/// S = 3 on a 24 x 24 grid: the target is observed on 2 x 2 blocks and
/// evaluated on 4 x 4 blocks; the two auxiliary datasets tile the grid with
/// 1 x 8 strips, one vertical and one horizontal.
SynthSpec refinement_scenario(std::uint64_t seed, int L = 2);

/// Two 24 x 24 domains sharing latent kernels. The rich domain holds the
/// target on 6 x 6 blocks and both strip datasets; the sparse domain holds
/// the target on 2 x 2 blocks and one auxiliary dataset on 4 x 4 blocks. share_weights reuses the rich domain's ids (and rows
/// of W) in the sparse domain.
SynthSpec transfer_spec(std::uint64_t seed, bool share_weights = false, int L = 2);

/// Bounding-box aspect ratio (long side / short side, in cells).
double aspect_ratio(const Region& region, const GridSpec& grid);

}  // namespace sagp
