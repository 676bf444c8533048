#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sagp/geometry.hpp"

namespace sagp {

struct NormalizationStats {
  double mean = 0.0;
  double std = 1.0;
};

/// Population mean/std of the raw values; a zero spread maps to std = 1.
NormalizationStats compute_stats(const Eigen::VectorXd& raw);
Eigen::VectorXd normalize(const NormalizationStats& stats, const Eigen::VectorXd& raw);
Eigen::VectorXd denormalize(const NormalizationStats& stats, const Eigen::VectorXd& z);

/// One areal dataset: a partition with one observation per region. `y` is
/// stored in normalized units.
struct DatasetObservations {
  std::string dataset_id;
  Partition partition;
  AggregationScheme scheme = AggregationScheme::Average;
  Eigen::VectorXd y;
  NormalizationStats stats;
};

/// Builds a dataset from raw observations, z-scoring them.
DatasetObservations make_dataset(std::string dataset_id, Partition partition,
                                 AggregationScheme scheme, const Eigen::VectorXd& raw);

struct DomainData {
  std::string domain_id;
  GridSpec grid;
  std::vector<DatasetObservations> datasets;

  const DatasetObservations& dataset(const std::string& dataset_id) const;
  std::size_t num_observations() const;

  /// Grid validity, per-dataset alignment, finiteness, disjointness.
  void validate() const;
};

/// Global dataset ordering shared by all domains of a model: the union of
/// dataset ids in order of first appearance.
class DatasetCatalog {
 public:
  DatasetCatalog() = default;
  explicit DatasetCatalog(std::vector<std::string> ids);
  static DatasetCatalog from_domains(std::span<const DomainData> domains);

  int size() const { return static_cast<int>(ids_.size()); }
  const std::vector<std::string>& ids() const { return ids_; }
  /// -1 when absent.
  int find(const std::string& id) const;
  /// Throws UnknownDataset when absent.
  int index_of(const std::string& id) const;

 private:
  std::vector<std::string> ids_;
};

}  // namespace sagp
