#include "sagp/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sagp/error.hpp"

namespace sagp {

NormalizationStats compute_stats(const Eigen::VectorXd& raw) {
  NormalizationStats stats;
  if (raw.size() == 0) return stats;
  stats.mean = raw.mean();
  const double var = (raw.array() - stats.mean).square().mean();
  stats.std = var > 0.0 ? std::sqrt(var) : 1.0;
  return stats;
}

Eigen::VectorXd normalize(const NormalizationStats& stats, const Eigen::VectorXd& raw) {
  return (raw.array() - stats.mean) / stats.std;
}

Eigen::VectorXd denormalize(const NormalizationStats& stats, const Eigen::VectorXd& z) {
  return z.array() * stats.std + stats.mean;
}

DatasetObservations make_dataset(std::string dataset_id, Partition partition,
                                 AggregationScheme scheme, const Eigen::VectorXd& raw) {
  DatasetObservations d;
  d.dataset_id = std::move(dataset_id);
  d.partition = std::move(partition);
  d.scheme = scheme;
  d.stats = compute_stats(raw);
  d.y = normalize(d.stats, raw);
  return d;
}

const DatasetObservations& DomainData::dataset(const std::string& dataset_id) const {
  for (const auto& d : datasets) {
    if (d.dataset_id == dataset_id) return d;
  }
  throw Error(ErrorKind::UnknownDataset,
              "dataset '" + dataset_id + "' not in domain '" + domain_id + "'");
}

std::size_t DomainData::num_observations() const {
  std::size_t n = 0;
  for (const auto& d : datasets) n += d.partition.size();
  return n;
}

void DomainData::validate() const {
  grid.validate();
  std::set<std::string> seen;
  for (const auto& d : datasets) {
    if (!seen.insert(d.dataset_id).second) {
      throw Error(ErrorKind::InvalidArgument,
                  "dataset id '" + d.dataset_id + "' repeated in domain '" + domain_id + "'");
    }
    if (static_cast<std::size_t>(d.y.size()) != d.partition.size()) {
      throw Error(ErrorKind::InvalidArgument,
                  "dataset '" + d.dataset_id + "' has " + std::to_string(d.y.size()) +
                      " observations for " + std::to_string(d.partition.size()) + " regions");
    }
    if (!d.y.allFinite()) {
      throw Error(ErrorKind::InvalidArgument, "dataset '" + d.dataset_id + "' has non-finite observations");
    }
    for (const auto& r : d.partition.regions) r.validate();
    validate_partition(d.partition, grid);
  }
}

DatasetCatalog::DatasetCatalog(std::vector<std::string> ids) : ids_(std::move(ids)) {
  std::set<std::string> unique(ids_.begin(), ids_.end());
  if (unique.size() != ids_.size()) {
    throw Error(ErrorKind::InvalidArgument, "dataset catalog has duplicate ids");
  }
}

DatasetCatalog DatasetCatalog::from_domains(std::span<const DomainData> domains) {
  std::vector<std::string> ids;
  for (const auto& domain : domains) {
    for (const auto& d : domain.datasets) {
      if (std::find(ids.begin(), ids.end(), d.dataset_id) == ids.end()) ids.push_back(d.dataset_id);
    }
  }
  return DatasetCatalog(std::move(ids));
}

int DatasetCatalog::find(const std::string& id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  return it == ids_.end() ? -1 : static_cast<int>(it - ids_.begin());
}

int DatasetCatalog::index_of(const std::string& id) const {
  const int i = find(id);
  if (i < 0) throw Error(ErrorKind::UnknownDataset, "dataset '" + id + "' is not part of the model");
  return i;
}

}  // namespace sagp
