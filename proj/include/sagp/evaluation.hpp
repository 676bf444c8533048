#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sagp/data.hpp"
#include "sagp/geometry.hpp"
#include "sagp/model.hpp"

namespace sagp {

/// Mean of |(y_true - y_pred) / y_true|. Throws ZeroTruthValue on any exact
/// zero in y_true.
double mape(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred);

/// Refine the coarse observations of one dataset to a finer partition. The
/// coarse data lives in the domain itself; the fine truth is only reachable
/// through score().
class RefinementTask {
 public:
  RefinementTask(std::string task_id, std::string domain_id, std::string dataset_id, Partition fine,
                 AggregationScheme fine_scheme, Eigen::VectorXd fine_truth_raw);

  const std::string& task_id() const { return task_id_; }
  const std::string& domain_id() const { return domain_id_; }
  const std::string& dataset_id() const { return dataset_id_; }
  const Partition& fine() const { return fine_; }
  AggregationScheme fine_scheme() const { return fine_scheme_; }
  bool has_truth() const { return truth_.size() > 0; }

  RegionTarget target() const { return {dataset_id_, fine_, fine_scheme_}; }

  friend double score(const RefinementTask& task, const Eigen::VectorXd& predicted_raw);

 private:
  std::string task_id_;
  std::string domain_id_;
  std::string dataset_id_;
  Partition fine_;
  AggregationScheme fine_scheme_;
  Eigen::VectorXd truth_;
};

/// MAPE of raw-unit predictions against the task's fine truth.
double score(const RefinementTask& task, const Eigen::VectorXd& predicted_raw);

const DomainData& find_domain(std::span<const DomainData> domains, const std::string& domain_id);

/// Predictions mapped back to raw units with the dataset's statistics
/// (mean * std + mean, variance * std^2).
RegionPrediction to_raw_units(const RegionPrediction& normalized, const NormalizationStats& stats);

/// SAGP fine-region predictions, raw units.
RegionPrediction refine_sagp(const FittedModel& model, const RefinementTask& task);

struct FoldResult {
  std::string region_id;
  bool ok = false;
  double abs_pct_err = 0.0;
  std::string message;
};

struct CVCandidate {
  int L = 0;
  double mean_error = 0.0;
  std::vector<FoldResult> folds;
  int succeeded() const;
};

struct CVResult {
  std::vector<CVCandidate> candidates;
  int selected_L = 0;
  std::vector<std::string> warnings;
  const CVCandidate& candidate(int L) const;
};

/// Leave-one-out over the coarse regions of the task's dataset. Each fold
/// refits without one observation and predicts it; errors are absolute
/// percentage errors in raw units. Ties go to the smaller L.
CVResult loocv_select_L(std::span<const DomainData> domains, const RefinementTask& task,
                        std::vector<int> candidates, const ModelConfig& config);

/// Single-output GP with k(x, x') = alpha2 exp(-|x - x'|^2 / (2 beta^2)) and
/// white observation noise.
struct GprParams {
  double alpha2 = 1.0;
  double beta = 1.0;
  double noise = 1e-2;
};

struct GprPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

double gpr_log_likelihood(const std::vector<Eigen::Vector2d>& x, const Eigen::VectorXd& y,
                          const GprParams& params);
GprParams fit_gpr(const std::vector<Eigen::Vector2d>& x, const Eigen::VectorXd& y,
                  const OptimizerSettings& settings);
GprPrediction gpr_predict(const std::vector<Eigen::Vector2d>& x, const Eigen::VectorXd& y,
                          const GprParams& params, const std::vector<Eigen::Vector2d>& query);

/// GPR on coarse-region centroids of the task's dataset, predicted at the
/// fine-region centroids. Raw units.
RegionPrediction baseline_gpr(const RefinementTask& task, const DomainData& domain,
                              const OptimizerSettings& settings = {});

/// Every region collapsed to the cell nearest its centroid. When two regions
/// of one dataset land on the same cell the later one moves to the nearest
/// free cell.
Partition collapse_to_centroids(const Partition& partition, const GridSpec& grid);
DomainData collapse_to_centroids(const DomainData& domain);

/// SAGP fitted and queried on the centroid-collapsed geometry. Raw units.
RegionPrediction baseline_slfm(const RefinementTask& task, std::span<const DomainData> domains,
                               const ModelConfig& config);

}  // namespace sagp
