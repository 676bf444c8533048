#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sagp/aggregation.hpp"
#include "sagp/data.hpp"
#include "sagp/kernel.hpp"

namespace sagp {

struct OptimizerSettings {
  int max_iterations = 200;
  double gradient_tolerance = 1e-5;
  double function_tolerance = 1e-10;
  int restarts = 5;
  std::uint64_t seed = 0;
};

struct ModelConfig {
  int L = 1;
  /// Diagonal jitter always added to C. If the factorization still fails it
  /// is escalated from 1e-8 * trace(C)/N by factors of 10 up to 1e-2 * trace(C)/N.
  double jitter = 1e-8;
  OptimizerSettings optimizer;
  /// "default" or "zero-weights" (W starts at 0, other parameters as default).
  std::string init = "default";
};

/// Cholesky factor of C + jitter * I.
struct Factorization {
  Eigen::MatrixXd lower;
  double jitter = 0.0;
};

/// Throws NotPositiveDefinite once the escalation ceiling is reached.
Factorization factorize(const Eigen::MatrixXd& C, double jitter);

/// Evaluates the (multi-domain) log marginal likelihood and its gradient
/// with respect to the unconstrained parameter vector. Distance histograms
/// are built once per domain and reused across evaluations.
class LikelihoodEvaluator {
 public:
  LikelihoodEvaluator(std::span<const DomainData> domains, DatasetCatalog catalog);

  struct Result {
    double value = 0.0;
    Eigen::VectorXd gradient;  // empty unless requested
  };

  Result evaluate(const HyperParams& params, double jitter, bool with_gradient) const;
  double value(const HyperParams& params, double jitter) const;
  Eigen::VectorXd gradient(const HyperParams& params, double jitter) const;

  const DatasetCatalog& catalog() const { return catalog_; }
  std::span<const DomainGeometry> geometries() const { return geometries_; }
  /// Per-domain terms, in domain order.
  std::vector<double> per_domain(const HyperParams& params, double jitter) const;

 private:
  DatasetCatalog catalog_;
  std::vector<DomainGeometry> geometries_;
};

double log_marginal_likelihood(const HyperParams& params, std::span<const DomainData> domains,
                               double jitter);
Eigen::VectorXd gradient(const HyperParams& params, std::span<const DomainData> domains,
                         double jitter);

struct RestartTrace {
  int restart = 0;
  bool ok = false;
  double final_log_likelihood = 0.0;
  int iterations = 0;
  std::vector<double> log_likelihood_trace;
  std::string message;
};

struct FitDiagnostics {
  double log_likelihood = 0.0;
  int iterations = 0;
  int restarts = 0;
  int best_restart = -1;
  std::vector<RestartTrace> traces;
  std::vector<std::string> warnings;
};

class FittedModel {
 public:
  struct DomainState {
    DomainData data;
    DomainGeometry geometry;
    Factorization factor;
    Eigen::VectorXd alpha;  // (C + jitter I)^{-1} (y - mu)
  };

  FittedModel(HyperParams params, DatasetCatalog catalog, std::vector<DomainState> domains,
              FitDiagnostics diagnostics);

  const HyperParams& params() const { return params_; }
  const DatasetCatalog& catalog() const { return catalog_; }
  const FitDiagnostics& diagnostics() const { return diagnostics_; }
  const std::vector<DomainState>& domains() const { return domains_; }
  /// Throws UnknownDomain.
  const DomainState& domain(const std::string& domain_id) const;
  const DistanceCache& cache(const std::string& domain_id) const;

 private:
  HyperParams params_;
  DatasetCatalog catalog_;
  std::vector<DomainState> domains_;
  std::vector<DistanceCache> caches_;
  FitDiagnostics diagnostics_;
};

/// Factorizes every domain at fixed hyperparameters (no optimization).
FittedModel condition(const HyperParams& params, std::vector<DomainData> domains, double jitter,
                      const DatasetCatalog* catalog = nullptr, FitDiagnostics diagnostics = {});

/// Initial hyperparameters for one restart.
HyperParams initial_params(std::span<const DomainData> domains, const DatasetCatalog& catalog,
                           int L, std::uint64_t seed, int restart);

/// Maximizes the log marginal likelihood with L-BFGS from `restarts`
/// initializations and keeps the best. Throws OptimizerDiverged when every
/// restart fails.
FittedModel fit(std::vector<DomainData> domains, const ModelConfig& config);

struct PointPrediction {
  Eigen::VectorXd mean;  // S, normalized units
  Eigen::MatrixXd cov;   // S x S
};

struct GridPrediction {
  Eigen::MatrixXd mean;      // S x |G|
  Eigen::MatrixXd variance;  // S x |G|
};

/// Posterior process m*(x), K*(x, x') of one domain.
class PosteriorGP {
 public:
  PosteriorGP(const FittedModel& model, const std::string& domain_id);

  PointPrediction at(CellIndex x) const;
  Eigen::MatrixXd mean(CellIndex x) const { return at(x).mean; }
  Eigen::MatrixXd cov(CellIndex x, CellIndex x2) const;
  /// Prior K(x, x') (S x S).
  Eigen::MatrixXd prior_cov(CellIndex x, CellIndex x2) const;
  /// N x S matrix H(x).
  Eigen::MatrixXd point_to_region(CellIndex x) const;
  GridPrediction raster() const;

 private:
  const FittedModel* model_;
  const FittedModel::DomainState* state_;
  const DistanceCache* cache_;
};

PointPrediction posterior_point(const FittedModel& model, const std::string& domain_id, CellIndex x);

struct RegionTarget {
  std::string dataset_id;
  Partition partition;
  AggregationScheme scheme = AggregationScheme::Average;
};

struct RegionPrediction {
  std::vector<std::string> region_ids;
  Eigen::VectorXd mean;      // normalized units
  Eigen::VectorXd variance;  // normalized units, clamped to >= 0
  std::vector<std::string> warnings;
};

RegionPrediction predict_region(const FittedModel& model, const std::string& domain_id,
                                const RegionTarget& target);

/// value * std + mean with the dataset's normalization stats.
Eigen::VectorXd denormalize(const DomainData& domain, const std::string& dataset_id,
                            const Eigen::VectorXd& values);

}  // namespace sagp
