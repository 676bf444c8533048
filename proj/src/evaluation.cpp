#include "sagp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <set>

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

#include "sagp/error.hpp"
#include "sagp/random.hpp"

namespace sagp {

double mape(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw Error(ErrorKind::InvalidArgument, "mape needs vectors of equal length");
  }
  if (y_true.size() == 0) throw Error(ErrorKind::InvalidArgument, "mape of an empty vector");
  double total = 0.0;
  for (Eigen::Index i = 0; i < y_true.size(); ++i) {
    if (y_true[i] == 0.0) {
      throw Error(ErrorKind::ZeroTruthValue, "true value at position " + std::to_string(i) + " is 0");
    }
    total += std::abs((y_true[i] - y_pred[i]) / y_true[i]);
  }
  return total / static_cast<double>(y_true.size());
}

RefinementTask::RefinementTask(std::string task_id, std::string domain_id, std::string dataset_id,
                               Partition fine, AggregationScheme fine_scheme, Eigen::VectorXd fine_truth_raw)
    : task_id_(std::move(task_id)),
      domain_id_(std::move(domain_id)),
      dataset_id_(std::move(dataset_id)),
      fine_(std::move(fine)),
      fine_scheme_(fine_scheme),
      truth_(std::move(fine_truth_raw)) {
  if (truth_.size() != 0 && static_cast<std::size_t>(truth_.size()) != fine_.size()) {
    throw Error(ErrorKind::InvalidArgument, "fine truth must have one value per fine region");
  }
}

double score(const RefinementTask& task, const Eigen::VectorXd& predicted_raw) {
  if (!task.has_truth()) throw Error(ErrorKind::InvalidArgument, "task '" + task.task_id_ + "' has no truth");
  return mape(task.truth_, predicted_raw);
}

const DomainData& find_domain(std::span<const DomainData> domains, const std::string& domain_id) {
  for (const auto& d : domains) {
    if (d.domain_id == domain_id) return d;
  }
  throw Error(ErrorKind::UnknownDomain, "domain '" + domain_id + "' not found");
}

RegionPrediction to_raw_units(const RegionPrediction& normalized, const NormalizationStats& stats) {
  RegionPrediction raw = normalized;
  raw.mean = denormalize(stats, normalized.mean);
  raw.variance = normalized.variance * stats.std * stats.std;
  return raw;
}

RegionPrediction refine_sagp(const FittedModel& model, const RefinementTask& task) {
  const auto& state = model.domain(task.domain_id());
  return to_raw_units(predict_region(model, task.domain_id(), task.target()),
                      state.data.dataset(task.dataset_id()).stats);
}

int CVCandidate::succeeded() const {
  return static_cast<int>(std::count_if(folds.begin(), folds.end(), [](const FoldResult& f) { return f.ok; }));
}

const CVCandidate& CVResult::candidate(int L) const {
  for (const auto& c : candidates) {
    if (c.L == L) return c;
  }
  throw Error(ErrorKind::InvalidArgument, "L = " + std::to_string(L) + " was not a candidate");
}

CVResult loocv_select_L(std::span<const DomainData> domains, const RefinementTask& task,
                        std::vector<int> candidates, const ModelConfig& config) {
  if (candidates.empty()) throw Error(ErrorKind::InvalidArgument, "no candidate L values");
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  if (candidates.front() < 1) throw Error(ErrorKind::InvalidArgument, "candidate L values must be >= 1");

  std::size_t domain_index = domains.size();
  for (std::size_t v = 0; v < domains.size(); ++v) {
    if (domains[v].domain_id == task.domain_id()) domain_index = v;
  }
  if (domain_index == domains.size()) {
    throw Error(ErrorKind::UnknownDomain, "domain '" + task.domain_id() + "' not found");
  }
  const DomainData& domain = domains[domain_index];
  const DatasetObservations& target = domain.dataset(task.dataset_id());
  std::size_t dataset_index = 0;
  while (domain.datasets[dataset_index].dataset_id != task.dataset_id()) ++dataset_index;
  const int folds = static_cast<int>(target.partition.size());
  if (folds == 0) throw Error(ErrorKind::CVFailed, "dataset '" + task.dataset_id() + "' has no regions");
  const Eigen::VectorXd truth_raw = denormalize(target.stats, target.y);

  CVResult result;
  for (int L : candidates) {
    CVCandidate cand;
    cand.L = L;
    ModelConfig fold_config = config;
    fold_config.L = L;
    double total = 0.0;
    for (int n = 0; n < folds; ++n) {
      FoldResult fold;
      fold.region_id = target.partition.regions[n].region_id;
      std::vector<DomainData> train(domains.begin(), domains.end());
      DatasetObservations& held = train[domain_index].datasets[dataset_index];
      held.partition.regions.erase(held.partition.regions.begin() + n);
      Eigen::VectorXd rest(held.y.size() - 1);
      rest << held.y.head(n), held.y.tail(held.y.size() - n - 1);
      held.y = rest;
      try {
        const FittedModel model = fit(std::move(train), fold_config);
        const RegionTarget query{task.dataset_id(), Partition{"fold", {target.partition.regions[n]}},
                                 target.scheme};
        const RegionPrediction pred = predict_region(model, task.domain_id(), query);
        const double predicted = denormalize(target.stats, pred.mean)[0];
        fold.abs_pct_err = mape(truth_raw.segment(n, 1), Eigen::VectorXd::Constant(1, predicted));
        fold.ok = std::isfinite(fold.abs_pct_err);
        if (!fold.ok) fold.message = "non-finite error";
      } catch (const Error& e) {
        fold.message = e.what();
      }
      if (fold.ok) {
        total += fold.abs_pct_err;
      } else {
        result.warnings.push_back("L = " + std::to_string(L) + ", fold '" + fold.region_id +
                                  "' excluded: " + fold.message);
      }
      cand.folds.push_back(std::move(fold));
    }
    const int ok = cand.succeeded();
    if (ok < 0.8 * folds || ok == 0) {
      throw Error(ErrorKind::CVFailed, "L = " + std::to_string(L) + ": only " + std::to_string(ok) + " of " +
                                           std::to_string(folds) + " folds succeeded");
    }
    cand.mean_error = total / ok;
    result.candidates.push_back(std::move(cand));
  }

  const CVCandidate* best = &result.candidates.front();
  for (const auto& c : result.candidates) {
    if (c.mean_error < best->mean_error) best = &c;
  }
  result.selected_L = best->L;
  return result;
}

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Eigen::MatrixXd squared_distances(const std::vector<Eigen::Vector2d>& a, const std::vector<Eigen::Vector2d>& b) {
  Eigen::MatrixXd d2(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) d2(i, j) = (a[i] - b[j]).squaredNorm();
  }
  return d2;
}

struct GprEvaluation {
  double value = 0.0;
  Eigen::Vector3d gradient = Eigen::Vector3d::Zero();  // d/d(log alpha2, log beta, log noise)
};

GprEvaluation gpr_evaluate(const Eigen::MatrixXd& d2, const Eigen::VectorXd& y, const GprParams& p,
                           bool with_gradient) {
  const Eigen::Index n = y.size();
  const Eigen::MatrixXd E = (-d2.array() / (2.0 * p.beta * p.beta)).exp();
  Eigen::MatrixXd K = p.alpha2 * E;
  K.diagonal().array() += p.noise;
  const Factorization f = factorize(K, 0.0);
  const auto lower = f.lower.triangularView<Eigen::Lower>();
  const Eigen::VectorXd z = lower.solve(y);
  GprEvaluation out;
  out.value = -0.5 * z.squaredNorm() - f.lower.diagonal().array().log().sum() - 0.5 * static_cast<double>(n) * kLog2Pi;
  if (!with_gradient) return out;
  const Eigen::VectorXd alpha = lower.transpose().solve(z);
  const Eigen::MatrixXd Linv = lower.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd M = 0.5 * (alpha * alpha.transpose() - Linv.transpose() * Linv);
  const Eigen::MatrixXd dA = p.alpha2 * E;
  const Eigen::MatrixXd dB = (dA.array() * d2.array() / (p.beta * p.beta)).matrix();
  out.gradient[0] = (M.array() * dA.array()).sum();
  out.gradient[1] = (M.array() * dB.array()).sum();
  out.gradient[2] = p.noise * M.trace();
  return out;
}

GprParams from_theta(const double* theta) {
  return {std::exp(theta[0]), std::exp(theta[1]), std::exp(theta[2])};
}

class GprObjective final : public ceres::FirstOrderFunction {
 public:
  GprObjective(const Eigen::MatrixXd& d2, const Eigen::VectorXd& y) : d2_(d2), y_(y) {}

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    for (int i = 0; i < 3; ++i) {
      if (!std::isfinite(parameters[i]) || std::abs(parameters[i]) > 50.0) return false;
    }
    try {
      const auto e = gpr_evaluate(d2_, y_, from_theta(parameters), gradient != nullptr);
      if (!std::isfinite(e.value)) return false;
      cost[0] = -e.value;
      if (gradient) {
        for (int i = 0; i < 3; ++i) gradient[i] = -e.gradient[i];
      }
    } catch (const Error&) {
      return false;
    }
    return true;
  }

  int NumParameters() const override { return 3; }

 private:
  const Eigen::MatrixXd& d2_;
  const Eigen::VectorXd& y_;
};

std::vector<Eigen::Vector2d> centroids(const Partition& partition, const GridSpec& grid) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(partition.size());
  for (const auto& r : partition.regions) out.push_back(centroid(r, grid));
  return out;
}

}  // namespace

double gpr_log_likelihood(const std::vector<Eigen::Vector2d>& x, const Eigen::VectorXd& y,
                          const GprParams& params) {
  return gpr_evaluate(squared_distances(x, x), y, params, false).value;
}

GprParams fit_gpr(const std::vector<Eigen::Vector2d>& x, const Eigen::VectorXd& y,
                  const OptimizerSettings& settings) {
  if (x.empty() || static_cast<std::size_t>(y.size()) != x.size()) {
    throw Error(ErrorKind::InvalidArgument, "GPR needs one value per training point");
  }
  const Eigen::MatrixXd d2 = squared_distances(x, x);
  std::vector<double> dist;
  for (Eigen::Index i = 0; i < d2.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < d2.cols(); ++j) {
      if (d2(i, j) > 0.0) dist.push_back(std::sqrt(d2(i, j)));
    }
  }
  double base = 1.0;
  if (!dist.empty()) {
    auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
    std::nth_element(dist.begin(), mid, dist.end());
    base = *mid;
  }
  const double spread = std::max(y.squaredNorm() / static_cast<double>(y.size()), 1e-6);

  std::optional<GprParams> best;
  double best_value = -std::numeric_limits<double>::infinity();
  Rng rng(mix_seed(settings.seed, 0x6770));
  for (int k = 0; k < std::max(1, settings.restarts); ++k) {
    const double jiggle = k == 0 ? 1.0 : std::exp(0.5 * rng.normal());
    double theta[3] = {std::log(spread), std::log(base * jiggle), std::log(0.1 * spread)};
    ceres::GradientProblem problem(new GprObjective(d2, y));
    ceres::GradientProblemSolver::Options options;
    options.line_search_direction_type = ceres::LBFGS;
    options.max_num_iterations = settings.max_iterations;
    options.gradient_tolerance = settings.gradient_tolerance;
    options.function_tolerance = settings.function_tolerance;
    options.logging_type = ceres::SILENT;
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(options, problem, theta, &summary);
    if (summary.termination_type == ceres::FAILURE) continue;
    const GprParams p = from_theta(theta);
    try {
      const double v = gpr_evaluate(d2, y, p, false).value;
      if (std::isfinite(v) && v > best_value) {
        best_value = v;
        best = p;
      }
    } catch (const Error&) {
    }
  }
  if (!best) throw Error(ErrorKind::OptimizerDiverged, "GPR fit failed for every restart");
  return *best;
}

GprPrediction gpr_predict(const std::vector<Eigen::Vector2d>& x, const Eigen::VectorXd& y,
                          const GprParams& params, const std::vector<Eigen::Vector2d>& query) {
  const double inv = 1.0 / (2.0 * params.beta * params.beta);
  Eigen::MatrixXd K = params.alpha2 * (-squared_distances(x, x).array() * inv).exp();
  K.diagonal().array() += params.noise;
  const Eigen::MatrixXd Ks = params.alpha2 * (-squared_distances(x, query).array() * inv).exp();
  const Factorization f = factorize(K, 0.0);
  const auto lower = f.lower.triangularView<Eigen::Lower>();
  const Eigen::MatrixXd V = lower.solve(Ks);
  GprPrediction out;
  out.mean = V.transpose() * lower.solve(y);
  out.variance = (params.alpha2 - V.colwise().squaredNorm().array()).max(0.0).matrix().transpose();
  return out;
}

RegionPrediction baseline_gpr(const RefinementTask& task, const DomainData& domain,
                              const OptimizerSettings& settings) {
  const DatasetObservations& coarse = domain.dataset(task.dataset_id());
  const auto train = centroids(coarse.partition, domain.grid);
  const auto query = centroids(task.fine(), domain.grid);
  const GprParams params = fit_gpr(train, coarse.y, settings);
  const GprPrediction pred = gpr_predict(train, coarse.y, params, query);
  RegionPrediction out;
  for (const auto& r : task.fine().regions) out.region_ids.push_back(r.region_id);
  out.mean = pred.mean;
  out.variance = pred.variance;
  return to_raw_units(out, coarse.stats);
}

Partition collapse_to_centroids(const Partition& partition, const GridSpec& grid) {
  Partition out{partition.partition_id, {}};
  std::set<CellIndex> used;
  for (const auto& region : partition.regions) {
    const Eigen::Vector2d c = centroid(region, grid);
    CellIndex cell = grid.nearest_cell(c);
    if (used.count(cell)) {
      double best = std::numeric_limits<double>::infinity();
      for (CellIndex i = 0; i < grid.size(); ++i) {
        if (used.count(i)) continue;
        const double d = (grid.center(i) - c).squaredNorm();
        if (d < best) {
          best = d;
          cell = i;
        }
      }
      if (!std::isfinite(best)) throw Error(ErrorKind::GridMismatch, "no free cell left for collapsing");
    }
    used.insert(cell);
    out.regions.push_back({region.region_id, {cell}, std::nullopt});
  }
  return out;
}

DomainData collapse_to_centroids(const DomainData& domain) {
  DomainData out = domain;
  for (auto& d : out.datasets) {
    d.partition = collapse_to_centroids(d.partition, domain.grid);
    d.scheme = AggregationScheme::Average;
  }
  return out;
}

RegionPrediction baseline_slfm(const RefinementTask& task, std::span<const DomainData> domains,
                               const ModelConfig& config) {
  std::vector<DomainData> collapsed;
  collapsed.reserve(domains.size());
  for (const auto& d : domains) collapsed.push_back(collapse_to_centroids(d));
  const FittedModel model = fit(std::move(collapsed), config);
  const auto& state = model.domain(task.domain_id());
  const GridSpec& grid = state.data.grid;
  Partition points{task.fine().partition_id, {}};
  for (const auto& r : task.fine().regions) {
    points.regions.push_back({r.region_id, {grid.nearest_cell(centroid(r, grid))}, std::nullopt});
  }
  const RegionPrediction pred =
      predict_region(model, task.domain_id(), {task.dataset_id(), points, AggregationScheme::Average});
  return to_raw_units(pred, state.data.dataset(task.dataset_id()).stats);
}

}  // namespace sagp
