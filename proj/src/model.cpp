#include "sagp/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include <Eigen/Cholesky>
#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>
#include <ceres/iteration_callback.h>

#include "sagp/error.hpp"
#include "sagp/random.hpp"

namespace sagp {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Eigen::MatrixXd build_covariance(const DomainGeometry& geometry,
                                 const std::vector<Eigen::MatrixXd>& latent,
                                 const HyperParams& params) {
  const int N = geometry.num_regions();
  const int L = params.num_latents();
  Eigen::MatrixXd C(N, N);
  for (int r = 0; r < N; ++r) {
    const int s = geometry.dataset_of(r);
    for (int r2 = r; r2 < N; ++r2) {
      const int s2 = geometry.dataset_of(r2);
      double v = 0.0;
      for (int l = 0; l < L; ++l) v += params.weights(s, l) * params.weights(s2, l) * latent[l](r, r2);
      if (s == s2) v += params.noise.lambda[s] * params.noise.lambda[s] * geometry.overlap()(r, r2);
      if (r == r2) v += params.noise.sigma2[s];
      C(r, r2) = v;
      C(r2, r) = v;
    }
  }
  return C;
}

Eigen::VectorXd solve_with(const Factorization& f, const Eigen::VectorXd& b) {
  const auto lower = f.lower.triangularView<Eigen::Lower>();
  return lower.transpose().solve(lower.solve(b));
}

void check_catalog(const HyperParams& params, const DatasetCatalog& catalog) {
  params.validate();
  if (params.num_datasets() != catalog.size()) {
    throw Error(ErrorKind::InvalidArgument,
                "hyperparameters cover " + std::to_string(params.num_datasets()) +
                    " datasets but the domains hold " + std::to_string(catalog.size()));
  }
}

}  // namespace

Factorization factorize(const Eigen::MatrixXd& C, double jitter) {
  const Eigen::Index N = C.rows();
  if (N == 0) return {Eigen::MatrixXd(0, 0), jitter};
  if (!C.allFinite()) throw Error(ErrorKind::NotPositiveDefinite, "covariance has non-finite entries");

  auto attempt = [&](double j) -> std::optional<Eigen::MatrixXd> {
    Eigen::MatrixXd A = C;
    A.diagonal().array() += j;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) return std::nullopt;
    Eigen::MatrixXd lower = llt.matrixL();
    const auto diag = lower.diagonal().array();
    if (!diag.allFinite() || (diag <= 0.0).any()) return std::nullopt;
    return lower;
  };

  if (auto lower = attempt(jitter)) return {std::move(*lower), jitter};
  const double scale = C.trace() / static_cast<double>(N);
  if (!(scale > 0.0)) throw Error(ErrorKind::NotPositiveDefinite, "covariance has a nonpositive trace");
  for (double rel = 1e-8; rel <= 1e-2 * (1.0 + 1e-9); rel *= 10.0) {
    const double j = std::max(jitter, rel * scale);
    if (auto lower = attempt(j)) return {std::move(*lower), j};
  }
  throw Error(ErrorKind::NotPositiveDefinite,
              "Cholesky failed after escalating jitter to 1e-2 * trace(C)/N");
}

LikelihoodEvaluator::LikelihoodEvaluator(std::span<const DomainData> domains, DatasetCatalog catalog)
    : catalog_(std::move(catalog)) {
  geometries_.reserve(domains.size());
  for (const auto& d : domains) geometries_.emplace_back(d, catalog_);
}

LikelihoodEvaluator::Result LikelihoodEvaluator::evaluate(const HyperParams& params, double jitter,
                                                          bool with_gradient) const {
  check_catalog(params, catalog_);
  const int S = params.num_datasets();
  const int L = params.num_latents();
  const ParamLayout layout{S, L};
  Result result;
  if (with_gradient) result.gradient = Eigen::VectorXd::Zero(layout.size());

  for (const auto& geometry : geometries_) {
    const int N = geometry.num_regions();
    if (N == 0) continue;
    const Eigen::VectorXd d2 = geometry.lattice().squared_distances();
    Eigen::MatrixXd values(d2.size(), with_gradient ? 2 * L : L);
    for (int l = 0; l < L; ++l) {
      const double beta2 = params.kernels[l].beta * params.kernels[l].beta;
      values.col(l) = (-d2.array() / (2.0 * beta2)).exp();
      // d gamma / d log beta = gamma * d2 / beta^2
      if (with_gradient) values.col(L + l) = values.col(l).array() * d2.array() / beta2;
    }
    const auto integrated = geometry.integrate(values);
    const Eigen::MatrixXd C = build_covariance(geometry, integrated, params);
    const Factorization f = factorize(C, jitter);
    const auto lower = f.lower.triangularView<Eigen::Lower>();
    const Eigen::VectorXd z = lower.solve(geometry.observations());
    result.value += -0.5 * z.squaredNorm() - f.lower.diagonal().array().log().sum() -
                    0.5 * static_cast<double>(N) * kLog2Pi;
    if (!with_gradient) continue;

    const Eigen::VectorXd alpha = lower.transpose().solve(z);
    const Eigen::MatrixXd Linv = lower.solve(Eigen::MatrixXd::Identity(N, N));
    // dl/dtheta = tr(M dC/dtheta) with M = (alpha alpha^T - C^{-1}) / 2
    const Eigen::MatrixXd M = 0.5 * (alpha * alpha.transpose() - Linv.transpose() * Linv);
    Eigen::VectorXd& g = result.gradient;
    for (int r = 0; r < N; ++r) {
      const int s = geometry.dataset_of(r);
      for (int r2 = 0; r2 < N; ++r2) {
        const int s2 = geometry.dataset_of(r2);
        const double m = M(r, r2);
        for (int l = 0; l < L; ++l) {
          g[layout.weight(s, l)] += 2.0 * m * integrated[l](r, r2) * params.weights(s2, l);
          g[layout.log_beta(l)] += m * params.weights(s, l) * params.weights(s2, l) * integrated[L + l](r, r2);
        }
        if (s == s2) {
          g[layout.log_lambda(s)] +=
              2.0 * m * params.noise.lambda[s] * params.noise.lambda[s] * geometry.overlap()(r, r2);
        }
      }
      g[layout.log_sigma(s)] += 2.0 * M(r, r) * params.noise.sigma2[s];
    }
  }
  return result;
}

double LikelihoodEvaluator::value(const HyperParams& params, double jitter) const {
  return evaluate(params, jitter, false).value;
}

Eigen::VectorXd LikelihoodEvaluator::gradient(const HyperParams& params, double jitter) const {
  return evaluate(params, jitter, true).gradient;
}

std::vector<double> LikelihoodEvaluator::per_domain(const HyperParams& params, double jitter) const {
  std::vector<double> out;
  for (const auto& geometry : geometries_) {
    const int N = geometry.num_regions();
    if (N == 0) {
      out.push_back(0.0);
      continue;
    }
    const DistanceCache cache = build_distance_cache(geometry.lattice_ptr(), params);
    const MarginalMoments m = assemble_moments(geometry, cache, params);
    const Factorization f = factorize(m.C, jitter);
    const Eigen::VectorXd z = f.lower.triangularView<Eigen::Lower>().solve(geometry.observations() - m.mu);
    out.push_back(-0.5 * z.squaredNorm() - f.lower.diagonal().array().log().sum() -
                  0.5 * static_cast<double>(N) * kLog2Pi);
  }
  return out;
}

double log_marginal_likelihood(const HyperParams& params, std::span<const DomainData> domains,
                               double jitter) {
  return LikelihoodEvaluator(domains, DatasetCatalog::from_domains(domains)).value(params, jitter);
}

Eigen::VectorXd gradient(const HyperParams& params, std::span<const DomainData> domains, double jitter) {
  return LikelihoodEvaluator(domains, DatasetCatalog::from_domains(domains)).gradient(params, jitter);
}

FittedModel::FittedModel(HyperParams params, DatasetCatalog catalog, std::vector<DomainState> domains,
                         FitDiagnostics diagnostics)
    : params_(std::move(params)),
      catalog_(std::move(catalog)),
      domains_(std::move(domains)),
      diagnostics_(std::move(diagnostics)) {
  for (const auto& d : domains_) caches_.push_back(build_distance_cache(d.geometry.lattice_ptr(), params_));
}

const FittedModel::DomainState& FittedModel::domain(const std::string& domain_id) const {
  for (const auto& d : domains_) {
    if (d.data.domain_id == domain_id) return d;
  }
  throw Error(ErrorKind::UnknownDomain, "domain '" + domain_id + "' is not part of the model");
}

const DistanceCache& FittedModel::cache(const std::string& domain_id) const {
  const DomainState& state = domain(domain_id);
  return caches_[static_cast<std::size_t>(&state - domains_.data())];
}

FittedModel condition(const HyperParams& params, std::vector<DomainData> domains, double jitter,
                      const DatasetCatalog* catalog, FitDiagnostics diagnostics) {
  DatasetCatalog cat = catalog ? *catalog : DatasetCatalog::from_domains(domains);
  check_catalog(params, cat);
  std::vector<FittedModel::DomainState> states;
  states.reserve(domains.size());
  for (auto& d : domains) {
    d.validate();
    DomainGeometry geometry(d, cat);
    const DistanceCache cache = build_distance_cache(geometry.lattice_ptr(), params);
    const MarginalMoments m = assemble_moments(geometry, cache, params);
    Factorization f = factorize(m.C, jitter);
    Eigen::VectorXd alpha = solve_with(f, geometry.observations() - m.mu);
    states.push_back({std::move(d), std::move(geometry), std::move(f), std::move(alpha)});
  }
  return FittedModel(params, std::move(cat), std::move(states), std::move(diagnostics));
}

HyperParams initial_params(std::span<const DomainData> domains, const DatasetCatalog& catalog, int L,
                           std::uint64_t seed, int restart) {
  if (L < 1) throw Error(ErrorKind::InvalidArgument, "L must be >= 1");
  std::vector<double> distances;
  double fallback = 1.0;
  for (const auto& domain : domains) {
    std::vector<Eigen::Vector2d> centers;
    for (const auto& d : domain.datasets) {
      for (const auto& r : d.partition.regions) centers.push_back(centroid(r, domain.grid));
    }
    for (std::size_t i = 0; i < centers.size(); ++i) {
      for (std::size_t j = i + 1; j < centers.size(); ++j) {
        const double dist = (centers[i] - centers[j]).norm();
        if (dist > 0.0) distances.push_back(dist);
      }
    }
    fallback = std::max(fallback, 0.5 * domain.grid.cell_size * std::max(domain.grid.nx, domain.grid.ny));
  }
  double base = fallback;
  if (!distances.empty()) {
    auto mid = distances.begin() + static_cast<std::ptrdiff_t>(distances.size() / 2);
    std::nth_element(distances.begin(), mid, distances.end());
    base = *mid;
  }

  const int S = catalog.size();
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(restart)));
  HyperParams p = HyperParams::zeros(S, L);
  const double scale = 1.0 / std::sqrt(static_cast<double>(L));
  for (int s = 0; s < S; ++s) {
    for (int l = 0; l < L; ++l) p.weights(s, l) = rng.normal() * scale;
  }
  for (int l = 0; l < L; ++l) {
    double beta = base * std::pow(2.0, l - 0.5 * (L - 1));
    if (restart > 0) beta *= std::exp(0.5 * rng.normal());
    p.kernels[l].beta = beta;
  }
  p.noise.lambda.setConstant(0.1);
  p.noise.sigma2.setConstant(0.01);
  return p;
}

namespace {

class NegativeLogLikelihood final : public ceres::FirstOrderFunction {
 public:
  NegativeLogLikelihood(const LikelihoodEvaluator& evaluator, ParamLayout layout, double jitter)
      : evaluator_(evaluator), layout_(layout), jitter_(jitter) {}

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    const Eigen::VectorXd theta = Eigen::Map<const Eigen::VectorXd>(parameters, layout_.size());
    if (!theta.allFinite()) return false;
    try {
      const auto result = evaluator_.evaluate(unpack(theta, layout_), jitter_, gradient != nullptr);
      if (!std::isfinite(result.value)) return false;
      cost[0] = -result.value;
      if (gradient) {
        if (!result.gradient.allFinite()) return false;
        Eigen::Map<Eigen::VectorXd>(gradient, layout_.size()) = -result.gradient;
      }
    } catch (const Error&) {
      return false;
    }
    return true;
  }

  int NumParameters() const override { return layout_.size(); }

 private:
  const LikelihoodEvaluator& evaluator_;
  ParamLayout layout_;
  double jitter_;
};

class TraceCallback final : public ceres::IterationCallback {
 public:
  explicit TraceCallback(std::vector<double>* trace) : trace_(trace) {}
  ceres::CallbackReturnType operator()(const ceres::IterationSummary& summary) override {
    trace_->push_back(-summary.cost);
    return ceres::SOLVER_CONTINUE;
  }

 private:
  std::vector<double>* trace_;
};

}  // namespace

FittedModel fit(std::vector<DomainData> domains, const ModelConfig& config) {
  if (domains.empty()) throw Error(ErrorKind::InvalidArgument, "fit needs at least one domain");
  for (const auto& d : domains) d.validate();
  const DatasetCatalog catalog = DatasetCatalog::from_domains(domains);
  std::size_t observations = 0;
  for (const auto& d : domains) observations += d.num_observations();
  if (catalog.size() == 0 || observations == 0) {
    throw Error(ErrorKind::InvalidArgument, "fit needs at least one dataset with one region");
  }
  if (config.L < 1) throw Error(ErrorKind::InvalidArgument, "L must be >= 1");
  if (config.init != "default" && config.init != "zero-weights") {
    throw Error(ErrorKind::InvalidArgument, "unknown init strategy '" + config.init + "'");
  }

  FitDiagnostics diag;
  if (config.L > catalog.size()) {
    diag.warnings.push_back("L = " + std::to_string(config.L) + " exceeds the dataset count S = " +
                            std::to_string(catalog.size()));
  }
  const ParamLayout layout{catalog.size(), config.L};
  const LikelihoodEvaluator evaluator(domains, catalog);
  const int restarts = std::max(1, config.optimizer.restarts);

  std::optional<HyperParams> best;
  for (int k = 0; k < restarts; ++k) {
    RestartTrace trace;
    trace.restart = k;
    HyperParams start = initial_params(domains, catalog, config.L, config.optimizer.seed, k);
    if (config.init == "zero-weights") start.weights.setZero();
    Eigen::VectorXd theta = pack(start);

    ceres::GradientProblem problem(new NegativeLogLikelihood(evaluator, layout, config.jitter));
    ceres::GradientProblemSolver::Options options;
    options.line_search_direction_type = ceres::LBFGS;
    options.max_num_iterations = config.optimizer.max_iterations;
    options.gradient_tolerance = config.optimizer.gradient_tolerance;
    options.function_tolerance = config.optimizer.function_tolerance;
    options.parameter_tolerance = 1e-12;
    options.logging_type = ceres::SILENT;
    options.minimizer_progress_to_stdout = false;
    TraceCallback callback(&trace.log_likelihood_trace);
    options.callbacks.push_back(&callback);
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(options, problem, theta.data(), &summary);

    trace.iterations = static_cast<int>(summary.iterations.size());
    trace.message = summary.message;
    trace.ok = summary.termination_type != ceres::FAILURE && std::isfinite(summary.final_cost) &&
               theta.allFinite();
    if (trace.ok) {
      try {
        trace.final_log_likelihood = evaluator.value(unpack(theta, layout), config.jitter);
        trace.ok = std::isfinite(trace.final_log_likelihood);
      } catch (const Error& e) {
        trace.ok = false;
        trace.message = e.what();
      }
    }
    diag.iterations += trace.iterations;
    if (trace.ok && (!best || trace.final_log_likelihood > diag.log_likelihood)) {
      best = unpack(theta, layout);
      diag.log_likelihood = trace.final_log_likelihood;
      diag.best_restart = k;
    }
    diag.traces.push_back(std::move(trace));
  }
  diag.restarts = restarts;
  if (!best) {
    std::string why;
    for (const auto& t : diag.traces) why += "\n  restart " + std::to_string(t.restart) + ": " + t.message;
    throw Error(ErrorKind::OptimizerDiverged, "all restarts failed" + why);
  }
  return condition(*best, std::move(domains), config.jitter, &catalog, std::move(diag));
}

PosteriorGP::PosteriorGP(const FittedModel& model, const std::string& domain_id)
    : model_(&model), state_(&model.domain(domain_id)), cache_(&model.cache(domain_id)) {}

Eigen::MatrixXd PosteriorGP::point_to_region(CellIndex x) const {
  const int S = model_->params().num_datasets();
  Eigen::MatrixXd H(state_->geometry.num_regions(), S);
  for (int t = 0; t < S; ++t) H.col(t) = point_to_region_cov(x, t, state_->geometry, *cache_, model_->params());
  return H;
}

Eigen::MatrixXd PosteriorGP::prior_cov(CellIndex x, CellIndex x2) const {
  const HyperParams& p = model_->params();
  const GridSpec& grid = state_->data.grid;
  if (!grid.contains(x) || !grid.contains(x2)) {
    throw Error(ErrorKind::GridMismatch, "point is not on the domain grid");
  }
  const int S = p.num_datasets();
  const int L = p.num_latents();
  Eigen::VectorXd g(L);
  for (int l = 0; l < L; ++l) g[l] = cache_->gamma(l, x, x2);
  Eigen::MatrixXd K = p.weights * g.asDiagonal() * p.weights.transpose();
  if (x == x2) {
    for (int t = 0; t < S; ++t) K(t, t) += p.noise.lambda[t] * p.noise.lambda[t];
  }
  return K;
}

PointPrediction PosteriorGP::at(CellIndex x) const {
  const Eigen::MatrixXd H = point_to_region(x);
  const Eigen::MatrixXd V = state_->factor.lower.triangularView<Eigen::Lower>().solve(H);
  PointPrediction out;
  out.mean = H.transpose() * state_->alpha;
  out.cov = prior_cov(x, x) - V.transpose() * V;
  return out;
}

Eigen::MatrixXd PosteriorGP::cov(CellIndex x, CellIndex x2) const {
  const auto lower = state_->factor.lower.triangularView<Eigen::Lower>();
  const Eigen::MatrixXd V1 = lower.solve(point_to_region(x));
  const Eigen::MatrixXd V2 = lower.solve(point_to_region(x2));
  return prior_cov(x, x2) - V1.transpose() * V2;
}

GridPrediction PosteriorGP::raster() const {
  const HyperParams& p = model_->params();
  const GridSpec& grid = state_->data.grid;
  const DistanceLattice& lattice = *cache_->lattice;
  const auto& geometry = state_->geometry;
  const int S = p.num_datasets();
  const int L = p.num_latents();
  const int N = geometry.num_regions();
  const CellIndex G = static_cast<CellIndex>(grid.size());
  constexpr CellIndex kChunk = 512;

  GridPrediction out;
  out.mean.resize(S, G);
  out.variance.resize(S, G);
  const auto lower = state_->factor.lower.triangularView<Eigen::Lower>();
  std::vector<Eigen::MatrixXd> latent(L);

  for (CellIndex begin = 0; begin < G; begin += kChunk) {
    const CellIndex width = std::min(kChunk, G - begin);
    // latent[l](r, x) = sum_{j in r} w_j gamma_l(j, x)
    for (int l = 0; l < L; ++l) latent[l] = Eigen::MatrixXd::Zero(N, width);
    for (int r = 0; r < N; ++r) {
      const WeightedRegion& region = geometry.regions()[r];
      for (std::size_t j = 0; j < region.cells.size(); ++j) {
        for (CellIndex x = 0; x < width; ++x) {
          const int d = lattice.index_between(region.cells[j], begin + x);
          for (int l = 0; l < L; ++l) latent[l](r, x) += region.weights[j] * cache_->values[l][d];
        }
      }
    }
    for (int t = 0; t < S; ++t) {
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(N, width);
      for (int r = 0; r < N; ++r) {
        const int s = geometry.dataset_of(r);
        for (int l = 0; l < L; ++l) H.row(r) += p.weights(s, l) * p.weights(t, l) * latent[l].row(r);
        if (s == t) {
          const WeightedRegion& region = geometry.regions()[r];
          const double lam2 = p.noise.lambda[t] * p.noise.lambda[t];
          for (std::size_t j = 0; j < region.cells.size(); ++j) {
            const CellIndex c = region.cells[j];
            if (c >= begin && c < begin + width) H(r, c - begin) += lam2 * region.weights[j];
          }
        }
      }
      const double prior = p.weights.row(t).squaredNorm() + p.noise.lambda[t] * p.noise.lambda[t];
      out.mean.block(t, begin, 1, width) = (H.transpose() * state_->alpha).transpose();
      const Eigen::MatrixXd V = lower.solve(H);
      out.variance.block(t, begin, 1, width) =
          (prior - V.colwise().squaredNorm().array()).max(0.0).matrix();
    }
  }
  return out;
}

PointPrediction posterior_point(const FittedModel& model, const std::string& domain_id, CellIndex x) {
  return PosteriorGP(model, domain_id).at(x);
}

RegionPrediction predict_region(const FittedModel& model, const std::string& domain_id,
                                const RegionTarget& target) {
  const auto& state = model.domain(domain_id);
  const DistanceCache& cache = model.cache(domain_id);
  const HyperParams& p = model.params();
  const int t = model.catalog().index_of(target.dataset_id);
  const auto targets = weigh_partition(target.partition, target.scheme, state.data.grid);
  const auto& geometry = state.geometry;
  const DistanceLattice& lattice = geometry.lattice();
  const int N = geometry.num_regions();
  const int L = p.num_latents();
  const double lam2 = p.noise.lambda[t] * p.noise.lambda[t];
  const auto lower = state.factor.lower.triangularView<Eigen::Lower>();

  RegionPrediction out;
  const auto Q = static_cast<Eigen::Index>(targets.size());
  out.mean.resize(Q);
  out.variance.resize(Q);
  for (Eigen::Index q = 0; q < Q; ++q) {
    out.region_ids.push_back(target.partition.regions[q].region_id);
    Eigen::VectorXd h(N);
    for (int r = 0; r < N; ++r) {
      const int s = geometry.dataset_of(r);
      const Eigen::VectorXd hist = pair_histogram(lattice, targets[q], geometry.regions()[r]);
      double v = 0.0;
      for (int l = 0; l < L; ++l) v += p.weights(s, l) * p.weights(t, l) * hist.dot(cache.values[l]);
      if (s == t) v += lam2 * hist[0];
      h[r] = v;
    }
    const Eigen::VectorXd self = pair_histogram(lattice, targets[q], targets[q]);
    double prior = lam2 * self[0];
    for (int l = 0; l < L; ++l) prior += p.weights(t, l) * p.weights(t, l) * self.dot(cache.values[l]);

    out.mean[q] = h.dot(state.alpha);
    double var = prior - lower.solve(h).squaredNorm();
    if (var < 0.0) {
      if (var < -1e-8 * std::max(1.0, prior)) {
        out.warnings.push_back("region '" + out.region_ids.back() + "' variance " + std::to_string(var) +
                               " clamped to 0");
      }
      var = 0.0;
    }
    out.variance[q] = var;
  }
  return out;
}

Eigen::VectorXd denormalize(const DomainData& domain, const std::string& dataset_id,
                            const Eigen::VectorXd& values) {
  return sagp::denormalize(domain.dataset(dataset_id).stats, values);
}

}  // namespace sagp
