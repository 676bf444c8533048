#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sagp/error.hpp"
#include "sagp/model.hpp"
#include "support/oracles.hpp"

using namespace sagp;

namespace {

GridSpec grid(double cell, int nx, int ny) {
  GridSpec g;
  g.cell_size = cell;
  g.nx = nx;
  g.ny = ny;
  return g;
}

DomainData single_cell_domain(double y, const std::string& id = "d") {
  DomainData d;
  d.domain_id = id;
  d.grid = grid(1.0, 2, 2);
  d.datasets.push_back({"s", Partition{"p", {{"r", {0}, {}}}}, AggregationScheme::Average,
                        Eigen::VectorXd::Constant(1, y), {}});
  return d;
}

// Relative agreement per coordinate, with an absolute floor for near-zero entries.
bool close(double a, double b, double rel, double floor) {
  return std::abs(a - b) <= rel * std::max(std::abs(b), floor);
}

}  // namespace

TEST_CASE("scalar marginal likelihood") {
  HyperParams p = HyperParams::zeros(1, 1);
  p.weights(0, 0) = 1.0;
  p.noise.lambda[0] = 0.5;
  p.noise.sigma2[0] = 0.1;
  const std::vector<DomainData> domains{single_cell_domain(0.0)};
  const double ell = log_marginal_likelihood(p, domains, 0.0);
  CHECK(ell == doctest::Approx(-0.5 * std::log(1.35) - 0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
  CHECK(ell == doctest::Approx(-1.068991).epsilon(1e-6));
}

TEST_CASE("likelihood matches the dense Gaussian density") {
  Rng rng(31);
  for (int trial = 0; trial < 15; ++trial) {
    const GridSpec g = grid(0.3 + rng.uniform(), 2 + static_cast<int>(rng.below(6)),
                            2 + static_cast<int>(rng.below(6)));
    const int S = 1 + static_cast<int>(rng.below(3));
    const HyperParams p = testing::random_params(rng, S, 1 + static_cast<int>(rng.below(3)));
    const std::vector<DomainData> domains{testing::random_domain(rng, g, S, 5, 6)};
    const double expected = testing::gaussian_log_density(testing::stacked_observations(domains[0]),
                                                          testing::brute_force_C(domains[0], p));
    CHECK(close(log_marginal_likelihood(p, domains, 0.0), expected, 1e-10, 1.0));
  }
}

TEST_CASE("multi-domain likelihood is additive") {
  Rng rng(37);
  const HyperParams p = testing::random_params(rng, 2, 2);
  std::vector<DomainData> domains{testing::random_domain(rng, grid(0.5, 5, 4), 2, 4, 5, "a"),
                                  testing::random_domain(rng, grid(0.8, 3, 6), 2, 4, 5, "b")};
  const double a = log_marginal_likelihood(p, std::span(domains).subspan(0, 1), 0.0);
  const double b = log_marginal_likelihood(p, std::span(domains).subspan(1, 1), 0.0);
  CHECK(log_marginal_likelihood(p, domains, 0.0) == doctest::Approx(a + b).epsilon(1e-14));

  const std::vector<DomainData> twice{domains[0], domains[0]};
  CHECK(log_marginal_likelihood(p, twice, 0.0) == doctest::Approx(2.0 * a).epsilon(1e-14));

  const LikelihoodEvaluator evaluator(domains, DatasetCatalog::from_domains(domains));
  const auto parts = evaluator.per_domain(p, 0.0);
  CHECK(parts[0] == doctest::Approx(a).epsilon(1e-13));
  CHECK(parts[1] == doctest::Approx(b).epsilon(1e-13));
}

TEST_CASE("an empty domain contributes nothing") {
  Rng rng(41);
  const HyperParams p = testing::random_params(rng, 2, 1);
  std::vector<DomainData> domains{testing::random_domain(rng, grid(0.5, 4, 4), 2, 3, 4, "a")};
  const double solo = log_marginal_likelihood(p, domains, 0.0);
  DomainData empty;
  empty.domain_id = "b";
  empty.grid = grid(0.5, 3, 3);
  domains.push_back(empty);
  CHECK(log_marginal_likelihood(p, domains, 0.0) == solo);
}

TEST_CASE("single-cell regions reduce to the point-observation likelihood") {
  Rng rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    const GridSpec g = grid(0.4 + rng.uniform(), 6, 5);
    const int S = 1 + static_cast<int>(rng.below(4));
    const HyperParams p = testing::random_params(rng, S, 1 + static_cast<int>(rng.below(3)));
    DomainData d = testing::random_domain(rng, g, S, 8, 1);
    std::vector<testing::PointObservation> points;
    for (int s = 0; s < S; ++s) {
      const auto& ds = d.datasets[s];
      for (std::size_t n = 0; n < ds.partition.size(); ++n) {
        const CellIndex c = ds.partition.regions[n].cells[0];
        points.push_back({s, g.center(c), c, ds.y[static_cast<Eigen::Index>(n)]});
      }
    }
    const std::vector<DomainData> domains{d};
    CHECK(close(log_marginal_likelihood(p, domains, 0.0), testing::slfm_log_likelihood(points, p), 1e-8, 1.0));
  }
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    const GridSpec g = grid(0.4 + rng.uniform(), 3 + static_cast<int>(rng.below(4)),
                            3 + static_cast<int>(rng.below(4)));
    const int S = 1 + static_cast<int>(rng.below(3));
    const int L = 1 + static_cast<int>(rng.below(2));
    const HyperParams p = testing::random_params(rng, S, L);
    std::vector<DomainData> domains{testing::random_domain(rng, g, S, 4, 5, "a")};
    if (trial % 2 == 1) domains.push_back(testing::random_domain(rng, g, S, 3, 4, "b"));
    const LikelihoodEvaluator evaluator(domains, DatasetCatalog::from_domains(domains));
    const ParamLayout layout{S, L};
    const Eigen::VectorXd theta = pack(p);
    const Eigen::VectorXd analytic = evaluator.gradient(p, 0.0);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::VectorXd up = theta, down = theta;
      up[i] += h;
      down[i] -= h;
      const double fd = (evaluator.value(unpack(up, layout), 0.0) - evaluator.value(unpack(down, layout), 0.0)) / (2.0 * h);
      CHECK(close(analytic[i], fd, 1e-4, 1e-3));
    }
  }
}

TEST_CASE("gradient at the symmetric point") {
  HyperParams p = HyperParams::zeros(1, 2);
  p.noise.lambda[0] = 0.3;
  p.noise.sigma2[0] = 0.2;
  DomainData d;
  d.domain_id = "d";
  d.grid = grid(1.0, 4, 4);
  d.datasets.push_back({"s", Partition{"p", {{"a", {0, 1}, {}}, {"b", {5, 10}, {}}}},
                        AggregationScheme::Average, Eigen::VectorXd::Zero(2), {}});
  const std::vector<DomainData> domains{d};
  const Eigen::VectorXd grad = gradient(p, domains, 0.0);
  const ParamLayout layout{1, 2};
  CHECK(grad[layout.weight(0, 0)] == 0.0);
  CHECK(grad[layout.weight(0, 1)] == 0.0);
  CHECK(grad[layout.log_sigma(0)] < 0.0);
}

TEST_CASE("factorize") {
  Rng rng(53);
  const HyperParams p = testing::random_params(rng, 2, 2);
  const DomainData d = testing::random_domain(rng, grid(0.5, 6, 6), 2, 6, 6);
  const auto m = assemble_moments(d, build_distance_cache(d.grid, p), p);
  for (double jitter : {0.0, 1e-6}) {
    const Factorization f = factorize(m.C, jitter);
    Eigen::MatrixXd target = m.C;
    target.diagonal().array() += f.jitter;
    CHECK((f.lower * f.lower.transpose() - target).norm() <= 1e-8 * target.norm());
    CHECK(f.jitter == jitter);
  }

  Eigen::MatrixXd singular = Eigen::MatrixXd::Ones(3, 3);
  const Factorization f = factorize(singular, 0.0);
  CHECK(f.jitter > 0.0);
  CHECK(f.jitter <= 1e-2);

  Eigen::MatrixXd indefinite = Eigen::MatrixXd::Identity(2, 2);
  indefinite(1, 1) = -1.0;
  try {
    factorize(indefinite, 0.0);
    FAIL("expected NotPositiveDefinite");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotPositiveDefinite);
  }
}

TEST_CASE("posterior matches dense Gaussian conditioning") {
  Rng rng(59);
  for (int trial = 0; trial < 8; ++trial) {
    const GridSpec g = grid(0.3 + rng.uniform(), 3 + static_cast<int>(rng.below(5)),
                            3 + static_cast<int>(rng.below(5)));
    const int S = 1 + static_cast<int>(rng.below(3));
    const HyperParams p = testing::random_params(rng, S, 1 + static_cast<int>(rng.below(3)));
    const DomainData d = testing::random_domain(rng, g, S, 4, 6);
    const auto dense = testing::dense_posterior(d, p);
    const FittedModel model = condition(p, {d}, 0.0);
    const PosteriorGP post(model, d.domain_id);
    const auto G = g.size();
    for (CellIndex x = 0; x < G; x += 3) {
      const PointPrediction at = post.at(x);
      for (int s = 0; s < S; ++s) {
        CHECK(std::abs(at.mean[s] - dense.mean[s * G + x]) <= 1e-6);
        for (int s2 = 0; s2 < S; ++s2) CHECK(std::abs(at.cov(s, s2) - dense.cov(s * G + x, s2 * G + x)) <= 1e-6);
      }
      const CellIndex x2 = (x * 7 + 1) % G;
      const Eigen::MatrixXd c = post.cov(x, x2);
      for (int s = 0; s < S; ++s) {
        for (int s2 = 0; s2 < S; ++s2) CHECK(std::abs(c(s, s2) - dense.cov(s * G + x, s2 * G + x2)) <= 1e-6);
      }
      const Eigen::MatrixXd prior = post.prior_cov(x, x);
      CHECK((at.cov.diagonal() - prior.diagonal()).maxCoeff() <= 1e-8);
    }
    const GridPrediction raster = post.raster();
    for (CellIndex x = 0; x < G; ++x) {
      for (int s = 0; s < S; ++s) {
        CHECK(std::abs(raster.mean(s, x) - dense.mean[s * G + x]) <= 1e-6);
        CHECK(std::abs(raster.variance(s, x) - std::max(0.0, dense.cov(s * G + x, s * G + x))) <= 1e-6);
      }
    }
  }
}

TEST_CASE("posterior interpolates an exact single-cell observation") {
  HyperParams p = HyperParams::zeros(1, 1);
  p.weights(0, 0) = 1.0;
  const FittedModel model = condition(p, {single_cell_domain(0.7)}, 0.0);
  const PointPrediction at = posterior_point(model, "d", 0);
  CHECK(at.mean[0] == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(std::abs(at.cov(0, 0)) <= 1e-14);

  RegionTarget target{"s", Partition{"t", {{"same", {0}, {}}}}, AggregationScheme::Average};
  const RegionPrediction r = predict_region(model, "d", target);
  CHECK(r.mean[0] == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(r.variance[0] == doctest::Approx(0.0));

  CHECK_THROWS_AS(posterior_point(model, "elsewhere", 0), Error);
}

TEST_CASE("an empty domain predicts the prior") {
  Rng rng(61);
  const HyperParams p = testing::random_params(rng, 2, 2);
  const DomainData a = testing::random_domain(rng, grid(0.5, 4, 4), 2, 3, 4, "a");
  DomainData empty;
  empty.domain_id = "b";
  empty.grid = grid(0.5, 3, 3);
  const FittedModel model = condition(p, {a, empty}, 0.0);
  const PosteriorGP post(model, "b");
  const PointPrediction at = post.at(4);
  CHECK(at.mean.isZero(0.0));
  CHECK(at.cov == post.prior_cov(4, 4));
}

TEST_CASE("predicting the training partition reproduces the observations") {
  Rng rng(67);
  for (int trial = 0; trial < 5; ++trial) {
    HyperParams p = testing::random_params(rng, 2, 2);
    p.noise.sigma2.setConstant(1e-10);
    const DomainData d = testing::random_domain(rng, grid(0.5, 6, 6), 2, 5, 6);
    const FittedModel model = condition(p, {d}, 0.0);
    for (const auto& ds : d.datasets) {
      const RegionPrediction r = predict_region(model, d.domain_id, {ds.dataset_id, ds.partition, ds.scheme});
      CHECK((r.mean - ds.y).cwiseAbs().maxCoeff() <= 1e-6);
      CHECK(r.variance.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("region predictions equal aggregated dense posterior") {
  Rng rng(71);
  const GridSpec g = grid(0.5, 5, 5);
  const HyperParams p = testing::random_params(rng, 2, 2);
  const DomainData d = testing::random_domain(rng, g, 2, 4, 5);
  const auto dense = testing::dense_posterior(d, p);
  const FittedModel model = condition(p, {d}, 0.0);
  const Partition target = testing::random_partition(rng, g, 4, 6, "t");
  const RegionPrediction r = predict_region(model, d.domain_id, {"s1", target, AggregationScheme::Average});
  const auto G = g.size();
  for (std::size_t q = 0; q < target.size(); ++q) {
    const auto& cells = target.regions[q].cells;
    const double w = 1.0 / static_cast<double>(cells.size());
    double mean = 0.0, var = 0.0, prior = 0.0;
    const Eigen::MatrixXd K = testing::dense_prior(d, p);
    for (CellIndex i : cells) {
      mean += w * dense.mean[G + i];
      for (CellIndex j : cells) {
        var += w * w * dense.cov(G + i, G + j);
        prior += w * w * K(G + i, G + j);
      }
    }
    CHECK(std::abs(r.mean[static_cast<Eigen::Index>(q)] - mean) <= 1e-8);
    CHECK(std::abs(r.variance[static_cast<Eigen::Index>(q)] - std::max(0.0, var)) <= 1e-8);
    CHECK(r.variance[static_cast<Eigen::Index>(q)] <= prior + 1e-8);
  }
}

TEST_CASE("denormalize") {
  DomainData d = single_cell_domain(0.0);
  d.datasets[0].stats = {3.0, 2.0};
  CHECK(denormalize(d, "s", Eigen::VectorXd::Zero(1))[0] == 3.0);
  CHECK(denormalize(d, "s", Eigen::VectorXd::Ones(1))[0] == 5.0);
  CHECK_THROWS_AS(denormalize(d, "missing", Eigen::VectorXd::Zero(1)), Error);

  const Eigen::Vector4d raw(1.5, -2.0, 7.25, 0.1);
  const NormalizationStats stats = compute_stats(raw);
  CHECK((denormalize(stats, normalize(stats, raw)) - raw).cwiseAbs().maxCoeff() <= 1e-12);
  const Eigen::VectorXd z = normalize(stats, raw);
  CHECK(std::abs(z.mean()) <= 1e-14);
  CHECK(z.squaredNorm() / 4.0 == doctest::Approx(1.0));
}

TEST_CASE("fit improves on the generating likelihood") {
  Rng rng(73);
  const GridSpec g = grid(1.0, 8, 8);
  HyperParams truth = testing::random_params(rng, 3, 2, 1.5, 3.0, 0.2);
  // Sixteen 2x2 blocks per dataset.
  DomainData d;
  d.domain_id = "d";
  d.grid = g;
  Partition blocks{"blocks", {}};
  for (int br = 0; br < 4; ++br) {
    for (int bc = 0; bc < 4; ++bc) {
      Region r{"b" + std::to_string(br * 4 + bc), {}, std::nullopt};
      for (int dr = 0; dr < 2; ++dr) {
        for (int dc = 0; dc < 2; ++dc) r.cells.push_back(g.index(2 * bc + dc, 2 * br + dr));
      }
      std::sort(r.cells.begin(), r.cells.end());
      blocks.regions.push_back(r);
    }
  }
  for (int s = 0; s < 3; ++s) {
    d.datasets.push_back({"s" + std::to_string(s), blocks, AggregationScheme::Average, Eigen::VectorXd::Zero(16), {}});
  }
  // Draw y ~ N(0, C(truth)).
  const Eigen::MatrixXd C = testing::brute_force_C(d, truth);
  const Eigen::MatrixXd Lc = Eigen::LLT<Eigen::MatrixXd>(C).matrixL();
  Eigen::VectorXd z(48);
  for (int i = 0; i < 48; ++i) z[i] = rng.normal();
  const Eigen::VectorXd y = Lc * z;
  for (int s = 0; s < 3; ++s) d.datasets[s].y = y.segment(16 * s, 16);

  ModelConfig config;
  config.L = 2;
  config.optimizer.restarts = 3;
  config.optimizer.seed = 5;
  const std::vector<DomainData> domains{d};
  const double at_truth = log_marginal_likelihood(truth, domains, config.jitter);
  const FittedModel model = fit(domains, config);
  CHECK(model.diagnostics().log_likelihood >= at_truth);
  CHECK(model.diagnostics().restarts == 3);
  CHECK(model.diagnostics().traces.size() == 3);

  const FittedModel again = fit(domains, config);
  CHECK(format_hyperparams(again.params()) == format_hyperparams(model.params()));
}

TEST_CASE("fit on zero data from W = 0 stops at a stationary point") {
  DomainData d;
  d.domain_id = "d";
  d.grid = grid(1.0, 4, 4);
  d.datasets.push_back({"s", Partition{"p", {{"a", {0, 1}, {}}, {"b", {5, 6}, {}}, {"c", {15}, {}}}},
                        AggregationScheme::Average, Eigen::VectorXd::Zero(3), {}});
  const std::vector<DomainData> domains{d};
  HyperParams start = HyperParams::zeros(1, 1, 2.0);
  start.noise.lambda[0] = 0.1;
  start.noise.sigma2[0] = 0.01;
  const Eigen::VectorXd grad = gradient(start, domains, 1e-6);
  CHECK(grad[ParamLayout{1, 1}.weight(0, 0)] == 0.0);

  ModelConfig config;
  config.jitter = 1e-6;
  config.init = "zero-weights";
  config.optimizer.restarts = 1;
  const FittedModel model = fit(domains, config);
  CHECK(model.params().weights.isZero(0.0));
  const Eigen::VectorXd g = gradient(model.params(), domains, model.domains()[0].factor.jitter);
  CHECK(g.cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("fit rejects bad configurations") {
  ModelConfig config;
  CHECK_THROWS_AS(fit({}, config), Error);
  config.L = 0;
  CHECK_THROWS_AS(fit({single_cell_domain(1.0)}, config), Error);
  config.L = 3;
  config.optimizer.restarts = 1;
  const FittedModel model = fit({single_cell_domain(1.0)}, config);
  CHECK(model.diagnostics().warnings.size() == 1);
}
