#include <doctest.h>

#include <cmath>

#include "sagp/error.hpp"
#include "sagp/evaluation.hpp"
#include "support/oracles.hpp"

using namespace sagp;

namespace {

GridSpec grid(int nx, int ny) {
  GridSpec g;
  g.nx = nx;
  g.ny = ny;
  return g;
}

Partition single_cells(const std::string& prefix, const std::vector<CellIndex>& cells) {
  Partition p;
  p.partition_id = prefix;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    p.regions.push_back({prefix + "_" + std::to_string(i), {cells[i]}, std::nullopt});
  }
  return p;
}

Partition blocks(const GridSpec& g, int bx, int by, const std::string& prefix) {
  Partition p;
  p.partition_id = prefix;
  for (int j = 0; j < by; ++j) {
    for (int i = 0; i < bx; ++i) {
      Region r;
      r.region_id = prefix + "_" + std::to_string(j * bx + i);
      for (int row = j * g.ny / by; row < (j + 1) * g.ny / by; ++row) {
        for (int col = i * g.nx / bx; col < (i + 1) * g.nx / bx; ++col) r.cells.push_back(g.index(col, row));
      }
      p.regions.push_back(std::move(r));
    }
  }
  return p;
}

ModelConfig quick_config(int L) {
  ModelConfig c;
  c.L = L;
  c.optimizer.restarts = 1;
  c.optimizer.max_iterations = 60;
  c.optimizer.seed = 4;
  return c;
}

}  // namespace

TEST_CASE("mape examples") {
  Eigen::VectorXd t(2), p(2);
  t << 1.0, 2.0;
  p << 1.1, 1.8;
  CHECK(mape(t, p) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(mape(t, t) == 0.0);
}

TEST_CASE("mape is scale invariant") {
  sagp::Rng rng(3);
  Eigen::VectorXd t(7), p(7);
  for (int i = 0; i < 7; ++i) {
    t[i] = 1.0 + rng.uniform();
    p[i] = rng.normal();
  }
  for (double c : {-3.0, 0.01, 250.0}) {
    CHECK(mape(c * t, c * p) == doctest::Approx(mape(t, p)).epsilon(1e-12));
  }
}

TEST_CASE("mape rejects zeros and mismatched lengths") {
  Eigen::VectorXd t(3), p(3);
  t << 1.0, 0.0, 2.0;
  p << 1.0, 1.0, 1.0;
  CHECK_THROWS_AS(mape(t, p), Error);
  try {
    mape(t, p);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroTruthValue);
  }
  CHECK_THROWS_AS(mape(Eigen::VectorXd::Ones(2), p), Error);
}

TEST_CASE("score compares against the withheld truth") {
  const GridSpec g = grid(4, 4);
  Eigen::VectorXd truth(4);
  truth << 2.0, 4.0, 5.0, 10.0;
  RefinementTask task("t", "d", "s0", blocks(g, 2, 2, "fine"), AggregationScheme::Average, truth);
  CHECK(task.has_truth());
  CHECK(task.target().partition.size() == 4);
  Eigen::VectorXd pred = truth;
  pred[0] = 3.0;
  CHECK(score(task, pred) == doctest::Approx(0.125));
}

TEST_CASE("to_raw_units maps means and variances") {
  RegionPrediction z;
  z.region_ids = {"a", "b"};
  z.mean = Eigen::Vector2d(0.0, -1.0);
  z.variance = Eigen::Vector2d(1.0, 0.25);
  const RegionPrediction raw = to_raw_units(z, {5.0, 2.0});
  CHECK(raw.mean[0] == 5.0);
  CHECK(raw.mean[1] == 3.0);
  CHECK(raw.variance[0] == 4.0);
  CHECK(raw.variance[1] == 1.0);
}

TEST_CASE("GPR interpolates one noise-free point") {
  const std::vector<Eigen::Vector2d> x{{1.5, 2.5}};
  Eigen::VectorXd y(1);
  y << 0.8;
  const GprParams params{1.0, 2.0, 0.0};
  const GprPrediction at = gpr_predict(x, y, params, x);
  CHECK(at.mean[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(std::abs(at.variance[0]) < 1e-10);

  const GprPrediction far = gpr_predict(x, y, params, {{1.5 + 20.0, 2.5}});
  CHECK(std::abs(far.mean[0]) < 1e-3);
  CHECK(far.variance[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("GPR fit improves on its starting likelihood") {
  sagp::Rng rng(8);
  std::vector<Eigen::Vector2d> x;
  Eigen::VectorXd y(12);
  for (int i = 0; i < 12; ++i) {
    x.emplace_back(i * 1.0, 0.5 * (i % 3));
    y[i] = std::sin(0.5 * i) + 0.05 * rng.normal();
  }
  OptimizerSettings settings;
  settings.restarts = 2;
  const GprParams fitted = fit_gpr(x, y, settings);
  CHECK(fitted.alpha2 > 0.0);
  CHECK(fitted.beta > 0.0);
  CHECK(fitted.noise >= 0.0);
  CHECK(gpr_log_likelihood(x, y, fitted) >= gpr_log_likelihood(x, y, GprParams{}) - 1e-9);
}

TEST_CASE("baseline GPR predicts at fine centroids in raw units") {
  const GridSpec g = grid(4, 4);
  DomainData d;
  d.domain_id = "d";
  d.grid = g;
  Eigen::VectorXd raw(4);
  raw << 10.0, 12.0, 11.0, 13.0;
  d.datasets.push_back(make_dataset("s0", blocks(g, 2, 2, "coarse"), AggregationScheme::Average, raw));
  RefinementTask task("t", "d", "s0", blocks(g, 4, 4, "fine"), AggregationScheme::Average,
                      Eigen::VectorXd::Constant(16, 11.5));
  OptimizerSettings settings;
  settings.restarts = 1;
  const RegionPrediction pred = baseline_gpr(task, d, settings);
  REQUIRE(pred.mean.size() == 16);
  CHECK(pred.region_ids.front() == "fine_0");
  CHECK(pred.mean.minCoeff() > 8.0);
  CHECK(pred.mean.maxCoeff() < 15.0);
}

TEST_CASE("collapse to centroids") {
  const GridSpec g = grid(5, 5);
  Partition p;
  p.regions.push_back({"row", {0, 1, 2, 3, 4}, std::nullopt});
  p.regions.push_back({"col", {2, 7, 12, 17, 22}, std::nullopt});
  p.regions.push_back({"dup", {12}, std::nullopt});
  const Partition c = collapse_to_centroids(p, g);
  REQUIRE(c.size() == 3);
  CHECK(c.regions[0].cells == std::vector<CellIndex>{2});
  CHECK(c.regions[1].cells == std::vector<CellIndex>{12});
  REQUIRE(c.regions[2].cells.size() == 1);
  const CellIndex moved = c.regions[2].cells[0];
  CHECK(moved != 12);
  const double d2 = testing::squared_distance(g, moved, 12);
  CHECK(d2 == 1.0);
}

TEST_CASE("SLFM matches SAGP when every region is a single cell") {
  const GridSpec g = grid(5, 5);
  sagp::Rng rng(21);
  DomainData d;
  d.domain_id = "d";
  d.grid = g;
  const Partition target = single_cells("t", {0, 6, 18, 24});
  const Partition aux = single_cells("a", {1, 3, 7, 11, 12, 13, 17, 21, 23});
  Eigen::VectorXd yt(4), ya(9);
  for (int i = 0; i < 4; ++i) yt[i] = 5.0 + rng.normal();
  for (int i = 0; i < 9; ++i) ya[i] = 2.0 + rng.normal();
  d.datasets.push_back(make_dataset("target", target, AggregationScheme::Average, yt));
  d.datasets.push_back(make_dataset("aux", aux, AggregationScheme::Average, ya));
  RefinementTask task("t", "d", "target", single_cells("f", {2, 10, 14, 22}), AggregationScheme::Average,
                      Eigen::VectorXd::Constant(4, 5.0));

  const ModelConfig config = quick_config(1);
  std::vector<DomainData> domains{d};
  const RegionPrediction slfm = baseline_slfm(task, domains, config);
  const RegionPrediction sagp = refine_sagp(fit(domains, config), task);
  REQUIRE(slfm.mean.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(slfm.mean[i] == doctest::Approx(sagp.mean[i]).epsilon(1e-8));
    CHECK(slfm.variance[i] == doctest::Approx(sagp.variance[i]).epsilon(1e-8));
  }
}

TEST_CASE("cross-validation") {
  const GridSpec g = grid(6, 6);
  DomainData d;
  d.domain_id = "d";
  d.grid = g;
  sagp::Rng rng(5);
  Eigen::VectorXd aux(9);
  for (int i = 0; i < 9; ++i) aux[i] = 1.0 + rng.normal();

  SUBCASE("single candidate") {
    Eigen::VectorXd target(4);
    target << 3.0, 3.5, 2.5, 4.0;
    d.datasets.push_back(make_dataset("target", blocks(g, 2, 2, "c"), AggregationScheme::Average, target));
    d.datasets.push_back(make_dataset("aux", blocks(g, 3, 3, "a"), AggregationScheme::Average, aux));
    RefinementTask task("t", "d", "target", blocks(g, 3, 3, "f"), AggregationScheme::Average, {});
    CHECK_FALSE(task.has_truth());
    const CVResult cv = loocv_select_L(std::vector<DomainData>{d}, task, {1}, quick_config(1));
    CHECK(cv.selected_L == 1);
    REQUIRE(cv.candidates.size() == 1);
    CHECK(cv.candidates[0].folds.size() == 4);
    CHECK(cv.candidates[0].succeeded() == 4);
    CHECK(std::isfinite(cv.candidates[0].mean_error));
    CHECK(cv.candidates[0].folds[2].region_id == "c_2");
  }

  SUBCASE("ties go to the smaller L") {
    // A lone constant target normalizes to zeros, so every fold predicts
    // the held-out value exactly whatever L is.
    d.datasets.push_back(make_dataset("target", blocks(g, 2, 2, "c"), AggregationScheme::Average,
                                      Eigen::VectorXd::Constant(4, 7.0)));
    RefinementTask task("t", "d", "target", blocks(g, 3, 3, "f"), AggregationScheme::Average, {});
    const CVResult cv = loocv_select_L(std::vector<DomainData>{d}, task, {2, 1, 2}, quick_config(1));
    REQUIRE(cv.candidates.size() == 2);
    CHECK(cv.candidate(1).mean_error == cv.candidate(2).mean_error);
    CHECK(cv.selected_L == 1);
  }

  SUBCASE("bad candidates") {
    d.datasets.push_back(make_dataset("target", blocks(g, 2, 2, "c"), AggregationScheme::Average, aux.head(4)));
    RefinementTask task("t", "d", "target", blocks(g, 3, 3, "f"), AggregationScheme::Average, {});
    CHECK_THROWS_AS(loocv_select_L(std::vector<DomainData>{d}, task, {}, quick_config(1)), Error);
    CHECK_THROWS_AS(loocv_select_L(std::vector<DomainData>{d}, task, {0}, quick_config(1)), Error);
  }
}
