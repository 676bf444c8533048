#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "sagp/error.hpp"
#include "sagp/kernel.hpp"
#include "sagp/random.hpp"
#include "support/oracles.hpp"

using namespace sagp;

TEST_CASE("gamma") {
  CHECK(gamma(LatentKernel{0.3}, 0.0) == 1.0);
  CHECK(gamma(LatentKernel{7.0}, 0.0) == 1.0);
  CHECK(gamma(LatentKernel{1.0}, 2.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(gamma(LatentKernel{1.0}, 2.0) == doctest::Approx(0.367879).epsilon(1e-6));
  CHECK(gamma(LatentKernel{0.5}, 1.0) == doctest::Approx(0.135335).epsilon(1e-6));
}

TEST_CASE("cross_cov examples") {
  HyperParams p = HyperParams::zeros(1, 1);
  p.weights(0, 0) = 1.0;
  CHECK(cross_cov(0, 0, 0.0, true, p) == 1.0);

  p.noise.lambda[0] = 0.5;
  CHECK(cross_cov(0, 0, 0.0, true, p) == doctest::Approx(1.25));
  CHECK(cross_cov(0, 0, 0.0, false, p) == doctest::Approx(1.0));

  HyperParams q = HyperParams::zeros(2, 1);
  q.weights << 2.0, 3.0;
  CHECK(cross_cov(0, 1, 2.0, false, q) == doctest::Approx(6.0 * std::exp(-1.0)));
  CHECK(cross_cov(0, 1, 2.0, false, q) == doctest::Approx(2.20728).epsilon(1e-5));
}

TEST_CASE("cross_cov is symmetric and monotone") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const HyperParams p = testing::random_params(rng, 3, 2);
    const double d2 = 5.0 * rng.uniform();
    for (int s = 0; s < 3; ++s) {
      for (int s2 = 0; s2 < 3; ++s2) {
        CHECK(cross_cov(s, s2, d2, false, p) == cross_cov(s2, s, d2, false, p));
        CHECK(cross_cov(s, s2, 0.0, true, p) == cross_cov(s2, s, 0.0, true, p));
      }
    }
  }
  HyperParams one = HyperParams::zeros(1, 1, 1.3);
  one.weights(0, 0) = 0.7;
  double prev = cross_cov(0, 0, 0.0, false, one);
  for (double d2 = 0.25; d2 < 20.0; d2 += 0.25) {
    const double k = cross_cov(0, 0, d2, false, one);
    CHECK(k < prev);
    prev = k;
  }
}

TEST_CASE("cross_cov matrices are positive semidefinite") {
  Rng rng(5);
  GridSpec g;
  g.cell_size = 0.7;
  g.nx = 4;
  g.ny = 3;
  DomainData d;
  d.grid = g;
  for (int trial = 0; trial < 10; ++trial) {
    const int S = 1 + static_cast<int>(rng.below(3));
    const int L = 1 + static_cast<int>(rng.below(3));
    HyperParams p = testing::random_params(rng, S, L);
    if (trial % 2 == 0) p.noise.lambda.setZero();
    d.datasets.resize(static_cast<std::size_t>(S));
    const Eigen::MatrixXd K = testing::dense_prior(d, p);
    CHECK((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
  }
}

TEST_CASE("pack and unpack are inverse") {
  Rng rng(9);
  const HyperParams p = testing::random_params(rng, 3, 2);
  const ParamLayout layout{3, 2};
  const Eigen::VectorXd theta = pack(p);
  REQUIRE(theta.size() == layout.size());
  CHECK(theta[layout.weight(2, 1)] == p.weights(2, 1));
  CHECK(theta[layout.log_beta(1)] == doctest::Approx(std::log(p.kernels[1].beta)));
  CHECK(theta[layout.log_sigma(0)] == doctest::Approx(0.5 * std::log(p.noise.sigma2[0])));
  const HyperParams q = unpack(theta, layout);
  CHECK((q.weights - p.weights).norm() == 0.0);
  for (int l = 0; l < 2; ++l) CHECK(q.kernels[l].beta == doctest::Approx(p.kernels[l].beta).epsilon(1e-14));
  CHECK((q.noise.lambda - p.noise.lambda).norm() <= 1e-14);
  CHECK((q.noise.sigma2 - p.noise.sigma2).norm() <= 1e-14);
  CHECK_THROWS_AS(unpack(Eigen::VectorXd::Zero(3), layout), Error);
}

TEST_CASE("hyperparameter text round trip") {
  Rng rng(21);
  const HyperParams p = testing::random_params(rng, 2, 3);
  const std::string text = format_hyperparams(p);
  CHECK(text.rfind("W[0][0] = ", 0) == 0);
  CHECK(text.find("beta[2] = ") != std::string::npos);
  CHECK(text.find("sigma2[1] = ") != std::string::npos);
  const HyperParams q = parse_hyperparams(text);
  CHECK(q.weights == p.weights);
  for (int l = 0; l < 3; ++l) CHECK(q.kernels[l].beta == p.kernels[l].beta);
  CHECK(q.noise.lambda == p.noise.lambda);
  CHECK(q.noise.sigma2 == p.noise.sigma2);
  CHECK(format_hyperparams(q) == text);
}

TEST_CASE("malformed hyperparameter text") {
  auto kind_of = [](const std::string& text) {
    try {
      parse_hyperparams(text);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::InvalidArgument;
  };
  CHECK(kind_of("W[0][0] = 1\nbeta[0] = 1\nlambda[0] = 0.1\n") == ErrorKind::ParseError);
  CHECK(kind_of("W[0][0] = x\nbeta[0] = 1\nlambda[0] = 0.1\nsigma2[0] = 0.1\n") == ErrorKind::ParseError);
  CHECK(kind_of("W[0] = 1\n") == ErrorKind::ParseError);
  CHECK(kind_of("gamma[0] = 1\n") == ErrorKind::ParseError);
  CHECK_NOTHROW(parse_hyperparams("# comment\nW[0][0] = 1\n\nbeta[0] = 1\nlambda[0] = 0.1\nsigma2[0] = 0.1\n"));
}

TEST_CASE("hyperparameter validation") {
  HyperParams p = HyperParams::zeros(2, 1);
  CHECK_NOTHROW(p.validate());
  p.kernels[0].beta = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = HyperParams::zeros(2, 1);
  p.noise.sigma2[1] = -1.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = HyperParams::zeros(2, 1);
  p.kernels.push_back(LatentKernel{});
  CHECK_THROWS_AS(p.validate(), Error);
}
