#include "sagp/kernel.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <regex>
#include <sstream>

#include "sagp/error.hpp"

namespace sagp {

void HyperParams::validate() const {
  const int S = num_datasets();
  const int L = num_latents();
  if (L < 1 || S < 1) {
    throw Error(ErrorKind::InvalidArgument, "hyperparameters need S >= 1 and L >= 1");
  }
  if (static_cast<int>(kernels.size()) != L) {
    throw Error(ErrorKind::InvalidArgument, "kernel count differs from the columns of W");
  }
  if (noise.lambda.size() != S || noise.sigma2.size() != S) {
    throw Error(ErrorKind::InvalidArgument, "noise vectors must have one entry per dataset");
  }
  if (!weights.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "W has non-finite entries");
  }
  for (const auto& k : kernels) {
    if (!(k.beta > 0.0) || !std::isfinite(k.beta)) {
      throw Error(ErrorKind::InvalidArgument, "beta must be positive and finite");
    }
  }
  for (int s = 0; s < S; ++s) {
    if (!(noise.lambda[s] >= 0.0) || !(noise.sigma2[s] >= 0.0) || !std::isfinite(noise.lambda[s]) ||
        !std::isfinite(noise.sigma2[s])) {
      throw Error(ErrorKind::InvalidArgument, "lambda and sigma2 must be nonnegative and finite");
    }
  }
}

HyperParams HyperParams::zeros(int S, int L, double beta) {
  HyperParams p;
  p.weights = Eigen::MatrixXd::Zero(S, L);
  p.kernels.assign(L, LatentKernel{beta});
  p.noise.lambda = Eigen::VectorXd::Zero(S);
  p.noise.sigma2 = Eigen::VectorXd::Zero(S);
  return p;
}

double gamma(const LatentKernel& kernel, double d2) {
  return LatentKernel::alpha2 * std::exp(-d2 / (2.0 * kernel.beta * kernel.beta));
}

double cross_cov(int s, int s2, double d2, bool same_point, const HyperParams& params) {
  double k = 0.0;
  for (int l = 0; l < params.num_latents(); ++l) {
    k += params.weights(s, l) * params.weights(s2, l) * gamma(params.kernels[l], d2);
  }
  if (s == s2 && same_point) k += params.noise.lambda[s] * params.noise.lambda[s];
  return k;
}

Eigen::VectorXd pack(const HyperParams& params) {
  const ParamLayout layout{params.num_datasets(), params.num_latents()};
  Eigen::VectorXd theta(layout.size());
  for (int s = 0; s < layout.S; ++s) {
    for (int l = 0; l < layout.L; ++l) theta[layout.weight(s, l)] = params.weights(s, l);
    theta[layout.log_lambda(s)] = std::log(params.noise.lambda[s]);
    theta[layout.log_sigma(s)] = 0.5 * std::log(params.noise.sigma2[s]);
  }
  for (int l = 0; l < layout.L; ++l) theta[layout.log_beta(l)] = std::log(params.kernels[l].beta);
  return theta;
}

HyperParams unpack(const Eigen::VectorXd& theta, const ParamLayout& layout) {
  if (theta.size() != layout.size()) {
    throw Error(ErrorKind::InvalidArgument, "parameter vector has the wrong length");
  }
  HyperParams p = HyperParams::zeros(layout.S, layout.L);
  for (int s = 0; s < layout.S; ++s) {
    for (int l = 0; l < layout.L; ++l) p.weights(s, l) = theta[layout.weight(s, l)];
    p.noise.lambda[s] = std::exp(theta[layout.log_lambda(s)]);
    p.noise.sigma2[s] = std::exp(2.0 * theta[layout.log_sigma(s)]);
  }
  for (int l = 0; l < layout.L; ++l) p.kernels[l].beta = std::exp(theta[layout.log_beta(l)]);
  return p;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string format_hyperparams(const HyperParams& params) {
  std::ostringstream out;
  const int S = params.num_datasets();
  const int L = params.num_latents();
  for (int s = 0; s < S; ++s) {
    for (int l = 0; l < L; ++l) {
      out << "W[" << s << "][" << l << "] = " << format_double(params.weights(s, l)) << '\n';
    }
  }
  for (int l = 0; l < L; ++l) out << "beta[" << l << "] = " << format_double(params.kernels[l].beta) << '\n';
  for (int s = 0; s < S; ++s) out << "lambda[" << s << "] = " << format_double(params.noise.lambda[s]) << '\n';
  for (int s = 0; s < S; ++s) out << "sigma2[" << s << "] = " << format_double(params.noise.sigma2[s]) << '\n';
  return out.str();
}

HyperParams parse_hyperparams(const std::string& text) {
  static const std::regex line_re(
      R"(^\s*(W|beta|lambda|sigma2)\[(\d+)\](?:\[(\d+)\])?\s*=\s*(\S+)\s*$)");
  std::map<std::pair<int, int>, double> w;
  std::map<int, double> beta, lambda, sigma2;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::smatch m;
    if (!std::regex_match(line, m, line_re)) {
      throw Error(ErrorKind::ParseError, "hyperparameter line " + std::to_string(line_no) + ": '" + line + "'");
    }
    const std::string key = m[1];
    const int i = std::stoi(m[2]);
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(m[4].str(), &used);
      if (used != static_cast<std::size_t>(m[4].length())) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseError, "hyperparameter line " + std::to_string(line_no) + ": bad number");
    }
    if (key == "W") {
      if (!m[3].matched) throw Error(ErrorKind::ParseError, "W needs two indices at line " + std::to_string(line_no));
      w[{i, std::stoi(m[3])}] = value;
    } else if (m[3].matched) {
      throw Error(ErrorKind::ParseError, key + " takes one index at line " + std::to_string(line_no));
    } else if (key == "beta") {
      beta[i] = value;
    } else if (key == "lambda") {
      lambda[i] = value;
    } else {
      sigma2[i] = value;
    }
  }
  const int S = static_cast<int>(lambda.size());
  const int L = static_cast<int>(beta.size());
  if (S == 0 || L == 0 || static_cast<int>(sigma2.size()) != S ||
      static_cast<int>(w.size()) != S * L) {
    throw Error(ErrorKind::ParseError, "hyperparameter file is incomplete");
  }
  HyperParams p = HyperParams::zeros(S, L);
  for (int s = 0; s < S; ++s) {
    for (int l = 0; l < L; ++l) {
      auto it = w.find({s, l});
      if (it == w.end()) throw Error(ErrorKind::ParseError, "missing W entry");
      p.weights(s, l) = it->second;
    }
    if (!lambda.count(s) || !sigma2.count(s)) throw Error(ErrorKind::ParseError, "missing noise entry");
    p.noise.lambda[s] = lambda[s];
    p.noise.sigma2[s] = sigma2[s];
  }
  for (int l = 0; l < L; ++l) {
    if (!beta.count(l)) throw Error(ErrorKind::ParseError, "missing beta entry");
    p.kernels[l].beta = beta[l];
  }
  p.validate();
  return p;
}

}  // namespace sagp
