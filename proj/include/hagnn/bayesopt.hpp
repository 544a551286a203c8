#pragma once

// Gaussian-process hyperparameter search: RBF surrogate with unit signal
// variance, expected-improvement acquisition maximized over seeded candidate
// draws. Maximizes the objective and is fully deterministic given the seed.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hagnn/errors.hpp"
#include "hagnn/rng.hpp"

namespace hagnn {

struct BoxDim {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  bool log_scale = false;  // sample and model the exponent instead
};

struct BayesOptConfig {
  std::size_t initial_points = 5;
  std::size_t candidates_per_round = 1000;
  double lengthscale = 0.2;  // in normalized [0,1] coordinates
  double noise = 1e-4;
};

struct BayesOptResult {
  std::vector<double> best_x;
  double best_y = 0.0;
  std::vector<std::vector<double>> evaluated_x;
  std::vector<double> evaluated_y;
};

namespace detail {

inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
}

// Normalized coordinates in [0,1]^d; log dims interpolate exponents.
inline std::vector<double> denormalize(const std::vector<double>& u,
                                       const std::vector<BoxDim>& dims) {
  std::vector<double> x(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) {
    const BoxDim& d = dims[j];
    if (d.log_scale) {
      double le = std::log(d.lo), he = std::log(d.hi);
      x[j] = std::exp(le + u[j] * (he - le));
    } else {
      x[j] = d.lo + u[j] * (d.hi - d.lo);
    }
  }
  return x;
}

inline double rbf(const std::vector<double>& a, const std::vector<double>& b,
                  double lengthscale) {
  double d2 = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j)
    d2 += (a[j] - b[j]) * (a[j] - b[j]);
  return std::exp(-d2 / (2.0 * lengthscale * lengthscale));
}

}  // namespace detail

// Returns the best observed point after `budget` objective evaluations:
// `initial_points` seeded random draws, then one EI-argmax evaluation per
// round over freshly drawn candidates.
inline BayesOptResult bayes_opt(
    const std::vector<BoxDim>& dims,
    const std::function<double(const std::vector<double>&)>& objective,
    std::size_t budget, std::uint64_t seed,
    const BayesOptConfig& cfg = BayesOptConfig{}) {
  if (dims.empty()) throw ConfigError("bayes_opt: empty search space");
  for (const BoxDim& d : dims) {
    if (!(d.lo < d.hi))
      throw ConfigError("bayes_opt: dimension '" + d.name +
                        "' has an empty range");
    if (d.log_scale && !(d.lo > 0.0))
      throw ConfigError("bayes_opt: log dimension '" + d.name +
                        "' needs positive bounds");
  }
  if (budget < cfg.initial_points)
    throw ConfigError("bayes_opt: budget " + std::to_string(budget) +
                      " is below the " + std::to_string(cfg.initial_points) +
                      " initial points");

  RngStream rng(derive_seed(seed, "bayes_opt", 0));
  BayesOptResult result;
  std::vector<std::vector<double>> units;  // normalized evaluated points

  auto evaluate = [&](const std::vector<double>& u) {
    std::vector<double> x = detail::denormalize(u, dims);
    double y;
    try {
      y = objective(x);
    } catch (const std::exception& e) {
      std::string at;
      for (std::size_t j = 0; j < x.size(); ++j)
        at += (j ? ", " : "") + dims[j].name + "=" + std::to_string(x[j]);
      throw OracleError("bayes_opt: objective failed at {" + at +
                        "}: " + e.what());
    }
    units.push_back(u);
    result.evaluated_x.push_back(x);
    result.evaluated_y.push_back(y);
    if (result.evaluated_y.size() == 1 || y > result.best_y) {
      result.best_y = y;
      result.best_x = x;
    }
  };

  for (std::size_t i = 0; i < cfg.initial_points && i < budget; ++i) {
    std::vector<double> u(dims.size());
    for (double& v : u) v = rng.uniform();
    evaluate(u);
  }

  while (result.evaluated_y.size() < budget) {
    std::size_t n = units.size();
    Eigen::MatrixXd K(n, n);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y(static_cast<Eigen::Index>(i)) = result.evaluated_y[i];
      for (std::size_t j = 0; j < n; ++j)
        K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            detail::rbf(units[i], units[j], cfg.lengthscale) +
            (i == j ? cfg.noise : 0.0);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success)
      throw NumericError("bayes_opt: surrogate covariance not positive "
                         "definite");
    Eigen::VectorXd alpha = llt.solve(y);

    double best_seen = result.best_y;
    double best_ei = -1.0;
    std::vector<double> best_u;
    for (std::size_t c = 0; c < cfg.candidates_per_round; ++c) {
      std::vector<double> u(dims.size());
      for (double& v : u) v = rng.uniform();
      Eigen::VectorXd kstar(n);
      for (std::size_t i = 0; i < n; ++i)
        kstar(static_cast<Eigen::Index>(i)) =
            detail::rbf(u, units[i], cfg.lengthscale);
      double mu = kstar.dot(alpha);
      double var = 1.0 + cfg.noise - kstar.dot(llt.solve(kstar));
      double sigma = std::sqrt(std::max(var, 1e-12));
      double z = (mu - best_seen) / sigma;
      double ei = (mu - best_seen) * detail::normal_cdf(z) +
                  sigma * detail::normal_pdf(z);
      if (ei > best_ei) {
        best_ei = ei;
        best_u = u;
      }
    }
    evaluate(best_u);
  }
  return result;
}

}  // namespace hagnn
