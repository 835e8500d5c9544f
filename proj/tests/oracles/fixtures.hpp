#pragma once

// Small random data sets for unit tests.

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "dcssl/core_data.hpp"
#include "dcssl/transform.hpp"

namespace fixture {

struct Config {
  int n = 60;
  int p = 2;
  double r = 0.0;
  bool left = true;   // draw a left window
  bool right = true;  // draw a right window
  Eigen::VectorXd beta;
  unsigned seed = 1;
};

// T = exp(-z'beta + eps) with eps from the transformation model; windows
// L ~ U(0.05, 0.6), U ~ U(1, 4).
inline dcssl::SurvivalData make(const Config& s) {
  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd beta = s.beta.size() == s.p ? s.beta : Eigen::VectorXd::LinSpaced(s.p, 0.5, -0.3);
  const dcssl::TransformParam r(s.r);
  dcssl::SurvivalData d;
  d.time.resize(s.n);
  d.l.resize(s.n);
  d.z.resize(s.n, s.p);
  d.code.resize(static_cast<std::size_t>(s.n));
  for (int i = 0; i < s.n; ++i) {
    for (int j = 0; j < s.p; ++j) d.z(i, j) = normal(rng);
    double u = unif(rng);
    while (u <= 0.0) u = unif(rng);
    const double t = std::exp(-d.z.row(i).dot(beta) + dcssl::transform::sample_eps(u, r));
    const double l = s.left ? 0.05 + 0.55 * unif(rng) : 1e-6;
    const double up = s.right ? 1.0 + 3.0 * unif(rng) : 1e300;
    const auto obs = dcssl::derive_observation(t, l, up);
    d.time[i] = obs.x;
    d.code[static_cast<std::size_t>(i)] = obs.delta;
    d.l[i] = l;
  }
  return d;
}

inline Eigen::VectorXd random_vector(int size, unsigned seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(size);
  for (auto& x : v) x = normal(rng);
  return v;
}

}  // namespace fixture
