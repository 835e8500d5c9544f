#include "dcssl/transform.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dcssl/errors.hpp"

namespace dcssl {

TransformParam::TransformParam(double r) : r_(r) {
  if (!(r >= 0.0) || !std::isfinite(r)) {
    throw DomainError("transform parameter r must be finite and >= 0, got " +
                      std::to_string(r));
  }
}

namespace transform {
namespace {

// The series is only used while r*x stays small; beyond that log1p is exact
// enough even for tiny r.
bool use_series(double r, double x) {
  return r > 0.0 && r < kSeriesThreshold && r * x < 1e-4;
}

}  // namespace

double g(double x, TransformParam param) {
  if (!(x >= 0.0)) throw DomainError("g: x must be >= 0");
  const double r = param.r();
  if (r == 0.0) return x;
  if (use_series(r, x)) return x - 0.5 * r * x * x + r * r * x * x * x / 3.0;
  return std::log1p(r * x) / r;
}

double g_prime(double x, TransformParam param) {
  if (!(x >= 0.0)) throw DomainError("g_prime: x must be >= 0");
  return 1.0 / (1.0 + param.r() * x);
}

double g_inv(double y, TransformParam param) {
  if (!(y >= 0.0)) throw DomainError("g_inv: y must be >= 0");
  const double r = param.r();
  if (r == 0.0) return y;
  if (use_series(r, y)) return y + 0.5 * r * y * y + r * r * y * y * y / 6.0;
  return std::expm1(r * y) / r;
}

double eps_survival(double x, TransformParam r) {
  if (std::isnan(x)) return x;
  return std::exp(-g(std::exp(x), r));
}

double sample_eps(double u, TransformParam r) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("sample_eps: u must lie in (0, 1)");
  return std::log(g_inv(-std::log(u), r));
}

FrailtyMoments frailty_moments(double v, TransformParam param) {
  if (!(v >= 0.0)) throw DomainError("frailty_moments: v must be >= 0");
  const double r = param.r();
  const double gv = g(v, param);
  // (1 + r v)^(-1/r - k) = exp(-(1 + k r) G(v, r))
  return {std::exp(-gv), std::exp(-(1.0 + r) * gv),
          (1.0 + r) * std::exp(-(1.0 + 2.0 * r) * gv)};
}

double one_minus_m0(double v, TransformParam r) { return -std::expm1(-g(v, r)); }

double left_censored_mean(double v, TransformParam param) {
  const double r = param.r();
  const double gv = g(v, param);
  if (gv == 0.0) return 1.0 + r;
  return std::expm1(-(1.0 + r) * gv) / std::expm1(-gv);
}

}  // namespace transform
}  // namespace dcssl
