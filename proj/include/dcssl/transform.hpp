#pragma once

// The transformation class G(x, r) = log(1 + r x) / r (G(x, 0) = x) and its
// gamma-frailty representation. r = 0 is proportional hazards, r = 1
// proportional odds.

namespace dcssl {

/// Class index r >= 0 of the transformation family.
class TransformParam {
 public:
  TransformParam() = default;
  explicit TransformParam(double r);
  double r() const noexcept { return r_; }
  bool is_ph() const noexcept { return r_ == 0.0; }

 private:
  double r_ = 0.0;
};

namespace transform {

/// r below this uses the second-order series in r.
inline constexpr double kSeriesThreshold = 1e-8;

double g(double x, TransformParam r);
double g_prime(double x, TransformParam r);
double g_inv(double y, TransformParam r);

/// Error survival function exp(-G(exp(x))).
double eps_survival(double x, TransformParam r);

/// Inverse-transform draw of the model error from a uniform u in (0, 1).
double sample_eps(double u, TransformParam r);

/// Moments of the gamma(1/r, 1/r) frailty against exp(-mu v):
/// m0 = E[e^{-mu v}], m1 = E[mu e^{-mu v}], m2 = E[mu^2 e^{-mu v}].
struct FrailtyMoments {
  double m0;
  double m1;
  double m2;
};

FrailtyMoments frailty_moments(double v, TransformParam r);

/// 1 - m0(v), evaluated without cancellation for small v.
double one_minus_m0(double v, TransformParam r);

/// E[mu | N(v) > 0] = (1 - m1(v)) / (1 - m0(v)); tends to 1 + r as v -> 0.
double left_censored_mean(double v, TransformParam r);

}  // namespace transform
}  // namespace dcssl
