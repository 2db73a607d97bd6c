#include "whittle/sinc_quadrature.hpp"

#include <cmath>
#include <numbers>

namespace whittle {

namespace {

Index count(double denom_factor, double zeta) {
  return static_cast<Index>(std::ceil(std::numbers::pi * std::numbers::pi / (denom_factor * zeta * zeta)));
}

SincRule build(double s, double zeta) {
  SincRule rule;
  rule.s = s;
  rule.zeta = zeta;
  rule.m_plus = count(4.0 * s, zeta);
  rule.m_minus = count(4.0 * (1.0 - s), zeta);
  const Index n = rule.n_sigma();
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double scale = zeta * std::sin(s * std::numbers::pi) / std::numbers::pi;
  for (Index k = 0; k < n; ++k) {
    const double jz = static_cast<double>(rule.j_of(k)) * zeta;
    rule.nodes(k) = std::exp(jz);
    rule.weights(k) = scale * std::exp((1.0 - s) * jz);
  }
  return rule;
}

double checked_step(double h, std::optional<double> zeta_override) {
  if (zeta_override) {
    if (!(*zeta_override > 0.0) || !std::isfinite(*zeta_override))
      throw ValidationError("sinc step must be positive");
    return *zeta_override;
  }
  return sinc_step(h);
}

}  // namespace

double sinc_step(double h) {
  if (!(h > 0.0 && h < 1.0)) throw ValidationError("mesh parameter h must lie in (0, 1)");
  return 1.0 / std::log(1.0 / h);
}

SincRule inverse_rule(double s, double h, std::optional<double> zeta_override) {
  if (!(s > 0.0 && s < 1.0)) throw ValidationError("fractional exponent s must lie in (0, 1)");
  return build(s, checked_step(h, zeta_override));
}

SincRule spde_rule(double alpha, double h, std::optional<double> zeta_override) {
  if (!(alpha > 0.0 && alpha < 2.0)) throw ValidationError("SPDE sampler needs 0 < alpha < 2");
  return build(0.5 * alpha, checked_step(h, zeta_override));
}

ShiftedWeights rescaled_weights(const SincRule& rule) {
  return {rule.nodes.cwiseInverse(), rule.weights.cwiseQuotient(rule.nodes)};
}

}  // namespace whittle
