#pragma once

#include "whittle/types.hpp"

#include <optional>

namespace whittle {

/// Sinc quadrature for the Balakrishnan integral of A^{-s}:
///   A^{-s} ~ sum_j w_j (A + z_j)^{-1},  z_j = exp(j zeta),  -m_minus <= j <= m_plus.
struct SincRule {
  double s = 0.5;
  double zeta = 0.0;
  Index m_minus = 0;
  Index m_plus = 0;
  Vector nodes;    // z_j, increasing in j
  Vector weights;  // w_j

  Index n_sigma() const { return m_minus + m_plus + 1; }
  Index j_of(Index k) const { return k - m_minus; }
};

/// zeta = 1 / log(1/h).
double sinc_step(double h);

/// Rule for the fractional inverse A^{-s}, 0 < s < 1.
/// M+ = ceil(pi^2 / (4 s zeta^2)), M- = ceil(pi^2 / (4 (1-s) zeta^2)).
/// `zeta_override` replaces the default step.
SincRule inverse_rule(double s, double h, std::optional<double> zeta_override = std::nullopt);

/// Rule for the SPDE sampler, which applies A^{-alpha/2} with 0 < alpha < 2.
/// Same counts as inverse_rule(alpha / 2, h).
SincRule spde_rule(double alpha, double h, std::optional<double> zeta_override = std::nullopt);

/// Shifts and weights for the (M + sigma K) form: sigma_j = 1/z_j, wtilde_j = w_j/z_j.
struct ShiftedWeights {
  Vector sigma;
  Vector weight;
};

ShiftedWeights rescaled_weights(const SincRule& rule);

}  // namespace whittle
