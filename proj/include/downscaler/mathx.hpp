#ifndef DOWNSCALER_MATHX_HPP
#define DOWNSCALER_MATHX_HPP

#include <cmath>

namespace downscaler {

// ln Gamma(x) via the Lanczos approximation (g = 7, 9 coefficients),
// double precision, |rel err| ~ 1e-13 over the positive axis.
double log_gamma(double x);

// Digamma psi(x) = d/dx ln Gamma(x) for x > 0. Upward recurrence to x >= 6,
// then the asymptotic series.
double digamma(double x);

// Overflow-safe softplus: ln(1 + e^t) = max(t, 0) + ln(1 + e^-|t|).
inline double softplus(double t) { return std::fmax(t, 0.0) + std::log1p(std::exp(-std::fabs(t))); }
inline float softplus_f(float t) {
    return std::fmax(t, 0.0f) + std::log1p(std::exp(-std::fabs(t)));
}

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }
inline float sigmoid_f(float t) { return 1.0f / (1.0f + std::exp(-t)); }

} // namespace downscaler

#endif
