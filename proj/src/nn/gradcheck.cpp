#include "downscaler/nn/gradcheck.hpp"

#include <cmath>

#include "downscaler/error.hpp"

namespace downscaler::nn {

double finite_difference_check(const std::function<double()>& f, std::span<float> point,
                               std::span<const float> analytic_grad, double eps) {
    if (!(eps > 0.0)) throw NumericError("finite_difference_check: eps must be positive");
    if (point.size() != analytic_grad.size())
        throw ShapeError("finite_difference_check: gradient length " +
                         std::to_string(analytic_grad.size()) + " != point length " +
                         std::to_string(point.size()));

    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const float saved = point[i];
        point[i] = static_cast<float>(saved + eps);
        const double up = f();
        const double x_plus = point[i];
        point[i] = static_cast<float>(saved - eps);
        const double down = f();
        const double x_minus = point[i];
        point[i] = saved;
        // Divide by the realized float32 step, not the nominal one, so the
        // estimate is not polluted by rounding of the perturbed coordinate.
        const double fd = (up - down) / (x_plus - x_minus);
        const double an = static_cast<double>(analytic_grad[i]);
        const double denom = std::fmax(std::fmax(std::fabs(an), std::fabs(fd)), 1e-8);
        worst = std::fmax(worst, std::fabs(an - fd) / denom);
    }
    return worst;
}

} // namespace downscaler::nn
