#ifndef DOWNSCALER_NN_GRADCHECK_HPP
#define DOWNSCALER_NN_GRADCHECK_HPP

#include <functional>
#include <span>

namespace downscaler::nn {

// Central-difference comparison of an analytic gradient.
//
// `f` evaluates the scalar objective at the current point; the coordinates in
// `point` are perturbed in place by +/- eps and restored. Returns
//   max_i |analytic_i - fd_i| / max(|analytic_i|, |fd_i|, 1e-8).
double finite_difference_check(const std::function<double()>& f, std::span<float> point,
                               std::span<const float> analytic_grad, double eps);

} // namespace downscaler::nn

#endif
