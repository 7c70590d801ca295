#include <doctest.h>

#include <cmath>

#include "downscaler/nn/adam.hpp"
#include "downscaler/nn/gradcheck.hpp"
#include "downscaler/tensor.hpp"

using namespace downscaler;

TEST_CASE("adam leaves parameters alone under zero gradients") {
    Tensor p({3}, {1.0f, -2.0f, 0.5f});
    Tensor g({3});
    nn::AdamState state({&p});
    state.update({&p}, {&g}, {});
    CHECK(p.data == std::vector<float>{1.0f, -2.0f, 0.5f});
    CHECK(state.step() == 1);
}

TEST_CASE("adam first step moves by about lr in the gradient direction") {
    Tensor p({1}, {1.0f});
    Tensor g({1}, {1.0f});
    nn::AdamState state({&p});
    nn::AdamConfig cfg;
    cfg.lr = 0.1f;
    state.update({&p}, {&g}, cfg);
    // bias correction makes the first step lr * g / (|g| + eps) ~ lr
    CHECK(p.data[0] == doctest::Approx(0.9f).epsilon(1e-6));
}

TEST_CASE("adam descends a convex quadratic") {
    Tensor w({1}, {3.0f});
    nn::AdamState state({&w});
    nn::AdamConfig cfg;
    cfg.lr = 0.05f;
    auto loss = [&] { return static_cast<double>(w.data[0]) * w.data[0]; };
    const double l0 = loss();
    for (int step = 0; step < 2; ++step) {
        Tensor g({1}, {2.0f * w.data[0]});
        state.update({&w}, {&g}, cfg);
    }
    CHECK(loss() < l0);
    CHECK(state.step() == 2);
}

TEST_CASE("adam aborts on non-finite gradients") {
    Tensor p({2}, {1.0f, 2.0f});
    Tensor g({2}, {0.0f, std::numeric_limits<float>::quiet_NaN()});
    nn::AdamState state({&p});
    CHECK_THROWS_AS(state.update({&p}, {&g}, {}), NumericError);
}

TEST_CASE("adam validates hyperparameters and shapes") {
    Tensor p({2});
    Tensor g({2});
    nn::AdamState state({&p});
    nn::AdamConfig bad;
    bad.lr = 0.0f;
    CHECK_THROWS_AS(state.update({&p}, {&g}, bad), NumericError);
    Tensor wrong({3});
    CHECK_THROWS_AS(state.update({&p}, {const_cast<const Tensor*>(&wrong)}, {}), ShapeError);
}

TEST_CASE("finite_difference_check is quiet for linear maps") {
    std::vector<float> point = {0.3f, -1.2f, 2.0f};
    const std::vector<float> coeff = {2.0f, -0.5f, 1.25f};
    auto f = [&] {
        double acc = 0.0;
        for (std::size_t i = 0; i < point.size(); ++i)
            acc += static_cast<double>(coeff[i]) * point[i];
        return acc;
    };
    CHECK(nn::finite_difference_check(f, point, coeff, 1e-3) < 1e-5);
}

TEST_CASE("finite_difference_check recovers the derivative of w^2 at 3") {
    std::vector<float> point = {3.0f};
    const std::vector<float> analytic = {6.0f};
    auto f = [&] { return static_cast<double>(point[0]) * point[0]; };
    CHECK(nn::finite_difference_check(f, point, analytic, 1e-3) < 1e-6);
}

TEST_CASE("finite_difference_check flags a doubled gradient as 0.5 relative error") {
    std::vector<float> point = {3.0f};
    const std::vector<float> wrong = {12.0f};
    auto f = [&] { return static_cast<double>(point[0]) * point[0]; };
    CHECK(nn::finite_difference_check(f, point, wrong, 1e-3) == doctest::Approx(0.5).epsilon(1e-4));
}
