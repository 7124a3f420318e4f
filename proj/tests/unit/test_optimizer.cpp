#include <gtest/gtest.h>

#include <cmath>

#include "quorum/optimizer.hpp"

using namespace quorum;

TEST(Bfgs, Rosenbrock) {
    Objective f = [](const std::vector<double>& x, std::vector<double>* g) {
        double a = 1 - x[0], b = x[1] - x[0] * x[0];
        if (g) *g = {-2 * a - 400 * x[0] * b, 200 * b};
        return a * a + 100 * b * b;
    };
    auto r = minimize_bfgs(f, {-1.2, 1.0});
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.x[0], 1.0, 1e-5);
    EXPECT_NEAR(r.x[1], 1.0, 1e-5);
    for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1]);
}

TEST(Bfgs, QuadraticIsExact) {
    Objective f = [](const std::vector<double>& x, std::vector<double>* g) {
        double u = x[0] - 3, v = x[1] + 2;
        if (g) *g = {2 * u + v, u + 4 * v};
        return u * u + u * v + 2 * v * v;
    };
    auto r = minimize_bfgs(f, {0.0, 0.0});
    EXPECT_NEAR(r.x[0], 3.0, 1e-7);
    EXPECT_NEAR(r.x[1], -2.0, 1e-7);
    EXPECT_LT(r.iterations, 20);
}

TEST(Bfgs, FlagsDivergence) {
    Objective f = [](const std::vector<double>& x, std::vector<double>* g) {
        if (g) *g = {std::nan("")};
        return x[0] > 0 ? std::nan("") : x[0];
    };
    auto r = minimize_bfgs(f, {1.0});
    EXPECT_TRUE(r.diverged);
}
