#include <cmath>

#include "doctest.h"
#include "snsmix/lyapunov.hpp"
#include "test_helpers.hpp"

using namespace snsmix;

namespace {
const Mat2 kDiag1m1 = (Mat2() << 1, 0, 0, -1).finished();
}

TEST_CASE("synthetic constant gradient: lambda estimators hit the closed form") {
    // diag(1,-1) cocycle: top exponent exactly 1
    CHECK(lambda_jacobian_synthetic(kDiag1m1, {0, 0}, 10.0, 1e-3) ==
          doctest::Approx(1.0).epsilon(1e-4));
    SUBCASE("projective from the stable fixed direction e1") {
        CHECK(lambda_projective_synthetic(kDiag1m1, {1, 0}, 10.0, 1e-3) ==
              doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("projective from the unstable direction e2 still aligns") {
        // v0 = e2 is an unstable equilibrium; a tilt eps aligns with e1 and
        // the average tends to 1 like log|tau_T|/T for tau = (eps e^T, e^-T)
        const double eps = 1e-4, T = 100.0;
        const double lam = lambda_projective_synthetic(kDiag1m1, Vec2{eps, 1.0}, T, 1e-3);
        const double exact =
            0.5 * std::log(eps * eps * std::exp(2 * T) + std::exp(-2 * T)) / T;
        CHECK(lam == doctest::Approx(exact).epsilon(1e-3));
        CHECK(lam > 0.85);
    }
    SUBCASE("zero field gives lambda = 0") {
        CHECK(lambda_jacobian_synthetic(Mat2::Zero(), {0, 0}, 5.0, 1e-3) ==
              doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("lambda estimate invariant under renormalization threshold") {
    LyapunovConfig cfg;
    cfg.solver.grid = GridSpec{32, 2.0 / 3.0};
    cfg.solver.dt = 5e-3;
    cfg.burn_in = 2.0;
    cfg.horizon = 8.0;
    cfg.ensemble = 4;
    cfg.seed = 3;
    cfg.renorm_threshold = 1e6;
    const auto a = estimate_lambda_jacobian(cfg, 2);
    cfg.renorm_threshold = 1e3;
    const auto b = estimate_lambda_jacobian(cfg, 2);
    for (std::size_t i = 0; i < a.per_trajectory.size(); ++i)
        CHECK(a.per_trajectory[i] == doctest::Approx(b.per_trajectory[i]).epsilon(1e-8));
}

TEST_CASE("two-point metric") {
    const GridSpec grid{32, 2.0 / 3.0};
    TwoPointTangent v{SpectralField(grid), {1, 0}, {1, 0}};
    CHECK(twopoint_metric(v, {0, 0}, {1, 0}) == doctest::Approx(2.0));

    TwoPointTangent w{SpectralField(grid), {1, 0}, {-1, 0}};
    CHECK(twopoint_metric(w, {0, 0}, {0.1, 0}) == doctest::Approx(20.0));
    // halving |x-y| doubles the metric for antisymmetric v
    CHECK(twopoint_metric(w, {0, 0}, {0.05, 0}) == doctest::Approx(40.0));

    CHECK_THROWS_AS(twopoint_metric(v, {0.3, 0.2}, {0.3, 0.2}), DiagonalError);
}

TEST_CASE("chord distance") {
    const GridSpec grid{32, 2.0 / 3.0};
    const double sigma = 0.1, alpha = 1.0;
    TwoPointZ z1{SpectralField(grid), {0, 0}, {2.0, 0}};

    SUBCASE("coincident states have zero distance") {
        CHECK(d_chord(z1, z1, sigma, alpha) == doctest::Approx(0.0));
    }
    SUBCASE("pure y-translation matches the 1-D quadrature oracle") {
        const double delta = 0.1;
        TwoPointZ z2 = z1;
        z2.y = {2.0 + delta, 0.0};
        const double got = d_chord(z1, z2, sigma, alpha);
        // oracle: delta * int_0^1 (1 + 1/|x - y(s)|) ds with |x-y(s)| = 2 + s delta
        const int nfine = 200000;
        double oracle = 0.0;
        for (int i = 0; i < nfine; ++i) {
            const double s = (i + 0.5) / nfine;
            const double sep = 2.0 + s * delta;
            oracle += delta * (1.0 + 1.0 / sep) / nfine;
        }
        CHECK(got == doctest::Approx(oracle).epsilon(0.01));
    }
    SUBCASE("symmetry") {
        TwoPointZ z2{testutil::random_field(grid, 4, 9, 0.1), {0.4, -0.2}, {1.0, 1.3}};
        CHECK(d_chord(z1, z2, sigma, alpha) ==
              doctest::Approx(d_chord(z2, z1, sigma, alpha)).epsilon(1e-12));
    }
    SUBCASE("chord through the diagonal raises DiagonalError") {
        TwoPointZ a{SpectralField(grid), {0, 0}, {0.5, 0.0}};
        TwoPointZ b{SpectralField(grid), {0, 0}, {-0.5, 0.0}};
        CHECK_THROWS_AS(d_chord(a, b, sigma, alpha), DiagonalError);
    }
    SUBCASE("d_beta truncation and scaling") {
        TwoPointZ z2 = z1;
        z2.y = {2.3, 0.0};
        const double d = d_chord(z1, z2, sigma, alpha);
        CHECK(d_beta(z1, z2, 1e-6, sigma, alpha) == 1.0);
        const double beta = 10.0 * d;
        CHECK(d_beta(z1, z2, beta, sigma, alpha) == doctest::Approx(d / beta));
        CHECK(d_beta(z1, z2, beta, sigma, alpha) <= 1.0);
    }
}

TEST_CASE("drift ratios tend to 1 as p -> 0 on a real ensemble") {
    DriftConfig cfg;
    cfg.solver.grid = GridSpec{32, 2.0 / 3.0};
    cfg.solver.dt = 1e-2;
    cfg.ensemble = 8;
    cfg.n_max = 2;
    cfg.spin_up = 3.0;
    cfg.bootstrap = 50;
    cfg.p_grid = {1e-4, 1e-3};
    cfg.seed = 11;
    const auto rep = drift_check(cfg, 2);
    for (std::size_t in = 0; in < rep.n_grid.size(); ++in) {
        CHECK(rep.ratio[0][in] == doctest::Approx(1.0).epsilon(0.01));
        // continuity: smaller p sits closer to 1
        CHECK(std::abs(rep.ratio[0][in] - 1.0) <= std::abs(rep.ratio[1][in] - 1.0) + 1e-9);
        CHECK(rep.ratio[0][in] > 0.0);
        CHECK(rep.ci_lo[0][in] <= rep.ratio[0][in]);
        CHECK(rep.ci_hi[0][in] >= rep.ratio[0][in]);
    }
}

TEST_CASE("correlation decay series starts at the exact product") {
    CorrelationConfig cfg;
    cfg.solver.grid = GridSpec{32, 2.0 / 3.0};
    cfg.solver.dt = 1e-2;
    cfg.ensemble = 4;
    cfg.T = 1.0;
    cfg.sample_dt = 0.5;
    cfg.spin_up = 1.0;
    cfg.k = {1, 0};
    cfg.x0 = {0.3, 0.0};
    cfg.y0 = {1.3, 0.7};
    const auto series = correlation_decay(cfg, 2);
    const double expect = std::sin(0.3) * std::sin(1.3);
    CHECK(series.mean.front() == doctest::Approx(expect).epsilon(1e-12));
    CHECK(series.stderr_.front() == doctest::Approx(0.0));
    CHECK(series.t.front() == 0.0);
}

TEST_CASE("estimate helper") {
    const auto e = make_estimate({1.0, 2.0, 3.0, 4.0});
    CHECK(e.value == doctest::Approx(2.5));
    CHECK(e.n_samples == 4);
    CHECK(e.ci_hi == doctest::Approx(e.value + 1.96 * e.stderr_));
    CHECK(e.ci_lo == doctest::Approx(e.value - 1.96 * e.stderr_));
}
