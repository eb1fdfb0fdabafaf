#include <cmath>

#include "doctest.h"
#include "snsmix/scalar_mixing.hpp"
#include "test_helpers.hpp"

using namespace snsmix;

namespace {
const GridSpec kGrid{32, 2.0 / 3.0};
}

TEST_CASE("zero velocity leaves the scalar unchanged") {
    SpectralField omega(kGrid);
    ScalarState phi{testutil::random_field(kGrid, 5, 2, 0.7), 0.0};
    const SpectralField phi0 = phi.phi;
    for (int i = 0; i < 100; ++i) advect_scalar(phi, omega, omega, 1e-2);
    SpectralField diff = phi.phi;
    diff -= phi0;
    CHECK(diff.max_abs_coeff() < 1e-14);
}

TEST_CASE("shear-aligned scalar is a steady state: u = (sin x2, 0), phi = sin(x2)") {
    SpectralField omega = make_basis_mode({0, -1}, kGrid);
    omega *= -1.0;  // curl of (sin x2, 0)
    ScalarState phi{make_basis_mode({0, 1}, kGrid), 0.0};
    const SpectralField phi0 = phi.phi;
    for (int i = 0; i < 200; ++i) advect_scalar(phi, omega, omega, 5e-3);
    SpectralField diff = phi.phi;
    diff -= phi0;
    CHECK(diff.max_abs_coeff() < 1e-13);
}

TEST_CASE("frozen-field transport self-converges at second order") {
    const SpectralField omega = testutil::random_field(kGrid, 5, 21, 0.5);
    auto run = [&](double dt) {
        ScalarState phi{make_basis_mode({1, 0}, kGrid), 0.0};
        const int steps = static_cast<int>(std::lround(1.0 / dt));
        for (int i = 0; i < steps; ++i) advect_scalar(phi, omega, omega, dt);
        return phi.phi;
    };
    SpectralField ref = run(1.0 / 4096.0);
    SpectralField e1 = run(1.0 / 64.0);
    SpectralField e2 = run(1.0 / 128.0);
    e1 -= ref;
    e2 -= ref;
    const double r = sobolev_norm(e1, 0.0) / sobolev_norm(e2, 0.0);
    CHECK(r > 3.0);  // order ~2: expect ~4
    CHECK(r < 5.5);
}

TEST_CASE("Ito isometry of the forced scalar: E||phi_T||^2 = ||g||^2 T") {
    // u = 0, g = e_{(1,1)}: phi_T = g B_T exactly, so ||phi_T||^2 = ||g||^2 B_T^2
    const SpectralField g = make_basis_mode({1, 1}, kGrid);
    const SpectralField omega(kGrid);
    const double dt = 0.05;
    const int steps = 20;  // T = 1
    const int samples = 20000;
    double acc = 0.0, acc2 = 0.0;
    for (int s = 0; s < samples; ++s) {
        ScalarState phi{SpectralField(kGrid), 0.0};
        NoiseStream noise{31337, static_cast<std::uint64_t>(s), 0};
        for (int i = 0; i < steps; ++i) {
            advect_scalar_forced(phi, omega, omega, dt, g, noise);
            noise.advance();
        }
        const double n = sobolev_norm(phi.phi, 0.0);
        acc += n * n;
        acc2 += n * n * n * n;
    }
    const double mean = acc / samples;
    const double stderr_ = std::sqrt((acc2 / samples - mean * mean) / samples);
    const double expect = basis_mode_l2sq() * 1.0;  // ||g||^2 T
    CHECK(std::abs(mean - expect) < 3.0 * stderr_);
}

TEST_CASE("pathwise linearity in g for u = 0") {
    const SpectralField g = make_basis_mode({2, 1}, kGrid);
    SpectralField g2 = g;
    g2 *= 2.0;
    const SpectralField omega(kGrid);
    auto run = [&](const SpectralField& src) {
        ScalarState phi{SpectralField(kGrid), 0.0};
        NoiseStream noise{5, 9, 0};
        for (int i = 0; i < 50; ++i) {
            advect_scalar_forced(phi, omega, omega, 0.02, src, noise);
            noise.advance();
        }
        return phi.phi;
    };
    SpectralField a = run(g);
    SpectralField b = run(g2);
    a *= 2.0;
    b -= a;
    CHECK(b.max_abs_coeff() < 1e-14);
}

TEST_CASE("mixing rate fit on synthetic exponentials") {
    std::vector<double> t, n;
    for (int i = 0; i <= 100; ++i) {
        t.push_back(0.1 * i);
        n.push_back(2.5 * std::exp(-0.3 * 0.1 * i));
    }
    const auto fit = mixing_rate_fit(t, n, 0.0, 10.0);
    CHECK(fit.rate == doctest::Approx(-0.3).epsilon(1e-10));
    CHECK(fit.logK == doctest::Approx(std::log(2.5)).epsilon(1e-10));
    CHECK(fit.r_squared == doctest::Approx(1.0));

    std::vector<double> flat(t.size(), 7.0);
    const auto fit2 = mixing_rate_fit(t, flat, 0.0, 10.0);
    CHECK(fit2.rate == doctest::Approx(0.0));

    std::vector<double> bad = n;
    bad[50] = -1.0;
    CHECK_THROWS_AS(mixing_rate_fit(t, bad, 0.0, 10.0), FitError);
    CHECK_THROWS_AS(mixing_rate_fit(t, n, 0.0, 0.5), FitError);  // < 10 samples
}

TEST_CASE("norm monotonicity and interpolation identity") {
    for (std::uint64_t s : {4ull, 5ull, 6ull}) {
        auto f = testutil::random_field(kGrid, 8, s);
        CHECK(sobolev_norm(f, -1.0) <= sobolev_norm(f, 0.0) * (1 + 1e-12));
        // ||phi||_{H^{-1/p}} <= ||phi||_{H^{-1}}^{1/p} ||phi||_{L2}^{1-1/p}
        for (double p : {2.0, 4.0}) {
            const double lhs = sobolev_norm(f, -1.0 / p);
            const double rhs = std::pow(sobolev_norm(f, -1.0), 1.0 / p) *
                               std::pow(sobolev_norm(f, 0.0), 1.0 - 1.0 / p);
            CHECK(lhs <= rhs * (1.0 + 1e-10));
        }
    }
}

TEST_CASE("universal mixing aggregation") {
    SUBCASE("single mode present") {
        std::vector<ModeFit> fits;
        for (int kx = -1; kx <= 1; ++kx)
            for (int ky = -1; ky <= 1; ++ky) {
                if (kx == 0 && ky == 0) continue;
                if (kx * kx + ky * ky > 1) continue;
                fits.push_back({{kx, ky}, kx == 1 && ky == 0 ? 2.0 : 0.0, -0.5});
            }
        const auto rep = universal_mixing_bound(fits, 1);
        CHECK(rep.K == doctest::Approx(2.0));
        CHECK(rep.alpha == doctest::Approx(0.5));
        CHECK(rep.universal_rate == doctest::Approx(0.5 / 3.0));
    }
    SUBCASE("equal prefactors sum the |k|^{-3} series") {
        std::vector<ModeFit> fits;
        double expect = 0.0;
        for (int kx = -2; kx <= 2; ++kx)
            for (int ky = -2; ky <= 2; ++ky) {
                if (kx == 0 && ky == 0) continue;
                const double n2 = kx * kx + ky * ky;
                if (n2 > 4.0) continue;
                fits.push_back({{kx, ky}, 1.0, -0.4});
                expect += std::pow(n2, -1.5);
            }
        CHECK(universal_mixing_bound(fits, 2).K == doctest::Approx(expect));
    }
    SUBCASE("missing mode raises CoverageError") {
        std::vector<ModeFit> fits{{{1, 0}, 1.0, -0.4}};
        CHECK_THROWS_AS(universal_mixing_bound(fits, 1), CoverageError);
    }
}

TEST_CASE("cumulative spectrum basics") {
    auto e11 = make_basis_mode({1, 1}, kGrid);
    CHECK(cumulative_spectrum(e11, 1.0) == doctest::Approx(0.0));
    CHECK(cumulative_spectrum(e11, 2.0) == doctest::Approx(2.0 * kPi * kPi));
    CHECK(batchelor_n0(make_basis_mode({1, 0}, kGrid)) == 1);
    // mass at |k| = 2 needs sqrt(M) >= 2 -> M = 4
    CHECK(batchelor_n0(make_basis_mode({2, 0}, kGrid)) == 4);
}

TEST_CASE("forced scalar with u = 0 accumulates linearly in T (Ito oracle)") {
    BatchelorConfig cfg;
    cfg.solver.grid = kGrid;
    cfg.solver.dt = 2e-2;
    // turn the velocity off by zero-amplitude? forcing must be valid, so run
    // with the stochastic field but projection far above the active band is
    // avoided; instead verify the pure-Ito law directly.
    const SpectralField g = make_basis_mode({1, 0}, kGrid);
    const SpectralField omega(kGrid);
    const int samples = 4000;
    const double dt = 0.02;
    for (double T : {0.5, 1.0}) {
        double acc = 0.0;
        const int steps = static_cast<int>(std::lround(T / dt));
        for (int s = 0; s < samples; ++s) {
            ScalarState phi{SpectralField(kGrid), 0.0};
            NoiseStream noise{77, static_cast<std::uint64_t>(s), 0};
            for (int i = 0; i < steps; ++i) {
                advect_scalar_forced(phi, omega, omega, dt, g, noise);
                noise.advance();
            }
            acc += cumulative_spectrum(phi.phi, 2.0);
        }
        const double mean = acc / samples;
        CHECK(mean == doctest::Approx(basis_mode_l2sq() * T).epsilon(0.05));
    }
}

TEST_CASE("batchelor run rejects grids below N0") {
    BatchelorConfig cfg;
    cfg.solver.grid = kGrid;
    cfg.n_grid = {2, 3};
    // g concentrated at |k| = 4 -> N0 = 16 > all grid entries
    const SpectralField g = make_basis_mode({4, 0}, kGrid);
    CHECK_THROWS_AS(batchelor_run(cfg, g, 1), SpectrumRangeError);
}
