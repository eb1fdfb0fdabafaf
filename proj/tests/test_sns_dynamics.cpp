#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "oracle_trig.hpp"
#include "snsmix/sns_dynamics.hpp"
#include "test_helpers.hpp"

using namespace snsmix;

namespace {

SolverConfig small_config(double dt = 5e-3, int n = 32) {
    SolverConfig cfg;
    cfg.nu = 0.1;
    cfg.dt = dt;
    cfg.grid = GridSpec{n, 2.0 / 3.0};
    return cfg;
}

SpectralField laplacian(const SpectralField& f) {
    SpectralField g = f;
    const int n = f.n();
    auto& raw = g.raw();
    for (int a = 0; a < n; ++a) {
        const int kx = a <= n / 2 ? a : a - n;
        for (int b = 0; b < n; ++b) {
            const int ky = b <= n / 2 ? b : b - n;
            raw[static_cast<std::size_t>(a) * n + b] *= -(double(kx) * kx + double(ky) * ky);
        }
    }
    return g;
}

// classical RK4 on d/dt w = nu Lap w - N(w), used as a deterministic reference
VorticityState rk4_reference(VorticityState s, const SolverConfig& cfg, double dt, int steps) {
    auto rhs = [&](const SpectralField& w) {
        SpectralField r = laplacian(w);
        r *= cfg.nu;
        SpectralField nl = nonlinear_term(w);
        r.axpy(-1.0, nl);
        return r;
    };
    for (int i = 0; i < steps; ++i) {
        SpectralField k1 = rhs(s.omega);
        SpectralField tmp = s.omega;
        tmp.axpy(0.5 * dt, k1);
        SpectralField k2 = rhs(tmp);
        tmp = s.omega;
        tmp.axpy(0.5 * dt, k2);
        SpectralField k3 = rhs(tmp);
        tmp = s.omega;
        tmp.axpy(dt, k3);
        SpectralField k4 = rhs(tmp);
        s.omega.axpy(dt / 6.0, k1);
        s.omega.axpy(dt / 3.0, k2);
        s.omega.axpy(dt / 3.0, k3);
        s.omega.axpy(dt / 6.0, k4);
        s.t += dt;
    }
    return s;
}

}  // namespace

TEST_CASE("single-mode viscous decay is exact per step") {
    auto cfg = small_config(1e-2);
    SnsStepper stepper(cfg);
    VorticityState s{make_basis_mode({1, 1}, cfg.grid), 0.0};
    const double c0 = std::abs(s.omega.coeff({1, 1}));
    std::vector<double> noise_off(cfg.forcing.size(), 0.0);
    for (int i = 1; i <= 20; ++i) {
        stepper.step_with_injection(s, noise_off);
        const double expect = c0 * std::exp(-2.0 * cfg.nu * cfg.dt * i);
        CHECK(std::abs(s.omega.coeff({1, 1})) == doctest::Approx(expect).epsilon(1e-13));
    }
}

TEST_CASE("one-step Ito isometry: E||w_dt||^2 = sum c_k^2 2pi^2 dt + O(dt^2)") {
    auto cfg = small_config(5e-3);
    SnsStepper stepper(cfg);
    const int samples = 20000;
    double acc = 0.0;
    double acc2 = 0.0;
    for (int i = 0; i < samples; ++i) {
        VorticityState s{SpectralField(cfg.grid), 0.0};
        NoiseStream noise{2024, static_cast<std::uint64_t>(i), 0};
        stepper.step_stochastic(s, noise);
        const double e = sobolev_norm(s.omega, 0.0);
        acc += e * e;
        acc2 += e * e * e * e;
    }
    const double mean = acc / samples;
    const double var = acc2 / samples - mean * mean;
    const double stderr_ = std::sqrt(var / samples);
    // exact per-scheme expectation (mild OU variance)
    double exact = 0.0;
    for (std::size_t m = 0; m < cfg.forcing.size(); ++m) {
        const double a = cfg.nu * cfg.forcing.modes[m].norm2();
        exact += cfg.forcing.amps[m] * cfg.forcing.amps[m] * basis_mode_l2sq() *
                 (1.0 - std::exp(-2.0 * a * cfg.dt)) / (2.0 * a * cfg.dt) * cfg.dt;
    }
    CHECK(std::abs(mean - exact) < 3.0 * stderr_);
    // leading-order Ito isometry, deviation O(dt^2)
    const double leading = injection_rate(cfg.forcing) * cfg.dt;
    CHECK(std::abs(mean - leading) < 3.0 * stderr_ + 0.5 * leading * cfg.dt);
}

TEST_CASE("deterministic two-mode step matches RK4 reference at second order") {
    auto cfg_base = small_config();
    SpectralField w0 = make_basis_mode({1, 0}, cfg_base.grid);
    w0 += make_basis_mode({1, 1}, cfg_base.grid);

    auto err_at = [&](double dt) {
        auto cfg = small_config(dt);
        SnsStepper stepper(cfg);
        VorticityState s{w0, 0.0};
        std::vector<double> off(cfg.forcing.size(), 0.0);
        stepper.step_with_injection(s, off);
        VorticityState ref = rk4_reference({w0, 0.0}, cfg, dt / 100.0, 100);
        s.omega -= ref.omega;
        return sobolev_norm(s.omega, 0.0);
    };
    const double e1 = err_at(2e-2);
    const double e2 = err_at(1e-2);
    CHECK(e1 / e2 > 5.0);  // local error ~ dt^3: halving dt shrinks by ~8
    CHECK(e1 < 1e-5);
}

TEST_CASE("controlled stepping") {
    auto cfg = small_config(1e-3);
    SnsStepper stepper(cfg);

    SUBCASE("zero rates give pure decay") {
        ControlProgram prog({0.0, 1.0}, {std::vector<double>(cfg.forcing.size(), 0.0)});
        VorticityState s{make_basis_mode({1, 1}, cfg.grid), 0.0};
        const double c0 = std::abs(s.omega.coeff({1, 1}));
        for (int i = 0; i < 100; ++i) stepper.step_controlled(s, prog);
        CHECK(std::abs(s.omega.coeff({1, 1})) ==
              doctest::Approx(c0 * std::exp(-2.0 * cfg.nu * 0.1)).epsilon(1e-12));
    }

    SUBCASE("single forced mode matches the scalar ODE closed form") {
        // gdot = delta on mode k0 only; single mode evolves exactly:
        // amp(t) = (c delta / (nu |k|^2)) (1 - e^{-nu |k|^2 t}) in e_k units.
        const double delta = 0.5;
        const int m0 = cfg.forcing.find({1, 0});
        REQUIRE(m0 >= 0);
        std::vector<double> rates(cfg.forcing.size(), 0.0);
        rates[static_cast<std::size_t>(m0)] = delta;
        ControlProgram prog({0.0, 2.0}, {rates});
        VorticityState s{SpectralField(cfg.grid), 0.0};
        for (int i = 0; i < 2000; ++i) stepper.step_controlled(s, prog);
        const double a = cfg.nu * 1.0;
        const double expect = delta / a * (1.0 - std::exp(-a * s.t));
        // coefficient of e_{(1,0)} = sin(x1) is -2 Im(c_{(1,0)})
        const double got = -2.0 * s.omega.coeff({1, 0}).imag();
        CHECK(got == doctest::Approx(expect).epsilon(1e-10));
        CHECK(s.omega.eval(kPi / 2, 0.0) == doctest::Approx(expect).epsilon(1e-9));
    }

    SUBCASE("program concatenation equals the merged program") {
        ControlProgram a({0.0, 0.05}, {std::vector<double>{0.3, -0.2, 0.1, 0.4}});
        ControlProgram b({0.0, 0.05}, {std::vector<double>{-0.5, 0.2, 0.0, 1.0}});
        ControlProgram merged = a.then(b);
        VorticityState s1{testutil::random_field(cfg.grid, 3, 5, 0.2), 0.0};
        VorticityState s2 = s1;
        for (int i = 0; i < 50; ++i) stepper.step_controlled(s1, a);
        ControlProgram b_shifted({0.05, 0.10}, {b.rates()[0]});
        for (int i = 0; i < 50; ++i) stepper.step_controlled(s1, b_shifted);
        for (int i = 0; i < 100; ++i) stepper.step_controlled(s2, merged);
        s1.omega -= s2.omega;
        CHECK(s1.omega.max_abs_coeff() < 1e-14);
    }

    SUBCASE("gap in program raises ControlGapError") {
        ControlProgram prog({0.0, 0.01}, {std::vector<double>(cfg.forcing.size(), 0.0)});
        VorticityState s{SpectralField(cfg.grid), 0.5};
        CHECK_THROWS_AS(stepper.step_controlled(s, prog), ControlGapError);
    }

    SUBCASE("|gdot| > 1 is rejected") {
        CHECK_THROWS_AS(ControlProgram({0.0, 1.0}, {std::vector<double>{1.5, 0, 0, 0}}),
                        ConfigError);
    }
}

TEST_CASE("lyapunov_V closed forms") {
    auto cfg = small_config();
    CHECK(lyapunov_V(SpectralField(cfg.grid), 0.1, 1.0) == 0.0);
    auto e11 = make_basis_mode({1, 1}, cfg.grid);
    const double expect = 2.0 * kPi * kPi + std::pow(32.0 * kPi * kPi, 1.0 / 6.0);
    CHECK(lyapunov_V(e11, 1.0, 1.0) == doctest::Approx(expect).epsilon(1e-12));
    CHECK_THROWS_AS(lyapunov_V(e11, -1.0, 1.0), ConfigError);
}

TEST_CASE("bit reproducibility of stochastic stepping") {
    auto cfg = small_config();
    auto run = [&] {
        SnsStepper stepper(cfg);
        VorticityState s{SpectralField(cfg.grid), 0.0};
        NoiseStream noise{777, 3, 0};
        for (int i = 0; i < 64; ++i) stepper.step_stochastic(s, noise);
        return s;
    };
    auto a = run();
    auto b = run();
    for (std::size_t i = 0; i < a.omega.raw().size(); ++i)
        CHECK(a.omega.raw()[i] == b.omega.raw()[i]);
}

TEST_CASE("strong order ~1 against a dt/16 reference with coupled noise") {
    auto cfg0 = small_config();
    const double T = 1.0;
    const double dt_top = 2e-2;
    const int fine_per_top = 16;
    const double h = dt_top / fine_per_top;
    const int n_fine = static_cast<int>(std::lround(T / h));

    // fine-level standard normals per (step, mode)
    const std::uint64_t seed = 4242;
    auto eps = [&](int i, std::size_t m) {
        return gaussian_draw(seed, 9, static_cast<std::uint64_t>(i), m);
    };
    auto run_level = [&](int r) {  // r = fine steps per level step
        auto cfg = small_config(h * r);
        SnsStepper stepper(cfg);
        VorticityState s{SpectralField(cfg.grid), 0.0};
        std::vector<double> xi(cfg.forcing.size());
        for (int i0 = 0; i0 < n_fine; i0 += r) {
            for (std::size_t m = 0; m < xi.size(); ++m) {
                const double a = cfg.nu * cfg.forcing.modes[m].norm2();
                const double std_fine =
                    cfg.forcing.amps[m] * std::sqrt((1.0 - std::exp(-2.0 * a * h)) / (2.0 * a));
                double acc = 0.0;
                for (int q = 0; q < r; ++q)
                    acc += std::exp(-a * h * (r - 1 - q)) * std_fine * eps(i0 + q, m);
                xi[m] = acc;
            }
            stepper.step_with_injection(s, xi);
        }
        return s;
    };

    auto ref = run_level(1);
    std::vector<double> errs;
    for (int r : {16, 8, 4, 2}) {
        auto s = run_level(r);
        s.omega -= ref.omega;
        errs.push_back(sobolev_norm(s.omega, 0.0));
    }
    // log-log slope over the 4 halvings
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < 4; ++i) {
        const double x = std::log(dt_top / (1 << i));
        const double y = std::log(errs[static_cast<std::size_t>(i)]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (4 * sxy - sx * sy) / (4 * sxx - sx * sx);
    CHECK(slope == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("energy diagnostics") {
    auto cfg = small_config(1e-3);

    SUBCASE("zero field, zero forcing stays zero") {
        SnsStepper stepper(cfg);
        VorticityState s{SpectralField(cfg.grid), 0.0};
        std::vector<double> off(cfg.forcing.size(), 0.0);
        std::vector<EnergySample> series;
        series.push_back(energy_sample(s, cfg.nu, nullptr));
        for (int i = 0; i < 50; ++i) {
            stepper.step_with_injection(s, off);
            series.push_back(energy_sample(s, cfg.nu, &series.back()));
        }
        for (const auto& e : series) {
            CHECK(e.l2sq == 0.0);
            CHECK(e.visc_integral == 0.0);
            CHECK(e.h4_pow == 0.0);
        }
    }

    SUBCASE("single-mode decay satisfies the exact energy identity") {
        SnsStepper stepper(cfg);
        VorticityState s{make_basis_mode({1, 1}, cfg.grid), 0.0};
        std::vector<double> off(cfg.forcing.size(), 0.0);
        std::vector<EnergySample> series;
        series.push_back(energy_sample(s, cfg.nu, nullptr));
        for (int i = 0; i < 1000; ++i) {
            stepper.step_with_injection(s, off);
            series.push_back(energy_sample(s, cfg.nu, &series.back()));
        }
        const double lhs = series.back().visc_integral;
        const double rhs = 0.5 * (series.front().l2sq - series.back().l2sq);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
    }
}

TEST_CASE("stationary energy bound (injection over 2 nu lambda_1, safety 20)") {
    auto cfg = small_config(5e-3, 64);
    SnsStepper stepper(cfg);
    VorticityState s{SpectralField(cfg.grid), 0.0};
    NoiseStream noise{99, 0, 0};
    double running_max = 0.0;
    const int steps = static_cast<int>(100.0 / cfg.dt);
    for (int i = 0; i < steps; ++i) {
        stepper.step_stochastic(s, noise);
        const double l2 = sobolev_norm(s.omega, 0.0);
        running_max = std::max(running_max, l2 * l2);
    }
    const double bound = injection_rate(cfg.forcing) / (2.0 * cfg.nu) * 20.0;
    CHECK(running_max < bound);
    CHECK(running_max > 0.0);
}

TEST_CASE("checkpoint restart is bit-identical to the unbroken run") {
    auto cfg = small_config();
    SnsStepper stepper(cfg);

    VorticityState s{SpectralField(cfg.grid), 0.0};
    NoiseStream noise{555, 12, 0};
    for (int i = 0; i < 10; ++i) stepper.step_stochastic(s, noise);

    std::stringstream buf;
    write_checkpoint(buf, Checkpoint{cfg, s, noise});

    for (int i = 0; i < 20; ++i) stepper.step_stochastic(s, noise);

    auto ck = read_checkpoint(buf);
    SnsStepper stepper2(ck.cfg);
    for (int i = 0; i < 20; ++i) stepper2.step_stochastic(ck.state, ck.noise);

    CHECK(ck.state.t == s.t);
    CHECK(ck.noise.counter == noise.counter);
    for (std::size_t i = 0; i < s.omega.raw().size(); ++i)
        CHECK(ck.state.omega.raw()[i] == s.omega.raw()[i]);
}

TEST_CASE("blow-up is reported, not clipped") {
    auto cfg = small_config(0.1, 32);
    cfg.nu = 1e-6;
    SnsStepper stepper(cfg);
    VorticityState s{testutil::random_field(cfg.grid, 10, 1, 50.0), 0.0};
    CHECK_THROWS_AS(
        [&] {
            for (int i = 0; i < 2000; ++i) stepper.step_decay(s);
        }(),
        BlowupError);
}
