#include <cmath>

#include "doctest.h"
#include "snsmix/malliavin.hpp"
#include "test_helpers.hpp"

using namespace snsmix;

namespace {

SolverConfig malliavin_solver(int n = 16, double dt = 5e-3) {
    SolverConfig cfg;
    cfg.grid = GridSpec{n, 2.0 / 3.0};
    cfg.dt = dt;
    return cfg;
}

}  // namespace

TEST_CASE("heat-case Malliavin matrix matches the closed form") {
    auto cfg = malliavin_solver(16, 1.0 / 128.0);
    const int steps = 128;  // T = 1
    const auto path = zero_base_path(cfg, ProcessVariant::Base, steps);
    GalerkinSpec spec{3, 4, ProcessVariant::Base};
    const auto M = assemble_malliavin(path, spec, 65);

    const auto modes = galerkin_modes(3);
    for (std::size_t a = 0; a < modes.size(); ++a) {
        const int f = cfg.forcing.find(modes[a]);
        const double a2 = 2.0 * cfg.nu * modes[a].norm2();
        const double gram = 2.0 * kPi * kPi * std::pow(modes[a].norm2(), 4);
        const double expect =
            f >= 0 ? cfg.forcing.amps[static_cast<std::size_t>(f)] *
                         cfg.forcing.amps[static_cast<std::size_t>(f)] * gram * gram *
                         (1.0 - std::exp(-a2 * 1.0)) / a2
                   : 0.0;
        if (f >= 0)
            CHECK(M.M(static_cast<int>(a), static_cast<int>(a)) ==
                  doctest::Approx(expect).epsilon(1e-7));
        else
            CHECK(std::abs(M.M(static_cast<int>(a), static_cast<int>(a))) < 1e-10);
        for (std::size_t b = 0; b < modes.size(); ++b)
            if (a != b) CHECK(std::abs(M.M(static_cast<int>(a), static_cast<int>(b))) < 1e-10);
    }
}

TEST_CASE("heat-case propagator is block-diagonal with exact viscous factors") {
    auto cfg = malliavin_solver(16, 5e-3);
    const auto path = zero_base_path(cfg, ProcessVariant::Base, 40);
    GalerkinSpec spec{3, 4, ProcessVariant::Base};
    const auto J = build_propagator(path, 0, 40, spec);
    const auto modes = galerkin_modes(3);
    for (std::size_t a = 0; a < modes.size(); ++a) {
        const double expect = std::exp(-cfg.nu * modes[a].norm2() * 0.2);
        CHECK(J(static_cast<int>(a), static_cast<int>(a)) ==
              doctest::Approx(expect).epsilon(1e-12));
        for (std::size_t b = 0; b < modes.size(); ++b)
            if (a != b) CHECK(std::abs(J(static_cast<int>(a), static_cast<int>(b))) < 1e-14);
    }
}

TEST_CASE("propagator identity and semigroup property") {
    auto cfg = malliavin_solver(16, 5e-3);
    // smooth deterministic base path from a small band-limited field
    auto path = simulate_base_path(cfg, EvalScheme{EvalMode::DirectSum, 4},
                                   ProcessVariant::OnePoint, 40, 3, 0, 0.0, true);
    path.states.front().vorticity.omega = testutil::random_field(cfg.grid, 2, 8, 0.3);
    // rebuild the decay path from the chosen initial field
    {
        CoupledStepper stepper(cfg, path.scheme);
        CoupledState s = path.states.front();
        for (int i = 1; i <= 40; ++i) {
            stepper.step_decay(s);
            path.states[static_cast<std::size_t>(i)] = s;
        }
    }
    GalerkinSpec spec{4, 4, ProcessVariant::OnePoint};
    const auto J00 = build_propagator(path, 7, 7, spec);
    CHECK((J00 - Eigen::MatrixXd::Identity(J00.rows(), J00.cols())).norm() == 0.0);

    const auto Jfull = build_propagator(path, 0, 40, spec);
    const auto Ja = build_propagator(path, 0, 20, spec);
    const auto Jb = build_propagator(path, 20, 40, spec);
    CHECK((Jfull - Jb * Ja).norm() < 1e-8 * Jfull.norm());
}

TEST_CASE("linearity: zero direction stays zero") {
    auto cfg = malliavin_solver();
    const auto path = simulate_base_path(cfg, EvalScheme{EvalMode::DirectSum, 4},
                                         ProcessVariant::OnePoint, 10, 5, 0, 1.0);
    GalerkinSpec spec{3, 4, ProcessVariant::OnePoint};
    DirectionVector dir{SpectralField(cfg.grid), Eigen::VectorXd::Zero(2)};
    for (int i = 0; i < 10; ++i) linearize_step(dir, path, i, spec);
    CHECK(dir.h.max_abs_coeff() == 0.0);
    CHECK(dir.tm.norm() == 0.0);
}

TEST_CASE("finite-difference consistency of the linearized coupled flow") {
    // deterministic decay flow; band-limited data keep the quadratic
    // interactions inside the Galerkin ball over the short horizon
    auto cfg = malliavin_solver(16, 5e-3);
    const int steps = 40;  // T = 0.2
    const EvalScheme scheme{EvalMode::DirectSum, 4};
    const Vec2 x0{0.4, -1.1};

    BasePath path;
    path.cfg = cfg;
    path.scheme = scheme;
    {
        CoupledState s;
        s.vorticity = {testutil::random_field(cfg.grid, 2, 12, 0.4), 0.0};
        s.point = OnePoint{x0};
        CoupledStepper stepper(cfg, scheme);
        path.states.push_back(s);
        for (int i = 0; i < steps; ++i) {
            stepper.step_decay(s);
            path.states.push_back(s);
        }
    }
    const SpectralField phi = testutil::random_field(cfg.grid, 2, 77, 1.0);

    // ball of radius 8 covers the whole square cutoff K = 5, so the Galerkin
    // confinement is a no-op and J is the exact tangent of the scheme
    GalerkinSpec spec{8, 4, ProcessVariant::OnePoint};
    DirectionVector dir{phi, Eigen::VectorXd::Zero(2)};
    for (int i = 0; i < steps; ++i) linearize_step(dir, path, i, spec);

    auto flow = [&](double eps) {
        CoupledState s;
        s.vorticity = {path.states.front().vorticity.omega, 0.0};
        s.vorticity.omega.axpy(eps, phi);
        s.point = OnePoint{x0};
        CoupledStepper stepper(cfg, scheme);
        for (int i = 0; i < steps; ++i) stepper.step_decay(s);
        return s;
    };
    const CoupledState base_end = [&] {
        CoupledState s;
        s.vorticity = {path.states.front().vorticity.omega, 0.0};
        s.point = OnePoint{x0};
        CoupledStepper stepper(cfg, scheme);
        for (int i = 0; i < steps; ++i) stepper.step_decay(s);
        return s;
    }();

    auto fd_error = [&](double eps) {
        const CoupledState pert = flow(eps);
        SpectralField dfield = pert.vorticity.omega;
        dfield -= base_end.vorticity.omega;
        dfield *= 1.0 / eps;
        dfield -= dir.h;
        const Vec2 dx = (std::get<OnePoint>(pert.point).x -
                         std::get<OnePoint>(base_end.point).x) /
                        eps;
        const Vec2 dtm{dir.tm[0], dir.tm[1]};
        return sobolev_norm(dfield, 0.0) + (dx - dtm).norm();
    };
    const double e3 = fd_error(1e-3);
    const double e4 = fd_error(1e-4);
    const double e5 = fd_error(1e-5);
    CHECK(e3 / e4 > 5.0);  // O(eps) slope
    CHECK(e3 / e4 < 20.0);
    CHECK(e4 / e5 > 3.0);  // allows a little fp noise at 1e-5
    CHECK(e5 < 1e-3);
}

TEST_CASE("malliavin matrix on a stochastic path: symmetric, PSD, Gram-consistent") {
    auto cfg = malliavin_solver(16, 1.0 / 64.0);
    const auto path = simulate_base_path(cfg, EvalScheme{EvalMode::DirectSum, 4},
                                         ProcessVariant::OnePoint, 64, 21, 0, 2.0);
    GalerkinSpec spec{3, 4, ProcessVariant::OnePoint};
    const auto M = assemble_malliavin(path, spec, 65);
    CHECK((M.M - M.M.transpose()).norm() < 1e-12 * M.M.norm());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M.M);
    CHECK(eig.eigenvalues().minCoeff() > -1e-10 * M.M.norm());

    // Gram consistency: <p, M p> = sum_k c_k^2 sum_i w_i <p, J e_k>^2
    const int dim = static_cast<int>(M.M.rows());
    Eigen::VectorXd c(dim);
    for (int i = 0; i < dim; ++i)
        c[i] = gaussian_draw(4, 2, static_cast<std::uint64_t>(i), 0);
    const double direct = c.dot(M.M * c);
    double recomputed = 0.0;
    for (std::size_t node = 0; node < M.propagated.size(); ++node)
        for (std::size_t f = 0; f < M.propagated[node].size(); ++f) {
            const double amp = path.cfg.forcing.amps[f];
            const double ip = c.dot(M.propagated[node][f]);
            recomputed += amp * amp * M.quad_weights[node] * ip * ip;
        }
    CHECK(direct == doctest::Approx(recomputed).epsilon(1e-10));
}

TEST_CASE("quadrature stability: doubling m on a smooth path changes M below 1e-8") {
    auto cfg = malliavin_solver(16, 1.0 / 256.0);
    // deterministic decay base path (smooth integrand)
    BasePath path;
    path.cfg = cfg;
    path.scheme = EvalScheme{EvalMode::DirectSum, 4};
    {
        CoupledState s;
        s.vorticity = {testutil::random_field(cfg.grid, 2, 3, 0.5), 0.0};
        s.point = OnePoint{{0.2, 0.4}};
        CoupledStepper stepper(cfg, path.scheme);
        path.states.push_back(s);
        for (int i = 0; i < 256; ++i) {
            stepper.step_decay(s);
            path.states.push_back(s);
        }
    }
    GalerkinSpec spec{2, 4, ProcessVariant::OnePoint};
    const auto M65 = assemble_malliavin(path, spec, 65);
    const auto M129 = assemble_malliavin(path, spec, 129);
    CHECK((M65.M - M129.M).norm() < 1e-8 * M129.M.norm());
}

TEST_CASE("projected minimum eigenvalue") {
    SUBCASE("identity quadratic form gives 1") {
        MalliavinMatrix M;
        M.modes = galerkin_modes(2);
        for (const auto& k : M.modes)
            M.gram_diag.push_back(2.0 * kPi * kPi * std::pow(k.norm2(), 4));
        M.tm_dim = 2;
        const int dim = static_cast<int>(M.modes.size()) + 2;
        M.M = Eigen::MatrixXd::Zero(dim, dim);
        for (std::size_t i = 0; i < M.modes.size(); ++i)
            M.M(static_cast<int>(i), static_cast<int>(i)) = M.gram_diag[i];
        M.M(dim - 2, dim - 2) = 1.0;
        M.M(dim - 1, dim - 1) = 1.0;
        CHECK(projected_min_eigen(M, 2) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(projected_min_eigen(M, 1) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("zero matrix gives 0") {
        MalliavinMatrix M;
        M.modes = galerkin_modes(2);
        for (const auto& k : M.modes)
            M.gram_diag.push_back(2.0 * kPi * kPi * std::pow(k.norm2(), 4));
        M.tm_dim = 0;
        const int dim = static_cast<int>(M.modes.size());
        M.M = Eigen::MatrixXd::Zero(dim, dim);
        CHECK(projected_min_eigen(M, 2) == doctest::Approx(0.0));
    }
}

TEST_CASE("TM nondegeneracy precondition: forced-mode directions span TM") {
    auto cfg = malliavin_solver();
    GalerkinSpec spec{3, 4, ProcessVariant::OnePoint};
    CoupledState base;
    base.vorticity = {SpectralField(cfg.grid), 0.0};
    for (int trial = 0; trial < 20; ++trial) {
        const Vec2 x{uniform_draw(9, 0, trial, 0, -kPi, kPi),
                     uniform_draw(9, 0, trial, 1, -kPi, kPi)};
        base.point = OnePoint{x};
        Eigen::MatrixXd stacked(0, 2);
        for (int kx = -2; kx <= 2; ++kx)
            for (int ky = -2; ky <= 2; ++ky) {
                if (kx == 0 && ky == 0) continue;
                if (kx * kx + ky * ky > 4) continue;
                const auto th = theta_direction({kx, ky}, spec, base);
                stacked.conservativeResize(stacked.rows() + 1, 2);
                stacked.row(stacked.rows() - 1) = th.transpose();
            }
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked);
        CHECK(svd.singularValues().minCoeff() > 1e-3);  // max_k |g(Theta_k, v)| > 0
    }
}

TEST_CASE("variant and dimension guards") {
    auto cfg = malliavin_solver();
    const auto path = zero_base_path(cfg, ProcessVariant::Base, 4);
    GalerkinSpec spec{3, 4, ProcessVariant::OnePoint};
    DirectionVector bad{SpectralField(cfg.grid), Eigen::VectorXd::Zero(5)};
    CHECK_THROWS_AS(linearize_step(bad, path, 0, spec), VariantError);

    GalerkinSpec huge{70, 4, ProcessVariant::Base};
    CHECK_THROWS_AS(build_propagator(path, 0, 1, huge), DimensionError);
}
