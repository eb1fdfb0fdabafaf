#include <cmath>

#include "doctest.h"
#include "snsmix/control_lab.hpp"
#include "test_helpers.hpp"

using namespace snsmix;

namespace {

ControlContext make_ctx() {
    ControlContext ctx;
    ctx.solver.grid = GridSpec{32, 2.0 / 3.0};
    ctx.solver.dt = 1e-2;
    return ctx;
}

}  // namespace

TEST_CASE("diffeomorphism closed forms") {
    SUBCASE("k=(1,0) at the origin moves straight down") {
        // grad^perp Lap^{-1} e_{(1,0)} = cos(x1)(0,-1)
        const DiffeoStep d{{1, 0}, 0.7};
        const Vec2 out = flow_diffeo(d, {0, 0});
        CHECK(out[0] == doctest::Approx(0.0));
        CHECK(out[1] == doctest::Approx(-0.7));
    }
    SUBCASE("t = 0 is the identity") {
        const Vec2 x{1.1, -0.4};
        const Vec2 out = flow_diffeo({{1, 1}, 0.0}, x);
        CHECK((out - x).norm() < 1e-15);
    }
    SUBCASE("flows are honest flows: f_{k,-t} o f_{k,t} = id exactly") {
        const Vec2 x{0.9, 0.3};
        for (double t : {0.5, 2.0, 7.0}) {
            const Vec2 back = flow_diffeo({{1, 1}, -t}, flow_diffeo({{1, 1}, t}, x));
            CHECK(torus_distance(back, x) < 1e-14);
        }
    }
    SUBCASE("interleaved opposite flows fail to cancel at O(t^2)") {
        // f_{j,-t} o f_{k,-t} o f_{j,t} o f_{k,t} defect scales like t^2
        const Vec2 x{0.9, 0.3};
        auto defect = [&](double t) {
            Vec2 p = flow_diffeo({{1, 0}, t}, x);
            p = flow_diffeo({{1, 1}, t}, p);
            p = flow_diffeo({{1, 0}, -t}, p);
            p = flow_diffeo({{1, 1}, -t}, p);
            return torus_distance(p, x);
        };
        const double d1 = defect(0.2);
        const double d2 = defect(0.1);
        CHECK(d1 / d2 > 3.0);
        CHECK(d1 / d2 < 5.0);
    }
    SUBCASE("cos-branch velocity vanishes at the origin with nonzero shear") {
        CHECK(mode_velocity({-1, 0}, {0, 0}).norm() == 0.0);
        CHECK(mode_velocity_grad({-1, 0}, {0, 0}).norm() > 0.5);
    }
}

TEST_CASE("workable region predicate is symmetric under y -> -y") {
    const ForcingSet F = default_forcing();
    for (int i = 0; i < 50; ++i) {
        const Vec2 y{uniform_draw(2, 0, i, 0, -kPi, kPi),
                     uniform_draw(2, 0, i, 1, -kPi, kPi)};
        for (const auto& k : F.modes)
            CHECK(in_workable_region(k, y, F) == in_workable_region(k, -y, F));
    }
}

TEST_CASE("bump realization matches the ideal diffeomorphism as it sharpens") {
    auto ctx = make_ctx();
    // small residual field; the realized move should approach f_{k,s}(x) as the
    // bump amplitude grows (shorter exposure to the residual)
    const SpectralField residual = testutil::random_field(ctx.solver.grid, 3, 7, 5e-4);
    const DiffeoStep step{{1, 1}, 2.0};
    const Vec2 x0{0.4, -0.9};
    const Vec2 ideal = flow_diffeo(step, x0);
    double prev_err = 1e9;
    for (double amp : {0.1, 0.3, 0.9}) {
        ControlContext c = ctx;
        c.amplitude = amp;
        const ControlProgram prog = realize_diffeo(c, step);
        CoupledState s;
        s.vorticity = {residual, 0.0};
        s.point = OnePoint{x0};
        ControlTarget target;
        target.x = ideal;
        const auto rep = verify_control(c, prog, s, target, 1.0);
        const double err = rep.error_components[1];
        CHECK(err < prev_err * 1.05);
        prev_err = err;
    }
    CHECK(prev_err < 0.03);
}

TEST_CASE("every emitted program satisfies |gdot| <= 1") {
    auto ctx = make_ctx();
    for (double s : {0.3, -1.7, 12.0}) {
        const auto prog = realize_diffeo(ctx, {{1, 0}, s});
        for (const auto& row : prog.rates())
            for (double r : row) CHECK(std::abs(r) <= 1.0 + 1e-12);
    }
}

TEST_CASE("verify_control: empty program and exact target pass with zero error") {
    auto ctx = make_ctx();
    CoupledState s;
    s.vorticity = {SpectralField(ctx.solver.grid), 0.0};
    s.point = OnePoint{{0.5, 0.5}};
    ControlTarget target;
    target.x = Vec2{0.5, 0.5};
    const auto rep = verify_control(ctx, ControlProgram{}, s, target, 0.1);
    CHECK(rep.pass);
    CHECK(rep.error_components[0] == doctest::Approx(0.0));  // ||u||
    CHECK(rep.error_components[1] == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("single-mode exact control reaches the closed-form amplitude") {
    auto ctx = make_ctx();
    // constant rate on one mode: the controlled run must match the scalar ODE
    const double delta = 0.3, T = 2.0;
    const int m = ctx.solver.forcing.find({1, 0});
    REQUIRE(m >= 0);
    std::vector<double> rates(ctx.solver.forcing.size(), 0.0);
    rates[static_cast<std::size_t>(m)] = delta;
    ControlProgram prog({0.0, T}, {rates});
    CoupledState s;
    s.vorticity = {SpectralField(ctx.solver.grid), 0.0};
    s.point = OnePoint{{0.0, 0.0}};
    ControlTarget target;
    const auto rep = verify_control(ctx, prog, s, target, 1e9);
    const double a = ctx.solver.nu;  // |k|^2 = 1
    const double amp = delta / a * (1.0 - std::exp(-a * T));
    const double expect_h5 = amp * kPi * std::sqrt(2.0);  // ||e_k||_{H4}, |k| = 1
    CHECK(rep.error_components[0] == doctest::Approx(expect_h5).epsilon(1e-9));
}

TEST_CASE("projective planner: trivial case returns an empty program") {
    auto ctx = make_ctx();
    const Vec2 v{1.0, 0.0};
    const auto rep = plan_projective_control(ctx, SpectralField(ctx.solver.grid), {0, 0}, v,
                                             v, 0.1);
    CHECK(rep.pass);
    CHECK(rep.program.empty());
}

TEST_CASE("projective planner: winding reaches an arbitrary target from (0,0)") {
    auto ctx = make_ctx();
    const Vec2 v0{1.0, 0.0};
    const Vec2 vt = Vec2{-0.3, 0.8}.normalized();
    const auto rep = plan_projective_control(ctx, SpectralField(ctx.solver.grid), {0, 0}, v0,
                                             vt, 0.1);
    CHECK(rep.pass);
    CHECK(rep.error_components.back() < 0.1);
}

TEST_CASE("two-point planner: trivial target passes") {
    auto ctx = make_ctx();
    const auto rep = plan_twopoint_control(ctx, SpectralField(ctx.solver.grid), {0, 0},
                                           {kPi / 2, 0.0}, 0.1);
    CHECK(rep.pass);
}

TEST_CASE("two-point planner: antipodal Figure-B.2 case") {
    auto ctx = make_ctx();
    const auto rep = plan_twopoint_control(ctx, SpectralField(ctx.solver.grid), {0, 0},
                                           {kPi, 0.0}, 0.1);
    CHECK(rep.pass);
    // the workable-region maneuver strictly decreased the obstruction
    CHECK(rep.log.at("obstruction_after") < rep.log.at("obstruction_before"));
}

TEST_CASE("two-point planner: near-diagonal start separates past the threshold") {
    auto ctx = make_ctx();
    const auto rep = plan_twopoint_control(ctx, SpectralField(ctx.solver.grid), {0.3, 0.2},
                                           {0.3 + 1e-3, 0.2}, 0.1);
    CHECK(rep.pass);
    CHECK(rep.log.at("separation_achieved") >=
          1.0 / (100.0 * ctx.solver.forcing.max_mode_norm()));
    CHECK(rep.log.at("separation_iterations") >= 1);
}

TEST_CASE("jacobian growth planner") {
    auto ctx = make_ctx();
    SUBCASE("M = 1 is a trivial pass") {
        const auto rep = plan_jacobian_growth(ctx, 1.0);
        CHECK(rep.pass);
        CHECK(rep.log.at("T") == 0.0);
    }
    SUBCASE("M = 10 with the field-smallness constraint") {
        const auto rep = plan_jacobian_growth(ctx, 10.0);
        CHECK(rep.pass);
        CHECK(rep.error_components[0] < 0.2);            // ||u_T||_{H5}
        CHECK(rep.log.at("achieved_jacobian_norm") > 10.0);
    }
    SUBCASE("T(M) grows linearly in M for the nilpotent shear") {
        // the exact construction gives |A_T| ~ theta(T), theta asymptotically
        // linear, so T(2M)/T(M) -> 2 (not additive)
        const double t10 = plan_jacobian_growth(ctx, 10.0).log.at("T");
        const double t20 = plan_jacobian_growth(ctx, 20.0).log.at("T");
        const double t40 = plan_jacobian_growth(ctx, 40.0).log.at("T");
        CHECK(t20 / t10 == doctest::Approx(2.0).epsilon(0.15));
        CHECK(t40 / t20 == doctest::Approx(2.0).epsilon(0.15));
    }
}

TEST_CASE("program perturbation robustness near half-eps") {
    // eps/2-scale perturbations of a verified plan keep the endpoint inside eps
    auto ctx = make_ctx();
    const DiffeoStep step{{1, 1}, 1.0};
    const Vec2 x0{0.2, 0.1};
    const Vec2 ideal = flow_diffeo(step, x0);
    const ControlProgram prog = realize_diffeo(ctx, step);
    for (int trial = 0; trial < 10; ++trial) {
        // perturb rates multiplicatively by up to 1%
        std::vector<std::vector<double>> rates = prog.rates();
        for (auto& row : rates)
            for (auto& r : row)
                r = std::clamp(r * (1.0 + 0.01 * uniform_draw(13, 0, trial, 0, -1.0, 1.0)),
                               -1.0, 1.0);
        ControlProgram pert(prog.breakpoints(), rates);
        CoupledState s;
        s.vorticity = {SpectralField(ctx.solver.grid), 0.0};
        s.point = OnePoint{x0};
        ControlTarget target;
        target.x = ideal;
        const auto rep = verify_control(ctx, pert, s, target, 0.1);
        CHECK(rep.pass);
    }
}
