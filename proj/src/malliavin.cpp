#include "snsmix/malliavin.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>

#include "snsmix/fft.hpp"

namespace snsmix {

int GalerkinSpec::tm_ambient_dim() const {
    switch (variant) {
        case ProcessVariant::Base: return 0;
        case ProcessVariant::OnePoint: return 2;
        case ProcessVariant::Projective: return 3;
        case ProcessVariant::TwoPoint:
        case ProcessVariant::Tangent: return 4;
        case ProcessVariant::Jacobian: return 6;
    }
    return 0;
}

int GalerkinSpec::tm_tangent_dim() const {
    return variant == ProcessVariant::Jacobian ? 5 : tm_ambient_dim();
}

std::vector<WaveIndex> galerkin_modes(int k_max) {
    std::vector<WaveIndex> modes;
    for (int kx = -k_max; kx <= k_max; ++kx)
        for (int ky = -k_max; ky <= k_max; ++ky) {
            if (kx == 0 && ky == 0) continue;
            if (double(kx) * kx + double(ky) * ky > double(k_max) * k_max) continue;
            modes.push_back({kx, ky});
        }
    std::sort(modes.begin(), modes.end(), WaveIndexLess{});
    return modes;
}

double direction_inner(const DirectionVector& a, const DirectionVector& b, int n_exponent) {
    const int n = a.h.n();
    const auto& ca = a.h.raw();
    const auto& cb = b.h.raw();
    double acc = 0.0;
    for (int ia = 0; ia < n; ++ia) {
        const int kx = ia <= n / 2 ? ia : ia - n;
        for (int ib = 0; ib < n; ++ib) {
            const int ky = ib <= n / 2 ? ib : ib - n;
            if (kx == 0 && ky == 0) continue;
            const std::size_t i = static_cast<std::size_t>(ia) * n + ib;
            const double m = ca[i].real() * cb[i].real() + ca[i].imag() * cb[i].imag();
            if (m == 0.0) continue;
            acc += std::pow(double(kx) * kx + double(ky) * ky, n_exponent) * m;
        }
    }
    double out = kTwoPi * kTwoPi * acc;
    if (a.tm.size() > 0) out += a.tm.dot(b.tm);
    return out;
}

// --- base paths -------------------------------------------------------------------

namespace {

ManifoldPoint initial_point(ProcessVariant variant, std::uint64_t seed,
                            std::uint64_t trajectory) {
    NoiseStream init{seed, trajectory, ~0ull};
    const Vec2 x{init.uniform(kLaneInitSampling, -kPi, kPi),
                 init.uniform(kLaneInitSampling + 1, -kPi, kPi)};
    const double th = init.uniform(kLaneInitSampling + 2, 0.0, kTwoPi);
    const Vec2 dir{std::cos(th), std::sin(th)};
    switch (variant) {
        case ProcessVariant::Base:
        case ProcessVariant::OnePoint: return OnePoint{x};
        case ProcessVariant::TwoPoint: return make_two_point(x, x + 0.5 * dir);
        case ProcessVariant::Tangent: return Tangent{x, dir};
        case ProcessVariant::Projective: return Projective{x, dir};
        case ProcessVariant::Jacobian: return JacobianPt{x};
    }
    return OnePoint{x};
}

}  // namespace

BasePath simulate_base_path(const SolverConfig& cfg, const EvalScheme& scheme,
                            ProcessVariant variant, int steps, std::uint64_t seed,
                            std::uint64_t trajectory, double spin_up, bool deterministic) {
    BasePath path;
    path.cfg = cfg;
    path.scheme = scheme;
    CoupledStepper stepper(cfg, scheme);
    CoupledState s;
    s.vorticity = {SpectralField(cfg.grid), 0.0};
    s.point = initial_point(variant, seed, trajectory);
    NoiseStream noise{seed, trajectory, 0};
    const int spin_steps = static_cast<int>(std::lround(spin_up / cfg.dt));
    for (int i = 0; i < spin_steps; ++i) stepper.step_stochastic(s, noise);
    s.vorticity.t = 0.0;
    path.states.reserve(static_cast<std::size_t>(steps) + 1);
    path.states.push_back(s);
    for (int i = 0; i < steps; ++i) {
        if (deterministic)
            stepper.step_decay(s);
        else
            stepper.step_stochastic(s, noise);
        path.states.push_back(s);
    }
    return path;
}

BasePath zero_base_path(const SolverConfig& cfg, ProcessVariant variant, int steps) {
    BasePath path;
    path.cfg = cfg;
    CoupledState s;
    s.vorticity = {SpectralField(cfg.grid), 0.0};
    s.point = variant == ProcessVariant::TwoPoint
                  ? ManifoldPoint(make_two_point({0.0, 0.0}, {1.0, 0.0}))
                  : initial_point(variant, 0, 0);
    // pin the point at a fixed location for reproducible closed forms
    if (auto* op = std::get_if<OnePoint>(&s.point)) op->x = Vec2::Zero();
    for (int i = 0; i <= steps; ++i) {
        s.vorticity.t = i * cfg.dt;
        path.states.push_back(s);
    }
    return path;
}

// --- linearized step -----------------------------------------------------------------

namespace {

struct OmegaCache {
    std::vector<std::complex<double>> u1, u2, w1, w2;  // physical u and grad omega
    std::optional<VelocitySampler> sampler;

    void build(const SpectralField& omega, const EvalScheme& scheme) {
        const VelocityField u = biot_savart(omega);
        to_physical(u.u1, u1);
        to_physical(u.u2, u2);
        to_physical(derivative(omega, 0), w1);
        to_physical(derivative(omega, 1), w2);
        sampler.emplace(omega, scheme);
    }
};

/// -(u_omega . grad phi) - (u_phi . grad omega), dealiased and mean-zero.
SpectralField lin_rhs(const SpectralField& phi, const OmegaCache& c) {
    const GridSpec& grid = phi.grid();
    const int n = grid.n;
    const VelocityField uphi = biot_savart(phi);
    std::vector<std::complex<double>> p1, p2, g1, g2;
    to_physical(uphi.u1, p1);
    to_physical(uphi.u2, p2);
    to_physical(derivative(phi, 0), g1);
    to_physical(derivative(phi, 1), g2);
    std::vector<std::complex<double>> prod(static_cast<std::size_t>(n) * n);
    for (std::size_t i = 0; i < prod.size(); ++i) {
        const double v = c.u1[i].real() * g1[i].real() + c.u2[i].real() * g2[i].real() +
                         p1[i].real() * c.w1[i].real() + p2[i].real() * c.w2[i].real();
        prod[i] = -v;
    }
    return from_physical(grid, prod);
}

void confine_to_ball(SpectralField& f, int k_max) {
    const int n = f.n();
    auto& raw = f.raw();
    const double k2max = double(k_max) * k_max;
    for (int a = 0; a < n; ++a) {
        const int kx = a <= n / 2 ? a : a - n;
        for (int b = 0; b < n; ++b) {
            const int ky = b <= n / 2 ? b : b - n;
            if (double(kx) * kx + double(ky) * ky > k2max)
                raw[static_cast<std::size_t>(a) * n + b] = {0.0, 0.0};
        }
    }
}

Eigen::Vector2d contract_hess(const VelocityJet& jet, const Vec2& a, const Vec2& b) {
    Eigen::Vector2d out;
    for (int c = 0; c < 2; ++c) {
        double acc = 0.0;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) acc += a[i] * b[j] * jet.hess[i][j][c];
        out[c] = acc;
    }
    return out;
}

/// Ambient tm derivative for the linearization rows of eq. for (phi, y, p, B).
Eigen::VectorXd tm_rhs(const GalerkinSpec& spec, const Eigen::VectorXd& tm,
                       const ManifoldPoint& base, const VelocitySampler& s_omega,
                       const VelocitySampler& s_phi) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(tm.size());
    switch (spec.variant) {
        case ProcessVariant::Base: break;
        case ProcessVariant::OnePoint: {
            const auto& bp = std::get<OnePoint>(base);
            const VelocityJet jo = s_omega.eval(bp.x);
            const VelocityJet jp = s_phi.eval(bp.x);
            const Vec2 y{tm[0], tm[1]};
            out.head<2>() = jo.grad.transpose() * y + jp.u;
            break;
        }
        case ProcessVariant::TwoPoint: {
            const auto& bp = std::get<TwoPoint>(base);
            const VelocityJet jox = s_omega.eval(bp.x);
            const VelocityJet joy = s_omega.eval(bp.y);
            const VelocityJet jpx = s_phi.eval(bp.x);
            const VelocityJet jpy = s_phi.eval(bp.y);
            const Vec2 yx{tm[0], tm[1]}, yy{tm[2], tm[3]};
            out.head<2>() = jox.grad.transpose() * yx + jpx.u;
            out.tail<2>() = joy.grad.transpose() * yy + jpy.u;
            break;
        }
        case ProcessVariant::Tangent: {
            const auto& bp = std::get<Tangent>(base);
            const VelocityJet jo = s_omega.eval(bp.x);
            const VelocityJet jp = s_phi.eval(bp.x);
            const Vec2 y{tm[0], tm[1]}, p{tm[2], tm[3]};
            out.head<2>() = jo.grad.transpose() * y + jp.u;
            out.tail<2>() = jo.grad.transpose() * p + contract_hess(jo, bp.tau, y) +
                            jp.grad.transpose() * bp.tau;
            break;
        }
        case ProcessVariant::Projective: {
            const auto& bp = std::get<Projective>(base);
            const VelocityJet jo = s_omega.eval(bp.x);
            const VelocityJet jp = s_phi.eval(bp.x);
            const Vec2 y{tm[0], tm[1]};
            const double w = tm[2];
            const Vec2 v = bp.v;
            const Vec2 vperp{-v[1], v[0]};
            out.head<2>() = jo.grad.transpose() * y + jp.u;
            const Vec2 forcing = contract_hess(jo, v, y) + jp.grad.transpose() * v;
            out[2] = w * (vperp.dot(jo.grad * vperp) - v.dot(jo.grad * v)) +
                     forcing.dot(vperp);
            break;
        }
        case ProcessVariant::Jacobian: {
            const auto& bp = std::get<JacobianPt>(base);
            const Mat2 A = bp.matrix();
            const VelocityJet jo = s_omega.eval(bp.x);
            const VelocityJet jp = s_phi.eval(bp.x);
            const Vec2 y{tm[0], tm[1]};
            Mat2 B;
            B << tm[2], tm[3], tm[4], tm[5];
            out.head<2>() = jo.grad.transpose() * y + jp.u;
            Mat2 DG;  // (y . grad) grad u
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    DG(i, j) = y[0] * jo.hess[0][i][j] + y[1] * jo.hess[1][i][j];
            const Mat2 Bdot = B * jo.grad + A * DG + A * jp.grad;
            out[2] = Bdot(0, 0);
            out[3] = Bdot(0, 1);
            out[4] = Bdot(1, 0);
            out[5] = Bdot(1, 1);
            break;
        }
    }
    return out;
}

/// Base-point Heun predictor consistent with the coupled stepper's stages.
ManifoldPoint base_stage_point(const ManifoldPoint& base, const VelocitySampler& s_omega,
                               double dt) {
    ManifoldPoint stage = base;
    if (auto* op = std::get_if<OnePoint>(&stage)) {
        op->x += dt * s_omega.eval(op->x).u;
    } else if (auto* tp = std::get_if<TwoPoint>(&stage)) {
        tp->x += dt * s_omega.eval(tp->x).u;
        tp->y += dt * s_omega.eval(tp->y).u;
    } else if (auto* tg = std::get_if<Tangent>(&stage)) {
        const VelocityJet j = s_omega.eval(tg->x);
        tg->tau += dt * (j.grad.transpose() * tg->tau);
        tg->x += dt * j.u;
    } else if (auto* pj = std::get_if<Projective>(&stage)) {
        const VelocityJet j = s_omega.eval(pj->x);
        const Vec2 vperp{-pj->v[1], pj->v[0]};
        pj->v += dt * (pj->v.dot(j.grad * vperp)) * vperp;
        pj->x += dt * j.u;
    } else if (auto* jc = std::get_if<JacobianPt>(&stage)) {
        const VelocityJet j = s_omega.eval(jc->x);
        const Mat2 A = jc->matrix();
        *jc = JacobianPt::from_matrix(jc->x + dt * j.u, A + dt * (A * j.grad));
    }
    return stage;
}

struct LinearizedStepper {
    const BasePath& path;
    const GalerkinSpec& spec;
    OmegaCache cache_old, cache_pred, cache_new;
    std::vector<double> ifac;
    int built_for = -1;

    LinearizedStepper(const BasePath& p, const GalerkinSpec& sp) : path(p), spec(sp) {
        const int n = p.cfg.grid.n;
        ifac.resize(static_cast<std::size_t>(n) * n);
        for (int a = 0; a < n; ++a) {
            const int kx = a <= n / 2 ? a : a - n;
            for (int b = 0; b < n; ++b) {
                const int ky = b <= n / 2 ? b : b - n;
                ifac[static_cast<std::size_t>(a) * n + b] =
                    std::exp(-p.cfg.nu * (double(kx) * kx + double(ky) * ky) * p.cfg.dt);
            }
        }
    }

    void prepare(int step_index) {
        if (built_for == step_index) return;
        // reuse the previous new-cache as the next old-cache when marching
        if (built_for == step_index - 1 && built_for >= 0) {
            std::swap(cache_old, cache_new);
        } else {
            cache_old.build(path.states[static_cast<std::size_t>(step_index)].vorticity.omega,
                            path.scheme);
        }
        // base Heun predictor stage: the second field stage of the scheme is
        // evaluated there, so its tangent must be too
        {
            const SpectralField& w =
                path.states[static_cast<std::size_t>(step_index)].vorticity.omega;
            SpectralField k1 = nonlinear_term(w);
            k1 *= -1.0;
            SpectralField pred = w;
            pred.axpy(path.cfg.dt, k1);
            auto& raw = pred.raw();
            for (std::size_t i = 0; i < raw.size(); ++i) raw[i] *= ifac[i];
            cache_pred.build(pred, path.scheme);
        }
        cache_new.build(path.states[static_cast<std::size_t>(step_index) + 1].vorticity.omega,
                        path.scheme);
        built_for = step_index;
    }

    void advance(DirectionVector& dir, int step_index) {
        prepare(step_index);
        const double dt = path.cfg.dt;
        const auto& base = path.states[static_cast<std::size_t>(step_index)].point;

        SpectralField L1 = lin_rhs(dir.h, cache_old);
        SpectralField stage = dir.h;
        stage.axpy(dt, L1);
        {
            auto& raw = stage.raw();
            for (std::size_t i = 0; i < raw.size(); ++i) raw[i] *= ifac[i];
        }
        SpectralField L2 = lin_rhs(stage, cache_pred);

        Eigen::VectorXd F1, F2;
        const SpectralField phi_old = dir.tm.size() > 0 ? dir.h : SpectralField(path.cfg.grid);

        auto& h = dir.h.raw();
        const auto& r1 = L1.raw();
        const auto& r2 = L2.raw();
        for (std::size_t i = 0; i < h.size(); ++i)
            h[i] = ifac[i] * (h[i] + 0.5 * dt * r1[i]) + 0.5 * dt * r2[i];
        confine_to_ball(dir.h, spec.k_max);

        if (dir.tm.size() > 0) {
            // exact tangent of the coupled scheme: the particle stage 1 sees
            // (omega_n, phi_n), stage 2 sees (omega_{n+1}, phi_{n+1})
            const VelocitySampler s_phi_old(phi_old, path.scheme);
            F1 = tm_rhs(spec, dir.tm, base, *cache_old.sampler, s_phi_old);
            const ManifoldPoint bstage = base_stage_point(base, *cache_old.sampler, dt);
            const Eigen::VectorXd tm_stage = dir.tm + dt * F1;
            const VelocitySampler s_phi_new(dir.h, path.scheme);
            F2 = tm_rhs(spec, tm_stage, bstage, *cache_new.sampler, s_phi_new);
            dir.tm += 0.5 * dt * (F1 + F2);
        }
    }
};

void check_direction(const DirectionVector& dir, const GalerkinSpec& spec) {
    if (dir.tm.size() != spec.tm_ambient_dim())
        throw VariantError("direction tm size does not match the spec variant");
}

std::vector<Eigen::VectorXd> tm_tangent_basis(const GalerkinSpec& spec,
                                              const CoupledState& at) {
    std::vector<Eigen::VectorXd> basis;
    const int d = spec.tm_ambient_dim();
    if (spec.variant == ProcessVariant::Jacobian) {
        const Mat2 A = std::get<JacobianPt>(at.point).matrix();
        for (int i = 0; i < 2; ++i) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
            v[i] = 1.0;
            basis.push_back(v);
        }
        // sl(2) pushed forward by A, Gram-Schmidt in Frobenius
        std::vector<Mat2> H(3);
        H[0] << 1, 0, 0, -1;
        H[1] << 0, 1, 0, 0;
        H[2] << 0, 0, 1, 0;
        std::vector<Eigen::VectorXd> got;
        for (const auto& Hi : H) {
            const Mat2 B = A * Hi;
            Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
            v[2] = B(0, 0);
            v[3] = B(0, 1);
            v[4] = B(1, 0);
            v[5] = B(1, 1);
            for (const auto& q : got) v -= q.dot(v) * q;
            const double n = v.norm();
            if (n > 1e-12) {
                v /= n;
                got.push_back(v);
            }
        }
        basis.insert(basis.end(), got.begin(), got.end());
    } else {
        for (int i = 0; i < d; ++i) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
            v[i] = 1.0;
            basis.push_back(v);
        }
    }
    return basis;
}

}  // namespace

void linearize_step(DirectionVector& dir, const BasePath& path, int step_index,
                    const GalerkinSpec& spec) {
    check_direction(dir, spec);
    if (variant_of(path.states.front().point) != spec.variant &&
        spec.variant != ProcessVariant::Base)
        throw VariantError("base path variant does not match the spec");
    if (step_index < 0 || step_index >= path.steps())
        throw ConfigError("linearize_step: step index outside the stored path");
    LinearizedStepper ls(path, spec);
    ls.advance(dir, step_index);
}

Eigen::MatrixXd build_propagator(const BasePath& path, int i0, int i1,
                                 const GalerkinSpec& spec) {
    const auto modes = galerkin_modes(spec.k_max);
    const int dim = static_cast<int>(modes.size()) + spec.tm_ambient_dim();
    if (dim > 4096) throw DimensionError("build_propagator: dim > 4096");
    if (i0 < 0 || i1 > path.steps() || i0 > i1)
        throw ConfigError("build_propagator: bad step range");

    Eigen::MatrixXd J(dim, dim);
    LinearizedStepper ls(path, spec);
    const int tm_dim = spec.tm_ambient_dim();
    for (int col = 0; col < dim; ++col) {
        DirectionVector dir{SpectralField(path.cfg.grid), Eigen::VectorXd::Zero(tm_dim)};
        if (col < static_cast<int>(modes.size()))
            dir.h = make_basis_mode(modes[static_cast<std::size_t>(col)], path.cfg.grid);
        else
            dir.tm[col - static_cast<int>(modes.size())] = 1.0;
        for (int i = i0; i < i1; ++i) ls.advance(dir, i);
        for (int row = 0; row < static_cast<int>(modes.size()); ++row) {
            const WaveIndex& k = modes[static_cast<std::size_t>(row)];
            const std::complex<double> c = dir.h.coeff(k);
            J(row, col) = k.lex_positive() ? -2.0 * c.imag() : 2.0 * c.real();
        }
        for (int r = 0; r < tm_dim; ++r) J(static_cast<int>(modes.size()) + r, col) = dir.tm[r];
    }
    return J;
}

MalliavinMatrix assemble_malliavin(const BasePath& path, const GalerkinSpec& spec,
                                   int quad_points) {
    const auto modes = galerkin_modes(spec.k_max);
    MalliavinMatrix out;
    out.modes = modes;
    out.T = path.horizon();
    for (const auto& k : modes)
        out.gram_diag.push_back(2.0 * kPi * kPi * std::pow(k.norm2(), spec.inner_exponent));
    out.tm_basis = tm_tangent_basis(spec, path.states.back());
    out.tm_dim = static_cast<int>(out.tm_basis.size());
    const int dim = static_cast<int>(modes.size()) + out.tm_dim;
    if (dim > 4096) throw DimensionError("assemble_malliavin: dim > 4096");
    out.spec_hash = fnv1a(std::to_string(spec.k_max) + ":" + std::to_string(spec.inner_exponent) +
                          ":" + std::to_string(static_cast<int>(spec.variant)) + ":" +
                          std::to_string(path.cfg.nu) + ":" + std::to_string(path.cfg.dt));
    out.M = Eigen::MatrixXd::Zero(dim, dim);

    // forced modes must be inside the Galerkin ball
    for (const auto& k : path.cfg.forcing.modes)
        if (k.norm2() > double(spec.k_max) * spec.k_max)
            throw ConfigError("assemble_malliavin: forced mode outside Galerkin ball");

    // composite Boole on step-aligned uniform nodes
    int m = quad_points;
    if (m < 5) m = 5;
    if ((m - 1) % 4 != 0) m += 4 - (m - 1) % 4;
    const int steps = path.steps();
    if (steps % (m - 1) != 0)
        throw ConfigError("assemble_malliavin: path steps (" + std::to_string(steps) +
                          ") must be a multiple of quad intervals (" + std::to_string(m - 1) +
                          ")");
    const int stride = steps / (m - 1);
    const double h = stride * path.cfg.dt;
    out.quad_points = m;
    out.quad_weights.assign(static_cast<std::size_t>(m), 0.0);
    static const double boole[5] = {7.0, 32.0, 12.0, 32.0, 7.0};
    for (int b = 0; b + 4 < m; b += 4)
        for (int j = 0; j < 5; ++j)
            out.quad_weights[static_cast<std::size_t>(b + j)] += 2.0 * h / 45.0 * boole[j];

    const int tm_dim_ambient = spec.tm_ambient_dim();
    const std::size_t nf = path.cfg.forcing.size();
    std::vector<DirectionVector> bundle;
    std::vector<int> bundle_node;
    out.propagated.assign(static_cast<std::size_t>(m), {});
    LinearizedStepper ls(path, spec);

    auto coords_of = [&](const DirectionVector& d) {
        Eigen::VectorXd q(dim);
        for (int row = 0; row < static_cast<int>(modes.size()); ++row) {
            const WaveIndex& k = modes[static_cast<std::size_t>(row)];
            const std::complex<double> c = d.h.coeff(k);
            const double coeff = k.lex_positive() ? -2.0 * c.imag() : 2.0 * c.real();
            q[row] = out.gram_diag[static_cast<std::size_t>(row)] * coeff;
        }
        for (int r = 0; r < out.tm_dim; ++r)
            q[static_cast<int>(modes.size()) + r] =
                d.tm.size() > 0 ? out.tm_basis[static_cast<std::size_t>(r)].dot(d.tm) : 0.0;
        return q;
    };

    for (int s = 0; s <= steps; ++s) {
        if (s % stride == 0 && s < steps) {
            for (std::size_t f = 0; f < nf; ++f) {
                bundle.push_back(
                    {make_basis_mode(path.cfg.forcing.modes[f], path.cfg.grid),
                     Eigen::VectorXd::Zero(tm_dim_ambient)});
                bundle_node.push_back(s / stride);
            }
        }
        if (s == steps) break;
        for (auto& d : bundle) ls.advance(d, s);
    }
    // final node: J_{T,T} e_f = e_f
    for (std::size_t f = 0; f < nf; ++f) {
        bundle.push_back({make_basis_mode(path.cfg.forcing.modes[f], path.cfg.grid),
                          Eigen::VectorXd::Zero(tm_dim_ambient)});
        bundle_node.push_back(m - 1);
    }

    for (std::size_t i = 0; i < bundle.size(); ++i) {
        const std::size_t f = i % nf;
        const double c = path.cfg.forcing.amps[f];
        const Eigen::VectorXd q = coords_of(bundle[i]);
        const double w = out.quad_weights[static_cast<std::size_t>(bundle_node[i])];
        out.M.noalias() += (c * c * w) * (q * q.transpose());
        out.propagated[static_cast<std::size_t>(bundle_node[i])].push_back(q);
    }
    out.M = 0.5 * (out.M + out.M.transpose()).eval();
    return out;
}

double projected_min_eigen(const MalliavinMatrix& M, int R) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < M.modes.size(); ++i)
        if (M.modes[i].norm2() <= double(R) * R) idx.push_back(static_cast<int>(i));
    const int nm = static_cast<int>(M.modes.size());
    for (int r = 0; r < M.tm_dim; ++r) idx.push_back(nm + r);
    if (idx.empty()) throw ConfigError("projected_min_eigen: empty projection");
    const int d = static_cast<int>(idx.size());
    Eigen::MatrixXd S(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            const double ga = idx[static_cast<std::size_t>(a)] < nm
                                  ? M.gram_diag[static_cast<std::size_t>(
                                        idx[static_cast<std::size_t>(a)])]
                                  : 1.0;
            const double gb = idx[static_cast<std::size_t>(b)] < nm
                                  ? M.gram_diag[static_cast<std::size_t>(
                                        idx[static_cast<std::size_t>(b)])]
                                  : 1.0;
            S(a, b) = M.M(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]) /
                      std::sqrt(ga * gb);
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    return eig.eigenvalues().minCoeff();
}

Eigen::VectorXd theta_direction(const WaveIndex& k, const GalerkinSpec& spec,
                                const CoupledState& base) {
    int n = 8;
    while (n / 2 - 1 < std::max(std::abs(k.kx), std::abs(k.ky))) n *= 2;
    const GridSpec tiny{n, 1.0};
    const VelocitySampler s(make_basis_mode(k, tiny), EvalScheme{EvalMode::DirectSum, 4});
    Eigen::VectorXd out = Eigen::VectorXd::Zero(spec.tm_ambient_dim());
    switch (spec.variant) {
        case ProcessVariant::Base: break;
        case ProcessVariant::OnePoint: {
            out.head<2>() = s.eval(std::get<OnePoint>(base.point).x).u;
            break;
        }
        case ProcessVariant::TwoPoint: {
            const auto& tp = std::get<TwoPoint>(base.point);
            out.head<2>() = s.eval(tp.x).u;
            out.tail<2>() = s.eval(tp.y).u;
            break;
        }
        case ProcessVariant::Tangent: {
            const auto& tg = std::get<Tangent>(base.point);
            const VelocityJet j = s.eval(tg.x);
            out.head<2>() = j.u;
            out.tail<2>() = j.grad.transpose() * tg.tau;
            break;
        }
        case ProcessVariant::Projective: {
            const auto& pj = std::get<Projective>(base.point);
            const VelocityJet j = s.eval(pj.x);
            const Vec2 vperp{-pj.v[1], pj.v[0]};
            out.head<2>() = j.u;
            out[2] = pj.v.dot(j.grad * vperp);
            break;
        }
        case ProcessVariant::Jacobian: {
            const auto& jc = std::get<JacobianPt>(base.point);
            const VelocityJet j = s.eval(jc.x);
            out.head<2>() = j.u;
            const Mat2 B = jc.matrix() * j.grad;
            out[2] = B(0, 0);
            out[3] = B(0, 1);
            out[4] = B(1, 0);
            out[5] = B(1, 1);
            break;
        }
    }
    return out;
}

void write_matrix(std::ostream& os, const MalliavinMatrix& M) {
    os.write("SNSM", 4);
    const std::uint32_t dim = static_cast<std::uint32_t>(M.M.rows());
    os.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    os.write(reinterpret_cast<const char*>(&M.T), sizeof(M.T));
    os.write(reinterpret_cast<const char*>(&M.spec_hash), sizeof(M.spec_hash));
    for (int r = 0; r < M.M.rows(); ++r)
        for (int c = 0; c < M.M.cols(); ++c) {
            const double v = M.M(r, c);
            os.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
}

}  // namespace snsmix
