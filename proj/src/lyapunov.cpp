#include "snsmix/lyapunov.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <thread>

namespace snsmix {

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

EstimateWithCI make_estimate(const std::vector<double>& samples) {
    EstimateWithCI e;
    e.n_samples = static_cast<int>(samples.size());
    if (samples.empty()) return e;
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= samples.size();
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var = samples.size() > 1 ? var / (samples.size() - 1) : 0.0;
    e.value = mean;
    e.stderr_ = std::sqrt(var / samples.size());
    e.ci_lo = mean - 1.96 * e.stderr_;
    e.ci_hi = mean + 1.96 * e.stderr_;
    return e;
}

namespace {

Vec2 random_point(std::uint64_t seed, std::uint64_t traj) {
    NoiseStream init{seed, traj, ~0ull};
    return {init.uniform(kLaneInitSampling, -kPi, kPi),
            init.uniform(kLaneInitSampling + 1, -kPi, kPi)};
}

Vec2 random_direction(std::uint64_t seed, std::uint64_t traj) {
    NoiseStream init{seed, traj, ~0ull};
    const double th = init.uniform(kLaneInitSampling + 2, 0.0, kTwoPi);
    return {std::cos(th), std::sin(th)};
}

}  // namespace

// --- lambda estimators -------------------------------------------------------------

LambdaReport estimate_lambda_jacobian(const LyapunovConfig& cfg, int threads) {
    const int burn_steps = static_cast<int>(std::lround(cfg.burn_in / cfg.solver.dt));
    const int steps = static_cast<int>(std::lround(cfg.horizon / cfg.solver.dt));
    std::vector<double> full(static_cast<std::size_t>(cfg.ensemble));
    std::vector<double> half(static_cast<std::size_t>(cfg.ensemble));
    parallel_for(cfg.ensemble, threads, [&](int traj) {
        CoupledStepper stepper(cfg.solver, cfg.scheme);
        CoupledState s;
        s.vorticity = {SpectralField(cfg.solver.grid), 0.0};
        s.point = JacobianPt{random_point(cfg.seed, traj)};
        NoiseStream noise{cfg.seed, static_cast<std::uint64_t>(traj), 0};
        for (int i = 0; i < burn_steps; ++i) {
            stepper.step_stochastic(s, noise);
            renormalize(s, cfg.renorm_threshold);
        }
        {
            auto& jc = std::get<JacobianPt>(s.point);
            jc = JacobianPt{jc.x};
        }
        s.log_accum = 0.0;
        double at_half = 0.0;
        for (int i = 1; i <= steps; ++i) {
            stepper.step_stochastic(s, noise);
            renormalize(s, cfg.renorm_threshold);
            if (i == steps / 2)
                at_half = std::get<JacobianPt>(s.point).log_opnorm() + s.log_accum;
        }
        const double at_full = std::get<JacobianPt>(s.point).log_opnorm() + s.log_accum;
        full[static_cast<std::size_t>(traj)] = at_full / cfg.horizon;
        half[static_cast<std::size_t>(traj)] = at_half / (0.5 * cfg.horizon);
    });
    LambdaReport rep;
    rep.per_trajectory = full;
    rep.estimate = make_estimate(full);
    rep.half_estimate = make_estimate(half);
    return rep;
}

LambdaReport estimate_lambda_projective(const LyapunovConfig& cfg, int threads) {
    const int burn_steps = static_cast<int>(std::lround(cfg.burn_in / cfg.solver.dt));
    const int steps = static_cast<int>(std::lround(cfg.horizon / cfg.solver.dt));
    std::vector<double> full(static_cast<std::size_t>(cfg.ensemble));
    std::vector<double> half(static_cast<std::size_t>(cfg.ensemble));
    parallel_for(cfg.ensemble, threads, [&](int traj) {
        SnsStepper field(cfg.solver);
        VorticityState w{SpectralField(cfg.solver.grid), 0.0};
        NoiseStream noise{cfg.seed, static_cast<std::uint64_t>(traj), 0};
        ManifoldPoint p = Projective{random_point(cfg.seed, traj),
                                     random_direction(cfg.seed, traj)};
        SpectralField prev = w.omega;
        for (int i = 0; i < burn_steps; ++i) {
            prev = w.omega;
            field.step_stochastic(w, noise);
            const VelocitySampler s1(prev, cfg.scheme);
            const VelocitySampler s2(w.omega, cfg.scheme);
            heun_advance_point(p, s1, s2, cfg.solver.dt);
        }
        // trapezoid in time of v . grad u(x) v
        auto rate = [&](const VelocitySampler& s) {
            const auto& pj = std::get<Projective>(p);
            const Vec2 vperp{-pj.v[1], pj.v[0]};
            const Mat2 G = s.eval(pj.x).grad;
            (void)vperp;
            return pj.v.dot(G * pj.v);
        };
        double integral = 0.0, at_half = 0.0;
        double rate_prev = rate(VelocitySampler(w.omega, cfg.scheme));
        for (int i = 1; i <= steps; ++i) {
            prev = w.omega;
            field.step_stochastic(w, noise);
            const VelocitySampler s1(prev, cfg.scheme);
            const VelocitySampler s2(w.omega, cfg.scheme);
            heun_advance_point(p, s1, s2, cfg.solver.dt);
            const double rate_cur = rate(s2);
            integral += 0.5 * (rate_prev + rate_cur) * cfg.solver.dt;
            rate_prev = rate_cur;
            if (i == steps / 2) at_half = integral;
        }
        full[static_cast<std::size_t>(traj)] = integral / cfg.horizon;
        half[static_cast<std::size_t>(traj)] = at_half / (0.5 * cfg.horizon);
    });
    LambdaReport rep;
    rep.per_trajectory = full;
    rep.estimate = make_estimate(full);
    rep.half_estimate = make_estimate(half);
    return rep;
}

double lambda_jacobian_synthetic(const Mat2& grad, const Vec2& x0, double T, double dt) {
    const VelocitySampler s = VelocitySampler::synthetic_linear(grad);
    CoupledState st;
    st.point = JacobianPt{x0};
    const int steps = static_cast<int>(std::lround(T / dt));
    for (int i = 0; i < steps; ++i) {
        CoupledStepper::advance_point_frozen(st.point, s, dt);
        renormalize(st, 1e6);
    }
    return (std::get<JacobianPt>(st.point).log_opnorm() + st.log_accum) / T;
}

double lambda_projective_synthetic(const Mat2& grad, Vec2 v0, double T, double dt) {
    const VelocitySampler s = VelocitySampler::synthetic_linear(grad);
    ManifoldPoint p = Projective{{0.0, 0.0}, v0.normalized()};
    const int steps = static_cast<int>(std::lround(T / dt));
    auto rate = [&] {
        const auto& pj = std::get<Projective>(p);
        return pj.v.dot(grad * pj.v);
    };
    double integral = 0.0;
    double prev = rate();
    for (int i = 0; i < steps; ++i) {
        CoupledStepper::advance_point_frozen(p, s, dt);
        const double cur = rate();
        integral += 0.5 * (prev + cur) * dt;
        prev = cur;
    }
    return integral / T;
}

// --- two-point geometry --------------------------------------------------------------

double twopoint_metric(const TwoPointTangent& v, const Vec2& x, const Vec2& y) {
    const double dist = torus_distance(x, y);
    if (dist == 0.0) throw DiagonalError("twopoint_metric: x = y");
    return sobolev_norm(v.omega_part, 4.0) + (v.vx + v.vy).norm() +
           (v.vx - v.vy).norm() / dist;
}

namespace {

/// Gauss-Legendre nodes/weights on [0,1] by Newton iteration on P_n.
void gauss_legendre_unit(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.resize(static_cast<std::size_t>(n));
    weights.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int j = 2; j <= n; ++j) {
                const double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            const double dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        double p0 = 1.0, p1 = x;
        for (int j = 2; j <= n; ++j) {
            const double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
            p0 = p1;
            p1 = p2;
        }
        const double dp = n * (x * p1 - p0) / (x * x - 1.0);
        nodes[static_cast<std::size_t>(n - 1 - i)] = 0.5 * (x + 1.0);
        weights[static_cast<std::size_t>(n - 1 - i)] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
}

}  // namespace

double d_chord(const TwoPointZ& z1, const TwoPointZ& z2, double sigma, double alpha,
               int quad_points) {
    std::vector<double> nodes, weights;
    gauss_legendre_unit(quad_points, nodes, weights);
    // chord displacements (minimal torus image for the endpoints)
    const Vec2 dx = torus_displacement(z1.x, z2.x);
    const Vec2 dy = torus_displacement(z1.y, z2.y);
    SpectralField domega = z2.omega;
    domega -= z1.omega;
    const double u_part = sobolev_norm(domega, 4.0);  // ||Delta u||_{H^5}
    const double sum_part = (dx + dy).norm();
    const Vec2 ddiff = dx - dy;

    // analytic diagonal-crossing check: the separation along the chord is
    // |d0 + s (dx - dy)| with d0 the initial displacement
    {
        const Vec2 d0 = torus_displacement(z1.x, z1.y);
        const Vec2 b = dx - dy;
        double smin = 0.0;
        if (b.squaredNorm() > 0.0) smin = std::clamp(d0.dot(b) / b.squaredNorm(), 0.0, 1.0);
        if ((d0 - smin * b).norm() < 1e-9)
            throw DiagonalError("d_chord: chord crosses the diagonal; perturb endpoints");
    }
    double acc = 0.0;
    SpectralField omega_s(z1.omega.grid());
    for (int q = 0; q < quad_points; ++q) {
        const double s = nodes[static_cast<std::size_t>(q)];
        const Vec2 xs = z1.x + s * dx;
        const Vec2 ys = z1.y + s * dy;
        const double sep = torus_distance(wrap_point(xs), wrap_point(ys));
        if (sep < 1e-12)
            throw DiagonalError("d_chord: chord crosses the diagonal; perturb endpoints");
        omega_s = z1.omega;
        omega_s *= (1.0 - s);
        omega_s.axpy(s, z2.omega);
        const double gamma_norm = u_part + sum_part + ddiff.norm() / sep;
        acc += weights[static_cast<std::size_t>(q)] * gamma_norm *
               std::exp(0.5 * lyapunov_V(omega_s, sigma, alpha));
    }
    return acc;
}

double d_beta(const TwoPointZ& z1, const TwoPointZ& z2, double beta, double sigma,
              double alpha, int quad_points) {
    if (!(beta > 0.0)) throw ConfigError("d_beta: beta > 0 required");
    return std::min(1.0, d_chord(z1, z2, sigma, alpha, quad_points) / beta);
}

// --- drift check ----------------------------------------------------------------------

DriftReport drift_check(const DriftConfig& cfg, int threads) {
    DriftReport rep;
    rep.p_grid = cfg.p_grid;
    for (int n = 1; n <= cfg.n_max; ++n) rep.n_grid.push_back(n);
    const int n_lags = cfg.n_max;
    const int steps_per_unit = static_cast<int>(std::lround(1.0 / cfg.solver.dt));
    const int spin_steps = static_cast<int>(std::lround(cfg.spin_up / cfg.solver.dt));

    // X[traj][lag] = log f_n - log f_0
    std::vector<std::vector<double>> X(static_cast<std::size_t>(cfg.ensemble),
                                       std::vector<double>(static_cast<std::size_t>(n_lags)));
    parallel_for(cfg.ensemble, threads, [&](int traj) {
        SnsStepper field(cfg.solver);
        VorticityState w{SpectralField(cfg.solver.grid), 0.0};
        NoiseStream noise{cfg.seed, static_cast<std::uint64_t>(traj), 0};
        for (int i = 0; i < spin_steps; ++i) field.step_stochastic(w, noise);
        // C_V filter: run the unforced equation until V <= c_v
        int guard = 0;
        while (lyapunov_V(w.omega, cfg.sigma, cfg.alpha) > cfg.c_v) {
            field.step_decay(w);
            if (++guard > 4000000) throw NumericalError("drift_check: decay filter stalled");
        }
        const Vec2 x0 = random_point(cfg.seed, traj);
        const Vec2 dir = random_direction(cfg.seed, traj);
        CoupledStepper stepper(cfg.solver, cfg.scheme);
        CoupledState s;
        s.vorticity = w;
        s.point = make_two_point(x0, x0 + cfg.r0 * dir);
        const double logf0 = lyapunov_V(w.omega, cfg.sigma, cfg.alpha) - std::log(cfg.r0);
        for (int lag = 1; lag <= n_lags; ++lag) {
            for (int i = 0; i < steps_per_unit; ++i) stepper.step_stochastic(s, noise);
            const auto& tp = std::get<TwoPoint>(s.point);
            const double logf =
                lyapunov_V(s.vorticity.omega, cfg.sigma, cfg.alpha) -
                std::log(torus_distance(tp.x, tp.y));
            X[static_cast<std::size_t>(traj)][static_cast<std::size_t>(lag - 1)] =
                logf - logf0;
        }
    });

    const std::size_t np = cfg.p_grid.size();
    rep.ratio.assign(np, std::vector<double>(static_cast<std::size_t>(n_lags), 0.0));
    rep.ci_lo = rep.ratio;
    rep.ci_hi = rep.ratio;
    std::vector<double> work(static_cast<std::size_t>(cfg.ensemble));
    for (std::size_t ip = 0; ip < np; ++ip) {
        const double p = cfg.p_grid[ip];
        for (int lag = 0; lag < n_lags; ++lag) {
            for (int i = 0; i < cfg.ensemble; ++i)
                work[static_cast<std::size_t>(i)] = std::exp(
                    p * X[static_cast<std::size_t>(i)][static_cast<std::size_t>(lag)]);
            double mean = 0.0;
            for (double v : work) mean += v;
            mean /= cfg.ensemble;
            rep.ratio[ip][static_cast<std::size_t>(lag)] = mean;
            // bootstrap percentile CI
            std::vector<double> boots(static_cast<std::size_t>(cfg.bootstrap));
            for (int b = 0; b < cfg.bootstrap; ++b) {
                double acc = 0.0;
                for (int i = 0; i < cfg.ensemble; ++i) {
                    const auto r = counter_hash(cfg.seed ^ 0xb00ull, b,
                                                static_cast<std::uint64_t>(lag * 1024 + i),
                                                static_cast<std::uint64_t>(ip));
                    acc += work[r % static_cast<std::uint64_t>(cfg.ensemble)];
                }
                boots[static_cast<std::size_t>(b)] = acc / cfg.ensemble;
            }
            std::sort(boots.begin(), boots.end());
            rep.ci_lo[ip][static_cast<std::size_t>(lag)] =
                boots[static_cast<std::size_t>(0.025 * (cfg.bootstrap - 1))];
            rep.ci_hi[ip][static_cast<std::size_t>(lag)] =
                boots[static_cast<std::size_t>(0.975 * (cfg.bootstrap - 1))];
            if (mean < 0.95 && rep.ci_hi[ip][static_cast<std::size_t>(lag)] < 1.0)
                rep.pass = true;
        }
    }
    return rep;
}

// --- correlation decay -----------------------------------------------------------------

CorrelationSeries correlation_decay(const CorrelationConfig& cfg, int threads) {
    const int sample_every =
        std::max(1, static_cast<int>(std::lround(cfg.sample_dt / cfg.solver.dt)));
    const int steps = static_cast<int>(std::lround(cfg.T / cfg.solver.dt));
    const int spin_steps = static_cast<int>(std::lround(cfg.spin_up / cfg.solver.dt));
    const int n_samples = steps / sample_every + 1;

    std::vector<std::vector<double>> vals(
        static_cast<std::size_t>(cfg.ensemble),
        std::vector<double>(static_cast<std::size_t>(n_samples), 0.0));
    parallel_for(cfg.ensemble, threads, [&](int traj) {
        SnsStepper field(cfg.solver);
        VorticityState w{SpectralField(cfg.solver.grid), 0.0};
        NoiseStream noise{cfg.seed, static_cast<std::uint64_t>(traj), 0};
        for (int i = 0; i < spin_steps; ++i) field.step_stochastic(w, noise);
        CoupledStepper stepper(cfg.solver, cfg.scheme);
        CoupledState s;
        s.vorticity = w;
        s.point = make_two_point(cfg.x0, cfg.y0);
        auto observable = [&] {
            const auto& tp = std::get<TwoPoint>(s.point);
            return eval_basis_mode(cfg.k, tp.x[0], tp.x[1]) *
                   eval_basis_mode(cfg.k, tp.y[0], tp.y[1]);
        };
        auto& row = vals[static_cast<std::size_t>(traj)];
        row[0] = observable();
        int slot = 1;
        for (int i = 1; i <= steps; ++i) {
            stepper.step_stochastic(s, noise);
            if (i % sample_every == 0) row[static_cast<std::size_t>(slot++)] = observable();
        }
    });

    CorrelationSeries series;
    for (int j = 0; j < n_samples; ++j) {
        std::vector<double> col(static_cast<std::size_t>(cfg.ensemble));
        for (int i = 0; i < cfg.ensemble; ++i)
            col[static_cast<std::size_t>(i)] = vals[static_cast<std::size_t>(i)]
                                                   [static_cast<std::size_t>(j)];
        const auto est = make_estimate(col);
        series.t.push_back(j * sample_every * cfg.solver.dt);
        series.mean.push_back(est.value);
        series.stderr_.push_back(est.stderr_);
    }
    return series;
}

}  // namespace snsmix
