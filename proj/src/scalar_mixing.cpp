#include "snsmix/scalar_mixing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "snsmix/lyapunov.hpp"

namespace snsmix {

void advect_scalar(ScalarState& phi, const SpectralField& omega_old,
                   const SpectralField& omega_new, double dt) {
    const VelocityField u1 = biot_savart(omega_old);
    const VelocityField u2 = biot_savart(omega_new);
    SpectralField k1 = advection_term(u1, phi.phi);
    k1 *= -1.0;
    SpectralField stage = phi.phi;
    stage.axpy(dt, k1);
    SpectralField k2 = advection_term(u2, stage);
    k2 *= -1.0;
    phi.phi.axpy(0.5 * dt, k1);
    phi.phi.axpy(0.5 * dt, k2);
    phi.t += dt;
    if (!phi.phi.all_finite()) throw BlowupError("scalar blow-up", phi.t);
}

void advect_scalar_forced(ScalarState& phi, const SpectralField& omega_old,
                          const SpectralField& omega_new, double dt, const SpectralField& g,
                          const NoiseStream& noise, std::uint64_t lane) {
    advect_scalar(phi, omega_old, omega_new, dt);
    const double xi = std::sqrt(dt) * noise.normal(lane);
    phi.phi.axpy(xi, g);
}

MixingFit mixing_rate_fit(const std::vector<double>& t, const std::vector<double>& norms,
                          double t0, double t1) {
    if (t.size() != norms.size()) throw FitError("mixing_rate_fit: size mismatch");
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < t0 || t[i] > t1) continue;
        if (!(norms[i] > 0.0)) throw FitError("mixing_rate_fit: nonpositive norm in window");
        xs.push_back(t[i]);
        ys.push_back(std::log(norms[i]));
    }
    if (xs.size() < 10) throw FitError("mixing_rate_fit: window holds fewer than 10 samples");
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
        syy += ys[i] * ys[i];
    }
    MixingFit fit;
    const double den = n * sxx - sx * sx;
    fit.rate = (n * sxy - sx * sy) / den;
    fit.logK = (sy - fit.rate * sx) / n;
    const double ss_tot = syy - sy * sy / n;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - (fit.logK + fit.rate * xs[i]);
        ss_res += r * r;
    }
    fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    fit.t0 = t0;
    fit.t1 = t1;
    return fit;
}

UniversalMixingReport universal_mixing_bound(const std::vector<ModeFit>& fits, int k_max) {
    UniversalMixingReport rep;
    double alpha = std::numeric_limits<double>::infinity();
    for (int kx = -k_max; kx <= k_max; ++kx) {
        for (int ky = -k_max; ky <= k_max; ++ky) {
            if (kx == 0 && ky == 0) continue;
            const double n2 = double(kx) * kx + double(ky) * ky;
            if (n2 > double(k_max) * k_max) continue;
            const ModeFit* found = nullptr;
            for (const auto& f : fits)
                if (f.k.kx == kx && f.k.ky == ky) {
                    found = &f;
                    break;
                }
            if (!found)
                throw CoverageError("universal_mixing_bound: missing mode (" +
                                    std::to_string(kx) + "," + std::to_string(ky) + ")");
            rep.K += std::pow(n2, -1.5) * found->prefactor;
            alpha = std::min(alpha, -found->rate);
        }
    }
    rep.alpha = alpha;
    rep.universal_rate = alpha / 3.0;
    rep.universal_prefactor = std::cbrt(rep.K);
    return rep;
}

double cumulative_spectrum(const SpectralField& phi, double N) {
    if (!(N >= 1.0)) throw ConfigError("cumulative_spectrum: N >= 1 required");
    return cumulative_l2sq(phi, N);
}

int batchelor_n0(const SpectralField& g) {
    const double total = sobolev_norm(g, 0.0);
    if (!(total > 0.0)) throw ConfigError("batchelor_n0: zero forcing field");
    for (int m = 1; m <= 2 * g.cutoff() * g.cutoff() + 1; ++m) {
        if (std::sqrt(cumulative_l2sq(g, std::sqrt(double(m)))) >= 0.75 * total) return m;
    }
    throw NumericalError("batchelor_n0: no mass threshold found");
}

BatchelorReport batchelor_run(const BatchelorConfig& cfg, const SpectralField& g,
                              int threads) {
    BatchelorReport rep;
    rep.n0 = batchelor_n0(g);
    const int n_min = std::max(rep.n0, 2);
    for (int N : cfg.n_grid)
        if (N >= n_min) rep.n_grid.push_back(N);
    if (rep.n_grid.empty())
        throw SpectrumRangeError("batchelor_run: N grid entirely below N0 = " +
                                 std::to_string(rep.n0));
    const int K = cfg.solver.grid.cutoff();
    for (int N : rep.n_grid)
        if (N > K)
            throw ConfigError("batchelor_run: N = " + std::to_string(N) +
                              " exceeds grid cutoff " + std::to_string(K));

    const int steps = static_cast<int>(std::lround(cfg.T / cfg.solver.dt));
    const int sample_every =
        std::max(1, static_cast<int>(std::lround(cfg.sample_dt / cfg.solver.dt)));
    // per-trajectory late-window time averages of ||Pi_<=N phi||^2
    std::vector<std::vector<double>> averages(
        rep.n_grid.size(), std::vector<double>(static_cast<std::size_t>(cfg.ensemble), 0.0));
    parallel_for(cfg.ensemble, threads, [&](int traj) {
        SnsStepper field(cfg.solver);
        VorticityState w{SpectralField(cfg.solver.grid), 0.0};
        ScalarState phi{SpectralField(cfg.solver.grid), 0.0};
        NoiseStream noise{cfg.seed, static_cast<std::uint64_t>(traj), 0};
        SpectralField prev = w.omega;
        std::vector<double> acc(rep.n_grid.size(), 0.0);
        int count = 0;
        for (int i = 1; i <= steps; ++i) {
            prev = w.omega;
            // scalar source drawn before the counter advances inside the field step
            const NoiseStream at_step = noise;
            field.step_stochastic(w, noise);
            advect_scalar_forced(phi, prev, w.omega, cfg.solver.dt, g, at_step);
            if (i % sample_every == 0 && i >= steps / 2) {
                for (std::size_t j = 0; j < rep.n_grid.size(); ++j)
                    acc[j] += cumulative_l2sq(phi.phi, rep.n_grid[j]);
                ++count;
            }
        }
        for (std::size_t j = 0; j < rep.n_grid.size(); ++j)
            averages[j][static_cast<std::size_t>(traj)] = acc[j] / std::max(1, count);
    });

    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    const double n = static_cast<double>(rep.n_grid.size());
    for (std::size_t j = 0; j < rep.n_grid.size(); ++j) {
        const auto est = make_estimate(averages[j]);
        rep.mean.push_back(est.value);
        rep.stderr_.push_back(est.stderr_);
        const double x = std::log(double(rep.n_grid[j]));
        sx += x;
        sy += est.value;
        sxx += x * x;
        sxy += x * est.value;
        syy += est.value * est.value;
    }
    const double den = n * sxx - sx * sx;
    rep.slope = (n * sxy - sx * sy) / den;
    rep.intercept = (sy - rep.slope * sx) / n;
    const double ss_tot = syy - sy * sy / n;
    double ss_res = 0.0;
    for (std::size_t j = 0; j < rep.n_grid.size(); ++j) {
        const double x = std::log(double(rep.n_grid[j]));
        const double r = rep.mean[j] - (rep.intercept + rep.slope * x);
        ss_res += r * r;
    }
    rep.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return rep;
}

MixingRunResult run_mixing_paths(const MixingRunConfig& cfg,
                                 const std::vector<SpectralField>& initial_data,
                                 int threads) {
    MixingRunResult res;
    const int steps = static_cast<int>(std::lround(cfg.T / cfg.solver.dt));
    const int spin_steps = static_cast<int>(std::lround(cfg.spin_up / cfg.solver.dt));
    const int sample_every =
        std::max(1, static_cast<int>(std::lround(cfg.sample_dt / cfg.solver.dt)));
    const int n_samples = steps / sample_every + 1;
    for (int j = 0; j < n_samples; ++j) res.t.push_back(j * sample_every * cfg.solver.dt);
    res.hminus1.assign(initial_data.size(),
                       std::vector<std::vector<double>>(
                           static_cast<std::size_t>(cfg.ensemble),
                           std::vector<double>(static_cast<std::size_t>(n_samples), 0.0)));
    res.l2 = res.hminus1;
    parallel_for(cfg.ensemble, threads, [&](int traj) {
        SnsStepper field(cfg.solver);
        VorticityState w{SpectralField(cfg.solver.grid), 0.0};
        NoiseStream noise{cfg.seed, static_cast<std::uint64_t>(traj), 0};
        for (int i = 0; i < spin_steps; ++i) field.step_stochastic(w, noise);
        std::vector<ScalarState> phis;
        for (const auto& p0 : initial_data) phis.push_back({p0, 0.0});
        auto record = [&](int slot) {
            for (std::size_t d = 0; d < phis.size(); ++d) {
                res.hminus1[d][static_cast<std::size_t>(traj)]
                           [static_cast<std::size_t>(slot)] =
                    sobolev_norm(phis[d].phi, -1.0);
                res.l2[d][static_cast<std::size_t>(traj)][static_cast<std::size_t>(slot)] =
                    sobolev_norm(phis[d].phi, 0.0);
            }
        };
        record(0);
        SpectralField prev = w.omega;
        int slot = 1;
        for (int i = 1; i <= steps; ++i) {
            prev = w.omega;
            field.step_stochastic(w, noise);
            const VelocityField u1 = biot_savart(prev);
            const VelocityField u2 = biot_savart(w.omega);
            for (auto& phi : phis) {
                SpectralField k1 = advection_term(u1, phi.phi);
                k1 *= -1.0;
                SpectralField stage = phi.phi;
                stage.axpy(cfg.solver.dt, k1);
                SpectralField k2 = advection_term(u2, stage);
                k2 *= -1.0;
                phi.phi.axpy(0.5 * cfg.solver.dt, k1);
                phi.phi.axpy(0.5 * cfg.solver.dt, k2);
                phi.t += cfg.solver.dt;
            }
            if (i % sample_every == 0) record(slot++);
        }
    });
    return res;
}

}  // namespace snsmix
