#include "snsmix/sns_dynamics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>

namespace snsmix {

// --- ControlProgram ----------------------------------------------------------

ControlProgram::ControlProgram(std::vector<double> breakpoints,
                               std::vector<std::vector<double>> rates)
    : breakpoints_(std::move(breakpoints)), rates_(std::move(rates)) {
    if (breakpoints_.size() != rates_.size() + 1)
        throw ConfigError("ControlProgram: need one more breakpoint than rate rows");
    for (std::size_t i = 0; i + 1 < breakpoints_.size(); ++i)
        if (!(breakpoints_[i] < breakpoints_[i + 1]))
            throw ConfigError("ControlProgram: breakpoints must increase");
    for (const auto& row : rates_)
        for (double r : row)
            if (std::abs(r) > 1.0 + 1e-12)
                throw ConfigError("ControlProgram: |g-dot| <= 1 violated");
}

const std::vector<double>& ControlProgram::rate_at(double t) const {
    if (empty()) throw ControlGapError("ControlProgram: empty program");
    // right-closed last piece so that querying exactly at end() works
    if (t < breakpoints_.front() - 1e-6 || t > breakpoints_.back() + 1e-6)
        throw ControlGapError("ControlProgram: t outside program support");
    auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
    std::size_t i = it == breakpoints_.begin() ? 0 : (it - breakpoints_.begin()) - 1;
    if (i >= rates_.size()) i = rates_.size() - 1;
    return rates_[i];
}

bool ControlProgram::covers(double t0, double t1) const {
    if (empty()) return false;
    return t0 >= breakpoints_.front() - 1e-6 && t1 <= breakpoints_.back() + 1e-6;
}

void ControlProgram::append_piece(double duration, std::vector<double> rates) {
    if (!(duration > 0.0)) throw ConfigError("ControlProgram: piece duration must be > 0");
    for (double r : rates)
        if (std::abs(r) > 1.0 + 1e-12)
            throw ConfigError("ControlProgram: |g-dot| <= 1 violated");
    if (breakpoints_.empty()) breakpoints_.push_back(0.0);
    breakpoints_.push_back(breakpoints_.back() + duration);
    rates_.push_back(std::move(rates));
}

ControlProgram ControlProgram::then(const ControlProgram& other) const {
    ControlProgram out = *this;
    for (std::size_t i = 0; i < other.rates_.size(); ++i) {
        const double dur = other.breakpoints_[i + 1] - other.breakpoints_[i];
        out.append_piece(dur, other.rates_[i]);
    }
    return out;
}

void ControlProgram::write_csv(std::ostream& os, const ForcingSet& F) const {
    os << "t_start,t_end";
    for (const auto& k : F.modes) os << ",gdot_" << k.kx << "_" << k.ky;
    os << "\n";
    for (std::size_t i = 0; i < rates_.size(); ++i) {
        os << breakpoints_[i] << ',' << breakpoints_[i + 1];
        for (double r : rates_[i]) os << ',' << r;
        os << "\n";
    }
}

// --- stepper -------------------------------------------------------------------

SnsStepper::SnsStepper(const SolverConfig& cfg)
    : cfg_(cfg), k1_(cfg.grid), stage_(cfg.grid), k2_(cfg.grid) {
    cfg_.validate();
    const int n = cfg_.grid.n;
    ifac_.resize(static_cast<std::size_t>(n) * n);
    for (int a = 0; a < n; ++a) {
        const int kx = a <= n / 2 ? a : a - n;
        for (int b = 0; b < n; ++b) {
            const int ky = b <= n / 2 ? b : b - n;
            const double k2 = double(kx) * kx + double(ky) * ky;
            ifac_[static_cast<std::size_t>(a) * n + b] = std::exp(-cfg_.nu * k2 * cfg_.dt);
        }
    }
    noise_std_.resize(cfg_.forcing.size());
    for (std::size_t m = 0; m < cfg_.forcing.size(); ++m) {
        const double a = cfg_.nu * cfg_.forcing.modes[m].norm2();
        noise_std_[m] =
            cfg_.forcing.amps[m] * std::sqrt((1.0 - std::exp(-2.0 * a * cfg_.dt)) / (2.0 * a));
    }
}

void SnsStepper::check_finite(const VorticityState& state) const {
    if (!state.omega.all_finite() || state.omega.max_abs_coeff() > 1e12)
        throw BlowupError("vorticity blow-up (check dt and grid)", state.t);
}

void SnsStepper::deterministic_stage(VorticityState& state) {
    // k1 = -N(w_n); predictor = E (w_n + dt k1); k2 = -N(pred);
    // w_{n+1} = E w_n + dt/2 (E k1 + k2)
    k1_ = nonlinear_term(state.omega);
    k1_ *= -1.0;
    stage_ = state.omega;
    stage_.axpy(cfg_.dt, k1_);
    {
        auto& raw = stage_.raw();
        for (std::size_t i = 0; i < raw.size(); ++i) raw[i] *= ifac_[i];
    }
    k2_ = nonlinear_term(stage_);
    k2_ *= -1.0;
    auto& w = state.omega.raw();
    const auto& r1 = k1_.raw();
    const auto& r2 = k2_.raw();
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = ifac_[i] * (w[i] + 0.5 * cfg_.dt * r1[i]) + 0.5 * cfg_.dt * r2[i];
    state.t += cfg_.dt;
}

void SnsStepper::step_with_injection(VorticityState& state, const std::vector<double>& xi) {
    deterministic_stage(state);
    for (std::size_t m = 0; m < cfg_.forcing.size(); ++m) {
        if (xi[m] == 0.0) continue;
        const WaveIndex& k = cfg_.forcing.modes[m];
        const std::complex<double> unit =
            k.lex_positive() ? std::complex<double>{0.0, -0.5} : std::complex<double>{0.5, 0.0};
        state.omega.add_mode_pair(k, unit * xi[m]);
    }
    check_finite(state);
}

void SnsStepper::step_stochastic(VorticityState& state, NoiseStream& noise) {
    std::vector<double> xi(cfg_.forcing.size());
    for (std::size_t m = 0; m < xi.size(); ++m)
        xi[m] = noise_std_[m] * noise.normal(static_cast<std::uint64_t>(m));
    noise.advance();
    step_with_injection(state, xi);
}

void SnsStepper::step_controlled(VorticityState& state, const ControlProgram& prog) {
    if (!prog.covers(state.t, state.t + cfg_.dt))
        throw ControlGapError("control program does not cover step interval");
    // Exact mild integral of the piecewise-constant rate against the viscous
    // factor: xi_m = c_m int_t^{t+dt} e^{-nu|k|^2 (t+dt-s)} gdot_m(s) ds.
    std::vector<double> xi(cfg_.forcing.size(), 0.0);
    const auto& bps = prog.breakpoints();
    double s0 = state.t;
    const double t1 = state.t + cfg_.dt;
    while (s0 < t1 - 1e-14) {
        auto it = std::upper_bound(bps.begin(), bps.end(), s0 + 1e-14);
        double s1 = it == bps.end() ? t1 : std::min(*it, t1);
        if (!(s1 > s0)) s1 = t1;
        const auto& rates = prog.rate_at(0.5 * (s0 + s1));
        for (std::size_t m = 0; m < xi.size(); ++m) {
            if (rates[m] == 0.0) continue;
            const double a = cfg_.nu * cfg_.forcing.modes[m].norm2();
            // int_{s0}^{s1} e^{-a (t1 - s)} ds
            const double w = (std::exp(-a * (t1 - s1)) - std::exp(-a * (t1 - s0))) / a;
            xi[m] += cfg_.forcing.amps[m] * rates[m] * w;
        }
        s0 = s1;
    }
    step_with_injection(state, xi);
}

void SnsStepper::step_decay(VorticityState& state) {
    deterministic_stage(state);
    check_finite(state);
}

// --- diagnostics ------------------------------------------------------------------

double lyapunov_V(const SpectralField& omega, double sigma, double alpha) {
    if (!(sigma > 0.0 && alpha > 0.0)) throw ConfigError("lyapunov_V: sigma, alpha > 0");
    const double l2 = sobolev_norm(omega, 0.0);
    const double h4 = sobolev_norm(omega, 4.0);
    return sigma * (l2 * l2 + alpha * std::cbrt(h4));
}

double injection_rate(const ForcingSet& F) {
    double s = 0.0;
    for (double c : F.amps) s += c * c * basis_mode_l2sq();
    return s;
}

EnergySample energy_sample(const VorticityState& s, double nu, const EnergySample* prev) {
    EnergySample e;
    e.t = s.t;
    const double l2 = sobolev_norm(s.omega, 0.0);
    const double h1 = sobolev_norm(s.omega, 1.0);
    e.l2sq = l2 * l2;
    e.h1sq = h1 * h1;
    e.h4_pow = std::cbrt(sobolev_norm(s.omega, 4.0));
    e.visc_integral =
        prev ? prev->visc_integral + 0.5 * nu * (prev->h1sq + e.h1sq) * (e.t - prev->t) : 0.0;
    return e;
}

EnergyDiagnostics energy_diagnostics(const std::vector<std::vector<EnergySample>>& series,
                                     const SolverConfig& cfg) {
    EnergyDiagnostics d;
    d.injection_rate = injection_rate(cfg.forcing);
    if (series.empty() || series.front().empty()) return d;
    const std::size_t nt = series.front().size();
    d.t.resize(nt);
    d.mean_l2sq.assign(nt, 0.0);
    d.mean_h1sq.assign(nt, 0.0);
    for (const auto& traj : series) {
        for (std::size_t i = 0; i < nt; ++i) {
            d.mean_l2sq[i] += traj[i].l2sq;
            d.mean_h1sq[i] += traj[i].h1sq;
        }
    }
    const double inv = 1.0 / static_cast<double>(series.size());
    for (std::size_t i = 0; i < nt; ++i) {
        d.t[i] = series.front()[i].t;
        d.mean_l2sq[i] *= inv;
        d.mean_h1sq[i] *= inv;
    }
    d.residual.assign(nt, 0.0);
    for (std::size_t i = 0; i < nt; ++i) {
        double ddt = 0.0;
        if (i == 0 && nt > 1)
            ddt = (d.mean_l2sq[1] - d.mean_l2sq[0]) / (d.t[1] - d.t[0]);
        else if (i + 1 == nt)
            ddt = (d.mean_l2sq[i] - d.mean_l2sq[i - 1]) / (d.t[i] - d.t[i - 1]);
        else
            ddt = (d.mean_l2sq[i + 1] - d.mean_l2sq[i - 1]) / (d.t[i + 1] - d.t[i - 1]);
        d.residual[i] = ddt + 2.0 * cfg.nu * d.mean_h1sq[i] - d.injection_rate;
    }
    return d;
}

// --- checkpoint IO -----------------------------------------------------------------

namespace {

template <typename T>
void put(std::ostream& os, T v) {
    static_assert(std::endian::native == std::endian::little);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& c) {
    os.write("SNSC", 4);
    put<std::uint32_t>(os, kCheckpointFormatVersion);
    put<double>(os, c.cfg.nu);
    put<double>(os, c.cfg.dt);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(c.cfg.grid.n));
    put<double>(os, c.cfg.grid.dealias_fraction);
    put<std::uint8_t>(os, static_cast<std::uint8_t>(c.cfg.scheme));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(c.cfg.forcing.size()));
    for (std::size_t i = 0; i < c.cfg.forcing.size(); ++i) {
        put<std::int32_t>(os, c.cfg.forcing.modes[i].kx);
        put<std::int32_t>(os, c.cfg.forcing.modes[i].ky);
        put<double>(os, c.cfg.forcing.amps[i]);
    }
    put<double>(os, c.state.t);
    write_field(os, c.state.omega);
    put<std::uint64_t>(os, c.noise.seed);
    put<std::uint64_t>(os, c.noise.trajectory_id);
    put<std::uint64_t>(os, c.noise.counter);
    put<std::uint8_t>(os, c.point_tag);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(c.point_coords.size()));
    for (double v : c.point_coords) put<double>(os, v);
    put<double>(os, c.log_accum);
}

Checkpoint read_checkpoint(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "SNSC")
        throw ConfigError("read_checkpoint: bad magic");
    const auto version = get<std::uint32_t>(is);
    if (version != kCheckpointFormatVersion)
        throw ConfigError("read_checkpoint: unsupported version");
    Checkpoint c;
    c.cfg.nu = get<double>(is);
    c.cfg.dt = get<double>(is);
    c.cfg.grid.n = static_cast<int>(get<std::uint32_t>(is));
    c.cfg.grid.dealias_fraction = get<double>(is);
    c.cfg.scheme = static_cast<Scheme>(get<std::uint8_t>(is));
    const auto nf = get<std::uint32_t>(is);
    c.cfg.forcing.modes.resize(nf);
    c.cfg.forcing.amps.resize(nf);
    for (std::uint32_t i = 0; i < nf; ++i) {
        c.cfg.forcing.modes[i].kx = get<std::int32_t>(is);
        c.cfg.forcing.modes[i].ky = get<std::int32_t>(is);
        c.cfg.forcing.amps[i] = get<double>(is);
    }
    c.state.t = get<double>(is);
    c.state.omega = read_field(is);
    c.noise.seed = get<std::uint64_t>(is);
    c.noise.trajectory_id = get<std::uint64_t>(is);
    c.noise.counter = get<std::uint64_t>(is);
    c.point_tag = get<std::uint8_t>(is);
    const auto nc = get<std::uint32_t>(is);
    c.point_coords.resize(nc);
    for (std::uint32_t i = 0; i < nc; ++i) c.point_coords[i] = get<double>(is);
    c.log_accum = get<double>(is);
    if (!is) throw ConfigError("read_checkpoint: truncated payload");
    c.cfg.validate();
    return c;
}

}  // namespace snsmix
