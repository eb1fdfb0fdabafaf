#include "snsmix/ensemble.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace snsmix {

using nlohmann::json;
namespace fs = std::filesystem;

std::string kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Simulate: return "simulate";
        case ExperimentKind::Lyapunov: return "lyapunov";
        case ExperimentKind::Mixing: return "mixing";
        case ExperimentKind::Batchelor: return "batchelor";
        case ExperimentKind::Drift: return "drift";
        case ExperimentKind::Malliavin: return "malliavin";
        case ExperimentKind::Control: return "control";
        case ExperimentKind::Diagnostics: return "diagnostics";
    }
    return "simulate";
}

ExperimentKind kind_from_name(const std::string& name) {
    for (auto k : {ExperimentKind::Simulate, ExperimentKind::Lyapunov, ExperimentKind::Mixing,
                   ExperimentKind::Batchelor, ExperimentKind::Drift, ExperimentKind::Malliavin,
                   ExperimentKind::Control, ExperimentKind::Diagnostics})
        if (kind_name(k) == name) return k;
    throw ConfigError("unknown experiment kind: " + name);
}

namespace {

std::string variant_name(ProcessVariant v) {
    switch (v) {
        case ProcessVariant::Base: return "base";
        case ProcessVariant::OnePoint: return "one_point";
        case ProcessVariant::TwoPoint: return "two_point";
        case ProcessVariant::Tangent: return "tangent";
        case ProcessVariant::Projective: return "projective";
        case ProcessVariant::Jacobian: return "jacobian";
    }
    return "one_point";
}

ProcessVariant variant_from_name(const std::string& s) {
    for (auto v : {ProcessVariant::Base, ProcessVariant::OnePoint, ProcessVariant::TwoPoint,
                   ProcessVariant::Tangent, ProcessVariant::Projective,
                   ProcessVariant::Jacobian})
        if (variant_name(v) == s) return v;
    throw ConfigError("unknown process variant: " + s);
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    ExperimentConfig cfg;
    if (j.contains("kind")) cfg.kind = kind_from_name(j["kind"].get<std::string>());
    if (j.contains("solver")) {
        const auto& s = j["solver"];
        if (s.contains("n")) cfg.solver.grid.n = s["n"].get<int>();
        if (s.contains("dealias_fraction"))
            cfg.solver.grid.dealias_fraction = s["dealias_fraction"].get<double>();
        if (s.contains("nu")) cfg.solver.nu = s["nu"].get<double>();
        if (s.contains("dt")) cfg.solver.dt = s["dt"].get<double>();
        if (s.contains("forcing")) {
            const auto& f = s["forcing"];
            cfg.solver.forcing.modes.clear();
            cfg.solver.forcing.amps.clear();
            for (const auto& m : f["modes"])
                cfg.solver.forcing.modes.push_back({m[0].get<int>(), m[1].get<int>()});
            if (f.contains("amps"))
                for (const auto& a : f["amps"]) cfg.solver.forcing.amps.push_back(a.get<double>());
            else
                cfg.solver.forcing.amps.assign(cfg.solver.forcing.modes.size(), 1.0);
        }
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        if (e.contains("mode"))
            cfg.scheme.mode = e["mode"].get<std::string>() == "direct" ? EvalMode::DirectSum
                                                                       : EvalMode::PaddedBicubic;
        if (e.contains("pad_factor")) cfg.scheme.pad_factor = e["pad_factor"].get<int>();
    }
    if (j.contains("process")) cfg.variant = variant_from_name(j["process"].get<std::string>());
    auto grab = [&](const char* key, auto& slot) {
        if (j.contains(key)) slot = j[key].get<std::decay_t<decltype(slot)>>();
    };
    grab("ensemble", cfg.ensemble);
    grab("horizon", cfg.horizon);
    grab("burn_in", cfg.burn_in);
    grab("sample_dt", cfg.sample_dt);
    grab("out", cfg.out_dir);
    grab("seed", cfg.master_seed);
    grab("threads", cfg.threads);
    grab("resume", cfg.resume);
    grab("sigma", cfg.sigma);
    grab("alpha", cfg.alpha);
    grab("c_v", cfg.c_v);
    grab("n_max", cfg.n_max);
    grab("r0", cfg.r0);
    grab("k_max", cfg.k_max);
    grab("inner_exponent", cfg.inner_exponent);
    grab("quad_points", cfg.quad_points);
    grab("projection_radius", cfg.projection_radius);
    grab("checkpoint_every", cfg.checkpoint_every);
    grab("control_eps", cfg.control_eps);
    grab("jacobian_target", cfg.jacobian_target);
    grab("deterministic", cfg.deterministic);
    grab("init_amp", cfg.init_amp);
    if (j.contains("n_grid")) cfg.n_grid = j["n_grid"].get<std::vector<int>>();
    if (j.contains("p_grid")) cfg.p_grid = j["p_grid"].get<std::vector<double>>();
    if (j.contains("scalar_mode"))
        cfg.scalar_mode = {j["scalar_mode"][0].get<int>(), j["scalar_mode"][1].get<int>()};
    if (j.contains("init_mode"))
        cfg.init_mode = WaveIndex{j["init_mode"][0].get<int>(), j["init_mode"][1].get<int>()};

    if (const char* env = std::getenv("SNSMIX_SEED")) cfg.master_seed = std::stoull(env);
    if (const char* env = std::getenv("SNSMIX_OUT")) cfg.out_dir = env;
    if (const char* env = std::getenv("SNSMIX_THREADS")) cfg.threads = std::stoi(env);

    cfg.solver.validate();  // AssumptionError names the failed forcing clause
    cfg.scheme.validate();
    if (cfg.ensemble < 1) throw ConfigError("ensemble >= 1 required");
    if (!(cfg.horizon > 0.0)) throw ConfigError("horizon > 0 required");
    return cfg;
}

ExperimentConfig validate_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json_text(ss.str());
}

std::string canonical_config_json(const ExperimentConfig& cfg) {
    json j;  // nlohmann objects keep keys sorted
    j["kind"] = kind_name(cfg.kind);
    j["solver"] = {{"n", cfg.solver.grid.n},
                   {"dealias_fraction", cfg.solver.grid.dealias_fraction},
                   {"nu", cfg.solver.nu},
                   {"dt", cfg.solver.dt}};
    json modes = json::array(), amps = json::array();
    for (const auto& m : cfg.solver.forcing.modes) modes.push_back({m.kx, m.ky});
    for (double a : cfg.solver.forcing.amps) amps.push_back(a);
    j["solver"]["forcing"] = {{"modes", modes}, {"amps", amps}};
    j["eval"] = {{"mode", cfg.scheme.mode == EvalMode::DirectSum ? "direct" : "padded"},
                 {"pad_factor", cfg.scheme.pad_factor}};
    j["process"] = variant_name(cfg.variant);
    j["ensemble"] = cfg.ensemble;
    j["horizon"] = cfg.horizon;
    j["burn_in"] = cfg.burn_in;
    j["sample_dt"] = cfg.sample_dt;
    j["seed"] = cfg.master_seed;
    j["sigma"] = cfg.sigma;
    j["alpha"] = cfg.alpha;
    j["c_v"] = cfg.c_v;
    j["n_grid"] = cfg.n_grid;
    j["p_grid"] = cfg.p_grid;
    j["n_max"] = cfg.n_max;
    j["r0"] = cfg.r0;
    j["k_max"] = cfg.k_max;
    j["inner_exponent"] = cfg.inner_exponent;
    j["quad_points"] = cfg.quad_points;
    j["projection_radius"] = cfg.projection_radius;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["scalar_mode"] = {cfg.scalar_mode.kx, cfg.scalar_mode.ky};
    j["control_eps"] = cfg.control_eps;
    j["jacobian_target"] = cfg.jacobian_target;
    j["deterministic"] = cfg.deterministic;
    if (cfg.init_mode) j["init_mode"] = {cfg.init_mode->kx, cfg.init_mode->ky};
    j["init_amp"] = cfg.init_amp;
    return j.dump();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    return fnv1a(canonical_config_json(cfg));
}

std::string RunManifest::to_json() const {
    json j;
    j["config_hash"] = config_hash;
    j["code_version"] = code_version;
    j["trajectory_seeds"] = trajectory_seeds;
    j["wall_time_s"] = wall_time_s;
    j["outputs"] = outputs;
    return j.dump(2);
}

// --- experiment runners ----------------------------------------------------------------

namespace {

struct OutputSink {
    fs::path dir;
    RunManifest& manifest;

    std::ofstream open(const std::string& name) {
        fs::create_directories(dir);
        manifest.outputs.push_back(name);
        return std::ofstream(dir / name);
    }
};

json point_to_json(const ManifoldPoint& p) {
    json j;
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            j["x"] = {v.x[0], v.x[1]};
            if constexpr (std::is_same_v<T, TwoPoint>) {
                j["y"] = {v.y[0], v.y[1]};
                j["lift"] = {v.lift[0], v.lift[1]};
            } else if constexpr (std::is_same_v<T, Tangent>) {
                j["tau"] = {v.tau[0], v.tau[1]};
            } else if constexpr (std::is_same_v<T, Projective>) {
                j["v"] = {v.v[0], v.v[1]};
            } else if constexpr (std::is_same_v<T, JacobianPt>) {
                const Mat2 A = v.matrix();
                j["A"] = {{A(0, 0), A(0, 1)}, {A(1, 0), A(1, 1)}};
                j["log_opnorm"] = v.log_opnorm();
            }
        },
        p);
    return j;
}

ManifoldPoint initial_point_for(const ExperimentConfig& cfg, int traj) {
    NoiseStream init{cfg.master_seed, static_cast<std::uint64_t>(traj), ~0ull};
    const Vec2 x{init.uniform(kLaneInitSampling, -kPi, kPi),
                 init.uniform(kLaneInitSampling + 1, -kPi, kPi)};
    const double th = init.uniform(kLaneInitSampling + 2, 0.0, kTwoPi);
    const Vec2 dir{std::cos(th), std::sin(th)};
    switch (cfg.variant) {
        case ProcessVariant::Base:
        case ProcessVariant::OnePoint: return OnePoint{x};
        case ProcessVariant::TwoPoint: return make_two_point(x, x + cfg.r0 * dir);
        case ProcessVariant::Tangent: return Tangent{x, dir};
        case ProcessVariant::Projective: return Projective{x, dir};
        case ProcessVariant::Jacobian: return JacobianPt{x};
    }
    return OnePoint{x};
}

void run_simulate(const ExperimentConfig& cfg, OutputSink& sink) {
    const std::uint64_t chash = config_hash(cfg);
    for (int traj = 0; traj < cfg.ensemble; ++traj) {
        const std::string series_name = "traj_" + std::to_string(traj) + ".ndjson";
        const std::string ck_name = "traj_" + std::to_string(traj) + ".snsck";
        const fs::path series_path = sink.dir / series_name;
        const fs::path ck_path = sink.dir / ck_name;
        fs::create_directories(sink.dir);

        CoupledStepper stepper(cfg.solver, cfg.scheme);
        CoupledState s;
        s.vorticity = {SpectralField(cfg.solver.grid), 0.0};
        if (cfg.init_mode) {
            s.vorticity.omega = make_basis_mode(*cfg.init_mode, cfg.solver.grid);
            s.vorticity.omega *= cfg.init_amp;
        }
        s.point = initial_point_for(cfg, traj);
        NoiseStream noise{cfg.master_seed, static_cast<std::uint64_t>(traj), 0};

        std::vector<std::string> kept_lines;
        if (cfg.resume && fs::exists(ck_path)) {
            std::ifstream ck(ck_path, std::ios::binary);
            Checkpoint c = read_checkpoint(ck);
            s.vorticity = c.state;
            noise = c.noise;
            if (c.point_tag != 0) s.point = unpack_point(c.point_tag, c.point_coords);
            s.log_accum = c.log_accum;
            // keep samples at or before the checkpoint time, stamped with the
            // current run's config hash (the payload is reproducible under it)
            std::ifstream old(series_path);
            std::string line;
            while (std::getline(old, line)) {
                if (line.empty()) continue;
                auto rec = json::parse(line);
                if (rec["t"].get<double>() <= c.state.t + 1e-12) {
                    rec["config_hash"] = chash;
                    kept_lines.push_back(rec.dump());
                }
            }
        }
        std::ofstream series(series_path);
        sink.manifest.outputs.push_back(series_name);
        for (const auto& l : kept_lines) series << l << "\n";

        const int total_steps = static_cast<int>(std::lround(cfg.horizon / cfg.solver.dt));
        const int sample_every =
            std::max(1, static_cast<int>(std::lround(cfg.sample_dt / cfg.solver.dt)));
        const int ck_every = cfg.checkpoint_every > 0.0
                                 ? static_cast<int>(std::lround(cfg.checkpoint_every /
                                                                cfg.solver.dt))
                                 : 0;
        auto emit = [&](int step) {
            json rec = point_to_json(s.point);
            rec["t"] = s.vorticity.t;
            rec["step"] = step;
            rec["traj"] = traj;
            rec["log_accum"] = s.log_accum;
            rec["omega_l2"] = sobolev_norm(s.vorticity.omega, 0.0);
            rec["omega_h1"] = sobolev_norm(s.vorticity.omega, 1.0);
            rec["V"] = lyapunov_V(s.vorticity.omega, cfg.sigma, cfg.alpha);
            rec["config_hash"] = chash;
            series << rec.dump() << "\n";
        };
        int start_step = static_cast<int>(std::lround(s.vorticity.t / cfg.solver.dt));
        if (start_step == 0) emit(0);
        for (int i = start_step; i < total_steps; ++i) {
            if (cfg.deterministic)
                stepper.step_decay(s);
            else
                stepper.step_stochastic(s, noise);
            if ((i + 1) % sample_every == 0) emit(i + 1);
            if (ck_every > 0 && (i + 1) % ck_every == 0) {
                Checkpoint c{cfg.solver, s.vorticity, noise};
                std::tie(c.point_tag, c.point_coords) = pack_point(s.point);
                c.log_accum = s.log_accum;
                std::ofstream ck(ck_path, std::ios::binary);
                write_checkpoint(ck, c);
            }
        }
        std::ofstream field(sink.dir / ("traj_" + std::to_string(traj) + "_final.snsf"),
                            std::ios::binary);
        write_field(field, s.vorticity.omega);
        sink.manifest.outputs.push_back("traj_" + std::to_string(traj) + "_final.snsf");
        if (ck_every > 0) sink.manifest.outputs.push_back(ck_name);
    }
}

void run_lyapunov(const ExperimentConfig& cfg, OutputSink& sink) {
    LyapunovConfig lc;
    lc.solver = cfg.solver;
    lc.scheme = cfg.scheme;
    lc.burn_in = cfg.burn_in;
    lc.horizon = cfg.horizon;
    lc.ensemble = cfg.ensemble;
    lc.seed = cfg.master_seed;
    const auto jac = estimate_lambda_jacobian(lc, cfg.threads);
    const auto proj = estimate_lambda_projective(lc, cfg.threads);
    auto out = sink.open("lambda.ndjson");
    const std::uint64_t chash = config_hash(cfg);
    auto rec = [&](const char* name, const LambdaReport& r) {
        json j;
        j["estimator"] = name;
        j["value"] = r.estimate.value;
        j["stderr"] = r.estimate.stderr_;
        j["ci95"] = {r.estimate.ci_lo, r.estimate.ci_hi};
        j["n_samples"] = r.estimate.n_samples;
        j["half_window_value"] = r.half_estimate.value;
        j["config_hash"] = chash;
        j["seed"] = cfg.master_seed;
        j["sigma"] = cfg.sigma;
        j["alpha"] = cfg.alpha;
        out << j.dump() << "\n";
    };
    rec("jacobian", jac);
    rec("projective", proj);
    auto csv = sink.open("lambda.csv");
    csv << "estimator,value,stderr,ci_lo,ci_hi,n\n";
    csv << "jacobian," << jac.estimate.value << ',' << jac.estimate.stderr_ << ','
        << jac.estimate.ci_lo << ',' << jac.estimate.ci_hi << ',' << jac.estimate.n_samples
        << "\n";
    csv << "projective," << proj.estimate.value << ',' << proj.estimate.stderr_ << ','
        << proj.estimate.ci_lo << ',' << proj.estimate.ci_hi << ','
        << proj.estimate.n_samples << "\n";
}

void run_mixing(const ExperimentConfig& cfg, OutputSink& sink) {
    MixingRunConfig mc;
    mc.solver = cfg.solver;
    mc.T = cfg.horizon;
    mc.sample_dt = cfg.sample_dt;
    mc.ensemble = cfg.ensemble;
    mc.seed = cfg.master_seed;
    mc.spin_up = cfg.burn_in;
    std::vector<SpectralField> data;
    data.push_back(make_basis_mode(cfg.scalar_mode, cfg.solver.grid));
    const auto res = run_mixing_paths(mc, data, cfg.threads);
    auto out = sink.open("mixing.ndjson");
    const std::uint64_t chash = config_hash(cfg);
    for (int traj = 0; traj < cfg.ensemble; ++traj) {
        const auto& series = res.hminus1[0][static_cast<std::size_t>(traj)];
        const double burn = std::max(5.0, 0.1 * cfg.horizon);
        const auto fit = mixing_rate_fit(res.t, series, burn, cfg.horizon);
        json j;
        j["traj"] = traj;
        j["rate"] = fit.rate;
        j["logK"] = fit.logK;
        j["r_squared"] = fit.r_squared;
        j["config_hash"] = chash;
        j["seed"] = cfg.master_seed;
        out << j.dump() << "\n";
    }
}

void run_batchelor(const ExperimentConfig& cfg, OutputSink& sink) {
    BatchelorConfig bc;
    bc.solver = cfg.solver;
    bc.n_grid = cfg.n_grid;
    bc.T = cfg.horizon;
    bc.ensemble = cfg.ensemble;
    bc.seed = cfg.master_seed;
    bc.sample_dt = cfg.sample_dt;
    const auto rep = batchelor_run(bc, make_basis_mode(cfg.scalar_mode, cfg.solver.grid),
                                   cfg.threads);
    auto csv = sink.open("batchelor.csv");
    csv << "N,mean,stderr\n";
    for (std::size_t i = 0; i < rep.n_grid.size(); ++i)
        csv << rep.n_grid[i] << ',' << rep.mean[i] << ',' << rep.stderr_[i] << "\n";
    auto out = sink.open("batchelor.ndjson");
    json j;
    j["n0"] = rep.n0;
    j["slope"] = rep.slope;
    j["intercept"] = rep.intercept;
    j["r_squared"] = rep.r_squared;
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.master_seed;
    out << j.dump() << "\n";
}

void run_drift(const ExperimentConfig& cfg, OutputSink& sink) {
    DriftConfig dc;
    dc.solver = cfg.solver;
    dc.scheme = cfg.scheme;
    dc.r0 = cfg.r0;
    dc.p_grid = cfg.p_grid;
    dc.n_max = cfg.n_max;
    dc.ensemble = cfg.ensemble;
    dc.seed = cfg.master_seed;
    dc.c_v = cfg.c_v;
    dc.sigma = cfg.sigma;
    dc.alpha = cfg.alpha;
    dc.spin_up = cfg.burn_in;
    const auto rep = drift_check(dc, cfg.threads);
    auto csv = sink.open("drift.csv");
    csv << "p,n,ratio,ci_lo,ci_hi\n";
    for (std::size_t ip = 0; ip < rep.p_grid.size(); ++ip)
        for (std::size_t in = 0; in < rep.n_grid.size(); ++in)
            csv << rep.p_grid[ip] << ',' << rep.n_grid[in] << ',' << rep.ratio[ip][in] << ','
                << rep.ci_lo[ip][in] << ',' << rep.ci_hi[ip][in] << "\n";
    auto out = sink.open("drift.ndjson");
    json j;
    j["pass"] = rep.pass;
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.master_seed;
    j["c_v"] = cfg.c_v;
    out << j.dump() << "\n";
}

void run_malliavin(const ExperimentConfig& cfg, OutputSink& sink) {
    GalerkinSpec spec{cfg.k_max, cfg.inner_exponent, cfg.variant};
    int m = cfg.quad_points;
    if (m < 5) m = 5;
    if ((m - 1) % 4 != 0) m += 4 - (m - 1) % 4;
    const int target_steps = static_cast<int>(std::lround(cfg.horizon / cfg.solver.dt));
    const int stride = std::max(1, target_steps / (m - 1));
    const int steps = stride * (m - 1);
    SolverConfig solver = cfg.solver;
    solver.dt = cfg.horizon / steps;

    std::vector<double> eigs(static_cast<std::size_t>(cfg.ensemble));
    parallel_for(cfg.ensemble, cfg.threads, [&](int traj) {
        const auto path = simulate_base_path(solver, cfg.scheme, cfg.variant, steps,
                                             cfg.master_seed, traj, cfg.burn_in);
        const auto M = assemble_malliavin(path, spec, m);
        eigs[static_cast<std::size_t>(traj)] = projected_min_eigen(M, cfg.projection_radius);
        if (traj == 0) {
            auto dump = sink.open("malliavin_matrix.bin");
            write_matrix(dump, M);
        }
    });
    auto csv = sink.open("malliavin_eigen.csv");
    csv << "traj,min_eigen\n";
    for (int traj = 0; traj < cfg.ensemble; ++traj)
        csv << traj << ',' << eigs[static_cast<std::size_t>(traj)] << "\n";
    auto out = sink.open("malliavin.ndjson");
    json j;
    j["R"] = cfg.projection_radius;
    j["k_max"] = cfg.k_max;
    j["quad_points"] = m;
    j["min_eigen_min"] = *std::min_element(eigs.begin(), eigs.end());
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.master_seed;
    out << j.dump() << "\n";
}

void run_control(const ExperimentConfig& cfg, OutputSink& sink) {
    ControlContext ctx;
    ctx.solver = cfg.solver;
    ctx.scheme = cfg.scheme;
    ctx.sigma = cfg.sigma;
    ctx.alpha = cfg.alpha;
    auto out = sink.open("control.ndjson");
    const std::uint64_t chash = config_hash(cfg);
    auto emit = [&](const char* planner, int idx, const PlanReport& rep) {
        json j;
        j["planner"] = planner;
        j["case"] = idx;
        j["pass"] = rep.pass;
        j["eps"] = rep.eps;
        j["error_components"] = rep.error_components;
        for (const auto& [k, v] : rep.log) j[k] = v;
        j["config_hash"] = chash;
        out << j.dump() << "\n";
    };
    // random V-filtered initial fields; one projective and one two-point case each
    SnsStepper field(cfg.solver);
    for (int i = 0; i < cfg.ensemble; ++i) {
        VorticityState w{SpectralField(cfg.solver.grid), 0.0};
        NoiseStream noise{cfg.master_seed, static_cast<std::uint64_t>(i), 0};
        const int spin = static_cast<int>(std::lround(cfg.burn_in / cfg.solver.dt));
        for (int s = 0; s < spin; ++s) field.step_stochastic(w, noise);
        while (lyapunov_V(w.omega, cfg.sigma, cfg.alpha) > cfg.c_v) field.step_decay(w);
        NoiseStream init{cfg.master_seed, static_cast<std::uint64_t>(i), ~0ull};
        const Vec2 x0{init.uniform(kLaneInitSampling, -kPi, kPi),
                      init.uniform(kLaneInitSampling + 1, -kPi, kPi)};
        const double a0 = init.uniform(kLaneInitSampling + 2, 0.0, kTwoPi);
        const double a1 = init.uniform(kLaneInitSampling + 3, 0.0, kTwoPi);
        const Vec2 v0{std::cos(a0), std::sin(a0)};
        const Vec2 vt{std::cos(a1), std::sin(a1)};
        emit("projective", i,
             plan_projective_control(ctx, w.omega, x0, v0, vt, cfg.control_eps));
        const Vec2 y0{init.uniform(kLaneInitSampling + 4, -kPi, kPi),
                      init.uniform(kLaneInitSampling + 5, -kPi, kPi)};
        emit("two_point", i, plan_twopoint_control(ctx, w.omega, x0, y0, cfg.control_eps));
    }
    emit("jacobian_growth", 0, plan_jacobian_growth(ctx, cfg.jacobian_target));
}

void run_diagnostics(const ExperimentConfig& cfg, OutputSink& sink) {
    const int steps = static_cast<int>(std::lround(cfg.horizon / cfg.solver.dt));
    const int sample_every =
        std::max(1, static_cast<int>(std::lround(cfg.sample_dt / cfg.solver.dt)));
    std::vector<std::vector<EnergySample>> series(static_cast<std::size_t>(cfg.ensemble));
    parallel_for(cfg.ensemble, cfg.threads, [&](int traj) {
        SnsStepper stepper(cfg.solver);
        VorticityState s{SpectralField(cfg.solver.grid), 0.0};
        if (cfg.init_mode) {
            s.omega = make_basis_mode(*cfg.init_mode, cfg.solver.grid);
            s.omega *= cfg.init_amp;
        }
        NoiseStream noise{cfg.master_seed, static_cast<std::uint64_t>(traj), 0};
        auto& out = series[static_cast<std::size_t>(traj)];
        out.push_back(energy_sample(s, cfg.solver.nu, nullptr));
        for (int i = 1; i <= steps; ++i) {
            if (cfg.deterministic)
                stepper.step_decay(s);
            else
                stepper.step_stochastic(s, noise);
            if (i % sample_every == 0)
                out.push_back(energy_sample(s, cfg.solver.nu, &out.back()));
        }
    });
    const auto diag = energy_diagnostics(series, cfg.solver);
    auto csv = sink.open("energy.csv");
    csv << "t,mean_l2sq,mean_h1sq,residual,injection\n";
    for (std::size_t i = 0; i < diag.t.size(); ++i)
        csv << diag.t[i] << ',' << diag.mean_l2sq[i] << ',' << diag.mean_h1sq[i] << ','
            << diag.residual[i] << ',' << diag.injection_rate << "\n";
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    RunManifest manifest;
    manifest.config_hash = config_hash(cfg);
    manifest.code_version = kCodeVersion;
    for (int i = 0; i < cfg.ensemble; ++i)
        manifest.trajectory_seeds.push_back(cfg.trajectory_seed(i));
    OutputSink sink{fs::path(cfg.out_dir), manifest};
    switch (cfg.kind) {
        case ExperimentKind::Simulate: run_simulate(cfg, sink); break;
        case ExperimentKind::Lyapunov: run_lyapunov(cfg, sink); break;
        case ExperimentKind::Mixing: run_mixing(cfg, sink); break;
        case ExperimentKind::Batchelor: run_batchelor(cfg, sink); break;
        case ExperimentKind::Drift: run_drift(cfg, sink); break;
        case ExperimentKind::Malliavin: run_malliavin(cfg, sink); break;
        case ExperimentKind::Control: run_control(cfg, sink); break;
        case ExperimentKind::Diagnostics: run_diagnostics(cfg, sink); break;
    }
    manifest.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    fs::create_directories(cfg.out_dir);
    std::ofstream mf(fs::path(cfg.out_dir) / "manifest.json");
    mf << manifest.to_json() << "\n";
    manifest.outputs.push_back("manifest.json");
    return manifest;
}

}  // namespace snsmix
