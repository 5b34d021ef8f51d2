// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#include "risloc/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <mutex>
#include <thread>

#include "risloc/rng.hpp"

namespace risloc {

namespace {

constexpr std::uint64_t kProfileTag = 0x50524F46494C4531ULL;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct PointContext {
    Scenario scenario;
    std::unique_ptr<ChannelModel> model;
    std::shared_ptr<GridTables> tables;
    double peb = 0.0;
    double veb = 0.0;
};

// Stages share one observation per trial; downstream stages reuse the grid output.
TrialResult run_trial_impl(const ExperimentConfig &config, const PointContext &ctx, int point_index,
                           int trial_index, StageTimings *timings) {
    TrialResult result;
    result.seed = trial_seed_for(config, point_index, trial_index);
    const Observation obs = ctx.model->observe(result.seed);
    const Vec3 p_true = ctx.scenario.ue.position;
    const Vec3 v_true = ctx.scenario.ue.velocity;

    const bool want_grid = (config.stages & kStageGrid) != 0;
    const bool want_ref_pos = (config.stages & kStageRefPos) != 0;
    const bool want_ref_vel = (config.stages & kStageRefVel) != 0;
    const bool want_full = (config.stages & kStageFull) != 0;

    std::optional<InitResult> init;
    if (want_grid || want_ref_pos) {
        const auto t0 = std::chrono::steady_clock::now();
        StageOutcome out;
        try {
            init = init_pos_gain(obs.y, *ctx.model, config.grid, config.conv, ctx.tables.get());
            out.position_error = init->position - p_true;
            out.velocity_error = -v_true; // the grid stage assumes a static UE
            out.iters_grid = init->iterations;
        } catch (const Error &e) {
            out.failed = true;
            out.failure = e.what();
        }
        if (want_grid)
            result.stages.emplace("grid", out);
        if (timings)
            timings->grid_seconds += seconds_since(t0);
    }

    if (want_ref_pos) {
        const auto t0 = std::chrono::steady_clock::now();
        StageOutcome out;
        if (!init) {
            out.failed = true;
            out.failure = "grid initialization failed";
        } else {
            try {
                const RefineResult rp = ref_pos_gain(obs.y, v_true, init->position, init->gain, *ctx.model, config.conv);
                // a refinement that leaves the search domain has diverged;
                // fall back to its grid anchor
                const bool inside =
                    (rp.estimate - ctx.scenario.ris.reference).norm() <= config.grid.rho_max * (1.0 + 1e-9);
                out.position_error = (inside ? rp.estimate : init->position) - p_true;
                out.velocity_error = Vec3{}; // velocity known by assumption
            } catch (const Error &e) {
                out.failed = true;
                out.failure = e.what();
            }
        }
        result.stages.emplace("ref_pos", out);
        if (timings)
            timings->refinement_seconds += seconds_since(t0);
    }

    if (want_ref_vel) {
        const auto t0 = std::chrono::steady_clock::now();
        StageOutcome out;
        try {
            const std::complex<double> alpha0 = alpha_hat(*ctx.model, p_true, Vec3{}, obs.y);
            const RefineResult rv = ref_vel(obs.y, Vec3{}, p_true, alpha0, *ctx.model, config.conv);
            out.position_error = Vec3{}; // position known by assumption
            out.velocity_error = rv.estimate - v_true;
        } catch (const Error &e) {
            out.failed = true;
            out.failure = e.what();
        }
        result.stages.emplace("ref_vel", out);
        if (timings)
            timings->refinement_seconds += seconds_since(t0);
    }

    if (want_full) {
        StageOutcome out;
        try {
            const EstimationResult est = find_pos_vel(obs.y, *ctx.model, config.grid, config.conv, ctx.tables.get());
            out.position_error = est.position - p_true;
            out.velocity_error = est.velocity - v_true;
            out.iters_grid = est.grid_iterations;
            out.iters_outer = est.outer_iterations;
            out.iters_descent = est.descent_iterations;
            if (timings) {
                for (const auto &rec : est.stage_trace) {
                    if (rec.stage == "grid")
                        timings->grid_seconds += rec.seconds;
                    else if (rec.stage == "outer")
                        timings->refinement_seconds += rec.seconds;
                    else if (rec.stage == "descent")
                        timings->descent_seconds += rec.seconds;
                }
            }
        } catch (const Error &e) {
            out.failed = true;
            out.failure = e.what();
        }
        result.stages.emplace("full", out);
    }
    return result;
}

// The table bank depends only on (rf, array, BS, profile, grid) — never on the
// UE truth or the sweep value — so sweep points under one profile seed share it.
PointContext make_point_context(const ExperimentConfig &config, int point_index, int trial_index_for_profile,
                                std::shared_ptr<GridTables> shared_tables = nullptr) {
    PointContext ctx;
    const std::uint64_t pseed = profile_seed_for(config, point_index, trial_index_for_profile);
    ctx.scenario = config.scenario.build_at(config.axis, config.values[static_cast<std::size_t>(point_index)], pseed);
    ctx.model = std::make_unique<ChannelModel>(ctx.scenario);
    ctx.tables = shared_tables ? std::move(shared_tables) : std::make_shared<GridTables>(*ctx.model, config.grid, 128);

    // Bounds are benchmarked without multipath regardless of the generative model.
    Scenario bounds_scenario = ctx.scenario;
    bounds_scenario.multipath.reset();
    const ChannelModel bounds_model(bounds_scenario);
    try {
        const BoundReport report = peb_veb(fim(bounds_model));
        ctx.peb = report.peb;
        ctx.veb = report.veb;
    } catch (const Error &) {
        ctx.peb = std::nan("");
        ctx.veb = std::nan("");
    }
    return ctx;
}

} // namespace

const char *axis_name(SweepAxis axis) {
    switch (axis) {
    case SweepAxis::Distance:
        return "distance";
    case SweepAxis::Speed:
        return "speed";
    case SweepAxis::RicianK:
        return "rician_k";
    case SweepAxis::SnrOffsetDb:
        return "snr_offset_db";
    }
    return "unknown";
}

Scenario ScenarioParams::build(std::uint64_t profile_seed) const {
    return build_at(SweepAxis::Distance, rho, profile_seed);
}

Scenario ScenarioParams::build_at(SweepAxis axis, double value, std::uint64_t profile_seed) const {
    Scenario sc;
    sc.rf = RfConstants::make(carrier_freq, bandwidth, symbol_period);
    sc.rf.tx_power = tx_power;
    sc.rf.noise_psd = noise_psd;
    sc.rf.noise_figure = noise_figure;
    sc.rf.tx_gain = tx_gain;
    sc.rf.rx_gain = rx_gain;
    sc.rf.global_phase = global_phase;

    sc.ris = build_upa(ris_rows, ris_cols, ris_spacing_wavelengths * sc.rf.wavelength);
    sc.bs_position = bs_position;
    sc.num_pilots = num_pilots;
    sc.noise_enabled = noise_enabled;
    if (rician_k)
        sc.multipath = Multipath{*rician_k};

    double point_rho = rho;
    double point_speed = speed;
    double point_gain_offset_db = gain_offset_db;
    switch (axis) {
    case SweepAxis::Distance:
        point_rho = value;
        break;
    case SweepAxis::Speed:
        point_speed = value;
        break;
    case SweepAxis::RicianK:
        sc.multipath = Multipath{value};
        break;
    case SweepAxis::SnrOffsetDb:
        point_gain_offset_db = value;
        break;
    }

    const double dir_norm = ue_direction.norm();
    if (dir_norm == 0.0)
        throw ValidationError("ScenarioParams: ue_direction must be nonzero");
    const Vec3 dir = ue_direction / dir_norm;
    sc.ue.position = sc.ris.reference + dir * point_rho;
    sc.ue.velocity = dir * point_speed;

    sc.profile = RisPhaseProfile::random(profile_seed, sc.num_pilots, static_cast<int>(sc.ris.element_count()));
    sc.ue.gain = channel_gain(sc.ue.position, sc) * std::pow(10.0, point_gain_offset_db / 20.0);
    sc.validate();
    return sc;
}

void ExperimentConfig::validate() const {
    grid.validate();
    if (trials < 1)
        throw ValidationError("ExperimentConfig: trials must be >= 1");
    if (values.empty())
        throw ValidationError("ExperimentConfig: sweep needs at least one value");
    for (double v : values) {
        if (!std::isfinite(v))
            throw ValidationError("ExperimentConfig: sweep values must be finite");
        switch (axis) {
        case SweepAxis::Distance:
            if (v < 1.0)
                throw ValidationError("ExperimentConfig: distances below the 1 m validity floor");
            break;
        case SweepAxis::Speed:
            if (v < 0.0)
                throw ValidationError("ExperimentConfig: negative speed");
            break;
        case SweepAxis::RicianK:
            if (!(v > 0.0))
                throw ValidationError("ExperimentConfig: rician_k values must be positive");
            break;
        case SweepAxis::SnrOffsetDb:
            break;
        }
    }
    if (stages == 0)
        throw ValidationError("ExperimentConfig: no stages selected");
    if (conv.objective_tolerance <= 0.0)
        throw ValidationError("ExperimentConfig: objective_tolerance must be positive");
    if (conv.max_grid_iterations < 1 || conv.max_refinement_iterations < 1 || conv.max_outer_iterations < 1 ||
        conv.max_descent_iterations < 1)
        throw ValidationError("ExperimentConfig: iteration caps must be >= 1");
}

std::uint64_t profile_seed_for(const ExperimentConfig &config, int point_index, int trial_index) {
    if (config.per_trial_profiles)
        return derive_seed(config.master_seed ^ kProfileTag, static_cast<std::uint64_t>(point_index) + 1,
                           static_cast<std::uint64_t>(trial_index) + 1);
    return derive_seed(config.master_seed ^ kProfileTag, 0, 0);
}

std::uint64_t trial_seed_for(const ExperimentConfig &config, int point_index, int trial_index) {
    return derive_seed(config.master_seed, static_cast<std::uint64_t>(point_index) + 1,
                       static_cast<std::uint64_t>(trial_index) + 1);
}

TrialResult run_trial(const ExperimentConfig &config, int point_index, int trial_index) {
    config.validate();
    if (point_index < 0 || point_index >= static_cast<int>(config.values.size()))
        throw ValidationError("run_trial: point index out of range");
    if (trial_index < 0 || trial_index >= config.trials)
        throw ValidationError("run_trial: trial index out of range");
    const PointContext ctx = make_point_context(config, point_index, trial_index);
    return run_trial_impl(config, ctx, point_index, trial_index, nullptr);
}

double aggregate_rmse(const std::vector<Vec3> &errors) {
    if (errors.empty())
        throw ValidationError("aggregate_rmse: empty error list");
    double acc = 0.0;
    for (const auto &e : errors)
        acc += e.squared_norm();
    return std::sqrt(acc / static_cast<double>(errors.size()));
}

SweepResult run_sweep(const ExperimentConfig &config) {
    config.validate();
    const auto t_start = std::chrono::steady_clock::now();

    SweepResult result;
    result.axis = config.axis;
    result.master_seed = config.master_seed;

    const int n_points = static_cast<int>(config.values.size());
    const bool shared_context = !config.per_trial_profiles;

    // Per-point contexts are shared across trials when the profile policy
    // allows; the grid table bank is additionally shared across points.
    std::vector<std::unique_ptr<PointContext>> contexts;
    const auto t_tables = std::chrono::steady_clock::now();
    if (shared_context) {
        contexts.resize(static_cast<std::size_t>(n_points));
        std::shared_ptr<GridTables> shared_tables;
        for (int p = 0; p < n_points; ++p) {
            contexts[static_cast<std::size_t>(p)] =
                std::make_unique<PointContext>(make_point_context(config, p, 0, shared_tables));
            if (p == 0)
                shared_tables = contexts[0]->tables;
            for (const auto &w : contexts[static_cast<std::size_t>(p)]->scenario.validity_warnings())
                result.warnings.push_back(axis_name(config.axis) + std::string("=") +
                                          format_double(config.values[static_cast<std::size_t>(p)]) + ": " + w);
        }
    }
    result.timings.table_seconds = seconds_since(t_tables);

    const int total = n_points * config.trials;
    std::vector<TrialResult> trials(static_cast<std::size_t>(total));
    std::atomic<int> next{0};
    std::mutex timings_mutex;

    int n_threads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads < 1)
        n_threads = 1;
    n_threads = std::min(n_threads, total);

    const auto worker = [&]() {
        StageTimings local{};
        for (;;) {
            const int task = next.fetch_add(1);
            if (task >= total)
                break;
            const int point = task / config.trials;
            const int trial = task % config.trials;
            if (shared_context) {
                trials[static_cast<std::size_t>(task)] =
                    run_trial_impl(config, *contexts[static_cast<std::size_t>(point)], point, trial, &local);
            } else {
                const PointContext ctx = make_point_context(config, point, trial);
                trials[static_cast<std::size_t>(task)] = run_trial_impl(config, ctx, point, trial, &local);
            }
        }
        std::lock_guard<std::mutex> lock(timings_mutex);
        result.timings.grid_seconds += local.grid_seconds;
        result.timings.refinement_seconds += local.refinement_seconds;
        result.timings.descent_seconds += local.descent_seconds;
    };

    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t)
            pool.emplace_back(worker);
        for (auto &t : pool)
            t.join();
    }

    // Index-ordered aggregation: one row per (point, stage).
    const char *stage_names[] = {"grid", "ref_pos", "ref_vel", "full"};
    const unsigned stage_bits[] = {kStageGrid, kStageRefPos, kStageRefVel, kStageFull};
    for (int p = 0; p < n_points; ++p) {
        double peb = 0.0, veb = 0.0;
        if (shared_context) {
            peb = contexts[static_cast<std::size_t>(p)]->peb;
            veb = contexts[static_cast<std::size_t>(p)]->veb;
        } else {
            const PointContext ctx = make_point_context(config, p, 0);
            peb = ctx.peb;
            veb = ctx.veb;
        }
        for (int s = 0; s < 4; ++s) {
            if ((config.stages & stage_bits[s]) == 0)
                continue;
            PointSummary row;
            row.sweep_value = config.values[static_cast<std::size_t>(p)];
            row.stage = stage_names[s];
            row.peb = peb;
            row.veb = veb;
            row.trials = config.trials;
            std::vector<Vec3> pos_errors, vel_errors;
            double iters_outer = 0.0, iters_grid = 0.0, iters_descent = 0.0;
            int ok = 0;
            for (int t = 0; t < config.trials; ++t) {
                const TrialResult &tr = trials[static_cast<std::size_t>(p * config.trials + t)];
                const auto it = tr.stages.find(stage_names[s]);
                if (it == tr.stages.end() || it->second.failed) {
                    ++row.failures;
                    continue;
                }
                pos_errors.push_back(it->second.position_error);
                vel_errors.push_back(it->second.velocity_error);
                iters_outer += it->second.iters_outer;
                iters_grid += it->second.iters_grid;
                iters_descent += it->second.iters_descent;
                ++ok;
            }
            if (ok > 0) {
                row.rmse_pos = aggregate_rmse(pos_errors);
                row.rmse_vel = aggregate_rmse(vel_errors);
                row.mean_iters_outer = iters_outer / ok;
                row.mean_iters_grid = iters_grid / ok;
                row.mean_iters_descent = iters_descent / ok;
            } else {
                row.rmse_pos = std::nan("");
                row.rmse_vel = std::nan("");
            }
            result.rows.push_back(std::move(row));
        }
    }
    result.timings.total_seconds = seconds_since(t_start);
    return result;
}

ConvergenceTraceResult convergence_trace(const ExperimentConfig &config) {
    config.validate();
    const PointContext ctx = make_point_context(config, 0, 0);
    const Observation obs = ctx.model->observe(trial_seed_for(config, 0, 0));
    const EstimationResult est = find_pos_vel(obs.y, *ctx.model, config.grid, config.conv, ctx.tables.get());
    ConvergenceTraceResult trace;
    trace.grid_objectives = est.grid_objective_trace;
    trace.outer_objectives = est.outer_objective_trace;
    return trace;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_sweep_csv(std::ostream &os, const SweepResult &result) {
    os << "sweep_axis,sweep_value,stage,rmse_pos_m,rmse_vel_mps,peb_m,veb_mps,"
          "mean_iters_outer,mean_iters_grid,mean_iters_descent,failures,trials,seed\n";
    for (const auto &row : result.rows) {
        os << axis_name(result.axis) << ',' << format_double(row.sweep_value) << ',' << row.stage << ','
           << format_double(row.rmse_pos) << ',' << format_double(row.rmse_vel) << ',' << format_double(row.peb)
           << ',' << format_double(row.veb) << ',' << format_double(row.mean_iters_outer) << ','
           << format_double(row.mean_iters_grid) << ',' << format_double(row.mean_iters_descent) << ','
           << row.failures << ',' << row.trials << ',' << result.master_seed << '\n';
    }
}

} // namespace risloc
