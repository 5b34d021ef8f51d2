// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#include "risloc/cli.hpp"

#include <chrono>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "risloc/config.hpp"

namespace risloc {

namespace {

struct CommonOptions {
    std::string config_path;
    std::string out_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::optional<int> threads;
    std::optional<double> rho;
    std::optional<double> speed;
    std::vector<double> values;
    bool no_noise = false;
};

void add_common_options(CLI::App *cmd, CommonOptions &opt, const std::string &default_out) {
    opt.out_path = default_out;
    cmd->add_option("--config", opt.config_path, "Config file (sectioned key=value text)");
    cmd->add_option("--out", opt.out_path, "Output CSV path");
    cmd->add_option("--seed", opt.seed, "Master seed (64-bit)");
    cmd->add_option("--trials", opt.trials, "Monte-Carlo trials per sweep point");
    cmd->add_option("--threads", opt.threads, "Worker threads (0 = hardware parallelism)");
    cmd->add_option("--set", opt.overrides, "Config override section.key=value (repeatable)");
    cmd->add_option("--rho", opt.rho, "RIS-UE distance in meters");
    cmd->add_option("--v", opt.speed, "UE speed in m/s");
    cmd->add_option("--values", opt.values, "Sweep values (comma separated)")->delimiter(',');
    cmd->add_flag("--no-noise", opt.no_noise, "Disable measurement noise");
}

ExperimentConfig build_config(const CommonOptions &opt, SweepAxis axis, std::vector<double> default_values) {
    ConfigMap map;
    if (!opt.config_path.empty())
        map = parse_config_file(opt.config_path);
    for (const auto &assignment : opt.overrides)
        apply_override(map, assignment);
    ExperimentConfig cfg = experiment_from_map(map);
    cfg.axis = axis;
    if (map.find("experiment.sweep_values") == map.end())
        cfg.values = std::move(default_values);
    if (!opt.values.empty())
        cfg.values = opt.values;
    if (opt.seed)
        cfg.master_seed = *opt.seed;
    if (opt.trials)
        cfg.trials = *opt.trials;
    if (opt.threads)
        cfg.threads = *opt.threads;
    if (opt.rho)
        cfg.scenario.rho = *opt.rho;
    if (opt.speed)
        cfg.scenario.speed = *opt.speed;
    if (opt.no_noise)
        cfg.scenario.noise_enabled = false;
    return cfg;
}

void write_file(const std::string &path, const std::string &content) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw ValidationError("cannot open output file '" + path + "'");
    f << content;
}

void write_metadata(const std::string &out_path, const std::string &subcommand, const ExperimentConfig &cfg,
                    const SweepResult *sweep) {
    nlohmann::ordered_json run;
    run["event"] = "run";
    run["subcommand"] = subcommand;
    run["seed"] = cfg.master_seed;
    run["config_hash"] = config_hash(cfg);
    run["threads"] = cfg.threads;
    run["out"] = out_path;
    std::ostringstream os;
    os << run.dump() << '\n';
    if (sweep) {
        nlohmann::ordered_json timing;
        timing["event"] = "timings";
        timing["table_seconds"] = sweep->timings.table_seconds;
        timing["grid_seconds"] = sweep->timings.grid_seconds;
        timing["refinement_seconds"] = sweep->timings.refinement_seconds;
        timing["descent_seconds"] = sweep->timings.descent_seconds;
        timing["total_seconds"] = sweep->timings.total_seconds;
        const double stage_sum =
            sweep->timings.grid_seconds + sweep->timings.refinement_seconds + sweep->timings.descent_seconds;
        if (stage_sum > 0.0) {
            timing["grid_fraction"] = sweep->timings.grid_seconds / stage_sum;
            timing["refinement_fraction"] = sweep->timings.refinement_seconds / stage_sum;
            timing["descent_fraction"] = sweep->timings.descent_seconds / stage_sum;
        }
        os << timing.dump() << '\n';
        for (const auto &w : sweep->warnings) {
            nlohmann::ordered_json warn;
            warn["event"] = "warning";
            warn["text"] = w;
            os << warn.dump() << '\n';
        }
    }
    write_file(out_path + ".meta.jsonl", os.str());
}

int run_sweep_command(const CommonOptions &opt, SweepAxis axis, std::vector<double> defaults,
                      const std::string &name, std::ostream &out) {
    const ExperimentConfig cfg = build_config(opt, axis, std::move(defaults));
    cfg.validate();
    const SweepResult result = run_sweep(cfg);
    std::ostringstream csv;
    write_sweep_csv(csv, result);
    write_file(opt.out_path, csv.str());
    write_metadata(opt.out_path, name, cfg, &result);
    out << "wrote " << result.rows.size() << " rows to " << opt.out_path << "\n";
    return 0;
}

int run_bounds_command(const CommonOptions &opt, std::ostream &out) {
    ExperimentConfig cfg = build_config(opt, SweepAxis::Distance, {2.0});
    cfg.values = {cfg.scenario.rho};
    cfg.trials = 1;
    cfg.validate();
    Scenario sc = cfg.scenario.build(profile_seed_for(cfg, 0, 0));
    sc.multipath.reset();
    const ChannelModel model(sc);
    const BoundReport report = peb_veb(fim(model));

    SweepResult result;
    result.axis = SweepAxis::Distance;
    result.master_seed = cfg.master_seed;
    PointSummary row;
    row.sweep_value = cfg.scenario.rho;
    row.stage = "bounds";
    row.rmse_pos = std::nan("");
    row.rmse_vel = std::nan("");
    row.peb = report.peb;
    row.veb = report.veb;
    row.trials = 0;
    result.rows.push_back(row);
    std::ostringstream csv;
    write_sweep_csv(csv, result);
    write_file(opt.out_path, csv.str());
    write_metadata(opt.out_path, "bounds", cfg, nullptr);
    out << "PEB " << format_double(report.peb) << " m, VEB " << format_double(report.veb)
        << " m/s (condition number " << format_double(report.condition_number) << ")\n";
    return 0;
}

int run_single_trial_command(const CommonOptions &opt, std::ostream &out) {
    ExperimentConfig cfg = build_config(opt, SweepAxis::Distance, {2.0});
    cfg.values = {cfg.scenario.rho};
    cfg.trials = 1;
    cfg.stages = kStageFull;
    cfg.validate();
    const TrialResult trial = run_trial(cfg, 0, 0);
    const StageOutcome &full = trial.stages.at("full");
    if (full.failed)
        throw NumericalFailure("single trial failed: " + full.failure);

    SweepResult result;
    result.axis = cfg.axis;
    result.master_seed = cfg.master_seed;
    PointSummary row;
    row.sweep_value = cfg.scenario.rho;
    row.stage = "full";
    row.rmse_pos = full.position_error.norm();
    row.rmse_vel = full.velocity_error.norm();
    row.trials = 1;
    row.mean_iters_outer = full.iters_outer;
    row.mean_iters_grid = full.iters_grid;
    row.mean_iters_descent = full.iters_descent;
    const ExperimentConfig &ccfg = cfg;
    Scenario sc = ccfg.scenario.build(profile_seed_for(ccfg, 0, 0));
    sc.multipath.reset();
    try {
        const BoundReport report = peb_veb(fim(ChannelModel(sc)));
        row.peb = report.peb;
        row.veb = report.veb;
    } catch (const Error &) {
        row.peb = std::nan("");
        row.veb = std::nan("");
    }
    result.rows.push_back(row);
    std::ostringstream csv;
    write_sweep_csv(csv, result);
    write_file(opt.out_path, csv.str());
    write_metadata(opt.out_path, "single-trial", cfg, nullptr);
    out << "position error " << format_double(full.position_error.norm()) << " m, velocity error "
        << format_double(full.velocity_error.norm()) << " m/s\n";
    return 0;
}

int run_convergence_command(const CommonOptions &opt, std::ostream &out) {
    ExperimentConfig cfg = build_config(opt, SweepAxis::Distance, {2.0});
    cfg.values = {cfg.scenario.rho};
    cfg.trials = 1;
    cfg.stages = kStageFull;
    cfg.validate();
    const ConvergenceTraceResult trace = convergence_trace(cfg);
    std::ostringstream csv;
    csv << "trace,iteration,objective\n";
    for (std::size_t i = 0; i < trace.grid_objectives.size(); ++i)
        csv << "grid," << (i + 1) << ',' << format_double(trace.grid_objectives[i]) << '\n';
    for (std::size_t i = 0; i < trace.outer_objectives.size(); ++i)
        csv << "outer," << (i + 1) << ',' << format_double(trace.outer_objectives[i]) << '\n';
    write_file(opt.out_path, csv.str());
    write_metadata(opt.out_path, "convergence", cfg, nullptr);
    out << "grid iterations " << trace.grid_objectives.size() << ", outer iterations "
        << trace.outer_objectives.size() << "\n";
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"risloc: RIS-aided near-field localization and velocity estimation toolkit"};
    app.require_subcommand(1);

    CommonOptions sweep_distance_opt, sweep_velocity_opt, sweep_multipath_opt, sweep_snr_opt;
    CommonOptions convergence_opt, bounds_opt, single_trial_opt;

    auto *sweep_distance =
        app.add_subcommand("sweep-distance", "RMSE and bounds versus RIS-UE distance");
    add_common_options(sweep_distance, sweep_distance_opt, "sweep_distance.csv");
    auto *sweep_velocity = app.add_subcommand("sweep-velocity", "RMSE and bounds versus UE speed");
    add_common_options(sweep_velocity, sweep_velocity_opt, "sweep_velocity.csv");
    auto *sweep_multipath =
        app.add_subcommand("sweep-multipath", "RMSE versus the Rician K-factor of uncontrolled multipath");
    add_common_options(sweep_multipath, sweep_multipath_opt, "sweep_multipath.csv");
    auto *sweep_snr = app.add_subcommand("sweep-snr", "RMSE and bounds versus an SNR offset in dB");
    add_common_options(sweep_snr, sweep_snr_opt, "sweep_snr.csv");
    auto *convergence =
        app.add_subcommand("convergence", "Per-iteration objective traces of the grid and outer loops");
    add_common_options(convergence, convergence_opt, "convergence.csv");
    auto *bounds = app.add_subcommand("bounds", "Position and velocity error bounds for one scenario");
    add_common_options(bounds, bounds_opt, "bounds.csv");
    auto *single_trial = app.add_subcommand("single-trial", "One seeded estimation trial");
    add_common_options(single_trial, single_trial_opt, "single_trial.csv");

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp &e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError &e) {
        err << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        if (sweep_distance->parsed())
            return run_sweep_command(sweep_distance_opt, SweepAxis::Distance, {1, 2, 4, 6, 8, 10}, "sweep-distance",
                                     out);
        if (sweep_velocity->parsed())
            return run_sweep_command(sweep_velocity_opt, SweepAxis::Speed, {0, 1, 2, 5, 10, 20, 50}, "sweep-velocity",
                                     out);
        if (sweep_multipath->parsed())
            return run_sweep_command(sweep_multipath_opt, SweepAxis::RicianK, {5, 10, 100, 1000}, "sweep-multipath",
                                     out);
        if (sweep_snr->parsed())
            return run_sweep_command(sweep_snr_opt, SweepAxis::SnrOffsetDb, {-20, -10, 0, 10}, "sweep-snr", out);
        if (convergence->parsed())
            return run_convergence_command(convergence_opt, out);
        if (bounds->parsed())
            return run_bounds_command(bounds_opt, out);
        if (single_trial->parsed())
            return run_single_trial_command(single_trial_opt, out);
    } catch (const ParseError &e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError &e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error &e) {
        err << "runtime error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        err << "runtime error: " << e.what() << "\n";
        return 2;
    }
    err << app.help();
    return 1;
}

} // namespace risloc
