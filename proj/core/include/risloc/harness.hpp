// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "risloc/bounds.hpp"
#include "risloc/estimator.hpp"

namespace risloc {

enum class SweepAxis { Distance, Speed, RicianK, SnrOffsetDb };

const char *axis_name(SweepAxis axis);

/// Estimator stages a sweep can report. `grid` doubles as the zero-velocity
/// baseline; `ref_pos` refines it with the true velocity; `ref_vel` estimates
/// velocity from the true position; `full` is the complete pipeline.
enum StageMask : unsigned {
    kStageGrid = 1u,
    kStageRefPos = 2u,
    kStageRefVel = 4u,
    kStageFull = 8u,
};

/// Scenario knobs in SI units; the sweep axis overrides one of them per point.
struct ScenarioParams {
    double carrier_freq = 28e9;
    double bandwidth = 1e6;
    std::optional<double> symbol_period; // overrides 1/bandwidth
    double tx_power = 0.1;                            // 20 dBm
    double noise_psd = 3.9810717055349854e-21;        // -174 dBm/Hz
    double noise_figure = 6.309573444801933;          // 8 dB
    double tx_gain = 1.0;
    double rx_gain = 1.0;
    double global_phase = 0.0;
    int ris_rows = 32;
    int ris_cols = 32;
    double ris_spacing_wavelengths = 0.5;
    Vec3 bs_position{3.0, 3.0, 1.0};
    Vec3 ue_direction{-1.0, 2.0, 1.0}; // normalized when the scenario is built
    double rho = 2.0;                  // m
    double speed = 1.0;                // m/s
    int num_pilots = 40;
    std::optional<double> rician_k;
    bool noise_enabled = true;
    double gain_offset_db = 0.0;

    Scenario build(std::uint64_t profile_seed) const;
    Scenario build_at(SweepAxis axis, double value, std::uint64_t profile_seed) const;
};

struct ExperimentConfig {
    ScenarioParams scenario;
    GridSpec grid;
    ConvergenceConfig conv;
    SweepAxis axis = SweepAxis::Distance;
    std::vector<double> values;
    int trials = 100;
    std::uint64_t master_seed = 1;
    unsigned stages = kStageGrid | kStageRefPos | kStageRefVel | kStageFull;
    int threads = 0; // 0 = hardware concurrency
    bool per_trial_profiles = false;

    void validate() const;
};

/// RIS profile stream is kept apart from the per-trial noise streams.
std::uint64_t profile_seed_for(const ExperimentConfig &config, int point_index, int trial_index);
std::uint64_t trial_seed_for(const ExperimentConfig &config, int point_index, int trial_index);

struct StageOutcome {
    bool failed = false;
    std::string failure;
    Vec3 position_error;  // estimate - truth
    Vec3 velocity_error;
    int iters_grid = 0;
    int iters_outer = 0;
    int iters_descent = 0;
};

struct TrialResult {
    std::uint64_t seed = 0;
    std::map<std::string, StageOutcome> stages;
};

struct PointSummary {
    double sweep_value = 0.0;
    std::string stage;
    double rmse_pos = 0.0;
    double rmse_vel = 0.0;
    double peb = 0.0;
    double veb = 0.0;
    double mean_iters_outer = 0.0;
    double mean_iters_grid = 0.0;
    double mean_iters_descent = 0.0;
    int failures = 0;
    int trials = 0;
};

struct StageTimings {
    double grid_seconds = 0.0;
    double refinement_seconds = 0.0;
    double descent_seconds = 0.0;
    double table_seconds = 0.0;
    double total_seconds = 0.0;
};

struct SweepResult {
    SweepAxis axis = SweepAxis::Distance;
    std::uint64_t master_seed = 0;
    std::vector<PointSummary> rows;
    StageTimings timings;
    std::vector<std::string> warnings;
};

/// One seeded estimation trial at one sweep point. Deterministic in
/// (config, point_index, trial_index); estimator failures are recorded, not thrown.
TrialResult run_trial(const ExperimentConfig &config, int point_index, int trial_index);

/// Full Monte-Carlo sweep: trials run on a worker pool, aggregation is
/// index-ordered so the result is independent of the thread count.
SweepResult run_sweep(const ExperimentConfig &config);

/// RMSE = sqrt(mean ||e||^2); rejects an empty slate.
double aggregate_rmse(const std::vector<Vec3> &errors);

struct ConvergenceTraceResult {
    std::vector<double> grid_objectives;  // Algorithm 2 loop, range-stage objective
    std::vector<double> outer_objectives; // Algorithm 1 outer loop
};

/// Per-iteration objective series for a single seeded trial at the first sweep value.
ConvergenceTraceResult convergence_trace(const ExperimentConfig &config);

/// The sweep CSV contract: fixed header, one row per (value, stage),
/// floating point at 17 significant digits.
void write_sweep_csv(std::ostream &os, const SweepResult &result);

std::string format_double(double v);

} // namespace risloc
