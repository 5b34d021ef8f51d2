// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#include <benchmark/benchmark.h>

#include "risloc/bounds.hpp"
#include "risloc/estimator.hpp"
#include "risloc/harness.hpp"

namespace {

risloc::Scenario table_scenario() {
    risloc::ScenarioParams params;
    return params.build(0x5eedULL);
}

void ChannelVector(benchmark::State &state) {
    const risloc::Scenario sc = table_scenario();
    const risloc::ChannelModel model(sc);
    for (auto _ : state) {
        auto h = model.h_vector(sc.ue.position, sc.ue.velocity);
        benchmark::DoNotOptimize(h);
    }
}
BENCHMARK(ChannelVector);

void ConcentratedObjective(benchmark::State &state) {
    const risloc::Scenario sc = table_scenario();
    const risloc::ChannelModel model(sc);
    const risloc::Observation obs = model.observe(1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            risloc::concentrated_objective(model, sc.ue.position, sc.ue.velocity, obs.y));
    }
}
BENCHMARK(ConcentratedObjective);

void PositionRefinement(benchmark::State &state) {
    const risloc::Scenario sc = table_scenario();
    const risloc::ChannelModel model(sc);
    const risloc::Observation obs = model.observe(1);
    const risloc::Vec3 p0 = sc.ue.position + risloc::Vec3{0.01, -0.01, 0.005};
    const auto alpha0 = risloc::alpha_hat(model, p0, sc.ue.velocity, obs.y);
    risloc::ConvergenceConfig conv;
    for (auto _ : state) {
        auto r = risloc::ref_pos_gain(obs.y, sc.ue.velocity, p0, alpha0, model, conv);
        benchmark::DoNotOptimize(r);
    }
}
BENCHMARK(PositionRefinement);

void VelocityRefinement(benchmark::State &state) {
    const risloc::Scenario sc = table_scenario();
    const risloc::ChannelModel model(sc);
    const risloc::Observation obs = model.observe(1);
    const auto alpha0 = risloc::alpha_hat(model, sc.ue.position, risloc::Vec3{}, obs.y);
    risloc::ConvergenceConfig conv;
    for (auto _ : state) {
        auto r = risloc::ref_vel(obs.y, risloc::Vec3{}, sc.ue.position, alpha0, model, conv);
        benchmark::DoNotOptimize(r);
    }
}
BENCHMARK(VelocityRefinement);

void FisherInformation(benchmark::State &state) {
    const risloc::Scenario sc = table_scenario();
    const risloc::ChannelModel model(sc);
    for (auto _ : state) {
        auto f = risloc::fim(model);
        benchmark::DoNotOptimize(f);
    }
}
BENCHMARK(FisherInformation);

void GridInitialization(benchmark::State &state) {
    const risloc::Scenario sc = table_scenario();
    const risloc::ChannelModel model(sc);
    const risloc::Observation obs = model.observe(1);
    risloc::GridSpec grid;
    risloc::ConvergenceConfig conv;
    risloc::GridTables tables(model, grid);
    for (auto _ : state) {
        auto r = risloc::init_pos_gain(obs.y, model, grid, conv, &tables);
        benchmark::DoNotOptimize(r);
    }
}
BENCHMARK(GridInitialization)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
