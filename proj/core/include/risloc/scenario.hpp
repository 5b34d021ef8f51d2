// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "risloc/geometry.hpp"

namespace risloc {

inline constexpr double kSpeedOfLight = 299792458.0;

/// RF-chain constants. Everything is stored in SI linear units; dB/dBm
/// conversion happens once at the config boundary.
struct RfConstants {
    double carrier_freq = 28e9;   // Hz
    double wavelength = 0.0;      // m, c / carrier_freq
    double bandwidth = 1e6;       // Hz
    double symbol_period = 0.0;   // s, 1 / bandwidth unless overridden
    bool ts_overridden = false;   // records an explicit symbol_period
    double tx_power = 0.1;        // W
    double noise_psd = 3.9810717055349854e-21; // W/Hz (-174 dBm/Hz)
    double noise_figure = 6.309573444801933;   // linear (8 dB)
    double tx_gain = 1.0;
    double rx_gain = 1.0;
    double global_phase = 0.0;    // rad

    static RfConstants make(double carrier_freq_hz, double bandwidth_hz,
                            std::optional<double> symbol_period_s = std::nullopt);

    double noise_variance() const { return noise_psd * bandwidth * noise_figure; }
    void validate() const;
};

/// Mobile terminal truth state used by the generative model.
struct UeState {
    Vec3 position;
    Vec3 velocity;
    std::complex<double> gain{0.0, 0.0};

    void validate() const;
};

/// One unit-modulus reflection coefficient per element and pilot,
/// stored as phases (L x M).
struct RisPhaseProfile {
    Eigen::MatrixXd phases; // L x M radians

    /// I.i.d. uniform phases on [0, 2pi). Row l is seeded from (seed, l) so a
    /// profile for a longer frame extends a shorter one pilot-for-pilot.
    static RisPhaseProfile random(std::uint64_t seed, int num_pilots, int num_elements);

    int num_pilots() const { return static_cast<int>(phases.rows()); }
    int num_elements() const { return static_cast<int>(phases.cols()); }
};

/// Rician multipath switch for the RIS-UE hop.
struct Multipath {
    double rician_k = 0.0; // power ratio of the deterministic path, > 0
};

/// Full static description of one experiment.
struct Scenario {
    RfConstants rf;
    RisArray ris;
    Vec3 bs_position{3.0, 3.0, 1.0};
    UeState ue;
    RisPhaseProfile profile;
    int num_pilots = 40;
    std::optional<Multipath> multipath;
    bool noise_enabled = true;

    /// Hard invariants; throws ValidationError naming the violation.
    void validate() const;
    /// Soft advisories, e.g. the mobility-approximation validity bound.
    std::vector<std::string> validity_warnings() const;
};

/// One stacked observation frame plus the noise variance that generated it.
struct Observation {
    Eigen::VectorXcd y;
    double noise_variance = 0.0;
    std::uint64_t seed = 0;
};

} // namespace risloc
