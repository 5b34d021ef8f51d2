// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#include "risloc/scenario.hpp"

#include <cmath>
#include <limits>

#include "risloc/rng.hpp"

namespace risloc {

RfConstants RfConstants::make(double carrier_freq_hz, double bandwidth_hz, std::optional<double> symbol_period_s) {
    RfConstants rf;
    rf.carrier_freq = carrier_freq_hz;
    rf.wavelength = kSpeedOfLight / carrier_freq_hz;
    rf.bandwidth = bandwidth_hz;
    if (symbol_period_s) {
        rf.symbol_period = *symbol_period_s;
        rf.ts_overridden = true;
    } else {
        rf.symbol_period = 1.0 / bandwidth_hz;
    }
    return rf;
}

void RfConstants::validate() const {
    if (!(carrier_freq > 0.0) || !(bandwidth > 0.0))
        throw ValidationError("RfConstants: carrier_freq and bandwidth must be positive");
    // symbol_period == 0 is allowed only as an explicit override (static-frame limit)
    if (!(symbol_period > 0.0) && !(ts_overridden && symbol_period == 0.0))
        throw ValidationError("RfConstants: symbol_period must be positive");
    const double lambda_expected = kSpeedOfLight / carrier_freq;
    if (std::abs(wavelength - lambda_expected) > 1e-9 * lambda_expected)
        throw ValidationError("RfConstants: wavelength inconsistent with carrier frequency");
    if (!ts_overridden && std::abs(symbol_period * bandwidth - 1.0) > 1e-12)
        throw ValidationError("RfConstants: symbol_period must equal 1/bandwidth unless overridden");
    if (!(tx_power > 0.0) || !(noise_psd > 0.0) || !(noise_figure > 0.0))
        throw ValidationError("RfConstants: powers and noise figure must be positive");
}

void UeState::validate() const {
    if (!std::isfinite(gain.real()) || !std::isfinite(gain.imag()))
        throw ValidationError("UeState: non-finite gain");
    if (gain == std::complex<double>(0.0, 0.0))
        throw ValidationError("UeState: zero gain is not usable generatively");
}

RisPhaseProfile RisPhaseProfile::random(std::uint64_t seed, int num_pilots, int num_elements) {
    RisPhaseProfile p;
    p.phases.resize(num_pilots, num_elements);
    constexpr double two_pi = 6.283185307179586476925286766559;
    for (int l = 0; l < num_pilots; ++l) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(l)));
        for (int m = 0; m < num_elements; ++m)
            p.phases(l, m) = rng.uniform(0.0, two_pi);
    }
    return p;
}

void Scenario::validate() const {
    rf.validate();
    ue.validate();
    if (num_pilots < 3)
        throw ValidationError("Scenario: num_pilots must be >= 3 (closed-form refinements need L >= 3)");
    if (ris.element_count() < 1)
        throw ValidationError("Scenario: empty RIS");
    if (profile.num_pilots() != num_pilots || profile.num_elements() != static_cast<int>(ris.element_count()))
        throw ValidationError("Scenario: phase profile dimensions do not match L x M");
    for (const auto &pm : ris.elements)
        if ((pm - ue.position).norm() == 0.0)
            throw ValidationError("Scenario: UE coincides with a RIS element");
    if ((ue.position - ris.reference).norm() == 0.0)
        throw ValidationError("Scenario: UE coincides with the RIS reference");
    if (multipath && !(multipath->rician_k > 0.0))
        throw ValidationError("Scenario: rician_k must be positive");
}

std::vector<std::string> Scenario::validity_warnings() const {
    std::vector<std::string> warnings;
    double min_dist = std::numeric_limits<double>::infinity();
    for (const auto &pm : ris.elements)
        min_dist = std::min(min_dist, (pm - ue.position).norm());
    const double displacement = ue.velocity.norm() * num_pilots * rf.symbol_period;
    if (displacement >= 0.1 * min_dist)
        warnings.push_back("frame displacement " + std::to_string(displacement) +
                           " m is not small against the closest element distance " + std::to_string(min_dist) +
                           " m; the first-order mobility model degrades");
    return warnings;
}

} // namespace risloc
