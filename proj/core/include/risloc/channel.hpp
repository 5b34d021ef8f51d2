// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#pragma once

#include <complex>
#include <cstdint>

#include <Eigen/Dense>

#include "risloc/scenario.hpp"

namespace risloc {

/// Per-element path-length difference ||p_m - (p + v*l*Ts)|| - ||p_r - p||,
/// no approximation. l runs 1..L.
double flm_exact(const Vec3 &p, const Vec3 &v, int ell, int m, const RisArray &ris, double ts);

/// First-order mobility approximation d_m - d_r + u_m(p)^T v * l * Ts. This is
/// the generative model everywhere; flm_exact exists for approximation-error tests.
double flm_approx(const Vec3 &p, const Vec3 &v, int ell, int m, const RisArray &ris, double ts);

/// Speed bound under which the first-order mobility model is valid:
/// min_m ||p_m - p|| / (L * Ts).
double velocity_limit(const RisArray &ris, const Vec3 &p, int num_pilots, double ts);

/// Narrowband channel gain with global phase offset:
/// lambda^2 sqrt(P Gt Gr) / ((4 pi)^2 ||p_r - p|| ||p_r - p_b||) * exp(j psi).
std::complex<double> channel_gain(const Vec3 &p, const Scenario &scenario);

/// SNR in dB of a gain against the scenario noise floor: |alpha|^2 / (N0 nf W).
double snr_db(std::complex<double> alpha, const RfConstants &rf);

/// Immutable per-scenario evaluation context. Precomputes the combined
/// profile/BS weights w_l = omega_l ⊙ a(p_b) once; every estimator and bound
/// evaluation goes through it.
class ChannelModel {
  public:
    explicit ChannelModel(const Scenario &scenario);

    const Scenario &scenario() const { return scenario_; }
    int num_pilots() const { return num_pilots_; }
    int num_elements() const { return num_elements_; }
    double wavenumber() const { return wavenumber_; } // 2 pi / lambda
    double symbol_period() const { return ts_; }
    /// Element positions, one column per element (3 x M).
    const Eigen::Matrix3Xd &element_positions() const { return elements_; }
    /// Combined weights, one row per pilot (L x M).
    const Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> &weights() const {
        return weights_;
    }

    /// Near-field steering a(p_l) for pilot `ell` (1-based), unit-modulus entries.
    Eigen::VectorXcd steering_nf(const Vec3 &p, const Vec3 &v, int ell) const;

    /// h(p, v): h_l = w_l^T a(p_l), length L.
    Eigen::VectorXcd h_vector(const Vec3 &p, const Vec3 &v) const;

    /// Static special case h(p, 0) = W^T a(p); cheaper, used by the grid stages.
    Eigen::VectorXcd h_static(const Vec3 &p) const;

    /// y = alpha h + n with n ~ CN(0, N0 W nf I); deterministic in the seed.
    /// With multipath enabled the deterministic steering is Rician-mixed with a
    /// diffuse component drawn once per observation.
    Observation observe(std::uint64_t seed) const;

    /// Distances from every element to p (length M) and to the reference.
    Eigen::VectorXd element_distances(const Vec3 &p) const;
    double reference_distance(const Vec3 &p) const;

  private:
    Scenario scenario_;
    Eigen::Matrix3Xd elements_;
    Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> weights_;
    int num_pilots_ = 0;
    int num_elements_ = 0;
    double wavenumber_ = 0.0;
    double ts_ = 0.0;
};

/// Far-field steering from angles only: [a]_m = exp(-j (p_m - p_r)^T k(phi, theta)).
Eigen::VectorXcd steering_ff(double theta, double phi, const RisArray &ris, double wavelength);

} // namespace risloc
