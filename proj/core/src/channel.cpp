// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#include "risloc/channel.hpp"

#include <cmath>

#include "risloc/rng.hpp"

namespace risloc {

namespace {
constexpr double kPi = 3.141592653589793238462643383279;

void check_indices(int ell, int m, int num_elements) {
    if (ell < 1)
        throw ValidationError("pilot index must be >= 1");
    if (m < 1 || m > num_elements)
        throw ValidationError("element index out of range");
}
} // namespace

double flm_exact(const Vec3 &p, const Vec3 &v, int ell, int m, const RisArray &ris, double ts) {
    check_indices(ell, m, static_cast<int>(ris.element_count()));
    const Vec3 &pm = ris.elements[static_cast<std::size_t>(m - 1)];
    if ((pm - p).norm() == 0.0)
        throw DegenerateGeometry("flm: UE coincides with RIS element");
    const Vec3 displaced = p + v * (static_cast<double>(ell) * ts);
    return (pm - displaced).norm() - (ris.reference - p).norm();
}

double flm_approx(const Vec3 &p, const Vec3 &v, int ell, int m, const RisArray &ris, double ts) {
    check_indices(ell, m, static_cast<int>(ris.element_count()));
    const Vec3 &pm = ris.elements[static_cast<std::size_t>(m - 1)];
    const Vec3 delta = p - pm;
    const double dm = delta.norm();
    if (dm == 0.0)
        throw DegenerateGeometry("flm: UE coincides with RIS element");
    const double dr = (ris.reference - p).norm();
    return dm - dr + delta.dot(v) / dm * static_cast<double>(ell) * ts;
}

double velocity_limit(const RisArray &ris, const Vec3 &p, int num_pilots, double ts) {
    if (num_pilots < 1 || !(ts > 0.0))
        throw ValidationError("velocity_limit: needs num_pilots >= 1 and a positive symbol period");
    double min_dist = (ris.elements.front() - p).norm();
    for (const auto &pm : ris.elements)
        min_dist = std::min(min_dist, (pm - p).norm());
    return min_dist / (static_cast<double>(num_pilots) * ts);
}

std::complex<double> channel_gain(const Vec3 &p, const Scenario &scenario) {
    const double dr = (scenario.ris.reference - p).norm();
    const double db = (scenario.ris.reference - scenario.bs_position).norm();
    if (dr == 0.0 || db == 0.0)
        throw DegenerateGeometry("channel_gain: coincident positions");
    const RfConstants &rf = scenario.rf;
    const double amp = rf.wavelength * rf.wavelength * std::sqrt(rf.tx_power * rf.tx_gain * rf.rx_gain) /
                       (16.0 * kPi * kPi * dr * db);
    return std::polar(amp, rf.global_phase);
}

double snr_db(std::complex<double> alpha, const RfConstants &rf) {
    return 10.0 * std::log10(std::norm(alpha) / rf.noise_variance());
}

Eigen::VectorXcd steering_ff(double theta, double phi, const RisArray &ris, double wavelength) {
    const double k = 2.0 * kPi / wavelength;
    const Vec3 kvec{-k * std::sin(phi) * std::cos(theta), -k * std::sin(phi) * std::sin(theta), -k * std::cos(phi)};
    Eigen::VectorXcd a(static_cast<Eigen::Index>(ris.element_count()));
    for (Eigen::Index m = 0; m < a.size(); ++m) {
        const Vec3 offset = ris.elements[static_cast<std::size_t>(m)] - ris.reference;
        a[m] = std::polar(1.0, -offset.dot(kvec));
    }
    return a;
}

ChannelModel::ChannelModel(const Scenario &scenario) : scenario_(scenario) {
    scenario_.validate();
    num_pilots_ = scenario_.num_pilots;
    num_elements_ = static_cast<int>(scenario_.ris.element_count());
    wavenumber_ = 2.0 * kPi / scenario_.rf.wavelength;
    ts_ = scenario_.rf.symbol_period;

    elements_.resize(3, num_elements_);
    for (int m = 0; m < num_elements_; ++m) {
        const Vec3 &pm = scenario_.ris.elements[static_cast<std::size_t>(m)];
        elements_.col(m) << pm.x, pm.y, pm.z;
    }

    // w_l = omega_l ⊙ a(p_b); the BS-side steering is static.
    const Vec3 &pb = scenario_.bs_position;
    const Eigen::Vector3d pbv(pb.x, pb.y, pb.z);
    const double dr_b = (scenario_.ris.reference - pb).norm();
    weights_.resize(num_pilots_, num_elements_);
    for (int m = 0; m < num_elements_; ++m) {
        const double dm_b = (elements_.col(m) - pbv).norm();
        const std::complex<double> ab = std::polar(1.0, -wavenumber_ * (dm_b - dr_b));
        for (int l = 0; l < num_pilots_; ++l)
            weights_(l, m) = std::polar(1.0, scenario_.profile.phases(l, m)) * ab;
    }
}

Eigen::VectorXd ChannelModel::element_distances(const Vec3 &p) const {
    const Eigen::Vector3d pv(p.x, p.y, p.z);
    return (elements_.colwise() - pv).colwise().norm().transpose();
}

double ChannelModel::reference_distance(const Vec3 &p) const { return (scenario_.ris.reference - p).norm(); }

Eigen::VectorXcd ChannelModel::steering_nf(const Vec3 &p, const Vec3 &v, int ell) const {
    if (ell < 1 || ell > num_pilots_)
        throw ValidationError("steering_nf: pilot index out of range");
    const Eigen::Vector3d pv(p.x, p.y, p.z);
    const Eigen::Vector3d vv(v.x, v.y, v.z);
    const Eigen::VectorXd d = element_distances(p);
    if ((d.array() == 0.0).any())
        throw DegenerateGeometry("steering_nf: UE coincides with a RIS element");
    const double dr = reference_distance(p);
    const double t = static_cast<double>(ell) * ts_;
    Eigen::VectorXcd a(num_elements_);
    for (int m = 0; m < num_elements_; ++m) {
        const Eigen::Vector3d delta = pv - elements_.col(m);
        const double f = d[m] - dr + delta.dot(vv) / d[m] * t;
        a[m] = std::polar(1.0, -wavenumber_ * f);
    }
    return a;
}

Eigen::VectorXcd ChannelModel::h_vector(const Vec3 &p, const Vec3 &v) const {
    const Eigen::Vector3d pv(p.x, p.y, p.z);
    const Eigen::Vector3d vv(v.x, v.y, v.z);
    const double dr = reference_distance(p);
    // Phase of element m at pilot l is base_m + l * slope_m; the per-pilot
    // steering advances by a fixed per-element rotation.
    Eigen::VectorXcd cur(num_elements_);
    Eigen::VectorXcd rot(num_elements_);
    for (int m = 0; m < num_elements_; ++m) {
        const Eigen::Vector3d delta = pv - elements_.col(m);
        const double dm = delta.norm();
        if (dm == 0.0)
            throw DegenerateGeometry("h_vector: UE coincides with a RIS element");
        const double base = -wavenumber_ * (dm - dr);
        const double slope = -wavenumber_ * delta.dot(vv) / dm * ts_;
        rot[m] = std::polar(1.0, slope);
        cur[m] = std::polar(1.0, base) * rot[m]; // pilot l = 1
    }
    Eigen::VectorXcd h(num_pilots_);
    for (int l = 0; l < num_pilots_; ++l) {
        h[l] = weights_.row(l) * cur;
        if (l + 1 < num_pilots_)
            cur.array() *= rot.array();
    }
    return h;
}

Eigen::VectorXcd ChannelModel::h_static(const Vec3 &p) const {
    const Eigen::Vector3d pv(p.x, p.y, p.z);
    const double dr = reference_distance(p);
    Eigen::VectorXcd a(num_elements_);
    for (int m = 0; m < num_elements_; ++m) {
        const double dm = (pv - elements_.col(m)).norm();
        if (dm == 0.0)
            throw DegenerateGeometry("h_static: UE coincides with a RIS element");
        a[m] = std::polar(1.0, -wavenumber_ * (dm - dr));
    }
    return weights_ * a;
}

Observation ChannelModel::observe(std::uint64_t seed) const {
    Rng rng(seed);
    Observation obs;
    obs.seed = seed;

    Eigen::VectorXcd h;
    if (scenario_.multipath) {
        // Rician mix of the deterministic steering with a diffuse component
        // held constant over the frame.
        const double kf = scenario_.multipath->rician_k;
        const double w_los = std::sqrt(kf / (kf + 1.0));
        const double w_nlos = std::sqrt(1.0 / (kf + 1.0));
        Eigen::VectorXcd diffuse(num_elements_);
        for (int m = 0; m < num_elements_; ++m)
            diffuse[m] = rng.complex_gaussian(1.0);
        h.resize(num_pilots_);
        for (int l = 1; l <= num_pilots_; ++l) {
            const Eigen::VectorXcd mixed =
                w_los * steering_nf(scenario_.ue.position, scenario_.ue.velocity, l) + w_nlos * diffuse;
            h[l - 1] = weights_.row(l - 1) * mixed;
        }
    } else {
        h = h_vector(scenario_.ue.position, scenario_.ue.velocity);
    }

    obs.y = scenario_.ue.gain * h;
    if (scenario_.noise_enabled) {
        obs.noise_variance = scenario_.rf.noise_variance();
        for (int l = 0; l < num_pilots_; ++l)
            obs.y[l] += rng.complex_gaussian(obs.noise_variance);
    } else {
        obs.noise_variance = 0.0;
    }
    return obs;
}

} // namespace risloc
