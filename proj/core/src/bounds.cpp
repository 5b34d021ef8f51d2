// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#include "risloc/bounds.hpp"

#include <cmath>

namespace risloc {

Eigen::MatrixXcd mu_jacobian(const ChannelModel &model) {
    const Scenario &sc = model.scenario();
    const int m_count = model.num_elements();
    const int l_count = model.num_pilots();
    const double k = model.wavenumber();
    const double ts = model.symbol_period();
    const std::complex<double> alpha = sc.ue.gain;
    const std::complex<double> jneg(0.0, -1.0);

    const Eigen::Vector3d pv(sc.ue.position.x, sc.ue.position.y, sc.ue.position.z);
    const Eigen::Vector3d vv(sc.ue.velocity.x, sc.ue.velocity.y, sc.ue.velocity.z);
    const double dr = model.reference_distance(sc.ue.position);
    if (dr == 0.0)
        throw DegenerateGeometry("mu_jacobian: UE at the RIS reference");
    const Eigen::Vector3d ref(sc.ris.reference.x, sc.ris.reference.y, sc.ris.reference.z);
    const Eigen::Vector3d ur = (pv - ref) / dr;

    Eigen::VectorXcd cur(m_count), rot(m_count);
    Eigen::Matrix3Xd u(3, m_count);
    Eigen::Matrix3Xd g_static(3, m_count);
    Eigen::Matrix3Xd g_mobility(3, m_count);
    for (int m = 0; m < m_count; ++m) {
        const Eigen::Vector3d delta = pv - model.element_positions().col(m);
        const double dm = delta.norm();
        if (dm == 0.0)
            throw DegenerateGeometry("mu_jacobian: UE on a RIS element");
        const Eigen::Vector3d um = delta / dm;
        u.col(m) = um;
        g_static.col(m) = um - ur;
        g_mobility.col(m) = (vv - um * um.dot(vv)) / dm * ts;
        const double base = -k * (dm - dr);
        const double slope = -k * um.dot(vv) * ts;
        rot[m] = std::polar(1.0, slope);
        cur[m] = std::polar(1.0, base) * rot[m];
    }

    Eigen::MatrixXcd jac(l_count, 8);
    Eigen::VectorXcd wa(m_count);
    for (int l = 0; l < l_count; ++l) {
        wa = model.weights().row(l).transpose().cwiseProduct(cur);
        const double t = static_cast<double>(l + 1) * ts;
        const double lfac = static_cast<double>(l + 1);
        // position block: alpha * sum_m wa_m * (-j k) grad_p f_{l,m}
        const Eigen::Vector3d re = g_static * wa.real() + lfac * (g_mobility * wa.real());
        const Eigen::Vector3d im = g_static * wa.imag() + lfac * (g_mobility * wa.imag());
        // velocity block: alpha * sum_m wa_m * (-j k) u_m * l Ts
        const Eigen::Vector3d vre = u * wa.real();
        const Eigen::Vector3d vim = u * wa.imag();
        const std::complex<double> hl = wa.sum();
        for (int r = 0; r < 3; ++r) {
            jac(l, r) = alpha * jneg * k * std::complex<double>(re[r], im[r]);
            jac(l, 3 + r) = alpha * jneg * k * t * std::complex<double>(vre[r], vim[r]);
        }
        jac(l, 6) = hl;
        jac(l, 7) = std::complex<double>(0.0, 1.0) * hl;
        if (l + 1 < l_count)
            cur.array() *= rot.array();
    }
    return jac;
}

Fim fim(const ChannelModel &model) {
    const double sigma2 = model.scenario().rf.noise_variance();
    if (!(sigma2 > 0.0))
        throw ValidationError("fim: noise variance must be positive");
    const Eigen::MatrixXcd jac = mu_jacobian(model);
    Fim f;
    f.matrix = (2.0 / sigma2) * (jac.adjoint() * jac).real();
    // Gram structure is symmetric up to rounding; symmetrize exactly.
    f.matrix = 0.5 * (f.matrix + f.matrix.transpose()).eval();
    return f;
}

BoundReport peb_veb(const Fim &f) {
    using Matrix8d = Eigen::Matrix<double, 8, 8>;
    BoundReport report;
    report.fim = f;

    Eigen::Matrix<double, 8, 1> d = f.matrix.diagonal();
    for (int i = 0; i < 8; ++i) {
        if (!(d[i] > 0.0) || !std::isfinite(d[i]))
            throw Unidentifiable("peb_veb: zero or invalid information for a parameter");
        d[i] = std::sqrt(d[i]);
    }
    const Matrix8d scaled = d.cwiseInverse().asDiagonal() * f.matrix * d.cwiseInverse().asDiagonal();

    Eigen::SelfAdjointEigenSolver<Matrix8d> eig(scaled);
    if (eig.info() != Eigen::Success)
        throw Unidentifiable("peb_veb: eigendecomposition failed");
    const double eig_min = eig.eigenvalues().minCoeff();
    const double eig_max = eig.eigenvalues().maxCoeff();
    if (!(eig_min > 0.0))
        throw Unidentifiable("peb_veb: FIM is singular");
    report.condition_number = eig_max / eig_min;
    if (report.condition_number >= 1e14)
        throw Unidentifiable("peb_veb: FIM condition number exceeds 1e14");

    const Matrix8d scaled_inv = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() *
                                eig.eigenvectors().transpose();
    const Matrix8d inv = d.cwiseInverse().asDiagonal() * scaled_inv * d.cwiseInverse().asDiagonal();
    report.peb = std::sqrt(inv.block<3, 3>(0, 0).trace());
    report.veb = std::sqrt(inv.block<3, 3>(3, 3).trace());
    return report;
}

} // namespace risloc
