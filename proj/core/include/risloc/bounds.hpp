// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#pragma once

#include <Eigen/Dense>

#include "risloc/channel.hpp"

namespace risloc {

/// Fisher information for zeta = [p_x, p_y, p_z, v_x, v_y, v_z, alpha_r, alpha_i].
struct Fim {
    Eigen::Matrix<double, 8, 8> matrix;
};

struct BoundReport {
    double peb = 0.0;              // m
    double veb = 0.0;              // m/s
    Fim fim;
    double condition_number = 0.0; // of the diagonally equilibrated FIM
};

/// Jacobian of the noise-free observation mean mu_l = alpha w_l^T a(p_l) with
/// respect to zeta; row l holds d mu_l / d zeta.
Eigen::MatrixXcd mu_jacobian(const ChannelModel &model);

/// FIM = (2 / sigma^2) Re{ J^H J }.
Fim fim(const ChannelModel &model);

/// PEB = sqrt(tr [FIM^-1]_{1:3,1:3}), VEB = sqrt(tr [FIM^-1]_{4:6,4:6}).
/// The inverse goes through diagonal equilibration; parameters live on wildly
/// different natural scales and the raw matrix is not invertible in doubles.
BoundReport peb_veb(const Fim &f);

} // namespace risloc
