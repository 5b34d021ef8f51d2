// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#include "risloc/geometry.hpp"

#include <cmath>

namespace risloc {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

Vec3::Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
        throw ValidationError("Vec3: non-finite component");
}

double Vec3::norm() const { return std::sqrt(squared_norm()); }

Spherical::Spherical(double rho_, double theta_, double phi_) : rho(rho_), theta(theta_), phi(phi_) {
    if (!std::isfinite(rho) || !std::isfinite(theta) || !std::isfinite(phi))
        throw ValidationError("Spherical: non-finite component");
    if (rho < 0.0)
        throw ValidationError("Spherical: negative range");
    theta = std::fmod(theta, kTwoPi);
    if (theta < 0.0)
        theta += kTwoPi;
    if (phi < 0.0)
        phi = 0.0;
    if (phi > kTwoPi / 2.0)
        phi = kTwoPi / 2.0;
}

RisArray::RisArray(std::vector<Vec3> elems) {
    if (elems.empty())
        throw ValidationError("RisArray: needs at least one element");
    Vec3 centroid{};
    for (const auto &e : elems)
        centroid = centroid + e;
    centroid = centroid / static_cast<double>(elems.size());
    *this = RisArray(std::move(elems), centroid);
}

RisArray::RisArray(std::vector<Vec3> elems, const Vec3 &ref) : elements(std::move(elems)), reference(ref) {
    if (elements.empty())
        throw ValidationError("RisArray: needs at least one element");
    for (std::size_t i = 0; i < elements.size(); ++i)
        for (std::size_t j = i + 1; j < elements.size(); ++j)
            if (elements[i] == elements[j])
                throw ValidationError("RisArray: duplicate element positions");
}

Vec3 spherical_to_cartesian(const Spherical &s) {
    const double sp = std::sin(s.phi);
    return {s.rho * sp * std::cos(s.theta), s.rho * sp * std::sin(s.theta), s.rho * std::cos(s.phi)};
}

Spherical cartesian_to_spherical(const Vec3 &p) {
    const double rho = p.norm();
    if (rho == 0.0)
        return {0.0, 0.0, 0.0};
    double theta = std::atan2(p.y, p.x);
    if (theta < 0.0)
        theta += kTwoPi;
    double c = p.z / rho;
    if (c > 1.0)
        c = 1.0;
    if (c < -1.0)
        c = -1.0;
    return {rho, theta, std::acos(c)};
}

Vec3 unit_vector_to(const Vec3 &p, const Vec3 &from) {
    const Vec3 d = p - from;
    const double n = d.norm();
    if (n == 0.0)
        throw DegenerateGeometry("unit_vector_to: coincident points");
    return d / n;
}

RisArray build_upa(int rows, int cols, double spacing) {
    if (rows < 1 || cols < 1)
        throw ValidationError("build_upa: rows and cols must be >= 1");
    if (!(spacing > 0.0))
        throw ValidationError("build_upa: spacing must be positive");
    std::vector<Vec3> elems;
    elems.reserve(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    const double x0 = 0.5 * static_cast<double>(rows - 1);
    const double y0 = 0.5 * static_cast<double>(cols - 1);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            elems.emplace_back((static_cast<double>(r) - x0) * spacing, (static_cast<double>(c) - y0) * spacing, 0.0);
    return {std::move(elems), Vec3{0.0, 0.0, 0.0}};
}

} // namespace risloc
