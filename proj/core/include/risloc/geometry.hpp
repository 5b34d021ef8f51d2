// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#pragma once

#include <cstddef>
#include <vector>

#include "risloc/errors.hpp"

namespace risloc {

/// 3D vector in meters (or m/s when used as a velocity). Constructors reject
/// non-finite components so NaNs surface where they are produced.
struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_);

    double norm() const;
    double squared_norm() const { return x * x + y * y + z * z; }
    double dot(const Vec3 &o) const { return x * o.x + y * o.y + z * o.z; }

    Vec3 operator+(const Vec3 &o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3 &o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    bool operator==(const Vec3 &o) const { return x == o.x && y == o.y && z == o.z; }
};

inline Vec3 operator*(double s, const Vec3 &v) { return v * s; }

/// Spherical coordinates: range rho >= 0, azimuth theta wrapped into [0, 2pi)
/// measured from +x toward +y, elevation phi clamped to [0, pi] measured from +z.
struct Spherical {
    double rho = 0.0;
    double theta = 0.0;
    double phi = 0.0;

    Spherical() = default;
    Spherical(double rho_, double theta_, double phi_);
};

/// Planar reflective array: known element positions and the reference element
/// (the array center for the standard constructors).
struct RisArray {
    std::vector<Vec3> elements;
    Vec3 reference;

    RisArray() = default;
    /// Reference defaults to the element centroid.
    explicit RisArray(std::vector<Vec3> elems);
    RisArray(std::vector<Vec3> elems, const Vec3 &ref);

    std::size_t element_count() const { return elements.size(); }
};

Vec3 spherical_to_cartesian(const Spherical &s);
Spherical cartesian_to_spherical(const Vec3 &p);

/// Unit vector pointing from `from` toward `p`. Throws DegenerateGeometry when
/// the points coincide.
Vec3 unit_vector_to(const Vec3 &p, const Vec3 &from);

/// Uniform planar array in the z = 0 plane, rows along x, cols along y,
/// row-major element order, centered so the reference is the origin.
RisArray build_upa(int rows, int cols, double spacing);

} // namespace risloc
