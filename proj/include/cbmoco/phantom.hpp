#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "cbmoco/parallel.hpp"
#include "cbmoco/volume.hpp"

namespace cbmoco {

enum class PhantomKind { shepp_logan_3d, spheres, uniform };

inline PhantomKind phantom_kind_from_string(const std::string& s) {
    if (s == "shepp_logan_3d") return PhantomKind::shepp_logan_3d;
    if (s == "spheres") return PhantomKind::spheres;
    if (s == "uniform") return PhantomKind::uniform;
    throw ArgumentError("make_phantom: unknown phantom kind '" + s + "'");
}

namespace phantom_detail {

/// One ellipsoid in normalized [-1, 1] coordinates; Euler angles z-x-z, degrees.
struct Ellipsoid {
    double value;
    double a, b, c;
    double x0, y0, z0;
    double phi, theta, psi;
};

/// Modified (contrast-enhanced) 3D Shepp-Logan parameter table.
inline const std::array<Ellipsoid, 10>& shepp_logan_table() {
    static const std::array<Ellipsoid, 10> t{{
        {1.0,  0.6900, 0.920, 0.810,  0.00,  0.0000,  0.00,   0, 0,  0},
        {-0.8, 0.6624, 0.874, 0.780,  0.00, -0.0184,  0.00,   0, 0,  0},
        {-0.2, 0.1100, 0.310, 0.220,  0.22,  0.0000,  0.00, -18, 0, 10},
        {-0.2, 0.1600, 0.410, 0.280, -0.22,  0.0000,  0.00,  18, 0, 10},
        {0.1,  0.2100, 0.250, 0.410,  0.00,  0.3500, -0.15,   0, 0,  0},
        {0.1,  0.0460, 0.046, 0.050,  0.00,  0.1000,  0.25,   0, 0,  0},
        {0.1,  0.0460, 0.046, 0.050,  0.00, -0.1000,  0.25,   0, 0,  0},
        {0.1,  0.0460, 0.023, 0.050, -0.08, -0.6050,  0.00,   0, 0,  0},
        {0.1,  0.0230, 0.023, 0.020,  0.00, -0.6060,  0.00,   0, 0,  0},
        {0.1,  0.0230, 0.046, 0.020,  0.06, -0.6050,  0.00,   0, 0,  0},
    }};
    return t;
}

inline double ellipsoid_sum(const std::array<Ellipsoid, 10>& table, const Vec3& n) {
    double v = 0;
    for (const auto& e : table) {
        const Vec3 d{n.x - e.x0, n.y - e.y0, n.z - e.z0};
        const Mat33 rot = detail::rot_z(deg_to_rad(e.phi)) * detail::rot_x(deg_to_rad(e.theta)) *
                          detail::rot_z(deg_to_rad(e.psi));
        const Vec3 q = rot.transposed() * d; // world -> ellipsoid frame
        const double r = (q.x / e.a) * (q.x / e.a) + (q.y / e.b) * (q.y / e.b) +
                         (q.z / e.c) * (q.z / e.c);
        if (r <= 1.0) v += e.value;
    }
    return v;
}

struct Sphere {
    double value, radius; // radius in normalized half-FOV units
    double x0, y0, z0;
};

inline const std::array<Sphere, 5>& sphere_table() {
    static const std::array<Sphere, 5> t{{
        {1.0, 0.35, 0.00, 0.00, 0.00},
        {0.8, 0.18, 0.45, 0.00, 0.10},
        {0.6, 0.14, -0.40, 0.25, -0.20},
        {1.2, 0.10, 0.00, -0.45, 0.30},
        {0.5, 0.06, -0.20, -0.30, -0.40},
    }};
    return t;
}

} // namespace phantom_detail

/// Test phantom on an isocenter-centered grid.
///
/// shepp_logan_3d: standard modified 10-ellipsoid table in half-FOV units;
/// spheres: five deterministic solid spheres of differing radii and intensities;
/// uniform: value 1 inside a centered ball of radius 0.8 x half-FOV.
template <class T = double>
Volume<T> make_phantom(PhantomKind kind, std::array<int, 3> dims, Vec3 spacing_mm) {
    for (int d : dims)
        if (d < 8) throw ArgumentError("make_phantom: dims must be >= 8 per axis");
    Volume<T> vol(GridSpec::centered(dims, spacing_mm));
    const Vec3 half{0.5 * spacing_mm.x * dims[0], 0.5 * spacing_mm.y * dims[1],
                    0.5 * spacing_mm.z * dims[2]};
    const double ball_r = 0.8 * std::min(half.x, std::min(half.y, half.z));

    const std::int64_t nx = dims[0], ny = dims[1];
    parallel_for(vol.grid.n_voxels(), [&](std::int64_t idx) {
        const int i = int(idx % nx);
        const int j = int((idx / nx) % ny);
        const int k = int(idx / (nx * ny));
        const Vec3 p = vol.grid.voxel_center(i, j, k);
        double v = 0;
        switch (kind) {
            case PhantomKind::shepp_logan_3d: {
                const Vec3 n{p.x / half.x, p.y / half.y, p.z / half.z};
                v = phantom_detail::ellipsoid_sum(phantom_detail::shepp_logan_table(), n);
                break;
            }
            case PhantomKind::spheres: {
                const double r0 = std::min(half.x, std::min(half.y, half.z));
                for (const auto& s : phantom_detail::sphere_table()) {
                    const Vec3 c{s.x0 * r0, s.y0 * r0, s.z0 * r0};
                    if ((p - c).norm() <= s.radius * r0) v += s.value;
                }
                break;
            }
            case PhantomKind::uniform:
                v = p.norm() <= ball_r ? 1.0 : 0.0;
                break;
        }
        vol.data[size_t(idx)] = T(v);
    });
    return vol;
}

template <class T = double>
Volume<T> make_phantom(const std::string& kind, std::array<int, 3> dims, Vec3 spacing_mm) {
    return make_phantom<T>(phantom_kind_from_string(kind), dims, spacing_mm);
}

} // namespace cbmoco
