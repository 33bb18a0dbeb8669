#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "cbmoco/errors.hpp"
#include "cbmoco/math.hpp"

namespace cbmoco {

/// Projective scale threshold of the homogeneous divide: |w| at or below this is
/// treated as a point at infinity (on/behind the source plane).
inline constexpr double kWMin = 1e-9;

/// World-to-detector map of one view, in pixel detector units (3x4, defined up to scale).
using ProjectionMatrix = Mat34;

/// Circular cone-beam scan description.
///
/// Conventions used throughout the library:
///  - world origin = isocenter, rotation axis = world z;
///  - view j looks along the principal ray from source position
///    SID * (cos theta_j, sin theta_j, 0) toward the isocenter, theta_j = j * range / n_views;
///  - detector axis u = (-sin theta, cos theta, 0), axis v = world z;
///  - matrices map to pixel detector units with the principal point at
///    ((cols - 1) / 2, (rows - 1) / 2).
struct ScanGeometry {
    double source_to_iso_mm = 785.0;
    double source_to_detector_mm = 1200.0;
    int n_views = 360;
    double angular_range_rad = 2.0 * kPi;
    int detector_rows = 700;
    int detector_cols = 500;
    double pixel_spacing_mm = 0.64;

    void validate() const {
        if (!(source_to_iso_mm > 0) || !(source_to_detector_mm > 0) || !(pixel_spacing_mm > 0))
            throw ConfigError("ScanGeometry: lengths must be positive");
        if (!(source_to_detector_mm > source_to_iso_mm))
            throw ConfigError("ScanGeometry: source_to_detector_mm must exceed source_to_iso_mm");
        if (n_views < 2) throw ConfigError("ScanGeometry: n_views must be >= 2");
        if (!(angular_range_rad > 0) || angular_range_rad > 2.0 * kPi + 1e-12)
            throw ConfigError("ScanGeometry: angular range outside (0, 2*pi]");
        if (detector_rows < 1 || detector_cols < 1)
            throw ConfigError("ScanGeometry: detector must have at least one pixel");
    }

    double principal_u() const { return 0.5 * (detector_cols - 1); }
    double principal_v() const { return 0.5 * (detector_rows - 1); }
    double focal_px() const { return source_to_detector_mm / pixel_spacing_mm; }
};

/// Rigid pose offsets: translations in mm, rotations in degrees (API units).
struct RigidParams {
    double t_x = 0, t_y = 0, t_z = 0; // mm
    double r_x = 0, r_y = 0, r_z = 0; // degrees

    std::array<double, 6> as_array() const { return {t_x, t_y, t_z, r_x, r_y, r_z}; }

    static RigidParams from_array(const std::array<double, 6>& a) {
        return {a[0], a[1], a[2], a[3], a[4], a[5]};
    }

    bool finite() const {
        for (double v : as_array())
            if (!std::isfinite(v)) return false;
        return true;
    }
};

/// Homogeneous rigid transform: upper-left rotation block, last column translation.
struct RigidTransform {
    Mat44 matrix = Mat44::identity();
};

namespace detail {

inline Mat33 rot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat33 r = Mat33::identity();
    r(1, 1) = c; r(1, 2) = -s;
    r(2, 1) = s; r(2, 2) = c;
    return r;
}

inline Mat33 rot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat33 r = Mat33::identity();
    r(0, 0) = c; r(0, 2) = s;
    r(2, 0) = -s; r(2, 2) = c;
    return r;
}

inline Mat33 rot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat33 r = Mat33::identity();
    r(0, 0) = c; r(0, 1) = -s;
    r(1, 0) = s; r(1, 1) = c;
    return r;
}

inline Mat33 drot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat33 r;
    r(1, 1) = -s; r(1, 2) = -c;
    r(2, 1) = c;  r(2, 2) = -s;
    return r;
}

inline Mat33 drot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat33 r;
    r(0, 0) = -s; r(0, 2) = c;
    r(2, 0) = -c; r(2, 2) = -s;
    return r;
}

inline Mat33 drot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat33 r;
    r(0, 0) = -s; r(0, 1) = -c;
    r(1, 0) = c;  r(1, 1) = -s;
    return r;
}

inline Mat44 embed(const Mat33& r, const Vec3& t, double corner = 1.0) {
    Mat44 m;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = r(i, j);
    m(0, 3) = t.x;
    m(1, 3) = t.y;
    m(2, 3) = t.z;
    m(3, 3) = corner;
    return m;
}

} // namespace detail

/// Builds T = [R | t; 0 1] with R = Rz(r_z) * Ry(r_y) * Rx(r_x), rotating about the
/// isocenter (world origin). Rotation inputs are degrees.
inline RigidTransform rigid_params_to_matrix(const RigidParams& p) {
    if (!p.finite()) throw ArgumentError("rigid_params_to_matrix: non-finite parameters");
    const double ax = deg_to_rad(p.r_x), ay = deg_to_rad(p.r_y), az = deg_to_rad(p.r_z);
    const Mat33 r = detail::rot_z(az) * detail::rot_y(ay) * detail::rot_x(ax);
    return {detail::embed(r, {p.t_x, p.t_y, p.t_z})};
}

/// Transform plus its six partial derivatives (translations mm, rotations per degree),
/// ordered (t_x, t_y, t_z, r_x, r_y, r_z).
inline void rigid_params_to_matrix_with_derivs(const RigidParams& p, Mat44& t_out,
                                               std::array<Mat44, 6>& dt_out) {
    if (!p.finite()) throw ArgumentError("rigid_params_to_matrix_with_derivs: non-finite parameters");
    const double ax = deg_to_rad(p.r_x), ay = deg_to_rad(p.r_y), az = deg_to_rad(p.r_z);
    const Mat33 rx = detail::rot_x(ax), ry = detail::rot_y(ay), rz = detail::rot_z(az);
    t_out = detail::embed(rz * ry * rx, {p.t_x, p.t_y, p.t_z});

    const double s = kPi / 180.0; // chain factor: parameters are degrees
    dt_out[0] = Mat44{}; dt_out[0](0, 3) = 1.0;
    dt_out[1] = Mat44{}; dt_out[1](1, 3) = 1.0;
    dt_out[2] = Mat44{}; dt_out[2](2, 3) = 1.0;
    const Mat33 dx = (rz * ry * detail::drot_x(ax));
    const Mat33 dy = (rz * detail::drot_y(ay) * rx);
    const Mat33 dz = (detail::drot_z(az) * ry * rx);
    dt_out[3] = detail::embed(dx, {0, 0, 0}, 0.0);
    dt_out[4] = detail::embed(dy, {0, 0, 0}, 0.0);
    dt_out[5] = detail::embed(dz, {0, 0, 0}, 0.0);
    for (int k = 3; k < 6; ++k)
        for (double& v : dt_out[size_t(k)].m) v *= s;
}

/// Updated projection matrix P * T (motion applied scanner-side).
inline ProjectionMatrix apply_motion(const ProjectionMatrix& p, const RigidTransform& t) {
    return p * t.matrix;
}

struct ProjectedPoint {
    std::array<double, 3> homogeneous; // (u, v, w) in pixel * w units
    double u = 0, v = 0;               // euclidean pixel coordinates
};

/// Projects a world point (mm); throws GeometryError when |w| <= kWMin.
inline ProjectedPoint project_point(const ProjectionMatrix& p, const Vec3& world) {
    ProjectedPoint out;
    out.homogeneous = p.apply_point(world);
    const double w = out.homogeneous[2];
    if (std::abs(w) <= kWMin)
        throw GeometryError("project_point: point on or behind the source plane (|w| <= w_min)");
    out.u = out.homogeneous[0] / w;
    out.v = out.homogeneous[1] / w;
    return out;
}

/// Camera center of a projection matrix: the right null-space point, dehomogenized.
inline Vec3 source_position(const ProjectionMatrix& p) {
    const Mat33 m_inv = p.left_block().inverse();
    const Vec3 p4 = p.col3();
    return m_inv * p4 * -1.0;
}

/// Calibrated matrices of the circular trajectory described by geom; one per view.
inline std::vector<ProjectionMatrix> build_circular_trajectory(const ScanGeometry& geom) {
    geom.validate();
    std::vector<ProjectionMatrix> mats(static_cast<size_t>(geom.n_views));
    const double f = geom.focal_px();
    const double pu = geom.principal_u();
    const double pv = geom.principal_v();
    for (int j = 0; j < geom.n_views; ++j) {
        const double theta = geom.angular_range_rad * double(j) / double(geom.n_views);
        const double ct = std::cos(theta), st = std::sin(theta);
        const Vec3 src{geom.source_to_iso_mm * ct, geom.source_to_iso_mm * st, 0.0};
        const Vec3 eu{-st, ct, 0.0};       // detector u: in-plane tangent
        const Vec3 ev{0.0, 0.0, 1.0};      // detector v: rotation axis
        const Vec3 ray{-ct, -st, 0.0};     // principal ray toward the isocenter

        // P = K [R | -R c] with rows of R = (eu, ev, ray) and K = [[f 0 pu],[0 f pv],[0 0 1]].
        const Vec3 row0 = f * eu + pu * ray;
        const Vec3 row1 = f * ev + pv * ray;
        ProjectionMatrix& p = mats[size_t(j)];
        p(0, 0) = row0.x; p(0, 1) = row0.y; p(0, 2) = row0.z; p(0, 3) = -row0.dot(src);
        p(1, 0) = row1.x; p(1, 1) = row1.y; p(1, 2) = row1.z; p(1, 3) = -row1.dot(src);
        p(2, 0) = ray.x;  p(2, 1) = ray.y;  p(2, 2) = ray.z;  p(2, 3) = -ray.dot(src);
    }
    return mats;
}

/// Scale-normalized copy for comparisons: divided by the largest-magnitude entry,
/// sign fixed so that entry is positive.
inline ProjectionMatrix normalized_for_compare(const ProjectionMatrix& p) {
    double best = 0;
    for (double v : p.m)
        if (std::abs(v) > std::abs(best)) best = v;
    if (best == 0.0) throw ArgumentError("normalized_for_compare: zero matrix");
    return p * (1.0 / best);
}

inline double max_abs_diff_normalized(const ProjectionMatrix& a, const ProjectionMatrix& b) {
    const ProjectionMatrix na = normalized_for_compare(a);
    const ProjectionMatrix nb = normalized_for_compare(b);
    double d = 0;
    for (size_t i = 0; i < 12; ++i) d = std::max(d, std::abs(na.m[i] - nb.m[i]));
    return d;
}

} // namespace cbmoco
