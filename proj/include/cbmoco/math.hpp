#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include "cbmoco/errors.hpp"

namespace cbmoco {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * (kPi / 180.0); }
inline double rad_to_deg(double rad) { return rad * (180.0 / kPi); }

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        return {x / n, y / n, z / n};
    }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Row-major 3x3 matrix.
struct Mat33 {
    std::array<double, 9> m{};

    double& operator()(int r, int c) { return m[size_t(r) * 3 + size_t(c)]; }
    double operator()(int r, int c) const { return m[size_t(r) * 3 + size_t(c)]; }

    static Mat33 identity() {
        Mat33 I;
        I(0, 0) = I(1, 1) = I(2, 2) = 1.0;
        return I;
    }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Mat33 operator*(const Mat33& o) const {
        Mat33 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }

    Mat33 transposed() const {
        Mat33 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    /// Inverse via cofactors; throws GeometryError when singular.
    Mat33 inverse() const {
        const double d = det();
        if (std::abs(d) < 1e-300) throw GeometryError("Mat33::inverse: singular matrix");
        const double id = 1.0 / d;
        Mat33 r;
        r(0, 0) = (m[4] * m[8] - m[5] * m[7]) * id;
        r(0, 1) = (m[2] * m[7] - m[1] * m[8]) * id;
        r(0, 2) = (m[1] * m[5] - m[2] * m[4]) * id;
        r(1, 0) = (m[5] * m[6] - m[3] * m[8]) * id;
        r(1, 1) = (m[0] * m[8] - m[2] * m[6]) * id;
        r(1, 2) = (m[2] * m[3] - m[0] * m[5]) * id;
        r(2, 0) = (m[3] * m[7] - m[4] * m[6]) * id;
        r(2, 1) = (m[1] * m[6] - m[0] * m[7]) * id;
        r(2, 2) = (m[0] * m[4] - m[1] * m[3]) * id;
        return r;
    }
};

/// Row-major 4x4 matrix (rigid transforms live here).
struct Mat44 {
    std::array<double, 16> m{};

    double& operator()(int r, int c) { return m[size_t(r) * 4 + size_t(c)]; }
    double operator()(int r, int c) const { return m[size_t(r) * 4 + size_t(c)]; }

    static Mat44 identity() {
        Mat44 I;
        I(0, 0) = I(1, 1) = I(2, 2) = I(3, 3) = 1.0;
        return I;
    }

    Mat44 operator*(const Mat44& o) const {
        Mat44 r;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                double s = 0;
                for (int k = 0; k < 4; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }
};

/// Row-major 3x4 matrix; the projection-matrix type of the library.
struct Mat34 {
    std::array<double, 12> m{};

    double& operator()(int r, int c) { return m[size_t(r) * 4 + size_t(c)]; }
    double operator()(int r, int c) const { return m[size_t(r) * 4 + size_t(c)]; }

    Mat34 operator+(const Mat34& o) const {
        Mat34 r;
        for (size_t i = 0; i < 12; ++i) r.m[i] = m[i] + o.m[i];
        return r;
    }

    Mat34 operator*(double s) const {
        Mat34 r;
        for (size_t i = 0; i < 12; ++i) r.m[i] = m[i] * s;
        return r;
    }

    /// 3x4 times 4x4 composition.
    Mat34 operator*(const Mat44& t) const {
        Mat34 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j) {
                double s = 0;
                for (int k = 0; k < 4; ++k) s += (*this)(i, k) * t(k, j);
                r(i, j) = s;
            }
        return r;
    }

    /// Homogeneous action on a world point (x, y, z, 1).
    std::array<double, 3> apply_point(const Vec3& p) const {
        return {m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
                m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
                m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
    }

    /// Left 3x3 block.
    Mat33 left_block() const {
        Mat33 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(i, j);
        return r;
    }

    Vec3 col3() const { return {m[3], m[7], m[11]}; }
};

inline double frobenius_inner(const Mat34& a, const Mat34& b) {
    double s = 0;
    for (size_t i = 0; i < 12; ++i) s += a.m[i] * b.m[i];
    return s;
}

} // namespace cbmoco
