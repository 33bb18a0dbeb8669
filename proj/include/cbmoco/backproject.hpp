#pragma once

#include <cmath>
#include <vector>

#include "cbmoco/geometry.hpp"
#include "cbmoco/parallel.hpp"
#include "cbmoco/stack.hpp"
#include "cbmoco/volume.hpp"

namespace cbmoco {

/// Per-view 3x4 gradients of a scalar loss with respect to projection-matrix entries.
using GeometryGradient = std::vector<Mat34>;

/// How detector gradients are obtained inside the geometry VJP.
///
/// exact_bilinear differentiates the bilinear interpolant itself (the true derivative
/// of the backprojection as implemented; finite differences match it to near machine
/// precision on smooth data). central_difference samples precomputed central-difference
/// gradient images bilinearly, mirroring the published formulation; it is a smoothed
/// surrogate of the exact derivative.
enum class GradientMode { exact_bilinear, central_difference };

namespace backproject_detail {

template <class T>
inline double bilinear(const T* img, int rows, int cols, double u, double v) {
    int ui = int(std::floor(u));
    int vi = int(std::floor(v));
    ui = std::min(std::max(ui, 0), cols - 2);
    vi = std::min(std::max(vi, 0), rows - 2);
    const double fu = u - ui, fv = v - vi;
    const T* p = img + std::int64_t(vi) * cols + ui;
    const double d00 = double(p[0]), d01 = double(p[1]);
    const double d10 = double(p[cols]), d11 = double(p[cols + 1]);
    return (1 - fv) * ((1 - fu) * d00 + fu * d01) + fv * ((1 - fu) * d10 + fu * d11);
}

struct ViewRows {
    // Projection matrix rows as (x, y, z, 1) coefficients.
    double r0[4], r1[4], r2[4];
};

inline ViewRows rows_of(const ProjectionMatrix& p) {
    ViewRows r;
    for (int c = 0; c < 4; ++c) {
        r.r0[c] = p(0, c);
        r.r1[c] = p(1, c);
        r.r2[c] = p(2, c);
    }
    return r;
}

} // namespace backproject_detail

/// Analytic backprojection: I(p) = sum_j d_j(euclidean projection of p in view j),
/// with d_j the bilinear interpolation of the filtered view j.
///
/// Projections outside the detector contribute zero; a one-pixel margin around the
/// detector uses clamped bilinear weights. Voxel-view pairs on or behind the source
/// plane (w <= w_min) contribute zero and are counted: if they exceed half of all
/// pairs the trajectory is considered broken and a GeometryError is thrown.
template <class T>
Volume<T> backproject(const ProjectionStack<T>& stack,
                      const std::vector<ProjectionMatrix>& matrices, const GridSpec& grid) {
    stack.require_state(StackState::ramp_filtered, "backproject");
    grid.validate();
    if (matrices.size() != size_t(stack.n_views))
        throw ArgumentError("backproject: matrix count != stack views");

    const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
    const int rows = stack.rows, cols = stack.cols;
    const int n_views = stack.n_views;

    std::vector<backproject_detail::ViewRows> vr(matrices.size());
    for (size_t j = 0; j < matrices.size(); ++j) vr[j] = backproject_detail::rows_of(matrices[j]);

    Volume<T> out(grid);
    const std::int64_t n_lines = std::int64_t(ny) * nz;
    std::vector<std::int64_t> behind(size_t(std::max(1, nz)), 0);

    parallel_chunks(n_lines, nz, [&](int chunk, std::int64_t lo, std::int64_t hi) {
        std::vector<double> acc(static_cast<size_t>(nx));
        std::int64_t behind_local = 0;
        for (std::int64_t line = lo; line < hi; ++line) {
            const int jy = int(line % ny);
            const int k = int(line / ny);
            const Vec3 p0 = grid.voxel_center(0, jy, k);
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int j = 0; j < n_views; ++j) {
                const auto& r = vr[size_t(j)];
                double U = r.r0[0] * p0.x + r.r0[1] * p0.y + r.r0[2] * p0.z + r.r0[3];
                double V = r.r1[0] * p0.x + r.r1[1] * p0.y + r.r1[2] * p0.z + r.r1[3];
                double W = r.r2[0] * p0.x + r.r2[1] * p0.y + r.r2[2] * p0.z + r.r2[3];
                const double dU = r.r0[0] * grid.spacing_mm.x;
                const double dV = r.r1[0] * grid.spacing_mm.x;
                const double dW = r.r2[0] * grid.spacing_mm.x;
                const T* img = stack.view_ptr(j);
                for (int i = 0; i < nx; ++i, U += dU, V += dV, W += dW) {
                    if (W <= kWMin) {
                        ++behind_local;
                        continue;
                    }
                    const double u = U / W, v = V / W;
                    if (u < -1.0 || u > double(cols) || v < -1.0 || v > double(rows)) continue;
                    acc[size_t(i)] += backproject_detail::bilinear(img, rows, cols, u, v);
                }
            }
            T* dst = out.data.data() + out.index(0, jy, k);
            for (int i = 0; i < nx; ++i) dst[i] = T(acc[size_t(i)]);
        }
        behind[size_t(chunk)] = behind_local;
    });

    std::int64_t behind_total = 0;
    for (std::int64_t b : behind) behind_total += b;
    if (2 * behind_total > grid.n_voxels() * n_views)
        throw GeometryError("backproject: more than half of all voxel-view pairs lie behind the source plane");
    return out;
}

/// Detector-axis derivatives of the filtered stack: second-order central differences
/// in the interior, first-order one-sided differences at the edges (pixel units).
template <class T>
GradientImages<T> detector_gradients(const ProjectionStack<T>& stack) {
    stack.require_state(StackState::ramp_filtered, "detector_gradients");
    if (stack.rows < 3 || stack.cols < 3)
        throw ArgumentError("detector_gradients: need at least 3 rows and 3 cols");

    GradientImages<T> g;
    g.n_views = stack.n_views;
    g.rows = stack.rows;
    g.cols = stack.cols;
    g.g_u.assign(stack.data.size(), T(0));
    g.g_v.assign(stack.data.size(), T(0));

    const int rows = stack.rows, cols = stack.cols;
    parallel_for(std::int64_t(stack.n_views) * rows, [&](std::int64_t line) {
        const int j = int(line / rows);
        const int v = int(line % rows);
        const T* d = stack.view_ptr(j) + std::int64_t(v) * cols;
        T* gu = g.g_u.data() + g.index(j, v, 0);
        gu[0] = T(double(d[1]) - double(d[0]));
        for (int u = 1; u < cols - 1; ++u) gu[u] = T(0.5 * (double(d[u + 1]) - double(d[u - 1])));
        gu[cols - 1] = T(double(d[cols - 1]) - double(d[cols - 2]));

        const T* view = stack.view_ptr(j);
        T* gv = g.g_v.data() + g.index(j, v, 0);
        const int vm = std::max(v - 1, 0);
        const int vp = std::min(v + 1, rows - 1);
        const double scale = (vp == v + 1 && vm == v - 1) ? 0.5 : 1.0;
        const T* dm = view + std::int64_t(vm) * cols;
        const T* dp = view + std::int64_t(vp) * cols;
        for (int u = 0; u < cols; ++u) gv[u] = T(scale * (double(dp[u]) - double(dm[u])));
    });
    return g;
}

/// Geometry vector-Jacobian product of the backprojection.
///
/// For every view accumulates, over all voxels p = (x, y, z) with homogeneous
/// detector position (u, v, w), upstream(p) times the 3x4 per-voxel gradient whose
/// rows are (g_u / w) (x, y, z, 1), (g_v / w) (x, y, z, 1) and
/// -(1 / w^2) (h(x), h(y), h(z), h(1)) with h(i) = g_u i u + g_v i v. Voxels
/// projecting outside the detector or with w <= w_min contribute zero. The full
/// K x M Jacobian is never materialized. Accumulation is in double precision and the
/// per-chunk partials are reduced in a fixed order, so results are bitwise
/// reproducible for any thread count.
template <class T>
GeometryGradient backproject_geometry_vjp(const ProjectionStack<T>& stack,
                                          const std::vector<ProjectionMatrix>& matrices,
                                          const GridSpec& grid, const Volume<double>& upstream,
                                          GradientMode mode = GradientMode::exact_bilinear) {
    stack.require_state(StackState::ramp_filtered, "backproject_geometry_vjp");
    grid.validate();
    if (matrices.size() != size_t(stack.n_views))
        throw ArgumentError("backproject_geometry_vjp: matrix count != stack views");
    if (!(upstream.grid.dims == grid.dims))
        throw ArgumentError("backproject_geometry_vjp: upstream dims != grid dims");

    const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
    const int rows = stack.rows, cols = stack.cols;
    const int n_views = stack.n_views;

    GradientImages<T> gimg;
    if (mode == GradientMode::central_difference) gimg = detector_gradients(stack);

    std::vector<backproject_detail::ViewRows> vr(matrices.size());
    for (size_t j = 0; j < matrices.size(); ++j) vr[j] = backproject_detail::rows_of(matrices[j]);

    const int n_chunks = nz;
    std::vector<std::vector<Mat34>> partial(static_cast<size_t>(n_chunks),
                                            std::vector<Mat34>(static_cast<size_t>(n_views)));

    const std::int64_t n_lines = std::int64_t(ny) * nz;
    parallel_chunks(n_lines, n_chunks, [&](int chunk, std::int64_t lo, std::int64_t hi) {
        std::vector<Mat34>& acc = partial[size_t(chunk)];
        for (std::int64_t line = lo; line < hi; ++line) {
            const int jy = int(line % ny);
            const int k = int(line / ny);
            const Vec3 p0 = grid.voxel_center(0, jy, k);
            const double* up_row = upstream.data.data() + upstream.index(0, jy, k);
            for (int j = 0; j < n_views; ++j) {
                const auto& r = vr[size_t(j)];
                double U = r.r0[0] * p0.x + r.r0[1] * p0.y + r.r0[2] * p0.z + r.r0[3];
                double V = r.r1[0] * p0.x + r.r1[1] * p0.y + r.r1[2] * p0.z + r.r1[3];
                double W = r.r2[0] * p0.x + r.r2[1] * p0.y + r.r2[2] * p0.z + r.r2[3];
                const double dU = r.r0[0] * grid.spacing_mm.x;
                const double dV = r.r1[0] * grid.spacing_mm.x;
                const double dW = r.r2[0] * grid.spacing_mm.x;
                const T* img = stack.view_ptr(j);
                Mat34& out = acc[size_t(j)];
                for (int i = 0; i < nx; ++i, U += dU, V += dV, W += dW) {
                    const double up = up_row[i];
                    if (up == 0.0 || W <= kWMin) continue;
                    const double u = U / W, v = V / W;
                    // Gradients vanish outside the detector and in the clamped margin.
                    if (u < 0.0 || u > double(cols - 1) || v < 0.0 || v > double(rows - 1)) continue;

                    double gu, gv;
                    if (mode == GradientMode::exact_bilinear) {
                        int ui = int(std::floor(u));
                        int vi = int(std::floor(v));
                        ui = std::min(std::max(ui, 0), cols - 2);
                        vi = std::min(std::max(vi, 0), rows - 2);
                        const double fu = u - ui, fv = v - vi;
                        const T* p = img + std::int64_t(vi) * cols + ui;
                        const double d00 = double(p[0]), d01 = double(p[1]);
                        const double d10 = double(p[cols]), d11 = double(p[cols + 1]);
                        gu = (1 - fv) * (d01 - d00) + fv * (d11 - d10);
                        gv = (1 - fu) * (d10 - d00) + fu * (d11 - d01);
                    } else {
                        gu = backproject_detail::bilinear(gimg.gu_view(j), rows, cols, u, v);
                        gv = backproject_detail::bilinear(gimg.gv_view(j), rows, cols, u, v);
                    }

                    const double x = p0.x + grid.spacing_mm.x * i, y = p0.y, z = p0.z;
                    const double inv_w = 1.0 / W;
                    const double a = up * gu * inv_w;
                    const double b = up * gv * inv_w;
                    const double c = -up * (gu * U + gv * V) * inv_w * inv_w;
                    out.m[0] += a * x;  out.m[1] += a * y;  out.m[2] += a * z;  out.m[3] += a;
                    out.m[4] += b * x;  out.m[5] += b * y;  out.m[6] += b * z;  out.m[7] += b;
                    out.m[8] += c * x;  out.m[9] += c * y;  out.m[10] += c * z; out.m[11] += c;
                }
            }
        }
    });

    GeometryGradient total(static_cast<size_t>(n_views));
    for (int c = 0; c < n_chunks; ++c)
        for (int j = 0; j < n_views; ++j)
            for (size_t e = 0; e < 12; ++e) total[size_t(j)].m[e] += partial[size_t(c)][size_t(j)].m[e];
    return total;
}

} // namespace cbmoco
