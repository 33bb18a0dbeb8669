#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cbmoco/geometry.hpp"
#include "cbmoco/parallel.hpp"
#include "cbmoco/stack.hpp"
#include "cbmoco/volume.hpp"

namespace cbmoco {

namespace project_detail {

/// Trilinear sample in voxel-index coordinates with zero value outside the grid.
template <class T>
inline double sample_zero_padded(const Volume<T>& vol, double x, double y, double z) {
    const int nx = vol.grid.dims[0], ny = vol.grid.dims[1], nz = vol.grid.dims[2];
    const int ix = int(std::floor(x)), iy = int(std::floor(y)), iz = int(std::floor(z));
    if (ix < -1 || iy < -1 || iz < -1 || ix > nx - 1 || iy > ny - 1 || iz > nz - 1) return 0.0;
    const double fx = x - ix, fy = y - iy, fz = z - iz;

    auto tap = [&](int i, int j, int k) -> double {
        if (i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz) return 0.0;
        return double(vol.at(i, j, k));
    };
    if (ix >= 0 && iy >= 0 && iz >= 0 && ix < nx - 1 && iy < ny - 1 && iz < nz - 1) {
        const std::int64_t base = vol.index(ix, iy, iz);
        const std::int64_t sx = 1, sy = nx, sz = std::int64_t(nx) * ny;
        const T* d = vol.data.data() + base;
        const double c00 = double(d[0]) * (1 - fx) + double(d[sx]) * fx;
        const double c10 = double(d[sy]) * (1 - fx) + double(d[sy + sx]) * fx;
        const double c01 = double(d[sz]) * (1 - fx) + double(d[sz + sx]) * fx;
        const double c11 = double(d[sz + sy]) * (1 - fx) + double(d[sz + sy + sx]) * fx;
        return (c00 * (1 - fy) + c10 * fy) * (1 - fz) + (c01 * (1 - fy) + c11 * fy) * fz;
    }
    const double c00 = tap(ix, iy, iz) * (1 - fx) + tap(ix + 1, iy, iz) * fx;
    const double c10 = tap(ix, iy + 1, iz) * (1 - fx) + tap(ix + 1, iy + 1, iz) * fx;
    const double c01 = tap(ix, iy, iz + 1) * (1 - fx) + tap(ix + 1, iy, iz + 1) * fx;
    const double c11 = tap(ix, iy + 1, iz + 1) * (1 - fx) + tap(ix + 1, iy + 1, iz + 1) * fx;
    return (c00 * (1 - fy) + c10 * fy) * (1 - fz) + (c01 * (1 - fy) + c11 * fy) * fz;
}

} // namespace project_detail

/// Ray-driven line integrals of the volume under the given per-view matrices.
///
/// For each detector pixel the ray from the matrix's camera center through the pixel
/// center is sampled by trilinear interpolation at steps of min(voxel spacing) / 2;
/// the sample sum times the step length (mm) approximates the line integral.
template <class T>
ProjectionStack<T> forward_project(const Volume<T>& vol,
                                   const std::vector<ProjectionMatrix>& matrices,
                                   const ScanGeometry& geom) {
    geom.validate();
    vol.grid.validate();
    if (int(matrices.size()) != geom.n_views)
        throw ArgumentError("forward_project: matrix count != geometry n_views");

    ProjectionStack<T> stack(geom.n_views, geom.detector_rows, geom.detector_cols,
                             geom.pixel_spacing_mm, StackState::raw);

    const double step =
        0.5 * std::min({vol.grid.spacing_mm.x, vol.grid.spacing_mm.y, vol.grid.spacing_mm.z});

    // Clip against the voxel-edge box, i.e. [-0.5, dims - 0.5] in index coordinates.
    const Vec3 box_lo{-0.5, -0.5, -0.5};
    const Vec3 box_hi{vol.grid.dims[0] - 0.5, vol.grid.dims[1] - 0.5, vol.grid.dims[2] - 0.5};

    struct ViewCtx {
        Mat33 m_inv;
        Vec3 src;
    };
    std::vector<ViewCtx> ctx(matrices.size());
    for (size_t j = 0; j < matrices.size(); ++j) {
        const Mat33 m = matrices[j].left_block();
        if (std::abs(m.det()) < 1e-12)
            throw GeometryError("forward_project: degenerate projection matrix");
        ctx[j].m_inv = m.inverse();
        ctx[j].src = source_position(matrices[j]);
    }

    const std::int64_t n_rays = std::int64_t(geom.n_views) * geom.detector_rows * geom.detector_cols;
    parallel_chunks(n_rays, geom.n_views * geom.detector_rows,
                    [&](int, std::int64_t lo, std::int64_t hi) {
        for (std::int64_t ray = lo; ray < hi; ++ray) {
            const int u = int(ray % geom.detector_cols);
            const int v = int((ray / geom.detector_cols) % geom.detector_rows);
            const int j = int(ray / (std::int64_t(geom.detector_cols) * geom.detector_rows));
            const ViewCtx& c = ctx[size_t(j)];

            const Vec3 dir_w = (c.m_inv * Vec3{double(u), double(v), 1.0}).normalized();
            // Ray in index coordinates: q(t) = q0 + t * dq, t in mm.
            const Vec3 q0{(c.src.x - vol.grid.origin_mm.x) / vol.grid.spacing_mm.x,
                          (c.src.y - vol.grid.origin_mm.y) / vol.grid.spacing_mm.y,
                          (c.src.z - vol.grid.origin_mm.z) / vol.grid.spacing_mm.z};
            const Vec3 dq{dir_w.x / vol.grid.spacing_mm.x, dir_w.y / vol.grid.spacing_mm.y,
                          dir_w.z / vol.grid.spacing_mm.z};

            double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
            bool miss = false;
            const double qs[3] = {q0.x, q0.y, q0.z};
            const double ds[3] = {dq.x, dq.y, dq.z};
            const double los[3] = {box_lo.x, box_lo.y, box_lo.z};
            const double his[3] = {box_hi.x, box_hi.y, box_hi.z};
            for (int ax = 0; ax < 3; ++ax) {
                if (std::abs(ds[ax]) < 1e-15) {
                    if (qs[ax] < los[ax] || qs[ax] > his[ax]) { miss = true; break; }
                    continue;
                }
                double ta = (los[ax] - qs[ax]) / ds[ax];
                double tb = (his[ax] - qs[ax]) / ds[ax];
                if (ta > tb) std::swap(ta, tb);
                t0 = std::max(t0, ta);
                t1 = std::min(t1, tb);
            }
            if (miss || t1 <= t0) continue;

            double acc = 0.0;
            const int n_steps = int((t1 - t0) / step);
            double px = q0.x + (t0 + 0.5 * step) * dq.x;
            double py = q0.y + (t0 + 0.5 * step) * dq.y;
            double pz = q0.z + (t0 + 0.5 * step) * dq.z;
            const double ex = dq.x * step, ey = dq.y * step, ez = dq.z * step;
            for (int s = 0; s <= n_steps; ++s) {
                acc += project_detail::sample_zero_padded(vol, px, py, pz);
                px += ex; py += ey; pz += ez;
            }
            stack.at(j, v, u) = T(acc * step);
        }
    });
    return stack;
}

/// FDK cosine weighting: each pixel is scaled by SDD / sqrt(SDD^2 + u^2 + v^2) with
/// (u, v) the pixel's physical offset (mm) from the principal point.
template <class T>
ProjectionStack<T> cosine_weight(const ProjectionStack<T>& stack, const ScanGeometry& geom) {
    stack.require_state(StackState::raw, "cosine_weight");
    if (stack.rows != geom.detector_rows || stack.cols != geom.detector_cols)
        throw ArgumentError("cosine_weight: stack shape does not match geometry");

    ProjectionStack<T> out = stack;
    out.state = StackState::cosine_weighted;
    const double sdd = geom.source_to_detector_mm;
    std::vector<double> row_w(static_cast<size_t>(stack.cols));
    for (int v = 0; v < stack.rows; ++v) {
        const double dv = (v - geom.principal_v()) * geom.pixel_spacing_mm;
        for (int u = 0; u < stack.cols; ++u) {
            const double du = (u - geom.principal_u()) * geom.pixel_spacing_mm;
            row_w[size_t(u)] = sdd / std::sqrt(sdd * sdd + du * du + dv * dv);
        }
        for (int j = 0; j < stack.n_views; ++j) {
            T* p = out.view_ptr(j) + size_t(v) * stack.cols;
            for (int u = 0; u < stack.cols; ++u) p[u] = T(double(p[u]) * row_w[size_t(u)]);
        }
    }
    return out;
}

} // namespace cbmoco
