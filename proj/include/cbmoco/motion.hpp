#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "cbmoco/akima.hpp"
#include "cbmoco/geometry.hpp"

namespace cbmoco {

/// Smooth per-view rigid motion: one Akima spline per rigid parameter, all sharing
/// the node times. Row order (t_x, t_y, t_z, r_x, r_y, r_z); translations in mm,
/// rotations in degrees. Node times are view indices; the first node sits at view 0
/// and the last at view n_views - 1.
struct SplineMotion {
    std::vector<double> node_times;
    std::array<std::vector<double>, 6> node_values;

    size_t n_nodes() const { return node_times.size(); }

    void validate() const {
        if (node_times.size() < 3) throw ArgumentError("SplineMotion: need at least 3 nodes");
        for (size_t i = 1; i < node_times.size(); ++i)
            if (!(node_times[i] > node_times[i - 1]))
                throw ArgumentError("SplineMotion: node times must be strictly increasing");
        for (const auto& row : node_values)
            if (row.size() != node_times.size())
                throw ArgumentError("SplineMotion: node value row size mismatch");
    }

    static std::vector<double> uniform_node_times(int n_nodes, int n_views) {
        if (n_nodes < 3) throw ArgumentError("SplineMotion: need at least 3 nodes");
        if (n_views < 2) throw ArgumentError("SplineMotion: need at least 2 views");
        std::vector<double> t(static_cast<size_t>(n_nodes));
        for (int i = 0; i < n_nodes; ++i)
            t[size_t(i)] = double(n_views - 1) * double(i) / double(n_nodes - 1);
        return t;
    }

    static SplineMotion zero(int n_nodes, int n_views) {
        SplineMotion x;
        x.node_times = uniform_node_times(n_nodes, n_views);
        for (auto& row : x.node_values) row.assign(size_t(n_nodes), 0.0);
        return x;
    }

    /// Row-major 6 x n_nodes flattening (the optimizer's parameter vector).
    std::vector<double> to_flat() const {
        std::vector<double> flat;
        flat.reserve(6 * n_nodes());
        for (const auto& row : node_values) flat.insert(flat.end(), row.begin(), row.end());
        return flat;
    }

    SplineMotion with_flat(const std::vector<double>& flat) const {
        if (flat.size() != 6 * n_nodes())
            throw ArgumentError("SplineMotion::with_flat: size mismatch");
        SplineMotion x = *this;
        for (int r = 0; r < 6; ++r)
            for (size_t k = 0; k < n_nodes(); ++k)
                x.node_values[size_t(r)][k] = flat[size_t(r) * n_nodes() + k];
        return x;
    }
};

/// Spline values at every view index j = 0 .. n_views - 1.
inline std::vector<RigidParams> motion_curves(const SplineMotion& x, int n_views) {
    x.validate();
    std::vector<RigidParams> out(static_cast<size_t>(n_views));
    for (int j = 0; j < n_views; ++j) {
        std::array<double, 6> p{};
        for (int r = 0; r < 6; ++r)
            p[size_t(r)] = akima_eval(x.node_times, x.node_values[size_t(r)], double(j));
        out[size_t(j)] = RigidParams::from_array(p);
    }
    return out;
}

/// Per-view updated matrices P_j * T_j(x).
inline std::vector<ProjectionMatrix> motion_to_matrices(const SplineMotion& x,
                                                        const std::vector<ProjectionMatrix>& p_init) {
    const auto curves = motion_curves(x, int(p_init.size()));
    std::vector<ProjectionMatrix> out(p_init.size());
    for (size_t j = 0; j < p_init.size(); ++j)
        out[j] = apply_motion(p_init[j], rigid_params_to_matrix(curves[j]));
    return out;
}

/// Exact vector-Jacobian product of motion_to_matrices: maps an upstream gradient
/// dL/dP_hat (one 3x4 per view) to dL/d(node values), same 6-row layout as the motion.
inline std::array<std::vector<double>, 6> motion_vjp(const SplineMotion& x,
                                                     const std::vector<ProjectionMatrix>& p_init,
                                                     const std::vector<Mat34>& upstream) {
    x.validate();
    if (upstream.size() != p_init.size())
        throw ArgumentError("motion_vjp: upstream/view count mismatch");
    const int n_views = int(p_init.size());
    const size_t n = x.n_nodes();

    std::array<std::vector<double>, 6> grad;
    for (auto& row : grad) row.assign(n, 0.0);

    std::vector<double> spline_g;
    Mat44 t_mat;
    std::array<Mat44, 6> dt;
    for (int j = 0; j < n_views; ++j) {
        std::array<double, 6> params{};
        // Per-view chain: dL/dparam_m = <upstream_j, P_j * dT/dparam_m>.
        std::array<std::vector<double>, 6> node_grads;
        for (int r = 0; r < 6; ++r) {
            params[size_t(r)] =
                akima_eval_gradient(x.node_times, x.node_values[size_t(r)], double(j), spline_g);
            node_grads[size_t(r)] = spline_g;
        }
        rigid_params_to_matrix_with_derivs(RigidParams::from_array(params), t_mat, dt);
        for (int m = 0; m < 6; ++m) {
            const double dl_dparam = frobenius_inner(upstream[size_t(j)],
                                                     p_init[size_t(j)] * dt[size_t(m)]);
            if (dl_dparam == 0.0) continue;
            const auto& g = node_grads[size_t(m)];
            for (size_t k = 0; k < n; ++k) grad[size_t(m)][k] += dl_dparam * g[k];
        }
    }
    return grad;
}

/// Random zero-centered motion: node values uniform in [-amp, +amp] per parameter
/// class, then each parameter's per-view curve is shifted by its own mean over views.
/// Deterministic for a given seed.
inline SplineMotion sample_random_motion(double amp_t_mm, double amp_r_deg, int n_nodes,
                                         std::uint64_t rng_seed, int n_views) {
    if (amp_t_mm < 0 || amp_r_deg < 0)
        throw ArgumentError("sample_random_motion: amplitudes must be >= 0");
    SplineMotion x = SplineMotion::zero(n_nodes, n_views);
    std::mt19937_64 rng(rng_seed);
    auto u01 = [&rng] { return double(rng() >> 11) * 0x1.0p-53; };
    for (int r = 0; r < 6; ++r) {
        const double amp = r < 3 ? amp_t_mm : amp_r_deg;
        for (auto& v : x.node_values[size_t(r)]) v = amp * (2.0 * u01() - 1.0);
    }
    // Zero-center each curve; a constant shift of all node values shifts the Akima
    // curve by the same constant, so subtracting the curve mean is exact.
    const auto curves = motion_curves(x, n_views);
    for (int r = 0; r < 6; ++r) {
        double mean = 0;
        for (const auto& c : curves) mean += c.as_array()[size_t(r)];
        mean /= double(n_views);
        for (auto& v : x.node_values[size_t(r)]) v -= mean;
    }
    return x;
}

} // namespace cbmoco
