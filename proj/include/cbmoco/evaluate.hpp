#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "cbmoco/geometry.hpp"
#include "cbmoco/metrics.hpp"
#include "cbmoco/motion.hpp"

namespace cbmoco {

/// 300 deterministic evaluation points: 100 per sphere of radius 25, 50 and 100 mm
/// around the isocenter, laid out on a Fibonacci spiral.
inline std::vector<Vec3> make_eval_points() {
    constexpr std::array<double, 3> kRadii{25.0, 50.0, 100.0};
    constexpr int kPerSphere = 100;
    const double golden = 0.5 * (1.0 + std::sqrt(5.0));
    std::vector<Vec3> pts;
    pts.reserve(kRadii.size() * kPerSphere);
    for (double radius : kRadii) {
        for (int i = 0; i < kPerSphere; ++i) {
            const double z = 1.0 - 2.0 * (i + 0.5) / double(kPerSphere);
            const double r_xy = std::sqrt(std::max(0.0, 1.0 - z * z));
            const double phi = 2.0 * kPi * double(i) / golden;
            pts.push_back({radius * r_xy * std::cos(phi), radius * r_xy * std::sin(phi), radius * z});
        }
    }
    return pts;
}

/// Mean detector-plane distance (mm) between the projections of the evaluation
/// points under the estimated and ground-truth geometries.
inline double reprojection_error(const std::vector<ProjectionMatrix>& matrices_est,
                                 const std::vector<ProjectionMatrix>& matrices_gt,
                                 const std::vector<Vec3>& points, double pixel_spacing_mm) {
    if (matrices_est.size() != matrices_gt.size())
        throw ArgumentError("reprojection_error: view count mismatch");
    if (matrices_est.empty() || points.empty())
        throw ArgumentError("reprojection_error: empty input");
    double sum = 0;
    for (size_t j = 0; j < matrices_est.size(); ++j) {
        for (const Vec3& p : points) {
            const ProjectedPoint a = project_point(matrices_est[j], p);
            const ProjectedPoint b = project_point(matrices_gt[j], p);
            sum += std::hypot(a.u - b.u, a.v - b.v);
        }
    }
    return sum / double(matrices_est.size() * points.size()) * pixel_spacing_mm;
}

/// Per-parameter mean absolute error between two motion models, evaluated at every
/// view after zero-centering each curve (removes the global-pose gauge). Groups
/// follow the source rotation plane: in-plane (t_x, t_y, r_z), out-of-plane
/// (t_z, r_x, r_y).
struct ParameterMae {
    std::array<double, 6> per_param{}; // t_x, t_y, t_z, r_x, r_y, r_z
    double in_plane = 0;
    double out_of_plane = 0;
};

inline ParameterMae parameter_mae(const SplineMotion& x_est, const SplineMotion& x_gt, int n_views) {
    const auto est = motion_curves(x_est, n_views);
    const auto gt = motion_curves(x_gt, n_views);
    ParameterMae out;
    for (int r = 0; r < 6; ++r) {
        double mean_e = 0, mean_g = 0;
        for (int j = 0; j < n_views; ++j) {
            mean_e += est[size_t(j)].as_array()[size_t(r)];
            mean_g += gt[size_t(j)].as_array()[size_t(r)];
        }
        mean_e /= double(n_views);
        mean_g /= double(n_views);
        double mae = 0;
        for (int j = 0; j < n_views; ++j)
            mae += std::abs((est[size_t(j)].as_array()[size_t(r)] - mean_e) -
                            (gt[size_t(j)].as_array()[size_t(r)] - mean_g));
        out.per_param[size_t(r)] = mae / double(n_views);
    }
    out.in_plane = (out.per_param[0] + out.per_param[1] + out.per_param[5]) / 3.0;
    out.out_of_plane = (out.per_param[2] + out.per_param[3] + out.per_param[4]) / 3.0;
    return out;
}

struct ImageMetrics {
    double rmse = 0;
    double ssim = 0;
    double vif = 0;
};

/// RMSE (native intensity units), SSIM and VIF scalars of a reconstruction against
/// a reference on the same grid. Both inputs must be normalized identically.
inline ImageMetrics image_metrics(const Volume<double>& recon, const Volume<double>& ref) {
    if (!(recon.grid.dims == ref.grid.dims))
        throw ArgumentError("image_metrics: volume dims mismatch");
    ImageMetrics m;
    m.rmse = std::sqrt(mse_map(recon, ref).scalar());
    m.ssim = ssim_scalar(recon, ref);
    m.vif = vif_scalar(recon, ref);
    return m;
}

/// Ground-truth-aware scores of one reconstruction state.
struct EvalReport {
    double rpe_mm = 0;
    ParameterMae mae;
    double rmse = 0;
    double ssim = 0;
    double vif = 0;
};

} // namespace cbmoco
