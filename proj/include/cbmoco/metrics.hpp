#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cbmoco/parallel.hpp"
#include "cbmoco/volume.hpp"

namespace cbmoco {

/// Voxel-wise quality values; the associated scalar is scale * sum(data).
struct QualityMap {
    Volume<double> map;
    double scale = 1.0;

    double scalar() const {
        double s = 0;
        for (double v : map.data) s += v;
        return scale * s;
    }
};

/// Contract for autofocus objectives: a scalar quality value plus its exact
/// derivative with respect to every voxel. Analytic instantiations live below; a
/// learned metric can implement the same interface.
class DifferentiableMetric {
public:
    virtual ~DifferentiableMetric() = default;
    virtual std::string name() const = 0;
    virtual std::pair<double, Volume<double>> evaluate(const Volume<double>& vol) const = 0;
};

namespace metric_detail {

inline void check_same_dims(const GridSpec& a, const GridSpec& b, const char* op) {
    if (!(a.dims == b.dims)) throw ArgumentError(std::string(op) + ": volume dims mismatch");
}

} // namespace metric_detail

/// Separable Gaussian blur with per-axis kernel renormalization at the borders
/// (constant inputs stay exactly constant).
inline Volume<double> gaussian_blur(const Volume<double>& vol, double sigma, int radius) {
    if (!(sigma > 0) || radius < 1) throw ArgumentError("gaussian_blur: bad sigma/radius");
    std::vector<double> kernel(size_t(2 * radius + 1));
    for (int i = -radius; i <= radius; ++i)
        kernel[size_t(i + radius)] = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));

    const int nx = vol.grid.dims[0], ny = vol.grid.dims[1], nz = vol.grid.dims[2];
    Volume<double> a = vol, b(vol.grid);

    auto pass = [&](const Volume<double>& src, Volume<double>& dst, int axis) {
        const int n_ax = vol.grid.dims[size_t(axis)];
        const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? nx : std::int64_t(nx) * ny);
        const std::int64_t n_lines = vol.grid.n_voxels() / n_ax;
        parallel_for(n_lines, [&](std::int64_t line) {
            // Base index of this line: enumerate voxels with axis coordinate 0.
            std::int64_t base;
            if (axis == 0) {
                const std::int64_t j = line % ny, k = line / ny;
                base = (k * ny + j) * nx;
            } else if (axis == 1) {
                const std::int64_t i = line % nx, k = line / nx;
                base = (k * ny) * nx + i;
            } else {
                base = line;
            }
            for (int c = 0; c < n_ax; ++c) {
                double acc = 0, wsum = 0;
                const int t0 = std::max(-radius, -c), t1 = std::min(radius, n_ax - 1 - c);
                for (int t = t0; t <= t1; ++t) {
                    const double w = kernel[size_t(t + radius)];
                    acc += w * src.data[size_t(base + (c + t) * stride)];
                    wsum += w;
                }
                dst.data[size_t(base + c * stride)] = acc / wsum;
            }
        });
    };
    pass(a, b, 0);
    pass(b, a, 1);
    pass(a, b, 2);
    return b;
}

/// Every second voxel along each axis (used by the VIF scale pyramid).
inline Volume<double> downsample2(const Volume<double>& vol) {
    GridSpec g;
    g.dims = {(vol.grid.dims[0] + 1) / 2, (vol.grid.dims[1] + 1) / 2, (vol.grid.dims[2] + 1) / 2};
    g.spacing_mm = vol.grid.spacing_mm * 2.0;
    g.origin_mm = vol.grid.origin_mm;
    Volume<double> out(g);
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) out.at(i, j, k) = vol.at(2 * i, 2 * j, 2 * k);
    return out;
}

/// Smoothed anisotropic total variation:
/// scalar = (1/K) * sum over axes of sqrt(delta^2 + eps^2) over forward differences,
/// with the exact analytic gradient. eps defaults to 1e-6 in normalized intensity units.
inline std::pair<double, Volume<double>> smoothed_tv(const Volume<double>& vol,
                                                     double eps = 1e-6) {
    vol.grid.validate();
    const int nx = vol.grid.dims[0], ny = vol.grid.dims[1], nz = vol.grid.dims[2];
    const double inv_k = 1.0 / double(vol.grid.n_voxels());
    const double eps2 = eps * eps;

    Volume<double> grad(vol.grid);
    const std::int64_t sx = 1, sy = nx, sz = std::int64_t(nx) * ny;

    const int n_chunks = std::max(1, nz);
    std::vector<double> partial(size_t(n_chunks), 0.0);
    parallel_chunks(vol.grid.n_voxels(), n_chunks, [&](int chunk, std::int64_t lo, std::int64_t hi) {
        double sum = 0;
        for (std::int64_t idx = lo; idx < hi; ++idx) {
            const int i = int(idx % nx);
            const int j = int((idx / nx) % ny);
            const int k = int(idx / (std::int64_t(nx) * ny));
            const double v = vol.data[size_t(idx)];
            double g = 0;
            // Terms owned by this voxel (forward differences); value accumulates here.
            if (i + 1 < nx) {
                const double d = vol.data[size_t(idx + sx)] - v;
                const double r = std::sqrt(d * d + eps2);
                sum += r;
                g -= d / r;
            }
            if (j + 1 < ny) {
                const double d = vol.data[size_t(idx + sy)] - v;
                const double r = std::sqrt(d * d + eps2);
                sum += r;
                g -= d / r;
            }
            if (k + 1 < nz) {
                const double d = vol.data[size_t(idx + sz)] - v;
                const double r = std::sqrt(d * d + eps2);
                sum += r;
                g -= d / r;
            }
            // Terms where this voxel is the forward neighbor.
            if (i > 0) {
                const double d = v - vol.data[size_t(idx - sx)];
                g += d / std::sqrt(d * d + eps2);
            }
            if (j > 0) {
                const double d = v - vol.data[size_t(idx - sy)];
                g += d / std::sqrt(d * d + eps2);
            }
            if (k > 0) {
                const double d = v - vol.data[size_t(idx - sz)];
                g += d / std::sqrt(d * d + eps2);
            }
            grad.data[size_t(idx)] = g * inv_k;
        }
        partial[size_t(chunk)] = sum;
    });
    double total = 0;
    for (double p : partial) total += p;
    return {total * inv_k, std::move(grad)};
}

/// Squared error per voxel; scale 1/K so the scalar is the MSE.
inline QualityMap mse_map(const Volume<double>& dist, const Volume<double>& ref) {
    metric_detail::check_same_dims(dist.grid, ref.grid, "mse_map");
    QualityMap q;
    q.map = Volume<double>(dist.grid);
    q.scale = 1.0 / double(dist.grid.n_voxels());
    for (size_t i = 0; i < dist.data.size(); ++i) {
        const double d = dist.data[i] - ref.data[i];
        q.map.data[i] = d * d;
    }
    return q;
}

namespace metric_detail {

struct LocalMoments {
    Volume<double> mu1, mu2, var1, var2, cov;
};

/// Gaussian-windowed first and second moments (sigma 1.5, radius 5).
inline LocalMoments windowed_moments(const Volume<double>& a, const Volume<double>& b) {
    const double sigma = 1.5;
    const int radius = 5;
    LocalMoments m;
    m.mu1 = gaussian_blur(a, sigma, radius);
    m.mu2 = gaussian_blur(b, sigma, radius);

    Volume<double> aa(a.grid), bb(a.grid), ab(a.grid);
    for (size_t i = 0; i < a.data.size(); ++i) {
        aa.data[i] = a.data[i] * a.data[i];
        bb.data[i] = b.data[i] * b.data[i];
        ab.data[i] = a.data[i] * b.data[i];
    }
    m.var1 = gaussian_blur(aa, sigma, radius);
    m.var2 = gaussian_blur(bb, sigma, radius);
    m.cov = gaussian_blur(ab, sigma, radius);
    for (size_t i = 0; i < a.data.size(); ++i) {
        m.var1.data[i] -= m.mu1.data[i] * m.mu1.data[i];
        m.var2.data[i] -= m.mu2.data[i] * m.mu2.data[i];
        m.cov.data[i] -= m.mu1.data[i] * m.mu2.data[i];
    }
    return m;
}

} // namespace metric_detail

/// Adjusted SSIM* map: stores 1 - SSIM per voxel (3D Gaussian window sigma 1.5,
/// radius 5; C1 = (0.01 L)^2, C2 = (0.03 L)^2 with dynamic range L = 1); the scalar
/// is 1 - mean SSIM. Inputs are expected pre-normalized to [0, 1].
inline QualityMap ssim_map(const Volume<double>& dist, const Volume<double>& ref) {
    metric_detail::check_same_dims(dist.grid, ref.grid, "ssim_map");
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto m = metric_detail::windowed_moments(dist, ref);

    QualityMap q;
    q.map = Volume<double>(dist.grid);
    q.scale = 1.0 / double(dist.grid.n_voxels());
    for (size_t i = 0; i < dist.data.size(); ++i) {
        const double mu1 = m.mu1.data[i], mu2 = m.mu2.data[i];
        const double ssim = ((2 * mu1 * mu2 + c1) * (2 * m.cov.data[i] + c2)) /
                            ((mu1 * mu1 + mu2 * mu2 + c1) * (m.var1.data[i] + m.var2.data[i] + c2));
        q.map.data[i] = 1.0 - ssim;
    }
    return q;
}

/// Adjusted VIF* map (pixel-domain visual information fidelity over 4 scales).
///
/// At each scale both volumes are Gaussian-blurred and downsampled by two (the
/// effective blur doubles per scale); GSM statistics come from Gaussian-windowed
/// local moments (radius 5). The per-scale information ratio maps are upsampled and
/// normalized so that mean(map stored here) = 1 - VIF holds exactly; the stored map
/// is the VIF* form. Inputs are expected in [0, 1]; they are mapped to the
/// conventional 8-bit dynamic range internally so the standard GSM noise variance
/// sigma_n^2 = 2 applies.
inline QualityMap vif_map(const Volume<double>& dist, const Volume<double>& ref) {
    metric_detail::check_same_dims(dist.grid, ref.grid, "vif_map");
    {
        const double v0 = ref.data.empty() ? 0.0 : ref.data[0];
        bool constant = true;
        for (double v : ref.data)
            if (v != v0) { constant = false; break; }
        if (constant) throw ArgumentError("vif_map: degenerate (constant) reference volume");
    }

    constexpr int kScales = 4;
    constexpr double kSigmaN2 = 2.0;  // GSM noise variance, 8-bit-range convention
    constexpr double kRangeScale = 255.0;

    Volume<double> r = ref, d = dist;
    for (auto& v : r.data) v *= kRangeScale;
    for (auto& v : d.data) v *= kRangeScale;

    const std::int64_t k_full = dist.grid.n_voxels();
    std::vector<Volume<double>> scale_nums;
    std::vector<double> num_sums, den_sums;

    for (int s = 0; s < kScales; ++s) {
        r = downsample2(gaussian_blur(r, 1.0, 3));
        d = downsample2(gaussian_blur(d, 1.0, 3));
        const auto m = metric_detail::windowed_moments(r, d);

        Volume<double> num(r.grid);
        double num_sum = 0, den_sum = 0;
        for (size_t i = 0; i < r.data.size(); ++i) {
            double var_r = std::max(m.var1.data[i], 0.0);
            double var_d = std::max(m.var2.data[i], 0.0);
            const double cov = m.cov.data[i];
            const double g = cov / (var_r + 1e-10);
            double sv2 = var_d - g * cov;
            if (sv2 < 0) sv2 = 0;
            const double n = std::log2(1.0 + g * g * var_r / (sv2 + kSigmaN2));
            const double dn = std::log2(1.0 + var_r / kSigmaN2);
            num.data[i] = n;
            num_sum += n;
            den_sum += dn;
        }
        scale_nums.push_back(std::move(num));
        num_sums.push_back(num_sum);
        den_sums.push_back(den_sum);
    }

    double den_total = 0;
    for (double v : den_sums) den_total += v;
    if (!(den_total > 0)) throw ArgumentError("vif_map: reference carries no local information");

    // Assemble the full-resolution map: each per-scale map is upsampled trilinearly
    // and rescaled so its mean equals that scale's exact contribution to VIF.
    const int nx = dist.grid.dims[0], ny = dist.grid.dims[1], nz = dist.grid.dims[2];
    Volume<double> m_full(dist.grid);
    for (int s = 0; s < kScales; ++s) {
        const Volume<double>& coarse = scale_nums[size_t(s)];
        const double alpha = num_sums[size_t(s)] / den_total; // contribution, sums to VIF
        const double factor = double(1 << (s + 1));
        Volume<double> up(dist.grid);
        double up_sum = 0;
        for (int k = 0; k < nz; ++k)
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    auto clampf = [](double x, int n) { return std::min(std::max(x, 0.0), double(n - 1)); };
                    const double cx = clampf(double(i) / factor, coarse.grid.dims[0]);
                    const double cy = clampf(double(j) / factor, coarse.grid.dims[1]);
                    const double cz = clampf(double(k) / factor, coarse.grid.dims[2]);
                    const int ix = std::min(int(cx), coarse.grid.dims[0] - 2 >= 0 ? coarse.grid.dims[0] - 2 : 0);
                    const int iy = std::min(int(cy), coarse.grid.dims[1] - 2 >= 0 ? coarse.grid.dims[1] - 2 : 0);
                    const int iz = std::min(int(cz), coarse.grid.dims[2] - 2 >= 0 ? coarse.grid.dims[2] - 2 : 0);
                    const double fx = cx - ix, fy = cy - iy, fz = cz - iz;
                    auto tap = [&](int a, int b, int c) {
                        return coarse.at(std::min(a, coarse.grid.dims[0] - 1),
                                         std::min(b, coarse.grid.dims[1] - 1),
                                         std::min(c, coarse.grid.dims[2] - 1));
                    };
                    const double c00 = tap(ix, iy, iz) * (1 - fx) + tap(ix + 1, iy, iz) * fx;
                    const double c10 = tap(ix, iy + 1, iz) * (1 - fx) + tap(ix + 1, iy + 1, iz) * fx;
                    const double c01 = tap(ix, iy, iz + 1) * (1 - fx) + tap(ix + 1, iy, iz + 1) * fx;
                    const double c11 = tap(ix, iy + 1, iz + 1) * (1 - fx) + tap(ix + 1, iy + 1, iz + 1) * fx;
                    const double v = (c00 * (1 - fy) + c10 * fy) * (1 - fz) + (c01 * (1 - fy) + c11 * fy) * fz;
                    up.data[size_t(up.index(i, j, k))] = v;
                    up_sum += v;
                }
        if (std::abs(up_sum) > 1e-300) {
            const double rescale = alpha * double(k_full) / up_sum;
            for (std::int64_t i = 0; i < k_full; ++i) m_full.data[size_t(i)] += up.data[size_t(i)] * rescale;
        }
    }

    QualityMap q;
    q.map = Volume<double>(dist.grid);
    q.scale = 1.0 / double(k_full);
    for (std::int64_t i = 0; i < k_full; ++i) q.map.data[size_t(i)] = 1.0 - m_full.data[size_t(i)];
    return q;
}

/// VIF scalar in [0, ~1]: identical volumes give 1.
inline double vif_scalar(const Volume<double>& dist, const Volume<double>& ref) {
    return 1.0 - vif_map(dist, ref).scalar();
}

/// Mean SSIM scalar: identical volumes give 1.
inline double ssim_scalar(const Volume<double>& dist, const Volume<double>& ref) {
    return 1.0 - ssim_map(dist, ref).scalar();
}

/// Smoothed TV packaged as a DifferentiableMetric.
class SmoothedTvMetric : public DifferentiableMetric {
public:
    explicit SmoothedTvMetric(double eps = 1e-6) : eps_(eps) {}
    std::string name() const override { return "smoothed_tv"; }
    std::pair<double, Volume<double>> evaluate(const Volume<double>& vol) const override {
        return smoothed_tv(vol, eps_);
    }

private:
    double eps_;
};

/// Wraps a metric with a fixed affine intensity map v' = (v - offset) * slope.
class NormalizedMetric : public DifferentiableMetric {
public:
    NormalizedMetric(std::shared_ptr<const DifferentiableMetric> inner, double offset, double slope)
        : inner_(std::move(inner)), offset_(offset), slope_(slope) {
        if (!(slope_ != 0) || !std::isfinite(slope_) || !std::isfinite(offset_))
            throw ArgumentError("NormalizedMetric: bad offset/slope");
    }
    std::string name() const override { return inner_->name() + "+normalized"; }
    std::pair<double, Volume<double>> evaluate(const Volume<double>& vol) const override {
        Volume<double> t = vol;
        for (auto& v : t.data) v = (v - offset_) * slope_;
        auto [value, grad] = inner_->evaluate(t);
        for (auto& g : grad.data) g *= slope_;
        return {value, std::move(grad)};
    }

private:
    std::shared_ptr<const DifferentiableMetric> inner_;
    double offset_;
    double slope_;
};

/// Percentile-based intensity window (used to fix normalization constants once per run).
inline std::pair<double, double> robust_range(const Volume<double>& vol, double lo_pct = 0.1,
                                              double hi_pct = 99.9) {
    std::vector<double> sorted = vol.data;
    std::sort(sorted.begin(), sorted.end());
    auto pick = [&](double pct) {
        const double pos = pct / 100.0 * double(sorted.size() - 1);
        return sorted[size_t(std::llround(pos))];
    };
    return {pick(lo_pct), pick(hi_pct)};
}

/// Exhaustive per-voxel central-difference check of a metric's gradient on a small
/// volume; returns the worst relative error.
inline double metric_gradient_fd_check(const DifferentiableMetric& metric, const Volume<double>& vol,
                                       double step) {
    if (vol.grid.n_voxels() > 16 * 16 * 16)
        throw ArgumentError("metric_gradient_fd_check: volume too large (max 16^3)");
    auto [value, grad] = metric.evaluate(vol);
    (void)value;
    double gmax = 0;
    for (double g : grad.data) gmax = std::max(gmax, std::abs(g));
    // Entries far below the gradient's own scale are compared against that scale:
    // the FD numerator carries the metric's evaluation roundoff, which would
    // otherwise dominate the ratio for near-zero entries.
    const double floor = std::max(1e-12, 2e-3 * gmax);

    Volume<double> probe = vol;
    double worst = 0;
    for (size_t i = 0; i < vol.data.size(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + step;
        const double fp = metric.evaluate(probe).first;
        probe.data[i] = orig - step;
        const double fm = metric.evaluate(probe).first;
        probe.data[i] = orig;
        const double fd = (fp - fm) / (2 * step);
        const double rel = std::abs(fd - grad.data[i]) / std::max({std::abs(fd), std::abs(grad.data[i]), floor});
        worst = std::max(worst, rel);
    }
    return worst;
}

} // namespace cbmoco
