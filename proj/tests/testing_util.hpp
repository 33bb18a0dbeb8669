#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "cbmoco/stack.hpp"
#include "cbmoco/volume.hpp"

namespace cbmoco::testing {

/// Deterministic uniform doubles in [0, 1) independent of library distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : rng_(seed) {}
    double u01() { return double(rng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

private:
    std::mt19937_64 rng_;
};

/// In-place separable Gaussian blur of one detector image (for smooth FD stacks).
inline void blur_image(std::vector<double>& img, int rows, int cols, double sigma) {
    const int rad = int(std::ceil(3 * sigma));
    std::vector<double> kernel(size_t(2 * rad + 1));
    for (int i = -rad; i <= rad; ++i)
        kernel[size_t(i + rad)] = std::exp(-0.5 * i * i / (sigma * sigma));
    std::vector<double> tmp(img.size());
    for (int v = 0; v < rows; ++v)
        for (int u = 0; u < cols; ++u) {
            double acc = 0, wsum = 0;
            for (int t = -rad; t <= rad; ++t) {
                const int uu = u + t;
                if (uu < 0 || uu >= cols) continue;
                acc += kernel[size_t(t + rad)] * img[size_t(v * cols + uu)];
                wsum += kernel[size_t(t + rad)];
            }
            tmp[size_t(v * cols + u)] = acc / wsum;
        }
    for (int v = 0; v < rows; ++v)
        for (int u = 0; u < cols; ++u) {
            double acc = 0, wsum = 0;
            for (int t = -rad; t <= rad; ++t) {
                const int vv = v + t;
                if (vv < 0 || vv >= rows) continue;
                acc += kernel[size_t(t + rad)] * tmp[size_t(vv * cols + u)];
                wsum += kernel[size_t(t + rad)];
            }
            img[size_t(v * cols + u)] = acc / wsum;
        }
}

/// Random Gaussian-smoothed stack in the ramp_filtered state (FD oracle input).
template <class T = double>
ProjectionStack<T> smooth_random_stack(int n_views, int rows, int cols, double pixel_mm,
                                       double sigma, std::uint64_t seed) {
    ProjectionStack<T> stack(n_views, rows, cols, pixel_mm, StackState::ramp_filtered);
    Rng rng(seed);
    std::vector<double> img(size_t(rows) * cols);
    for (int j = 0; j < n_views; ++j) {
        for (auto& v : img) v = rng.uniform(-1.0, 1.0);
        blur_image(img, rows, cols, sigma);
        for (size_t i = 0; i < img.size(); ++i) stack.data[size_t(j) * img.size() + i] = T(img[i]);
    }
    return stack;
}

inline Volume<double> random_volume(const GridSpec& grid, std::uint64_t seed, double lo = 0.0,
                                    double hi = 1.0) {
    Volume<double> vol(grid);
    Rng rng(seed);
    for (auto& v : vol.data) v = rng.uniform(lo, hi);
    return vol;
}

} // namespace cbmoco::testing
