#pragma once

#include <complex>
#include <vector>

#include "cbmoco/fft.hpp"
#include "cbmoco/parallel.hpp"
#include "cbmoco/stack.hpp"

namespace cbmoco {

/// Band-limited ramp kernel value at integer lag n for pixel spacing du:
/// 1/(4 du^2) at n = 0, -1/(pi^2 n^2 du^2) for odd n, 0 for even n != 0.
inline double ramp_kernel(int n, double du_mm) {
    if (n == 0) return 1.0 / (4.0 * du_mm * du_mm);
    if (n % 2 == 0) return 0.0;
    return -1.0 / (kPi * kPi * double(n) * double(n) * du_mm * du_mm);
}

/// Ramp filtering along the detector u axis, per row and view.
///
/// Implemented as circular convolution over a zero-padded FFT of length
/// next_pow2(2 * cols), which reproduces the linear convolution with the full
/// closed-form kernel exactly. The angular step weight pi / N_p is folded in here so
/// backprojection stays a plain unweighted sum; reconstructions are correct up to a
/// fixed global scale.
template <class T>
ProjectionStack<T> ramp_filter(const ProjectionStack<T>& stack) {
    stack.require_state(StackState::cosine_weighted, "ramp_filter");

    const int cols = stack.cols;
    const int len = next_pow2(2 * cols);
    const double du = stack.pixel_spacing_mm;

    // Kernel spectrum, shared across rows (symmetric lags wrapped onto [0, len)).
    std::vector<std::complex<double>> kernel(size_t(len), 0.0);
    kernel[0] = ramp_kernel(0, du);
    for (int n = 1; n <= len / 2; ++n) {
        const double v = ramp_kernel(n, du);
        kernel[size_t(n)] = v;
        if (n < len / 2) kernel[size_t(len - n)] = v;
    }
    fft_inplace(kernel, false);

    ProjectionStack<T> out = stack;
    out.state = StackState::ramp_filtered;
    const double gain = kPi / double(stack.n_views);

    const std::int64_t n_rows = std::int64_t(stack.n_views) * stack.rows;
    parallel_chunks(n_rows, std::max(1, int(n_rows / 16)), [&](int, std::int64_t lo, std::int64_t hi) {
        std::vector<std::complex<double>> line(static_cast<size_t>(len));
        for (std::int64_t r = lo; r < hi; ++r) {
            const int j = int(r / stack.rows);
            const int v = int(r % stack.rows);
            const T* src = stack.view_ptr(j) + std::int64_t(v) * cols;
            for (int u = 0; u < cols; ++u) line[size_t(u)] = double(src[u]);
            for (int u = cols; u < len; ++u) line[size_t(u)] = 0.0;
            fft_inplace(line, false);
            for (int u = 0; u < len; ++u) line[size_t(u)] *= kernel[size_t(u)];
            fft_inplace(line, true);
            T* dst = out.view_ptr(j) + std::int64_t(v) * cols;
            for (int u = 0; u < cols; ++u) dst[u] = T(line[size_t(u)].real() * gain);
        }
    });
    return out;
}

} // namespace cbmoco
