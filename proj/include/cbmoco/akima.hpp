#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "cbmoco/errors.hpp"

namespace cbmoco {

namespace akima_detail {

inline constexpr double kTieEps = 1e-12;

inline void check_knots(std::span<const double> times, std::span<const double> values) {
    if (times.size() != values.size())
        throw ArgumentError("akima: times/values size mismatch");
    if (times.size() < 3) throw ArgumentError("akima: need at least 3 nodes");
    for (size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw ArgumentError("akima: node times must be strictly increasing");
}

inline double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

/// Extended secants me[k] = m_{k-2}: real segment secants at k = 2..n, plus two
/// linearly extrapolated entries on each side (Akima's boundary treatment).
inline std::vector<double> extended_secants(std::span<const double> t, std::span<const double> y) {
    const size_t n = t.size();
    std::vector<double> me(n + 3);
    for (size_t i = 0; i + 1 < n; ++i) me[i + 2] = (y[i + 1] - y[i]) / (t[i + 1] - t[i]);
    me[1] = 2.0 * me[2] - me[3];
    me[0] = 2.0 * me[1] - me[2];
    me[n + 1] = 2.0 * me[n] - me[n - 1];
    me[n + 2] = 2.0 * me[n + 1] - me[n];
    return me;
}

/// Slope at node i from the four surrounding extended secants.
inline double slope_from(const std::vector<double>& me, size_t i) {
    const double a = me[i], b = me[i + 1], c = me[i + 2], e = me[i + 3];
    const double w1 = std::abs(e - c);
    const double w2 = std::abs(b - a);
    if (w1 + w2 < kTieEps) return 0.5 * (b + c);
    return (w1 * b + w2 * c) / (w1 + w2);
}

inline size_t find_segment(std::span<const double> t, double x) {
    if (x < t.front() || x > t.back())
        throw ArgumentError("akima: evaluation point outside node range");
    size_t lo = 0, hi = t.size() - 1;
    while (hi - lo > 1) {
        const size_t mid = (lo + hi) / 2;
        if (x >= t[mid]) lo = mid; else hi = mid;
    }
    return lo == t.size() - 1 ? lo - 1 : lo;
}

} // namespace akima_detail

/// Akima node slopes (one per node) for the given knot values.
inline std::vector<double> akima_slopes(std::span<const double> times,
                                        std::span<const double> values) {
    akima_detail::check_knots(times, values);
    const auto me = akima_detail::extended_secants(times, values);
    std::vector<double> d(times.size());
    for (size_t i = 0; i < times.size(); ++i) d[i] = akima_detail::slope_from(me, i);
    return d;
}

/// Value of the Akima-interpolating piecewise cubic at t.
inline double akima_eval(std::span<const double> times, std::span<const double> values, double t) {
    akima_detail::check_knots(times, values);
    const auto me = akima_detail::extended_secants(times, values);
    const size_t i = akima_detail::find_segment(times, t);
    const double di = akima_detail::slope_from(me, i);
    const double di1 = akima_detail::slope_from(me, i + 1);
    const double h = times[i + 1] - times[i];
    const double s = (t - times[i]) / h;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    return h00 * values[i] + h10 * h * di + h01 * values[i + 1] + h11 * h * di1;
}

/// Value at t together with the exact gradient d(value)/d(values[k]).
///
/// The absolute values in the slope weights are differentiated with sign(0) = 0,
/// so at exact weight ties the result is an element of the generalized gradient.
inline double akima_eval_gradient(std::span<const double> times, std::span<const double> values,
                                  double t, std::vector<double>& grad) {
    akima_detail::check_knots(times, values);
    const size_t n = times.size();
    const auto me = akima_detail::extended_secants(times, values);

    // d(me[k]) / d(values[*]) rows; extended rows follow the extrapolation recurrences.
    std::vector<std::vector<double>> dme(n + 3, std::vector<double>(n, 0.0));
    for (size_t i = 0; i + 1 < n; ++i) {
        const double inv = 1.0 / (times[i + 1] - times[i]);
        dme[i + 2][i + 1] += inv;
        dme[i + 2][i] -= inv;
    }
    for (size_t k = 0; k < n; ++k) {
        dme[1][k] = 2.0 * dme[2][k] - dme[3][k];
        dme[0][k] = 2.0 * dme[1][k] - dme[2][k];
        dme[n + 1][k] = 2.0 * dme[n][k] - dme[n - 1][k];
        dme[n + 2][k] = 2.0 * dme[n + 1][k] - dme[n][k];
    }

    auto slope_grad = [&](size_t i, double& d_out, std::vector<double>& g_out) {
        const double a = me[i], b = me[i + 1], c = me[i + 2], e = me[i + 3];
        const double w1 = std::abs(e - c);
        const double w2 = std::abs(b - a);
        double pa, pb, pc, pe;
        if (w1 + w2 < akima_detail::kTieEps) {
            d_out = 0.5 * (b + c);
            pa = 0; pb = 0.5; pc = 0.5; pe = 0;
        } else {
            const double W = w1 + w2;
            d_out = (w1 * b + w2 * c) / W;
            const double s1 = akima_detail::sgn(e - c); // dw1
            const double s2 = akima_detail::sgn(b - a); // dw2
            const double q1 = w2 * (b - c) / (W * W);   // d(d)/d(w1)
            const double q2 = w1 * (c - b) / (W * W);   // d(d)/d(w2)
            pa = -s2 * q2;
            pb = w1 / W + s2 * q2;
            pc = w2 / W - s1 * q1;
            pe = s1 * q1;
        }
        g_out.assign(n, 0.0);
        for (size_t k = 0; k < n; ++k)
            g_out[k] = pa * dme[i][k] + pb * dme[i + 1][k] + pc * dme[i + 2][k] + pe * dme[i + 3][k];
    };

    const size_t i = akima_detail::find_segment(times, t);
    double di, di1;
    std::vector<double> gdi, gdi1;
    slope_grad(i, di, gdi);
    slope_grad(i + 1, di1, gdi1);

    const double h = times[i + 1] - times[i];
    const double s = (t - times[i]) / h;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;

    grad.assign(n, 0.0);
    grad[i] += h00;
    grad[i + 1] += h01;
    for (size_t k = 0; k < n; ++k) grad[k] += h10 * h * gdi[k] + h11 * h * gdi1[k];
    return h00 * values[i] + h10 * h * di + h01 * values[i + 1] + h11 * h * di1;
}

} // namespace cbmoco
