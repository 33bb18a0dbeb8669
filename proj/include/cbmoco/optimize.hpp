#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "cbmoco/backproject.hpp"
#include "cbmoco/metrics.hpp"
#include "cbmoco/motion.hpp"

namespace cbmoco {

/// Gradient-descent settings: x(n+1) = x(n) - s0 * t^n * df/dx, with optional
/// per-parameter-class step scaling (translation vs rotation nodes).
struct OptimConfig {
    int n_iters = 100;
    double step_size = 100.0; // s0
    double decay = 0.97;      // t
    double translation_step_scale = 1.0;
    double rotation_step_scale = 1.0;

    void validate() const {
        if (n_iters < 1) throw ArgumentError("OptimConfig: n_iters must be >= 1");
        if (!(step_size > 0)) throw ArgumentError("OptimConfig: step_size must be > 0");
        if (!(decay > 0) || decay > 1.0) throw ArgumentError("OptimConfig: decay must be in (0, 1]");
    }

    double step_at(int n) const { return step_size * std::pow(decay, n); }
};

struct MotionEstimate {
    SplineMotion x_star;
    std::vector<double> objective_trace;
    std::int64_t eval_count = 0;
    double wall_time_s = 0;
};

namespace optimize_detail {

struct VectorEstimate {
    std::vector<double> x;
    std::vector<double> trace;
    std::int64_t eval_count = 0;
};

/// Plain gradient descent with exponential step decay; runs exactly n_iters
/// iterations (no early stopping) and records n_iters + 1 objective values.
template <class Fg>
VectorEstimate gradient_descent_flat(Fg&& objective_and_gradient, std::vector<double> x,
                                     const OptimConfig& cfg,
                                     const std::vector<double>& step_scale) {
    cfg.validate();
    if (!step_scale.empty() && step_scale.size() != x.size())
        throw ArgumentError("gradient_descent: step_scale size mismatch");

    VectorEstimate est;
    est.trace.reserve(size_t(cfg.n_iters) + 1);
    std::vector<double> grad;
    for (int n = 0; n < cfg.n_iters; ++n) {
        const auto [f, g] = objective_and_gradient(x);
        grad = g;
        if (!std::isfinite(f)) {
            DivergenceError err("gradient_descent: non-finite objective at iteration " + std::to_string(n));
            err.trace = est.trace;
            throw err;
        }
        for (double gv : grad)
            if (!std::isfinite(gv)) {
                DivergenceError err("gradient_descent: non-finite gradient at iteration " + std::to_string(n));
                err.trace = est.trace;
                throw err;
            }
        est.trace.push_back(f);
        const double s = cfg.step_at(n);
        for (size_t i = 0; i < x.size(); ++i)
            x[i] -= s * (step_scale.empty() ? 1.0 : step_scale[i]) * grad[i];
    }
    est.trace.push_back(objective_and_gradient(x).first);
    est.eval_count = cfg.n_iters + 1;
    est.x = std::move(x);
    return est;
}

} // namespace optimize_detail

/// Full autofocus objective f(x) = q(r(p(x))) and its exact gradient via the chained
/// vector-Jacobian products (metric gradient -> geometry VJP -> motion VJP).
inline std::pair<double, std::array<std::vector<double>, 6>> objective_and_gradient(
    const SplineMotion& x, const ProjectionStack<double>& stack,
    const std::vector<ProjectionMatrix>& p_init, const GridSpec& grid,
    const DifferentiableMetric& metric, GradientMode mode = GradientMode::exact_bilinear) {
    const auto matrices = motion_to_matrices(x, p_init);
    const Volume<double> recon = backproject(stack, matrices, grid);
    auto [value, dq_dvol] = metric.evaluate(recon);
    const GeometryGradient geom_grad = backproject_geometry_vjp(stack, matrices, grid, dq_dvol, mode);
    return {value, motion_vjp(x, p_init, geom_grad)};
}

/// Value-only evaluation of the same objective (used by gradient-free baselines).
inline double objective_value(const SplineMotion& x, const ProjectionStack<double>& stack,
                              const std::vector<ProjectionMatrix>& p_init, const GridSpec& grid,
                              const DifferentiableMetric& metric) {
    const auto matrices = motion_to_matrices(x, p_init);
    const Volume<double> recon = backproject(stack, matrices, grid);
    return metric.evaluate(recon).first;
}

/// Generic gradient descent over a SplineMotion's node values (Eq.-6-style update).
template <class Fg>
MotionEstimate gradient_descent(Fg&& objective_and_gradient_flat, const SplineMotion& x0,
                                const OptimConfig& cfg) {
    const auto t_start = std::chrono::steady_clock::now();
    std::vector<double> scale(6 * x0.n_nodes());
    for (size_t r = 0; r < 6; ++r)
        for (size_t k = 0; k < x0.n_nodes(); ++k)
            scale[r * x0.n_nodes() + k] = r < 3 ? cfg.translation_step_scale : cfg.rotation_step_scale;

    auto flat_est = optimize_detail::gradient_descent_flat(objective_and_gradient_flat,
                                                           x0.to_flat(), cfg, scale);
    MotionEstimate est;
    est.x_star = x0.with_flat(flat_est.x);
    est.objective_trace = std::move(flat_est.trace);
    est.eval_count = flat_est.eval_count;
    est.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return est;
}

/// Motion estimation from x0 = 0: gradient descent on the autofocus objective.
inline MotionEstimate estimate_motion(const ProjectionStack<double>& stack,
                                      const std::vector<ProjectionMatrix>& p_init,
                                      const GridSpec& grid, const DifferentiableMetric& metric,
                                      const OptimConfig& cfg, int n_nodes,
                                      GradientMode mode = GradientMode::exact_bilinear) {
    stack.require_state(StackState::ramp_filtered, "estimate_motion");
    const SplineMotion x0 = SplineMotion::zero(n_nodes, stack.n_views);
    auto fg = [&](const std::vector<double>& flat) {
        const SplineMotion x = x0.with_flat(flat);
        auto [value, grad6] = objective_and_gradient(x, stack, p_init, grid, metric, mode);
        std::vector<double> flat_grad;
        flat_grad.reserve(flat.size());
        for (const auto& row : grad6) flat_grad.insert(flat_grad.end(), row.begin(), row.end());
        return std::pair<double, std::vector<double>>(value, std::move(flat_grad));
    };
    return gradient_descent(fg, x0, cfg);
}

namespace optimize_detail {

/// Simplified (mu/lambda) evolution strategy core on flat parameter vectors:
/// population 16, parents 8, isotropic Gaussian mutations with 1/5-success-rule
/// step-size adaptation. Not full CMA-ES: no covariance adaptation.
template <class F>
VectorEstimate es_minimize_flat(F&& objective, std::vector<double> mean, std::int64_t budget,
                                std::uint64_t seed, double sigma0,
                                const std::function<void(std::int64_t, const std::vector<double>&,
                                                         double)>& on_improvement = nullptr) {
    if (budget < 1) throw ArgumentError("es_minimize_flat: budget must be >= 1");
    constexpr int kLambda = 16;
    constexpr int kMu = 8;

    std::mt19937_64 rng(seed);
    auto u01 = [&rng] { return double(rng() >> 11) * 0x1.0p-53; };
    auto normal = [&] {
        // Box-Muller keeps draws identical across standard libraries.
        const double u1 = std::max(u01(), 1e-300);
        const double u2 = u01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    };

    const size_t dim = mean.size();
    double sigma = sigma0;

    VectorEstimate est;
    std::int64_t evals = 0;
    double f_best = objective(mean);
    ++evals;
    std::vector<double> x_best = mean;
    est.trace.push_back(f_best);
    if (on_improvement) on_improvement(evals, x_best, f_best);

    double f_parent = f_best;
    std::vector<std::vector<double>> pop(static_cast<size_t>(kLambda), std::vector<double>(dim));
    std::vector<double> fitness(static_cast<size_t>(kLambda));
    std::vector<int> order(static_cast<size_t>(kLambda));

    while (evals + kLambda <= budget) {
        for (int i = 0; i < kLambda; ++i) {
            for (size_t d = 0; d < dim; ++d) pop[size_t(i)][d] = mean[d] + sigma * normal();
            fitness[size_t(i)] = objective(pop[size_t(i)]);
            ++evals;
            if (fitness[size_t(i)] < f_best) {
                f_best = fitness[size_t(i)];
                x_best = pop[size_t(i)];
                if (on_improvement) on_improvement(evals, x_best, f_best);
            }
        }
        for (int i = 0; i < kLambda; ++i) order[size_t(i)] = i;
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return fitness[size_t(a)] < fitness[size_t(b)]; });

        std::fill(mean.begin(), mean.end(), 0.0);
        for (int i = 0; i < kMu; ++i)
            for (size_t d = 0; d < dim; ++d) mean[d] += pop[size_t(order[size_t(i)])][d] / double(kMu);

        int successes = 0;
        for (int i = 0; i < kLambda; ++i)
            if (fitness[size_t(i)] < f_parent) ++successes;
        sigma *= double(successes) / kLambda > 0.2 ? 1.22 : 0.82; // 1/5-success rule
        f_parent = fitness[size_t(order[0])];
        est.trace.push_back(f_best);
    }
    est.x = std::move(x_best);
    est.eval_count = evals;
    return est;
}

} // namespace optimize_detail

/// Gradient-free baseline over a motion model; returns the best-ever iterate, the
/// best objective after each generation and the true evaluation count (<= budget).
/// The optional observer fires on every best-so-far improvement.
template <class F>
MotionEstimate baseline_gradient_free(F&& objective_only, const SplineMotion& x0,
                                      std::int64_t budget, std::uint64_t seed = 0,
                                      double sigma0 = 0.5,
                                      const std::function<void(std::int64_t, const SplineMotion&, double)>&
                                          on_improvement = nullptr) {
    const auto t_start = std::chrono::steady_clock::now();
    auto flat_objective = [&](const std::vector<double>& flat) {
        return objective_only(x0.with_flat(flat));
    };
    std::function<void(std::int64_t, const std::vector<double>&, double)> observer;
    if (on_improvement)
        observer = [&](std::int64_t evals, const std::vector<double>& flat, double f) {
            on_improvement(evals, x0.with_flat(flat), f);
        };
    auto flat_est =
        optimize_detail::es_minimize_flat(flat_objective, x0.to_flat(), budget, seed, sigma0, observer);
    MotionEstimate est;
    est.x_star = x0.with_flat(flat_est.x);
    est.objective_trace = std::move(flat_est.trace);
    est.eval_count = flat_est.eval_count;
    est.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return est;
}

} // namespace cbmoco
