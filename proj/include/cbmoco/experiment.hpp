#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include <json.hpp>

#include "cbmoco/evaluate.hpp"
#include "cbmoco/io.hpp"
#include "cbmoco/optimize.hpp"
#include "cbmoco/phantom.hpp"
#include "cbmoco/project.hpp"
#include "cbmoco/ramp.hpp"

namespace cbmoco {

/// Full description of one simulation + estimation + evaluation experiment.
///
/// The simulator forward-projects the phantom with motion-perturbed matrices (the
/// data-consistent geometry); the estimator starts from the calibrated, unperturbed
/// set, so the sampled motion itself is the estimation target.
struct ExperimentConfig {
    std::string phantom_kind = "shepp_logan_3d";
    std::array<int, 3> phantom_dims{64, 64, 64};
    Vec3 phantom_spacing_mm{3, 3, 3};

    ScanGeometry geometry{785.0, 1200.0, 120, 2.0 * kPi, 160, 128, 2.5};

    double amplitude_t_mm = 2.0;
    double amplitude_r_deg = 2.0;
    int sim_n_nodes = 5;
    std::uint64_t seed = 7;

    std::string metric = "smoothed_tv"; // or "oracle_gt" (validation-only)
    int est_n_nodes = 10;
    std::array<int, 3> est_dims{48, 48, 48};
    Vec3 est_spacing_mm{4, 4, 4};
    OptimConfig optimizer{100, 100.0, 0.97, 1.0, 1.0};

    std::array<int, 3> final_dims{96, 96, 96};
    Vec3 final_spacing_mm{2, 2, 2};

    void validate() const {
        geometry.validate();
        phantom_kind_from_string(phantom_kind);
        for (int d : phantom_dims)
            if (d < 8) throw ConfigError("config: phantom dims must be >= 8");
        if (!(phantom_spacing_mm.x > 0 && phantom_spacing_mm.y > 0 && phantom_spacing_mm.z > 0))
            throw ConfigError("config: phantom spacing must be positive");
        if (amplitude_t_mm < 0 || amplitude_r_deg < 0)
            throw ConfigError("config: motion amplitudes must be >= 0");
        if (sim_n_nodes < 3 || est_n_nodes < 3)
            throw ConfigError("config: spline node counts must be >= 3");
        if (metric != "smoothed_tv" && metric != "oracle_gt")
            throw ConfigError("config: unknown metric '" + metric + "'");
        optimizer.validate();
        GridSpec::centered(est_dims, est_spacing_mm).validate();
        GridSpec::centered(final_dims, final_spacing_mm).validate();
        // The estimation grid may be coarser than, but never finer than, the final grid.
        if (est_spacing_mm.x < final_spacing_mm.x - 1e-12 ||
            est_spacing_mm.y < final_spacing_mm.y - 1e-12 ||
            est_spacing_mm.z < final_spacing_mm.z - 1e-12)
            throw ConfigError("config: estimation grid resolution exceeds the final grid");
    }

    GridSpec est_grid() const { return GridSpec::centered(est_dims, est_spacing_mm); }
    GridSpec final_grid() const { return GridSpec::centered(final_dims, final_spacing_mm); }

    /// Laptop-scale preset: runs the full pipeline in minutes on one core.
    static ExperimentConfig desk() { return ExperimentConfig{}; }

    /// Full-scale preset mirroring a clinical head protocol; slow, for offline runs.
    static ExperimentConfig paper() {
        ExperimentConfig c;
        c.phantom_dims = {128, 128, 128};
        c.phantom_spacing_mm = {1.5, 1.5, 1.5};
        c.geometry = ScanGeometry{785.0, 1200.0, 360, 2.0 * kPi, 700, 500, 0.64};
        c.amplitude_t_mm = 5.0;
        c.amplitude_r_deg = 5.0;
        c.sim_n_nodes = 10;
        c.est_n_nodes = 30;
        c.est_dims = {128, 128, 128};
        c.est_spacing_mm = {2, 2, 2};
        c.optimizer = OptimConfig{100, 100.0, 0.97, 1.0, 1.0};
        c.final_dims = {256, 256, 256};
        c.final_spacing_mm = {1, 1, 1};
        return c;
    }

    static ExperimentConfig preset(const std::string& name) {
        if (name == "desk") return desk();
        if (name == "paper") return paper();
        throw ConfigError("unknown preset '" + name + "' (expected 'desk' or 'paper')");
    }

    nlohmann::json to_json() const {
        return nlohmann::json{
            {"phantom",
             {{"kind", phantom_kind},
              {"dims", phantom_dims},
              {"spacing_mm", {phantom_spacing_mm.x, phantom_spacing_mm.y, phantom_spacing_mm.z}}}},
            {"geometry",
             {{"source_to_iso_mm", geometry.source_to_iso_mm},
              {"source_to_detector_mm", geometry.source_to_detector_mm},
              {"n_views", geometry.n_views},
              {"angular_range_deg", rad_to_deg(geometry.angular_range_rad)},
              {"detector_rows", geometry.detector_rows},
              {"detector_cols", geometry.detector_cols},
              {"pixel_spacing_mm", geometry.pixel_spacing_mm}}},
            {"simulation",
             {{"amplitude_t_mm", amplitude_t_mm},
              {"amplitude_r_deg", amplitude_r_deg},
              {"n_nodes", sim_n_nodes},
              {"seed", seed}}},
            {"estimation",
             {{"metric", metric},
              {"n_nodes", est_n_nodes},
              {"grid", {{"dims", est_dims}, {"spacing_mm", {est_spacing_mm.x, est_spacing_mm.y, est_spacing_mm.z}}}},
              {"optimizer",
               {{"n_iters", optimizer.n_iters},
                {"step_size", optimizer.step_size},
                {"decay", optimizer.decay},
                {"translation_step_scale", optimizer.translation_step_scale},
                {"rotation_step_scale", optimizer.rotation_step_scale}}}}},
            {"reconstruction",
             {{"grid", {{"dims", final_dims}, {"spacing_mm", {final_spacing_mm.x, final_spacing_mm.y, final_spacing_mm.z}}}}}},
        };
    }

    static ExperimentConfig from_json(const nlohmann::json& j) {
        using io_detail::field;
        ExperimentConfig c;
        const auto ph = field<nlohmann::json>(j, "phantom", "config");
        c.phantom_kind = field<std::string>(ph, "kind", "config.phantom");
        c.phantom_dims = field<std::array<int, 3>>(ph, "dims", "config.phantom");
        const auto ps = field<std::array<double, 3>>(ph, "spacing_mm", "config.phantom");
        c.phantom_spacing_mm = {ps[0], ps[1], ps[2]};

        const auto ge = field<nlohmann::json>(j, "geometry", "config");
        c.geometry.source_to_iso_mm = field<double>(ge, "source_to_iso_mm", "config.geometry");
        c.geometry.source_to_detector_mm = field<double>(ge, "source_to_detector_mm", "config.geometry");
        c.geometry.n_views = field<int>(ge, "n_views", "config.geometry");
        c.geometry.angular_range_rad = deg_to_rad(field<double>(ge, "angular_range_deg", "config.geometry"));
        c.geometry.detector_rows = field<int>(ge, "detector_rows", "config.geometry");
        c.geometry.detector_cols = field<int>(ge, "detector_cols", "config.geometry");
        c.geometry.pixel_spacing_mm = field<double>(ge, "pixel_spacing_mm", "config.geometry");

        const auto si = field<nlohmann::json>(j, "simulation", "config");
        c.amplitude_t_mm = field<double>(si, "amplitude_t_mm", "config.simulation");
        c.amplitude_r_deg = field<double>(si, "amplitude_r_deg", "config.simulation");
        c.sim_n_nodes = field<int>(si, "n_nodes", "config.simulation");
        c.seed = field<std::uint64_t>(si, "seed", "config.simulation");

        const auto es = field<nlohmann::json>(j, "estimation", "config");
        c.metric = field<std::string>(es, "metric", "config.estimation");
        c.est_n_nodes = field<int>(es, "n_nodes", "config.estimation");
        const auto eg = field<nlohmann::json>(es, "grid", "config.estimation");
        c.est_dims = field<std::array<int, 3>>(eg, "dims", "config.estimation.grid");
        const auto esp = field<std::array<double, 3>>(eg, "spacing_mm", "config.estimation.grid");
        c.est_spacing_mm = {esp[0], esp[1], esp[2]};
        const auto op = field<nlohmann::json>(es, "optimizer", "config.estimation");
        c.optimizer.n_iters = field<int>(op, "n_iters", "config.optimizer");
        c.optimizer.step_size = field<double>(op, "step_size", "config.optimizer");
        c.optimizer.decay = field<double>(op, "decay", "config.optimizer");
        c.optimizer.translation_step_scale = field<double>(op, "translation_step_scale", "config.optimizer");
        c.optimizer.rotation_step_scale = field<double>(op, "rotation_step_scale", "config.optimizer");

        const auto re = field<nlohmann::json>(j, "reconstruction", "config");
        const auto fg = field<nlohmann::json>(re, "grid", "config.reconstruction");
        c.final_dims = field<std::array<int, 3>>(fg, "dims", "config.reconstruction.grid");
        const auto fsp = field<std::array<double, 3>>(fg, "spacing_mm", "config.reconstruction.grid");
        c.final_spacing_mm = {fsp[0], fsp[1], fsp[2]};
        return c;
    }

    static ExperimentConfig load(const std::filesystem::path& path) {
        try {
            auto c = from_json(io_detail::load_json(path));
            c.validate();
            return c;
        } catch (const FormatError& e) {
            throw ConfigError(e.what());
        }
    }
};

/// Canonical artifact names inside an experiment output directory.
namespace artifact {
inline constexpr const char* config = "config.json";
inline constexpr const char* phantom = "phantom";
inline constexpr const char* stack_measured = "stack_measured";
inline constexpr const char* stack_reference = "stack_reference";
inline constexpr const char* matrices_calibrated = "matrices_calibrated.json";
inline constexpr const char* matrices_gt = "matrices_gt.json";
inline constexpr const char* motion_gt = "motion_gt.json";
inline constexpr const char* motion_est = "motion_est.json";
inline constexpr const char* trace_csv = "trace.csv";
inline constexpr const char* recon_reference = "recon_reference";
inline constexpr const char* recon_initial = "recon_initial";
inline constexpr const char* recon_compensated = "recon_compensated";
inline constexpr const char* report_json = "report.json";
inline constexpr const char* report_csv = "report.csv";
inline constexpr const char* motion_curves_csv = "motion_curves.csv";
inline constexpr const char* timing = "timing.json";
}

namespace experiment_detail {

inline void record_timing(const std::filesystem::path& out, const std::string& stage, double seconds) {
    const auto path = out / artifact::timing;
    nlohmann::json j;
    if (std::filesystem::exists(path)) j = io_detail::load_json(path);
    j[stage + "_seconds"] = seconds;
    io_detail::save_json(path, j);
}

class StageTimer {
public:
    StageTimer(const std::filesystem::path& out, std::string stage)
        : out_(out), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        try {
            record_timing(out_, stage_, s);
        } catch (...) {
        }
    }

private:
    std::filesystem::path out_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
};

/// Curve-space squared distance to the ground-truth motion and its gradient; the
/// validation-only "oracle_gt" objective (isolates pipeline plumbing from metric quality).
inline std::pair<double, std::vector<double>> oracle_gt_objective(const SplineMotion& x0,
                                                                  const std::vector<double>& flat,
                                                                  const SplineMotion& x_gt,
                                                                  int n_views) {
    const SplineMotion x = x0.with_flat(flat);
    const auto ce = motion_curves(x, n_views);
    const auto cg = motion_curves(x_gt, n_views);
    double value = 0;
    std::vector<double> grad(flat.size(), 0.0);
    std::vector<double> g;
    for (int j = 0; j < n_views; ++j) {
        for (int r = 0; r < 6; ++r) {
            const double diff = ce[size_t(j)].as_array()[size_t(r)] - cg[size_t(j)].as_array()[size_t(r)];
            value += diff * diff;
            akima_eval_gradient(x.node_times, x.node_values[size_t(r)], double(j), g);
            for (size_t k = 0; k < x.n_nodes(); ++k)
                grad[size_t(r) * x.n_nodes() + k] += 2.0 * diff * g[k];
        }
    }
    return {value, std::move(grad)};
}

} // namespace experiment_detail

/// Stage 1: phantom, trajectory, ground-truth motion, forward projection with the
/// perturbed matrices, cosine weighting and ramp filtering. Also simulates the
/// motion-free reference stack used by the evaluation stage.
inline void run_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    cfg.validate();
    std::filesystem::create_directories(out);
    experiment_detail::StageTimer timer(out, "simulate");

    io_detail::save_json(out / artifact::config, cfg.to_json());

    const auto phantom = make_phantom<double>(cfg.phantom_kind, cfg.phantom_dims, cfg.phantom_spacing_mm);
    write_volume(out / artifact::phantom, phantom);

    const auto calibrated = build_circular_trajectory(cfg.geometry);
    write_matrices(out / artifact::matrices_calibrated, calibrated, cfg.geometry.detector_rows,
                   cfg.geometry.detector_cols);

    const auto motion_gt = sample_random_motion(cfg.amplitude_t_mm, cfg.amplitude_r_deg,
                                                cfg.sim_n_nodes, cfg.seed, cfg.geometry.n_views);
    write_motion(out / artifact::motion_gt, motion_gt);

    const auto perturbed = motion_to_matrices(motion_gt, calibrated);
    write_matrices(out / artifact::matrices_gt, perturbed, cfg.geometry.detector_rows,
                   cfg.geometry.detector_cols);

    const auto measured =
        ramp_filter(cosine_weight(forward_project(phantom, perturbed, cfg.geometry), cfg.geometry));
    write_stack(out / artifact::stack_measured, measured);

    const auto reference =
        ramp_filter(cosine_weight(forward_project(phantom, calibrated, cfg.geometry), cfg.geometry));
    write_stack(out / artifact::stack_reference, reference);
}

/// Stage 2: motion estimation from the measured stack and the calibrated matrices.
inline MotionEstimate run_estimate(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    cfg.validate();
    experiment_detail::StageTimer timer(out, "estimate");

    const auto stack = read_stack<double>(out / artifact::stack_measured);
    const auto calibrated = read_matrices(out / artifact::matrices_calibrated);
    const GridSpec grid = cfg.est_grid();

    MotionEstimate est;
    if (cfg.metric == "oracle_gt") {
        const auto x_gt = read_motion(out / artifact::motion_gt);
        const SplineMotion x0 = SplineMotion::zero(cfg.est_n_nodes, cfg.geometry.n_views);
        auto fg = [&](const std::vector<double>& flat) {
            return experiment_detail::oracle_gt_objective(x0, flat, x_gt, cfg.geometry.n_views);
        };
        est = gradient_descent(fg, x0, cfg.optimizer);
    } else {
        // Normalization constants are fixed once from the uncompensated reconstruction,
        // mirroring a fixed sample-independent intensity window.
        const Volume<double> initial = backproject(stack, calibrated, grid);
        const auto [lo, hi] = robust_range(initial);
        const double slope = 1.0 / std::max(hi - lo, 1e-12);
        auto metric = std::make_shared<NormalizedMetric>(std::make_shared<SmoothedTvMetric>(), lo, slope);
        est = estimate_motion(stack, calibrated, grid, *metric, cfg.optimizer, cfg.est_n_nodes);
    }

    write_motion(out / artifact::motion_est, est.x_star);

    std::ofstream trace(out / artifact::trace_csv);
    trace << "iteration,objective,step_size\n";
    for (size_t n = 0; n < est.objective_trace.size(); ++n) {
        const double step = n + 1 < est.objective_trace.size() ? cfg.optimizer.step_at(int(n)) : 0.0;
        trace << n << "," << nlohmann::json(est.objective_trace[n]).dump() << ","
              << nlohmann::json(step).dump() << "\n";
    }

    nlohmann::json meta{{"eval_count", est.eval_count},
                        {"n_iters", cfg.optimizer.n_iters},
                        {"objective_initial", est.objective_trace.front()},
                        {"objective_final", est.objective_trace.back()}};
    io_detail::save_json(out / "estimate_meta.json", meta);
    experiment_detail::record_timing(out, "estimate_wall", est.wall_time_s);
    return est;
}

/// Stage 3: reference, uncompensated and motion-compensated reconstructions on the
/// final grid.
inline void run_reconstruct(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    cfg.validate();
    experiment_detail::StageTimer timer(out, "reconstruct");

    const auto measured = read_stack<double>(out / artifact::stack_measured);
    const auto reference_stack = read_stack<double>(out / artifact::stack_reference);
    const auto calibrated = read_matrices(out / artifact::matrices_calibrated);
    const auto x_est = read_motion(out / artifact::motion_est);
    const GridSpec grid = cfg.final_grid();

    write_volume(out / artifact::recon_reference, backproject(reference_stack, calibrated, grid));
    write_volume(out / artifact::recon_initial, backproject(measured, calibrated, grid));
    write_volume(out / artifact::recon_compensated,
                 backproject(measured, motion_to_matrices(x_est, calibrated), grid));
}

struct ExperimentReport {
    EvalReport initial;
    EvalReport compensated;
    std::int64_t eval_count = 0;
};

namespace experiment_detail {

inline nlohmann::json report_state_json(const EvalReport& r) {
    return nlohmann::json{
        {"rpe_mm", r.rpe_mm},
        {"mae",
         {{"t_x", r.mae.per_param[0]},
          {"t_y", r.mae.per_param[1]},
          {"t_z", r.mae.per_param[2]},
          {"r_x", r.mae.per_param[3]},
          {"r_y", r.mae.per_param[4]},
          {"r_z", r.mae.per_param[5]}}},
        {"mae_in_plane", r.mae.in_plane},
        {"mae_out_of_plane", r.mae.out_of_plane},
        {"rmse", r.rmse},
        {"ssim", r.ssim},
        {"vif", r.vif},
    };
}

} // namespace experiment_detail

/// Stage 4: ground-truth-aware scoring of the initial and compensated states;
/// writes report.json, a flat CSV row and the plot-ready motion curves.
inline ExperimentReport run_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    cfg.validate();
    experiment_detail::StageTimer timer(out, "evaluate");

    const auto calibrated = read_matrices(out / artifact::matrices_calibrated);
    const auto matrices_gt = read_matrices(out / artifact::matrices_gt);
    const auto x_gt = read_motion(out / artifact::motion_gt);
    const auto x_est = read_motion(out / artifact::motion_est);
    const auto points = make_eval_points();

    ExperimentReport rep;
    const SplineMotion x_zero = SplineMotion::zero(cfg.est_n_nodes, cfg.geometry.n_views);
    rep.initial.rpe_mm =
        reprojection_error(calibrated, matrices_gt, points, cfg.geometry.pixel_spacing_mm);
    rep.initial.mae = parameter_mae(x_zero, x_gt, cfg.geometry.n_views);
    rep.compensated.rpe_mm = reprojection_error(motion_to_matrices(x_est, calibrated), matrices_gt,
                                                points, cfg.geometry.pixel_spacing_mm);
    rep.compensated.mae = parameter_mae(x_est, x_gt, cfg.geometry.n_views);

    const auto reference = read_volume<double>(out / artifact::recon_reference);
    const auto initial = read_volume<double>(out / artifact::recon_initial);
    const auto compensated = read_volume<double>(out / artifact::recon_compensated);

    // One intensity window from the reference recon normalizes all three volumes.
    const auto [lo, hi] = robust_range(reference);
    const double slope = 1.0 / std::max(hi - lo, 1e-12);
    auto normalize = [&](const Volume<double>& v) {
        Volume<double> n = v;
        for (auto& val : n.data) val = (val - lo) * slope;
        return n;
    };
    const Volume<double> ref_n = normalize(reference);
    {
        const ImageMetrics mi = image_metrics(normalize(initial), ref_n);
        rep.initial.rmse = mi.rmse;
        rep.initial.ssim = mi.ssim;
        rep.initial.vif = mi.vif;
        const ImageMetrics mc = image_metrics(normalize(compensated), ref_n);
        rep.compensated.rmse = mc.rmse;
        rep.compensated.ssim = mc.ssim;
        rep.compensated.vif = mc.vif;
    }

    if (std::filesystem::exists(out / "estimate_meta.json")) {
        const auto meta = io_detail::load_json(out / "estimate_meta.json");
        rep.eval_count = io_detail::field<std::int64_t>(meta, "eval_count", "estimate_meta.json");
    }

    nlohmann::json j{
        {"initial", experiment_detail::report_state_json(rep.initial)},
        {"compensated", experiment_detail::report_state_json(rep.compensated)},
        {"eval_count", rep.eval_count},
        {"seed", cfg.seed},
        {"metric", cfg.metric},
    };
    io_detail::save_json(out / artifact::report_json, j);

    {
        std::ofstream csv(out / artifact::report_csv);
        csv << "rpe_init_mm,rpe_comp_mm,"
               "mae_tx_init,mae_ty_init,mae_tz_init,mae_rx_init,mae_ry_init,mae_rz_init,"
               "mae_tx_comp,mae_ty_comp,mae_tz_comp,mae_rx_comp,mae_ry_comp,mae_rz_comp,"
               "rmse_init,ssim_init,vif_init,rmse_comp,ssim_comp,vif_comp,eval_count\n";
        auto num = [](double v) { return nlohmann::json(v).dump(); };
        csv << num(rep.initial.rpe_mm) << "," << num(rep.compensated.rpe_mm);
        for (double v : rep.initial.mae.per_param) csv << "," << num(v);
        for (double v : rep.compensated.mae.per_param) csv << "," << num(v);
        csv << "," << num(rep.initial.rmse) << "," << num(rep.initial.ssim) << ","
            << num(rep.initial.vif) << "," << num(rep.compensated.rmse) << ","
            << num(rep.compensated.ssim) << "," << num(rep.compensated.vif) << ","
            << rep.eval_count << "\n";
    }

    {
        const auto gt_curves = motion_curves(x_gt, cfg.geometry.n_views);
        const auto est_curves = motion_curves(x_est, cfg.geometry.n_views);
        std::ofstream csv(out / artifact::motion_curves_csv);
        csv << "view,tx_gt,ty_gt,tz_gt,rx_gt,ry_gt,rz_gt,tx_est,ty_est,tz_est,rx_est,ry_est,rz_est\n";
        auto num = [](double v) { return nlohmann::json(v).dump(); };
        for (int v = 0; v < cfg.geometry.n_views; ++v) {
            csv << v;
            for (double x : gt_curves[size_t(v)].as_array()) csv << "," << num(x);
            for (double x : est_curves[size_t(v)].as_array()) csv << "," << num(x);
            csv << "\n";
        }
    }
    return rep;
}

/// All four stages in sequence on one output directory.
inline ExperimentReport run_all(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    run_simulate(cfg, out);
    run_estimate(cfg, out);
    run_reconstruct(cfg, out);
    return run_evaluate(cfg, out);
}

} // namespace cbmoco
