#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "cbmoco/experiment.hpp"
#include "cbmoco/io.hpp"
#include "testing_util.hpp"

using namespace cbmoco;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("cbmoco_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Small, fast experiment for harness tests.
ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.phantom_kind = "spheres";
    cfg.phantom_dims = {16, 16, 16};
    cfg.phantom_spacing_mm = {8, 8, 8};
    cfg.geometry = ScanGeometry{785.0, 1200.0, 24, 2.0 * kPi, 40, 36, 8.0};
    cfg.amplitude_t_mm = 2.0;
    cfg.amplitude_r_deg = 2.0;
    cfg.sim_n_nodes = 4;
    cfg.seed = 7;
    cfg.metric = "oracle_gt";
    cfg.est_n_nodes = 4;
    cfg.est_dims = {12, 12, 12};
    cfg.est_spacing_mm = {10, 10, 10};
    cfg.optimizer = OptimConfig{60, 0.02, 0.97, 1.0, 1.0};
    cfg.final_dims = {16, 16, 16};
    cfg.final_spacing_mm = {8, 8, 8};
    return cfg;
}

} // namespace

TEST_CASE("volume files round-trip bitwise", "[io]") {
    TempDir dir("vol");
    Volume<float> vol(GridSpec::centered({8, 8, 8}, {2, 2.5, 3}));
    testing::Rng rng(1);
    for (auto& v : vol.data) v = float(rng.uniform(-10, 10));
    write_volume(dir.path / "v", vol);
    const auto back = read_volume<float>(dir.path / "v");
    REQUIRE(back.grid.dims == vol.grid.dims);
    CHECK(back.grid.spacing_mm.y == 2.5);
    for (size_t i = 0; i < vol.data.size(); ++i) REQUIRE(back.data[i] == vol.data[i]);
}

TEST_CASE("stack files round-trip and validate shape", "[io]") {
    TempDir dir("stack");
    ProjectionStack<float> s(3, 5, 7, 1.25, StackState::cosine_weighted);
    testing::Rng rng(2);
    for (auto& v : s.data) v = float(rng.uniform(0, 4));
    write_stack(dir.path / "s", s);
    const auto back = read_stack<float>(dir.path / "s");
    CHECK(back.n_views == 3);
    CHECK(back.state == StackState::cosine_weighted);
    for (size_t i = 0; i < s.data.size(); ++i) REQUIRE(back.data[i] == s.data[i]);

    SECTION("a raw file whose size disagrees with the sidecar is a format error") {
        std::ofstream(dir.path / "s.raw", std::ios::binary) << "short";
        CHECK_THROWS_AS(read_stack<float>(dir.path / "s"), FormatError);
    }
}

TEST_CASE("matrix JSON carries the convention header and validates rows", "[io]") {
    TempDir dir("mats");
    ScanGeometry geom{785, 1200, 6, 2 * kPi, 32, 24, 2.0};
    const auto mats = build_circular_trajectory(geom);
    write_matrices(dir.path / "m.json", mats, geom.detector_rows, geom.detector_cols);

    const auto j = io_detail::load_json(dir.path / "m.json");
    CHECK(j.at("header").at("convention").get<std::string>() == kMatrixConvention);
    CHECK(j.at("header").at("detector").at("rows").get<int>() == 32);

    const auto back = read_matrices(dir.path / "m.json");
    REQUIRE(back.size() == mats.size());
    for (size_t i = 0; i < mats.size(); ++i)
        for (size_t e = 0; e < 12; ++e) REQUIRE(back[i].m[e] == mats[i].m[e]);

    SECTION("11-entry rows are rejected") {
        auto bad = j;
        bad["matrices"][0].erase(11);
        io_detail::save_json(dir.path / "bad.json", bad);
        CHECK_THROWS_AS(read_matrices(dir.path / "bad.json"), FormatError);
    }
}

TEST_CASE("motion JSON round-trips", "[io]") {
    TempDir dir("motion");
    const auto x = sample_random_motion(3.0, 2.0, 5, 123, 40);
    write_motion(dir.path / "x.json", x);
    const auto back = read_motion(dir.path / "x.json");
    REQUIRE(back.n_nodes() == 5);
    for (size_t i = 0; i < 5; ++i) REQUIRE(back.node_times[i] == x.node_times[i]);
    for (int r = 0; r < 6; ++r)
        for (size_t k = 0; k < 5; ++k)
            REQUIRE(back.node_values[size_t(r)][k] == x.node_values[size_t(r)][k]);

    SECTION("wrong row count is a format error") {
        auto j = io_detail::load_json(dir.path / "x.json");
        j["node_values"].erase(5);
        io_detail::save_json(dir.path / "bad.json", j);
        CHECK_THROWS_AS(read_motion(dir.path / "bad.json"), FormatError);
    }
}

TEST_CASE("experiment config round-trips through JSON and validates", "[experiment]") {
    const auto cfg = tiny_config();
    const auto back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.phantom_kind == cfg.phantom_kind);
    CHECK(back.geometry.n_views == cfg.geometry.n_views);
    CHECK(back.geometry.angular_range_rad == Approx(cfg.geometry.angular_range_rad));
    CHECK(back.optimizer.step_size == cfg.optimizer.step_size);
    CHECK(back.seed == cfg.seed);
    CHECK_NOTHROW(back.validate());

    SECTION("estimation grid finer than the final grid is rejected") {
        auto bad = cfg;
        bad.est_spacing_mm = {1, 1, 1};
        CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
    SECTION("unknown metric is rejected") {
        auto bad = cfg;
        bad.metric = "entropy";
        CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
    SECTION("presets are valid") {
        CHECK_NOTHROW(ExperimentConfig::preset("desk").validate());
        CHECK_NOTHROW(ExperimentConfig::preset("paper").validate());
        CHECK_THROWS_AS(ExperimentConfig::preset("huge"), ConfigError);
    }
}

TEST_CASE("zero-amplitude run: nothing to estimate", "[experiment]") {
    TempDir dir("zero_amp");
    auto cfg = tiny_config();
    cfg.amplitude_t_mm = 0.0;
    cfg.amplitude_r_deg = 0.0;
    const auto rep = run_all(cfg, dir.path);
    CHECK(rep.initial.rpe_mm == 0.0);
    CHECK(rep.compensated.rpe_mm <= 1e-6);
}

TEST_CASE("oracle-gt metric isolates the plumbing: motion is recovered", "[experiment]") {
    TempDir dir("oracle");
    const auto cfg = tiny_config();
    const auto rep = run_all(cfg, dir.path);
    INFO("initial RPE " << rep.initial.rpe_mm << " mm, compensated " << rep.compensated.rpe_mm);
    CHECK(rep.initial.rpe_mm > 1.0);
    CHECK(rep.compensated.rpe_mm < 0.05 * rep.initial.rpe_mm);

    SECTION("expected artifacts exist") {
        for (const char* name :
             {artifact::config, artifact::matrices_calibrated, artifact::matrices_gt,
              artifact::motion_gt, artifact::motion_est, artifact::trace_csv,
              artifact::report_json, artifact::report_csv, artifact::motion_curves_csv})
            CHECK(fs::exists(dir.path / name));
        for (const char* base : {artifact::phantom, artifact::stack_measured,
                                 artifact::recon_reference, artifact::recon_initial,
                                 artifact::recon_compensated}) {
            CHECK(fs::exists(dir.path / (std::string(base) + ".raw")));
            CHECK(fs::exists(dir.path / (std::string(base) + ".json")));
        }
    }
}

TEST_CASE("a TV estimation run produces a valid report end to end", "[experiment]") {
    TempDir dir("tv_small");
    auto cfg = tiny_config();
    cfg.metric = "smoothed_tv";
    cfg.optimizer = OptimConfig{10, 1.0, 0.97, 1.0, 1.0};
    const auto rep = run_all(cfg, dir.path);
    CHECK(std::isfinite(rep.compensated.rpe_mm));
    CHECK(rep.initial.ssim < 1.0);
    CHECK(rep.eval_count == 11);
}

TEST_CASE("reruns with one seed are bitwise identical", "[experiment]") {
    TempDir a("det_a"), b("det_b");
    const auto cfg = tiny_config();
    run_all(cfg, a.path);
    run_all(cfg, b.path);
    const auto ra = slurp(a.path / artifact::report_json);
    REQUIRE(!ra.empty());
    CHECK(ra == slurp(b.path / artifact::report_json));
    CHECK(slurp(a.path / artifact::motion_curves_csv) == slurp(b.path / artifact::motion_curves_csv));
}
