#include <catch2/catch_amalgamated.hpp>

#include "cbmoco/backproject.hpp"
#include "cbmoco/metrics.hpp"
#include "cbmoco/motion.hpp"
#include "cbmoco/phantom.hpp"
#include "cbmoco/project.hpp"
#include "cbmoco/ramp.hpp"
#include "testing_util.hpp"

using namespace cbmoco;
using Catch::Approx;

TEST_CASE("phantom construction", "[projector]") {
    SECTION("uniform ball: 1 at the center voxel, 0 at the corner") {
        const auto vol = make_phantom<double>(PhantomKind::uniform, {17, 17, 17}, {4, 4, 4});
        CHECK(vol.at(8, 8, 8) == 1.0);
        CHECK(vol.at(0, 0, 0) == 0.0);
    }
    SECTION("shepp-logan outer shell spans (0.69, 0.92, 0.81) of the half-FOV") {
        const std::array<int, 3> dims{64, 64, 64};
        const Vec3 sp{3, 3, 3};
        const auto vol = make_phantom<double>(PhantomKind::shepp_logan_3d, dims, sp);
        const double half = 0.5 * 64 * 3;
        auto value_at = [&](Vec3 p) {
            const int i = int(std::lround((p.x - vol.grid.origin_mm.x) / sp.x));
            const int j = int(std::lround((p.y - vol.grid.origin_mm.y) / sp.y));
            const int k = int(std::lround((p.z - vol.grid.origin_mm.z) / sp.z));
            return vol.at(i, j, k);
        };
        // Just inside vs just outside each semi-axis of the outer ellipsoid.
        CHECK(value_at({0.66 * half, 0, 0}) > 0.0);
        CHECK(value_at({0.72 * half, 0, 0}) == 0.0);
        CHECK(value_at({0, 0.89 * half, 0}) > 0.0);
        CHECK(value_at({0, 0.95 * half, 0}) == 0.0);
        CHECK(value_at({0, 0, 0.78 * half}) > 0.0);
        CHECK(value_at({0, 0, 0.84 * half}) == 0.0);
    }
    SECTION("the minimum 8^3 size is accepted, smaller is not") {
        CHECK_NOTHROW(make_phantom<double>(PhantomKind::spheres, {8, 8, 8}, {2, 2, 2}));
        CHECK_THROWS_AS(make_phantom<double>(PhantomKind::spheres, {7, 8, 8}, {2, 2, 2}),
                        ArgumentError);
    }
    SECTION("unknown kind string is rejected") {
        CHECK_THROWS_AS(make_phantom<double>("gaussian_blob", {8, 8, 8}, {2, 2, 2}), ArgumentError);
    }
}

namespace {

ScanGeometry small_geometry(int views = 8) {
    // Odd detector shape puts the principal point on an exact pixel center.
    return ScanGeometry{785.0, 1200.0, views, 2.0 * kPi, 33, 33, 4.0};
}

} // namespace

TEST_CASE("forward projection basics", "[projector]") {
    const auto geom = small_geometry();
    const auto mats = build_circular_trajectory(geom);

    SECTION("zero volume gives a zero stack") {
        const Volume<double> zero(GridSpec::centered({16, 16, 16}, {4, 4, 4}));
        const auto stack = forward_project(zero, mats, geom);
        for (double v : stack.data) CHECK(v == 0.0);
        CHECK(stack.state == StackState::raw);
    }
    SECTION("projection is linear in the volume") {
        const auto vol = testing::random_volume(GridSpec::centered({12, 12, 12}, {5, 5, 5}), 8);
        Volume<double> scaled = vol;
        for (auto& v : scaled.data) v *= 2.5;
        const auto a = forward_project(vol, mats, geom);
        const auto b = forward_project(scaled, mats, geom);
        for (size_t i = 0; i < a.data.size(); ++i)
            CHECK(b.data[i] == Approx(2.5 * a.data[i]).margin(1e-9 * std::abs(a.data[i]) + 1e-12));
    }
    SECTION("central ray through a uniform ball integrates to the chord length") {
        const auto vol = make_phantom<double>(PhantomKind::uniform, {32, 32, 32}, {3, 3, 3});
        const double radius = 0.8 * 0.5 * 32 * 3;
        const auto stack = forward_project(vol, mats, geom);
        // The principal pixel's ray passes straight through the ball center.
        const double center = stack.at(0, 16, 16);
        CHECK(center == Approx(2.0 * radius).epsilon(0.02));
    }
}

TEST_CASE("cosine weighting", "[projector]") {
    ScanGeometry geom{5.0, 10.0, 6, 2.0 * kPi, 41, 41, 1.0};
    ProjectionStack<double> ones(geom.n_views, 41, 41, 1.0, StackState::raw);
    for (auto& v : ones.data) v = 1.0;
    const auto w = cosine_weight(ones, geom);

    SECTION("principal-point weight is one") { CHECK(w.at(0, 20, 20) == Approx(1.0)); }
    SECTION("a pixel offset of SDD in u weighs 1/sqrt(2)") {
        CHECK(w.at(0, 20, 30) == Approx(1.0 / std::sqrt(2.0)));
    }
    SECTION("weights decrease away from the principal point along each axis") {
        for (int u = 21; u < 41; ++u) CHECK(w.at(0, 20, u) < w.at(0, 20, u - 1));
        for (int v = 21; v < 41; ++v) CHECK(w.at(0, v, 20) < w.at(0, v - 1, 20));
    }
    SECTION("weighting twice is a state error") {
        CHECK_THROWS_AS(cosine_weight(w, geom), StateError);
    }
}

TEST_CASE("ramp filter", "[projector]") {
    SECTION("zero input stays zero") {
        ProjectionStack<double> z(3, 4, 64, 0.8, StackState::cosine_weighted);
        const auto f = ramp_filter(z);
        CHECK(f.state == StackState::ramp_filtered);
        for (double v : f.data) CHECK(v == 0.0);
    }

    SECTION("FFT path equals direct spatial convolution on a random row") {
        const int cols = 64;
        ProjectionStack<double> s(1, 1, cols, 0.7, StackState::cosine_weighted);
        testing::Rng rng(17);
        for (auto& v : s.data) v = rng.uniform(-1, 1);
        const auto f = ramp_filter(s);

        const double gain = kPi / double(s.n_views);
        double max_rel = 0;
        for (int n = 0; n < cols; ++n) {
            double direct = 0;
            for (int k = 0; k < cols; ++k) direct += s.at(0, 0, k) * ramp_kernel(n - k, 0.7);
            direct *= gain;
            max_rel = std::max(max_rel, std::abs(direct - f.at(0, 0, n)) /
                                            std::max(std::abs(direct), 1e-12));
        }
        CHECK(max_rel <= 1e-9);
    }

    SECTION("a constant row is strongly suppressed away from the row ends") {
        // The infinite kernel nulls DC exactly; truncation to the row support leaves a
        // windowing residual that decays like 1/distance-to-edge. Compare against the
        // filter's peak (impulse) response.
        const int cols = 128;
        const double c = 3.0, du = 1.0;
        ProjectionStack<double> s(1, 1, cols, du, StackState::cosine_weighted);
        for (auto& v : s.data) v = c;
        const auto f = ramp_filter(s);
        const double peak = (kPi / 1.0) * c * ramp_kernel(0, du);
        for (int n = 16; n < cols - 16; ++n) CHECK(std::abs(f.at(0, 0, n)) <= 0.02 * peak);
        // Interior residual shrinks toward the row center.
        CHECK(std::abs(f.at(0, 0, cols / 2)) < std::abs(f.at(0, 0, 16)));
    }

    SECTION("filtering a raw stack is a state error") {
        ProjectionStack<double> raw(1, 2, 16, 1.0, StackState::raw);
        CHECK_THROWS_AS(ramp_filter(raw), StateError);
    }
}

TEST_CASE("FDK loop closes: motion blurs the reconstruction", "[projector]") {
    ScanGeometry geom{785.0, 1200.0, 90, 2.0 * kPi, 96, 96, 4.0};
    const auto mats = build_circular_trajectory(geom);
    const auto phantom = make_phantom<double>(PhantomKind::shepp_logan_3d, {64, 64, 64}, {3, 3, 3});

    const auto filtered = ramp_filter(cosine_weight(forward_project(phantom, mats, geom), geom));
    const GridSpec grid = phantom.grid;
    const auto recon = backproject(filtered, mats, grid);

    const auto motion = sample_random_motion(5.0, 5.0, 6, 21, geom.n_views);
    const auto perturbed = motion_to_matrices(motion, mats);
    const auto recon_moved = backproject(filtered, perturbed, grid);

    // Least-squares intensity fit removes the FDK global scale before comparing.
    auto fit_to = [&](const Volume<double>& v, const Volume<double>& ref) {
        double sv = 0, svv = 0, sr = 0, svr = 0;
        const double n = double(v.data.size());
        for (size_t i = 0; i < v.data.size(); ++i) {
            sv += v.data[i];
            svv += v.data[i] * v.data[i];
            sr += ref.data[i];
            svr += v.data[i] * ref.data[i];
        }
        const double a = (n * svr - sv * sr) / std::max(n * svv - sv * sv, 1e-30);
        const double b = (sr - a * sv) / n;
        Volume<double> out = v;
        for (auto& x : out.data) x = a * x + b;
        return out;
    };
    const double ssim_clean = ssim_scalar(fit_to(recon, phantom), phantom);
    const double ssim_moved = ssim_scalar(fit_to(recon_moved, phantom), phantom);
    INFO("ssim clean " << ssim_clean << " vs moved " << ssim_moved);
    CHECK(ssim_clean > ssim_moved + 0.02);
    CHECK(ssim_clean > 0.5);
}
