#include <catch2/catch_amalgamated.hpp>

#include "cbmoco/backproject.hpp"
#include "cbmoco/geometry.hpp"
#include "cbmoco/parallel.hpp"
#include "testing_util.hpp"

using namespace cbmoco;
using Catch::Approx;

namespace {

ScanGeometry fd_geometry(int views = 4) {
    return ScanGeometry{785.0, 1200.0, views, 2.0 * kPi, 32, 32, 2.0};
}

/// Test-side scalar evaluation of the backprojection sum for one voxel: plain
/// matrix multiply, homogeneous divide and bilinear lookup, independent of the kernel.
template <class T>
double scalar_backproject(const ProjectionStack<T>& stack,
                          const std::vector<ProjectionMatrix>& mats, const Vec3& p) {
    double acc = 0;
    for (int j = 0; j < stack.n_views; ++j) {
        const auto& m = mats[size_t(j)];
        const double U = m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2) * p.z + m(0, 3);
        const double V = m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2) * p.z + m(1, 3);
        const double W = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2) * p.z + m(2, 3);
        if (W <= 1e-9) continue;
        const double u = U / W, v = V / W;
        if (u < 0 || u > stack.cols - 1 || v < 0 || v > stack.rows - 1) continue;
        const int ui = std::min(int(u), stack.cols - 2), vi = std::min(int(v), stack.rows - 2);
        const double fu = u - ui, fv = v - vi;
        acc += (1 - fv) * ((1 - fu) * stack.at(j, vi, ui) + fu * stack.at(j, vi, ui + 1)) +
               fv * ((1 - fu) * stack.at(j, vi + 1, ui) + fu * stack.at(j, vi + 1, ui + 1));
    }
    return acc;
}

/// Central-difference loss derivative wrt one matrix entry; the loss is the
/// upstream-weighted backprojection. eps_rel scales each row's magnitude.
template <class T>
double fd_entry(const ProjectionStack<T>& stack, std::vector<ProjectionMatrix> mats,
                const GridSpec& grid, const Volume<double>& up, int j, int r, int c,
                double eps_rel) {
    double row_scale = 0;
    for (int cc = 0; cc < 4; ++cc) row_scale = std::max(row_scale, std::abs(mats[size_t(j)](r, cc)));
    const double eps = eps_rel * row_scale;
    auto loss = [&](const std::vector<ProjectionMatrix>& m) {
        const auto vol = backproject(stack, m, grid);
        double s = 0;
        for (size_t i = 0; i < vol.data.size(); ++i) s += double(vol.data[i]) * up.data[i];
        return s;
    };
    mats[size_t(j)](r, c) += eps;
    const double fp = loss(mats);
    mats[size_t(j)](r, c) -= 2 * eps;
    const double fm = loss(mats);
    return (fp - fm) / (2 * eps);
}

} // namespace

TEST_CASE("backproject sums constant views to N_p * c", "[backproject]") {
    const auto geom = fd_geometry(5);
    const auto mats = build_circular_trajectory(geom);
    ProjectionStack<double> stack(5, 32, 32, 2.0, StackState::ramp_filtered);
    for (auto& v : stack.data) v = 1.75;
    const GridSpec grid = GridSpec::centered({8, 8, 8}, {4, 4, 4});
    const auto vol = backproject(stack, mats, grid);
    for (double v : vol.data) CHECK(v == Approx(5 * 1.75).epsilon(1e-12));
}

TEST_CASE("backproject of a u-ramp image returns the projected u coordinate", "[backproject]") {
    const auto geom = fd_geometry(2);
    auto mats = build_circular_trajectory(geom);
    mats.resize(1);
    ProjectionStack<double> stack(1, 32, 32, 2.0, StackState::ramp_filtered);
    for (int v = 0; v < 32; ++v)
        for (int u = 0; u < 32; ++u) stack.at(0, v, u) = double(u);
    const GridSpec grid = GridSpec::centered({6, 6, 6}, {5, 5, 5});
    const auto vol = backproject(stack, mats, grid);
    for (int k = 0; k < 6; ++k)
        for (int j = 0; j < 6; ++j)
            for (int i = 0; i < 6; ++i) {
                const auto pp = project_point(mats[0], grid.voxel_center(i, j, k));
                REQUIRE(pp.u >= 0);
                REQUIRE(pp.u <= 31);
                CHECK(vol.at(i, j, k) == Approx(pp.u).epsilon(1e-12));
            }
}

TEST_CASE("backproject matches an independent scalar evaluation", "[backproject]") {
    const auto geom = ScanGeometry{785.0, 1200.0, 2, kPi / 2, 8, 8, 16.0};
    const auto mats = build_circular_trajectory(geom);
    auto stack = testing::smooth_random_stack(2, 8, 8, 16.0, 1.0, 5);
    const GridSpec grid{{1, 1, 1}, {1, 1, 1}, {7.0, -3.0, 5.0}};
    const auto vol = backproject(stack, mats, grid);
    CHECK(vol.at(0, 0, 0) == Approx(scalar_backproject(stack, mats, Vec3{7.0, -3.0, 5.0})).epsilon(1e-13));
}

TEST_CASE("backproject is linear in the stack data", "[backproject]") {
    const auto geom = fd_geometry(3);
    const auto mats = build_circular_trajectory(geom);
    auto a = testing::smooth_random_stack(3, 32, 32, 2.0, 1.5, 11);
    auto b = testing::smooth_random_stack(3, 32, 32, 2.0, 1.5, 12);
    auto sum = a;
    for (size_t i = 0; i < sum.data.size(); ++i) sum.data[i] = a.data[i] + 2.0 * b.data[i];
    const GridSpec grid = GridSpec::centered({10, 10, 10}, {3, 3, 3});
    const auto va = backproject(a, mats, grid);
    const auto vb = backproject(b, mats, grid);
    const auto vs = backproject(sum, mats, grid);
    for (size_t i = 0; i < vs.data.size(); ++i)
        CHECK(vs.data[i] == Approx(va.data[i] + 2.0 * vb.data[i]).margin(1e-10));
}

TEST_CASE("a broken trajectory (voxels behind the source plane) is detected", "[backproject]") {
    const auto geom = fd_geometry(4);
    auto mats = build_circular_trajectory(geom);
    for (auto& m : mats)
        for (int c = 0; c < 4; ++c) m(2, c) = -m(2, c);
    ProjectionStack<double> stack(4, 32, 32, 2.0, StackState::ramp_filtered);
    const GridSpec grid = GridSpec::centered({8, 8, 8}, {4, 4, 4});
    CHECK_THROWS_AS(backproject(stack, mats, grid), GeometryError);
}

TEST_CASE("detector gradients: central differences with one-sided edges", "[backproject]") {
    SECTION("constant image has zero gradients") {
        ProjectionStack<double> s(2, 6, 7, 1.0, StackState::ramp_filtered);
        for (auto& v : s.data) v = 4.2;
        const auto g = detector_gradients(s);
        for (double v : g.g_u) CHECK(v == 0.0);
        for (double v : g.g_v) CHECK(v == 0.0);
    }
    SECTION("linear image 3u + 2v gives exact interior gradients") {
        ProjectionStack<double> s(1, 8, 9, 1.0, StackState::ramp_filtered);
        for (int v = 0; v < 8; ++v)
            for (int u = 0; u < 9; ++u) s.at(0, v, u) = 3.0 * u + 2.0 * v;
        const auto g = detector_gradients(s);
        for (int v = 0; v < 8; ++v)
            for (int u = 0; u < 9; ++u) {
                CHECK(g.g_u[size_t(g.index(0, v, u))] == Approx(3.0));
                CHECK(g.g_v[size_t(g.index(0, v, u))] == Approx(2.0));
            }
    }
    SECTION("quadratic u^2 at u = 5 gives the exact derivative 10") {
        ProjectionStack<double> s(1, 3, 12, 1.0, StackState::ramp_filtered);
        for (int v = 0; v < 3; ++v)
            for (int u = 0; u < 12; ++u) s.at(0, v, u) = double(u) * double(u);
        const auto g = detector_gradients(s);
        CHECK(g.g_u[size_t(g.index(0, 1, 5))] == Approx(10.0)); // ((6)^2 - (4)^2) / 2
        // One-sided edges are first order.
        CHECK(g.g_u[size_t(g.index(0, 1, 0))] == Approx(1.0));
        CHECK(g.g_u[size_t(g.index(0, 1, 11))] == Approx(21.0));
    }
    SECTION("a raw stack is rejected") {
        ProjectionStack<double> s(1, 4, 4, 1.0, StackState::raw);
        CHECK_THROWS_AS(detector_gradients(s), StateError);
    }
}

TEST_CASE("geometry VJP: zeros, linearity", "[backproject]") {
    const auto geom = fd_geometry(3);
    const auto mats = build_circular_trajectory(geom);
    const GridSpec grid = GridSpec::centered({8, 8, 8}, {4, 4, 4});
    const auto up = testing::random_volume(grid, 77, -1, 1);

    SECTION("constant projection images give an all-zero gradient in both modes") {
        ProjectionStack<double> s(3, 32, 32, 2.0, StackState::ramp_filtered);
        for (auto& v : s.data) v = 2.5;
        for (auto mode : {GradientMode::exact_bilinear, GradientMode::central_difference})
            for (const auto& g : backproject_geometry_vjp(s, mats, grid, up, mode))
                for (double v : g.m) CHECK(v == 0.0);
    }
    SECTION("doubling the upstream doubles every entry exactly") {
        const auto s = testing::smooth_random_stack(3, 32, 32, 2.0, 2.0, 21);
        Volume<double> up2 = up;
        for (auto& v : up2.data) v *= 2.0;
        const auto g1 = backproject_geometry_vjp(s, mats, grid, up);
        const auto g2 = backproject_geometry_vjp(s, mats, grid, up2);
        for (size_t j = 0; j < g1.size(); ++j)
            for (size_t e = 0; e < 12; ++e) CHECK(g2[j].m[e] == 2.0 * g1[j].m[e]);
    }
    SECTION("upstream shape mismatch is rejected") {
        const auto s = testing::smooth_random_stack(3, 32, 32, 2.0, 2.0, 21);
        const Volume<double> bad(GridSpec::centered({6, 6, 6}, {4, 4, 4}));
        CHECK_THROWS_AS(backproject_geometry_vjp(s, mats, grid, bad), ArgumentError);
    }
}

TEST_CASE("geometry VJP matches finite differences over all matrix entries", "[backproject]") {
    const auto geom = fd_geometry(4);
    const auto mats = build_circular_trajectory(geom);
    // Spacing keeps every voxel's projection strictly inside the detector.
    const GridSpec grid = GridSpec::centered({16, 16, 16}, {1.5, 1.5, 1.5});
    const auto stack = testing::smooth_random_stack(4, 32, 32, 2.0, 2.0, 123);
    const auto up = testing::random_volume(grid, 321, -1, 1);

    const auto vjp = backproject_geometry_vjp(stack, mats, grid, up);
    double worst = 0;
    for (int j = 0; j < 4; ++j)
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c) {
                const double fd = fd_entry(stack, mats, grid, up, j, r, c, 1e-7);
                const double an = vjp[size_t(j)](r, c);
                worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-30}));
            }
    INFO("worst relative FD error " << worst);
    CHECK(worst <= 1e-5);
}

TEST_CASE("zero extension: removing a voxel from the detector removes its term", "[backproject]") {
    // One quarter-turn view, a 3-voxel grid along x; shrinking the detector pushes
    // the first voxel out.
    const auto geom = ScanGeometry{785.0, 1200.0, 4, 2.0 * kPi, 24, 48, 2.0};
    auto all_mats = build_circular_trajectory(geom);
    std::vector<ProjectionMatrix> mats{all_mats[1]};
    auto wide = testing::smooth_random_stack(1, 24, 48, 2.0, 1.5, 9);

    const GridSpec grid{{3, 1, 1}, {30, 1, 1}, {-30.0, 0.0, 0.0}};
    std::array<double, 3> u_pos{};
    for (int i = 0; i < 3; ++i)
        u_pos[size_t(i)] = project_point(mats[0], grid.voxel_center(i, 0, 0)).u;
    REQUIRE(u_pos[0] > 30.0); // outside the narrow detector and its margin
    REQUIRE(u_pos[1] < 28.0);

    ProjectionStack<double> narrow(1, 24, 29, 2.0, StackState::ramp_filtered);
    for (int v = 0; v < 24; ++v)
        for (int u = 0; u < 29; ++u) narrow.at(0, v, u) = wide.at(0, v, u);

    const auto vol_wide = backproject(wide, mats, grid);
    const auto vol_narrow = backproject(narrow, mats, grid);
    CHECK(vol_narrow.at(1, 0, 0) == Approx(vol_wide.at(1, 0, 0)).epsilon(1e-13));
    CHECK(vol_narrow.at(2, 0, 0) == Approx(vol_wide.at(2, 0, 0)).epsilon(1e-13));
    CHECK(vol_narrow.at(0, 0, 0) == 0.0);
    CHECK(vol_wide.at(0, 0, 0) != 0.0);

    Volume<double> up(grid);
    up.data = {0.7, -1.3, 0.9};
    const auto g_wide = backproject_geometry_vjp(wide, mats, grid, up);
    const auto g_narrow = backproject_geometry_vjp(narrow, mats, grid, up);

    // The narrow-detector VJP equals the wide one minus exactly the excluded voxel's term.
    const GridSpec solo{{1, 1, 1}, {1, 1, 1}, grid.voxel_center(0, 0, 0)};
    Volume<double> up_solo(solo);
    up_solo.data = {up.data[0]};
    const auto g_solo = backproject_geometry_vjp(wide, mats, solo, up_solo);
    for (size_t e = 0; e < 12; ++e)
        CHECK(g_narrow[0].m[e] == Approx(g_wide[0].m[e] - g_solo[0].m[e]).margin(1e-12));
}

TEST_CASE("backproject and VJP are bitwise deterministic across thread counts", "[backproject]") {
    const auto geom = fd_geometry(4);
    const auto mats = build_circular_trajectory(geom);
    const GridSpec grid = GridSpec::centered({16, 16, 16}, {2, 2, 2});
    const auto stack = testing::smooth_random_stack(4, 32, 32, 2.0, 2.0, 42);
    const auto up = testing::random_volume(grid, 43, -1, 1);

    set_num_threads(1);
    const auto v1 = backproject(stack, mats, grid);
    const auto g1 = backproject_geometry_vjp(stack, mats, grid, up);
    set_num_threads(3);
    const auto v3 = backproject(stack, mats, grid);
    const auto g3 = backproject_geometry_vjp(stack, mats, grid, up);
    set_num_threads(0);

    for (size_t i = 0; i < v1.data.size(); ++i) REQUIRE(v1.data[i] == v3.data[i]);
    for (size_t j = 0; j < g1.size(); ++j)
        for (size_t e = 0; e < 12; ++e) REQUIRE(g1[j].m[e] == g3[j].m[e]);
}

TEST_CASE("central-difference mode gives a consistent descent direction", "[backproject]") {
    // The smoothed surrogate is not the exact derivative of the bilinear kernel, but
    // on smooth stacks it must point the same way.
    const auto geom = fd_geometry(4);
    const auto mats = build_circular_trajectory(geom);
    const GridSpec grid = GridSpec::centered({16, 16, 16}, {2, 2, 2});
    const auto stack = testing::smooth_random_stack(4, 32, 32, 2.0, 2.0, 77);
    const auto up = testing::random_volume(grid, 78, -1, 1);

    const auto ge = backproject_geometry_vjp(stack, mats, grid, up, GradientMode::exact_bilinear);
    const auto gc = backproject_geometry_vjp(stack, mats, grid, up, GradientMode::central_difference);
    double dot = 0, ne = 0, nc = 0;
    for (size_t j = 0; j < ge.size(); ++j)
        for (size_t e = 0; e < 12; ++e) {
            dot += ge[j].m[e] * gc[j].m[e];
            ne += ge[j].m[e] * ge[j].m[e];
            nc += gc[j].m[e] * gc[j].m[e];
        }
    const double cosine = dot / std::sqrt(ne * nc);
    INFO("cosine between exact and central-difference gradients: " << cosine);
    CHECK(cosine > 0.5);
}
