#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cbmoco/errors.hpp"
#include "cbmoco/math.hpp"

namespace cbmoco {

/// Placement of a voxel grid in world space. Voxel (i, j, k) is centered at
/// origin + spacing * (i, j, k); data is stored x-fastest.
struct GridSpec {
    std::array<int, 3> dims{1, 1, 1};
    Vec3 spacing_mm{1, 1, 1};
    Vec3 origin_mm{0, 0, 0};

    void validate() const {
        for (int d : dims)
            if (d < 1) throw ArgumentError("GridSpec: dims must be >= 1");
        if (!(spacing_mm.x > 0 && spacing_mm.y > 0 && spacing_mm.z > 0))
            throw ArgumentError("GridSpec: spacing must be positive");
    }

    std::int64_t n_voxels() const {
        return std::int64_t(dims[0]) * dims[1] * dims[2];
    }

    Vec3 voxel_center(int i, int j, int k) const {
        return {origin_mm.x + spacing_mm.x * i,
                origin_mm.y + spacing_mm.y * j,
                origin_mm.z + spacing_mm.z * k};
    }

    Vec3 center() const {
        return {origin_mm.x + spacing_mm.x * 0.5 * (dims[0] - 1),
                origin_mm.y + spacing_mm.y * 0.5 * (dims[1] - 1),
                origin_mm.z + spacing_mm.z * 0.5 * (dims[2] - 1)};
    }

    /// Grid with the given shape centered on the isocenter.
    static GridSpec centered(std::array<int, 3> dims, Vec3 spacing) {
        GridSpec g;
        g.dims = dims;
        g.spacing_mm = spacing;
        g.origin_mm = {-0.5 * spacing.x * (dims[0] - 1),
                       -0.5 * spacing.y * (dims[1] - 1),
                       -0.5 * spacing.z * (dims[2] - 1)};
        g.validate();
        return g;
    }

    bool operator==(const GridSpec& o) const {
        return dims == o.dims && spacing_mm.x == o.spacing_mm.x &&
               spacing_mm.y == o.spacing_mm.y && spacing_mm.z == o.spacing_mm.z &&
               origin_mm.x == o.origin_mm.x && origin_mm.y == o.origin_mm.y &&
               origin_mm.z == o.origin_mm.z;
    }
};

/// 3D scalar field on a GridSpec.
template <class T>
struct Volume {
    GridSpec grid;
    std::vector<T> data;

    Volume() = default;
    explicit Volume(const GridSpec& g, T fill = T(0)) : grid(g) {
        grid.validate();
        data.assign(size_t(grid.n_voxels()), fill);
    }

    std::int64_t index(int i, int j, int k) const {
        return std::int64_t(i) + std::int64_t(grid.dims[0]) * (std::int64_t(j) + std::int64_t(grid.dims[1]) * k);
    }

    T& at(int i, int j, int k) { return data[size_t(index(i, j, k))]; }
    T at(int i, int j, int k) const { return data[size_t(index(i, j, k))]; }

    template <class U>
    Volume<U> cast() const {
        Volume<U> out;
        out.grid = grid;
        out.data.assign(data.begin(), data.end());
        return out;
    }
};

using VolumeF = Volume<float>;
using VolumeD = Volume<double>;

} // namespace cbmoco
