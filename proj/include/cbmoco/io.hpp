#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbmoco/geometry.hpp"
#include "cbmoco/motion.hpp"
#include "cbmoco/stack.hpp"
#include "cbmoco/volume.hpp"

namespace cbmoco {

namespace io_detail {

inline nlohmann::json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("invalid JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

inline void save_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

template <class T>
T field(const nlohmann::json& j, const std::string& key, const std::string& ctx) {
    if (!j.contains(key)) throw FormatError(ctx + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw FormatError(ctx + ": field '" + key + "' has the wrong type");
    }
}

inline void write_floats(const std::filesystem::path& path, const std::vector<float>& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()),
              std::streamsize(data.size() * sizeof(float)));
}

inline std::vector<float> read_floats(const std::filesystem::path& path, size_t expected,
                                      const std::string& ctx) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto bytes = in.tellg();
    if (size_t(bytes) != expected * sizeof(float))
        throw FormatError(ctx + ": raw size " + std::to_string(bytes) +
                          " bytes disagrees with sidecar dims (" +
                          std::to_string(expected * sizeof(float)) + " expected)");
    in.seekg(0);
    std::vector<float> data(expected);
    in.read(reinterpret_cast<char*>(data.data()), std::streamsize(expected * sizeof(float)));
    return data;
}

} // namespace io_detail

/// Volume files: <base>.raw (little-endian float32, x fastest) + <base>.json sidecar.
template <class T>
void write_volume(const std::filesystem::path& base, const Volume<T>& vol) {
    std::vector<float> buf(vol.data.begin(), vol.data.end());
    io_detail::write_floats(base.string() + ".raw", buf);
    nlohmann::json j{
        {"type", "volume"},
        {"dims", vol.grid.dims},
        {"spacing_mm", {vol.grid.spacing_mm.x, vol.grid.spacing_mm.y, vol.grid.spacing_mm.z}},
        {"origin_mm", {vol.grid.origin_mm.x, vol.grid.origin_mm.y, vol.grid.origin_mm.z}},
        {"dtype", "float32"},
        {"byte_order", "little"},
    };
    io_detail::save_json(base.string() + ".json", j);
}

template <class T = float>
Volume<T> read_volume(const std::filesystem::path& base) {
    const auto j = io_detail::load_json(base.string() + ".json");
    const auto ctx = base.string();
    const auto dims = io_detail::field<std::array<int, 3>>(j, "dims", ctx);
    const auto sp = io_detail::field<std::array<double, 3>>(j, "spacing_mm", ctx);
    const auto org = io_detail::field<std::array<double, 3>>(j, "origin_mm", ctx);
    GridSpec g;
    g.dims = dims;
    g.spacing_mm = {sp[0], sp[1], sp[2]};
    g.origin_mm = {org[0], org[1], org[2]};
    try {
        g.validate();
    } catch (const ArgumentError& e) {
        throw FormatError(ctx + ": " + e.what());
    }
    Volume<T> vol(g);
    const auto buf = io_detail::read_floats(base.string() + ".raw", size_t(g.n_voxels()), ctx);
    vol.data.assign(buf.begin(), buf.end());
    return vol;
}

/// Projection stacks use the same raw + sidecar scheme.
template <class T>
void write_stack(const std::filesystem::path& base, const ProjectionStack<T>& stack) {
    std::vector<float> buf(stack.data.begin(), stack.data.end());
    io_detail::write_floats(base.string() + ".raw", buf);
    nlohmann::json j{
        {"type", "projection_stack"},
        {"n_views", stack.n_views},
        {"rows", stack.rows},
        {"cols", stack.cols},
        {"pixel_spacing_mm", stack.pixel_spacing_mm},
        {"state", to_string(stack.state)},
        {"dtype", "float32"},
        {"byte_order", "little"},
    };
    io_detail::save_json(base.string() + ".json", j);
}

template <class T = float>
ProjectionStack<T> read_stack(const std::filesystem::path& base) {
    const auto j = io_detail::load_json(base.string() + ".json");
    const auto ctx = base.string();
    const int n_views = io_detail::field<int>(j, "n_views", ctx);
    const int rows = io_detail::field<int>(j, "rows", ctx);
    const int cols = io_detail::field<int>(j, "cols", ctx);
    const double pixel = io_detail::field<double>(j, "pixel_spacing_mm", ctx);
    const auto state = stack_state_from_string(io_detail::field<std::string>(j, "state", ctx));
    if (n_views < 1 || rows < 1 || cols < 1)
        throw FormatError(ctx + ": non-positive stack dims");
    ProjectionStack<T> stack(n_views, rows, cols, pixel, state);
    const auto buf = io_detail::read_floats(base.string() + ".raw",
                                            size_t(n_views) * size_t(rows) * size_t(cols), ctx);
    stack.data.assign(buf.begin(), buf.end());
    return stack;
}

inline constexpr const char* kMatrixConvention = "Rz*Ry*Rx about isocenter, pixel detector units";

/// Matrices serialize as an array of row-major 12-element arrays plus a header
/// recording units, detector shape and the rotation/detector convention.
inline void write_matrices(const std::filesystem::path& path,
                           const std::vector<ProjectionMatrix>& mats, int detector_rows,
                           int detector_cols) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : mats) arr.push_back(m.m);
    nlohmann::json j{
        {"header",
         {{"units", "pixel"},
          {"detector", {{"rows", detector_rows}, {"cols", detector_cols}}},
          {"convention", kMatrixConvention}}},
        {"matrices", arr},
    };
    io_detail::save_json(path, j);
}

inline std::vector<ProjectionMatrix> read_matrices(const std::filesystem::path& path) {
    const auto j = io_detail::load_json(path);
    const auto ctx = path.string();
    if (!j.contains("matrices") || !j.at("matrices").is_array())
        throw FormatError(ctx + ": missing field 'matrices'");
    std::vector<ProjectionMatrix> mats;
    for (const auto& entry : j.at("matrices")) {
        if (!entry.is_array() || entry.size() != 12)
            throw FormatError(ctx + ": each matrix must be a row-major 12-element array");
        ProjectionMatrix m;
        for (size_t i = 0; i < 12; ++i) m.m[i] = entry.at(i).get<double>();
        mats.push_back(m);
    }
    if (mats.empty()) throw FormatError(ctx + ": empty matrix list");
    return mats;
}

inline void write_motion(const std::filesystem::path& path, const SplineMotion& x) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : x.node_values) rows.push_back(row);
    nlohmann::json j{
        {"n_nodes", x.n_nodes()},
        {"node_times", x.node_times},
        {"node_values", rows},
        {"units", "mm/deg"},
    };
    io_detail::save_json(path, j);
}

inline SplineMotion read_motion(const std::filesystem::path& path) {
    const auto j = io_detail::load_json(path);
    const auto ctx = path.string();
    SplineMotion x;
    x.node_times = io_detail::field<std::vector<double>>(j, "node_times", ctx);
    const auto rows = io_detail::field<std::vector<std::vector<double>>>(j, "node_values", ctx);
    if (rows.size() != 6) throw FormatError(ctx + ": node_values must have 6 rows");
    const auto n_nodes = io_detail::field<size_t>(j, "n_nodes", ctx);
    for (size_t r = 0; r < 6; ++r) x.node_values[r] = rows[r];
    try {
        x.validate();
    } catch (const ArgumentError& e) {
        throw FormatError(ctx + ": " + e.what());
    }
    if (x.n_nodes() != n_nodes) throw FormatError(ctx + ": n_nodes disagrees with node_times");
    return x;
}

} // namespace cbmoco
