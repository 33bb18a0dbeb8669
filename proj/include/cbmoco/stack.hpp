#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbmoco/errors.hpp"

namespace cbmoco {

/// Processing stage of a projection stack; transitions only move forward.
enum class StackState { raw, cosine_weighted, ramp_filtered };

inline const char* to_string(StackState s) {
    switch (s) {
        case StackState::raw: return "raw";
        case StackState::cosine_weighted: return "cosine_weighted";
        case StackState::ramp_filtered: return "ramp_filtered";
    }
    return "?";
}

inline StackState stack_state_from_string(const std::string& s) {
    if (s == "raw") return StackState::raw;
    if (s == "cosine_weighted") return StackState::cosine_weighted;
    if (s == "ramp_filtered") return StackState::ramp_filtered;
    throw FormatError("unknown stack state: " + s);
}

/// N_p detector images, stored view-major then row-major (u = column index fastest).
template <class T>
struct ProjectionStack {
    int n_views = 0;
    int rows = 0;
    int cols = 0;
    double pixel_spacing_mm = 1.0;
    StackState state = StackState::raw;
    std::vector<T> data;

    ProjectionStack() = default;
    ProjectionStack(int views, int r, int c, double pixel_mm, StackState st = StackState::raw)
        : n_views(views), rows(r), cols(c), pixel_spacing_mm(pixel_mm), state(st) {
        if (views < 1 || r < 1 || c < 1)
            throw ArgumentError("ProjectionStack: all dims must be >= 1");
        if (!(pixel_mm > 0)) throw ArgumentError("ProjectionStack: pixel spacing must be > 0");
        data.assign(size_t(views) * size_t(r) * size_t(c), T(0));
    }

    std::int64_t index(int view, int v, int u) const {
        return (std::int64_t(view) * rows + v) * cols + u;
    }

    T& at(int view, int v, int u) { return data[size_t(index(view, v, u))]; }
    T at(int view, int v, int u) const { return data[size_t(index(view, v, u))]; }

    const T* view_ptr(int view) const { return data.data() + size_t(view) * size_t(rows) * size_t(cols); }
    T* view_ptr(int view) { return data.data() + size_t(view) * size_t(rows) * size_t(cols); }

    void require_state(StackState expected, const char* op) const {
        if (state != expected)
            throw StateError(std::string(op) + ": stack is '" + to_string(state) +
                             "', expected '" + to_string(expected) + "'");
    }
};

/// Detector-axis derivatives of a filtered stack (same shape), pixel units.
template <class T>
struct GradientImages {
    int n_views = 0;
    int rows = 0;
    int cols = 0;
    std::vector<T> g_u;
    std::vector<T> g_v;

    std::int64_t index(int view, int v, int u) const {
        return (std::int64_t(view) * rows + v) * cols + u;
    }
    const T* gu_view(int view) const { return g_u.data() + size_t(view) * size_t(rows) * size_t(cols); }
    const T* gv_view(int view) const { return g_v.data() + size_t(view) * size_t(rows) * size_t(cols); }
};

} // namespace cbmoco
