#pragma once

#include <cstdint>
#include <utility>

#include "onlinebev/ops.hpp"
#include "onlinebev/tape.hpp"

namespace obev {

// Wraps to (-pi, pi].
double wrap_angle(double a);

// Planar rigid pose of the ego frame in world coordinates.
struct EgoPose {
    double x = 0.0;  // meters
    double y = 0.0;  // meters
    double yaw = 0.0;  // radians, (-pi, pi]

    static EgoPose make(double x, double y, double yaw) { return {x, y, wrap_angle(yaw)}; }
    // Maps a point expressed in this frame into the parent frame.
    std::pair<double, double> apply(double px, double py) const;
};

// a then b in a's frame: world_from_b = world_from_a * a_from_b.
EgoPose pose_compose(const EgoPose& a, const EgoPose& b);
EgoPose pose_inverse(const EgoPose& a);

// BEV grid layout. Row index runs along ego +x, column index along ego +y;
// origin is the ego-frame position of cell (0, 0)'s centre.
struct GridSpec {
    std::int64_t rows = 64;
    std::int64_t cols = 64;
    double cell_size = 0.5;
    double origin_x = 0.0;
    double origin_y = 0.0;

    // Ego at the grid centre.
    static GridSpec centered(std::int64_t rows, std::int64_t cols, double cell_size);
    void validate() const;

    std::pair<double, double> cell_to_ego(double row, double col) const;
    std::pair<double, double> ego_to_cell(double x, double y) const;
    bool contains_cell(double row, double col) const;
};

// (row, col) -> (m0*row + m1*col + m2, m3*row + m4*col + m5)
struct CellAffine {
    Affine2x3 m{1, 0, 0, 0, 1, 0};

    static CellAffine identity() { return {}; }
    std::pair<double, double> apply(double row, double col) const;
    // (*this)(other(p))
    CellAffine after(const CellAffine& other) const;
};

// Maps a cell of the current frame's grid to the cell of the previous frame's
// grid that observes the same world point.
CellAffine relative_transform(const EgoPose& prev, const EgoPose& cur, const GridSpec& g);

// Backward warp: out(p) = bilinear(feat, T(p)), zero outside the source grid.
Tensor ego_compensate(const Tensor& feat, const CellAffine& transform);
Var ego_compensate(Var feat, const CellAffine& transform);

}  // namespace obev
