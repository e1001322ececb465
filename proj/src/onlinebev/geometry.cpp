#include "onlinebev/geometry.hpp"

#include <cmath>
#include <numbers>

#include "onlinebev/error.hpp"

namespace obev {

double wrap_angle(double a)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a <= -std::numbers::pi) a += two_pi;
    if (a > std::numbers::pi) a -= two_pi;
    return a;
}

std::pair<double, double> EgoPose::apply(double px, double py) const
{
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    return {c * px - s * py + x, s * px + c * py + y};
}

EgoPose pose_compose(const EgoPose& a, const EgoPose& b)
{
    const auto [x, y] = a.apply(b.x, b.y);
    return EgoPose::make(x, y, a.yaw + b.yaw);
}

EgoPose pose_inverse(const EgoPose& a)
{
    const double c = std::cos(a.yaw);
    const double s = std::sin(a.yaw);
    return EgoPose::make(-(c * a.x + s * a.y), s * a.x - c * a.y, -a.yaw);
}

GridSpec GridSpec::centered(std::int64_t rows, std::int64_t cols, double cell_size)
{
    GridSpec g;
    g.rows = rows;
    g.cols = cols;
    g.cell_size = cell_size;
    g.origin_x = -0.5 * static_cast<double>(rows - 1) * cell_size;
    g.origin_y = -0.5 * static_cast<double>(cols - 1) * cell_size;
    return g;
}

void GridSpec::validate() const
{
    if (rows < 2 || cols < 2) throw ConfigError("grid needs at least 2x2 cells");
    if (!(cell_size > 0)) throw ConfigError("grid cell_size must be positive");
}

std::pair<double, double> GridSpec::cell_to_ego(double row, double col) const
{
    return {origin_x + row * cell_size, origin_y + col * cell_size};
}

std::pair<double, double> GridSpec::ego_to_cell(double x, double y) const
{
    return {(x - origin_x) / cell_size, (y - origin_y) / cell_size};
}

bool GridSpec::contains_cell(double row, double col) const
{
    return row >= -0.5 && col >= -0.5 && row < static_cast<double>(rows) - 0.5 && col < static_cast<double>(cols) - 0.5;
}

std::pair<double, double> CellAffine::apply(double row, double col) const
{
    return {m[0] * row + m[1] * col + m[2], m[3] * row + m[4] * col + m[5]};
}

CellAffine CellAffine::after(const CellAffine& o) const
{
    CellAffine r;
    r.m[0] = m[0] * o.m[0] + m[1] * o.m[3];
    r.m[1] = m[0] * o.m[1] + m[1] * o.m[4];
    r.m[2] = m[0] * o.m[2] + m[1] * o.m[5] + m[2];
    r.m[3] = m[3] * o.m[0] + m[4] * o.m[3];
    r.m[4] = m[3] * o.m[1] + m[4] * o.m[4];
    r.m[5] = m[3] * o.m[2] + m[4] * o.m[5] + m[5];
    return r;
}

CellAffine relative_transform(const EgoPose& prev, const EgoPose& cur, const GridSpec& g)
{
    // prev_from_cur, then conjugate by the cell <-> ego-frame scaling.
    const EgoPose rel = pose_compose(pose_inverse(prev), cur);
    const double c = std::cos(rel.yaw);
    const double s = std::sin(rel.yaw);
    // ego point of cell (r, k): e = o + cs * (r, k)
    // prev ego point: R e + t; prev cell: (R e + t - o) / cs
    const double ox = g.origin_x;
    const double oy = g.origin_y;
    const double cs = g.cell_size;
    CellAffine a;
    a.m[0] = c;
    a.m[1] = -s;
    a.m[3] = s;
    a.m[4] = c;
    a.m[2] = (c * ox - s * oy + rel.x - ox) / cs;
    a.m[5] = (s * ox + c * oy + rel.y - oy) / cs;
    return a;
}

Tensor ego_compensate(const Tensor& feat, const CellAffine& transform)
{
    return affine_gather(feat, transform.m);
}

Var ego_compensate(Var feat, const CellAffine& transform)
{
    return ops::affine_gather(feat, transform.m);
}

}  // namespace obev
