#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "onlinebev/rng.hpp"
#include "onlinebev/tape.hpp"

namespace obev {

enum class Mode { train, infer };

// Bilinear interpolation taps for a continuous (row, col) location on an
// H x W grid. Corners outside the grid are dropped, which is zero padding.
// dr/dc hold the derivative of each tap weight w.r.t. row/col.
struct BilinearTaps {
    std::array<std::int64_t, 4> cell{};
    std::array<double, 4> w{};
    std::array<double, 4> dr{};
    std::array<double, 4> dc{};
    int count = 0;
};

inline BilinearTaps bilinear_taps(std::int64_t rows, std::int64_t cols, double r, double c)
{
    BilinearTaps t;
    const double rf = std::floor(r);
    const double cf = std::floor(c);
    if (!(rf > -2.0 && cf > -2.0 && rf < static_cast<double>(rows) && cf < static_cast<double>(cols))) return t;
    const auto r0 = static_cast<std::int64_t>(rf);
    const auto c0 = static_cast<std::int64_t>(cf);
    const double fr = r - rf;
    const double fc = c - cf;
    const std::int64_t rr[4] = {r0, r0, r0 + 1, r0 + 1};
    const std::int64_t cc[4] = {c0, c0 + 1, c0, c0 + 1};
    const double w[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
    const double dr[4] = {-(1 - fc), -fc, 1 - fc, fc};
    const double dc[4] = {-(1 - fr), 1 - fr, -fr, fr};
    for (int k = 0; k < 4; ++k) {
        if (rr[k] < 0 || rr[k] >= rows || cc[k] < 0 || cc[k] >= cols) continue;
        t.cell[t.count] = rr[k] * cols + cc[k];
        t.w[t.count] = w[k];
        t.dr[t.count] = dr[k];
        t.dc[t.count] = dc[k];
        ++t.count;
    }
    return t;
}

// Raw (non-differentiable) bilinear read of an [H, W, C] tensor.
void bilinear_read(const Tensor& map, double r, double c, double* out);

// Row-major 2x3 map (row, col) -> (m0*row + m1*col + m2, m3*row + m4*col + m5).
using Affine2x3 = std::array<double, 6>;

// Raw gather of an [H, W, C] tensor through an affine map of cell coordinates.
Tensor affine_gather(const Tensor& map, const Affine2x3& m);

namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var x);
Var sigmoid(Var x);
Var square(Var x);
Var sum(Var x);
Var mean(Var x);

// y = x W + b over the last axis. x: [..., Cin], W: [Cin, Cout], b: [Cout].
Var linear(Var x, Var weight, Var bias);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
// Over the last axis, max-subtracted.
Var softmax(Var x);
Var concat_channels(const std::vector<Var>& xs);
Var reshape(Var x, Shape shape);
// [H, W, C] -> [C]
Var mean_spatial(Var x);
// [H, W, C] * [C] broadcast over H, W.
Var scale_channels(Var x, Var s);
// Inverted dropout. Identity in infer mode or when rate == 0.
Var dropout(Var x, double rate, Mode mode, Rng* rng);

// map: [H, W, C], point: [2] as (row, col) in cell units. Returns [C].
Var bilinear_sample(Var map, Var point);
// Differentiable w.r.t. map only.
Var affine_gather(Var map, const Affine2x3& m);
// Deformable gather at reference points = cell centres.
//   value:   [H, W, heads * D]
//   offsets: [H, W, heads, K, 2] (row, col) in cell units
//   weights: [H, W, heads, K]
// out[p, h*D + d] = sum_k weights[p,h,k] * bilinear(value_h, p + offsets[p,h,k])[d]
Var deform_gather(Var value, Var offsets, Var weights);
// Zero-padded 3x3 cross-correlation. x: [H, W, Cin], kernel: [3, 3, Cin, Cout].
Var conv3x3(Var x, Var kernel, Var bias);

}  // namespace ops
}  // namespace obev
