#pragma once

// Brute-force reference implementations and small helpers shared by the unit
// tests and the acceptance suite. Everything here works on plain vectors and
// nested loops so it shares no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "onlinebev/params.hpp"
#include "onlinebev/rng.hpp"
#include "onlinebev/tensor.hpp"

namespace oracle {

using obev::Shape;
using obev::Tensor;

inline Tensor random(Shape shape, obev::Rng& rng, double lo = -1.0, double hi = 1.0)
{
    return obev::uniform_tensor(std::move(shape), rng, lo, hi);
}

inline double get3(const Tensor& t, std::int64_t r, std::int64_t c, std::int64_t ch)
{
    const std::int64_t cols = t.dim(1);
    const std::int64_t chans = t.dim(2);
    return t[static_cast<std::size_t>((r * cols + c) * chans + ch)];
}

// Value of an [H, W, C] map at integer cell (r, c), zero outside.
inline double cell_or_zero(const Tensor& map, std::int64_t r, std::int64_t c, std::int64_t ch)
{
    if (r < 0 || c < 0 || r >= map.dim(0) || c >= map.dim(1)) return 0.0;
    return get3(map, r, c, ch);
}

inline std::vector<double> bilinear(const Tensor& map, double r, double c)
{
    const double r0 = std::floor(r);
    const double c0 = std::floor(c);
    const double a = r - r0;
    const double b = c - c0;
    const auto ir = static_cast<std::int64_t>(r0);
    const auto ic = static_cast<std::int64_t>(c0);
    std::vector<double> out(static_cast<std::size_t>(map.dim(2)), 0.0);
    for (std::int64_t ch = 0; ch < map.dim(2); ++ch) {
        out[static_cast<std::size_t>(ch)] = (1 - a) * (1 - b) * cell_or_zero(map, ir, ic, ch) +
                                            (1 - a) * b * cell_or_zero(map, ir, ic + 1, ch) +
                                            a * (1 - b) * cell_or_zero(map, ir + 1, ic, ch) +
                                            a * b * cell_or_zero(map, ir + 1, ic + 1, ch);
    }
    return out;
}

// x [..., Cin] * W [Cin, Cout] + b
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b)
{
    const std::int64_t cin = w.dim(0);
    const std::int64_t cout = w.dim(1);
    const std::int64_t rows = static_cast<std::int64_t>(x.size()) / cin;
    Shape shape = x.shape();
    shape.back() = cout;
    Tensor y(shape);
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t o = 0; o < cout; ++o) {
            double s = b[static_cast<std::size_t>(o)];
            for (std::int64_t k = 0; k < cin; ++k) {
                s += x[static_cast<std::size_t>(i * cin + k)] * w[static_cast<std::size_t>(k * cout + o)];
            }
            y[static_cast<std::size_t>(i * cout + o)] = s;
        }
    }
    return y;
}

inline Tensor relu(Tensor x)
{
    for (double& v : x.values()) v = v > 0 ? v : 0.0;
    return x;
}

inline Tensor sigmoid(Tensor x)
{
    for (double& v : x.values()) v = 1.0 / (1.0 + std::exp(-v));
    return x;
}

inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5)
{
    const std::int64_t c = x.dim(-1);
    const std::int64_t rows = static_cast<std::int64_t>(x.size()) / c;
    Tensor y(x.shape());
    for (std::int64_t i = 0; i < rows; ++i) {
        double mu = 0.0;
        for (std::int64_t k = 0; k < c; ++k) mu += x[static_cast<std::size_t>(i * c + k)];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::int64_t k = 0; k < c; ++k) {
            const double d = x[static_cast<std::size_t>(i * c + k)] - mu;
            var += d * d;
        }
        var /= static_cast<double>(c);
        for (std::int64_t k = 0; k < c; ++k) {
            const auto j = static_cast<std::size_t>(i * c + k);
            y[j] = gamma[static_cast<std::size_t>(k)] * (x[j] - mu) / std::sqrt(var + eps) + beta[static_cast<std::size_t>(k)];
        }
    }
    return y;
}

inline Tensor add(Tensor a, const Tensor& b)
{
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

inline Tensor sub(Tensor a, const Tensor& b)
{
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
    return a;
}

inline Tensor concat(const Tensor& a, const Tensor& b)
{
    const std::int64_t ca = a.dim(-1);
    const std::int64_t cb = b.dim(-1);
    const std::int64_t rows = static_cast<std::int64_t>(a.size()) / ca;
    Shape shape = a.shape();
    shape.back() = ca + cb;
    Tensor y(shape);
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t k = 0; k < ca; ++k) y[static_cast<std::size_t>(i * (ca + cb) + k)] = a[static_cast<std::size_t>(i * ca + k)];
        for (std::int64_t k = 0; k < cb; ++k) y[static_cast<std::size_t>(i * (ca + cb) + ca + k)] = b[static_cast<std::size_t>(i * cb + k)];
    }
    return y;
}

inline Tensor conv3x3(const Tensor& x, const Tensor& k, const Tensor& b)
{
    const std::int64_t h = x.dim(0);
    const std::int64_t w = x.dim(1);
    const std::int64_t cin = x.dim(2);
    const std::int64_t cout = k.dim(3);
    Tensor y(Shape{h, w, cout});
    for (std::int64_t r = 0; r < h; ++r) {
        for (std::int64_t c = 0; c < w; ++c) {
            for (std::int64_t o = 0; o < cout; ++o) {
                double s = b[static_cast<std::size_t>(o)];
                for (std::int64_t dr = -1; dr <= 1; ++dr) {
                    for (std::int64_t dc = -1; dc <= 1; ++dc) {
                        for (std::int64_t i = 0; i < cin; ++i) {
                            const double kv = k[static_cast<std::size_t>((((dr + 1) * 3 + (dc + 1)) * cin + i) * cout + o)];
                            s += kv * cell_or_zero(x, r + dr, c + dc, i);
                        }
                    }
                }
                y[static_cast<std::size_t>((r * w + c) * cout + o)] = s;
            }
        }
    }
    return y;
}

// Squeeze-excite gate: x * sigmoid(fc2(relu(fc1(mean_hw(x))))).
inline Tensor squeeze_excite(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2)
{
    const std::int64_t c = x.dim(2);
    const std::int64_t cells = x.dim(0) * x.dim(1);
    Tensor pooled(Shape{c});
    for (std::int64_t p = 0; p < cells; ++p) {
        for (std::int64_t k = 0; k < c; ++k) pooled[static_cast<std::size_t>(k)] += x[static_cast<std::size_t>(p * c + k)];
    }
    for (double& v : pooled.values()) v /= static_cast<double>(cells);
    const Tensor gate = sigmoid(linear(relu(linear(pooled, w1, b1)), w2, b2));
    Tensor y = x;
    for (std::int64_t p = 0; p < cells; ++p) {
        for (std::int64_t k = 0; k < c; ++k) y[static_cast<std::size_t>(p * c + k)] *= gate[static_cast<std::size_t>(k)];
    }
    return y;
}

// Raw sampling part of deformable attention for one reference cell, head and
// point, then the weighted sum, all by explicit loops.
//   value [H, W, heads*D], offsets [H, W, heads, K, 2], weights [H, W, heads, K]
inline Tensor deform_gather(const Tensor& value, const Tensor& offsets, const Tensor& weights, std::int64_t heads,
                            std::int64_t points)
{
    const std::int64_t h = value.dim(0);
    const std::int64_t w = value.dim(1);
    const std::int64_t c = value.dim(2);
    const std::int64_t d = c / heads;
    Tensor out(Shape{h, w, c});
    for (std::int64_t r = 0; r < h; ++r) {
        for (std::int64_t col = 0; col < w; ++col) {
            const std::int64_t cell = r * w + col;
            for (std::int64_t hd = 0; hd < heads; ++hd) {
                for (std::int64_t k = 0; k < points; ++k) {
                    const std::size_t o = static_cast<std::size_t>(((cell * heads + hd) * points + k) * 2);
                    const double a = weights[static_cast<std::size_t>((cell * heads + hd) * points + k)];
                    const std::vector<double> s = bilinear(value, static_cast<double>(r) + offsets[o],
                                                           static_cast<double>(col) + offsets[o + 1]);
                    for (std::int64_t j = 0; j < d; ++j) {
                        out[static_cast<std::size_t>(cell * c + hd * d + j)] += a * s[static_cast<std::size_t>(hd * d + j)];
                    }
                }
            }
        }
    }
    return out;
}

// Full deformable attention: value/output projections around the gather.
inline Tensor deform_attn(const Tensor& value, const Tensor& offsets, const Tensor& weights, const Tensor& wv,
                          const Tensor& bv, const Tensor& wo, const Tensor& bo, std::int64_t heads, std::int64_t points)
{
    return linear(deform_gather(linear(value, wv, bv), offsets, weights, heads, points), wo, bo);
}

inline Tensor softmax_last(const Tensor& x)
{
    const std::int64_t k = x.dim(-1);
    const std::int64_t rows = static_cast<std::int64_t>(x.size()) / k;
    Tensor y(x.shape());
    for (std::int64_t i = 0; i < rows; ++i) {
        double z = 0.0;
        for (std::int64_t j = 0; j < k; ++j) z += std::exp(x[static_cast<std::size_t>(i * k + j)]);
        for (std::int64_t j = 0; j < k; ++j) y[static_cast<std::size_t>(i * k + j)] = std::exp(x[static_cast<std::size_t>(i * k + j)]) / z;
    }
    return y;
}

inline Tensor linear_p(const obev::ParamStore& p, const std::string& prefix, const Tensor& x)
{
    return linear(x, p.value(prefix + ".W"), p.value(prefix + ".b"));
}

inline Tensor layer_norm_p(const obev::ParamStore& p, const std::string& prefix, const Tensor& x)
{
    return layer_norm(x, p.value(prefix + ".gamma"), p.value(prefix + ".beta"));
}

// Motion-guided deformable attention of one layer, with offsets and weights
// predicted from the motion feature m by the parameters under `prefix`.
inline Tensor mgwa(const obev::ParamStore& p, const std::string& prefix, const Tensor& m, const Tensor& value,
                   std::int64_t heads, std::int64_t points)
{
    const std::int64_t h = m.dim(0);
    const std::int64_t w = m.dim(1);
    const Tensor offsets = linear_p(p, prefix + ".offset", m).reshaped(Shape{h, w, heads, points, 2});
    const Tensor weights = softmax_last(linear_p(p, prefix + ".weight", m).reshaped(Shape{h, w, heads, points}));
    return deform_attn(value, offsets, weights, p.value(prefix + ".value.W"), p.value(prefix + ".value.b"),
                       p.value(prefix + ".out.W"), p.value(prefix + ".out.b"), heads, points);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace oracle
