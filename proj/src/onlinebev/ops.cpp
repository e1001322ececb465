#include "onlinebev/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

#include "onlinebev/error.hpp"

namespace obev {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Var& a, const Var& b, const char* op)
{
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

void require_rank(const Var& v, std::int64_t rank, const char* op)
{
    if (v.value().rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_string(v.shape()));
    }
}

template <class F>
Var unary(Var x, F&& forward_and_grad_factor)
{
    // forward_and_grad_factor(x) -> {y, dy/dx}
    const Tensor& xv = x.value();
    Tensor y(xv.shape());
    Tensor d(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        auto [yi, di] = forward_and_grad_factor(xv[i]);
        y[i] = yi;
        d[i] = di;
    }
    return x.tape().record(std::move(y), {x}, [x, d = std::move(d)](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_of(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * d[i];
    });
}

}  // namespace

void bilinear_read(const Tensor& map, double r, double c, double* out)
{
    const auto rows = map.dim(0);
    const auto cols = map.dim(1);
    const auto ch = map.dim(2);
    std::fill(out, out + ch, 0.0);
    const auto taps = bilinear_taps(rows, cols, r, c);
    for (int k = 0; k < taps.count; ++k) {
        const double* src = map.data() + taps.cell[k] * ch;
        for (std::int64_t i = 0; i < ch; ++i) out[i] += taps.w[k] * src[i];
    }
}

Tensor affine_gather(const Tensor& map, const Affine2x3& m)
{
    if (map.rank() != 3) throw DimensionError("affine_gather expects [H, W, C], got " + shape_string(map.shape()));
    const auto rows = map.dim(0);
    const auto cols = map.dim(1);
    const auto ch = map.dim(2);
    Tensor out(map.shape());
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) {
            const double r = m[0] * i + m[1] * j + m[2];
            const double c = m[3] * i + m[4] * j + m[5];
            bilinear_read(map, r, c, out.data() + (i * cols + j) * ch);
        }
    }
    return out;
}

namespace ops {

Var add(Var a, Var b)
{
    require_same_shape(a, b, "add");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
    return a.tape().record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
        for (Var v : {a, b}) {
            if (!t.requires_grad(v)) continue;
            Tensor& gv = t.grad_of(v);
            for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
        }
    });
}

Var sub(Var a, Var b)
{
    require_same_shape(a, b, "sub");
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
    return a.tape().record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_of(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_of(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Var mul(Var a, Var b)
{
    require_same_shape(a, b, "mul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    return a.tape().record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_of(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_of(b);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var scale(Var a, double s)
{
    Tensor y = a.value();
    for (auto& v : y.values()) v *= s;
    return a.tape().record(std::move(y), {a}, [a, s](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
}

Var relu(Var x)
{
    return unary(x, [](double v) { return std::pair{v > 0 ? v : 0.0, v > 0 ? 1.0 : 0.0}; });
}

Var sigmoid(Var x)
{
    return unary(x, [](double v) {
        // Split by sign so exp never overflows.
        const double s = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        return std::pair{s, s * (1.0 - s)};
    });
}

Var square(Var x)
{
    return unary(x, [](double v) { return std::pair{v * v, 2.0 * v}; });
}

Var sum(Var x)
{
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    return x.tape().record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_of(x);
        for (auto& v : gx.values()) v += g[0];
    });
}

Var mean(Var x)
{
    const auto n = static_cast<double>(x.value().size());
    return scale(sum(x), 1.0 / n);
}

Var linear(Var x, Var weight, Var bias)
{
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    const Tensor& bv = bias.value();
    if (wv.rank() != 2 || bv.rank() != 1 || xv.rank() < 1 || xv.dim(-1) != wv.dim(0) || bv.dim(0) != wv.dim(1)) {
        throw DimensionError("linear: incompatible shapes x=" + shape_string(xv.shape()) +
                             " W=" + shape_string(wv.shape()) + " b=" + shape_string(bv.shape()));
    }
    const auto cin = wv.dim(0);
    const auto cout = wv.dim(1);
    const auto n = static_cast<std::int64_t>(xv.size()) / cin;
    Shape out_shape = xv.shape();
    out_shape.back() = cout;
    Tensor y(out_shape);
    {
        CMapMat X(xv.data(), n, cin);
        CMapMat W(wv.data(), cin, cout);
        MapMat Y(y.data(), n, cout);
        Y.noalias() = X * W;
        Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data(), cout);
    }
    return x.tape().record(std::move(y), {x, weight, bias}, [x, weight, bias, n, cin, cout](Tape& t, const Tensor& g) {
        CMapMat G(g.data(), n, cout);
        if (t.requires_grad(x)) {
            MapMat GX(t.grad_of(x).data(), n, cin);
            GX.noalias() += G * CMapMat(t.value(weight).data(), cin, cout).transpose();
        }
        if (t.requires_grad(weight)) {
            MapMat GW(t.grad_of(weight).data(), cin, cout);
            GW.noalias() += CMapMat(t.value(x).data(), n, cin).transpose() * G;
        }
        if (t.requires_grad(bias)) {
            Eigen::Map<Eigen::RowVectorXd> GB(t.grad_of(bias).data(), cout);
            GB += G.colwise().sum();
        }
    });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps)
{
    const Tensor& xv = x.value();
    const auto c = xv.dim(-1);
    if (gamma.value().rank() != 1 || gamma.value().dim(0) != c || beta.shape() != gamma.shape()) {
        throw DimensionError("layer_norm: gamma/beta must be [" + std::to_string(c) + "]");
    }
    if (!(eps > 0)) throw DimensionError("layer_norm: eps must be positive");
    const auto n = static_cast<std::int64_t>(xv.size()) / c;
    Tensor xhat(xv.shape());
    std::vector<double> inv_std(static_cast<std::size_t>(n));
    Tensor y(xv.shape());
    const double* g = gamma.value().data();
    const double* b = beta.value().data();
    for (std::int64_t r = 0; r < n; ++r) {
        const double* xr = xv.data() + r * c;
        double mu = 0.0;
        for (std::int64_t i = 0; i < c; ++i) mu += xr[i];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::int64_t i = 0; i < c; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = inv;
        for (std::int64_t i = 0; i < c; ++i) {
            const double h = (xr[i] - mu) * inv;
            xhat[static_cast<std::size_t>(r * c + i)] = h;
            y[static_cast<std::size_t>(r * c + i)] = g[i] * h + b[i];
        }
    }
    return x.tape().record(
        std::move(y), {x, gamma, beta},
        [x, gamma, beta, n, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Tensor& gy) {
            const double* gam = t.value(gamma).data();
            if (t.requires_grad(gamma) || t.requires_grad(beta)) {
                const bool dg = t.requires_grad(gamma);
                const bool db = t.requires_grad(beta);
                double* ggam = dg ? t.grad_of(gamma).data() : nullptr;
                double* gbet = db ? t.grad_of(beta).data() : nullptr;
                for (std::int64_t r = 0; r < n; ++r) {
                    for (std::int64_t i = 0; i < c; ++i) {
                        const auto k = static_cast<std::size_t>(r * c + i);
                        if (dg) ggam[i] += gy[k] * xhat[k];
                        if (db) gbet[i] += gy[k];
                    }
                }
            }
            if (!t.requires_grad(x)) return;
            Tensor& gx = t.grad_of(x);
            const double inv_c = 1.0 / static_cast<double>(c);
            for (std::int64_t r = 0; r < n; ++r) {
                double m1 = 0.0;
                double m2 = 0.0;
                for (std::int64_t i = 0; i < c; ++i) {
                    const auto k = static_cast<std::size_t>(r * c + i);
                    const double dh = gy[k] * gam[i];
                    m1 += dh;
                    m2 += dh * xhat[k];
                }
                m1 *= inv_c;
                m2 *= inv_c;
                const double inv = inv_std[static_cast<std::size_t>(r)];
                for (std::int64_t i = 0; i < c; ++i) {
                    const auto k = static_cast<std::size_t>(r * c + i);
                    gx[k] += inv * (gy[k] * gam[i] - m1 - xhat[k] * m2);
                }
            }
        });
}

Var softmax(Var x)
{
    const Tensor& xv = x.value();
    const auto k = xv.dim(-1);
    if (k < 1) throw DimensionError("softmax over an empty axis");
    const auto n = static_cast<std::int64_t>(xv.size()) / k;
    Tensor y(xv.shape());
    for (std::int64_t r = 0; r < n; ++r) {
        const double* xr = xv.data() + r * k;
        double* yr = y.data() + r * k;
        const double mx = *std::max_element(xr, xr + k);
        double s = 0.0;
        for (std::int64_t i = 0; i < k; ++i) s += (yr[i] = std::exp(xr[i] - mx));
        for (std::int64_t i = 0; i < k; ++i) yr[i] /= s;
    }
    Tensor yv = y;
    return x.tape().record(std::move(y), {x}, [x, n, k, yv = std::move(yv)](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_of(x);
        for (std::int64_t r = 0; r < n; ++r) {
            const double* yr = yv.data() + r * k;
            const double* gr = g.data() + r * k;
            double dot = 0.0;
            for (std::int64_t i = 0; i < k; ++i) dot += gr[i] * yr[i];
            for (std::int64_t i = 0; i < k; ++i) gx[static_cast<std::size_t>(r * k + i)] += yr[i] * (gr[i] - dot);
        }
    });
}

Var concat_channels(const std::vector<Var>& xs)
{
    if (xs.empty()) throw DimensionError("concat_channels of nothing");
    Shape lead = xs.front().shape();
    lead.pop_back();
    std::vector<std::int64_t> widths;
    std::int64_t total = 0;
    for (const Var& v : xs) {
        Shape s = v.shape();
        const auto w = s.back();
        s.pop_back();
        if (s != lead) throw DimensionError("concat_channels: leading extents differ");
        widths.push_back(w);
        total += w;
    }
    const auto n = static_cast<std::int64_t>(shape_size(lead));
    Shape out_shape = lead;
    out_shape.push_back(total);
    Tensor y(out_shape);
    std::int64_t off = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double* src = xs[k].value().data();
        const auto w = widths[k];
        for (std::int64_t r = 0; r < n; ++r) std::copy_n(src + r * w, w, y.data() + r * total + off);
        off += w;
    }
    return xs.front().tape().record(std::move(y), xs, [xs, widths, n, total](Tape& t, const Tensor& g) {
        std::int64_t off = 0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const auto w = widths[k];
            if (t.requires_grad(xs[k])) {
                double* dst = t.grad_of(xs[k]).data();
                for (std::int64_t r = 0; r < n; ++r) {
                    for (std::int64_t i = 0; i < w; ++i) dst[r * w + i] += g[static_cast<std::size_t>(r * total + off + i)];
                }
            }
            off += w;
        }
    });
}

Var reshape(Var x, Shape shape)
{
    Tensor y = x.value().reshaped(std::move(shape));
    return x.tape().record(std::move(y), {x}, [x](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_of(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Var mean_spatial(Var x)
{
    require_rank(x, 3, "mean_spatial");
    const Tensor& xv = x.value();
    const auto c = xv.dim(2);
    const auto cells = xv.dim(0) * xv.dim(1);
    Tensor y(Shape{c});
    for (std::int64_t p = 0; p < cells; ++p) {
        for (std::int64_t i = 0; i < c; ++i) y[static_cast<std::size_t>(i)] += xv[static_cast<std::size_t>(p * c + i)];
    }
    for (auto& v : y.values()) v /= static_cast<double>(cells);
    return x.tape().record(std::move(y), {x}, [x, c, cells](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_of(x);
        const double s = 1.0 / static_cast<double>(cells);
        for (std::int64_t p = 0; p < cells; ++p) {
            for (std::int64_t i = 0; i < c; ++i) gx[static_cast<std::size_t>(p * c + i)] += s * g[static_cast<std::size_t>(i)];
        }
    });
}

Var scale_channels(Var x, Var s)
{
    require_rank(x, 3, "scale_channels");
    const Tensor& xv = x.value();
    const Tensor& sv = s.value();
    const auto c = xv.dim(2);
    if (sv.rank() != 1 || sv.dim(0) != c) throw DimensionError("scale_channels: gate must be [C]");
    const auto cells = xv.dim(0) * xv.dim(1);
    Tensor y(xv.shape());
    for (std::int64_t p = 0; p < cells; ++p) {
        for (std::int64_t i = 0; i < c; ++i) {
            const auto k = static_cast<std::size_t>(p * c + i);
            y[k] = xv[k] * sv[static_cast<std::size_t>(i)];
        }
    }
    return x.tape().record(std::move(y), {x, s}, [x, s, c, cells](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(x);
        const Tensor& sv = t.value(s);
        const bool gx_on = t.requires_grad(x);
        const bool gs_on = t.requires_grad(s);
        double* gx = gx_on ? t.grad_of(x).data() : nullptr;
        double* gs = gs_on ? t.grad_of(s).data() : nullptr;
        for (std::int64_t p = 0; p < cells; ++p) {
            for (std::int64_t i = 0; i < c; ++i) {
                const auto k = static_cast<std::size_t>(p * c + i);
                if (gx_on) gx[k] += g[k] * sv[static_cast<std::size_t>(i)];
                if (gs_on) gs[i] += g[k] * xv[k];
            }
        }
    });
}

Var dropout(Var x, double rate, Mode mode, Rng* rng)
{
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
    if (mode == Mode::infer || rate == 0.0) return x;
    if (rng == nullptr) throw ConfigError("dropout in train mode needs an RNG");
    const Tensor& xv = x.value();
    Tensor mask(xv.shape());
    const double keep = 1.0 / (1.0 - rate);
    for (auto& m : mask.values()) m = uniform01(*rng) >= rate ? keep : 0.0;
    Tensor y(xv.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mask[i];
    return x.tape().record(std::move(y), {x}, [x, mask = std::move(mask)](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_of(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    });
}

Var bilinear_sample(Var map, Var point)
{
    require_rank(map, 3, "bilinear_sample");
    if (point.value().size() != 2) throw DimensionError("bilinear_sample: point must hold (row, col)");
    const Tensor& mv = map.value();
    const auto c = mv.dim(2);
    const double r = point.value()[0];
    const double col = point.value()[1];
    Tensor y(Shape{c});
    bilinear_read(mv, r, col, y.data());
    return map.tape().record(std::move(y), {map, point}, [map, point, c, r, col](Tape& t, const Tensor& g) {
        const Tensor& mv = t.value(map);
        const auto taps = bilinear_taps(mv.dim(0), mv.dim(1), r, col);
        if (t.requires_grad(map)) {
            double* gm = t.grad_of(map).data();
            for (int k = 0; k < taps.count; ++k) {
                for (std::int64_t i = 0; i < c; ++i) gm[taps.cell[k] * c + i] += taps.w[k] * g[static_cast<std::size_t>(i)];
            }
        }
        if (t.requires_grad(point)) {
            double gr = 0.0;
            double gc = 0.0;
            for (int k = 0; k < taps.count; ++k) {
                const double* src = mv.data() + taps.cell[k] * c;
                double dot = 0.0;
                for (std::int64_t i = 0; i < c; ++i) dot += g[static_cast<std::size_t>(i)] * src[i];
                gr += taps.dr[k] * dot;
                gc += taps.dc[k] * dot;
            }
            Tensor& gp = t.grad_of(point);
            gp[0] += gr;
            gp[1] += gc;
        }
    });
}

Var affine_gather(Var map, const Affine2x3& m)
{
    Tensor y = obev::affine_gather(map.value(), m);
    return map.tape().record(std::move(y), {map}, [map, m](Tape& t, const Tensor& g) {
        const Tensor& mv = t.value(map);
        const auto rows = mv.dim(0);
        const auto cols = mv.dim(1);
        const auto c = mv.dim(2);
        double* gm = t.grad_of(map).data();
        for (std::int64_t i = 0; i < rows; ++i) {
            for (std::int64_t j = 0; j < cols; ++j) {
                const auto taps = bilinear_taps(rows, cols, m[0] * i + m[1] * j + m[2], m[3] * i + m[4] * j + m[5]);
                const double* gsrc = g.data() + (i * cols + j) * c;
                for (int k = 0; k < taps.count; ++k) {
                    double* dst = gm + taps.cell[k] * c;
                    for (std::int64_t ch = 0; ch < c; ++ch) dst[ch] += taps.w[k] * gsrc[ch];
                }
            }
        }
    });
}

Var deform_gather(Var value, Var offsets, Var weights)
{
    require_rank(value, 3, "deform_gather");
    const Tensor& vv = value.value();
    const Tensor& ov = offsets.value();
    const Tensor& wv = weights.value();
    const auto rows = vv.dim(0);
    const auto cols = vv.dim(1);
    const auto ch = vv.dim(2);
    if (wv.rank() != 4 || wv.dim(0) != rows || wv.dim(1) != cols) {
        throw DimensionError("deform_gather: weights must be [H, W, heads, K], got " + shape_string(wv.shape()));
    }
    const auto heads = wv.dim(2);
    const auto points = wv.dim(3);
    if (ov.shape() != Shape{rows, cols, heads, points, 2}) {
        throw DimensionError("deform_gather: offsets must be [H, W, heads, K, 2], got " + shape_string(ov.shape()));
    }
    if (heads < 1 || ch % heads != 0) throw DimensionError("deform_gather: channels not divisible by heads");
    const auto dh = ch / heads;

    Tensor y(vv.shape());
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) {
            const auto cell = i * cols + j;
            double* out = y.data() + cell * ch;
            for (std::int64_t h = 0; h < heads; ++h) {
                for (std::int64_t k = 0; k < points; ++k) {
                    const auto wk = (cell * heads + h) * points + k;
                    const double a = wv[static_cast<std::size_t>(wk)];
                    const auto taps = bilinear_taps(rows, cols, i + ov[static_cast<std::size_t>(wk * 2)],
                                                    j + ov[static_cast<std::size_t>(wk * 2 + 1)]);
                    for (int q = 0; q < taps.count; ++q) {
                        const double* src = vv.data() + taps.cell[q] * ch + h * dh;
                        const double s = a * taps.w[q];
                        for (std::int64_t d = 0; d < dh; ++d) out[h * dh + d] += s * src[d];
                    }
                }
            }
        }
    }
    return value.tape().record(
        std::move(y), {value, offsets, weights},
        [value, offsets, weights, rows, cols, ch, heads, points, dh](Tape& t, const Tensor& g) {
            const Tensor& vv = t.value(value);
            const Tensor& ov = t.value(offsets);
            const Tensor& wv = t.value(weights);
            const bool gv_on = t.requires_grad(value);
            const bool go_on = t.requires_grad(offsets);
            const bool gw_on = t.requires_grad(weights);
            double* gv = gv_on ? t.grad_of(value).data() : nullptr;
            double* go = go_on ? t.grad_of(offsets).data() : nullptr;
            double* gw = gw_on ? t.grad_of(weights).data() : nullptr;
            for (std::int64_t i = 0; i < rows; ++i) {
                for (std::int64_t j = 0; j < cols; ++j) {
                    const auto cell = i * cols + j;
                    const double* gout = g.data() + cell * ch;
                    for (std::int64_t h = 0; h < heads; ++h) {
                        for (std::int64_t k = 0; k < points; ++k) {
                            const auto wk = (cell * heads + h) * points + k;
                            const double a = wv[static_cast<std::size_t>(wk)];
                            const auto taps = bilinear_taps(rows, cols, i + ov[static_cast<std::size_t>(wk * 2)],
                                                            j + ov[static_cast<std::size_t>(wk * 2 + 1)]);
                            double gsample_dot = 0.0;
                            double gr = 0.0;
                            double gc = 0.0;
                            for (int q = 0; q < taps.count; ++q) {
                                const double* src = vv.data() + taps.cell[q] * ch + h * dh;
                                double dot = 0.0;
                                for (std::int64_t d = 0; d < dh; ++d) dot += gout[h * dh + d] * src[d];
                                gsample_dot += taps.w[q] * dot;
                                gr += taps.dr[q] * dot;
                                gc += taps.dc[q] * dot;
                                if (gv_on) {
                                    double* dst = gv + taps.cell[q] * ch + h * dh;
                                    const double s = a * taps.w[q];
                                    for (std::int64_t d = 0; d < dh; ++d) dst[d] += s * gout[h * dh + d];
                                }
                            }
                            if (gw_on) gw[wk] += gsample_dot;
                            if (go_on) {
                                go[wk * 2] += a * gr;
                                go[wk * 2 + 1] += a * gc;
                            }
                        }
                    }
                }
            }
        });
}

Var conv3x3(Var x, Var kernel, Var bias)
{
    require_rank(x, 3, "conv3x3");
    const Tensor& xv = x.value();
    const Tensor& kv = kernel.value();
    const Tensor& bv = bias.value();
    const auto rows = xv.dim(0);
    const auto cols = xv.dim(1);
    const auto cin = xv.dim(2);
    if (kv.rank() != 4 || kv.dim(0) != 3 || kv.dim(1) != 3 || kv.dim(2) != cin || bv.rank() != 1 ||
        bv.dim(0) != kv.dim(3)) {
        throw DimensionError("conv3x3: incompatible shapes x=" + shape_string(xv.shape()) +
                             " K=" + shape_string(kv.shape()) + " b=" + shape_string(bv.shape()));
    }
    if (rows < 1 || cols < 1) throw DimensionError("conv3x3: empty grid");
    const auto cout = kv.dim(3);
    const auto cells = rows * cols;
    const auto patch = 9 * cin;

    // im2col: one row per output cell, (ky, kx, ci) ordering matches the kernel layout.
    auto cols_buf = std::make_shared<std::vector<double, AlignedAllocator<double>>>(static_cast<std::size_t>(cells * patch), 0.0);
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) {
            double* dst = cols_buf->data() + (i * cols + j) * patch;
            for (std::int64_t ky = 0; ky < 3; ++ky) {
                const auto si = i + ky - 1;
                if (si < 0 || si >= rows) continue;
                for (std::int64_t kx = 0; kx < 3; ++kx) {
                    const auto sj = j + kx - 1;
                    if (sj < 0 || sj >= cols) continue;
                    std::copy_n(xv.data() + (si * cols + sj) * cin, cin, dst + (ky * 3 + kx) * cin);
                }
            }
        }
    }
    Tensor y(Shape{rows, cols, cout});
    {
        MapMat Y(y.data(), cells, cout);
        Y.noalias() = CMapMat(cols_buf->data(), cells, patch) * CMapMat(kv.data(), patch, cout);
        Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data(), cout);
    }
    return x.tape().record(
        std::move(y), {x, kernel, bias},
        [x, kernel, bias, cols_buf, rows, cols, cin, cout, cells, patch](Tape& t, const Tensor& g) {
            CMapMat G(g.data(), cells, cout);
            if (t.requires_grad(kernel)) {
                MapMat GK(t.grad_of(kernel).data(), patch, cout);
                GK.noalias() += CMapMat(cols_buf->data(), cells, patch).transpose() * G;
            }
            if (t.requires_grad(bias)) {
                Eigen::Map<Eigen::RowVectorXd> GB(t.grad_of(bias).data(), cout);
                GB += G.colwise().sum();
            }
            if (t.requires_grad(x)) {
                RowMat dcols = G * CMapMat(t.value(kernel).data(), patch, cout).transpose();
                double* gx = t.grad_of(x).data();
                for (std::int64_t i = 0; i < rows; ++i) {
                    for (std::int64_t j = 0; j < cols; ++j) {
                        const double* src = dcols.data() + (i * cols + j) * patch;
                        for (std::int64_t ky = 0; ky < 3; ++ky) {
                            const auto si = i + ky - 1;
                            if (si < 0 || si >= rows) continue;
                            for (std::int64_t kx = 0; kx < 3; ++kx) {
                                const auto sj = j + kx - 1;
                                if (sj < 0 || sj >= cols) continue;
                                double* dst = gx + (si * cols + sj) * cin;
                                const double* s = src + (ky * 3 + kx) * cin;
                                for (std::int64_t ci = 0; ci < cin; ++ci) dst[ci] += s[ci];
                            }
                        }
                    }
                }
            }
        });
}

}  // namespace ops
}  // namespace obev
