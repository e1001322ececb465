#include "onlinebev/heads.hpp"

#include <algorithm>
#include <cmath>

#include "onlinebev/error.hpp"

namespace obev {

namespace {

constexpr double kProbClamp = 1e-12;

void add_conv_params(ParamStore& params, const std::string& prefix, int in, int out, Rng& rng)
{
    const double bound = 1.0 / std::sqrt(9.0 * in);
    params.add(prefix + ".K", uniform_tensor(Shape{3, 3, in, out}, rng, -bound, bound));
    params.add(prefix + ".b", uniform_tensor(Shape{out}, rng, -bound, bound));
}

Var conv_block(const Context& ctx, const std::string& prefix, Var x)
{
    return ops::relu(ops::conv3x3(x, ctx.p(prefix + ".conv.K"), ctx.p(prefix + ".conv.b")));
}

void check_loss(double v, const char* what)
{
    if (!std::isfinite(v)) throw NumericError(std::string(what) + " is not finite");
    if (v < 0) throw NumericError(std::string(what) + " is negative");
}

}  // namespace

void init_head_params(ParamStore& params, const HeadConfig& cfg, Rng& rng, const std::string& prefix)
{
    add_conv_params(params, prefix + ".heat.conv", cfg.channels, cfg.channels, rng);
    add_linear_params(params, prefix + ".heat.out", cfg.channels, cfg.num_classes, rng);
    params.value(prefix + ".heat.out.b").fill(cfg.heat_bias_init);
    add_conv_params(params, prefix + ".reg.conv", cfg.channels, cfg.channels, rng);
    add_linear_params(params, prefix + ".reg.out", cfg.channels, kRegressionChannels, rng);
}

Heatmap heatmap_head(const Context& ctx, Var features, const std::string& prefix)
{
    Var h = conv_block(ctx, prefix + ".heat", features);
    return {ops::sigmoid(apply_linear(ctx, prefix + ".heat.out", h))};
}

RegressionMap regression_head(const Context& ctx, Var features, const std::string& prefix)
{
    Var h = conv_block(ctx, prefix + ".reg", features);
    return {apply_linear(ctx, prefix + ".reg.out", h)};
}

std::pair<std::int64_t, std::int64_t> center_cell(const GroundTruth& gt, const GridSpec& grid)
{
    const auto [r, c] = grid.ego_to_cell(gt.x, gt.y);
    return {std::llround(r), std::llround(c)};
}

double target_sigma(const GroundTruth& gt, const GridSpec& grid)
{
    return std::max(1.0, std::min(gt.width, gt.length) / (3.0 * grid.cell_size));
}

TargetMaps render_targets(const std::vector<GroundTruth>& gt, const GridSpec& grid, int num_classes)
{
    TargetMaps t;
    t.heat = Tensor(Shape{grid.rows, grid.cols, num_classes});
    t.reg = Tensor(Shape{grid.rows, grid.cols, kRegressionChannels});
    t.mask = Tensor(Shape{grid.rows, grid.cols});
    for (const auto& obj : gt) {
        const auto [row, col] = grid.ego_to_cell(obj.x, obj.y);
        if (!grid.contains_cell(row, col)) continue;
        if (obj.class_id < 0 || obj.class_id >= num_classes) continue;
        const auto [ci, cj] = center_cell(obj, grid);
        const double sigma = target_sigma(obj, grid);
        const auto radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
        for (auto i = std::max<std::int64_t>(0, ci - radius); i <= std::min(grid.rows - 1, ci + radius); ++i) {
            for (auto j = std::max<std::int64_t>(0, cj - radius); j <= std::min(grid.cols - 1, cj + radius); ++j) {
                const double d2 = static_cast<double>((i - ci) * (i - ci) + (j - cj) * (j - cj));
                double& cell = t.heat.at(i, j, obj.class_id);
                cell = std::max(cell, std::exp(-d2 / (2.0 * sigma * sigma)));
            }
        }
        const auto k = static_cast<std::size_t>(ci * grid.cols + cj);
        t.mask[k] = 1.0;
        const double vals[kRegressionChannels] = {row - static_cast<double>(ci), col - static_cast<double>(cj),
                                                  obj.width, obj.length, obj.vx, obj.vy};
        std::copy(vals, vals + kRegressionChannels, t.reg.data() + k * kRegressionChannels);
    }
    return t;
}

Var focal_loss(Var q, const Tensor& heat, double alpha, double beta)
{
    const Tensor& qv = q.value();
    if (qv.shape() != heat.shape()) {
        throw DimensionError("focal_loss: prediction " + shape_string(qv.shape()) + " vs target " +
                             shape_string(heat.shape()));
    }
    double num_pos = 0.0;
    for (double t : heat.values()) num_pos += (t == 1.0) ? 1.0 : 0.0;
    const double norm = 1.0 / std::max(1.0, num_pos);
    double loss = 0.0;
    Tensor dq(qv.shape());
    for (std::size_t i = 0; i < qv.size(); ++i) {
        const double raw = qv[i];
        const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
        const bool clamped = p != raw;
        if (heat[i] == 1.0) {
            const double om = 1.0 - p;
            loss -= std::pow(om, alpha) * std::log(p);
            if (!clamped) dq[i] = norm * (alpha * std::pow(om, alpha - 1.0) * std::log(p) - std::pow(om, alpha) / p);
        } else {
            const double wneg = std::pow(1.0 - heat[i], beta);
            loss -= wneg * std::pow(p, alpha) * std::log(1.0 - p);
            if (!clamped) {
                dq[i] = -norm * wneg * (alpha * std::pow(p, alpha - 1.0) * std::log(1.0 - p) - std::pow(p, alpha) / (1.0 - p));
            }
        }
    }
    loss *= norm;
    if (!std::isfinite(loss)) throw NumericError("focal loss is not finite");
    return q.tape().record(Tensor::scalar(loss), {q}, [q, dq = std::move(dq)](Tape& t, const Tensor& g) {
        Tensor& gq = t.grad_of(q);
        for (std::size_t i = 0; i < dq.size(); ++i) gq[i] += g[0] * dq[i];
    });
}

Var l1_reg_loss(Var r, const TargetMaps& targets)
{
    const Tensor& rv = r.value();
    if (rv.shape() != targets.reg.shape()) throw DimensionError("l1_reg_loss: regression map shape mismatch");
    double count = 0.0;
    for (double m : targets.mask.values()) count += m;
    if (count == 0.0) return r.tape().constant(Tensor::scalar(0.0));
    const double norm = 1.0 / (count * kRegressionChannels);
    double loss = 0.0;
    Tensor dr(rv.shape());
    for (std::size_t cell = 0; cell < targets.mask.size(); ++cell) {
        if (targets.mask[cell] == 0.0) continue;
        for (std::size_t k = 0; k < kRegressionChannels; ++k) {
            const std::size_t i = cell * kRegressionChannels + k;
            const double d = rv[i] - targets.reg[i];
            loss += std::abs(d);
            dr[i] = norm * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
        }
    }
    return r.tape().record(Tensor::scalar(loss * norm), {r}, [r, dr = std::move(dr)](Tape& t, const Tensor& g) {
        Tensor& gr = t.grad_of(r);
        for (std::size_t i = 0; i < dr.size(); ++i) gr[i] += g[0] * dr[i];
    });
}

Var consistency_loss(const Context& ctx, Var q_target, Var aligned, const std::string& head_prefix)
{
    Var q_fixed = ctx.tape.detach(q_target);
    Var q_hat = heatmap_head(ctx, aligned, head_prefix).q;
    return ops::mean(ops::square(ops::sub(q_fixed, q_hat)));
}

Var htc_loss(const Context& ctx, Var fused, Var aligned, const std::string& head_prefix)
{
    if (fused.shape() != aligned.shape()) throw DimensionError("htc_loss: H_t and H_hat_t shapes differ");
    Var q_t = heatmap_head(ctx, ctx.tape.detach(fused), head_prefix).q;
    return consistency_loss(ctx, q_t, aligned, head_prefix);
}

double total_loss(double cls, double reg, double cons, const LossWeights& w)
{
    check_loss(cls, "classification loss");
    check_loss(reg, "regression loss");
    check_loss(cons, "consistency loss");
    return w.cls * cls + w.reg * reg + w.cons * cons;
}

Var total_loss(Var cls, Var reg, std::optional<Var> cons, const LossWeights& w)
{
    check_loss(cls.value().item(), "classification loss");
    check_loss(reg.value().item(), "regression loss");
    Var total = ops::add(ops::scale(cls, w.cls), ops::scale(reg, w.reg));
    if (cons) {
        check_loss(cons->value().item(), "consistency loss");
        total = ops::add(total, ops::scale(*cons, w.cons));
    }
    return total;
}

}  // namespace obev
