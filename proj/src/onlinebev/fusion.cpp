#include "onlinebev/fusion.hpp"

#include <cmath>

#include "onlinebev/error.hpp"

namespace obev {

MfeMode mfe_mode_from_string(const std::string& s)
{
    if (s == "none") return MfeMode::none;
    if (s == "diff") return MfeMode::diff;
    if (s == "diff_cwa") return MfeMode::diff_cwa;
    throw ConfigError("unknown mfe mode '" + s + "' (expected none, diff or diff_cwa)");
}

std::string to_string(MfeMode m)
{
    switch (m) {
    case MfeMode::none: return "none";
    case MfeMode::diff: return "diff";
    case MfeMode::diff_cwa: return "diff_cwa";
    }
    return "diff_cwa";
}

void FusionConfig::validate() const
{
    if (channels < 1) throw ConfigError("fusion: channels must be >= 1");
    if (layers < 0) throw ConfigError("fusion: layers must be >= 0");
    if (heads < 1 || channels % heads != 0) throw ConfigError("fusion: channels must be divisible by heads");
    if (points < 1) throw ConfigError("fusion: points must be >= 1");
    if (ffn_ratio < 1) throw ConfigError("fusion: ffn_ratio must be >= 1");
    if (cwa_reduction < 1 || channels / cwa_reduction < 1) throw ConfigError("fusion: bad cwa_reduction");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("fusion: dropout must be in [0, 1)");
}

void add_linear_params(ParamStore& params, const std::string& prefix, int in, int out, Rng& rng)
{
    const double bound = std::sqrt(3.0 / static_cast<double>(in));
    params.add(prefix + ".W", uniform_tensor(Shape{in, out}, rng, -bound, bound));
    params.add(prefix + ".b", uniform_tensor(Shape{out}, rng, -bound, bound));
}

void add_zero_linear_params(ParamStore& params, const std::string& prefix, int in, int out)
{
    params.add(prefix + ".W", Tensor(Shape{in, out}));
    params.add(prefix + ".b", Tensor(Shape{out}));
}

void add_passthrough_params(ParamStore& params, const std::string& prefix, int channels, int blocks)
{
    Tensor w(Shape{static_cast<std::int64_t>(blocks) * channels, channels});
    for (int c = 0; c < channels; ++c) w[static_cast<std::size_t>(c) * channels + c] = 1.0;
    params.add(prefix + ".W", std::move(w));
    params.add(prefix + ".b", Tensor(Shape{channels}));
}

void add_layer_norm_params(ParamStore& params, const std::string& prefix, int channels)
{
    params.add(prefix + ".gamma", Tensor(Shape{channels}, 1.0));
    params.add(prefix + ".beta", Tensor(Shape{channels}));
}

Var apply_linear(const Context& ctx, const std::string& prefix, Var x)
{
    return ops::linear(x, ctx.p(prefix + ".W"), ctx.p(prefix + ".b"));
}

Var apply_layer_norm(const Context& ctx, const std::string& prefix, Var x)
{
    return ops::layer_norm(x, ctx.p(prefix + ".gamma"), ctx.p(prefix + ".beta"));
}

std::string layer_prefix(const std::string& base, int layer)
{
    return base + ".l" + std::to_string(layer);
}

void init_mbfnet_params(ParamStore& params, const FusionConfig& cfg, Rng& rng, const std::string& base)
{
    cfg.validate();
    const int c = cfg.channels;
    const int hk = cfg.heads * cfg.points;
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = layer_prefix(base, l);
        if (cfg.mfe != MfeMode::none) add_linear_params(params, p + ".mfe.fc", c, c, rng);
        if (cfg.mfe == MfeMode::diff_cwa) {
            add_linear_params(params, p + ".mfe.cwa.fc1", c, c / cfg.cwa_reduction, rng);
            add_linear_params(params, p + ".mfe.cwa.fc2", c / cfg.cwa_reduction, c, rng);
        }
        add_zero_linear_params(params, p + ".attn.offset", c, hk * 2);
        add_linear_params(params, p + ".attn.weight", c, hk, rng);
        add_linear_params(params, p + ".attn.value", c, c, rng);
        add_linear_params(params, p + ".attn.out", c, c, rng);
        add_layer_norm_params(params, p + ".hist.ln", c);
        add_linear_params(params, p + ".ffn1.fc1", c, c * cfg.ffn_ratio, rng);
        add_linear_params(params, p + ".ffn1.fc2", c * cfg.ffn_ratio, c, rng);
        add_layer_norm_params(params, p + ".ffn1.ln", c);
        add_passthrough_params(params, p + ".ffn2", c, 2);
    }
}

Var cwa(const Context& ctx, const std::string& prefix, Var x)
{
    Var pooled = ops::mean_spatial(x);
    Var hidden = ops::relu(apply_linear(ctx, prefix + ".fc1", pooled));
    Var gate = ops::sigmoid(apply_linear(ctx, prefix + ".fc2", hidden));
    return ops::scale_channels(x, gate);
}

MotionFeature mfe_forward(const Context& ctx, const FusionConfig& cfg, const std::string& prefix, const QueryPair& q)
{
    if (q.target.shape() != q.historical.shape()) {
        throw DimensionError("mfe_forward: target " + shape_string(q.target.shape()) + " vs historical " +
                             shape_string(q.historical.shape()));
    }
    if (cfg.mfe == MfeMode::none) return {q.target};
    Var m = apply_linear(ctx, prefix + ".fc", ops::sub(q.target, q.historical));
    if (cfg.mfe == MfeMode::diff_cwa) m = cwa(ctx, prefix + ".cwa", m);
    return {m};
}

DeformParams predict_deform(const Context& ctx, const FusionConfig& cfg, const std::string& prefix, const MotionFeature& m)
{
    const auto& s = m.m.shape();
    const std::int64_t rows = s.at(0);
    const std::int64_t cols = s.at(1);
    Var off = ops::reshape(apply_linear(ctx, prefix + ".offset", m.m), Shape{rows, cols, cfg.heads, cfg.points, 2});
    Var logits = ops::reshape(apply_linear(ctx, prefix + ".weight", m.m), Shape{rows, cols, cfg.heads, cfg.points});
    return {off, ops::softmax(logits)};
}

Var deform_attn(const Context& ctx, const FusionConfig& cfg, const std::string& prefix, const MotionFeature& m, Var value)
{
    if (m.m.shape() != value.shape()) throw DimensionError("deform_attn: motion feature and value shapes differ");
    const DeformParams dp = predict_deform(ctx, cfg, prefix, m);
    Var v = apply_linear(ctx, prefix + ".value", value);
    Var sampled = ops::deform_gather(v, dp.offsets, dp.weights);
    return apply_linear(ctx, prefix + ".out", sampled);
}

HistoricalUpdate update_historical(const Context& ctx, const FusionConfig& cfg, const std::string& prefix, Var q_hist, Var z)
{
    Var q_hat = apply_layer_norm(ctx, prefix + ".hist.ln", ops::add(ops::dropout(z, cfg.dropout, ctx.mode, ctx.rng), q_hist));
    Var hidden = ops::relu(apply_linear(ctx, prefix + ".ffn1.fc1", q_hat));
    Var ffn = apply_linear(ctx, prefix + ".ffn1.fc2", hidden);
    Var next = apply_layer_norm(ctx, prefix + ".ffn1.ln", ops::add(q_hat, ffn));
    return {q_hat, next};
}

Var fuse_target(const Context& ctx, const std::string& prefix, Var q_tgt, Var q_hat)
{
    if (q_tgt.shape() != q_hat.shape()) throw DimensionError("fuse_target: shapes differ");
    return ops::relu(apply_linear(ctx, prefix, ops::concat_channels({q_tgt, q_hat})));
}

MbfnetOutput mbfnet_forward(const Context& ctx, const FusionConfig& cfg, Var features, Var history, const std::string& base)
{
    if (features.shape() != history.shape()) throw DimensionError("mbfnet_forward: feature and history shapes differ");
    QueryPair q{features, history, 0};
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = layer_prefix(base, l);
        const MotionFeature m = mfe_forward(ctx, cfg, p + ".mfe", q);
        Var z = deform_attn(ctx, cfg, p + ".attn", m, q.historical);
        const HistoricalUpdate h = update_historical(ctx, cfg, p, q.historical, z);
        q.target = fuse_target(ctx, p + ".ffn2", q.target, h.q_hat);
        q.historical = h.q_hist_next;
        q.layer = l + 1;
    }
    return {q.target, q.historical};
}

void MemoryBank::write(const Tensor& fused, const EgoPose& pose, std::int64_t scene_id)
{
    stored_ = fused;
    pose_ = pose;
    scene_id_ = scene_id;
}

Tensor memory_read(const MemoryBank& bank, std::int64_t scene_id, const EgoPose& cur_pose, const GridSpec& grid,
                   std::int64_t channels)
{
    if (bank.empty() || bank.scene_id() != scene_id) return Tensor(Shape{grid.rows, grid.cols, channels});
    return ego_compensate(*bank.stored(), relative_transform(bank.pose(), cur_pose, grid));
}

void memory_write(MemoryBank& bank, Var fused, const EgoPose& pose, std::int64_t scene_id)
{
    bank.write(fused.value(), pose, scene_id);
}

void init_parallel_params(ParamStore& params, int channels, int frames, Rng& rng, const std::string& prefix)
{
    (void)rng;
    add_passthrough_params(params, prefix, channels, frames);
}

Var parallel_fusion_baseline(const Context& ctx, const std::string& prefix, const std::vector<Var>& feats, int max_frames)
{
    if (feats.empty()) throw ConfigError("parallel fusion needs at least one frame");
    if (static_cast<int>(feats.size()) > max_frames) {
        throw ConfigError("parallel fusion: " + std::to_string(feats.size()) + " frames exceeds configured maximum " +
                          std::to_string(max_frames));
    }
    for (const auto& f : feats) {
        if (f.shape() != feats.front().shape()) throw DimensionError("parallel fusion: frame shapes differ");
    }
    return ops::relu(apply_linear(ctx, prefix, ops::concat_channels(feats)));
}

}  // namespace obev
