#include "onlinebev/model.hpp"

#include "onlinebev/error.hpp"

namespace obev {

Method method_from_string(const std::string& s)
{
    if (s == "baseline_s") return Method::baseline_s;
    if (s == "baseline_m") return Method::baseline_m;
    if (s == "method_a") return Method::method_a;
    if (s == "method_b") return Method::method_b;
    if (s == "method_c") return Method::method_c;
    throw ConfigError("unknown method '" + s + "' (expected baseline_s, baseline_m, method_a, method_b or method_c)");
}

std::string to_string(Method m)
{
    switch (m) {
    case Method::baseline_s: return "baseline_s";
    case Method::baseline_m: return "baseline_m";
    case Method::method_a: return "method_a";
    case Method::method_b: return "method_b";
    case Method::method_c: return "method_c";
    }
    return "method_c";
}

void ModelConfig::validate() const
{
    fusion.validate();
    if (input_channels < 1) throw ConfigError("model: input_channels must be >= 1");
    if (num_classes < 1) throw ConfigError("model: num_classes must be >= 1");
    if (max_frames < 1) throw ConfigError("model: max_frames must be >= 1");
    if (frames < 1 || frames > max_frames) {
        throw ConfigError("model: frames = " + std::to_string(frames) + " must lie in [1, max_frames = " +
                          std::to_string(max_frames) + "]");
    }
}

Model::Model(const ModelConfig& cfg, const GridSpec& g, std::uint64_t seed) : config(cfg), grid(g)
{
    config.validate();
    grid.validate();
    const int c = config.fusion.channels;
    // Stem and heads draw from their own stream so every method starts phase 1
    // from the same weights for a given seed.
    Rng shared(mix_seed(seed, 1));
    add_linear_params(params, "stem", config.input_channels, c, shared);
    init_head_params(params, HeadConfig{c, config.num_classes, config.heat_bias_init}, shared);
    Rng own(mix_seed(seed, 2));
    switch (config.method) {
    case Method::baseline_s: break;
    case Method::baseline_m: init_parallel_params(params, c, config.frames, own, "pf"); break;
    case Method::method_a: add_passthrough_params(params, "rec.fuse", c, 2); break;
    case Method::method_b:
    case Method::method_c: init_mbfnet_params(params, config.fusion, own, "mbf"); break;
    }
}

Model::Model(const ModelConfig& cfg, const GridSpec& g, ParamStore p) : config(cfg), grid(g), params(std::move(p))
{
    config.validate();
    grid.validate();
}

Var stem_forward(const Context& ctx, Var raw)
{
    return ops::relu(apply_linear(ctx, "stem", raw));
}

FrameOutput single_frame_forward(const Context& ctx, const Model& model, Var raw)
{
    (void)model;
    FrameOutput out;
    out.features = stem_forward(ctx, raw);
    out.fused = out.features;
    out.heat = heatmap_head(ctx, out.fused);
    out.reg = regression_head(ctx, out.fused);
    return out;
}

FrameOutput fused_forward(const Context& ctx, const Model& model, Var raw, const std::vector<Tensor>& history,
                          bool has_history, bool with_heat_hat)
{
    const ModelConfig& cfg = model.config;
    if (cfg.method == Method::baseline_s) return single_frame_forward(ctx, model, raw);

    FrameOutput out;
    out.has_history = has_history;
    out.features = stem_forward(ctx, raw);
    const Shape& shape = out.features.shape();

    if (cfg.method == Method::baseline_m) {
        std::vector<Var> feats{out.features};
        for (int k = 1; k < cfg.frames; ++k) {
            const std::size_t i = static_cast<std::size_t>(k - 1);
            feats.push_back(ctx.tape.constant(i < history.size() ? history[i] : Tensor(shape)));
        }
        out.fused = parallel_fusion_baseline(ctx, "pf", feats, cfg.max_frames);
    } else {
        Var prev = ctx.tape.constant(history.empty() ? Tensor(shape) : history.front());
        if (prev.shape() != shape) throw DimensionError("history shape " + shape_string(prev.shape()) + " vs feature " + shape_string(shape));
        if (cfg.method == Method::method_a) {
            out.fused = fuse_target(ctx, "rec.fuse", out.features, prev);
            out.aligned = prev;
        } else {
            const MbfnetOutput m = mbfnet_forward(ctx, cfg.fusion, out.features, prev, "mbf");
            out.fused = m.fused;
            out.aligned = m.aligned;
        }
        if (!has_history) out.aligned.reset();
    }
    out.heat = heatmap_head(ctx, out.fused);
    out.reg = regression_head(ctx, out.fused);
    if (with_heat_hat && out.aligned) out.heat_hat = heatmap_head(ctx, *out.aligned).q;
    return out;
}

void SequenceRunner::reset()
{
    bank_.reset();
    past_.clear();
    scene_id_ = -1;
    frame_index_ = -1;
}

FrameOutput SequenceRunner::step(const Context& ctx, const BevFeature& frame, bool with_heat_hat)
{
    if (frame.scene_id != scene_id_) {
        reset();
        scene_id_ = frame.scene_id;
    } else if (frame.frame_index != frame_index_ + 1) {
        throw SequenceError("scene " + std::to_string(frame.scene_id) + ": frame " + std::to_string(frame.frame_index) +
                            " follows frame " + std::to_string(frame_index_));
    }
    frame_index_ = frame.frame_index;

    const ModelConfig& cfg = model_->config;
    const GridSpec& g = model_->grid;
    const std::int64_t c = cfg.fusion.channels;
    Var raw = ctx.tape.constant(frame.feat);

    std::vector<Tensor> history;
    bool has_history = false;
    if (cfg.recurrent()) {
        has_history = !bank_.empty() && bank_.scene_id() == frame.scene_id;
        history.push_back(memory_read(bank_, frame.scene_id, frame.ego, g, c));
    } else if (cfg.method == Method::baseline_m) {
        has_history = !past_.empty();
        for (const auto& [feat, pose] : past_) history.push_back(ego_compensate(feat, relative_transform(pose, frame.ego, g)));
    }

    FrameOutput out = fused_forward(ctx, *model_, raw, history, has_history, with_heat_hat);

    if (cfg.recurrent()) {
        memory_write(bank_, out.fused, frame.ego, frame.scene_id);
    } else if (cfg.method == Method::baseline_m && cfg.frames > 1) {
        past_.emplace_front(out.features.value(), frame.ego);
        while (past_.size() > static_cast<std::size_t>(cfg.frames - 1)) past_.pop_back();
    }
    return out;
}

SequenceOutput run_sequence(const Model& model, const std::vector<BevFeature>& frames)
{
    SequenceOutput result;
    SequenceRunner runner(model);
    for (const auto& frame : frames) {
        if (!frames.empty() && frame.scene_id != frames.front().scene_id) {
            throw SequenceError("run_sequence: frames from more than one scene");
        }
        Tape tape;
        const Context ctx{tape, model.params, Mode::infer, nullptr};
        const FrameOutput out = runner.step(ctx, frame);
        result.fused.push_back(out.fused.value());
        result.aligned.push_back(out.aligned ? std::optional<Tensor>(out.aligned->value()) : std::nullopt);
        result.heat.push_back(out.heat.q.value());
        result.reg.push_back(out.reg.r.value());
        result.heat_hat.push_back(out.heat_hat ? std::optional<Tensor>(out.heat_hat->value()) : std::nullopt);
    }
    return result;
}

}  // namespace obev
