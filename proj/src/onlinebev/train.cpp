#include "onlinebev/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "onlinebev/error.hpp"

namespace obev {

namespace {

bool phase1_param(std::string_view name)
{
    return name.rfind("stem.", 0) == 0 || name.rfind("head.", 0) == 0;
}

struct StepLosses {
    double total = 0.0;
    double cls = 0.0;
    double reg = 0.0;
    double cons = 0.0;
};

// Forward losses and backward for one frame; gradients are added to the store.
StepLosses accumulate_frame(const Context& ctx, ParamStore& params, const FrameOutput& out, const Frame& frame,
                            const Model& model, const TrainConfig& cfg, bool with_cons, std::int64_t step)
{
    const TargetMaps targets = render_targets(frame.ground_truth, model.grid, model.config.num_classes);
    StepLosses l;
    try {
        Var cls = focal_loss(out.heat.q, targets.heat);
        Var reg = l1_reg_loss(out.reg.r, targets);
        std::optional<Var> cons;
        if (with_cons && out.aligned) cons = consistency_loss(ctx, out.heat.q, *out.aligned);
        Var total = total_loss(cls, reg, cons, cfg.loss_weights);
        l = {total.value().item(), cls.value().item(), reg.value().item(), cons ? cons->value().item() : 0.0};
        if (!std::isfinite(l.total)) throw NumericError("total loss is not finite");
        ctx.tape.backward(total);
    } catch (const NumericError& e) {
        throw NumericError("training step " + std::to_string(step) + " (scene " + std::to_string(frame.feature.scene_id) +
                           ", frame " + std::to_string(frame.feature.frame_index) + "): " + e.what());
    }
    ctx.tape.accumulate_into(params);
    return l;
}

void scale_grads(ParamStore& params, double s)
{
    for (auto& [name, entry] : params) {
        for (double& g : entry.grad.values()) g *= s;
    }
}

}  // namespace

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& data, std::uint64_t seed,
                  const EpochCallback& on_epoch)
{
    cfg.validate();
    if (model_cfg.input_channels != data.config.channels || model_cfg.num_classes != data.config.num_classes()) {
        throw ConfigError("train: model expects " + std::to_string(model_cfg.input_channels) + " channels and " +
                          std::to_string(model_cfg.num_classes) + " classes, dataset has " +
                          std::to_string(data.config.channels) + " and " + std::to_string(data.config.num_classes()));
    }
    Model model(model_cfg, data.config.grid, seed);
    TrainResult result;
    if (cfg.epochs > 0 && data.scenes.empty()) throw ConfigError("train: dataset has no scenes");

    Rng order_rng(mix_seed(seed, 3));
    Rng dropout_rng(mix_seed(seed, 4));
    AdamW phase1_opt(cfg.optimizer);
    AdamW phase2_opt(cfg.optimizer);
    std::vector<std::size_t> order(data.scenes.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const int phase = epoch < cfg.phase1_epochs ? 1 : 2;
        std::iota(order.begin(), order.end(), std::size_t{0});
        if (cfg.shuffle) std::shuffle(order.begin(), order.end(), order_rng);

        StepLosses sum;
        std::int64_t frames = 0;
        int pending_scenes = 0;
        int pending_frames = 0;
        AdamW& opt = phase == 1 ? phase1_opt : phase2_opt;
        const AdamW::Filter filter = phase == 1 ? AdamW::Filter(phase1_param) : AdamW::Filter();
        auto apply_step = [&] {
            if (pending_frames == 0) return;
            scale_grads(model.params, 1.0 / pending_frames);
            opt.step(model.params, filter);
            model.params.zero_grad();
            ++result.steps;
            pending_scenes = 0;
            pending_frames = 0;
        };
        for (std::size_t si : order) {
            const Scene& scene = data.scenes[si];
            SequenceRunner runner(model);
            for (const Frame& frame : scene.frames) {
                Tape tape;
                const Context ctx{tape, model.params, Mode::train, &dropout_rng};
                const FrameOutput out = phase == 1
                                            ? single_frame_forward(ctx, model, tape.constant(frame.feature.feat))
                                            : runner.step(ctx, frame.feature, false);
                const StepLosses l = accumulate_frame(ctx, model.params, out, frame, model, cfg,
                                                      phase == 2 && model.config.uses_htc(), result.steps);
                ++frames;
                ++pending_frames;
                sum.total += l.total;
                sum.cls += l.cls;
                sum.reg += l.reg;
                sum.cons += l.cons;
                if (cfg.frames_per_step > 0 && pending_frames == cfg.frames_per_step) apply_step();
            }
            ++pending_scenes;
            if (cfg.frames_per_step == 0 && pending_scenes == cfg.sequences_per_step) apply_step();
        }
        apply_step();
        const double n = frames > 0 ? static_cast<double>(frames) : 1.0;
        EpochMetrics m{epoch, phase, result.steps, sum.total / n, sum.cls / n, sum.reg / n, sum.cons / n};
        result.curve.push_back(m);
        if (on_epoch) on_epoch(m);
    }
    result.params = std::move(model.params);
    return result;
}

std::string training_metrics_csv(const std::vector<EpochMetrics>& curve)
{
    std::string out = "epoch,phase,steps,loss_total,loss_cls,loss_reg,loss_cons\n";
    char buf[256];
    for (const auto& m : curve) {
        std::snprintf(buf, sizeof buf, "%d,%d,%lld,%.17g,%.17g,%.17g,%.17g\n", m.epoch, m.phase,
                      static_cast<long long>(m.steps), m.total, m.cls, m.reg, m.cons);
        out += buf;
    }
    return out;
}

MetricsReport evaluate_model(const Model& model, const Dataset& data, const EvalConfig& cfg, Corruption corruption,
                             std::uint64_t corruption_seed)
{
    std::vector<FrameEval> frames;
    double align_sum = 0.0;
    std::int64_t align_frames = 0;
    for (const Scene& scene : data.scenes) {
        SequenceRunner runner(model);
        for (const Frame& frame : scene.frames) {
            Tape tape;
            const Context ctx{tape, model.params, Mode::infer, nullptr};
            const BevFeature input =
                corruption == Corruption::none
                    ? frame.feature
                    : corrupt(data.config, frame.feature, corruption,
                              mix_seed(corruption_seed, mix_seed(scene.seed, static_cast<std::uint64_t>(frame.feature.frame_index))));
            const FrameOutput out = runner.step(ctx, input, true);
            const Tensor& q = out.heat.q.value();
            frames.push_back({decode_detections(q, out.reg.r.value(), cfg.score_thresh, cfg.max_dets), frame.ground_truth});
            if (out.heat_hat) {
                const Tensor& qh = out.heat_hat->value();
                double s = 0.0;
                for (std::size_t i = 0; i < q.size(); ++i) s += std::abs(q[i] - qh[i]);
                align_sum += s / static_cast<double>(q.size());
                ++align_frames;
            }
        }
    }
    MetricsReport report = evaluate(frames, model.grid, model.config.num_classes, cfg);
    report.alignment_frames = align_frames;
    report.alignment_error = align_frames > 0 ? align_sum / static_cast<double>(align_frames) : 0.0;
    return report;
}

Splits make_splits(const RunConfig& cfg)
{
    Splits s;
    s.train.config = cfg.generator;
    s.val.config = cfg.generator;
    s.train.scenes = generate_scenes(cfg.generator, cfg.dataset.train_scenes, cfg.dataset.base_seed, 0);
    s.val.scenes = generate_scenes(cfg.generator, cfg.dataset.val_scenes, cfg.dataset.base_seed + 1,
                                   cfg.dataset.train_scenes);
    return s;
}

}  // namespace obev
