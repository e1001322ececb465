#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "onlinebev/config.hpp"
#include "onlinebev/dataset.hpp"
#include "onlinebev/metrics.hpp"
#include "onlinebev/model.hpp"

namespace obev {

struct EpochMetrics {
    int epoch = 0;
    int phase = 1;
    std::int64_t steps = 0;  // cumulative optimizer steps at epoch end
    double total = 0.0;      // per-frame means over the epoch
    double cls = 0.0;
    double reg = 0.0;
    double cons = 0.0;
};

struct TrainResult {
    ParamStore params;
    std::vector<EpochMetrics> curve;
    std::int64_t steps = 0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Two phases. Phase 1 trains stem and heads single-frame with L_cls + L_reg;
// phase 2 runs the configured method recurrently over each scene and adds
// L_cons for methods that use it. Each optimizer step uses the gradient
// averaged over the frames it covers (see TrainConfig).
// Deterministic for a given seed. Throws NumericError naming the step on a
// non-finite loss.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& data, std::uint64_t seed,
                  const EpochCallback& on_epoch = {});

// Header row plus one row per epoch; floats printed with 17 significant digits.
std::string training_metrics_csv(const std::vector<EpochMetrics>& curve);

// Infer-mode evaluation over every scene. With a corruption, each frame's
// features are corrupted with a seed derived from corruption_seed, the scene
// seed and the frame index.
MetricsReport evaluate_model(const Model& model, const Dataset& data, const EvalConfig& cfg,
                             Corruption corruption = Corruption::none, std::uint64_t corruption_seed = 0);

// Train and validation splits generated from a run configuration.
struct Splits {
    Dataset train;
    Dataset val;
};
Splits make_splits(const RunConfig& cfg);

}  // namespace obev
