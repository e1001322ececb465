#pragma once

#include <optional>
#include <vector>

#include "onlinebev/fusion.hpp"
#include "onlinebev/scenegen.hpp"

namespace obev {

inline constexpr int kRegressionChannels = 6;  // dx, dy, width, length, vx, vy

struct HeadConfig {
    int channels = 32;
    int num_classes = 3;
    // Final heatmap bias; -2.19 puts the initial score prior near 0.1.
    double heat_bias_init = -2.19;
};

void init_head_params(ParamStore& params, const HeadConfig& cfg, Rng& rng, const std::string& prefix = "head");

struct Heatmap {
    Var q;  // [H, W, num_classes], sigmoid outputs
};

struct RegressionMap {
    Var r;  // [H, W, 6]
};

struct TargetMaps {
    Tensor heat;  // [H, W, num_classes], 1 exactly at centre cells
    Tensor reg;   // [H, W, 6], valid only where mask == 1
    Tensor mask;  // [H, W]
};

// sigmoid(conv1x1(relu(conv3x3(x)))). One parameter set serves the detection
// output and both consistency branches.
Heatmap heatmap_head(const Context& ctx, Var features, const std::string& prefix = "head");
// conv1x1(relu(conv3x3(x))), 6 channels.
RegressionMap regression_head(const Context& ctx, Var features, const std::string& prefix = "head");

// Centre cell of an object: nearest cell to its ego-frame centre.
std::pair<std::int64_t, std::int64_t> center_cell(const GroundTruth& gt, const GridSpec& grid);
// Gaussian sigma in cells: max(1, min(w, l) / (3 * cell_size)).
double target_sigma(const GroundTruth& gt, const GridSpec& grid);

TargetMaps render_targets(const std::vector<GroundTruth>& gt, const GridSpec& grid, int num_classes);

// Penalty-reduced focal loss with alpha = 2, beta = 4, normalised by the
// number of cells where the target is exactly 1 (at least 1).
Var focal_loss(Var q, const Tensor& heat, double alpha = 2.0, double beta = 4.0);
// Mean |r - target| over masked cells and all six channels; 0 without objects.
Var l1_reg_loss(Var r, const TargetMaps& targets);
// Mean squared heatmap difference. The branch producing Q_t is detached
// end to end, so only the H_hat branch and its head parameters get gradients.
Var htc_loss(const Context& ctx, Var fused, Var aligned, const std::string& head_prefix = "head");
// Same, with an already computed Q_t (detached inside).
Var consistency_loss(const Context& ctx, Var q_target, Var aligned, const std::string& head_prefix = "head");

struct LossWeights {
    double cls = 1.0;
    double reg = 0.25;
    double cons = 2.0;
};

// Throws NumericError on negative or non-finite components.
double total_loss(double cls, double reg, double cons, const LossWeights& w = {});
Var total_loss(Var cls, Var reg, std::optional<Var> cons, const LossWeights& w = {});

}  // namespace obev
