#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "onlinebev/fusion.hpp"
#include "onlinebev/heads.hpp"
#include "onlinebev/scenegen.hpp"

namespace obev {

enum class Method { baseline_s, baseline_m, method_a, method_b, method_c };

Method method_from_string(const std::string& s);
std::string to_string(Method m);

struct ModelConfig {
    Method method = Method::method_c;
    int frames = 2;      // K for baseline_m
    int max_frames = 5;  // upper bound accepted by the parallel baseline
    int input_channels = 32;
    int num_classes = 3;
    double heat_bias_init = -2.19;
    FusionConfig fusion;

    void validate() const;
    bool recurrent() const { return method == Method::method_a || method == Method::method_b || method == Method::method_c; }
    bool uses_mbfnet() const { return method == Method::method_b || method == Method::method_c; }
    bool uses_htc() const { return method == Method::method_c; }
};

struct Model {
    ModelConfig config;
    GridSpec grid;
    ParamStore params;

    Model(const ModelConfig& cfg, const GridSpec& grid, std::uint64_t seed);
    Model(const ModelConfig& cfg, const GridSpec& grid, ParamStore params);
};

struct FrameOutput {
    Var features;  // F_t after the stem
    Var fused;     // H_t
    std::optional<Var> aligned;  // H_hat_t, recurrent methods with history only
    Heatmap heat;
    RegressionMap reg;
    std::optional<Var> heat_hat;  // Q_hat_t, present with `aligned`
    bool has_history = false;
};

// relu(linear(raw, C_in -> C)).
Var stem_forward(const Context& ctx, Var raw);

// Single-frame path: stem, heads. Used by Baseline-S and by phase-1 training.
FrameOutput single_frame_forward(const Context& ctx, const Model& model, Var raw);

// Fused-feature computation for a frame given an explicit (already
// ego-compensated) history. `history` is H_{t-1} for recurrent methods and the
// list of K-1 previous features for Baseline-M.
FrameOutput fused_forward(const Context& ctx, const Model& model, Var raw, const std::vector<Tensor>& history,
                          bool has_history, bool with_heat_hat);

// Owns the per-sequence state: memory bank (recurrent methods) or the stored
// previous features (Baseline-M). Frames must arrive in order; a new scene id
// resets the state.
class SequenceRunner {
public:
    explicit SequenceRunner(const Model& model) : model_(&model) {}

    FrameOutput step(const Context& ctx, const BevFeature& frame, bool with_heat_hat = true);
    void reset();

    const MemoryBank& bank() const { return bank_; }

private:
    const Model* model_;
    MemoryBank bank_;
    std::deque<std::pair<Tensor, EgoPose>> past_;  // newest first
    std::int64_t scene_id_ = -1;
    std::int64_t frame_index_ = -1;
};

struct SequenceOutput {
    std::vector<Tensor> fused;
    std::vector<std::optional<Tensor>> aligned;
    std::vector<Tensor> heat;
    std::vector<Tensor> reg;
    std::vector<std::optional<Tensor>> heat_hat;
};

// Infer-mode pass over the frames of one scene.
SequenceOutput run_sequence(const Model& model, const std::vector<BevFeature>& frames);

}  // namespace obev
