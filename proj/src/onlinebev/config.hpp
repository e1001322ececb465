#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "onlinebev/heads.hpp"
#include "onlinebev/metrics.hpp"
#include "onlinebev/model.hpp"
#include "onlinebev/optim.hpp"
#include "onlinebev/scenegen.hpp"

namespace obev {

struct DatasetConfig {
    int train_scenes = 64;
    int val_scenes = 16;
    std::uint64_t base_seed = 1000;  // train scenes use base_seed, validation base_seed + 1
};

struct TrainConfig {
    int epochs = 6;
    // Single-frame epochs (stem and heads only) before the temporal model is
    // switched on. The toy ratio is a free choice.
    int phase1_epochs = 1;
    AdamWConfig optimizer;
    LossWeights loss_weights;
    bool shuffle = true;  // scene order per epoch; frames inside a scene stay ordered
    // One optimizer step per `sequences_per_step` scenes, or, when
    // frames_per_step > 0, per that many frames regardless of scene bounds.
    int sequences_per_step = 1;
    int frames_per_step = 0;

    void validate() const;
};

struct AblateConfig {
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    // Arm names: baseline_s, baseline_m<K>, method_a, method_b, method_c, and
    // method_b / method_c with suffix _no_mfe or _diff for the MFE variants.
    std::vector<std::string> arms{"baseline_s", "baseline_m2", "baseline_m5", "method_a", "method_b", "method_c"};
    std::vector<Corruption> corruptions{Corruption::motion_blur, Corruption::occlusion};
};

struct RunConfig {
    std::uint64_t seed = 1;
    GeneratorConfig generator;
    DatasetConfig dataset;
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;
    AblateConfig ablate;

    void validate() const;
};

// Missing keys take the defaults above; unknown keys are rejected. The model's
// input_channels and num_classes follow the generator section.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);

// Model configuration for an ablation arm name.
ModelConfig arm_model_config(const ModelConfig& base, const std::string& arm);

}  // namespace obev
