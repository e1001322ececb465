#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "onlinebev/geometry.hpp"
#include "onlinebev/tensor.hpp"

namespace obev {

struct ClassProfile {
    double width = 1.0;   // meters
    double length = 1.0;  // meters
    double min_speed = 0.0;  // meters per step
    double max_speed = 0.0;
};

struct GeneratorConfig {
    GridSpec grid = GridSpec::centered(64, 64, 0.5);
    int channels = 32;
    int frames = 12;
    int min_objects = 1;
    int max_objects = 8;
    double noise_std = 0.3;
    // Per-object deviation from the class prototype before normalisation.
    double signature_jitter = 0.3;
    // Footprint sigma along each object axis = footprint_scale * extent.
    double footprint_scale = 0.35;
    double ego_speed_min = 0.0;  // meters per step
    double ego_speed_max = 0.5;
    double ego_yaw_rate_max = 0.05;  // radians per step
    int blur_len = 5;
    double occ_frac = 0.25;
    // Seeds the class prototypes shared by every scene generated with this config.
    std::uint64_t world_seed = 7;
    std::vector<ClassProfile> classes = default_classes();

    int num_classes() const { return static_cast<int>(classes.size()); }
    void validate() const;
    static std::vector<ClassProfile> default_classes();
};

struct SceneObject {
    double x = 0.0;  // world meters
    double y = 0.0;
    double width = 1.0;
    double length = 1.0;
    double vx = 0.0;  // world meters per step
    double vy = 0.0;
    double heading = 0.0;  // world yaw of the length axis
    int class_id = 0;
    Tensor signature;  // [C], unit norm
};

struct SceneState {
    std::vector<SceneObject> objects;
    EgoPose ego;
    double ego_speed = 0.0;
    double ego_yaw_rate = 0.0;
    std::int64_t frame_index = 0;
    std::int64_t scene_id = 0;
    std::uint64_t rng_seed = 0;
};

// One annotated object, expressed in the ego frame of its frame.
struct GroundTruth {
    double x = 0.0;  // ego meters
    double y = 0.0;
    double width = 1.0;
    double length = 1.0;
    double vx = 0.0;  // meters per step, ego axes
    double vy = 0.0;
    int class_id = 0;
    int object_id = 0;

    bool operator==(const GroundTruth&) const = default;
};

struct BevFeature {
    Tensor feat;  // [H, W, C]
    std::int64_t scene_id = 0;
    std::int64_t frame_index = 0;
    EgoPose ego;
};

struct StepResult {
    BevFeature feature;
    std::vector<GroundTruth> ground_truth;
    SceneState next;
};

// Unit-norm class prototypes derived from cfg.world_seed, [num_classes, C].
Tensor class_prototypes(const GeneratorConfig& cfg);

// Places objects with centre separation >= 2 cells. Throws GenerationError
// when placement keeps failing.
SceneState init_scene(const GeneratorConfig& cfg, std::uint64_t seed, std::int64_t scene_id = 0);

// Renders the state in its current ego frame, then advances objects and ego
// by one step.
StepResult step_scene(const GeneratorConfig& cfg, const SceneState& state);

// Noise-free footprint render of a single object into an [H, W, C] grid.
void render_object(const GeneratorConfig& cfg, const EgoPose& ego, const SceneObject& obj, Tensor& feat);

enum class Corruption { none, motion_blur, occlusion };

Corruption corruption_from_string(const std::string& s);
std::string to_string(Corruption c);

BevFeature corrupt(const GeneratorConfig& cfg, const BevFeature& feat, Corruption kind, std::uint64_t seed);

struct Frame {
    BevFeature feature;
    std::vector<GroundTruth> ground_truth;
};

struct Scene {
    std::int64_t scene_id = 0;
    std::uint64_t seed = 0;
    std::vector<Frame> frames;
};

Scene generate_scene(const GeneratorConfig& cfg, std::uint64_t seed, std::int64_t scene_id);
// Scene i uses seed mix_seed(base_seed, i) and scene_id first_scene_id + i.
std::vector<Scene> generate_scenes(const GeneratorConfig& cfg, int count, std::uint64_t base_seed,
                                   std::int64_t first_scene_id = 0);

}  // namespace obev
