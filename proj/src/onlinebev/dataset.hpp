#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "onlinebev/scenegen.hpp"

namespace obev {

inline constexpr char kDatasetMagic[] = "OBEVDS01";

struct Dataset {
    GeneratorConfig config;
    std::vector<Scene> scenes;
};

// Byte layout (all integers little-endian):
//
//   [0, 8)      "OBEVDS01"
//   [8, 16)     header length N (u64)
//   [16, 16+N)  JSON header:
//                 {"format": "onlinebev-dataset", "version": 1,
//                  "generator": {...}, "scenes": [
//                    {"scene_id", "seed", "frames": [
//                      {"frame_index", "ego": {"x", "y", "yaw"},
//                       "offset": <payload byte offset>,
//                       "ground_truth": [{"x", "y", "width", "length",
//                                         "vx", "vy", "class_id", "object_id"}]}]}]}
//   [16+N, ..)  per frame, H*W*C doubles in [H, W, C] row-major order
std::string serialize_dataset(const Dataset& ds);
Dataset deserialize_dataset(std::string bytes);

void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

nlohmann::json generator_to_json(const GeneratorConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
GeneratorConfig generator_from_json(const nlohmann::json& j);

}  // namespace obev
