#pragma once

#include <string>

#include <json.hpp>

#include "onlinebev/params.hpp"

namespace obev {

inline constexpr char kCheckpointMagic[] = "OBEVCKP1";

struct Checkpoint {
    ParamStore params;
    nlohmann::json meta;  // model configuration, opaque to this module
};

// Header: {"version": 1, "meta": ..., "tensors": [{"name", "shape", "offset"}]}
// followed by each tensor's values in name order. Round trips are bit-exact.
std::string serialize_checkpoint(const ParamStore& params, const nlohmann::json& meta);
Checkpoint deserialize_checkpoint(std::string bytes);

void save_checkpoint(const std::string& path, const ParamStore& params, const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace obev
