#pragma once

#include <cstdint>
#include <string>

#include "onlinebev/tensor.hpp"

namespace obev {

// Binary PGM (P5), width = columns, height = rows, maxval 255, pixel value
// round(255 * q) with q clamped to [0, 1].
std::string encode_pgm(const Tensor& heat, std::int64_t channel);

// "<scene>_<frame>_<class>.pgm"
std::string heatmap_filename(std::int64_t scene_id, std::int64_t frame_index, std::int64_t class_id);

}  // namespace obev
