#include "onlinebev/pgm.hpp"

#include <algorithm>
#include <cmath>

#include "onlinebev/error.hpp"

namespace obev {

std::string encode_pgm(const Tensor& heat, std::int64_t channel)
{
    if (heat.rank() != 3) throw DimensionError("encode_pgm: expected [H, W, C], got " + shape_string(heat.shape()));
    if (channel < 0 || channel >= heat.dim(2)) throw DimensionError("encode_pgm: channel out of range");
    const std::int64_t rows = heat.dim(0);
    const std::int64_t cols = heat.dim(1);
    std::string out = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < cols; ++c) {
            const double q = std::clamp(heat.at(r, c, channel), 0.0, 1.0);
            out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * q))));
        }
    }
    return out;
}

std::string heatmap_filename(std::int64_t scene_id, std::int64_t frame_index, std::int64_t class_id)
{
    return std::to_string(scene_id) + "_" + std::to_string(frame_index) + "_" + std::to_string(class_id) + ".pgm";
}

}  // namespace obev
