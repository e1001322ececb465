#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "onlinebev/geometry.hpp"
#include "onlinebev/ops.hpp"
#include "onlinebev/params.hpp"
#include "onlinebev/rng.hpp"
#include "onlinebev/tape.hpp"

namespace obev {

// Everything a forward pass needs besides its inputs.
struct Context {
    Tape& tape;
    const ParamStore& params;
    Mode mode = Mode::infer;
    Rng* rng = nullptr;  // dropout stream, train mode only

    Var p(std::string_view name) const { return tape.param(params, name); }
};

// How the motion context is formed before offset/weight prediction.
//   none     - the target query itself (plain deformable attention)
//   diff     - FC(target - historical)
//   diff_cwa - CWA(FC(target - historical))
enum class MfeMode { none, diff, diff_cwa };

MfeMode mfe_mode_from_string(const std::string& s);
std::string to_string(MfeMode m);

struct FusionConfig {
    int channels = 32;
    int layers = 3;
    int heads = 4;
    int points = 4;
    int ffn_ratio = 2;
    int cwa_reduction = 4;
    double dropout = 0.1;
    MfeMode mfe = MfeMode::diff_cwa;

    void validate() const;
};

struct QueryPair {
    Var target;      // q_t^(l)
    Var historical;  // q_{t-1}^(l)
    int layer = 0;
};

struct MotionFeature {
    Var m;  // [H, W, C]
};

struct DeformParams {
    Var offsets;  // [H, W, heads, K, 2], cell units
    Var weights;  // [H, W, heads, K], simplex over K
};

struct HistoricalUpdate {
    Var q_hat;      // LN(dropout(z) + q_hist)
    Var q_hist_next;
};

struct MbfnetOutput {
    Var fused;    // H_t
    Var aligned;  // H_hat_t
};

// Fan-in scaled uniform init, U(-sqrt(3/fan_in), sqrt(3/fan_in)), for W and b.
void add_linear_params(ParamStore& params, const std::string& prefix, int in, int out, Rng& rng);
void add_zero_linear_params(ParamStore& params, const std::string& prefix, int in, int out);
// [blocks*C, C] map whose first C x C block is the identity and the rest zero;
// bias zero. relu of it passes a non-negative first input straight through.
void add_passthrough_params(ParamStore& params, const std::string& prefix, int channels, int blocks);
void add_layer_norm_params(ParamStore& params, const std::string& prefix, int channels);
Var apply_linear(const Context& ctx, const std::string& prefix, Var x);
Var apply_layer_norm(const Context& ctx, const std::string& prefix, Var x);

std::string layer_prefix(const std::string& base, int layer);

// Parameters of every MBFNet layer under "<base>.l<k>.". Offset heads start at
// zero and each FFN2 starts as a pass-through of the target query.
void init_mbfnet_params(ParamStore& params, const FusionConfig& cfg, Rng& rng, const std::string& base = "mbf");

// Squeeze-excite gate: x * sigmoid(fc2(relu(fc1(mean_hw(x))))).
Var cwa(const Context& ctx, const std::string& prefix, Var x);
MotionFeature mfe_forward(const Context& ctx, const FusionConfig& cfg, const std::string& prefix, const QueryPair& q);
DeformParams predict_deform(const Context& ctx, const FusionConfig& cfg, const std::string& prefix, const MotionFeature& m);
// Single-scale deformable attention with reference points at cell centres,
// query = motion feature, value = historical query.
Var deform_attn(const Context& ctx, const FusionConfig& cfg, const std::string& prefix, const MotionFeature& m, Var value);
HistoricalUpdate update_historical(const Context& ctx, const FusionConfig& cfg, const std::string& prefix, Var q_hist, Var z);
// relu(linear(concat(q_tgt, q_hat))), 2C -> C.
Var fuse_target(const Context& ctx, const std::string& prefix, Var q_tgt, Var q_hat);
MbfnetOutput mbfnet_forward(const Context& ctx, const FusionConfig& cfg, Var features, Var history,
                            const std::string& base = "mbf");

// Single-slot store of the last fused feature. Holds plain tensors, so the
// stored copy has no path back to any tape.
class MemoryBank {
public:
    bool empty() const noexcept { return !stored_.has_value(); }
    std::int64_t scene_id() const noexcept { return scene_id_; }
    const EgoPose& pose() const noexcept { return pose_; }
    const std::optional<Tensor>& stored() const noexcept { return stored_; }

    void write(const Tensor& fused, const EgoPose& pose, std::int64_t scene_id);
    void reset() { stored_.reset(); }

private:
    std::optional<Tensor> stored_;
    EgoPose pose_;
    std::int64_t scene_id_ = -1;
};

// Zero tensor at scene start or scene change, otherwise the stored feature
// warped into the current ego frame.
Tensor memory_read(const MemoryBank& bank, std::int64_t scene_id, const EgoPose& cur_pose, const GridSpec& grid,
                   std::int64_t channels);
void memory_write(MemoryBank& bank, Var fused, const EgoPose& pose, std::int64_t scene_id);

// Parallel fusion baseline: relu(linear(concat(feats), K*C -> C)), initialised
// as a pass-through of the current frame.
void init_parallel_params(ParamStore& params, int channels, int frames, Rng& rng, const std::string& prefix = "pf");
Var parallel_fusion_baseline(const Context& ctx, const std::string& prefix, const std::vector<Var>& feats, int max_frames);

}  // namespace obev
