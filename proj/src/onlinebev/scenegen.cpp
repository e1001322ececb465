#include "onlinebev/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "onlinebev/error.hpp"
#include "onlinebev/rng.hpp"

namespace obev {

namespace {

constexpr int kPlacementRetries = 1000;
constexpr double kMinSeparationCells = 2.0;

Tensor unit(Tensor v)
{
    double n = 0.0;
    for (double x : v.values()) n += x * x;
    n = std::sqrt(n);
    if (n == 0.0) {
        v[0] = 1.0;
        return v;
    }
    for (auto& x : v.values()) x /= n;
    return v;
}

}  // namespace

std::vector<ClassProfile> GeneratorConfig::default_classes()
{
    return {
        {1.8, 4.0, 0.4, 0.9},    // vehicle
        {0.8, 0.8, 0.05, 0.25},  // pedestrian
        {0.6, 2.0, 0.0, 0.0},    // barrier
    };
}

void GeneratorConfig::validate() const
{
    grid.validate();
    if (channels < 1) throw ConfigError("generator: channels must be >= 1");
    if (frames < 1) throw ConfigError("generator: frames must be >= 1");
    if (min_objects < 1 || max_objects < min_objects) {
        throw ConfigError("generator: need 1 <= min_objects <= max_objects");
    }
    if (classes.empty()) throw ConfigError("generator: at least one class profile required");
    for (const auto& c : classes) {
        if (!(c.width > 0 && c.length > 0)) throw ConfigError("generator: class sizes must be positive");
        if (c.min_speed < 0 || c.max_speed < c.min_speed) throw ConfigError("generator: bad class speed range");
    }
    if (noise_std < 0) throw ConfigError("generator: noise_std must be >= 0");
    if (!(footprint_scale > 0)) throw ConfigError("generator: footprint_scale must be positive");
    if (blur_len < 1) throw ConfigError("generator: blur_len must be >= 1");
    if (!(occ_frac >= 0 && occ_frac <= 1)) throw ConfigError("generator: occ_frac must be in [0, 1]");
    if (ego_speed_min < 0 || ego_speed_max < ego_speed_min) throw ConfigError("generator: bad ego speed range");
}

Tensor class_prototypes(const GeneratorConfig& cfg)
{
    Rng rng(mix_seed(cfg.world_seed, 0x70726f746fULL));
    Tensor out(Shape{cfg.num_classes(), cfg.channels});
    for (int k = 0; k < cfg.num_classes(); ++k) {
        Tensor v = unit(normal_tensor(Shape{cfg.channels}, rng));
        std::copy(v.values().begin(), v.values().end(), out.data() + k * cfg.channels);
    }
    return out;
}

SceneState init_scene(const GeneratorConfig& cfg, std::uint64_t seed, std::int64_t scene_id)
{
    cfg.validate();
    Rng rng(seed);
    const Tensor protos = class_prototypes(cfg);
    const GridSpec& g = cfg.grid;

    SceneState s;
    s.scene_id = scene_id;
    s.rng_seed = seed;
    s.ego = EgoPose::make(uniform(rng, -50, 50), uniform(rng, -50, 50), uniform(rng, -std::numbers::pi, std::numbers::pi));
    s.ego_speed = uniform(rng, cfg.ego_speed_min, cfg.ego_speed_max);
    s.ego_yaw_rate = uniform(rng, -cfg.ego_yaw_rate_max, cfg.ego_yaw_rate_max);

    const int count = cfg.min_objects + static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.max_objects - cfg.min_objects + 1));
    std::vector<std::pair<double, double>> placed;  // cells
    const double margin = 1.0;
    for (int n = 0; n < count; ++n) {
        bool ok = false;
        double row = 0.0;
        double col = 0.0;
        for (int attempt = 0; attempt < kPlacementRetries && !ok; ++attempt) {
            row = uniform(rng, margin, static_cast<double>(g.rows - 1) - margin);
            col = uniform(rng, margin, static_cast<double>(g.cols - 1) - margin);
            ok = std::all_of(placed.begin(), placed.end(), [&](const auto& p) {
                return std::hypot(p.first - row, p.second - col) >= kMinSeparationCells;
            });
        }
        if (!ok) {
            throw GenerationError("could not place object " + std::to_string(n) + " of " + std::to_string(count) +
                                  " after " + std::to_string(kPlacementRetries) + " attempts");
        }
        placed.emplace_back(row, col);

        SceneObject obj;
        obj.class_id = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.num_classes()));
        const ClassProfile& prof = cfg.classes[static_cast<std::size_t>(obj.class_id)];
        obj.width = prof.width * uniform(rng, 0.9, 1.1);
        obj.length = prof.length * uniform(rng, 0.9, 1.1);
        const double speed = uniform(rng, prof.min_speed, prof.max_speed);
        const double dir = uniform(rng, -std::numbers::pi, std::numbers::pi);
        obj.vx = speed * std::cos(dir);
        obj.vy = speed * std::sin(dir);
        obj.heading = dir;
        const auto [ex, ey] = g.cell_to_ego(row, col);
        std::tie(obj.x, obj.y) = s.ego.apply(ex, ey);

        Tensor sig(Shape{cfg.channels});
        for (int c = 0; c < cfg.channels; ++c) {
            sig[static_cast<std::size_t>(c)] =
                protos[static_cast<std::size_t>(obj.class_id * cfg.channels + c)] + cfg.signature_jitter * normal(rng) / std::sqrt(static_cast<double>(cfg.channels));
        }
        obj.signature = unit(std::move(sig));
        s.objects.push_back(std::move(obj));
    }
    return s;
}

void render_object(const GeneratorConfig& cfg, const EgoPose& ego, const SceneObject& obj, Tensor& feat)
{
    const GridSpec& g = cfg.grid;
    const auto [ox, oy] = pose_inverse(ego).apply(obj.x, obj.y);
    const double rel = obj.heading - ego.yaw;
    const double c = std::cos(rel);
    const double s = std::sin(rel);
    const double inv_l = 1.0 / (cfg.footprint_scale * obj.length);
    const double inv_w = 1.0 / (cfg.footprint_scale * obj.width);
    const auto ch = static_cast<std::int64_t>(cfg.channels);
    for (std::int64_t i = 0; i < g.rows; ++i) {
        for (std::int64_t j = 0; j < g.cols; ++j) {
            const auto [ex, ey] = g.cell_to_ego(static_cast<double>(i), static_cast<double>(j));
            const double dx = ex - ox;
            const double dy = ey - oy;
            const double u = (c * dx + s * dy) * inv_l;
            const double v = (-s * dx + c * dy) * inv_w;
            const double a = std::exp(-0.5 * (u * u + v * v));
            if (a == 0.0) continue;
            double* dst = feat.data() + (i * g.cols + j) * ch;
            for (std::int64_t k = 0; k < ch; ++k) dst[k] += a * obj.signature[static_cast<std::size_t>(k)];
        }
    }
}

StepResult step_scene(const GeneratorConfig& cfg, const SceneState& state)
{
    const GridSpec& g = cfg.grid;
    StepResult out;
    out.feature.scene_id = state.scene_id;
    out.feature.frame_index = state.frame_index;
    out.feature.ego = state.ego;
    out.feature.feat = Tensor(Shape{g.rows, g.cols, cfg.channels});

    const EgoPose inv = pose_inverse(state.ego);
    const double cy = std::cos(-state.ego.yaw);
    const double sy = std::sin(-state.ego.yaw);
    for (std::size_t n = 0; n < state.objects.size(); ++n) {
        const SceneObject& obj = state.objects[n];
        const auto [ex, ey] = inv.apply(obj.x, obj.y);
        const auto [row, col] = g.ego_to_cell(ex, ey);
        if (!g.contains_cell(row, col)) continue;
        render_object(cfg, state.ego, obj, out.feature.feat);
        GroundTruth gt;
        gt.x = ex;
        gt.y = ey;
        gt.width = obj.width;
        gt.length = obj.length;
        gt.vx = cy * obj.vx - sy * obj.vy;
        gt.vy = sy * obj.vx + cy * obj.vy;
        gt.class_id = obj.class_id;
        gt.object_id = static_cast<int>(n);
        out.ground_truth.push_back(gt);
    }
    if (cfg.noise_std > 0) {
        Rng noise(mix_seed(state.rng_seed, static_cast<std::uint64_t>(state.frame_index) + 0x6e6f697365ULL));
        for (auto& v : out.feature.feat.values()) v += cfg.noise_std * normal(noise);
    }

    out.next = state;
    for (auto& obj : out.next.objects) {
        obj.x += obj.vx;
        obj.y += obj.vy;
    }
    out.next.ego = pose_compose(state.ego, EgoPose::make(state.ego_speed, 0.0, state.ego_yaw_rate));
    out.next.frame_index = state.frame_index + 1;
    return out;
}

Corruption corruption_from_string(const std::string& s)
{
    if (s == "none") return Corruption::none;
    if (s == "motion_blur") return Corruption::motion_blur;
    if (s == "occlusion") return Corruption::occlusion;
    throw ConfigError("unknown corruption '" + s + "' (expected none, motion_blur or occlusion)");
}

std::string to_string(Corruption c)
{
    switch (c) {
    case Corruption::none: return "none";
    case Corruption::motion_blur: return "motion_blur";
    case Corruption::occlusion: return "occlusion";
    }
    return "none";
}

BevFeature corrupt(const GeneratorConfig& cfg, const BevFeature& feat, Corruption kind, std::uint64_t seed)
{
    BevFeature out = feat;
    Rng rng(seed);
    const auto rows = feat.feat.dim(0);
    const auto cols = feat.feat.dim(1);
    const auto ch = feat.feat.dim(2);
    switch (kind) {
    case Corruption::none: break;
    case Corruption::motion_blur: {
        if (cfg.blur_len <= 1) break;
        const double theta = uniform(rng, -std::numbers::pi, std::numbers::pi);
        const double dr = std::cos(theta);
        const double dc = std::sin(theta);
        const double half = 0.5 * (cfg.blur_len - 1);
        std::vector<double> sample(static_cast<std::size_t>(ch));
        out.feat.fill(0.0);
        for (std::int64_t i = 0; i < rows; ++i) {
            for (std::int64_t j = 0; j < cols; ++j) {
                double* dst = out.feat.data() + (i * cols + j) * ch;
                for (int k = 0; k < cfg.blur_len; ++k) {
                    const double s = k - half;
                    bilinear_read(feat.feat, i + s * dr, j + s * dc, sample.data());
                    for (std::int64_t c = 0; c < ch; ++c) dst[c] += sample[static_cast<std::size_t>(c)];
                }
                for (std::int64_t c = 0; c < ch; ++c) dst[c] /= cfg.blur_len;
            }
        }
        break;
    }
    case Corruption::occlusion: {
        const double area = cfg.occ_frac * static_cast<double>(rows * cols);
        if (area <= 0) break;
        const double aspect = std::exp(uniform(rng, -0.5, 0.5));
        auto h = static_cast<std::int64_t>(std::llround(std::sqrt(area * aspect)));
        h = std::clamp<std::int64_t>(h, 1, rows);
        auto w = static_cast<std::int64_t>(std::llround(area / static_cast<double>(h)));
        w = std::clamp<std::int64_t>(w, 1, cols);
        if (static_cast<double>(h * w) < area && w == cols) {
            h = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil(area / static_cast<double>(w))), 1, rows);
        }
        const auto r0 = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(rows - h + 1));
        const auto c0 = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(cols - w + 1));
        for (std::int64_t i = r0; i < r0 + h; ++i) {
            std::fill_n(out.feat.data() + (i * cols + c0) * ch, w * ch, 0.0);
        }
        break;
    }
    }
    return out;
}

Scene generate_scene(const GeneratorConfig& cfg, std::uint64_t seed, std::int64_t scene_id)
{
    Scene scene;
    scene.scene_id = scene_id;
    scene.seed = seed;
    SceneState state = init_scene(cfg, seed, scene_id);
    for (int f = 0; f < cfg.frames; ++f) {
        StepResult r = step_scene(cfg, state);
        scene.frames.push_back({std::move(r.feature), std::move(r.ground_truth)});
        state = std::move(r.next);
    }
    return scene;
}

std::vector<Scene> generate_scenes(const GeneratorConfig& cfg, int count, std::uint64_t base_seed,
                                   std::int64_t first_scene_id)
{
    std::vector<Scene> scenes;
    scenes.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        scenes.push_back(generate_scene(cfg, mix_seed(base_seed, static_cast<std::uint64_t>(i)), first_scene_id + i));
    }
    return scenes;
}

}  // namespace obev
