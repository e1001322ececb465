#include "onlinebev/dataset.hpp"

#include "onlinebev/binfile.hpp"
#include "onlinebev/error.hpp"
#include "onlinebev/jsonutil.hpp"

namespace obev {

using nlohmann::json;

json generator_to_json(const GeneratorConfig& cfg)
{
    json classes = json::array();
    for (const auto& c : cfg.classes) {
        classes.push_back({{"width", c.width}, {"length", c.length}, {"min_speed", c.min_speed}, {"max_speed", c.max_speed}});
    }
    return {
        {"grid", {{"rows", cfg.grid.rows}, {"cols", cfg.grid.cols}, {"cell_size", cfg.grid.cell_size},
                  {"origin_x", cfg.grid.origin_x}, {"origin_y", cfg.grid.origin_y}}},
        {"channels", cfg.channels},
        {"frames", cfg.frames},
        {"min_objects", cfg.min_objects},
        {"max_objects", cfg.max_objects},
        {"noise_std", cfg.noise_std},
        {"signature_jitter", cfg.signature_jitter},
        {"footprint_scale", cfg.footprint_scale},
        {"ego_speed_min", cfg.ego_speed_min},
        {"ego_speed_max", cfg.ego_speed_max},
        {"ego_yaw_rate_max", cfg.ego_yaw_rate_max},
        {"blur_len", cfg.blur_len},
        {"occ_frac", cfg.occ_frac},
        {"world_seed", cfg.world_seed},
        {"classes", classes},
    };
}

GeneratorConfig generator_from_json(const json& j)
{
    GeneratorConfig cfg;
    try {
        reject_unknown(j,
                       {"grid", "channels", "frames", "min_objects", "max_objects", "noise_std", "signature_jitter",
                        "footprint_scale", "ego_speed_min", "ego_speed_max", "ego_yaw_rate_max", "blur_len", "occ_frac",
                        "world_seed", "classes"},
                       "generator");
        if (auto it = j.find("grid"); it != j.end()) {
            reject_unknown(*it, {"rows", "cols", "cell_size", "origin_x", "origin_y"}, "generator.grid");
            std::int64_t rows = cfg.grid.rows;
            std::int64_t cols = cfg.grid.cols;
            double cs = cfg.grid.cell_size;
            read_opt(*it, "rows", rows);
            read_opt(*it, "cols", cols);
            read_opt(*it, "cell_size", cs);
            cfg.grid = GridSpec::centered(rows, cols, cs);
            read_opt(*it, "origin_x", cfg.grid.origin_x);
            read_opt(*it, "origin_y", cfg.grid.origin_y);
        }
        read_opt(j, "channels", cfg.channels);
        read_opt(j, "frames", cfg.frames);
        read_opt(j, "min_objects", cfg.min_objects);
        read_opt(j, "max_objects", cfg.max_objects);
        read_opt(j, "noise_std", cfg.noise_std);
        read_opt(j, "signature_jitter", cfg.signature_jitter);
        read_opt(j, "footprint_scale", cfg.footprint_scale);
        read_opt(j, "ego_speed_min", cfg.ego_speed_min);
        read_opt(j, "ego_speed_max", cfg.ego_speed_max);
        read_opt(j, "ego_yaw_rate_max", cfg.ego_yaw_rate_max);
        read_opt(j, "blur_len", cfg.blur_len);
        read_opt(j, "occ_frac", cfg.occ_frac);
        read_opt(j, "world_seed", cfg.world_seed);
        if (auto it = j.find("classes"); it != j.end()) {
            cfg.classes.clear();
            for (const auto& c : *it) {
                reject_unknown(c, {"width", "length", "min_speed", "max_speed"}, "generator.classes[]");
                ClassProfile p;
                read_opt(c, "width", p.width);
                read_opt(c, "length", p.length);
                read_opt(c, "min_speed", p.min_speed);
                read_opt(c, "max_speed", p.max_speed);
                cfg.classes.push_back(p);
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("generator: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string serialize_dataset(const Dataset& ds)
{
    BinWriter writer(kDatasetMagic);
    json scenes = json::array();
    for (const auto& scene : ds.scenes) {
        json frames = json::array();
        for (const auto& fr : scene.frames) {
            json gts = json::array();
            for (const auto& gt : fr.ground_truth) {
                gts.push_back({{"x", gt.x}, {"y", gt.y}, {"width", gt.width}, {"length", gt.length}, {"vx", gt.vx},
                               {"vy", gt.vy}, {"class_id", gt.class_id}, {"object_id", gt.object_id}});
            }
            const auto offset = writer.append(fr.feature.feat.values());
            frames.push_back({{"frame_index", fr.feature.frame_index},
                              {"ego", {{"x", fr.feature.ego.x}, {"y", fr.feature.ego.y}, {"yaw", fr.feature.ego.yaw}}},
                              {"offset", offset},
                              {"ground_truth", gts}});
        }
        scenes.push_back({{"scene_id", scene.scene_id}, {"seed", scene.seed}, {"frames", frames}});
    }
    return writer.finish(
        {{"format", "onlinebev-dataset"}, {"version", 1}, {"generator", generator_to_json(ds.config)}, {"scenes", scenes}});
}

Dataset deserialize_dataset(std::string bytes)
{
    const BinFile file = parse_bin(std::move(bytes), kDatasetMagic, "dataset");
    Dataset ds;
    const json& h = file.header;
    if (h.value("format", "") != "onlinebev-dataset" || h.value("version", 0) != 1) {
        throw ParseError("dataset: unsupported format or version");
    }
    try {
        ds.config = generator_from_json(h.at("generator"));
    } catch (const Error& e) {
        throw ParseError(std::string("dataset: bad generator header: ") + e.what());
    } catch (const json::exception& e) {
        throw ParseError(std::string("dataset: bad generator header: ") + e.what());
    }
    const Shape shape{ds.config.grid.rows, ds.config.grid.cols, ds.config.channels};
    const json scenes = h.value("scenes", json::array());
    for (std::size_t si = 0; si < scenes.size(); ++si) {
        const json& sj = scenes[si];
        Scene scene;
        std::size_t fi = 0;
        try {
            scene.scene_id = sj.at("scene_id").get<std::int64_t>();
            scene.seed = sj.at("seed").get<std::uint64_t>();
            const json& frames = sj.at("frames");
            for (fi = 0; fi < frames.size(); ++fi) {
                const json& fj = frames[fi];
                Frame fr;
                fr.feature.scene_id = scene.scene_id;
                fr.feature.frame_index = fj.at("frame_index").get<std::int64_t>();
                const json& ego = fj.at("ego");
                fr.feature.ego = {ego.at("x").get<double>(), ego.at("y").get<double>(), ego.at("yaw").get<double>()};
                for (const auto& g : fj.at("ground_truth")) {
                    GroundTruth gt;
                    gt.x = g.at("x").get<double>();
                    gt.y = g.at("y").get<double>();
                    gt.width = g.at("width").get<double>();
                    gt.length = g.at("length").get<double>();
                    gt.vx = g.at("vx").get<double>();
                    gt.vy = g.at("vy").get<double>();
                    gt.class_id = g.at("class_id").get<int>();
                    gt.object_id = g.at("object_id").get<int>();
                    fr.ground_truth.push_back(gt);
                }
                fr.feature.feat = Tensor(shape);
                if (!read_doubles(file, fj.at("offset").get<std::uint64_t>(), fr.feature.feat.size(), fr.feature.feat.data())) {
                    throw ParseError("truncated feature block");
                }
                scene.frames.push_back(std::move(fr));
            }
        } catch (const std::exception& e) {
            throw ParseError("dataset: scene index " + std::to_string(si) + " (scene_id " + std::to_string(scene.scene_id) +
                             "), frame " + std::to_string(fi) + ": " + e.what());
        }
        ds.scenes.push_back(std::move(scene));
    }
    return ds;
}

void write_dataset(const Dataset& ds, const std::string& path)
{
    write_file(path, serialize_dataset(ds));
}

Dataset read_dataset(const std::string& path)
{
    return deserialize_dataset(read_file(path));
}

}  // namespace obev
