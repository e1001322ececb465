#include "onlinebev/config.hpp"

#include <charconv>

#include "onlinebev/binfile.hpp"
#include "onlinebev/dataset.hpp"
#include "onlinebev/error.hpp"
#include "onlinebev/jsonutil.hpp"

namespace obev {

using nlohmann::json;

void TrainConfig::validate() const
{
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (phase1_epochs < 0 || phase1_epochs > epochs) throw ConfigError("train: phase1_epochs must lie in [0, epochs]");
    if (sequences_per_step < 1) throw ConfigError("train: sequences_per_step must be >= 1");
    if (frames_per_step < 0) throw ConfigError("train: frames_per_step must be >= 0");
    if (!(optimizer.lr > 0)) throw ConfigError("train: lr must be positive");
    if (!(optimizer.weight_decay >= 0)) throw ConfigError("train: weight_decay must be >= 0");
    if (!(loss_weights.cls >= 0 && loss_weights.reg >= 0 && loss_weights.cons >= 0)) {
        throw ConfigError("train: loss weights must be >= 0");
    }
}

void RunConfig::validate() const
{
    generator.validate();
    model.validate();
    train.validate();
    if (dataset.train_scenes < 0 || dataset.val_scenes < 0) throw ConfigError("dataset: scene counts must be >= 0");
    if (!(eval.score_thresh > 0 && eval.score_thresh < 1)) throw ConfigError("eval: score_thresh must lie in (0, 1)");
    if (eval.max_dets < 1) throw ConfigError("eval: max_dets must be >= 1");
    if (eval.thresholds.empty()) throw ConfigError("eval: thresholds must not be empty");
    for (const auto& arm : ablate.arms) arm_model_config(model, arm);
}

namespace {

void read_model(const json& j, ModelConfig& m)
{
    reject_unknown(j,
                   {"method", "frames", "max_frames", "channels", "layers", "heads", "points", "ffn_ratio", "cwa_reduction",
                    "dropout", "mfe", "heat_bias_init"},
                   "model");
    if (auto it = j.find("method"); it != j.end()) m.method = method_from_string(it->get<std::string>());
    read_opt(j, "frames", m.frames);
    read_opt(j, "max_frames", m.max_frames);
    read_opt(j, "channels", m.fusion.channels);
    read_opt(j, "layers", m.fusion.layers);
    read_opt(j, "heads", m.fusion.heads);
    read_opt(j, "points", m.fusion.points);
    read_opt(j, "ffn_ratio", m.fusion.ffn_ratio);
    read_opt(j, "cwa_reduction", m.fusion.cwa_reduction);
    read_opt(j, "dropout", m.fusion.dropout);
    if (auto it = j.find("mfe"); it != j.end()) m.fusion.mfe = mfe_mode_from_string(it->get<std::string>());
    read_opt(j, "heat_bias_init", m.heat_bias_init);
}

void read_train(const json& j, TrainConfig& t)
{
    reject_unknown(j,
                   {"epochs", "phase1_epochs", "lr", "weight_decay", "beta1", "beta2", "eps", "loss_weights", "shuffle",
                    "sequences_per_step", "frames_per_step"},
                   "train");
    read_opt(j, "epochs", t.epochs);
    read_opt(j, "phase1_epochs", t.phase1_epochs);
    read_opt(j, "lr", t.optimizer.lr);
    read_opt(j, "weight_decay", t.optimizer.weight_decay);
    read_opt(j, "beta1", t.optimizer.beta1);
    read_opt(j, "beta2", t.optimizer.beta2);
    read_opt(j, "eps", t.optimizer.eps);
    read_opt(j, "shuffle", t.shuffle);
    read_opt(j, "sequences_per_step", t.sequences_per_step);
    read_opt(j, "frames_per_step", t.frames_per_step);
    if (auto it = j.find("loss_weights"); it != j.end()) {
        reject_unknown(*it, {"cls", "reg", "cons"}, "train.loss_weights");
        read_opt(*it, "cls", t.loss_weights.cls);
        read_opt(*it, "reg", t.loss_weights.reg);
        read_opt(*it, "cons", t.loss_weights.cons);
    }
}

void read_eval(const json& j, EvalConfig& e)
{
    reject_unknown(j, {"score_thresh", "max_dets", "thresholds", "velocity_threshold"}, "eval");
    read_opt(j, "score_thresh", e.score_thresh);
    read_opt(j, "max_dets", e.max_dets);
    read_opt(j, "thresholds", e.thresholds);
    read_opt(j, "velocity_threshold", e.velocity_threshold);
}

void read_ablate(const json& j, AblateConfig& a)
{
    reject_unknown(j, {"seeds", "arms", "corruptions"}, "ablate");
    read_opt(j, "seeds", a.seeds);
    read_opt(j, "arms", a.arms);
    if (auto it = j.find("corruptions"); it != j.end()) {
        a.corruptions.clear();
        for (const auto& c : *it) a.corruptions.push_back(corruption_from_string(c.get<std::string>()));
    }
}

}  // namespace

RunConfig run_config_from_json(const json& j)
{
    RunConfig cfg;
    try {
        reject_unknown(j, {"seed", "generator", "dataset", "model", "train", "eval", "ablate"}, "config");
        read_opt(j, "seed", cfg.seed);
        if (auto it = j.find("generator"); it != j.end()) cfg.generator = generator_from_json(*it);
        if (auto it = j.find("dataset"); it != j.end()) {
            reject_unknown(*it, {"train_scenes", "val_scenes", "base_seed"}, "dataset");
            read_opt(*it, "train_scenes", cfg.dataset.train_scenes);
            read_opt(*it, "val_scenes", cfg.dataset.val_scenes);
            read_opt(*it, "base_seed", cfg.dataset.base_seed);
        }
        if (auto it = j.find("model"); it != j.end()) read_model(*it, cfg.model);
        if (auto it = j.find("train"); it != j.end()) read_train(*it, cfg.train);
        if (auto it = j.find("eval"); it != j.end()) read_eval(*it, cfg.eval);
        if (auto it = j.find("ablate"); it != j.end()) read_ablate(*it, cfg.ablate);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    cfg.model.input_channels = cfg.generator.channels;
    cfg.model.num_classes = cfg.generator.num_classes();
    cfg.validate();
    return cfg;
}

json run_config_to_json(const RunConfig& cfg)
{
    const ModelConfig& m = cfg.model;
    const TrainConfig& t = cfg.train;
    json corruptions = json::array();
    for (auto c : cfg.ablate.corruptions) corruptions.push_back(to_string(c));
    return {
        {"seed", cfg.seed},
        {"generator", generator_to_json(cfg.generator)},
        {"dataset", {{"train_scenes", cfg.dataset.train_scenes}, {"val_scenes", cfg.dataset.val_scenes},
                     {"base_seed", cfg.dataset.base_seed}}},
        {"model", {{"method", to_string(m.method)}, {"frames", m.frames}, {"max_frames", m.max_frames},
                   {"channels", m.fusion.channels}, {"layers", m.fusion.layers}, {"heads", m.fusion.heads},
                   {"points", m.fusion.points}, {"ffn_ratio", m.fusion.ffn_ratio}, {"cwa_reduction", m.fusion.cwa_reduction},
                   {"dropout", m.fusion.dropout}, {"mfe", to_string(m.fusion.mfe)}, {"heat_bias_init", m.heat_bias_init}}},
        {"train", {{"epochs", t.epochs}, {"phase1_epochs", t.phase1_epochs}, {"lr", t.optimizer.lr},
                   {"weight_decay", t.optimizer.weight_decay}, {"beta1", t.optimizer.beta1}, {"beta2", t.optimizer.beta2},
                   {"eps", t.optimizer.eps}, {"shuffle", t.shuffle}, {"sequences_per_step", t.sequences_per_step},
                   {"frames_per_step", t.frames_per_step},
                   {"loss_weights", {{"cls", t.loss_weights.cls}, {"reg", t.loss_weights.reg}, {"cons", t.loss_weights.cons}}}}},
        {"eval", {{"score_thresh", cfg.eval.score_thresh}, {"max_dets", cfg.eval.max_dets},
                  {"thresholds", cfg.eval.thresholds}, {"velocity_threshold", cfg.eval.velocity_threshold}}},
        {"ablate", {{"seeds", cfg.ablate.seeds}, {"arms", cfg.ablate.arms}, {"corruptions", corruptions}}},
    };
}

RunConfig load_run_config(const std::string& path)
{
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return run_config_from_json(j);
}

ModelConfig arm_model_config(const ModelConfig& base, const std::string& arm)
{
    ModelConfig m = base;
    std::string name = arm;
    auto strip = [&name](const std::string& suffix) {
        if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            name.resize(name.size() - suffix.size());
            return true;
        }
        return false;
    };
    std::optional<MfeMode> mfe;
    if (strip("_no_mfe")) mfe = MfeMode::none;
    else if (strip("_diff_cwa")) mfe = MfeMode::diff_cwa;
    else if (strip("_diff")) mfe = MfeMode::diff;

    const std::string bm = "baseline_m";
    if (name.size() > bm.size() && name.compare(0, bm.size(), bm) == 0) {
        int k = 0;
        const char* first = name.data() + bm.size();
        const char* last = name.data() + name.size();
        const auto res = std::from_chars(first, last, k);
        if (res.ec != std::errc{} || res.ptr != last) throw ConfigError("ablate: bad arm name '" + arm + "'");
        m.method = Method::baseline_m;
        m.frames = k;
    } else {
        m.method = method_from_string(name);
    }
    if (mfe) {
        if (!m.uses_mbfnet()) throw ConfigError("ablate: arm '" + arm + "' sets an MFE mode on a method without MBFNet");
        m.fusion.mfe = *mfe;
    }
    m.validate();
    return m;
}

}  // namespace obev
