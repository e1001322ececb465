#include "onlinebev/ablate.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "onlinebev/binfile.hpp"

namespace obev {

std::uint64_t splits_hash(const Splits& splits)
{
    return fnv1a64(serialize_dataset(splits.train) + serialize_dataset(splits.val));
}

AblationResult run_ablation(const RunConfig& cfg, const Splits& splits, const std::function<void(const AblationRow&)>& on_row)
{
    AblationResult result;
    result.dataset_hash = splits_hash(splits);
    for (std::uint64_t seed : cfg.ablate.seeds) {
        for (const auto& arm : cfg.ablate.arms) {
            const ModelConfig mc = arm_model_config(cfg.model, arm);
            const auto t0 = std::chrono::steady_clock::now();
            TrainResult tr = train(mc, cfg.train, splits.train, seed);
            const auto t1 = std::chrono::steady_clock::now();
            const Model model(mc, splits.val.config.grid, std::move(tr.params));

            AblationRow row;
            row.arm = arm;
            row.seed = seed;
            row.dataset_hash = result.dataset_hash;
            row.parameters = model.params.parameter_count();
            row.train_seconds = std::chrono::duration<double>(t1 - t0).count();
            const MetricsReport clean = evaluate_model(model, splits.val, cfg.eval);
            row.map = clean.mean_ap;
            row.velocity_error = clean.velocity_error;
            row.alignment_error =
                clean.alignment_frames > 0 ? clean.alignment_error : std::numeric_limits<double>::quiet_NaN();
            for (Corruption c : cfg.ablate.corruptions) {
                row.corrupted_map[c] = evaluate_model(model, splits.val, cfg.eval, c, cfg.dataset.base_seed + 2).mean_ap;
            }
            if (on_row) on_row(row);
            result.rows.push_back(std::move(row));
        }
    }
    return result;
}

AblationResult run_ablation(const RunConfig& cfg, const std::function<void(const AblationRow&)>& on_row)
{
    return run_ablation(cfg, make_splits(cfg), on_row);
}

std::string ablation_csv(const AblationResult& result, const std::vector<Corruption>& corruptions)
{
    std::string out = "arm,seed,map";
    for (Corruption c : corruptions) out += ",map_" + to_string(c);
    out += ",velocity_error,alignment_error,parameters,train_seconds,dataset_hash\n";
    char buf[128];
    auto num = [&buf](double v) {
        if (std::isnan(v)) return std::string();
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    for (const auto& row : result.rows) {
        out += row.arm + "," + std::to_string(row.seed) + "," + num(row.map);
        for (Corruption c : corruptions) {
            auto it = row.corrupted_map.find(c);
            out += "," + (it == row.corrupted_map.end() ? std::string() : num(it->second));
        }
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(row.dataset_hash));
        const std::string hash = buf;
        out += "," + num(row.velocity_error) + "," + num(row.alignment_error) + "," + std::to_string(row.parameters) + "," +
               num(row.train_seconds) + "," + hash + "\n";
    }
    return out;
}

}  // namespace obev
