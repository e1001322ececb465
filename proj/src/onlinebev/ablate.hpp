#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "onlinebev/config.hpp"
#include "onlinebev/train.hpp"

namespace obev {

struct AblationRow {
    std::string arm;
    std::uint64_t seed = 0;
    double map = 0.0;
    std::map<Corruption, double> corrupted_map;
    double velocity_error = 0.0;
    double alignment_error = 0.0;  // NaN for arms without an aligned history
    std::size_t parameters = 0;
    double train_seconds = 0.0;
    std::uint64_t dataset_hash = 0;
};

struct AblationResult {
    std::vector<AblationRow> rows;
    std::uint64_t dataset_hash = 0;
};

// FNV-1a over the serialized train and validation splits.
std::uint64_t splits_hash(const Splits& splits);

// Every (arm, seed) pair trains on the same splits and is evaluated on the
// clean validation split and on each configured corruption of it.
AblationResult run_ablation(const RunConfig& cfg, const Splits& splits,
                            const std::function<void(const AblationRow&)>& on_row = {});
AblationResult run_ablation(const RunConfig& cfg, const std::function<void(const AblationRow&)>& on_row = {});

std::string ablation_csv(const AblationResult& result, const std::vector<Corruption>& corruptions);

}  // namespace obev
