#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "onlinebev/geometry.hpp"
#include "onlinebev/scenegen.hpp"
#include "onlinebev/tensor.hpp"

namespace obev {

struct Detection {
    double row = 0.0;  // cell coordinates, sub-cell precise
    double col = 0.0;
    double width = 0.0;
    double length = 0.0;
    double vx = 0.0;
    double vy = 0.0;
    int class_id = 0;
    double score = 0.0;
};

// 3x3 local maxima per class above score_thresh, best first; ties by
// (row, col, class).
std::vector<Detection> decode_detections(const Tensor& heat, const Tensor& reg, double score_thresh, int max_dets);

struct FrameEval {
    std::vector<Detection> detections;
    std::vector<GroundTruth> ground_truth;  // ego frame
};

struct EvalConfig {
    double score_thresh = 0.1;
    int max_dets = 100;
    std::vector<double> thresholds{1.0, 2.0, 4.0};  // cells
    double velocity_threshold = 2.0;  // threshold whose matches feed the velocity error
};

struct MetricsReport {
    std::vector<std::vector<double>> ap;  // [class][threshold], -1 when a class has no ground truth
    double mean_ap = 0.0;
    double velocity_error = 0.0;  // mean over true positives, m/step
    std::int64_t true_positives = 0;
    double alignment_error = 0.0;  // mean |Q_t - Q_hat_t|
    std::int64_t alignment_frames = 0;
};

// 11-point interpolated AP of a ranked list of hit flags against n_gt positives.
double average_precision_11(const std::vector<bool>& hits, std::int64_t n_gt);

// Ground truth outside the grid is ignored. Greedy matching per class in score
// order, each ground truth matched at most once, nearest unmatched first.
MetricsReport evaluate(const std::vector<FrameEval>& frames, const GridSpec& grid, int num_classes,
                       const EvalConfig& cfg = {});

// One row per named condition. AP columns are ap_c<class>_t<threshold>, empty
// for classes without ground truth.
std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows, const EvalConfig& cfg);

}  // namespace obev
