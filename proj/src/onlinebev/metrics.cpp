#include "onlinebev/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <tuple>

#include "onlinebev/error.hpp"
#include "onlinebev/heads.hpp"

namespace obev {

std::vector<Detection> decode_detections(const Tensor& heat, const Tensor& reg, double score_thresh, int max_dets)
{
    if (heat.rank() != 3 || reg.rank() != 3 || heat.dim(0) != reg.dim(0) || heat.dim(1) != reg.dim(1) ||
        reg.dim(2) != kRegressionChannels) {
        throw DimensionError("decode_detections: heatmap " + shape_string(heat.shape()) + " vs regression " +
                             shape_string(reg.shape()));
    }
    const std::int64_t rows = heat.dim(0);
    const std::int64_t cols = heat.dim(1);
    const std::int64_t classes = heat.dim(2);
    std::vector<Detection> dets;
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) {
            for (std::int64_t k = 0; k < classes; ++k) {
                const double q = heat.at(i, j, k);
                if (!(q > score_thresh)) continue;
                bool peak = true;
                for (std::int64_t di = -1; di <= 1 && peak; ++di) {
                    for (std::int64_t dj = -1; dj <= 1; ++dj) {
                        const std::int64_t r = i + di;
                        const std::int64_t c = j + dj;
                        if ((di == 0 && dj == 0) || r < 0 || c < 0 || r >= rows || c >= cols) continue;
                        if (heat.at(r, c, k) > q) {
                            peak = false;
                            break;
                        }
                    }
                }
                if (!peak) continue;
                Detection d;
                d.row = static_cast<double>(i) + reg.at(i, j, 0);
                d.col = static_cast<double>(j) + reg.at(i, j, 1);
                d.width = reg.at(i, j, 2);
                d.length = reg.at(i, j, 3);
                d.vx = reg.at(i, j, 4);
                d.vy = reg.at(i, j, 5);
                d.class_id = static_cast<int>(k);
                d.score = q;
                dets.push_back(d);
            }
        }
    }
    // Stable sort keeps the (row, col, class) scan order among equal scores.
    std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
    if (max_dets >= 0 && dets.size() > static_cast<std::size_t>(max_dets)) dets.resize(static_cast<std::size_t>(max_dets));
    return dets;
}

double average_precision_11(const std::vector<bool>& hits, std::int64_t n_gt)
{
    if (n_gt <= 0) return 0.0;
    std::vector<double> precision;
    std::vector<double> recall;
    double tp = 0.0;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        tp += hits[i] ? 1.0 : 0.0;
        precision.push_back(tp / static_cast<double>(i + 1));
        recall.push_back(tp / static_cast<double>(n_gt));
    }
    double ap = 0.0;
    for (int s = 0; s <= 10; ++s) {
        const double r = s / 10.0;
        double best = 0.0;
        for (std::size_t i = 0; i < precision.size(); ++i) {
            if (recall[i] >= r - 1e-12) best = std::max(best, precision[i]);
        }
        ap += best;
    }
    return ap / 11.0;
}

namespace {

struct Candidate {
    std::size_t frame;
    const Detection* det;
};

struct GtCell {
    double row;
    double col;
    const GroundTruth* gt;
};

}  // namespace

MetricsReport evaluate(const std::vector<FrameEval>& frames, const GridSpec& grid, int num_classes, const EvalConfig& cfg)
{
    MetricsReport report;
    report.ap.assign(static_cast<std::size_t>(num_classes), std::vector<double>(cfg.thresholds.size(), -1.0));

    // Ground truth per frame in cell coordinates, inside the grid only.
    std::vector<std::vector<GtCell>> gts(frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f) {
        for (const auto& gt : frames[f].ground_truth) {
            const auto [r, c] = grid.ego_to_cell(gt.x, gt.y);
            if (grid.contains_cell(r, c)) gts[f].push_back({r, c, &gt});
        }
    }

    double ap_sum = 0.0;
    int ap_count = 0;
    double vel_sum = 0.0;
    for (int k = 0; k < num_classes; ++k) {
        std::int64_t n_gt = 0;
        for (const auto& fg : gts) {
            for (const auto& g : fg) n_gt += g.gt->class_id == k ? 1 : 0;
        }
        std::vector<Candidate> cands;
        for (std::size_t f = 0; f < frames.size(); ++f) {
            for (const auto& d : frames[f].detections) {
                if (d.class_id == k) cands.push_back({f, &d});
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
            return std::make_tuple(-a.det->score, a.frame, a.det->row, a.det->col) <
                   std::make_tuple(-b.det->score, b.frame, b.det->row, b.det->col);
        });
        if (n_gt == 0) continue;
        for (std::size_t ti = 0; ti < cfg.thresholds.size(); ++ti) {
            const double thr = cfg.thresholds[ti];
            const bool track_velocity = thr == cfg.velocity_threshold;
            std::vector<std::vector<bool>> used(frames.size());
            for (std::size_t f = 0; f < frames.size(); ++f) used[f].assign(gts[f].size(), false);
            std::vector<bool> hits;
            hits.reserve(cands.size());
            for (const auto& cand : cands) {
                const auto& fg = gts[cand.frame];
                std::size_t best = fg.size();
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t g = 0; g < fg.size(); ++g) {
                    if (used[cand.frame][g] || fg[g].gt->class_id != k) continue;
                    const double d = std::hypot(fg[g].row - cand.det->row, fg[g].col - cand.det->col);
                    if (d <= thr && d < best_d) {
                        best_d = d;
                        best = g;
                    }
                }
                const bool hit = best < fg.size();
                hits.push_back(hit);
                if (hit) {
                    used[cand.frame][best] = true;
                    if (track_velocity) {
                        vel_sum += std::hypot(cand.det->vx - fg[best].gt->vx, cand.det->vy - fg[best].gt->vy);
                        ++report.true_positives;
                    }
                }
            }
            const double ap = average_precision_11(hits, n_gt);
            report.ap[static_cast<std::size_t>(k)][ti] = ap;
            ap_sum += ap;
            ++ap_count;
        }
    }
    report.mean_ap = ap_count > 0 ? ap_sum / ap_count : 0.0;
    report.velocity_error = report.true_positives > 0 ? vel_sum / static_cast<double>(report.true_positives) : 0.0;
    return report;
}

std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows, const EvalConfig& cfg)
{
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    std::string out = "condition,map,velocity_error,true_positives,alignment_error,alignment_frames";
    const std::size_t classes = rows.empty() ? 0 : rows.front().second.ap.size();
    for (std::size_t k = 0; k < classes; ++k) {
        for (double t : cfg.thresholds) out += ",ap_c" + std::to_string(k) + "_t" + num(t);
    }
    out += "\n";
    for (const auto& [name, r] : rows) {
        out += name + "," + num(r.mean_ap) + "," + num(r.velocity_error) + "," + std::to_string(r.true_positives) + "," +
               num(r.alignment_error) + "," + std::to_string(r.alignment_frames);
        for (const auto& per_class : r.ap) {
            for (double ap : per_class) out += "," + (ap < 0 ? std::string() : num(ap));
        }
        out += "\n";
    }
    return out;
}

}  // namespace obev
