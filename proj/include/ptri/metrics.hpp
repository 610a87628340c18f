#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace ptri {

struct RocCurve {
    // Parallel arrays; thresholds descend starting at +infinity so the curve
    // begins at (0,0) and ends at (1,1).
    std::vector<double> thresholds;
    std::vector<double> fpr;
    std::vector<double> tpr;
    double auc = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

// Threshold sweep over unique scores, equal scores grouped into one step;
// area by trapezoid. Binary labels: 1 positive, 0 negative.
RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

// Stratified percentile bootstrap interval for the ROC AUC.
std::pair<double, double> auc_ci(const std::vector<double>& scores, const std::vector<int>& labels,
                                 int n_boot, double level, std::uint64_t seed);

inline std::pair<double, double> auc_ci(const std::vector<double>& scores,
                                        const std::vector<int>& labels, std::uint64_t seed) {
    return auc_ci(scores, labels, 1000, 0.95, seed);
}

}  // namespace ptri
