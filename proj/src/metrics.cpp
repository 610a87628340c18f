#include "ptri/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ptri/error.hpp"
#include "ptri/rng.hpp"

namespace ptri {

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    if (preds.empty()) throw_data("accuracy: empty input");
    if (preds.size() != labels.size()) throw_data("accuracy: length mismatch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

namespace {

void validate_binary_scores(const std::vector<double>& scores, const std::vector<int>& labels,
                            std::size_t& n_pos, std::size_t& n_neg) {
    if (scores.size() != labels.size()) throw_data("roc: score/label length mismatch");
    if (scores.empty()) throw_data("roc: empty input");
    n_pos = n_neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) throw_data("roc: non-finite score");
        if (labels[i] != 0 && labels[i] != 1) throw_data("roc: labels must be 0 or 1");
        (labels[i] ? n_pos : n_neg) += 1;
    }
    if (n_pos == 0 || n_neg == 0) throw_data("roc: both classes must be present");
}

double auc_of_sorted_sweep(std::vector<std::pair<double, int>>& pairs, std::size_t n_pos,
                           std::size_t n_neg, RocCurve* curve) {
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
        return a.first > b.first;
    });

    if (curve) {
        curve->thresholds.push_back(std::numeric_limits<double>::infinity());
        curve->fpr.push_back(0.0);
        curve->tpr.push_back(0.0);
    }
    double auc = 0.0;
    double prev_fpr = 0.0, prev_tpr = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < pairs.size()) {
        const double score = pairs[i].first;
        while (i < pairs.size() && pairs[i].first == score) {
            (pairs[i].second ? tp : fp) += 1;
            ++i;
        }
        const double cur_fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
        const double cur_tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
        auc += (cur_fpr - prev_fpr) * (cur_tpr + prev_tpr) / 2.0;
        if (curve) {
            curve->thresholds.push_back(score);
            curve->fpr.push_back(cur_fpr);
            curve->tpr.push_back(cur_tpr);
        }
        prev_fpr = cur_fpr;
        prev_tpr = cur_tpr;
    }
    return auc;
}

}  // namespace

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::size_t n_pos, n_neg;
    validate_binary_scores(scores, labels, n_pos, n_neg);

    std::vector<std::pair<double, int>> pairs(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) pairs[i] = {scores[i], labels[i]};

    RocCurve curve;
    curve.auc = auc_of_sorted_sweep(pairs, n_pos, n_neg, &curve);
    curve.ci_low = curve.ci_high = curve.auc;
    return curve;
}

std::pair<double, double> auc_ci(const std::vector<double>& scores, const std::vector<int>& labels,
                                 int n_boot, double level, std::uint64_t seed) {
    std::size_t n_pos, n_neg;
    validate_binary_scores(scores, labels, n_pos, n_neg);
    if (n_pos < 2 || n_neg < 2) throw_data("auc_ci: each class needs at least 2 samples");
    if (n_boot < 1) throw_data("auc_ci: need at least 1 bootstrap resample");
    if (!(level > 0.0 && level < 1.0)) throw_data("auc_ci: level must be in (0, 1)");

    std::vector<std::size_t> pos_idx, neg_idx;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos_idx : neg_idx).push_back(i);

    Rng rng(seed);
    std::vector<double> aucs(static_cast<std::size_t>(n_boot));
    std::vector<std::pair<double, int>> pairs(scores.size());
    for (auto& auc : aucs) {
        std::size_t k = 0;
        for (std::size_t j = 0; j < n_pos; ++j, ++k)
            pairs[k] = {scores[pos_idx[rng.uniform_int(0, n_pos - 1)]], 1};
        for (std::size_t j = 0; j < n_neg; ++j, ++k)
            pairs[k] = {scores[neg_idx[rng.uniform_int(0, n_neg - 1)]], 0};
        auc = auc_of_sorted_sweep(pairs, n_pos, n_neg, nullptr);
    }
    std::sort(aucs.begin(), aucs.end());

    const auto quantile = [&aucs](double q) {
        const double pos = q * static_cast<double>(aucs.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, aucs.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return aucs[lo] * (1.0 - frac) + aucs[hi] * frac;
    };
    const double alpha = (1.0 - level) / 2.0;
    return {quantile(alpha), quantile(1.0 - alpha)};
}

}  // namespace ptri
