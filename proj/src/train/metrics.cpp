#include "fdn/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdn/errors.hpp"

namespace fdn {

double mse(std::span<const double> pred, std::span<const double> labels) {
    if (pred.size() != labels.size()) throw ShapeError("mse: length mismatch");
    if (pred.empty()) throw UndefinedMetricError("mse of an empty sample");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - labels[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

double auc(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size()) throw ShapeError("auc: length mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Twice the number of correctly ordered pairs, so ties stay integral.
    std::uint64_t twice_correct = 0;
    std::uint64_t neg_below = 0, n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::uint64_t pos = 0, neg = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            const double y = labels[order[j]];
            if (y == 1.0) {
                ++pos;
            } else if (y == 0.0) {
                ++neg;
            } else {
                throw DataError("auc labels must be 0 or 1");
            }
            ++j;
        }
        twice_correct += pos * (2 * neg_below + neg);
        neg_below += neg;
        n_pos += pos;
        n_neg += neg;
        i = j;
    }
    if (n_pos == 0 || n_neg == 0) {
        throw UndefinedMetricError("auc is undefined when only one class is present (" + std::to_string(n_pos) +
                                   " positives, " + std::to_string(n_neg) + " negatives)");
    }
    return static_cast<double>(twice_correct) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double gap_vs_oracle(double model_metric, double oracle_metric, MetricKind kind) {
    if (oracle_metric == 0.0) throw std::invalid_argument("gap against a zero oracle metric is undefined");
    const double diff = kind == MetricKind::MSE ? oracle_metric - model_metric : model_metric - oracle_metric;
    return diff / oracle_metric * 100.0;
}

}  // namespace fdn
