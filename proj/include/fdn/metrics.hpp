#pragma once

#include <span>

namespace fdn {

enum class MetricKind { MSE, AUC };

double mse(std::span<const double> pred, std::span<const double> labels);

/// Rank-based AUC with ties counted half, O(n log n). Throws
/// UndefinedMetricError when only one class is present.
double auc(std::span<const double> scores, std::span<const double> labels);

/// Percentage gap; negative when the model is worse than the oracle.
/// Throws std::invalid_argument for a zero oracle.
double gap_vs_oracle(double model_metric, double oracle_metric, MetricKind kind);

}  // namespace fdn
