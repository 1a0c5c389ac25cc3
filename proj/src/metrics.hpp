#pragma once

#include <vector>

#include "jsonio.hpp"
#include "netcore.hpp"

namespace projpost {

struct PredictionRecord {
    Vec probabilities;  // simplex vector over classes
    int label = 0;
    double ood_score = 0.0;
};

struct MetricsReport {
    double confidence = 0.0;
    double accuracy = 0.0;
    double nll = 0.0;
    double brier = 0.0;
    double ece = 0.0;
    double mce = 0.0;
    int bin_count = 0;
    std::ptrdiff_t n = 0;

    Json to_json() const;
};

// Confidence/accuracy/NLL/Brier plus equal-width-bin ECE and MCE.
// Probabilities are floored at 1e-12 inside the NLL; argmax ties resolve to
// the lowest class index. Uses compensated summation, so the result is
// independent of record order.
MetricsReport classification_metrics(const std::vector<PredictionRecord>& records, int bins);

// P(random out-score > random in-score), ties counted 1/2; exact rank-based
// computation, invariant under strictly monotone score transforms.
double auroc(const std::vector<double>& scores_in, const std::vector<double>& scores_out);

struct RegressionBandStats {
    double rmse = 0.0;
    double mean_predictive_sd = 0.0;
};

RegressionBandStats regression_band_stats(const std::vector<double>& means,
                                          const std::vector<double>& variances,
                                          const std::vector<double>& targets);

}  // namespace projpost
