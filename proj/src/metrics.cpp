#include "metrics.hpp"

#include <algorithm>
#include <cmath>

namespace projpost {

namespace {

constexpr double kProbFloor = 1e-12;

int argmax_lowest(const Vec& p) {
    int best = 0;
    for (int c = 1; c < p.size(); ++c)
        if (p[c] > p[best]) best = c;
    return best;
}

}  // namespace

Json MetricsReport::to_json() const {
    return Json{{"confidence", confidence}, {"accuracy", accuracy}, {"nll", nll},
                {"brier", brier},           {"ece", ece},           {"mce", mce},
                {"bin_count", bin_count},   {"n", n}};
}

MetricsReport classification_metrics(const std::vector<PredictionRecord>& records, int bins) {
    if (records.empty()) throw ConfigError("classification_metrics: no records");
    if (bins < 1) throw ConfigError("classification_metrics: bins must be >= 1");

    const std::ptrdiff_t n = std::ptrdiff_t(records.size());
    KahanSum conf_sum, acc_sum, nll_sum, brier_sum;
    std::vector<KahanSum> bin_conf(static_cast<size_t>(bins)), bin_acc(static_cast<size_t>(bins));
    std::vector<std::ptrdiff_t> bin_n(size_t(bins), 0);

    for (const PredictionRecord& rec : records) {
        if (rec.probabilities.size() < 1) throw ShapeError("record without probabilities");
        if (rec.label < 0 || rec.label >= rec.probabilities.size())
            throw ConfigError("record label out of range");
        if (rec.probabilities.minCoeff() < -1e-9 ||
            std::abs(rec.probabilities.sum() - 1.0) > 1e-9)
            throw NumericError("record probabilities are not a simplex vector");

        const int pred = argmax_lowest(rec.probabilities);
        const double conf = rec.probabilities[pred];
        const double correct = pred == rec.label ? 1.0 : 0.0;
        conf_sum.add(conf);
        acc_sum.add(correct);
        nll_sum.add(-std::log(std::max(rec.probabilities[rec.label], kProbFloor)));
        double brier = 0.0;
        for (int c = 0; c < rec.probabilities.size(); ++c) {
            const double d = rec.probabilities[c] - (c == rec.label ? 1.0 : 0.0);
            brier += d * d;
        }
        brier_sum.add(brier);

        int bin = int(conf * bins);
        bin = std::clamp(bin, 0, bins - 1);  // confidence 1.0 lands in the top bin
        bin_conf[size_t(bin)].add(conf);
        bin_acc[size_t(bin)].add(correct);
        ++bin_n[size_t(bin)];
    }

    MetricsReport report;
    report.n = n;
    report.bin_count = bins;
    report.confidence = conf_sum.value() / double(n);
    report.accuracy = acc_sum.value() / double(n);
    report.nll = nll_sum.value() / double(n);
    report.brier = brier_sum.value() / double(n);

    KahanSum ece;
    double mce = 0.0;
    for (int b = 0; b < bins; ++b) {
        if (bin_n[size_t(b)] == 0) continue;
        const double nb = double(bin_n[size_t(b)]);
        const double gap = std::abs(bin_acc[size_t(b)].value() / nb - bin_conf[size_t(b)].value() / nb);
        ece.add(nb / double(n) * gap);
        mce = std::max(mce, gap);
    }
    report.ece = ece.value();
    report.mce = mce;
    return report;
}

double auroc(const std::vector<double>& scores_in, const std::vector<double>& scores_out) {
    if (scores_in.empty() || scores_out.empty()) throw ConfigError("auroc: empty score list");
    // Mann-Whitney with average ranks for ties.
    struct Entry {
        double score;
        bool is_out;
    };
    std::vector<Entry> all;
    all.reserve(scores_in.size() + scores_out.size());
    for (double s : scores_in) {
        if (!std::isfinite(s)) throw NumericError("auroc: non-finite score");
        all.push_back({s, false});
    }
    for (double s : scores_out) {
        if (!std::isfinite(s)) throw NumericError("auroc: non-finite score");
        all.push_back({s, true});
    }
    std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

    double rank_sum_out = 0.0;
    size_t i = 0;
    while (i < all.size()) {
        size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        const double avg_rank = 0.5 * (double(i + 1) + double(j));  // 1-based, tie-averaged
        for (size_t t = i; t < j; ++t)
            if (all[t].is_out) rank_sum_out += avg_rank;
        i = j;
    }
    const double n_out = double(scores_out.size());
    const double n_in = double(scores_in.size());
    return (rank_sum_out - n_out * (n_out + 1.0) / 2.0) / (n_in * n_out);
}

RegressionBandStats regression_band_stats(const std::vector<double>& means,
                                          const std::vector<double>& variances,
                                          const std::vector<double>& targets) {
    if (means.size() != targets.size() || means.size() != variances.size() || means.empty())
        throw ShapeError("regression_band_stats: length mismatch");
    KahanSum sq, sd;
    for (size_t i = 0; i < means.size(); ++i) {
        const double d = means[i] - targets[i];
        sq.add(d * d);
        sd.add(std::sqrt(std::max(0.0, variances[i])));
    }
    RegressionBandStats stats;
    stats.rmse = std::sqrt(sq.value() / double(means.size()));
    stats.mean_predictive_sd = sd.value() / double(means.size());
    return stats;
}

}  // namespace projpost
