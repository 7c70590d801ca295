#ifndef DOWNSCALER_EVAL_METRICS_HPP
#define DOWNSCALER_EVAL_METRICS_HPP

#include <string>
#include <vector>

#include "downscaler/tensor.hpp"

namespace downscaler::eval {

// Pearson correlation over all horizontally/vertically adjacent cell pairs.
// Near 0 for spatially independent fields, 1 for smooth gradients, -1 for a
// checkerboard. Throws NumericError on a zero-variance field.
double neighbor_correlation(const Tensor& field);

// Moran's I with rook-contiguity binary weights. Expectation under spatial
// randomness is -1/(N-1). Throws NumericError on a zero-variance field.
double morans_i(const Tensor& field);

// Empirical semivariance 0.5 * mean[(x(s) - x(s+h))^2] over axis-aligned
// pairs, for h = 1..max_lag. Requires 1 <= max_lag < min(H, W).
std::vector<double> variogram(const Tensor& field, int max_lag);

// Per-site verification maps of a sample ensemble against truth.
// samples: [T, n, H, W]; truth: [T, H, W].
struct PerSiteScores {
    Tensor rmse_ensemble_mean; // [H,W]
    Tensor wet_freq_bias;      // [H,W], model minus observed frequency of y >= threshold
    Tensor q50_rel_bias;       // [H,W]
    Tensor q90_rel_bias;
    Tensor q98_rel_bias;
};
PerSiteScores per_site_scores(const Tensor& samples, const Tensor& truth, double wet_threshold);

// One metric row of the comparison report.
struct MetricRow {
    std::string metric;
    std::string model;
    double value;
};

struct MetricReport {
    std::vector<MetricRow> rows;
    double value(const std::string& metric, const std::string& model) const;
};

struct CompareConfig {
    double wet_threshold = 1.0;
    int max_lag = 8;
};

// All metrics for both models plus the truth reference. Spatial statistics
// are computed in log1p space and averaged over test days and ensemble
// members; constant fields are skipped and counted. Sample tensors must
// cover the same days with the same ensemble size.
MetricReport compare_models(const Tensor& cvae_samples, const Tensor& baseline_samples,
                            const Tensor& truth, const CompareConfig& cfg);

// CSV with header `metric,model,value`.
void write_report_csv(const std::string& path, const MetricReport& report);
MetricReport read_report_csv(const std::string& path);

// Empirical inverse-CDF quantile of a sorted vector (replication-invariant).
double quantile_sorted(const std::vector<float>& sorted, double q);

} // namespace downscaler::eval

#endif
