#include "downscaler/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "downscaler/error.hpp"
#include "downscaler/io/formats.hpp"

namespace downscaler::eval {

namespace {

void require_rank2(const Tensor& field, const char* what) {
    if (field.rank() != 2)
        throw ShapeError(std::string(what) + ": field must be rank 2, got " +
                         shape_to_string(field.shape));
}

bool is_constant(const Tensor& field) {
    const auto [lo, hi] = std::minmax_element(field.data.begin(), field.data.end());
    return *lo == *hi;
}

Tensor log1p_copy(const float* src, std::size_t n, int h, int w) {
    Tensor t({h, w});
    for (std::size_t i = 0; i < n; ++i) t.data[i] = std::log1p(std::fmax(src[i], 0.0f));
    return t;
}

} // namespace

double neighbor_correlation(const Tensor& field) {
    require_rank2(field, "neighbor_correlation");
    if (is_constant(field))
        throw NumericError("neighbor_correlation: undefined correlation on a zero-variance field");

    const int h = field.shape[0], w = field.shape[1];
    // Pooled over canonical right- and down-neighbor pairs.
    double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
    std::size_t n = 0;
    auto add = [&](float a, float b) {
        sa += a;
        sb += b;
        saa += static_cast<double>(a) * a;
        sbb += static_cast<double>(b) * b;
        sab += static_cast<double>(a) * b;
        ++n;
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + 1 < w; ++x) add(field.at2(y, x), field.at2(y, x + 1));
    for (int y = 0; y + 1 < h; ++y)
        for (int x = 0; x < w; ++x) add(field.at2(y, x), field.at2(y + 1, x));

    const double dn = static_cast<double>(n);
    const double cov = sab / dn - (sa / dn) * (sb / dn);
    const double va = saa / dn - (sa / dn) * (sa / dn);
    const double vb = sbb / dn - (sb / dn) * (sb / dn);
    if (!(va > 0.0) || !(vb > 0.0))
        throw NumericError("neighbor_correlation: undefined correlation on a zero-variance field");
    return cov / std::sqrt(va * vb);
}

double morans_i(const Tensor& field) {
    require_rank2(field, "morans_i");
    if (is_constant(field))
        throw NumericError("morans_i: undefined on a zero-variance field");

    const int h = field.shape[0], w = field.shape[1];
    const double n = static_cast<double>(field.size());
    double mean = 0.0;
    for (float v : field.data) mean += v;
    mean /= n;

    double num = 0.0, den = 0.0;
    for (float v : field.data) {
        const double d = v - mean;
        den += d * d;
    }
    // Rook contiguity, symmetric weights counted over ordered pairs.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double d = field.at2(y, x) - mean;
            if (x + 1 < w) num += 2.0 * d * (field.at2(y, x + 1) - mean);
            if (y + 1 < h) num += 2.0 * d * (field.at2(y + 1, x) - mean);
        }
    const double s0 = 2.0 * (static_cast<double>(h) * (w - 1) + static_cast<double>(w) * (h - 1));
    if (!(den > 0.0)) throw NumericError("morans_i: undefined on a zero-variance field");
    return (n / s0) * num / den;
}

std::vector<double> variogram(const Tensor& field, int max_lag) {
    require_rank2(field, "variogram");
    const int h = field.shape[0], w = field.shape[1];
    if (max_lag < 1 || max_lag >= std::min(h, w))
        throw ConfigError("variogram: max_lag must satisfy 1 <= max_lag < min(H,W) = " +
                          std::to_string(std::min(h, w)) + ", got " + std::to_string(max_lag));

    std::vector<double> gamma(static_cast<std::size_t>(max_lag));
    for (int lag = 1; lag <= max_lag; ++lag) {
        double sum = 0.0;
        std::size_t n = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x + lag < w; ++x) {
                const double d = static_cast<double>(field.at2(y, x)) - field.at2(y, x + lag);
                sum += d * d;
                ++n;
            }
        for (int y = 0; y + lag < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double d = static_cast<double>(field.at2(y, x)) - field.at2(y + lag, x);
                sum += d * d;
                ++n;
            }
        gamma[static_cast<std::size_t>(lag - 1)] = 0.5 * sum / static_cast<double>(n);
    }
    return gamma;
}

// Empirical inverse-CDF quantile (type 1). Invariant under replication of
// the sample, so a pooled ensemble that replicates the truth reproduces the
// truth quantiles exactly.
double quantile_sorted(const std::vector<float>& sorted, double q) {
    if (sorted.empty()) throw NumericError("quantile of empty sample");
    if (q <= 0.0) return sorted.front();
    const double pos = q * static_cast<double>(sorted.size());
    std::size_t idx = static_cast<std::size_t>(std::ceil(pos));
    idx = std::min(std::max<std::size_t>(idx, 1), sorted.size());
    return sorted[idx - 1];
}

PerSiteScores per_site_scores(const Tensor& samples, const Tensor& truth, double wet_threshold) {
    if (samples.rank() != 4)
        throw ShapeError("per_site_scores: samples must be rank 4 [T,n,H,W], got " +
                         shape_to_string(samples.shape));
    if (truth.rank() != 3)
        throw ShapeError("per_site_scores: truth must be rank 3 [T,H,W], got " +
                         shape_to_string(truth.shape));
    const int t_total = samples.shape[0], n_ens = samples.shape[1];
    const int h = samples.shape[2], w = samples.shape[3];
    if (truth.shape[0] != t_total || truth.shape[1] != h || truth.shape[2] != w)
        throw ShapeError("per_site_scores: truth shape " + shape_to_string(truth.shape) +
                         " does not cover samples " + shape_to_string(samples.shape));

    const std::size_t plane = static_cast<std::size_t>(h) * w;
    PerSiteScores out;
    out.rmse_ensemble_mean = Tensor({h, w});
    out.wet_freq_bias = Tensor({h, w});
    out.q50_rel_bias = Tensor({h, w});
    out.q90_rel_bias = Tensor({h, w});
    out.q98_rel_bias = Tensor({h, w});

    std::vector<float> pooled(static_cast<std::size_t>(t_total) * n_ens);
    std::vector<float> truth_site(static_cast<std::size_t>(t_total));

    for (std::size_t s = 0; s < plane; ++s) {
        double se = 0.0;
        std::size_t model_wet = 0, obs_wet = 0;
        for (int t = 0; t < t_total; ++t) {
            double ens_mean = 0.0;
            for (int m = 0; m < n_ens; ++m) {
                const float v = samples.data[(static_cast<std::size_t>(t) * n_ens + m) * plane + s];
                ens_mean += v;
                pooled[static_cast<std::size_t>(t) * n_ens + m] = v;
                if (v >= wet_threshold) ++model_wet;
            }
            ens_mean /= n_ens;
            const float tv = truth.data[static_cast<std::size_t>(t) * plane + s];
            truth_site[static_cast<std::size_t>(t)] = tv;
            if (tv >= wet_threshold) ++obs_wet;
            se += (ens_mean - tv) * (ens_mean - tv);
        }
        out.rmse_ensemble_mean.data[s] =
            static_cast<float>(std::sqrt(se / static_cast<double>(t_total)));
        out.wet_freq_bias.data[s] = static_cast<float>(
            static_cast<double>(model_wet) / static_cast<double>(pooled.size()) -
            static_cast<double>(obs_wet) / static_cast<double>(t_total));

        std::sort(pooled.begin(), pooled.end());
        std::sort(truth_site.begin(), truth_site.end());
        auto rel_bias = [&](double q) {
            const double qm = quantile_sorted(pooled, q);
            const double qt = quantile_sorted(truth_site, q);
            // Relative with a 0.1 mm/day floor so dry-site quantiles stay defined.
            return (qm - qt) / std::fmax(qt, 0.1);
        };
        out.q50_rel_bias.data[s] = static_cast<float>(rel_bias(0.50));
        out.q90_rel_bias.data[s] = static_cast<float>(rel_bias(0.90));
        out.q98_rel_bias.data[s] = static_cast<float>(rel_bias(0.98));
    }
    return out;
}

namespace {

struct SpatialAccumulator {
    double neighbor_corr = 0.0;
    double morans = 0.0;
    std::vector<double> vario;
    std::size_t evaluated = 0;
    std::size_t degenerate = 0;

    void add_field(const Tensor& log_field, int max_lag) {
        if (vario.empty()) vario.assign(static_cast<std::size_t>(max_lag), 0.0);
        const auto curve = variogram(log_field, max_lag);
        if (is_constant(log_field)) {
            ++degenerate;
            return;
        }
        neighbor_corr += neighbor_correlation(log_field);
        morans += morans_i(log_field);
        for (std::size_t i = 0; i < curve.size(); ++i) vario[i] += curve[i];
        ++evaluated;
    }

    void finish() {
        const double n = evaluated > 0 ? static_cast<double>(evaluated) : 1.0;
        neighbor_corr /= n;
        morans /= n;
        for (double& v : vario) v /= n;
    }
};

struct ModelColumn {
    SpatialAccumulator spatial;
    double rmse_mean = 0.0;
    double wet_bias_mean = 0.0;
    double wet_bias_mean_abs = 0.0;
    double q50 = 0.0, q90 = 0.0, q98 = 0.0;
    double ensemble_size = 0.0;
};

double site_mean(const Tensor& field) {
    double sum = 0.0;
    for (float v : field.data) sum += v;
    return sum / static_cast<double>(field.size());
}

double site_mean_abs(const Tensor& field) {
    double sum = 0.0;
    for (float v : field.data) sum += std::fabs(v);
    return sum / static_cast<double>(field.size());
}

ModelColumn evaluate_column(const Tensor& samples, const Tensor& truth,
                            const CompareConfig& cfg) {
    const int t_total = samples.shape[0], n_ens = samples.shape[1];
    const int h = samples.shape[2], w = samples.shape[3];
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    ModelColumn col;
    col.ensemble_size = n_ens;
    for (int t = 0; t < t_total; ++t)
        for (int m = 0; m < n_ens; ++m) {
            const float* src = samples.ptr() + (static_cast<std::size_t>(t) * n_ens + m) * plane;
            col.spatial.add_field(log1p_copy(src, plane, h, w), cfg.max_lag);
        }
    col.spatial.finish();

    const PerSiteScores scores = per_site_scores(samples, truth, cfg.wet_threshold);
    col.rmse_mean = site_mean(scores.rmse_ensemble_mean);
    col.wet_bias_mean = site_mean(scores.wet_freq_bias);
    col.wet_bias_mean_abs = site_mean_abs(scores.wet_freq_bias);
    col.q50 = site_mean(scores.q50_rel_bias);
    col.q90 = site_mean(scores.q90_rel_bias);
    col.q98 = site_mean(scores.q98_rel_bias);
    return col;
}

} // namespace

double MetricReport::value(const std::string& metric, const std::string& model) const {
    for (const auto& r : rows)
        if (r.metric == metric && r.model == model) return r.value;
    throw DataError("report has no row for metric '" + metric + "', model '" + model + "'");
}

MetricReport compare_models(const Tensor& cvae_samples, const Tensor& baseline_samples,
                            const Tensor& truth, const CompareConfig& cfg) {
    if (cvae_samples.rank() != 4 || baseline_samples.rank() != 4)
        throw ShapeError("compare_models: sample tensors must be rank 4 [T,n,H,W]");
    if (cvae_samples.shape != baseline_samples.shape)
        throw DataError("compare_models: mismatched test coverage: cvae " +
                        shape_to_string(cvae_samples.shape) + " vs baseline " +
                        shape_to_string(baseline_samples.shape));
    if (truth.rank() != 3 || truth.shape[0] != cvae_samples.shape[0] ||
        truth.shape[1] != cvae_samples.shape[2] || truth.shape[2] != cvae_samples.shape[3])
        throw DataError("compare_models: truth " + shape_to_string(truth.shape) +
                        " does not cover samples " + shape_to_string(cvae_samples.shape));

    // Truth enters as its own single-member ensemble.
    Tensor truth_ens({truth.shape[0], 1, truth.shape[1], truth.shape[2]}, truth.data);

    const ModelColumn columns[3] = {
        evaluate_column(truth_ens, truth, cfg),
        evaluate_column(cvae_samples, truth, cfg),
        evaluate_column(baseline_samples, truth, cfg),
    };
    const char* names[3] = {"truth", "cvae", "baseline"};

    MetricReport report;
    auto emit = [&](const std::string& metric, auto getter) {
        for (int c = 0; c < 3; ++c)
            report.rows.push_back({metric, names[c], getter(columns[c])});
    };
    emit("ensemble_size", [](const ModelColumn& c) { return c.ensemble_size; });
    emit("fields_evaluated",
         [](const ModelColumn& c) { return static_cast<double>(c.spatial.evaluated); });
    emit("fields_degenerate",
         [](const ModelColumn& c) { return static_cast<double>(c.spatial.degenerate); });
    emit("neighbor_correlation", [](const ModelColumn& c) { return c.spatial.neighbor_corr; });
    emit("morans_i", [](const ModelColumn& c) { return c.spatial.morans; });
    for (int lag = 1; lag <= cfg.max_lag; ++lag)
        emit("variogram_lag" + std::to_string(lag), [lag](const ModelColumn& c) {
            return c.spatial.vario[static_cast<std::size_t>(lag - 1)];
        });
    emit("rmse_ensemble_mean", [](const ModelColumn& c) { return c.rmse_mean; });
    emit("wet_day_freq_bias_mean", [](const ModelColumn& c) { return c.wet_bias_mean; });
    emit("wet_day_freq_bias_mean_abs", [](const ModelColumn& c) { return c.wet_bias_mean_abs; });
    emit("q50_rel_bias_mean", [](const ModelColumn& c) { return c.q50; });
    emit("q90_rel_bias_mean", [](const ModelColumn& c) { return c.q90; });
    emit("q98_rel_bias_mean", [](const ModelColumn& c) { return c.q98; });
    return report;
}

void write_report_csv(const std::string& path, const MetricReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError(path + ": cannot open for writing");
    out << "metric,model,value\n";
    for (const auto& r : report.rows)
        out << r.metric << "," << r.model << "," << io::format_double(r.value) << "\n";
    if (!out) throw DataError(path + ": write failed");
}

MetricReport read_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open for reading");
    std::string line;
    if (!std::getline(in, line) || line != "metric,model,value")
        throw DataError(path + ": bad report header");
    MetricReport report;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        MetricRow row;
        std::string value;
        if (!std::getline(ss, row.metric, ',') || !std::getline(ss, row.model, ',') ||
            !std::getline(ss, value))
            throw DataError(path + ": malformed row '" + line + "'");
        row.value = std::stod(value);
        report.rows.push_back(std::move(row));
    }
    return report;
}

} // namespace downscaler::eval
