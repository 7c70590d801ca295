#include "downscaler/synth/dataset.hpp"

#include <cmath>
#include <json.hpp>

#include "downscaler/error.hpp"
#include "downscaler/io/formats.hpp"
#include "downscaler/threading.hpp"

namespace downscaler::synth {

namespace {

// Substream tags for the generator; fixed so datasets are reproducible.
constexpr std::uint64_t kTagState = 0x57454154; // weather state
constexpr std::uint64_t kTagNoise = 0x4e4f4953; // predictor noise

} // namespace

void GeneratorConfig::validate() const {
    auto bad = [](const std::string& msg) { throw ConfigError("generator config: " + msg); };
    if (time_steps < 10) bad("time_steps must be >= 10");
    if (channels < 1) bad("channels must be >= 1");
    if (coarse_height < 2 || coarse_width < 2) bad("coarse extents must be >= 2");
    if (state_correlation_length < 0.0) bad("state_correlation_length must be >= 0");
    if (noise_correlation_length < 0.0) bad("noise_correlation_length must be >= 0");
    if (noise_scale < 0.0) bad("noise_scale must be >= 0");
    if (!(precip_scale > 0.0)) bad("precip_scale must be > 0");
}

Tensor generate_gaussian_random_field(int height, int width, double correlation_length,
                                      RandomStream& rs) {
    if (height < 1 || width < 1)
        throw ShapeError("random field extents must be >= 1, got " + std::to_string(height) +
                         "x" + std::to_string(width));
    if (correlation_length < 0.0)
        throw NumericError("correlation_length must be >= 0");

    const int radius = correlation_length > 0.0
                           ? static_cast<int>(std::ceil(3.0 * correlation_length))
                           : 0;
    const int hp = height + 2 * radius;
    const int wp = width + 2 * radius;

    std::vector<float> noise(static_cast<std::size_t>(hp) * wp);
    for (float& v : noise) v = rs.normal_f();

    Tensor field({height, width});
    if (radius == 0) {
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                field.at2(y, x) = noise[static_cast<std::size_t>(y) * wp + x];
    } else {
        // Separable truncated Gaussian, each 1D pass L2-normalized so the
        // output variance stays near 1 before the final rescale.
        const int taps = 2 * radius + 1;
        std::vector<float> k1(static_cast<std::size_t>(taps));
        double norm = 0.0;
        for (int j = 0; j < taps; ++j) {
            const double d = j - radius;
            const double v = std::exp(-d * d / (2.0 * correlation_length * correlation_length));
            k1[static_cast<std::size_t>(j)] = static_cast<float>(v);
            norm += v * v;
        }
        const float inv = static_cast<float>(1.0 / std::sqrt(norm));
        for (float& v : k1) v *= inv;

        // Horizontal valid pass: [hp,wp] -> [hp,width]
        std::vector<float> tmp(static_cast<std::size_t>(hp) * width);
        for (int y = 0; y < hp; ++y) {
            const float* row = noise.data() + static_cast<std::size_t>(y) * wp;
            float* trow = tmp.data() + static_cast<std::size_t>(y) * width;
            for (int x = 0; x < width; ++x) {
                float acc = 0.0f;
                for (int j = 0; j < taps; ++j) acc += k1[static_cast<std::size_t>(j)] * row[x + j];
                trow[x] = acc;
            }
        }
        // Vertical valid pass: [hp,width] -> [height,width]
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                float acc = 0.0f;
                for (int j = 0; j < taps; ++j)
                    acc += k1[static_cast<std::size_t>(j)] *
                           tmp[static_cast<std::size_t>(y + j) * width + x];
                field.at2(y, x) = acc;
            }
    }

    if (field.size() >= 2) {
        double sum = 0.0, sum2 = 0.0;
        for (float v : field.data) {
            sum += v;
            sum2 += static_cast<double>(v) * v;
        }
        const double n = static_cast<double>(field.size());
        const double var = sum2 / n - (sum / n) * (sum / n);
        if (var > 1e-30) {
            const float inv_sd = static_cast<float>(1.0 / std::sqrt(var));
            for (float& v : field.data) v *= inv_sd;
        }
    }
    return field;
}

Tensor block_mean_4x4(const Tensor& fine) {
    if (fine.rank() != 2 || fine.shape[0] % kScaleFactor != 0 || fine.shape[1] % kScaleFactor != 0)
        throw ShapeError("block_mean_4x4: field extents must be multiples of 4, got " +
                         shape_to_string(fine.shape));
    const int hc = fine.shape[0] / kScaleFactor;
    const int wc = fine.shape[1] / kScaleFactor;
    Tensor coarse({hc, wc});
    for (int y = 0; y < hc; ++y)
        for (int x = 0; x < wc; ++x) {
            float acc = 0.0f;
            for (int dy = 0; dy < kScaleFactor; ++dy)
                for (int dx = 0; dx < kScaleFactor; ++dx)
                    acc += fine.at2(kScaleFactor * y + dy, kScaleFactor * x + dx);
            coarse.at2(y, x) = acc / (kScaleFactor * kScaleFactor);
        }
    return coarse;
}

namespace {

// Normalized transforms of a standard-normal state: each has zero mean and
// unit variance under N(0,1), giving five distinct "variables".
float state_transform(int variable, float s) {
    switch (variable % 5) {
        case 0: return s;
        case 1: return (s * s - 1.0f) * 0.70710678f;
        case 2: return (std::fabs(s) - 0.79788456f) * 1.65882f;
        case 3: return (s * s * s - 3.0f * s) * 0.40824829f;
        default: return (std::fmax(s, 0.0f) - 0.39894228f) * 1.71286f;
    }
}

} // namespace

DownscalingDataset generate_dataset(const GeneratorConfig& cfg) {
    cfg.validate();
    const int t_total = cfg.time_steps;
    const int hf = cfg.fine_height(), wf = cfg.fine_width();
    const int hc = cfg.coarse_height, wc = cfg.coarse_width;
    const int c_total = cfg.channels;

    DownscalingDataset ds;
    ds.X = Tensor({t_total, c_total, hc, wc});
    ds.Y = Tensor({t_total, hf, wf});
    ds.split_index = static_cast<int>(0.8 * t_total);

    const float a = static_cast<float>(cfg.precip_scale);
    const float tau = static_cast<float>(cfg.latent_threshold);
    const float noise_amp = static_cast<float>(cfg.noise_scale);

    parallel_chunks(static_cast<std::size_t>(t_total), 16, [&](int, std::size_t b, std::size_t e) {
        for (std::size_t ti = b; ti < e; ++ti) {
            const auto t = static_cast<std::uint64_t>(ti);
            RandomStream state_rs(cfg.seed, {kTagState, t});
            const Tensor state =
                generate_gaussian_random_field(hf, wf, cfg.state_correlation_length, state_rs);

            float* y = ds.Y.ptr() + ti * static_cast<std::size_t>(hf) * wf;
            for (std::size_t i = 0; i < state.size(); ++i) {
                const float excess = state.data[i] - tau;
                y[i] = excess > 0.0f ? std::expm1(a * excess) : 0.0f;
            }

            for (int c = 0; c < c_total; ++c) {
                const int variable = c / 4;
                const int level = c % 4;
                const float weight = 1.0f / (1.0f + 0.35f * static_cast<float>(level));

                Tensor fine({hf, wf});
                for (std::size_t i = 0; i < state.size(); ++i)
                    fine.data[i] = weight * state_transform(variable, state.data[i]);
                Tensor coarse = block_mean_4x4(fine);

                RandomStream noise_rs(cfg.seed, {kTagNoise, t, static_cast<std::uint64_t>(c)});
                const Tensor eta =
                    generate_gaussian_random_field(hc, wc, cfg.noise_correlation_length, noise_rs);

                float* xc = ds.X.ptr() +
                            ((ti * c_total + static_cast<std::size_t>(c)) *
                             static_cast<std::size_t>(hc)) * wc;
                for (std::size_t i = 0; i < coarse.size(); ++i)
                    xc[i] = coarse.data[i] + noise_amp * eta.data[i];
            }
        }
    });

    const StandardizationStats stats = compute_standardization(ds.X, ds.split_index);
    standardize_predictors(ds.X, stats);

    nlohmann::json meta;
    meta["kind"] = "dataset";
    meta["seed"] = cfg.seed;
    meta["time_steps"] = t_total;
    meta["channels"] = c_total;
    meta["coarse_height"] = hc;
    meta["coarse_width"] = wc;
    meta["fine_height"] = hf;
    meta["fine_width"] = wf;
    meta["state_correlation_length"] = cfg.state_correlation_length;
    meta["noise_correlation_length"] = cfg.noise_correlation_length;
    meta["noise_scale"] = cfg.noise_scale;
    meta["precip_scale"] = cfg.precip_scale;
    meta["latent_threshold"] = cfg.latent_threshold;
    meta["split_index"] = ds.split_index;
    ds.metadata_json = meta.dump();
    return ds;
}

StandardizationStats compute_standardization(const Tensor& x, int split_index) {
    if (x.rank() != 4)
        throw ShapeError("standardization: X must be rank 4 [T,C,H,W], got " +
                         shape_to_string(x.shape));
    if (split_index <= 0 || split_index >= x.shape[0])
        throw DataError("standardization: split_index " + std::to_string(split_index) +
                        " outside (0, " + std::to_string(x.shape[0]) + ")");
    const int c_total = x.shape[1];
    const std::size_t plane = static_cast<std::size_t>(x.shape[2]) * x.shape[3];

    StandardizationStats stats;
    stats.mean.resize(static_cast<std::size_t>(c_total));
    stats.std.resize(static_cast<std::size_t>(c_total));
    for (int c = 0; c < c_total; ++c) {
        double sum = 0.0, sum2 = 0.0;
        for (int t = 0; t < split_index; ++t) {
            const float* p = x.ptr() + (static_cast<std::size_t>(t) * c_total + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sum += p[i];
                sum2 += static_cast<double>(p[i]) * p[i];
            }
        }
        const double n = static_cast<double>(split_index) * static_cast<double>(plane);
        const double mean = sum / n;
        const double var = sum2 / n - mean * mean;
        if (!(var > 1e-20))
            throw DataError("standardization: channel " + std::to_string(c) +
                            " has zero variance on the training slice");
        stats.mean[static_cast<std::size_t>(c)] = static_cast<float>(mean);
        stats.std[static_cast<std::size_t>(c)] = static_cast<float>(std::sqrt(var));
    }
    return stats;
}

void standardize_predictors(Tensor& x, const StandardizationStats& stats) {
    if (x.rank() != 4)
        throw ShapeError("standardization: X must be rank 4 [T,C,H,W], got " +
                         shape_to_string(x.shape));
    const int c_total = x.shape[1];
    if (stats.mean.size() != static_cast<std::size_t>(c_total) ||
        stats.std.size() != static_cast<std::size_t>(c_total))
        throw ShapeError("standardization: stats cover " + std::to_string(stats.mean.size()) +
                         " channels, X has " + std::to_string(c_total));
    const std::size_t plane = static_cast<std::size_t>(x.shape[2]) * x.shape[3];
    for (int t = 0; t < x.shape[0]; ++t)
        for (int c = 0; c < c_total; ++c) {
            const float m = stats.mean[static_cast<std::size_t>(c)];
            const float inv = 1.0f / stats.std[static_cast<std::size_t>(c)];
            float* p = x.ptr() + (static_cast<std::size_t>(t) * c_total + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - m) * inv;
        }
}

void save_dataset(const std::string& path, const DownscalingDataset& ds) {
    io::DsetFile f;
    f.tensors.push_back({"X", ds.X});
    f.tensors.push_back({"Y", ds.Y});
    f.split_index = static_cast<std::uint32_t>(ds.split_index);
    f.metadata_json = ds.metadata_json;
    io::write_dset(path, f);
}

DownscalingDataset load_dataset(const std::string& path) {
    io::DsetFile f = io::read_dset(path);
    DownscalingDataset ds;
    ds.X = io::require_tensor(f.tensors, "X", path);
    ds.Y = io::require_tensor(f.tensors, "Y", path);
    ds.split_index = static_cast<int>(f.split_index);
    ds.metadata_json = std::move(f.metadata_json);

    if (ds.X.rank() != 4) throw DataError(path + ": X must be rank 4, got " +
                                          shape_to_string(ds.X.shape));
    if (ds.Y.rank() != 3) throw DataError(path + ": Y must be rank 3, got " +
                                          shape_to_string(ds.Y.shape));
    if (ds.X.shape[0] != ds.Y.shape[0])
        throw DataError(path + ": X covers " + std::to_string(ds.X.shape[0]) + " steps, Y " +
                        std::to_string(ds.Y.shape[0]));
    if (ds.Y.shape[1] != kScaleFactor * ds.X.shape[2] ||
        ds.Y.shape[2] != kScaleFactor * ds.X.shape[3])
        throw DataError(path + ": fine grid " + shape_to_string({ds.Y.shape[1], ds.Y.shape[2]}) +
                        " is not 4x the coarse grid " +
                        shape_to_string({ds.X.shape[2], ds.X.shape[3]}));
    if (ds.split_index <= 0 || ds.split_index >= ds.X.shape[0])
        throw DataError(path + ": split_index " + std::to_string(ds.split_index) +
                        " outside (0, " + std::to_string(ds.X.shape[0]) + ")");
    for (float v : ds.Y.data)
        if (!(v >= 0.0f)) throw DataError(path + ": Y contains negative or non-finite values");
    return ds;
}

} // namespace downscaler::synth
