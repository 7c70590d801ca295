#ifndef DOWNSCALER_SYNTH_DATASET_HPP
#define DOWNSCALER_SYNTH_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "downscaler/rng.hpp"
#include "downscaler/tensor.hpp"

namespace downscaler::synth {

// Fine grid is always 4x the coarse grid in each direction.
constexpr int kScaleFactor = 4;

struct GeneratorConfig {
    int time_steps = 2000;
    int channels = 20;
    int coarse_height = 8;
    int coarse_width = 8;
    double state_correlation_length = 2.5; // fine cells
    double noise_correlation_length = 1.0; // coarse cells
    double noise_scale = 2.5;              // predictor noise amplitude
    double precip_scale = 1.25;            // log-space slope of the wet transform
    double latent_threshold = 0.0;         // state below this is exactly dry
    std::uint64_t seed = 2025;

    int fine_height() const { return kScaleFactor * coarse_height; }
    int fine_width() const { return kScaleFactor * coarse_width; }

    void validate() const; // ConfigError on out-of-range values
};

// Time-aligned coarse predictors and fine precipitation with a chronological
// train/test split. Times < split_index train, >= split_index test.
struct DownscalingDataset {
    Tensor X; // [T, C, H_c, W_c], standardized with train-only statistics
    Tensor Y; // [T, H_f, W_f], mm/day, exact zeros on dry cells
    int split_index = 0;
    std::string metadata_json;

    int time_steps() const { return X.shape[0]; }
    int channels() const { return X.shape[1]; }
    int coarse_height() const { return X.shape[2]; }
    int coarse_width() const { return X.shape[3]; }
    int fine_height() const { return Y.shape[1]; }
    int fine_width() const { return Y.shape[2]; }
};

struct StandardizationStats {
    std::vector<float> mean; // per channel
    std::vector<float> std;  // per channel, strictly positive
};

// Zero-mean unit-variance (in expectation) field whose autocorrelation decays
// at `correlation_length` cells: white noise convolved with a truncated
// Gaussian kernel, then rescaled to unit sample variance.
// correlation_length = 0 gives white noise.
Tensor generate_gaussian_random_field(int height, int width, double correlation_length,
                                      RandomStream& rs);

// Conservative regridding: non-overlapping 4x4 block means, [H,W] -> [H/4,W/4].
Tensor block_mean_4x4(const Tensor& fine);

// Synthetic benchmark: per step, a latent correlated "weather state" drives
// both the fine precipitation (exact zeros below a threshold, expm1 tail
// above it) and the coarse predictors (block-meaned smooth transforms of the
// state plus per-channel correlated noise, so predictors are informative but
// not sufficient). Predictors come back standardized with train-only stats.
DownscalingDataset generate_dataset(const GeneratorConfig& cfg);

// Per-channel mean/std over the training slice only.
StandardizationStats compute_standardization(const Tensor& x, int split_index);
void standardize_predictors(Tensor& x, const StandardizationStats& stats);

// DSET container round trip with invariant validation on load.
void save_dataset(const std::string& path, const DownscalingDataset& ds);
DownscalingDataset load_dataset(const std::string& path);

} // namespace downscaler::synth

#endif
