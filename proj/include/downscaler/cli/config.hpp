#ifndef DOWNSCALER_CLI_CONFIG_HPP
#define DOWNSCALER_CLI_CONFIG_HPP

#include <cstdint>
#include <string>

#include "downscaler/bg/model.hpp"
#include "downscaler/cvae/model.hpp"
#include "downscaler/eval/metrics.hpp"
#include "downscaler/synth/dataset.hpp"

namespace downscaler::cli {

// Flat `key = value` run configuration with `#` comments. Unknown keys are
// rejected and every numeric knob is validated against its documented range
// (see README for the knob table).
struct RunConfig {
    // generator
    std::uint64_t seed = 2025;
    int time_steps = 2000;
    int channels = 20;
    int coarse_height = 8;
    int coarse_width = 8;
    double state_correlation_length = 2.5;
    double noise_correlation_length = 1.0;
    double noise_scale = 2.5;
    double precip_scale = 1.25;
    double latent_threshold = 0.0;

    // model + training
    int latent_dim = 16;
    int embedding_dim = 128;
    int epochs = 100;
    int batch_size = 64;
    double learning_rate = 1e-4;
    double beta_kl_max = 1.0;
    double kl_warmup_fraction = 0.2;

    // sampling + evaluation
    double wet_threshold = 1.0;
    int ensemble_size = 20;
    int variogram_max_lag = 8;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_string(const std::string& text, const std::string& source);

    synth::GeneratorConfig generator() const;
    cvae::CvaeConfig cvae_model() const;
    cvae::TrainConfig cvae_train() const;
    bg::BaselineConfig baseline_model() const;
    bg::BaselineTrainConfig baseline_train() const;
    eval::CompareConfig compare() const;
};

} // namespace downscaler::cli

#endif
