#ifndef DOWNSCALER_CVAE_MODEL_HPP
#define DOWNSCALER_CVAE_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "downscaler/io/formats.hpp"
#include "downscaler/nn/adam.hpp"
#include "downscaler/nn/layers.hpp"
#include "downscaler/rng.hpp"
#include "downscaler/synth/dataset.hpp"
#include "downscaler/tensor.hpp"

namespace downscaler::cvae {

// Log-variance clamp keeps sigma and the KL term finite in float32.
constexpr float kLogVarMin = -10.0f;
constexpr float kLogVarMax = 10.0f;

struct CvaeConfig {
    int channels = 20;
    int coarse_height = 8;
    int coarse_width = 8;
    int latent_dim = 16;    // d_z
    int embedding_dim = 128; // d_zx
    std::vector<int> embed_channels = {50, 25, 10};
    std::vector<int> encoder_channels = {16, 8};
    int decoder_base_channels = 8;
    std::vector<int> decoder_channels = {8, 4};

    int fine_height() const { return synth::kScaleFactor * coarse_height; }
    int fine_width() const { return synth::kScaleFactor * coarse_width; }

    void validate() const;
};

// Diagonal Gaussian posterior over the latent space. sigma = exp(log_var/2)
// and is strictly positive by construction.
struct GaussianLatent {
    Tensor mu;      // [d_z]
    Tensor log_var; // [d_z], clamped to [kLogVarMin, kLogVarMax]
    Tensor sigma;   // [d_z]
};

struct ElboParts {
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

// Gradient buffers congruent with the model parameters.
struct CvaeGrads {
    nn::NetworkGrads embed, encoder, head_mu, head_logvar, decoder;
    void clear();
    void add(const CvaeGrads& other);
    void scale(float s);
};

// Conditional VAE over (coarse predictors X, fine precipitation Y):
// an embedding network maps X to z_x; the encoder maps (Y, z_x) to a Gaussian
// posterior; the decoder maps (z, z_x) back to the field. The model works in
// log1p precipitation space; to_physical() returns mm/day.
class CvaeModel {
public:
    explicit CvaeModel(CvaeConfig cfg);

    const CvaeConfig& config() const { return cfg_; }

    void init_params(std::uint64_t seed);

    // X [C,H_c,W_c] -> z_x [d_zx]. Deterministic.
    Tensor embed_predictors(const Tensor& x) const;

    // z_x [d_zx], Y [H_f,W_f] (mm/day, nonnegative) -> posterior.
    GaussianLatent encode(const Tensor& z_x, const Tensor& y) const;

    // z = mu + sigma * eps.
    static Tensor reparameterize(const GaussianLatent& lat, const Tensor& eps);

    // KL(q || N(0,I)) = 1/2 sum(mu^2 + sigma^2 - 1 - ln sigma^2). Always >= 0.
    static double kl_divergence(const GaussianLatent& lat);

    // (z, z_x) -> field in log1p space, [H_f,W_f].
    Tensor decode(const Tensor& z, const Tensor& z_x) const;

    // log1p space -> mm/day: expm1 clamped below at 0 (and capped before the
    // exponential so the result stays finite in float32).
    static Tensor to_physical(const Tensor& transformed);

    // recon = MSE(log1p(y), y_hat_transformed); total = recon + beta_kl * kl.
    static ElboParts elbo_loss(const Tensor& y, const Tensor& y_hat_transformed,
                               const GaussianLatent& lat, double beta_kl);

    // Fused training pass over one sample. `y_log1p` is the transformed
    // target. Parameter gradients accumulate into *grads when non-null; with
    // null grads this is a pure forward evaluation. relu_margin (when
    // requested) reports the smallest |pre-activation| any relu saw.
    ElboParts elbo_with_grads(const Tensor& x, const Tensor& y_log1p, const Tensor& eps,
                              double beta_kl, CvaeGrads* grads,
                              double* relu_margin = nullptr) const;

    CvaeGrads make_grads() const;
    std::vector<nn::ParamBinding> bind(CvaeGrads& grads);

    std::vector<io::NamedTensor> to_named_tensors() const;
    static CvaeModel from_named_tensors(const std::vector<io::NamedTensor>& tensors,
                                        const std::string& source);

    const nn::Network& embed_net() const { return embed_; }
    const nn::Network& encoder_net() const { return encoder_; }
    const nn::Network& head_mu_net() const { return head_mu_; }
    const nn::Network& head_logvar_net() const { return head_logvar_; }
    const nn::Network& decoder_net() const { return decoder_; }

private:
    CvaeConfig cfg_;
    nn::Network embed_;
    nn::Network encoder_;
    nn::Network head_mu_;
    nn::Network head_logvar_;
    nn::Network decoder_;
};

struct TrainConfig {
    int epochs = 100;
    int batch_size = 64;
    float learning_rate = 1e-4f;
    double beta_kl_max = 1.0;
    double kl_warmup_fraction = 0.2;
    std::uint64_t seed = 2025;
};

struct EpochStats {
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

// KL weight for a given epoch: linear ramp from 0 to beta_kl_max over the
// first `kl_warmup_fraction` of the run, flat afterwards.
double kl_beta_for_epoch(int epoch, const TrainConfig& cfg);

// Minibatch Adam on the ELBO over the training slice. Deterministic given
// the seed. Throws NumericError naming the epoch/batch on a non-finite loss.
std::vector<EpochStats> train_cvae(CvaeModel& model, const synth::DownscalingDataset& data,
                                   const TrainConfig& cfg);

// Computes z_x once, draws n latents from N(0, I), decodes each. Fields come
// back in mm/day, elementwise >= 0. Never reads Y.
std::vector<Tensor> sample_downscaled(const CvaeModel& model, const Tensor& x, int n,
                                      RandomStream& stream);

} // namespace downscaler::cvae

#endif
