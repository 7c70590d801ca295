#ifndef DOWNSCALER_BG_MODEL_HPP
#define DOWNSCALER_BG_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "downscaler/io/formats.hpp"
#include "downscaler/nn/layers.hpp"
#include "downscaler/rng.hpp"
#include "downscaler/synth/dataset.hpp"
#include "downscaler/tensor.hpp"

namespace downscaler::bg {

struct BaselineConfig {
    int channels = 20;
    int coarse_height = 8;
    int coarse_width = 8;
    std::vector<int> conv_channels = {50, 25, 10};

    int fine_height() const { return synth::kScaleFactor * coarse_height; }
    int fine_width() const { return synth::kScaleFactor * coarse_width; }

    void validate() const;
};

// Per-site conditional distributions: rain probability and Gamma amount
// parameters. Output activations keep every site inside the open domain.
struct BernoulliGammaField {
    Tensor p;     // [H_f,W_f], in (0,1)
    Tensor alpha; // [H_f,W_f], > 0 (shape)
    Tensor beta;  // [H_f,W_f], > 0 (scale)
};

// Negative log-likelihood of one observation under a Bernoulli-Gamma mixture
// with a wet/dry cutoff at `wet_threshold`:
//   y < threshold:  -ln(1-p)
//   y >= threshold: -[ln p + (alpha-1) ln y - y/beta - alpha ln beta - lnGamma(alpha)]
// with y floored at 1e-6 inside the log. Throws NumericError outside the
// parameter domain.
double bg_nll(double y, double p, double alpha, double beta, double wet_threshold);

// Analytic partial derivatives of bg_nll with respect to (p, alpha, beta).
void bg_nll_grad(double y, double p, double alpha, double beta, double wet_threshold,
                 double& d_p, double& d_alpha, double& d_beta);

// Marsaglia-Tsang draw from Gamma(alpha, scale); the alpha < 1 case boosts a
// Gamma(alpha+1) draw by U^(1/alpha).
double gamma_sample(RandomStream& rs, double alpha, double scale);

// Independent per-site draw: Bernoulli(p) picks wet/dry, wet amounts come
// from Gamma(alpha, scale beta), dry sites are exactly 0. Each site uses a
// disjoint substream of `stream`.
Tensor sample_bg_field(const BernoulliGammaField& field, const RandomStream& stream);

struct BgGrads {
    nn::NetworkGrads trunk, head_p, head_alpha, head_beta;
    void clear();
    void add(const BgGrads& other);
    void scale(float s);
};

// Convolutional per-site Bernoulli-Gamma regressor: shared conv trunk over
// the coarse predictors, then three dense heads (one per distribution
// parameter) across all fine-grid sites.
class BaselineModel {
public:
    explicit BaselineModel(BaselineConfig cfg);

    const BaselineConfig& config() const { return cfg_; }
    void init_params(std::uint64_t seed);

    // X [C,H_c,W_c] -> per-site distribution parameters. Deterministic.
    BernoulliGammaField forward(const Tensor& x) const;

    // Mean NLL over all sites for one (x, y) pair; accumulates parameter
    // gradients when grads is non-null.
    double nll_with_grads(const Tensor& x, const Tensor& y, double wet_threshold, BgGrads* grads,
                          double* relu_margin = nullptr) const;

    BgGrads make_grads() const;
    std::vector<nn::ParamBinding> bind(BgGrads& grads);

    std::vector<io::NamedTensor> to_named_tensors() const;
    static BaselineModel from_named_tensors(const std::vector<io::NamedTensor>& tensors,
                                            const std::string& source);

    const nn::Network& trunk_net() const { return trunk_; }
    const nn::Network& head_p_net() const { return head_p_; }
    const nn::Network& head_alpha_net() const { return head_alpha_; }
    const nn::Network& head_beta_net() const { return head_beta_; }

private:
    BaselineConfig cfg_;
    nn::Network trunk_;
    nn::Network head_p_;
    nn::Network head_alpha_;
    nn::Network head_beta_;
};

struct BaselineTrainConfig {
    int epochs = 100;
    int batch_size = 64;
    float learning_rate = 1e-4f;
    double wet_threshold = 1.0;
    std::uint64_t seed = 2025;
};

// Minibatch Adam on the mean per-site NLL over the training slice.
// Deterministic given the seed.
std::vector<double> train_baseline(BaselineModel& model, const synth::DownscalingDataset& data,
                                   const BaselineTrainConfig& cfg);

} // namespace downscaler::bg

#endif
