#ifndef DOWNSCALER_NN_ADAM_HPP
#define DOWNSCALER_NN_ADAM_HPP

#include <cstdint>
#include <vector>

#include "downscaler/tensor.hpp"

namespace downscaler::nn {

struct AdamConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// Per-parameter first/second moment buffers plus the shared step counter.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(const std::vector<const Tensor*>& params);

    std::int64_t step() const { return step_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }

    // Standard bias-corrected update, applied in parameter order. Throws
    // NumericError on a non-finite gradient so training aborts instead of
    // silently corrupting the parameters.
    void update(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
                const AdamConfig& cfg);

private:
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::int64_t step_ = 0;
};

} // namespace downscaler::nn

#endif
