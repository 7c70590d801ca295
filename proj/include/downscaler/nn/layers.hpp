#ifndef DOWNSCALER_NN_LAYERS_HPP
#define DOWNSCALER_NN_LAYERS_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "downscaler/rng.hpp"
#include "downscaler/tensor.hpp"

namespace downscaler::nn {

enum class Padding { Same, Valid };
enum class Activation { Relu, Softplus, Sigmoid };

enum class LayerKind {
    Conv2d,
    Dense,
    Relu,
    Softplus,
    Sigmoid,
    Flatten,
    Reshape,
    Upsample2x,
};

// One layer of a sequential stack. Conv kernels must have odd extent so that
// same-padding is well defined.
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int out_channels = 0;              // conv2d
    int kernel = 0;                    // conv2d
    Padding padding = Padding::Same;   // conv2d
    int out_dim = 0;                   // dense
    std::vector<int> target_shape;     // reshape

    static LayerSpec conv2d(int out_channels, int kernel, Padding padding = Padding::Same);
    static LayerSpec dense(int out_dim);
    static LayerSpec relu() { return plain(LayerKind::Relu); }
    static LayerSpec softplus() { return plain(LayerKind::Softplus); }
    static LayerSpec sigmoid() { return plain(LayerKind::Sigmoid); }
    static LayerSpec flatten() { return plain(LayerKind::Flatten); }
    static LayerSpec reshape(std::vector<int> shape);
    static LayerSpec upsample2x() { return plain(LayerKind::Upsample2x); }

private:
    static LayerSpec plain(LayerKind kind) {
        LayerSpec s;
        s.kind = kind;
        return s;
    }
};

// ---- primitive ops -------------------------------------------------------
// All forward ops are pure. Backward ops accumulate (+=) into the parameter
// gradients and overwrite grad_input when it is requested.

// input [C_in,H,W], kernel [C_out,C_in,k,k], bias [C_out].
// Same padding keeps H,W; valid gives H-k+1, W-k+1.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                      Padding padding);
void conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& upstream,
                     Padding padding, Tensor& grad_kernel, Tensor& grad_bias,
                     Tensor* grad_input);

// input [n], weights [m,n], bias [m] -> [m]
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
void dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream,
                    Tensor& grad_weights, Tensor& grad_bias, Tensor* grad_input);

Tensor activation(const Tensor& x, Activation kind);
// Gradient with respect to x given the upstream gradient.
Tensor activation_backward(const Tensor& x, const Tensor& upstream, Activation kind);

// Vector concatenation (rank-1) and its adjoint split.
Tensor concat(const Tensor& a, const Tensor& b);
void concat_backward(const Tensor& upstream, std::size_t len_a, Tensor& grad_a, Tensor& grad_b);

// Nearest-neighbor 2x upsampling, [C,H,W] -> [C,2H,2W].
Tensor upsample2x_forward(const Tensor& x);
Tensor upsample2x_backward(const Tensor& upstream);

// ---- sequential network --------------------------------------------------

struct LayerParams {
    Tensor weight; // conv kernel or dense weights; empty when the layer has none
    Tensor bias;
};

struct NetworkGrads {
    std::vector<LayerParams> layers;
    void clear();
};

// Named view of one parameter tensor and its gradient buffer.
struct ParamBinding {
    std::string name;
    Tensor* value;
    Tensor* grad;
};

// A fixed stack of layers over a fixed input shape. Owns its parameters.
// Shapes are inferred and validated at construction.
class Network {
public:
    Network(std::string name, std::vector<int> input_shape, std::vector<LayerSpec> specs);

    const std::string& name() const { return name_; }
    const std::vector<int>& input_shape() const { return shapes_.front(); }
    const std::vector<int>& output_shape() const { return shapes_.back(); }
    const std::vector<LayerSpec>& specs() const { return specs_; }

    // He-normal weights, zero biases. Draw order is fixed by layer order.
    void init_params(RandomStream& rs);

    Tensor forward(const Tensor& input) const;

    // Per-layer inputs retained for the backward pass.
    struct Trace {
        std::vector<Tensor> inputs;
        Tensor output;
    };
    Tensor forward(const Tensor& input, Trace& trace) const;

    // Exact reverse-mode gradients of the composed forward map. Parameter
    // gradients accumulate into `grads`; the input gradient is written to
    // *input_grad when non-null.
    void backward(const Trace& trace, const Tensor& upstream, NetworkGrads& grads,
                  Tensor* input_grad) const;

    NetworkGrads make_grads() const;
    std::vector<ParamBinding> bind(NetworkGrads& grads);
    std::vector<std::pair<std::string, const Tensor*>> named_params() const;

    std::vector<LayerParams>& params() { return params_; }
    const std::vector<LayerParams>& params() const { return params_; }
    std::size_t param_count() const;

    // Smallest |pre-activation| seen by any relu layer in the trace;
    // +inf when the stack has no relu. Gradient-check harnesses use this to
    // reject instances sitting on the relu kink.
    double relu_input_margin(const Trace& trace) const;

private:
    std::string name_;
    std::vector<LayerSpec> specs_;
    std::vector<std::vector<int>> shapes_; // shapes_[i] = input of layer i; back() = output
    std::vector<LayerParams> params_;
};

} // namespace downscaler::nn

#endif
