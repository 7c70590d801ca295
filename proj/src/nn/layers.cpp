#include "downscaler/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "downscaler/mathx.hpp"

namespace downscaler::nn {

LayerSpec LayerSpec::conv2d(int out_channels, int kernel, Padding padding) {
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.out_channels = out_channels;
    s.kernel = kernel;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::dense(int out_dim) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.out_dim = out_dim;
    return s;
}

LayerSpec LayerSpec::reshape(std::vector<int> shape) {
    LayerSpec s;
    s.kind = LayerKind::Reshape;
    s.target_shape = std::move(shape);
    return s;
}

// ---- conv2d ----------------------------------------------------------------

namespace {

void check_conv_shapes(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                       Padding padding) {
    if (input.rank() != 3)
        throw ShapeError("conv2d: input must be rank 3 [C,H,W], got " +
                         shape_to_string(input.shape));
    if (kernel.rank() != 4)
        throw ShapeError("conv2d: kernel must be rank 4 [C_out,C_in,k,k], got " +
                         shape_to_string(kernel.shape));
    const int c_in = input.shape[0], h = input.shape[1], w = input.shape[2];
    const int k = kernel.shape[2];
    if (kernel.shape[3] != k)
        throw ShapeError("conv2d: kernel must be square, got " + shape_to_string(kernel.shape));
    if (k % 2 == 0 || k < 1)
        throw ShapeError("conv2d: kernel extent must be odd and positive, got " +
                         std::to_string(k));
    if (kernel.shape[1] != c_in)
        throw ShapeError("conv2d: kernel input channels " + std::to_string(kernel.shape[1]) +
                         " != input channels " + std::to_string(c_in));
    if (bias.rank() != 1 || bias.shape[0] != kernel.shape[0])
        throw ShapeError("conv2d: bias shape " + shape_to_string(bias.shape) +
                         " != output channels " + std::to_string(kernel.shape[0]));
    if (padding == Padding::Valid && (h < k || w < k))
        throw ShapeError("conv2d: valid padding needs H,W >= k; got H=" + std::to_string(h) +
                         " W=" + std::to_string(w) + " k=" + std::to_string(k));
}

} // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                      Padding padding) {
    check_conv_shapes(input, kernel, bias, padding);
    const int c_in = input.shape[0], h = input.shape[1], w = input.shape[2];
    const int c_out = kernel.shape[0], k = kernel.shape[2];
    const int pad = padding == Padding::Same ? k / 2 : 0;
    const int oh = padding == Padding::Same ? h : h - k + 1;
    const int ow = padding == Padding::Same ? w : w - k + 1;

    Tensor out({c_out, oh, ow});
    const float* in = input.ptr();
    const float* ker = kernel.ptr();
    float* o = out.ptr();

    for (int oc = 0; oc < c_out; ++oc) {
        float* oplane = o + static_cast<std::size_t>(oc) * oh * ow;
        std::fill(oplane, oplane + static_cast<std::size_t>(oh) * ow, bias.data[oc]);
        for (int ic = 0; ic < c_in; ++ic) {
            const float* iplane = in + static_cast<std::size_t>(ic) * h * w;
            const float* kplane = ker + (static_cast<std::size_t>(oc) * c_in + ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                const int oy0 = std::max(0, pad - ky);
                const int oy1 = std::min(oh, h + pad - ky);
                for (int kx = 0; kx < k; ++kx) {
                    const float wv = kplane[ky * k + kx];
                    if (wv == 0.0f) continue;
                    const int ox0 = std::max(0, pad - kx);
                    const int ox1 = std::min(ow, w + pad - kx);
                    const int dx = kx - pad;
                    for (int oy = oy0; oy < oy1; ++oy) {
                        const float* irow = iplane + static_cast<std::size_t>(oy + ky - pad) * w;
                        float* orow = oplane + static_cast<std::size_t>(oy) * ow;
                        for (int ox = ox0; ox < ox1; ++ox) orow[ox] += wv * irow[ox + dx];
                    }
                }
            }
        }
    }
    return out;
}

void conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& upstream,
                     Padding padding, Tensor& grad_kernel, Tensor& grad_bias,
                     Tensor* grad_input) {
    const int c_in = input.shape[0], h = input.shape[1], w = input.shape[2];
    const int c_out = kernel.shape[0], k = kernel.shape[2];
    const int pad = padding == Padding::Same ? k / 2 : 0;
    const int oh = padding == Padding::Same ? h : h - k + 1;
    const int ow = padding == Padding::Same ? w : w - k + 1;
    require_shape(upstream, {c_out, oh, ow}, "conv2d backward upstream");
    require_shape(grad_kernel, kernel.shape, "conv2d grad_kernel");
    require_shape(grad_bias, {c_out}, "conv2d grad_bias");

    const float* in = input.ptr();
    const float* ker = kernel.ptr();
    const float* g = upstream.ptr();

    if (grad_input) {
        grad_input->shape = input.shape;
        grad_input->data.assign(input.size(), 0.0f);
    }

    for (int oc = 0; oc < c_out; ++oc) {
        const float* gplane = g + static_cast<std::size_t>(oc) * oh * ow;
        double db = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) db += gplane[i];
        grad_bias.data[oc] += static_cast<float>(db);

        for (int ic = 0; ic < c_in; ++ic) {
            const float* iplane = in + static_cast<std::size_t>(ic) * h * w;
            const float* kplane = ker + (static_cast<std::size_t>(oc) * c_in + ic) * k * k;
            float* gk = grad_kernel.ptr() + (static_cast<std::size_t>(oc) * c_in + ic) * k * k;
            float* gi = grad_input
                            ? grad_input->ptr() + static_cast<std::size_t>(ic) * h * w
                            : nullptr;
            for (int ky = 0; ky < k; ++ky) {
                const int oy0 = std::max(0, pad - ky);
                const int oy1 = std::min(oh, h + pad - ky);
                for (int kx = 0; kx < k; ++kx) {
                    const int ox0 = std::max(0, pad - kx);
                    const int ox1 = std::min(ow, w + pad - kx);
                    const int dx = kx - pad;
                    double dk = 0.0;
                    const float wv = kplane[ky * k + kx];
                    for (int oy = oy0; oy < oy1; ++oy) {
                        const float* irow = iplane + static_cast<std::size_t>(oy + ky - pad) * w;
                        const float* grow = gplane + static_cast<std::size_t>(oy) * ow;
                        if (gi) {
                            float* girow = gi + static_cast<std::size_t>(oy + ky - pad) * w;
                            for (int ox = ox0; ox < ox1; ++ox) {
                                dk += static_cast<double>(grow[ox]) * irow[ox + dx];
                                girow[ox + dx] += wv * grow[ox];
                            }
                        } else {
                            for (int ox = ox0; ox < ox1; ++ox)
                                dk += static_cast<double>(grow[ox]) * irow[ox + dx];
                        }
                    }
                    gk[ky * k + kx] += static_cast<float>(dk);
                }
            }
        }
    }
}

// ---- dense -----------------------------------------------------------------

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (input.rank() != 1)
        throw ShapeError("dense: input must be rank 1, got " + shape_to_string(input.shape));
    if (weights.rank() != 2)
        throw ShapeError("dense: weights must be rank 2, got " + shape_to_string(weights.shape));
    const int n = input.shape[0];
    const int m = weights.shape[0];
    if (weights.shape[1] != n)
        throw ShapeError("dense: weights width " + std::to_string(weights.shape[1]) +
                         " != input width " + std::to_string(n));
    if (bias.rank() != 1 || bias.shape[0] != m)
        throw ShapeError("dense: bias shape " + shape_to_string(bias.shape) + " != output width " +
                         std::to_string(m));

    Tensor out({m});
    const float* x = input.ptr();
    for (int i = 0; i < m; ++i) {
        const float* row = weights.ptr() + static_cast<std::size_t>(i) * n;
        float acc = bias.data[i];
        for (int j = 0; j < n; ++j) acc += row[j] * x[j];
        out.data[i] = acc;
    }
    return out;
}

void dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream,
                    Tensor& grad_weights, Tensor& grad_bias, Tensor* grad_input) {
    const int n = input.shape[0];
    const int m = weights.shape[0];
    require_shape(upstream, {m}, "dense backward upstream");
    require_shape(grad_weights, weights.shape, "dense grad_weights");
    require_shape(grad_bias, {m}, "dense grad_bias");

    const float* x = input.ptr();
    if (grad_input) {
        grad_input->shape = input.shape;
        grad_input->data.assign(input.size(), 0.0f);
    }
    for (int i = 0; i < m; ++i) {
        const float gi = upstream.data[i];
        grad_bias.data[i] += gi;
        float* wrow = grad_weights.ptr() + static_cast<std::size_t>(i) * n;
        const float* row = weights.ptr() + static_cast<std::size_t>(i) * n;
        if (grad_input) {
            float* gx = grad_input->ptr();
            for (int j = 0; j < n; ++j) {
                wrow[j] += gi * x[j];
                gx[j] += gi * row[j];
            }
        } else {
            for (int j = 0; j < n; ++j) wrow[j] += gi * x[j];
        }
    }
}

// ---- elementwise -----------------------------------------------------------

Tensor activation(const Tensor& x, Activation kind) {
    Tensor out = x;
    switch (kind) {
        case Activation::Relu:
            for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
            break;
        case Activation::Softplus:
            for (float& v : out.data) v = softplus_f(v);
            break;
        case Activation::Sigmoid:
            for (float& v : out.data) v = sigmoid_f(v);
            break;
    }
    return out;
}

Tensor activation_backward(const Tensor& x, const Tensor& upstream, Activation kind) {
    if (!x.same_shape(upstream))
        throw ShapeError("activation backward: upstream shape " + shape_to_string(upstream.shape) +
                         " != input shape " + shape_to_string(x.shape));
    Tensor grad = upstream;
    switch (kind) {
        case Activation::Relu:
            for (std::size_t i = 0; i < grad.size(); ++i)
                if (x.data[i] <= 0.0f) grad.data[i] = 0.0f;
            break;
        case Activation::Softplus:
            for (std::size_t i = 0; i < grad.size(); ++i) grad.data[i] *= sigmoid_f(x.data[i]);
            break;
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < grad.size(); ++i) {
                const float s = sigmoid_f(x.data[i]);
                grad.data[i] *= s * (1.0f - s);
            }
            break;
    }
    return grad;
}

Tensor concat(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1)
        throw ShapeError("concat: expects rank-1 inputs, got " + shape_to_string(a.shape) +
                         " and " + shape_to_string(b.shape));
    Tensor out({a.shape[0] + b.shape[0]});
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.shape[0]);
    return out;
}

void concat_backward(const Tensor& upstream, std::size_t len_a, Tensor& grad_a, Tensor& grad_b) {
    if (upstream.size() < len_a)
        throw ShapeError("concat backward: upstream shorter than first part");
    grad_a.shape = {static_cast<int>(len_a)};
    grad_a.data.assign(upstream.data.begin(), upstream.data.begin() + static_cast<long>(len_a));
    grad_b.shape = {static_cast<int>(upstream.size() - len_a)};
    grad_b.data.assign(upstream.data.begin() + static_cast<long>(len_a), upstream.data.end());
}

Tensor upsample2x_forward(const Tensor& x) {
    if (x.rank() != 3)
        throw ShapeError("upsample2x: input must be rank 3, got " + shape_to_string(x.shape));
    const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    Tensor out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y) {
            const float* irow = x.ptr() + (static_cast<std::size_t>(ch) * h + y / 2) * w;
            float* orow = out.ptr() + (static_cast<std::size_t>(ch) * 2 * h + y) * 2 * w;
            for (int xx = 0; xx < 2 * w; ++xx) orow[xx] = irow[xx / 2];
        }
    return out;
}

Tensor upsample2x_backward(const Tensor& upstream) {
    if (upstream.rank() != 3 || upstream.shape[1] % 2 != 0 || upstream.shape[2] % 2 != 0)
        throw ShapeError("upsample2x backward: upstream must be rank 3 with even H,W, got " +
                         shape_to_string(upstream.shape));
    const int c = upstream.shape[0], h = upstream.shape[1] / 2, w = upstream.shape[2] / 2;
    Tensor grad({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y) {
            const float* grow = upstream.ptr() + (static_cast<std::size_t>(ch) * 2 * h + y) * 2 * w;
            float* irow = grad.ptr() + (static_cast<std::size_t>(ch) * h + y / 2) * w;
            for (int xx = 0; xx < 2 * w; ++xx) irow[xx / 2] += grow[xx];
        }
    return grad;
}

// ---- sequential network ----------------------------------------------------

void NetworkGrads::clear() {
    for (auto& l : layers) {
        l.weight.clear();
        l.bias.clear();
    }
}

namespace {

std::vector<int> infer_output_shape(const LayerSpec& spec, const std::vector<int>& in,
                                    const std::string& net, std::size_t idx) {
    auto fail = [&](const std::string& msg) {
        throw ShapeError(net + " layer " + std::to_string(idx) + ": " + msg +
                         " (input " + shape_to_string(in) + ")");
    };
    switch (spec.kind) {
        case LayerKind::Conv2d: {
            if (in.size() != 3) fail("conv2d needs rank-3 input");
            if (spec.kernel < 1 || spec.kernel % 2 == 0) fail("conv kernel extent must be odd");
            if (spec.out_channels < 1) fail("conv output channels must be positive");
            if (spec.padding == Padding::Valid && (in[1] < spec.kernel || in[2] < spec.kernel))
                fail("valid padding needs spatial extents >= kernel");
            if (spec.padding == Padding::Same) return {spec.out_channels, in[1], in[2]};
            return {spec.out_channels, in[1] - spec.kernel + 1, in[2] - spec.kernel + 1};
        }
        case LayerKind::Dense:
            if (in.size() != 1) fail("dense needs rank-1 input (flatten first)");
            if (spec.out_dim < 1) fail("dense output width must be positive");
            return {spec.out_dim};
        case LayerKind::Flatten:
            return {static_cast<int>(shape_numel(in))};
        case LayerKind::Reshape:
            if (shape_numel(spec.target_shape) != shape_numel(in))
                fail("reshape to " + shape_to_string(spec.target_shape) + " changes element count");
            return spec.target_shape;
        case LayerKind::Upsample2x:
            if (in.size() != 3) fail("upsample2x needs rank-3 input");
            return {in[0], 2 * in[1], 2 * in[2]};
        case LayerKind::Relu:
        case LayerKind::Softplus:
        case LayerKind::Sigmoid:
            return in;
    }
    fail("unknown layer kind");
    return {};
}

} // namespace

Network::Network(std::string name, std::vector<int> input_shape, std::vector<LayerSpec> specs)
    : name_(std::move(name)), specs_(std::move(specs)) {
    shapes_.push_back(std::move(input_shape));
    params_.resize(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        const auto& spec = specs_[i];
        const std::vector<int> in = shapes_.back();
        shapes_.push_back(infer_output_shape(spec, in, name_, i));
        if (spec.kind == LayerKind::Conv2d) {
            params_[i].weight = Tensor({spec.out_channels, in[0], spec.kernel, spec.kernel});
            params_[i].bias = Tensor({spec.out_channels});
        } else if (spec.kind == LayerKind::Dense) {
            params_[i].weight = Tensor({spec.out_dim, in[0]});
            params_[i].bias = Tensor({spec.out_dim});
        }
    }
}

void Network::init_params(RandomStream& rs) {
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        auto& p = params_[i];
        if (p.weight.size() == 0) continue;
        int fan_in = specs_[i].kind == LayerKind::Conv2d
                         ? p.weight.shape[1] * p.weight.shape[2] * p.weight.shape[3]
                         : p.weight.shape[1];
        const float std = std::sqrt(2.0f / static_cast<float>(fan_in));
        for (float& v : p.weight.data) v = std * rs.normal_f();
        p.bias.clear();
    }
}

Tensor Network::forward(const Tensor& input) const {
    Trace trace;
    return forward(input, trace);
}

Tensor Network::forward(const Tensor& input, Trace& trace) const {
    require_shape(input, shapes_.front(), name_ + " input");
    trace.inputs.clear();
    trace.inputs.reserve(specs_.size());
    Tensor cur = input;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        const auto& spec = specs_[i];
        trace.inputs.push_back(cur);
        switch (spec.kind) {
            case LayerKind::Conv2d:
                cur = conv2d_forward(cur, params_[i].weight, params_[i].bias, spec.padding);
                break;
            case LayerKind::Dense:
                cur = dense_forward(cur, params_[i].weight, params_[i].bias);
                break;
            case LayerKind::Relu:
                cur = activation(cur, Activation::Relu);
                break;
            case LayerKind::Softplus:
                cur = activation(cur, Activation::Softplus);
                break;
            case LayerKind::Sigmoid:
                cur = activation(cur, Activation::Sigmoid);
                break;
            case LayerKind::Flatten:
                cur.shape = shapes_[i + 1];
                break;
            case LayerKind::Reshape:
                cur.shape = shapes_[i + 1];
                break;
            case LayerKind::Upsample2x:
                cur = upsample2x_forward(cur);
                break;
        }
    }
    trace.output = cur;
    return cur;
}

void Network::backward(const Trace& trace, const Tensor& upstream, NetworkGrads& grads,
                       Tensor* input_grad) const {
    require_shape(upstream, shapes_.back(), name_ + " upstream gradient");
    if (grads.layers.size() != specs_.size())
        throw ShapeError(name_ + ": gradient buffer layer count mismatch");

    Tensor g = upstream;
    for (std::size_t ii = specs_.size(); ii-- > 0;) {
        const auto& spec = specs_[ii];
        const Tensor& in = trace.inputs[ii];
        switch (spec.kind) {
            case LayerKind::Conv2d: {
                Tensor gi;
                conv2d_backward(in, params_[ii].weight, g, spec.padding,
                                grads.layers[ii].weight, grads.layers[ii].bias, &gi);
                g = std::move(gi);
                break;
            }
            case LayerKind::Dense: {
                Tensor gi;
                dense_backward(in, params_[ii].weight, g, grads.layers[ii].weight,
                               grads.layers[ii].bias, &gi);
                g = std::move(gi);
                break;
            }
            case LayerKind::Relu:
                g = activation_backward(in, g, Activation::Relu);
                break;
            case LayerKind::Softplus:
                g = activation_backward(in, g, Activation::Softplus);
                break;
            case LayerKind::Sigmoid:
                g = activation_backward(in, g, Activation::Sigmoid);
                break;
            case LayerKind::Flatten:
            case LayerKind::Reshape:
                g.shape = in.shape;
                break;
            case LayerKind::Upsample2x:
                g = upsample2x_backward(g);
                break;
        }
    }
    if (input_grad) *input_grad = std::move(g);
}

NetworkGrads Network::make_grads() const {
    NetworkGrads g;
    g.layers.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].weight.size() > 0) {
            g.layers[i].weight = Tensor(params_[i].weight.shape);
            g.layers[i].bias = Tensor(params_[i].bias.shape);
        }
    }
    return g;
}

std::vector<ParamBinding> Network::bind(NetworkGrads& grads) {
    std::vector<ParamBinding> refs;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].weight.size() == 0) continue;
        refs.push_back({name_ + "." + std::to_string(i) + ".weight", &params_[i].weight,
                        &grads.layers[i].weight});
        refs.push_back({name_ + "." + std::to_string(i) + ".bias", &params_[i].bias,
                        &grads.layers[i].bias});
    }
    return refs;
}

std::vector<std::pair<std::string, const Tensor*>> Network::named_params() const {
    std::vector<std::pair<std::string, const Tensor*>> refs;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].weight.size() == 0) continue;
        refs.emplace_back(name_ + "." + std::to_string(i) + ".weight", &params_[i].weight);
        refs.emplace_back(name_ + "." + std::to_string(i) + ".bias", &params_[i].bias);
    }
    return refs;
}

std::size_t Network::param_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.weight.size() + p.bias.size();
    return n;
}

double Network::relu_input_margin(const Trace& trace) const {
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        if (specs_[i].kind != LayerKind::Relu) continue;
        for (float v : trace.inputs[i].data)
            margin = std::min(margin, static_cast<double>(std::fabs(v)));
    }
    return margin;
}

} // namespace downscaler::nn
