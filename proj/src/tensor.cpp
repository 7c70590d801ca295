#include "downscaler/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace downscaler {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) {
        if (e <= 0)
            throw ShapeError("tensor extent must be positive, got " + std::to_string(e) +
                             " in shape " + shape_to_string(shape));
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape_) : shape(std::move(shape_)) {
    data.assign(shape_numel(shape), 0.0f);
}

Tensor::Tensor(std::vector<int> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (data.size() != shape_numel(shape))
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape));
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t(std::move(shape));
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
}

void Tensor::clear() {
    std::memset(data.data(), 0, data.size() * sizeof(float));
}

bool all_finite(const Tensor& t) {
    for (float v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

void require_shape(const Tensor& t, const std::vector<int>& expected, const std::string& what) {
    if (t.shape != expected)
        throw ShapeError(what + ": expected shape " + shape_to_string(expected) + ", got " +
                         shape_to_string(t.shape));
}

} // namespace downscaler
