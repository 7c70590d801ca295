#ifndef DOWNSCALER_TENSOR_HPP
#define DOWNSCALER_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "downscaler/error.hpp"

namespace downscaler {

// Dense n-dimensional float32 array, row-major. Carrier for fields,
// activations, parameters and gradients. data.size() always equals the
// product of the extents.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> shape_);
    Tensor(std::vector<int> shape_, std::vector<float> data_);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, float value);

    std::size_t size() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int extent(int axis) const { return shape[static_cast<std::size_t>(axis)]; }

    float* ptr() { return data.data(); }
    const float* ptr() const { return data.data(); }

    // Unchecked row-major accessors for the common ranks.
    float& at1(int i) { return data[static_cast<std::size_t>(i)]; }
    float at1(int i) const { return data[static_cast<std::size_t>(i)]; }
    float& at2(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    float at2(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    float& at3(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    float at3(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    float& at4(int a, int b, int c, int d) {
        return data[((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }
    float at4(int a, int b, int c, int d) const {
        return data[((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    // Fills with zeros without reallocating.
    void clear();
};

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

bool all_finite(const Tensor& t);

// Throws ShapeError naming `what` when the shapes disagree.
void require_shape(const Tensor& t, const std::vector<int>& expected, const std::string& what);

} // namespace downscaler

#endif
