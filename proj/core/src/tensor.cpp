#include "daal/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace daal::nd {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data,
               bool requires_grad)
    : shape_(std::move(shape)), data_(std::move(data)),
      requires_grad_(requires_grad) {
    if (shape_numel(shape_) != data_.size()) {
        throw std::invalid_argument(
            "Tensor: shape " + shape_to_string(shape_) + " wants " +
            std::to_string(shape_numel(shape_)) + " values, got " +
            std::to_string(data_.size()));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) {
    return Tensor({}, {value});
}

Tensor Tensor::vector(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw std::invalid_argument("Tensor::extent: axis " +
                                    std::to_string(axis) + " out of rank " +
                                    std::to_string(shape_.size()));
    }
    return shape_[axis];
}

double Tensor::at2(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
}

double& Tensor::at2(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw std::invalid_argument("Tensor::item: tensor has " +
                                    std::to_string(data_.size()) +
                                    " elements, expected 1");
    }
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

} // namespace daal::nd
