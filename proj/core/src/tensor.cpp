#include "nsd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace nsd {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

void throw_dimension(const std::string& op, const std::string& detail) {
  throw Error(ErrorKind::kDimension, op + ": " + detail);
}

template <class T>
Tensor<T>::Tensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (std::size_t d : shape_) {
    if (d == 0) throw_dimension("Tensor", "zero-sized axis in " + shape_string(shape_));
  }
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw_dimension("Tensor", "shape " + shape_string(shape_) + " needs " +
                                  std::to_string(shape_size(shape_)) + " values, got " +
                                  std::to_string(data_.size()));
  }
}

template <class T>
Tensor<T> Tensor<T>::from(std::initializer_list<T> values) {
  return Tensor(Shape{values.size()}, std::vector<T>(values));
}

template <class T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw_dimension("Tensor::dim", "axis " + std::to_string(axis) + " out of range for " +
                                       shape_string(shape_));
  }
  return shape_[axis];
}

template <class T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

template <class T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <class T>
void Tensor<T>::check_finite(const std::string& context) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw Error(ErrorKind::kNumeric, context + ": non-finite value at flat index " +
                                           std::to_string(i));
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace nsd
