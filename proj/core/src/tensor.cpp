#include "deepen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace deepen {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

template <typename T>
Tensor<T>::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (int d : shape_) {
    if (d <= 0)
      throw std::invalid_argument("tensor extents must be positive, got " +
                                  shape_str(shape_));
  }
  data_.assign(static_cast<std::size_t>(shape_numel(shape_)), T(0));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, AlignedVector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size()))
    throw std::invalid_argument("tensor data length " +
                                std::to_string(data_.size()) +
                                " does not match shape " + shape_str(shape_));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

template <typename T>
void Tensor<T>::reshape_uninit(const Shape& shape) {
  shape_ = shape;
  data_.resize(static_cast<std::size_t>(shape_numel(shape)));
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : data_)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename T>
void Tensor<T>::check_finite(const char* what) const {
  if (!all_finite())
    throw std::runtime_error(std::string("non-finite values in ") + what);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace deepen
