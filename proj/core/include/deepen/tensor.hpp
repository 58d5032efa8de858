#pragma once

#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace deepen {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

// 64-byte-aligned storage. Keeping every buffer on the same alignment
// makes the vectorized kernels pick identical code paths regardless of
// heap history, which is what makes losses bit-reproducible.
template <typename T, std::size_t Align = 64>
struct AlignedAlloc {
  using value_type = T;
  AlignedAlloc() = default;
  template <class U>
  AlignedAlloc(const AlignedAlloc<U, Align>&) noexcept {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(
        ::operator new(n * sizeof(T), std::align_val_t(Align)));
  }
  void deallocate(T* p, std::size_t) noexcept {
    ::operator delete(p, std::align_val_t(Align));
  }
  template <class U>
  struct rebind {
    using other = AlignedAlloc<U, Align>;
  };
  template <class U>
  bool operator==(const AlignedAlloc<U, Align>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAlloc<T>>;

// Dense n-dimensional array, row-major, owning its storage. The scalar
// type is double for tests and the theory module and float for training
// throughput; the run-level precision flag selects between the two
// instantiations.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, AlignedVector<T> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> flat() { return std::span<T>(data_); }
  std::span<const T> flat() const { return std::span<const T>(data_); }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const {
    return data_[static_cast<std::size_t>(i)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Reuses storage when the element count is unchanged; contents are
  // unspecified afterwards. Used by the tape to recycle node buffers
  // across training steps.
  void reshape_uninit(const Shape& shape);

  void fill(T value);
  void zero() { fill(T(0)); }

  // True when every element is finite.
  bool all_finite() const;

  // Throws std::runtime_error naming `what` if any element is NaN/Inf.
  void check_finite(const char* what) const;

  template <typename U>
  Tensor<U> cast() const {
    AlignedVector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i)
      out[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace deepen
