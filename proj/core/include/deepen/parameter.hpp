#pragma once

#include <string>

#include "deepen/tensor.hpp"

namespace deepen {

// Layer-role tag. Every parameter belongs to exactly one of: the
// embedding side E, a hidden residual block H(i), or the readout side L.
// Assigned at construction, immutable afterwards.
struct Role {
  enum class Kind { Embedding, Hidden, Readout };
  Kind kind = Kind::Hidden;
  int block = -1;  // hidden block position; -1 for E and L

  static Role E() { return {Kind::Embedding, -1}; }
  static Role H(int block) { return {Kind::Hidden, block}; }
  static Role L() { return {Kind::Readout, -1}; }

  bool operator==(const Role&) const = default;
};

std::string role_str(const Role& r);

template <typename T>
struct Parameter {
  std::string id;  // stable unique identifier; survives depth expansion
  Role role;
  Tensor<T> value;
  Tensor<T> grad;  // same shape as value

  Parameter() = default;
  Parameter(std::string id_in, Role role_in, Tensor<T> value_in)
      : id(std::move(id_in)),
        role(role_in),
        value(std::move(value_in)),
        grad(Tensor<T>::zeros(value.shape())) {}

  int rank() const { return value.rank(); }
  void zero_grad() { grad.zero(); }
};

extern template struct Parameter<float>;
extern template struct Parameter<double>;

}  // namespace deepen
