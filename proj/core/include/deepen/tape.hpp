#pragma once

#include <array>
#include <deque>
#include <type_traits>
#include <utility>
#include <vector>

#include "deepen/parameter.hpp"
#include "deepen/tensor.hpp"

namespace deepen {

// Records a forward pass over the fixed operator set and replays it in
// reverse for exact gradients. Nodes are processed in creation order on
// the way forward and in strict reverse creation order on the way back,
// so gradient accumulation is deterministic: the same seed gives
// bit-identical losses and gradients.
//
// A tape is single-threaded and accepts one backward() per forward pass.
// reset() starts a new pass while recycling node storage, which keeps
// training steps allocation-free after the first step.
template <typename T>
class Tape {
 public:
  using Id = int;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // When enabled, every operator output is validated and non-finite
  // values raise instead of propagating. Defaults to on at 64-bit
  // (tests, theory) and off at 32-bit (training throughput).
  void set_check_finite(bool on) { check_finite_ = on; }

  // Graph inputs.
  Id constant(Tensor<T> value);
  Id param(Parameter<T>& p);

  // Elementwise and shape ops.
  Id add(Id a, Id b);             // same-shape elementwise sum
  Id add_rows(Id x, Id bias);     // [..., n] + [n], broadcast over rows
  Id scale(Id x, T factor);
  Id relu(Id x);
  Id gelu(Id x);  // tanh form

  // [..., k] x [k, n]; leading axes of the left operand are flattened
  // into rows.
  Id matmul(Id a, Id b);

  // Standardizes the last axis and multiplies by gain; a zero gain
  // forces an exactly-zero output.
  Id layer_norm(Id x, Id gain, T eps);

  // Row gather: out[i] = table[ids[i]]. out_shape fixes the layout of
  // the result (e.g. {B, T, d}).
  Id embedding(Id table, std::vector<int> ids, Shape out_shape);

  // Multi-head scaled-dot-product self-attention with a causal mask,
  // including the q/k/v/output projections. x: [B, T, d].
  Id causal_attention(Id x, Id wq, Id wk, Id wv, Id wo, int heads);

  // Mean negative log-likelihood over rows, max-stabilized.
  Id softmax_cross_entropy(Id logits, std::vector<int> targets);

  // Mean squared error against a fixed target.
  Id mse(Id pred, Tensor<T> target);

  Id sum(Id x);

  const Tensor<T>& value(Id id) const { return val(id); }
  T scalar(Id id) const;

  // Reverse sweep from a scalar loss. Accumulates into Parameter::grad
  // of every reachable parameter. Throws if called twice on one pass.
  void backward(Id loss);

  // Gradient buffer of a node (valid after backward; zero tensor if the
  // node was unreachable from the loss).
  const Tensor<T>& grad(Id id);

  void reset();
  int size() const { return used_; }

 private:
  enum class Op {
    Constant,
    Param,
    Add,
    AddRows,
    Scale,
    Relu,
    Gelu,
    Matmul,
    LayerNorm,
    Embedding,
    CausalAttention,
    SoftmaxXent,
    Mse,
    Sum,
  };

  struct Node {
    Op op = Op::Constant;
    std::array<Id, 5> in{};
    int nin = 0;
    Tensor<T> out;
    const Tensor<T>* ext = nullptr;  // external value (Param leaves)
    Parameter<T>* p = nullptr;
    Tensor<T> grad;
    bool grad_live = false;
    std::vector<Tensor<T>> saved;  // forward scratch kept for backward
    std::vector<int> idata;        // token ids or targets
    T targ = T(0);                 // scale factor or layer-norm eps
    int heads = 0;
  };

  const Tensor<T>& val(Id id) const;
  Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(Id id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Id push(Op op, std::initializer_list<Id> ins);
  Tensor<T>& grad_buf(Id id);  // allocate+zero on first touch
  void finish(Id id, const char* what);

  void backward_node(Id id);

  std::deque<Node> nodes_;
  int used_ = 0;
  bool backward_done_ = false;
  bool check_finite_ = std::is_same_v<T, double>;
};

extern template class Tape<float>;
extern template class Tape<double>;

// Central-difference gradient oracle: (f(x+h e_i) - f(x-h e_i)) / 2h per
// coordinate. Slow path, test use only; independent of the tape.
template <typename T, typename F>
Tensor<T> finite_difference_gradient(F&& f, const Tensor<T>& x, T h) {
  Tensor<T> g(x.shape());
  Tensor<T> probe = x;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const T saved = probe[i];
    probe[i] = saved + h;
    const T up = f(std::as_const(probe));
    probe[i] = saved - h;
    const T down = f(std::as_const(probe));
    probe[i] = saved;
    g[i] = (up - down) / (T(2) * h);
  }
  return g;
}

}  // namespace deepen
