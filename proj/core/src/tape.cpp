#include "deepen/tape.hpp"

#include <algorithm>

#include <cmath>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "eigen_map.hpp"

namespace deepen {

namespace {

// tanh-form GELU constants.
constexpr double kGeluC0 = 0.7978845608028653559;  // sqrt(2/pi)
constexpr double kGeluC1 = 0.044715;

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

}  // namespace

std::string role_str(const Role& r) {
  switch (r.kind) {
    case Role::Kind::Embedding:
      return "E";
    case Role::Kind::Readout:
      return "L";
    case Role::Kind::Hidden:
      return "H" + std::to_string(r.block);
  }
  return "?";
}

template struct Parameter<float>;
template struct Parameter<double>;

template <typename T>
const Tensor<T>& Tape<T>::val(Id id) const {
  const Node& n = node(id);
  return n.ext ? *n.ext : n.out;
}

template <typename T>
auto Tape<T>::push(Op op, std::initializer_list<Id> ins) -> Id {
  if (used_ == static_cast<int>(nodes_.size())) nodes_.emplace_back();
  Node& n = nodes_[static_cast<std::size_t>(used_)];
  n.op = op;
  n.nin = 0;
  for (Id i : ins) n.in[static_cast<std::size_t>(n.nin++)] = i;
  n.ext = nullptr;
  n.p = nullptr;
  n.grad_live = false;
  n.idata.clear();
  n.targ = T(0);
  n.heads = 0;
  return used_++;
}

template <typename T>
void Tape<T>::finish(Id id, const char* what) {
  if (check_finite_) {
    const Node& n = node(id);
    (n.ext ? *n.ext : n.out).check_finite(what);
  }
}

template <typename T>
T Tape<T>::scalar(Id id) const {
  const Tensor<T>& v = val(id);
  if (v.size() != 1) fail("scalar() on node of shape " + shape_str(v.shape()));
  return v[0];
}

template <typename T>
Tensor<T>& Tape<T>::grad_buf(Id id) {
  Node& n = node(id);
  if (!n.grad_live) {
    n.grad.reshape_uninit(val(id).shape());
    n.grad.zero();
    n.grad_live = true;
  }
  return n.grad;
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Id id) {
  if (!backward_done_) fail("grad() before backward()");
  return grad_buf(id);
}

template <typename T>
void Tape<T>::reset() {
  used_ = 0;
  backward_done_ = false;
}

// ---------------------------------------------------------------------
// graph inputs
// ---------------------------------------------------------------------

template <typename T>
auto Tape<T>::constant(Tensor<T> v) -> Id {
  Id id = push(Op::Constant, {});
  node(id).out = std::move(v);
  finish(id, "constant");
  return id;
}

template <typename T>
auto Tape<T>::param(Parameter<T>& p) -> Id {
  Id id = push(Op::Param, {});
  Node& n = node(id);
  n.ext = &p.value;  // zero-copy; the optimizer only mutates between passes
  n.p = &p;
  finish(id, "param");
  return id;
}

// ---------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------

template <typename T>
auto Tape<T>::add(Id a, Id b) -> Id {
  const Tensor<T>& va = val(a);
  const Tensor<T>& vb = val(b);
  if (va.shape() != vb.shape())
    fail("add: shape mismatch " + shape_str(va.shape()) + " vs " +
         shape_str(vb.shape()));
  Id id = push(Op::Add, {a, b});
  Node& n = node(id);
  n.out.reshape_uninit(va.shape());
  detail::ArrMap<T>(n.out.data(), n.out.size()) =
      detail::ConstArrMap<T>(va.data(), va.size()) +
      detail::ConstArrMap<T>(vb.data(), vb.size());
  finish(id, "add");
  return id;
}

template <typename T>
auto Tape<T>::add_rows(Id x, Id bias) -> Id {
  const Tensor<T>& vx = val(x);
  const Tensor<T>& vb = val(bias);
  const int ncol = vx.dim(vx.rank() - 1);
  if (vb.rank() != 1 || vb.dim(0) != ncol)
    fail("add_rows: bias " + shape_str(vb.shape()) + " does not match " +
         shape_str(vx.shape()));
  Id id = push(Op::AddRows, {x, bias});
  Node& n = node(id);
  n.out.reshape_uninit(vx.shape());
  const std::int64_t rows = vx.size() / ncol;
  detail::MatMap<T>(n.out.data(), rows, ncol) =
      detail::ConstMatMap<T>(vx.data(), rows, ncol).rowwise() +
      detail::ConstVecMap<T>(vb.data(), ncol).transpose();
  finish(id, "add_rows");
  return id;
}

template <typename T>
auto Tape<T>::scale(Id x, T factor) -> Id {
  const Tensor<T>& vx = val(x);
  Id id = push(Op::Scale, {x});
  Node& n = node(id);
  n.targ = factor;
  n.out.reshape_uninit(vx.shape());
  detail::ArrMap<T>(n.out.data(), n.out.size()) =
      detail::ConstArrMap<T>(vx.data(), vx.size()) * factor;
  finish(id, "scale");
  return id;
}

template <typename T>
auto Tape<T>::relu(Id x) -> Id {
  const Tensor<T>& vx = val(x);
  Id id = push(Op::Relu, {x});
  Node& n = node(id);
  n.out.reshape_uninit(vx.shape());
  detail::ArrMap<T>(n.out.data(), n.out.size()) =
      detail::ConstArrMap<T>(vx.data(), vx.size()).max(T(0));
  finish(id, "relu");
  return id;
}

template <typename T>
auto Tape<T>::gelu(Id x) -> Id {
  const Tensor<T>& vx = val(x);
  Id id = push(Op::Gelu, {x});
  Node& n = node(id);
  n.out.reshape_uninit(vx.shape());
  if (n.saved.empty()) n.saved.resize(1);
  n.saved[0].reshape_uninit(vx.shape());  // tanh(u), reused in backward
  const std::int64_t total = vx.size();
  constexpr std::int64_t kChunk = 1 << 15;
  const std::int64_t chunks = (total + kChunk - 1) / kChunk;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::int64_t ci = 0; ci < chunks; ++ci) {
    const std::int64_t lo = ci * kChunk;
    const std::int64_t len = std::min(kChunk, total - lo);
    detail::ConstArrMap<T> in(vx.data() + lo, len);
    detail::ArrMap<T> th(n.saved[0].data() + lo, len);
    th = ((in + T(kGeluC1) * in.cube()) * T(kGeluC0)).tanh();
    detail::ArrMap<T>(n.out.data() + lo, len) = T(0.5) * in * (T(1) + th);
  }
  finish(id, "gelu");
  return id;
}

// ---------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------

template <typename T>
auto Tape<T>::matmul(Id a, Id b) -> Id {
  const Tensor<T>& va = val(a);
  const Tensor<T>& vb = val(b);
  if (va.rank() < 2 || vb.rank() != 2)
    fail("matmul: need [..., k] x [k, n], got " + shape_str(va.shape()) +
         " x " + shape_str(vb.shape()));
  const int k = va.dim(va.rank() - 1);
  if (k != vb.dim(0))
    fail("matmul: inner extents differ, " + shape_str(va.shape()) + " x " +
         shape_str(vb.shape()));
  const int ncol = vb.dim(1);
  const std::int64_t rows = va.size() / k;

  Id id = push(Op::Matmul, {a, b});
  Node& n = node(id);
  Shape out_shape(va.shape().begin(), va.shape().end() - 1);
  out_shape.push_back(ncol);
  n.out.reshape_uninit(out_shape);
  detail::MatMap<T>(n.out.data(), rows, ncol).noalias() =
      detail::ConstMatMap<T>(va.data(), rows, k) *
      detail::ConstMatMap<T>(vb.data(), k, ncol);
  finish(id, "matmul");
  return id;
}

// ---------------------------------------------------------------------
// layer norm
// ---------------------------------------------------------------------

template <typename T>
auto Tape<T>::layer_norm(Id x, Id gain, T eps) -> Id {
  const Tensor<T>& vx = val(x);
  const Tensor<T>& vg = val(gain);
  const int ncol = vx.dim(vx.rank() - 1);
  if (vg.rank() != 1 || vg.dim(0) != ncol)
    fail("layer_norm: gain " + shape_str(vg.shape()) + " does not match " +
         shape_str(vx.shape()));
  if (!(eps > T(0))) fail("layer_norm: eps must be positive");

  Id id = push(Op::LayerNorm, {x, gain});
  Node& n = node(id);
  n.targ = eps;
  n.out.reshape_uninit(vx.shape());
  const std::int64_t rows = vx.size() / ncol;
  if (n.saved.size() < 2) n.saved.resize(2);
  n.saved[0].reshape_uninit(vx.shape());       // standardized rows
  n.saved[1].reshape_uninit({static_cast<int>(rows)});  // inverse stddev

  const T* gp = vg.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = vx.data() + r * ncol;
    T* hr = n.saved[0].data() + r * ncol;
    T* yr = n.out.data() + r * ncol;
    T mean = T(0);
    for (int j = 0; j < ncol; ++j) mean += xr[j];
    mean /= T(ncol);
    T var = T(0);
    for (int j = 0; j < ncol; ++j) {
      const T c = xr[j] - mean;
      var += c * c;
    }
    var /= T(ncol);
    const T inv = T(1) / std::sqrt(var + eps);
    n.saved[1][r] = inv;
    // A constant row has c == 0, so the standardized value is exactly 0
    // and the output stays 0 * gain regardless of eps.
    for (int j = 0; j < ncol; ++j) {
      const T h = (xr[j] - mean) * inv;
      hr[j] = h;
      yr[j] = h * gp[j];
    }
  }
  finish(id, "layer_norm");
  return id;
}

// ---------------------------------------------------------------------
// embedding gather
// ---------------------------------------------------------------------

template <typename T>
auto Tape<T>::embedding(Id table, std::vector<int> ids, Shape out_shape) -> Id {
  const Tensor<T>& vt = val(table);
  if (vt.rank() != 2) fail("embedding: table must be rank-2");
  const int nrow = vt.dim(0);
  const int d = vt.dim(1);
  if (out_shape.empty() || out_shape.back() != d ||
      shape_numel(out_shape) != static_cast<std::int64_t>(ids.size()) * d)
    fail("embedding: out shape " + shape_str(out_shape) +
         " inconsistent with " + std::to_string(ids.size()) + " ids of dim " +
         std::to_string(d));
  for (int i : ids)
    if (i < 0 || i >= nrow)
      fail("embedding: id " + std::to_string(i) + " out of range [0, " +
           std::to_string(nrow) + ")");

  Id id = push(Op::Embedding, {table});
  Node& n = node(id);
  n.idata = std::move(ids);
  n.out.reshape_uninit(out_shape);
  for (std::size_t i = 0; i < n.idata.size(); ++i) {
    const T* src = vt.data() + static_cast<std::int64_t>(n.idata[i]) * d;
    T* dst = n.out.data() + static_cast<std::int64_t>(i) * d;
    for (int j = 0; j < d; ++j) dst[j] = src[j];
  }
  finish(id, "embedding");
  return id;
}

// ---------------------------------------------------------------------
// causal attention
// ---------------------------------------------------------------------

template <typename T>
auto Tape<T>::causal_attention(Id x, Id wq, Id wk, Id wv, Id wo, int heads)
    -> Id {
  const Tensor<T>& vx = val(x);
  if (vx.rank() != 3) fail("causal_attention: x must be [B, T, d]");
  const int bsz = vx.dim(0), tlen = vx.dim(1), d = vx.dim(2);
  if (heads <= 0 || d % heads != 0)
    fail("causal_attention: width " + std::to_string(d) +
         " not divisible by heads " + std::to_string(heads));
  for (Id w : {wq, wk, wv, wo}) {
    const Tensor<T>& vw = val(w);
    if (vw.rank() != 2 || vw.dim(0) != d || vw.dim(1) != d)
      fail("causal_attention: projection must be [d, d], got " +
           shape_str(vw.shape()));
  }
  const int hd = d / heads;
  const T att_scale = T(1) / std::sqrt(static_cast<T>(hd));
  const std::int64_t rows = static_cast<std::int64_t>(bsz) * tlen;

  Id id = push(Op::CausalAttention, {x, wq, wk, wv, wo});
  Node& n = node(id);
  n.heads = heads;
  n.targ = att_scale;
  n.out.reshape_uninit(vx.shape());
  if (n.saved.size() < 5) n.saved.resize(5);
  Tensor<T>& q = n.saved[0];
  Tensor<T>& k = n.saved[1];
  Tensor<T>& v = n.saved[2];
  Tensor<T>& probs = n.saved[3];
  Tensor<T>& ctx = n.saved[4];
  q.reshape_uninit(vx.shape());
  k.reshape_uninit(vx.shape());
  v.reshape_uninit(vx.shape());
  probs.reshape_uninit({bsz, heads, tlen, tlen});
  ctx.reshape_uninit(vx.shape());

  detail::ConstMatMap<T> xm(vx.data(), rows, d);
  detail::MatMap<T>(q.data(), rows, d).noalias() =
      xm * detail::ConstMatMap<T>(val(wq).data(), d, d);
  detail::MatMap<T>(k.data(), rows, d).noalias() =
      xm * detail::ConstMatMap<T>(val(wk).data(), d, d);
  detail::MatMap<T>(v.data(), rows, d).noalias() =
      xm * detail::ConstMatMap<T>(val(wv).data(), d, d);

  // Slabs are disjoint per (b, h); the static schedule keeps a fixed
  // owner per slab, so results stay bit-identical for a thread count.
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int bh = 0; bh < bsz * heads; ++bh) {
    const int b = bh / heads;
    const int h = bh % heads;
    const std::int64_t slab = static_cast<std::int64_t>(b) * tlen * d;
    {
      const std::int64_t off = slab + static_cast<std::int64_t>(h) * hd;
      detail::ConstStridedMap<T> qh(q.data() + off, tlen, hd,
                                    Eigen::OuterStride<>(d));
      detail::ConstStridedMap<T> kh(k.data() + off, tlen, hd,
                                    Eigen::OuterStride<>(d));
      detail::ConstStridedMap<T> vh(v.data() + off, tlen, hd,
                                    Eigen::OuterStride<>(d));
      T* ph = probs.data() +
              (static_cast<std::int64_t>(b) * heads + h) * tlen * tlen;
      detail::MatMap<T> pm(ph, tlen, tlen);
      pm.noalias() = qh * kh.transpose() * att_scale;
      // Causal softmax row by row; masked entries become exact zeros.
      for (int i = 0; i < tlen; ++i) {
        T* row = ph + static_cast<std::int64_t>(i) * tlen;
        detail::ArrMap<T> live(row, i + 1);
        const T mx = live.maxCoeff();
        live = (live - mx).exp();
        live *= T(1) / live.sum();
        for (int j = i + 1; j < tlen; ++j) row[j] = T(0);
      }
      detail::StridedMap<T> oh(ctx.data() + off, tlen, hd,
                               Eigen::OuterStride<>(d));
      oh.noalias() = pm * vh;
    }
  }
  detail::MatMap<T>(n.out.data(), rows, d).noalias() =
      detail::ConstMatMap<T>(ctx.data(), rows, d) *
      detail::ConstMatMap<T>(val(wo).data(), d, d);
  finish(id, "causal_attention");
  return id;
}

// ---------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------

template <typename T>
auto Tape<T>::softmax_cross_entropy(Id logits, std::vector<int> targets) -> Id {
  const Tensor<T>& vz = val(logits);
  if (vz.rank() < 2) fail("softmax_cross_entropy: logits must be [..., V]");
  const int vocab = vz.dim(vz.rank() - 1);
  const std::int64_t rows = vz.size() / vocab;
  if (static_cast<std::int64_t>(targets.size()) != rows)
    fail("softmax_cross_entropy: " + std::to_string(targets.size()) +
         " targets for " + std::to_string(rows) + " rows");
  for (int t : targets)
    if (t < 0 || t >= vocab)
      fail("softmax_cross_entropy: target " + std::to_string(t) +
           " out of range [0, " + std::to_string(vocab) + ")");

  Id id = push(Op::SoftmaxXent, {logits});
  Node& n = node(id);
  n.idata = std::move(targets);
  if (n.saved.size() < 2) n.saved.resize(2);
  n.saved[0].reshape_uninit(vz.shape());  // per-row softmax
  n.saved[1].reshape_uninit({static_cast<int>(rows)});  // per-row nll
  n.out.reshape_uninit({1});

  Tensor<T>& nll = n.saved[1];
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* zr = vz.data() + r * vocab;
    T* pr = n.saved[0].data() + r * vocab;
    detail::ConstArrMap<T> z(zr, vocab);
    detail::ArrMap<T> prob(pr, vocab);
    const T mx = z.maxCoeff();
    prob = (z - mx).exp();
    const T denom = prob.sum();
    prob *= T(1) / denom;
    const int y = n.idata[static_cast<std::size_t>(r)];
    nll[r] = static_cast<T>(std::log(static_cast<double>(denom)) +
                            static_cast<double>(mx) -
                            static_cast<double>(zr[y]));
  }
  double total = 0.0;  // sequential reduction keeps the total bit-stable
  for (std::int64_t r = 0; r < rows; ++r)
    total += static_cast<double>(nll[r]);
  n.out[0] = static_cast<T>(total / static_cast<double>(rows));
  finish(id, "softmax_cross_entropy");
  return id;
}

template <typename T>
auto Tape<T>::mse(Id pred, Tensor<T> target) -> Id {
  const Tensor<T>& vp = val(pred);
  if (vp.shape() != target.shape())
    fail("mse: prediction " + shape_str(vp.shape()) + " vs target " +
         shape_str(target.shape()));
  Id id = push(Op::Mse, {pred});
  Node& n = node(id);
  if (n.saved.empty()) n.saved.resize(1);
  n.saved[0] = std::move(target);
  n.out.reshape_uninit({1});
  double total = 0.0;
  for (std::int64_t i = 0; i < vp.size(); ++i) {
    const double diff =
        static_cast<double>(vp[i]) - static_cast<double>(n.saved[0][i]);
    total += diff * diff;
  }
  n.out[0] = static_cast<T>(total / static_cast<double>(vp.size()));
  finish(id, "mse");
  return id;
}

template <typename T>
auto Tape<T>::sum(Id x) -> Id {
  const Tensor<T>& vx = val(x);
  Id id = push(Op::Sum, {x});
  Node& n = node(id);
  n.out.reshape_uninit({1});
  double total = 0.0;
  for (std::int64_t i = 0; i < vx.size(); ++i)
    total += static_cast<double>(vx[i]);
  n.out[0] = static_cast<T>(total);
  finish(id, "sum");
  return id;
}

// ---------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------

template <typename T>
void Tape<T>::backward(Id loss) {
  if (backward_done_)
    throw std::logic_error("backward() called twice on one tape");
  const Tensor<T>& lv = val(loss);
  if (lv.size() != 1)
    fail("backward: loss must be scalar, got " + shape_str(lv.shape()));
  backward_done_ = true;
  grad_buf(loss)[0] = T(1);
  for (Id i = loss; i >= 0; --i) {
    if (node(i).grad_live) backward_node(i);
  }
}

template <typename T>
void Tape<T>::backward_node(Id id) {
  Node& n = node(id);
  const Tensor<T>& g = n.grad;
  switch (n.op) {
    case Op::Constant:
      break;
    case Op::Param: {
      detail::ArrMap<T>(n.p->grad.data(), g.size()) +=
          detail::ConstArrMap<T>(g.data(), g.size());
      break;
    }
    case Op::Add: {
      for (int s = 0; s < 2; ++s) {
        Tensor<T>& gi = grad_buf(n.in[static_cast<std::size_t>(s)]);
        detail::ArrMap<T>(gi.data(), gi.size()) +=
            detail::ConstArrMap<T>(g.data(), g.size());
      }
      break;
    }
    case Op::AddRows: {
      Tensor<T>& gx = grad_buf(n.in[0]);
      detail::ArrMap<T>(gx.data(), gx.size()) +=
          detail::ConstArrMap<T>(g.data(), g.size());
      Tensor<T>& gb = grad_buf(n.in[1]);
      const int ncol = gb.dim(0);
      const std::int64_t rows = g.size() / ncol;
      detail::VecMap<T>(gb.data(), ncol) +=
          detail::ConstMatMap<T>(g.data(), rows, ncol).colwise().sum();
      break;
    }
    case Op::Scale: {
      Tensor<T>& gx = grad_buf(n.in[0]);
      detail::ArrMap<T>(gx.data(), gx.size()) +=
          detail::ConstArrMap<T>(g.data(), g.size()) * n.targ;
      break;
    }
    case Op::Relu: {
      const Tensor<T>& x = val(n.in[0]);
      Tensor<T>& gx = grad_buf(n.in[0]);
      detail::ArrMap<T>(gx.data(), gx.size()) +=
          detail::ConstArrMap<T>(g.data(), g.size()) *
          (detail::ConstArrMap<T>(x.data(), x.size()) > T(0)).template cast<T>();
      break;
    }
    case Op::Gelu: {
      const Tensor<T>& x = val(n.in[0]);
      Tensor<T>& gx = grad_buf(n.in[0]);
      const std::int64_t total = x.size();
      constexpr std::int64_t kChunk = 1 << 15;
      const std::int64_t chunks = (total + kChunk - 1) / kChunk;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (std::int64_t ci = 0; ci < chunks; ++ci) {
        const std::int64_t lo = ci * kChunk;
        const std::int64_t len = std::min(kChunk, total - lo);
        detail::ConstArrMap<T> in(x.data() + lo, len);
        detail::ConstArrMap<T> th(n.saved[0].data() + lo, len);
        detail::ArrMap<T>(gx.data() + lo, len) +=
            detail::ConstArrMap<T>(g.data() + lo, len) *
            (T(0.5) * (T(1) + th) +
             T(0.5) * in * (T(1) - th.square()) * T(kGeluC0) *
                 (T(1) + T(3) * T(kGeluC1) * in.square()));
      }
      break;
    }
    case Op::Matmul: {
      const Tensor<T>& a = val(n.in[0]);
      const Tensor<T>& b = val(n.in[1]);
      const int k = a.dim(a.rank() - 1);
      const int ncol = b.dim(1);
      const std::int64_t rows = a.size() / k;
      detail::ConstMatMap<T> gm(g.data(), rows, ncol);
      Tensor<T>& ga = grad_buf(n.in[0]);
      detail::MatMap<T>(ga.data(), rows, k).noalias() +=
          gm * detail::ConstMatMap<T>(b.data(), k, ncol).transpose();
      Tensor<T>& gb = grad_buf(n.in[1]);
      detail::MatMap<T>(gb.data(), k, ncol).noalias() +=
          detail::ConstMatMap<T>(a.data(), rows, k).transpose() * gm;
      break;
    }
    case Op::LayerNorm: {
      const Tensor<T>& x = val(n.in[0]);
      const Tensor<T>& gain = val(n.in[1]);
      Tensor<T>& gx = grad_buf(n.in[0]);
      Tensor<T>& gg = grad_buf(n.in[1]);
      const int ncol = gain.dim(0);
      const std::int64_t rows = x.size() / ncol;
      const Tensor<T>& xhat = n.saved[0];
      const Tensor<T>& inv = n.saved[1];
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* gr = g.data() + r * ncol;
        const T* hr = xhat.data() + r * ncol;
        T* gxr = gx.data() + r * ncol;
        T dh_mean = T(0), dhh_mean = T(0);
        for (int j = 0; j < ncol; ++j) {
          const T dh = gr[j] * gain[j];
          dh_mean += dh;
          dhh_mean += dh * hr[j];
        }
        dh_mean /= T(ncol);
        dhh_mean /= T(ncol);
        const T s = inv[r];
        for (int j = 0; j < ncol; ++j) {
          const T dh = gr[j] * gain[j];
          gxr[j] += s * (dh - dh_mean - hr[j] * dhh_mean);
        }
      }
      // gain gradient: sequential row sweep, vectorized across columns
      detail::VecMap<T> ggv(gg.data(), ncol);
      for (std::int64_t r = 0; r < rows; ++r)
        ggv += (detail::ConstArrMap<T>(g.data() + r * ncol, ncol) *
                detail::ConstArrMap<T>(xhat.data() + r * ncol, ncol))
                   .matrix();
      break;
    }
    case Op::Embedding: {
      Tensor<T>& gt = grad_buf(n.in[0]);
      const int d = gt.dim(1);
      for (std::size_t i = 0; i < n.idata.size(); ++i) {
        const T* src = g.data() + static_cast<std::int64_t>(i) * d;
        T* dst = gt.data() + static_cast<std::int64_t>(n.idata[i]) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
      break;
    }
    case Op::CausalAttention: {
      const Tensor<T>& x = val(n.in[0]);
      const int bsz = x.dim(0), tlen = x.dim(1), d = x.dim(2);
      const int heads = n.heads;
      const int hd = d / heads;
      const T att_scale = n.targ;
      const std::int64_t rows = static_cast<std::int64_t>(bsz) * tlen;
      // Scratch for dQ/dK/dV/dCtx and one [T x T] score block, kept in
      // the node so repeated steps reuse the buffers. Resize before
      // taking references into saved.
      if (n.saved.size() < 10) n.saved.resize(10);
      const Tensor<T>& q = n.saved[0];
      const Tensor<T>& k = n.saved[1];
      const Tensor<T>& v = n.saved[2];
      const Tensor<T>& probs = n.saved[3];
      const Tensor<T>& ctx = n.saved[4];
      Tensor<T>& dq = n.saved[5];
      Tensor<T>& dk = n.saved[6];
      Tensor<T>& dv = n.saved[7];
      Tensor<T>& dctx = n.saved[8];
      Tensor<T>& ds = n.saved[9];
      dq.reshape_uninit(x.shape());
      dk.reshape_uninit(x.shape());
      dv.reshape_uninit(x.shape());
      dctx.reshape_uninit(x.shape());
      ds.reshape_uninit({bsz * heads, tlen, tlen});

      detail::ConstMatMap<T> gm(g.data(), rows, d);
      // dWo and dCtx.
      detail::MatMap<T>(grad_buf(n.in[4]).data(), d, d).noalias() +=
          detail::ConstMatMap<T>(ctx.data(), rows, d).transpose() * gm;
      detail::MatMap<T>(dctx.data(), rows, d).noalias() =
          gm * detail::ConstMatMap<T>(val(n.in[4]).data(), d, d).transpose();

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int bh = 0; bh < bsz * heads; ++bh) {
        const int b = bh / heads;
        const int h = bh % heads;
        const std::int64_t slab = static_cast<std::int64_t>(b) * tlen * d;
        {
          const std::int64_t off = slab + static_cast<std::int64_t>(h) * hd;
          const Eigen::OuterStride<> stride(d);
          detail::ConstStridedMap<T> qh(q.data() + off, tlen, hd, stride);
          detail::ConstStridedMap<T> kh(k.data() + off, tlen, hd, stride);
          detail::ConstStridedMap<T> vh(v.data() + off, tlen, hd, stride);
          detail::ConstStridedMap<T> doh(dctx.data() + off, tlen, hd, stride);
          const T* ph = probs.data() +
                        (static_cast<std::int64_t>(b) * heads + h) * tlen * tlen;
          detail::ConstMatMap<T> pm(ph, tlen, tlen);

          detail::StridedMap<T> dvh(dv.data() + off, tlen, hd, stride);
          dvh.noalias() = pm.transpose() * doh;

          T* dsd = ds.data() + static_cast<std::int64_t>(bh) * tlen * tlen;
          detail::MatMap<T> dsm(dsd, tlen, tlen);
          dsm.noalias() = doh * vh.transpose();  // dP
          // Softmax backward per causal row: dS = P * (dP - sum(dP*P)).
          for (int i = 0; i < tlen; ++i) {
            T* dsr = dsd + static_cast<std::int64_t>(i) * tlen;
            const T* pr = ph + static_cast<std::int64_t>(i) * tlen;
            detail::ArrMap<T> dlive(dsr, i + 1);
            detail::ConstArrMap<T> plive(pr, i + 1);
            const T dot = (dlive * plive).sum();
            dlive = plive * (dlive - dot);
            for (int j = i + 1; j < tlen; ++j) dsr[j] = T(0);
          }
          detail::StridedMap<T> dqh(dq.data() + off, tlen, hd, stride);
          detail::StridedMap<T> dkh(dk.data() + off, tlen, hd, stride);
          dqh.noalias() = dsm * kh * att_scale;
          dkh.noalias() = dsm.transpose() * qh * att_scale;
        }
      }

      detail::ConstMatMap<T> xm(x.data(), rows, d);
      detail::ConstMatMap<T> dqm(dq.data(), rows, d);
      detail::ConstMatMap<T> dkm(dk.data(), rows, d);
      detail::ConstMatMap<T> dvm(dv.data(), rows, d);
      detail::MatMap<T>(grad_buf(n.in[1]).data(), d, d).noalias() +=
          xm.transpose() * dqm;
      detail::MatMap<T>(grad_buf(n.in[2]).data(), d, d).noalias() +=
          xm.transpose() * dkm;
      detail::MatMap<T>(grad_buf(n.in[3]).data(), d, d).noalias() +=
          xm.transpose() * dvm;
      detail::MatMap<T> gx(grad_buf(n.in[0]).data(), rows, d);
      gx.noalias() +=
          dqm * detail::ConstMatMap<T>(val(n.in[1]).data(), d, d).transpose();
      gx.noalias() +=
          dkm * detail::ConstMatMap<T>(val(n.in[2]).data(), d, d).transpose();
      gx.noalias() +=
          dvm * detail::ConstMatMap<T>(val(n.in[3]).data(), d, d).transpose();
      break;
    }
    case Op::SoftmaxXent: {
      const Tensor<T>& probs = n.saved[0];
      Tensor<T>& gz = grad_buf(n.in[0]);
      const int vocab = probs.dim(probs.rank() - 1);
      const std::int64_t rows = probs.size() / vocab;
      const T gs = g[0] / static_cast<T>(rows);
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* pr = probs.data() + r * vocab;
        T* gr = gz.data() + r * vocab;
        for (int j = 0; j < vocab; ++j) gr[j] += gs * pr[j];
        gr[n.idata[static_cast<std::size_t>(r)]] -= gs;
      }
      break;
    }
    case Op::Mse: {
      const Tensor<T>& p = val(n.in[0]);
      const Tensor<T>& t = n.saved[0];
      Tensor<T>& gp = grad_buf(n.in[0]);
      const T gs = g[0] * T(2) / static_cast<T>(p.size());
      for (std::int64_t i = 0; i < p.size(); ++i)
        gp[i] += gs * (p[i] - t[i]);
      break;
    }
    case Op::Sum: {
      Tensor<T>& gx = grad_buf(n.in[0]);
      detail::ArrMap<T>(gx.data(), gx.size()) += g[0];
      break;
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace deepen
