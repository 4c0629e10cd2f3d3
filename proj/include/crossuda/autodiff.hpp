#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "crossuda/tensor.hpp"

namespace crossuda::ad {

using crossuda::Tensor;

inline uint64_t next_node_id() {
  static std::atomic<uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

/// Thread-local gradient mode; inference forwards run inside NoGradGuard so
/// no graph is retained.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

template <class S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;
  bool requires_grad = false;
  uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor<S>::zeros(value.shape);
  }
};

/// Value in the computation tape. Copies share the underlying node.
template <class S>
class Var {
public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  static Var leaf(Tensor<S> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad && grad_mode();
    n->id = next_node_id();
    return Var(std::move(n));
  }

  static Var param(Tensor<S> value) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    n->requires_grad = true;  // parameters track gradients regardless of mode
    n->id = next_node_id();
    return Var(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<S>& value() const { return node_->value; }
  Tensor<S>& value() { return node_->value; }
  Tensor<S>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<int>& shape() const { return node_->value.shape; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  std::shared_ptr<Node<S>> node() const { return node_; }

  void zero_grad() {
    if (node_->grad.size()) node_->grad.data.setZero();
  }

  /// New leaf sharing this value, cut off from the tape.
  Var detach() const { return leaf(node_->value, false); }

  S scalar() const {
    require(node_->value.size() == 1, ErrorKind::argument, "not a scalar var");
    return node_->value.data[0];
  }

private:
  std::shared_ptr<Node<S>> node_;
};

namespace detail {

template <class S>
Var<S> make_op(Tensor<S> value, std::vector<Var<S>> parents,
               std::function<void(Node<S>&)> backward_fn) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->id = next_node_id();
  if (grad_mode()) {
    for (const auto& p : parents)
      if (p.requires_grad()) n->requires_grad = true;
    if (n->requires_grad) {
      for (const auto& p : parents) n->parents.push_back(p.node());
      n->backward_fn = std::move(backward_fn);
    }
  }
  return Var<S>(std::move(n));
}

template <class S>
void accumulate(const std::shared_ptr<Node<S>>& n, const Eigen::Array<S, Eigen::Dynamic, 1>& g) {
  if (!n->requires_grad) return;
  n->ensure_grad();
  n->grad.data += g;
}

}  // namespace detail

/// Reverse-mode sweep from a scalar root. Leaf gradients accumulate until
/// explicitly zeroed, so call zero_grad on parameters between steps.
template <class S>
void backward(const Var<S>& root) {
  require(root.value().size() == 1, ErrorKind::argument, "backward root must be scalar");
  if (!root.requires_grad()) return;

  std::vector<std::shared_ptr<Node<S>>> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::shared_ptr<Node<S>>> stack{root.node()};
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    if (!n->requires_grad || seen.count(n.get())) continue;
    seen.insert(n.get());
    order.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p);
  }
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a->id > b->id; });

  root.node()->ensure_grad();
  root.node()->grad.data[0] += S(1);
  for (const auto& n : order)
    if (n->backward_fn) n->backward_fn(*n);
}

// ---------------------------------------------------------------------------
// elementwise and reduction ops

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require(a.shape() == b.shape(), ErrorKind::argument, "add: shape mismatch");
  Tensor<S> out = a.value();
  out.data += b.value().data;
  auto an = a.node(), bn = b.node();
  return detail::make_op<S>(std::move(out), {a, b}, [an, bn](Node<S>& n) {
    detail::accumulate(an, n.grad.data);
    detail::accumulate(bn, n.grad.data);
  });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require(a.shape() == b.shape(), ErrorKind::argument, "sub: shape mismatch");
  Tensor<S> out = a.value();
  out.data -= b.value().data;
  auto an = a.node(), bn = b.node();
  return detail::make_op<S>(std::move(out), {a, b}, [an, bn](Node<S>& n) {
    detail::accumulate(an, n.grad.data);
    detail::accumulate(bn, (-n.grad.data).eval());
  });
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  require(a.shape() == b.shape(), ErrorKind::argument, "mul: shape mismatch");
  Tensor<S> out = a.value();
  out.data *= b.value().data;
  auto an = a.node(), bn = b.node();
  return detail::make_op<S>(std::move(out), {a, b}, [an, bn](Node<S>& n) {
    detail::accumulate(an, (n.grad.data * bn->value.data).eval());
    detail::accumulate(bn, (n.grad.data * an->value.data).eval());
  });
}

template <class S>
Var<S> div(const Var<S>& a, const Var<S>& b) {
  require(a.shape() == b.shape(), ErrorKind::argument, "div: shape mismatch");
  Tensor<S> out = a.value();
  out.data /= b.value().data;
  auto an = a.node(), bn = b.node();
  return detail::make_op<S>(std::move(out), {a, b}, [an, bn](Node<S>& n) {
    detail::accumulate(an, (n.grad.data / bn->value.data).eval());
    detail::accumulate(
        bn, (-n.grad.data * an->value.data / (bn->value.data * bn->value.data)).eval());
  });
}

/// alpha * a + beta, elementwise.
template <class S>
Var<S> affine(const Var<S>& a, S alpha, S beta = S(0)) {
  Tensor<S> out = a.value();
  out.data = alpha * out.data + beta;
  auto an = a.node();
  return detail::make_op<S>(std::move(out), {a}, [an, alpha](Node<S>& n) {
    detail::accumulate(an, (alpha * n.grad.data).eval());
  });
}

template <class S>
Var<S> add_const(const Var<S>& a, const Tensor<S>& t) {
  require(a.value().size() == t.size(), ErrorKind::argument, "add_const: size mismatch");
  Tensor<S> out = a.value();
  out.data += t.data;
  auto an = a.node();
  return detail::make_op<S>(std::move(out), {a},
                            [an](Node<S>& n) { detail::accumulate(an, n.grad.data); });
}

template <class S>
Var<S> leaky_relu(const Var<S>& a, S slope = S(0.01)) {
  Tensor<S> out = a.value();
  out.data = (out.data > S(0)).select(out.data, slope * out.data);
  auto an = a.node();
  return detail::make_op<S>(std::move(out), {a}, [an, slope](Node<S>& n) {
    detail::accumulate(
        an, ((an->value.data > S(0)).select(n.grad.data, slope * n.grad.data)).eval());
  });
}

template <class S>
Var<S> relu(const Var<S>& a) {
  return leaky_relu(a, S(0));
}

template <class S>
Var<S> tanh_act(const Var<S>& a) {
  Tensor<S> out = a.value();
  out.data = out.data.tanh();
  auto an = a.node();
  Tensor<S> saved = out;
  return detail::make_op<S>(std::move(out), {a}, [an, saved](Node<S>& n) {
    detail::accumulate(an, (n.grad.data * (S(1) - saved.data * saved.data)).eval());
  });
}

/// Inverted dropout; identity when disabled.
template <class S>
Var<S> dropout(const Var<S>& a, double p, Rng& rng, bool enabled) {
  if (!enabled || p <= 0.0) return a;
  require(p < 1.0, ErrorKind::argument, "dropout p must be < 1");
  Tensor<S> mask(a.shape());
  const S keep_scale = S(1.0 / (1.0 - p));
  for (int64_t i = 0; i < mask.size(); ++i)
    mask.data[i] = rng.uniform() < p ? S(0) : keep_scale;
  Tensor<S> out = a.value();
  out.data *= mask.data;
  auto an = a.node();
  return detail::make_op<S>(std::move(out), {a}, [an, mask](Node<S>& n) {
    detail::accumulate(an, (n.grad.data * mask.data).eval());
  });
}

template <class S>
Var<S> sum(const Var<S>& a) {
  Tensor<S> out({1});
  out.data[0] = a.value().data.sum();
  auto an = a.node();
  return detail::make_op<S>(std::move(out), {a}, [an](Node<S>& n) {
    detail::accumulate(
        an, Eigen::Array<S, Eigen::Dynamic, 1>::Constant(an->value.size(), n.grad.data[0])
                .eval());
  });
}

template <class S>
Var<S> mean(const Var<S>& a) {
  const S inv = S(1) / S(a.value().size());
  return affine(sum(a), inv);
}

/// Sum of a ⊙ w for a constant weight tensor.
template <class S>
Var<S> weighted_sum(const Var<S>& a, const Tensor<S>& w) {
  require(a.value().size() == w.size(), ErrorKind::argument, "weighted_sum: size mismatch");
  Tensor<S> out({1});
  out.data[0] = (a.value().data * w.data).sum();
  auto an = a.node();
  return detail::make_op<S>(std::move(out), {a}, [an, w](Node<S>& n) {
    detail::accumulate(an, (n.grad.data[0] * w.data).eval());
  });
}

/// mean((a - t)^2) against a constant target.
template <class S>
Var<S> mean_square_diff(const Var<S>& a, const Tensor<S>& t) {
  require(a.value().size() == t.size(), ErrorKind::argument,
          "mean_square_diff: size mismatch");
  const int64_t m = a.value().size();
  Tensor<S> out({1});
  out.data[0] = (a.value().data - t.data).square().sum() / S(m);
  auto an = a.node();
  return detail::make_op<S>(std::move(out), {a}, [an, t, m](Node<S>& n) {
    detail::accumulate(
        an, (S(2) * n.grad.data[0] / S(m) * (an->value.data - t.data)).eval());
  });
}

/// mean((a - c)^2) against a constant scalar (least-squares GAN terms).
template <class S>
Var<S> mean_square_to(const Var<S>& a, S c) {
  const int64_t m = a.value().size();
  Tensor<S> out({1});
  out.data[0] = (a.value().data - c).square().sum() / S(m);
  auto an = a.node();
  return detail::make_op<S>(std::move(out), {a}, [an, c, m](Node<S>& n) {
    detail::accumulate(an, (S(2) * n.grad.data[0] / S(m) * (an->value.data - c)).eval());
  });
}

// ---------------------------------------------------------------------------
// channel ops over [N, C, spatial...] layouts

template <class S>
Var<S> softmax_channels(const Var<S>& x) {
  const auto& shp = x.shape();
  require(shp.size() >= 2, ErrorKind::argument, "softmax_channels: rank < 2");
  const int n_batch = shp[0], n_ch = shp[1];
  const int64_t plane = x.value().tail_count(2);
  Tensor<S> out = x.value();
  for (int b = 0; b < n_batch; ++b) {
    S* base = out.data.data() + int64_t(b) * n_ch * plane;
    for (int64_t p = 0; p < plane; ++p) {
      S mx = base[p];
      for (int c = 1; c < n_ch; ++c) mx = std::max(mx, base[c * plane + p]);
      S z = S(0);
      for (int c = 0; c < n_ch; ++c) {
        S e = std::exp(base[c * plane + p] - mx);
        base[c * plane + p] = e;
        z += e;
      }
      for (int c = 0; c < n_ch; ++c) base[c * plane + p] /= z;
    }
  }
  auto xn = x.node();
  Tensor<S> probs = out;
  return detail::make_op<S>(
      std::move(out), {x}, [xn, probs, n_batch, n_ch, plane](Node<S>& n) {
        Eigen::Array<S, Eigen::Dynamic, 1> gx(probs.size());
        for (int b = 0; b < n_batch; ++b) {
          const S* pb = probs.data.data() + int64_t(b) * n_ch * plane;
          const S* gb = n.grad.data.data() + int64_t(b) * n_ch * plane;
          S* ob = gx.data() + int64_t(b) * n_ch * plane;
          for (int64_t p = 0; p < plane; ++p) {
            S dot = S(0);
            for (int c = 0; c < n_ch; ++c) dot += gb[c * plane + p] * pb[c * plane + p];
            for (int c = 0; c < n_ch; ++c)
              ob[c * plane + p] = pb[c * plane + p] * (gb[c * plane + p] - dot);
          }
        }
        detail::accumulate(xn, gx);
      });
}

/// Mean voxelwise cross-entropy of softmax(logits) against integer labels.
/// logits: [N, C, spatial...], labels: [N, spatial...].
template <class S>
Var<S> softmax_cross_entropy(const Var<S>& logits, const Tensor<int32_t>& labels) {
  const auto& shp = logits.shape();
  require(shp.size() >= 2, ErrorKind::argument, "softmax_cross_entropy: rank < 2");
  const int n_batch = shp[0], n_ch = shp[1];
  const int64_t plane = logits.value().tail_count(2);
  require(labels.size() == int64_t(n_batch) * plane, ErrorKind::argument,
          "softmax_cross_entropy: label size mismatch");
  const int64_t n_vox = int64_t(n_batch) * plane;

  Tensor<S> probs = logits.value();
  double total = 0.0;
  for (int b = 0; b < n_batch; ++b) {
    S* base = probs.data.data() + int64_t(b) * n_ch * plane;
    const int32_t* lab = labels.data.data() + int64_t(b) * plane;
    for (int64_t p = 0; p < plane; ++p) {
      const int32_t y = lab[p];
      require(y >= 0 && y < n_ch, ErrorKind::argument,
              "softmax_cross_entropy: label out of range");
      S mx = base[p];
      for (int c = 1; c < n_ch; ++c) mx = std::max(mx, base[c * plane + p]);
      S z = S(0);
      for (int c = 0; c < n_ch; ++c) {
        S e = std::exp(base[c * plane + p] - mx);
        base[c * plane + p] = e;
        z += e;
      }
      for (int c = 0; c < n_ch; ++c) base[c * plane + p] /= z;
      total += double(std::log(z) + mx) - double(logits.value().data[(int64_t(b) * n_ch + y) * plane + p]);
    }
  }
  Tensor<S> out({1});
  out.data[0] = S(total / double(n_vox));
  auto ln = logits.node();
  return detail::make_op<S>(
      std::move(out), {logits}, [ln, probs, labels, n_batch, n_ch, plane, n_vox](Node<S>& n) {
        Eigen::Array<S, Eigen::Dynamic, 1> g = probs.data;
        for (int b = 0; b < n_batch; ++b) {
          const int32_t* lab = labels.data.data() + int64_t(b) * plane;
          S* gb = g.data() + int64_t(b) * n_ch * plane;
          for (int64_t p = 0; p < plane; ++p) gb[lab[p] * plane + p] -= S(1);
        }
        g *= n.grad.data[0] / S(n_vox);
        detail::accumulate(ln, g);
      });
}

template <class S>
Var<S> concat_channels(const Var<S>& a, const Var<S>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  require(sa.size() == sb.size() && sa.size() >= 2 && sa[0] == sb[0], ErrorKind::argument,
          "concat_channels: incompatible shapes");
  for (size_t i = 2; i < sa.size(); ++i)
    require(sa[i] == sb[i], ErrorKind::argument, "concat_channels: spatial mismatch");
  const int n_batch = sa[0];
  const int64_t plane = a.value().tail_count(2);
  const int ca = sa[1], cb = sb[1];
  std::vector<int> shp = sa;
  shp[1] = ca + cb;
  Tensor<S> out(shp);
  for (int n = 0; n < n_batch; ++n) {
    out.data.segment(int64_t(n) * (ca + cb) * plane, int64_t(ca) * plane) =
        a.value().data.segment(int64_t(n) * ca * plane, int64_t(ca) * plane);
    out.data.segment(int64_t(n) * (ca + cb) * plane + int64_t(ca) * plane,
                     int64_t(cb) * plane) =
        b.value().data.segment(int64_t(n) * cb * plane, int64_t(cb) * plane);
  }
  auto an = a.node(), bn = b.node();
  return detail::make_op<S>(std::move(out), {a, b},
                            [an, bn, n_batch, ca, cb, plane](Node<S>& n) {
                              if (an->requires_grad) {
                                an->ensure_grad();
                                for (int k = 0; k < n_batch; ++k)
                                  an->grad.data.segment(int64_t(k) * ca * plane,
                                                        int64_t(ca) * plane) +=
                                      n.grad.data.segment(int64_t(k) * (ca + cb) * plane,
                                                          int64_t(ca) * plane);
                              }
                              if (bn->requires_grad) {
                                bn->ensure_grad();
                                for (int k = 0; k < n_batch; ++k)
                                  bn->grad.data.segment(int64_t(k) * cb * plane,
                                                        int64_t(cb) * plane) +=
                                      n.grad.data.segment(
                                          int64_t(k) * (ca + cb) * plane +
                                              int64_t(ca) * plane,
                                          int64_t(cb) * plane);
                              }
                            });
}

// ---------------------------------------------------------------------------
// feature-vector ops (PatchNCE machinery)

/// x: [M, d] row-major; W: [d_in, d_out]; b: [d_out].
template <class S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const int m = x.shape()[0], din = x.shape()[1];
  require(w.shape()[0] == din, ErrorKind::argument, "linear: weight shape mismatch");
  const int dout = w.shape()[1];
  require(b.shape()[0] == dout, ErrorKind::argument, "linear: bias shape mismatch");

  Tensor<S> out({m, dout});
  Eigen::Map<Mat> ym(out.data.data(), m, dout);
  Eigen::Map<const Mat> xm(x.value().data.data(), m, din);
  Eigen::Map<const Mat> wm(w.value().data.data(), din, dout);
  ym.noalias() = xm * wm;
  ym.rowwise() +=
      Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b.value().data.data(), dout);

  auto xn = x.node(), wn = w.node(), bn = b.node();
  return detail::make_op<S>(
      std::move(out), {x, w, b}, [xn, wn, bn, m, din, dout](Node<S>& n) {
        Eigen::Map<const Mat> gy(n.grad.data.data(), m, dout);
        Eigen::Map<const Mat> xm(xn->value.data.data(), m, din);
        Eigen::Map<const Mat> wm(wn->value.data.data(), din, dout);
        if (xn->requires_grad) {
          xn->ensure_grad();
          Eigen::Map<Mat> gx(xn->grad.data.data(), m, din);
          gx.noalias() += gy * wm.transpose();
        }
        if (wn->requires_grad) {
          wn->ensure_grad();
          Eigen::Map<Mat> gw(wn->grad.data.data(), din, dout);
          gw.noalias() += xm.transpose() * gy;
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> gb(bn->grad.data.data(), dout);
          gb += gy.colwise().sum();
        }
      });
}

/// Row-wise x / ||x||; rejects zero-norm rows.
template <class S>
Var<S> l2_normalize_rows(const Var<S>& x) {
  const int m = x.shape()[0], d = x.shape()[1];
  Tensor<S> out = x.value();
  Tensor<S> inv_norms({m});
  for (int i = 0; i < m; ++i) {
    auto row = out.data.segment(int64_t(i) * d, d);
    const S norm = std::sqrt(row.square().sum());
    require(norm > S(0), ErrorKind::numeric, "l2_normalize_rows: zero-norm feature");
    inv_norms.data[i] = S(1) / norm;
    row *= inv_norms.data[i];
  }
  auto xn = x.node();
  Tensor<S> y = out;
  return detail::make_op<S>(std::move(out), {x}, [xn, y, inv_norms, m, d](Node<S>& n) {
    Eigen::Array<S, Eigen::Dynamic, 1> gx(int64_t(m) * d);
    for (int i = 0; i < m; ++i) {
      auto yi = y.data.segment(int64_t(i) * d, d);
      auto gi = n.grad.data.segment(int64_t(i) * d, d);
      const S dot = (gi * yi).sum();
      gx.segment(int64_t(i) * d, d) = inv_norms.data[i] * (gi - dot * yi);
    }
    detail::accumulate(xn, gx);
  });
}

/// Row gather from a [M, d] matrix; rows may repeat. Backward scatter-adds.
template <class S>
Var<S> gather_rows(const Var<S>& x, const std::vector<int>& rows) {
  require(x.shape().size() == 2, ErrorKind::argument, "gather_rows: rank must be 2");
  const int d = x.shape()[1];
  const int k = static_cast<int>(rows.size());
  Tensor<S> out({k, d});
  for (int i = 0; i < k; ++i)
    out.data.segment(int64_t(i) * d, d) =
        x.value().data.segment(int64_t(rows[i]) * d, d);
  auto xn = x.node();
  return detail::make_op<S>(std::move(out), {x}, [xn, rows, d](Node<S>& n) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < rows.size(); ++i)
      xn->grad.data.segment(int64_t(rows[i]) * d, d) +=
          n.grad.data.segment(int64_t(i) * d, d);
  });
}

/// Same data, new shape.
template <class S>
Var<S> reshape(const Var<S>& x, std::vector<int> shape) {
  require(Tensor<S>::count(shape) == x.value().size(), ErrorKind::argument,
          "reshape: element count mismatch");
  Tensor<S> out = x.value();
  out.shape = std::move(shape);
  auto xn = x.node();
  return detail::make_op<S>(std::move(out), {x},
                            [xn](Node<S>& n) { detail::accumulate(xn, n.grad.data); });
}

/// InfoNCE over per-query candidate sets: logit 0 is q·pos/tau, logits
/// 1..N are q·neg_j/tau; the loss is mean cross-entropy against index 0.
/// q, pos: [M, d]; negs: [M, N, d].
template <class S>
Var<S> info_nce(const Var<S>& q, const Var<S>& pos, const Var<S>& negs, S tau) {
  const int m = q.shape()[0], d = q.shape()[1];
  require(pos.shape() == q.shape(), ErrorKind::argument, "info_nce: pos shape mismatch");
  require(negs.shape().size() == 3 && negs.shape()[0] == m && negs.shape()[2] == d,
          ErrorKind::argument, "info_nce: negs shape mismatch");
  require(tau > S(0), ErrorKind::argument, "info_nce: tau must be positive");
  const int n_neg = negs.shape()[1];

  // Softmax rows are stored for the backward pass.
  Tensor<S> soft({m, n_neg + 1});
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    auto qi = q.value().data.segment(int64_t(i) * d, d);
    std::vector<S> logits(static_cast<size_t>(n_neg) + 1);
    logits[0] = (qi * pos.value().data.segment(int64_t(i) * d, d)).sum() / tau;
    for (int j = 0; j < n_neg; ++j)
      logits[static_cast<size_t>(j) + 1] =
          (qi * negs.value().data.segment((int64_t(i) * n_neg + j) * d, d)).sum() / tau;
    S mx = logits[0];
    for (S l : logits) mx = std::max(mx, l);
    S z = S(0);
    for (size_t k = 0; k < logits.size(); ++k) {
      soft.data[int64_t(i) * (n_neg + 1) + int64_t(k)] = std::exp(logits[k] - mx);
      z += soft.data[int64_t(i) * (n_neg + 1) + int64_t(k)];
    }
    for (size_t k = 0; k < logits.size(); ++k)
      soft.data[int64_t(i) * (n_neg + 1) + int64_t(k)] /= z;
    total += double(std::log(z) + mx - logits[0]);
  }
  Tensor<S> out({1});
  out.data[0] = S(total / m);

  auto qn = q.node(), pn = pos.node(), nn = negs.node();
  return detail::make_op<S>(
      std::move(out), {q, pos, negs}, [qn, pn, nn, soft, m, d, n_neg, tau](Node<S>& n) {
        const S scale = n.grad.data[0] / (S(m) * tau);
        Eigen::Array<S, Eigen::Dynamic, 1> gq =
            Eigen::Array<S, Eigen::Dynamic, 1>::Zero(int64_t(m) * d);
        Eigen::Array<S, Eigen::Dynamic, 1> gp =
            Eigen::Array<S, Eigen::Dynamic, 1>::Zero(int64_t(m) * d);
        Eigen::Array<S, Eigen::Dynamic, 1> gn =
            Eigen::Array<S, Eigen::Dynamic, 1>::Zero(int64_t(m) * n_neg * d);
        for (int i = 0; i < m; ++i) {
          auto qi = qn->value.data.segment(int64_t(i) * d, d);
          const S s0 = soft.data[int64_t(i) * (n_neg + 1)];
          const S dl0 = (s0 - S(1)) * scale;
          gq.segment(int64_t(i) * d, d) +=
              dl0 * pn->value.data.segment(int64_t(i) * d, d);
          gp.segment(int64_t(i) * d, d) += dl0 * qi;
          for (int j = 0; j < n_neg; ++j) {
            const S dlj = soft.data[int64_t(i) * (n_neg + 1) + j + 1] * scale;
            gq.segment(int64_t(i) * d, d) +=
                dlj * nn->value.data.segment((int64_t(i) * n_neg + j) * d, d);
            gn.segment((int64_t(i) * n_neg + j) * d, d) += dlj * qi;
          }
        }
        detail::accumulate(qn, gq);
        detail::accumulate(pn, gp);
        detail::accumulate(nn, gn);
      });
}

}  // namespace crossuda::ad
