#pragma once

#include <string>

#include "crossuda/autodiff.hpp"

namespace crossuda::ad {

using RowMat =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
using RowMatT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

template <class S>
std::vector<S>& col_scratch() {
  thread_local std::vector<S> buf;
  return buf;
}

// im2col for one sample of a 2D conv: row-major (Cin*kh*kw) x (Ho*Wo).
template <class S>
void im2col2d(const S* x, int cin, int h, int w, int kh, int kw, int stride, int pad,
              int ho, int wo, S* col) {
  const int64_t p_total = int64_t(ho) * wo;
  for (int c = 0; c < cin; ++c)
    for (int dy = 0; dy < kh; ++dy)
      for (int dx = 0; dx < kw; ++dx) {
        S* dst = col + ((int64_t(c) * kh + dy) * kw + dx) * p_total;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + dy;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, S(0));
            dst += wo;
            continue;
          }
          const S* src = x + (int64_t(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + dx;
            *dst++ = (ix >= 0 && ix < w) ? src[ix] : S(0);
          }
        }
      }
}

template <class S>
void col2im2d(const S* col, int cin, int h, int w, int kh, int kw, int stride, int pad,
              int ho, int wo, S* gx) {
  const int64_t p_total = int64_t(ho) * wo;
  for (int c = 0; c < cin; ++c)
    for (int dy = 0; dy < kh; ++dy)
      for (int dx = 0; dx < kw; ++dx) {
        const S* src = col + ((int64_t(c) * kh + dy) * kw + dx) * p_total;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + dy;
          if (iy < 0 || iy >= h) {
            src += wo;
            continue;
          }
          S* dst = gx + (int64_t(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + dx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
          src += wo;
        }
      }
}

template <class S>
void im2col3d(const S* x, int cin, int d, int h, int w, int k, int stride, int pad,
              int do_, int ho, int wo, S* col) {
  const int64_t p_total = int64_t(do_) * ho * wo;
  for (int c = 0; c < cin; ++c)
    for (int dz = 0; dz < k; ++dz)
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          S* dst = col + (((int64_t(c) * k + dz) * k + dy) * k + dx) * p_total;
          for (int oz = 0; oz < do_; ++oz) {
            const int iz = oz * stride - pad + dz;
            const bool z_ok = iz >= 0 && iz < d;
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * stride - pad + dy;
              if (!z_ok || iy < 0 || iy >= h) {
                std::fill(dst, dst + wo, S(0));
                dst += wo;
                continue;
              }
              const S* src = x + ((int64_t(c) * d + iz) * h + iy) * w;
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride - pad + dx;
                *dst++ = (ix >= 0 && ix < w) ? src[ix] : S(0);
              }
            }
          }
        }
}

template <class S>
void col2im3d(const S* col, int cin, int d, int h, int w, int k, int stride, int pad,
              int do_, int ho, int wo, S* gx) {
  const int64_t p_total = int64_t(do_) * ho * wo;
  for (int c = 0; c < cin; ++c)
    for (int dz = 0; dz < k; ++dz)
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          const S* src = col + (((int64_t(c) * k + dz) * k + dy) * k + dx) * p_total;
          for (int oz = 0; oz < do_; ++oz) {
            const int iz = oz * stride - pad + dz;
            const bool z_ok = iz >= 0 && iz < d;
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * stride - pad + dy;
              if (!z_ok || iy < 0 || iy >= h) {
                src += wo;
                continue;
              }
              S* dst = gx + ((int64_t(c) * d + iz) * h + iy) * w;
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride - pad + dx;
                if (ix >= 0 && ix < w) dst[ix] += src[ox];
              }
              src += wo;
            }
          }
        }
}

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

/// 2D convolution. x: [N, Cin, H, W]; w: [Cout, Cin, kh, kw]; b: [Cout].
template <class S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int stride, int pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  require(xs.size() == 4 && ws.size() == 4 && xs[1] == ws[1], ErrorKind::argument,
          "conv2d: shape mismatch");
  const int n_batch = xs[0], cin = xs[1], h = xs[2], w_in = xs[3];
  const int cout = ws[0], kh = ws[2], kw = ws[3];
  const int ho = detail::conv_out_dim(h, kh, stride, pad);
  const int wo = detail::conv_out_dim(w_in, kw, stride, pad);
  require(ho >= 1 && wo >= 1, ErrorKind::argument, "conv2d: output would be empty");
  const int64_t k_total = int64_t(cin) * kh * kw;
  const int64_t p_total = int64_t(ho) * wo;

  Tensor<S> out({n_batch, cout, ho, wo});
  auto& col = detail::col_scratch<S>();
  col.resize(static_cast<size_t>(k_total * p_total));
  Eigen::Map<const RowMatT<S>> wm(w.value().data.data(), cout, k_total);
  for (int n = 0; n < n_batch; ++n) {
    detail::im2col2d(x.value().data.data() + int64_t(n) * cin * h * w_in, cin, h, w_in,
                     kh, kw, stride, pad, ho, wo, col.data());
    Eigen::Map<const RowMatT<S>> cm(col.data(), k_total, p_total);
    Eigen::Map<RowMatT<S>> om(out.data.data() + int64_t(n) * cout * p_total, cout,
                              p_total);
    om.noalias() = wm * cm;
    om.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(
        b.value().data.data(), cout);
  }

  auto xn = x.node(), wn = w.node(), bn = b.node();
  return detail::make_op<S>(
      std::move(out), {x, w, b},
      [xn, wn, bn, n_batch, cin, h, w_in, cout, kh, kw, stride, pad, ho, wo, k_total,
       p_total](Node<S>& node) {
        auto& col = detail::col_scratch<S>();
        col.resize(static_cast<size_t>(k_total * p_total));
        std::vector<S> dcol(static_cast<size_t>(k_total * p_total));
        Eigen::Map<const RowMatT<S>> wm(wn->value.data.data(), cout, k_total);
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (int n = 0; n < n_batch; ++n) {
          Eigen::Map<const RowMatT<S>> gy(node.grad.data.data() + int64_t(n) * cout * p_total,
                                          cout, p_total);
          if (wn->requires_grad || bn->requires_grad) {
            detail::im2col2d(xn->value.data.data() + int64_t(n) * cin * h * w_in, cin, h,
                             w_in, kh, kw, stride, pad, ho, wo, col.data());
            Eigen::Map<const RowMatT<S>> cm(col.data(), k_total, p_total);
            if (wn->requires_grad) {
              Eigen::Map<RowMatT<S>> gw(wn->grad.data.data(), cout, k_total);
              gw.noalias() += gy * cm.transpose();
            }
            if (bn->requires_grad) {
              Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> gb(bn->grad.data.data(),
                                                                 cout);
              gb += gy.rowwise().sum();
            }
          }
          if (xn->requires_grad) {
            Eigen::Map<RowMatT<S>> dcm(dcol.data(), k_total, p_total);
            dcm.noalias() = wm.transpose() * gy;
            detail::col2im2d(dcol.data(), cin, h, w_in, kh, kw, stride, pad, ho, wo,
                             xn->grad.data.data() + int64_t(n) * cin * h * w_in);
          }
        }
      });
}

/// 3D convolution with a cubic kernel. x: [N, Cin, D, H, W]; w: [Cout, Cin, k, k, k].
template <class S>
Var<S> conv3d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int stride, int pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  require(xs.size() == 5 && ws.size() == 5 && xs[1] == ws[1], ErrorKind::argument,
          "conv3d: shape mismatch");
  require(ws[2] == ws[3] && ws[3] == ws[4], ErrorKind::argument,
          "conv3d: kernel must be cubic");
  const int n_batch = xs[0], cin = xs[1], d = xs[2], h = xs[3], w_in = xs[4];
  const int cout = ws[0], k = ws[2];
  const int do_ = detail::conv_out_dim(d, k, stride, pad);
  const int ho = detail::conv_out_dim(h, k, stride, pad);
  const int wo = detail::conv_out_dim(w_in, k, stride, pad);
  require(do_ >= 1 && ho >= 1 && wo >= 1, ErrorKind::argument,
          "conv3d: output would be empty");
  const int64_t k_total = int64_t(cin) * k * k * k;
  const int64_t p_total = int64_t(do_) * ho * wo;
  const int64_t in_plane = int64_t(cin) * d * h * w_in;

  Tensor<S> out({n_batch, cout, do_, ho, wo});
  auto& col = detail::col_scratch<S>();
  col.resize(static_cast<size_t>(k_total * p_total));
  Eigen::Map<const RowMatT<S>> wm(w.value().data.data(), cout, k_total);
  for (int n = 0; n < n_batch; ++n) {
    detail::im2col3d(x.value().data.data() + n * in_plane, cin, d, h, w_in, k, stride,
                     pad, do_, ho, wo, col.data());
    Eigen::Map<const RowMatT<S>> cm(col.data(), k_total, p_total);
    Eigen::Map<RowMatT<S>> om(out.data.data() + int64_t(n) * cout * p_total, cout,
                              p_total);
    om.noalias() = wm * cm;
    om.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(
        b.value().data.data(), cout);
  }

  auto xn = x.node(), wn = w.node(), bn = b.node();
  return detail::make_op<S>(
      std::move(out), {x, w, b},
      [xn, wn, bn, n_batch, cin, d, h, w_in, cout, k, stride, pad, do_, ho, wo, k_total,
       p_total, in_plane](Node<S>& node) {
        auto& col = detail::col_scratch<S>();
        col.resize(static_cast<size_t>(k_total * p_total));
        std::vector<S> dcol(static_cast<size_t>(k_total * p_total));
        Eigen::Map<const RowMatT<S>> wm(wn->value.data.data(), cout, k_total);
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (int n = 0; n < n_batch; ++n) {
          Eigen::Map<const RowMatT<S>> gy(node.grad.data.data() + int64_t(n) * cout * p_total,
                                          cout, p_total);
          if (wn->requires_grad || bn->requires_grad) {
            detail::im2col3d(xn->value.data.data() + n * in_plane, cin, d, h, w_in, k,
                             stride, pad, do_, ho, wo, col.data());
            Eigen::Map<const RowMatT<S>> cm(col.data(), k_total, p_total);
            if (wn->requires_grad) {
              Eigen::Map<RowMatT<S>> gw(wn->grad.data.data(), cout, k_total);
              gw.noalias() += gy * cm.transpose();
            }
            if (bn->requires_grad) {
              Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> gb(bn->grad.data.data(),
                                                                 cout);
              gb += gy.rowwise().sum();
            }
          }
          if (xn->requires_grad) {
            Eigen::Map<RowMatT<S>> dcm(dcol.data(), k_total, p_total);
            dcm.noalias() = wm.transpose() * gy;
            detail::col2im3d(dcol.data(), cin, d, h, w_in, k, stride, pad, do_, ho, wo,
                             xn->grad.data.data() + n * in_plane);
          }
        }
      });
}

/// Transposed 3D convolution with kernel 2, stride 2 (exact x2 upsampling,
/// no overlap). x: [N, Cin, D, H, W]; w: [Cin, Cout, 2, 2, 2].
template <class S>
Var<S> conv_transpose3d_x2(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  require(xs.size() == 5 && ws.size() == 5 && ws[0] == xs[1] && ws[2] == 2 &&
              ws[3] == 2 && ws[4] == 2,
          ErrorKind::argument, "conv_transpose3d_x2: shape mismatch");
  const int n_batch = xs[0], cin = xs[1], d = xs[2], h = xs[3], w_in = xs[4];
  const int cout = ws[1];
  const int64_t p_total = int64_t(d) * h * w_in;
  const int64_t rows = int64_t(cout) * 8;

  // w reshaped as (Cin x Cout*8); cols = w^T * x gives every output voxel once.
  Tensor<S> out({n_batch, cout, 2 * d, 2 * h, 2 * w_in});
  Eigen::Map<const RowMatT<S>> wm(w.value().data.data(), cin, rows);
  std::vector<S> cols(static_cast<size_t>(rows * p_total));
  for (int n = 0; n < n_batch; ++n) {
    Eigen::Map<const RowMatT<S>> xm(x.value().data.data() + int64_t(n) * cin * p_total,
                                    cin, p_total);
    Eigen::Map<RowMatT<S>> cm(cols.data(), rows, p_total);
    cm.noalias() = wm.transpose() * xm;
    S* ob = out.data.data() + int64_t(n) * cout * 8 * p_total;
    for (int co = 0; co < cout; ++co) {
      const S bias = b.value().data[co];
      for (int o = 0; o < 8; ++o) {
        const int dz = o >> 2, dy = (o >> 1) & 1, dx = o & 1;
        const S* src = cols.data() + (int64_t(co) * 8 + o) * p_total;
        for (int z = 0; z < d; ++z)
          for (int y = 0; y < h; ++y) {
            S* dst = ob + ((int64_t(co) * 2 * d + 2 * z + dz) * 2 * h + 2 * y + dy) *
                            2 * w_in + dx;
            const S* s = src + (int64_t(z) * h + y) * w_in;
            for (int xx = 0; xx < w_in; ++xx) dst[2 * xx] = s[xx] + bias;
          }
      }
    }
  }

  auto xn = x.node(), wn = w.node(), bn = b.node();
  return detail::make_op<S>(
      std::move(out), {x, w, b},
      [xn, wn, bn, n_batch, cin, d, h, w_in, cout, p_total, rows](Node<S>& node) {
        std::vector<S> gcols(static_cast<size_t>(rows * p_total));
        Eigen::Map<const RowMatT<S>> wm(wn->value.data.data(), cin, rows);
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (int n = 0; n < n_batch; ++n) {
          const S* gb_base = node.grad.data.data() + int64_t(n) * cout * 8 * p_total;
          for (int co = 0; co < cout; ++co)
            for (int o = 0; o < 8; ++o) {
              const int dz = o >> 2, dy = (o >> 1) & 1, dx = o & 1;
              S* dst = gcols.data() + (int64_t(co) * 8 + o) * p_total;
              for (int z = 0; z < d; ++z)
                for (int y = 0; y < h; ++y) {
                  const S* s = gb_base +
                               ((int64_t(co) * 2 * d + 2 * z + dz) * 2 * h + 2 * y + dy) *
                                   2 * w_in + dx;
                  S* dd = dst + (int64_t(z) * h + y) * w_in;
                  for (int xx = 0; xx < w_in; ++xx) dd[xx] = s[2 * xx];
                }
            }
          Eigen::Map<const RowMatT<S>> gcm(gcols.data(), rows, p_total);
          if (xn->requires_grad) {
            Eigen::Map<RowMatT<S>> gx(xn->grad.data.data() + int64_t(n) * cin * p_total,
                                      cin, p_total);
            gx.noalias() += wm * gcm;
          }
          if (wn->requires_grad) {
            Eigen::Map<const RowMatT<S>> xm(
                xn->value.data.data() + int64_t(n) * cin * p_total, cin, p_total);
            Eigen::Map<RowMatT<S>> gw(wn->grad.data.data(), cin, rows);
            gw.noalias() += xm * gcm.transpose();
          }
          if (bn->requires_grad)
            for (int co = 0; co < cout; ++co)
              bn->grad.data[co] += gcm.middleRows(co * 8, 8).sum();
        }
      });
}

/// Nearest-neighbor upsampling of every spatial axis by an integer factor.
/// Works for [N, C, H, W] and [N, C, D, H, W].
template <class S>
Var<S> upsample_nearest(const Var<S>& x, int factor) {
  require(factor >= 1, ErrorKind::argument, "upsample factor must be >= 1");
  if (factor == 1) return x;
  const auto& xs = x.shape();
  require(xs.size() == 4 || xs.size() == 5, ErrorKind::argument,
          "upsample_nearest: rank must be 4 or 5");
  std::vector<int> os = xs;
  for (size_t i = 2; i < os.size(); ++i) os[i] *= factor;
  const bool is3d = xs.size() == 5;
  const int groups = xs[0] * xs[1];
  const int d = is3d ? xs[2] : 1;
  const int h = xs[xs.size() - 2], w = xs[xs.size() - 1];
  const int fd = is3d ? factor : 1;

  Tensor<S> out(os);
  const int64_t in_plane = int64_t(d) * h * w;
  const int64_t out_plane = in_plane * fd * factor * factor;
  for (int g = 0; g < groups; ++g) {
    const S* src = x.value().data.data() + g * in_plane;
    S* dst = out.data.data() + g * out_plane;
    for (int z = 0; z < d * fd; ++z)
      for (int y = 0; y < h * factor; ++y) {
        const S* row = src + (int64_t(z / fd) * h + y / factor) * w;
        S* orow = dst + (int64_t(z) * h * factor + y) * (int64_t(w) * factor);
        for (int xx = 0; xx < w; ++xx)
          for (int f = 0; f < factor; ++f) orow[int64_t(xx) * factor + f] = row[xx];
      }
  }
  auto xn = x.node();
  return detail::make_op<S>(
      std::move(out), {x}, [xn, groups, d, h, w, fd, factor, in_plane, out_plane](Node<S>& n) {
        Eigen::Array<S, Eigen::Dynamic, 1> gx =
            Eigen::Array<S, Eigen::Dynamic, 1>::Zero(int64_t(groups) * in_plane);
        for (int g = 0; g < groups; ++g) {
          const S* src = n.grad.data.data() + g * out_plane;
          S* dst = gx.data() + g * in_plane;
          for (int z = 0; z < d * fd; ++z)
            for (int y = 0; y < h * factor; ++y) {
              const S* orow = src + (int64_t(z) * h * factor + y) * (int64_t(w) * factor);
              S* row = dst + (int64_t(z / fd) * h + y / factor) * w;
              for (int xx = 0; xx < w; ++xx)
                for (int f = 0; f < factor; ++f) row[xx] += orow[int64_t(xx) * factor + f];
            }
        }
        detail::accumulate(xn, gx);
      });
}

/// Instance normalization over the spatial dims of [N, C, spatial...].
template <class S>
Var<S> instance_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                     S eps = S(1e-5)) {
  const auto& xs = x.shape();
  require(xs.size() >= 3, ErrorKind::argument, "instance_norm: rank < 3");
  const int n_batch = xs[0], n_ch = xs[1];
  const int64_t plane = x.value().tail_count(2);
  require(gamma.shape() == std::vector<int>{n_ch} && beta.shape() == std::vector<int>{n_ch},
          ErrorKind::argument, "instance_norm: gamma/beta shape mismatch");

  Tensor<S> out(xs);
  Tensor<S> xhat(xs);
  Tensor<S> inv_sigma({n_batch, n_ch});
  for (int n = 0; n < n_batch; ++n)
    for (int c = 0; c < n_ch; ++c) {
      auto seg = x.value().data.segment((int64_t(n) * n_ch + c) * plane, plane);
      const S mu = seg.mean();
      const S var = (seg - mu).square().mean();
      const S is = S(1) / std::sqrt(var + eps);
      inv_sigma.data[int64_t(n) * n_ch + c] = is;
      auto xh = xhat.data.segment((int64_t(n) * n_ch + c) * plane, plane);
      xh = (seg - mu) * is;
      out.data.segment((int64_t(n) * n_ch + c) * plane, plane) =
          gamma.value().data[c] * xh + beta.value().data[c];
    }

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return detail::make_op<S>(
      std::move(out), {x, gamma, beta},
      [xn, gn, bn, xhat, inv_sigma, n_batch, n_ch, plane](Node<S>& node) {
        if (xn->requires_grad) xn->ensure_grad();
        if (gn->requires_grad) gn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (int n = 0; n < n_batch; ++n)
          for (int c = 0; c < n_ch; ++c) {
            const int64_t off = (int64_t(n) * n_ch + c) * plane;
            auto g = node.grad.data.segment(off, plane);
            auto xh = xhat.data.segment(off, plane);
            if (gn->requires_grad) gn->grad.data[c] += (g * xh).sum();
            if (bn->requires_grad) bn->grad.data[c] += g.sum();
            if (xn->requires_grad) {
              const S gam = gn->value.data[c];
              const S is = inv_sigma.data[int64_t(n) * n_ch + c];
              const S g_mean = g.mean();
              const S gx_mean = (g * xh).mean();
              xn->grad.data.segment(off, plane) +=
                  gam * is * (g - g_mean - xh * gx_mean);
            }
          }
      });
}

/// Extract feature vectors at spatial locations. x: [N, C, H, W];
/// coords: flat (n, y, x) triples; result: [M, C].
template <class S>
Var<S> gather_spatial(const Var<S>& x, const std::vector<std::array<int, 3>>& coords) {
  const auto& xs = x.shape();
  require(xs.size() == 4, ErrorKind::argument, "gather_spatial: rank must be 4");
  const int n_ch = xs[1], h = xs[2], w = xs[3];
  const int m = static_cast<int>(coords.size());
  const int64_t plane = int64_t(h) * w;
  Tensor<S> out({m, n_ch});
  for (int i = 0; i < m; ++i) {
    const auto& [n, y, xx] = coords[static_cast<size_t>(i)];
    for (int c = 0; c < n_ch; ++c)
      out.data[int64_t(i) * n_ch + c] =
          x.value().data[((int64_t(n) * n_ch + c) * h + y) * w + xx];
  }
  auto xn = x.node();
  return detail::make_op<S>(std::move(out), {x}, [xn, coords, n_ch, h, w, plane](Node<S>& node) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const int m = static_cast<int>(coords.size());
    for (int i = 0; i < m; ++i) {
      const auto& [n, y, xx] = coords[static_cast<size_t>(i)];
      for (int c = 0; c < n_ch; ++c)
        xn->grad.data[((int64_t(n) * n_ch + c) * h + y) * w + xx] +=
            node.grad.data[int64_t(i) * n_ch + c];
    }
  });
}

// ---------------------------------------------------------------------------
// parameter registry and layer building blocks

template <class S>
struct ParamRegistry {
  std::vector<std::pair<std::string, Var<S>>> entries;

  Var<S> add(const std::string& name, Tensor<S> init) {
    auto v = Var<S>::param(std::move(init));
    entries.emplace_back(name, v);
    return v;
  }

  void zero_grads() {
    for (auto& [name, v] : entries) v.zero_grad();
  }
};

enum class WeightInit { he, gaussian002 };

template <class S>
Tensor<S> conv_weight_init(std::vector<int> shape, WeightInit init, Rng& rng) {
  int64_t fan_in = 1;
  for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  const double sigma = init == WeightInit::he ? std::sqrt(2.0 / double(fan_in)) : 0.02;
  return Tensor<S>::randn(std::move(shape), rng, S(0), S(sigma));
}

template <class S>
struct Conv2dLayer {
  Var<S> w, b;
  int stride = 1, pad = 1;

  Conv2dLayer() = default;
  Conv2dLayer(ParamRegistry<S>& reg, const std::string& name, int cin, int cout, int k,
              int stride_, int pad_, WeightInit init, Rng& rng)
      : stride(stride_), pad(pad_) {
    w = reg.add(name + ".w", conv_weight_init<S>({cout, cin, k, k}, init, rng));
    b = reg.add(name + ".b", Tensor<S>::zeros({cout}));
  }

  Var<S> operator()(const Var<S>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <class S>
struct Conv3dLayer {
  Var<S> w, b;
  int stride = 1, pad = 1;

  Conv3dLayer() = default;
  Conv3dLayer(ParamRegistry<S>& reg, const std::string& name, int cin, int cout, int k,
              int stride_, int pad_, WeightInit init, Rng& rng)
      : stride(stride_), pad(pad_) {
    w = reg.add(name + ".w", conv_weight_init<S>({cout, cin, k, k, k}, init, rng));
    b = reg.add(name + ".b", Tensor<S>::zeros({cout}));
  }

  Var<S> operator()(const Var<S>& x) const { return conv3d(x, w, b, stride, pad); }
};

template <class S>
struct ConvTranspose3dLayer {
  Var<S> w, b;

  ConvTranspose3dLayer() = default;
  ConvTranspose3dLayer(ParamRegistry<S>& reg, const std::string& name, int cin, int cout,
                       WeightInit init, Rng& rng) {
    w = reg.add(name + ".w", conv_weight_init<S>({cin, cout, 2, 2, 2}, init, rng));
    b = reg.add(name + ".b", Tensor<S>::zeros({cout}));
  }

  Var<S> operator()(const Var<S>& x) const { return conv_transpose3d_x2(x, w, b); }
};

template <class S>
struct InstanceNormLayer {
  Var<S> gamma, beta;

  InstanceNormLayer() = default;
  InstanceNormLayer(ParamRegistry<S>& reg, const std::string& name, int channels) {
    gamma = reg.add(name + ".gamma", Tensor<S>::full({channels}, S(1)));
    beta = reg.add(name + ".beta", Tensor<S>::zeros({channels}));
  }

  Var<S> operator()(const Var<S>& x) const { return instance_norm(x, gamma, beta); }
};

template <class S>
struct LinearLayer {
  Var<S> w, b;

  LinearLayer() = default;
  LinearLayer(ParamRegistry<S>& reg, const std::string& name, int din, int dout,
              Rng& rng) {
    const double sigma = std::sqrt(2.0 / double(din));
    w = reg.add(name + ".w", Tensor<S>::randn({din, dout}, rng, S(0), S(sigma)));
    b = reg.add(name + ".b", Tensor<S>::zeros({dout}));
  }

  Var<S> operator()(const Var<S>& x) const { return linear(x, w, b); }
};

}  // namespace crossuda::ad
