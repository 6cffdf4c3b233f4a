#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "detadvprop/tensor.hpp"

namespace detadv {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatMap = Eigen::Map<RowMat>;
using ConstRowMatMap = Eigen::Map<const RowMat>;

// SAME padding: output = ceil(input / stride), zeros on the bottom/right when
// the total padding is odd (TensorFlow convention).
struct ConvGeometry {
  int in_c, in_h, in_w, out_c, out_h, out_w, k, stride, pad_top, pad_left;

  ConvGeometry(const std::vector<int>& w_shape, int in_h_, int in_w_, int stride_)
      : in_c(w_shape[1]), in_h(in_h_), in_w(in_w_), out_c(w_shape[0]), k(w_shape[2]),
        stride(stride_) {
    out_h = (in_h + stride - 1) / stride;
    out_w = (in_w + stride - 1) / stride;
    const int pad_h = std::max((out_h - 1) * stride + k - in_h, 0);
    const int pad_w = std::max((out_w - 1) * stride + k - in_w, 0);
    pad_top = pad_h / 2;
    pad_left = pad_w / 2;
  }
};

namespace detail {

inline void im2col(const double* x, const ConvGeometry& g, double* col) {
  // col is (in_c * k * k) x (out_h * out_w), row-major.
  const int ohw = g.out_h * g.out_w;
  for (int c = 0; c < g.in_c; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = col + (static_cast<std::size_t>(c) * g.k * g.k + ky * g.k + kx) * ohw;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride + ky - g.pad_top;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(row + oy * g.out_w, row + (oy + 1) * g.out_w, 0.0);
            continue;
          }
          const double* xrow = xc + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride + kx - g.pad_left;
            row[oy * g.out_w + ox] = (ix < 0 || ix >= g.in_w) ? 0.0 : xrow[ix];
          }
        }
      }
    }
  }
}

inline void col2im_accumulate(const double* col, const ConvGeometry& g, double* dx) {
  const int ohw = g.out_h * g.out_w;
  for (int c = 0; c < g.in_c; ++c) {
    double* dxc = dx + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const double* row = col + (static_cast<std::size_t>(c) * g.k * g.k + ky * g.k + kx) * ohw;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride + ky - g.pad_top;
          if (iy < 0 || iy >= g.in_h) continue;
          double* dxrow = dxc + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride + kx - g.pad_left;
            if (ix >= 0 && ix < g.in_w) dxrow[ix] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x: [B, in_c, H, W]; w: [out_c, in_c, k, k]; b: [out_c].
inline Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  const int batch = x.dim(0);
  const ConvGeometry g(w.shape(), x.dim(2), x.dim(3), stride);
  DETADV_CHECK(x.dim(1) == g.in_c, "conv2d: channel mismatch");
  Tensor y({batch, g.out_c, g.out_h, g.out_w});
  const int ckk = g.in_c * g.k * g.k;
  const int ohw = g.out_h * g.out_w;
  std::vector<double> col(static_cast<std::size_t>(ckk) * ohw);
  ConstRowMatMap wmat(w.data(), g.out_c, ckk);
  Eigen::Map<const Eigen::VectorXd> bias(b.data(), g.out_c);
  for (int i = 0; i < batch; ++i) {
    detail::im2col(x.data() + x.idx4(i, 0, 0, 0), g, col.data());
    ConstRowMatMap colmat(col.data(), ckk, ohw);
    RowMatMap out(y.data() + y.idx4(i, 0, 0, 0), g.out_c, ohw);
    out.noalias() = wmat * colmat;
    out.colwise() += bias;
  }
  return y;
}

// Accumulates into dw/db when given; writes dx when given.
inline void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, int stride,
                            Tensor* dx, Tensor* dw, Tensor* db) {
  const int batch = x.dim(0);
  const ConvGeometry g(w.shape(), x.dim(2), x.dim(3), stride);
  const int ckk = g.in_c * g.k * g.k;
  const int ohw = g.out_h * g.out_w;
  std::vector<double> col(static_cast<std::size_t>(ckk) * ohw);
  std::vector<double> dcol(static_cast<std::size_t>(ckk) * ohw);
  ConstRowMatMap wmat(w.data(), g.out_c, ckk);
  for (int i = 0; i < batch; ++i) {
    ConstRowMatMap dymat(dy.data() + dy.idx4(i, 0, 0, 0), g.out_c, ohw);
    if (dw || db) {
      if (db) {
        Eigen::Map<Eigen::VectorXd> dbv(db->data(), g.out_c);
        dbv += dymat.rowwise().sum();
      }
      if (dw) {
        detail::im2col(x.data() + x.idx4(i, 0, 0, 0), g, col.data());
        ConstRowMatMap colmat(col.data(), ckk, ohw);
        RowMatMap dwmat(dw->data(), g.out_c, ckk);
        dwmat.noalias() += dymat * colmat.transpose();
      }
    }
    if (dx) {
      RowMatMap dcolmat(dcol.data(), ckk, ohw);
      dcolmat.noalias() = wmat.transpose() * dymat;
      detail::col2im_accumulate(dcol.data(), g, dx->data() + dx->idx4(i, 0, 0, 0));
    }
  }
}

// Per-channel batch normalization over (B, H, W).
struct BnCache {
  Tensor xhat;                  // normalized input, training mode only
  std::vector<double> inv_std;  // per channel (batch stats or frozen stats)
  bool training = false;
};

struct BnBatchStats {
  std::vector<double> mean;
  std::vector<double> var;  // biased
};

inline Tensor bn_forward_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                               double eps, BnCache* cache, BnBatchStats* stats) {
  const int batch = x.dim(0), channels = x.dim(1), spatial = x.dim(2) * x.dim(3);
  const double n = static_cast<double>(batch) * spatial;
  stats->mean.assign(channels, 0.0);
  stats->var.assign(channels, 0.0);
  for (int i = 0; i < batch; ++i) {
    for (int c = 0; c < channels; ++c) {
      const double* p = x.data() + x.idx4(i, c, 0, 0);
      double s = 0.0;
      for (int k = 0; k < spatial; ++k) s += p[k];
      stats->mean[c] += s;
    }
  }
  for (int c = 0; c < channels; ++c) stats->mean[c] /= n;
  for (int i = 0; i < batch; ++i) {
    for (int c = 0; c < channels; ++c) {
      const double* p = x.data() + x.idx4(i, c, 0, 0);
      const double m = stats->mean[c];
      double s = 0.0;
      for (int k = 0; k < spatial; ++k) {
        const double d = p[k] - m;
        s += d * d;
      }
      stats->var[c] += s;
    }
  }
  for (int c = 0; c < channels; ++c) stats->var[c] /= n;

  cache->training = true;
  cache->xhat = Tensor(x.shape());
  cache->inv_std.resize(channels);
  for (int c = 0; c < channels; ++c) cache->inv_std[c] = 1.0 / std::sqrt(stats->var[c] + eps);

  Tensor y(x.shape());
  for (int i = 0; i < batch; ++i) {
    for (int c = 0; c < channels; ++c) {
      const double* p = x.data() + x.idx4(i, c, 0, 0);
      double* xh = cache->xhat.data() + cache->xhat.idx4(i, c, 0, 0);
      double* out = y.data() + y.idx4(i, c, 0, 0);
      const double m = stats->mean[c], inv = cache->inv_std[c];
      const double gc = gamma[c], bc = beta[c];
      for (int k = 0; k < spatial; ++k) {
        const double h = (p[k] - m) * inv;
        xh[k] = h;
        out[k] = gc * h + bc;
      }
    }
  }
  return y;
}

inline Tensor bn_forward_frozen(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                const Tensor& run_mean, const Tensor& run_var, double eps,
                                BnCache* cache) {
  const int batch = x.dim(0), channels = x.dim(1), spatial = x.dim(2) * x.dim(3);
  cache->training = false;
  cache->inv_std.resize(channels);
  for (int c = 0; c < channels; ++c) cache->inv_std[c] = 1.0 / std::sqrt(run_var[c] + eps);
  Tensor y(x.shape());
  for (int i = 0; i < batch; ++i) {
    for (int c = 0; c < channels; ++c) {
      const double* p = x.data() + x.idx4(i, c, 0, 0);
      double* out = y.data() + y.idx4(i, c, 0, 0);
      const double m = run_mean[c], scale = gamma[c] * cache->inv_std[c], bc = beta[c];
      for (int k = 0; k < spatial; ++k) out[k] = scale * (p[k] - m) + bc;
    }
  }
  return y;
}

// Training-mode backward couples every element of a channel through the
// batch statistics; frozen mode is a plain affine map.
inline void bn_backward(const Tensor& x, const Tensor& gamma, const Tensor& run_mean,
                        const BnCache& cache, const Tensor& dy, Tensor* dx, Tensor* dgamma,
                        Tensor* dbeta) {
  const int batch = x.dim(0), channels = x.dim(1), spatial = x.dim(2) * x.dim(3);
  const double n = static_cast<double>(batch) * spatial;
  std::vector<double> sum_dy(channels, 0.0), sum_dy_xhat(channels, 0.0);
  if (cache.training) {
    for (int i = 0; i < batch; ++i) {
      for (int c = 0; c < channels; ++c) {
        const double* d = dy.data() + dy.idx4(i, c, 0, 0);
        const double* xh = cache.xhat.data() + cache.xhat.idx4(i, c, 0, 0);
        double s0 = 0.0, s1 = 0.0;
        for (int k = 0; k < spatial; ++k) {
          s0 += d[k];
          s1 += d[k] * xh[k];
        }
        sum_dy[c] += s0;
        sum_dy_xhat[c] += s1;
      }
    }
    if (dgamma)
      for (int c = 0; c < channels; ++c) {
        (*dgamma)[c] += sum_dy_xhat[c];
        (*dbeta)[c] += sum_dy[c];
      }
    if (dx) {
      for (int i = 0; i < batch; ++i) {
        for (int c = 0; c < channels; ++c) {
          const double* d = dy.data() + dy.idx4(i, c, 0, 0);
          const double* xh = cache.xhat.data() + cache.xhat.idx4(i, c, 0, 0);
          double* out = dx->data() + dx->idx4(i, c, 0, 0);
          const double coef = gamma[c] * cache.inv_std[c] / n;
          const double s0 = sum_dy[c], s1 = sum_dy_xhat[c];
          for (int k = 0; k < spatial; ++k) out[k] = coef * (n * d[k] - s0 - xh[k] * s1);
        }
      }
    }
  } else {
    if (dgamma) {
      for (int i = 0; i < batch; ++i) {
        for (int c = 0; c < channels; ++c) {
          const double* d = dy.data() + dy.idx4(i, c, 0, 0);
          const double* p = x.data() + x.idx4(i, c, 0, 0);
          const double m = run_mean[c], inv = cache.inv_std[c];
          double s0 = 0.0, s1 = 0.0;
          for (int k = 0; k < spatial; ++k) {
            s0 += d[k];
            s1 += d[k] * (p[k] - m) * inv;
          }
          (*dbeta)[c] += s0;
          (*dgamma)[c] += s1;
        }
      }
    }
    if (dx) {
      for (int i = 0; i < batch; ++i) {
        for (int c = 0; c < channels; ++c) {
          const double* d = dy.data() + dy.idx4(i, c, 0, 0);
          double* out = dx->data() + dx->idx4(i, c, 0, 0);
          const double scale = gamma[c] * cache.inv_std[c];
          for (int k = 0; k < spatial; ++k) out[k] = scale * d[k];
        }
      }
    }
  }
}

inline Tensor relu_forward(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

inline Tensor relu_backward(const Tensor& y, const Tensor& dy) {
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

}  // namespace detadv
