#pragma once

#include <cmath>
#include <cstddef>

#include "augkit/pam.hpp"

// Dense kernels shared by the gate, the stems and the residual units.
namespace augkit::pam::detail {

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
T silu(T x) {
  return x * sigmoid(x);
}

template <typename T>
T silu_grad(T x) {
  const T s = sigmoid(x);
  return s * (T(1) + x * (T(1) - s));
}

/// y = W x (+ b), W is [rows, cols] row-major.
template <typename T>
void matvec(const T* w, const T* b, int rows, int cols, const T* x, T* y) {
  for (int r = 0; r < rows; ++r) {
    T acc = b ? b[r] : T(0);
    const T* wr = w + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

/// dx += W^T g.
template <typename T>
void matvec_t_acc(const T* w, int rows, int cols, const T* g, T* dx) {
  for (int r = 0; r < rows; ++r) {
    const T* wr = w + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) dx[c] += wr[c] * g[r];
  }
}

/// dW += g x^T.
template <typename T>
void outer_acc(T* dw, int rows, int cols, const T* g, const T* x) {
  for (int r = 0; r < rows; ++r) {
    T* dr = dw + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) dr[c] += g[r] * x[c];
  }
}

/// Zero-padded convolution with padding k/2. weights are [out, in, k, k].
template <typename T, typename W>
Grid<T> conv2d(const Grid<T>& in, const W* weights, const W* bias, int out_channels,
               int kernel, int stride) {
  const int pad = kernel / 2;
  const int oh = (in.height + 2 * pad - kernel) / stride + 1;
  const int ow = (in.width + 2 * pad - kernel) / stride + 1;
  Grid<T> out = Grid<T>::zeros(out_channels, oh, ow);
  for (int o = 0; o < out_channels; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        T acc = static_cast<T>(bias[o]);
        for (int i = 0; i < in.channels; ++i) {
          const W* wk = weights + (static_cast<std::size_t>(o) * in.channels + i) * kernel * kernel;
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = y * stride + ky - pad;
            if (iy < 0 || iy >= in.height) continue;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = x * stride + kx - pad;
              if (ix < 0 || ix >= in.width) continue;
              acc += static_cast<T>(wk[ky * kernel + kx]) * in.at(i, iy, ix);
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
  return out;
}

/// Stride-1 backward of conv2d; accumulates into din, dw and db.
template <typename T>
void conv2d_backward(const Grid<T>& in, const T* weights, int kernel, const Grid<T>& dout,
                     Grid<T>& din, T* dw, T* db) {
  const int pad = kernel / 2;
  for (int o = 0; o < dout.channels; ++o) {
    for (int y = 0; y < dout.height; ++y) {
      for (int x = 0; x < dout.width; ++x) {
        const T g = dout.at(o, y, x);
        db[o] += g;
        for (int i = 0; i < in.channels; ++i) {
          const std::size_t base = (static_cast<std::size_t>(o) * in.channels + i) * kernel * kernel;
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = y + ky - pad;
            if (iy < 0 || iy >= in.height) continue;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = x + kx - pad;
              if (ix < 0 || ix >= in.width) continue;
              dw[base + ky * kernel + kx] += g * in.at(i, iy, ix);
              din.at(i, iy, ix) += g * weights[base + ky * kernel + kx];
            }
          }
        }
      }
    }
  }
}

}  // namespace augkit::pam::detail
