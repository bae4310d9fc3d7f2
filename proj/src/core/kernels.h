#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "core/parallel.h"

// Raw dense kernels shared by the autodiff ops and the incremental decoding
// path. Keeping both paths on the same loops makes cached and uncached
// inference bit-identical.
namespace pagetext::kernels {

// c[m,n] += a[m,k] * b[k,n]
template <typename T>
void matmul_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  parallel_for(m, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      T* crow = c + i * n;
      const T* arow = a + i * k;
      for (int64_t p = 0; p < k; ++p) {
        T aip = arow[p];
        if (aip == T(0)) continue;
        const T* brow = b + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  });
}

// c[m,n] += scale * a[m,k] * b[n,k]^T
template <typename T>
void matmul_nt_acc(const T* a, const T* b, T* c, int64_t m, int64_t k,
                   int64_t n, T scale = T(1)) {
  parallel_for(m, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      const T* arow = a + i * k;
      T* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) {
        const T* brow = b + j * k;
        T acc = T(0);
        for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += scale * acc;
      }
    }
  });
}

// c[m,n] += a[k,m]^T * b[k,n]
template <typename T>
void matmul_tn_acc(const T* a, const T* b, T* c, int64_t k, int64_t m,
                   int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      T api = arow[i];
      if (api == T(0)) continue;
      T* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

template <typename T>
void softmax_row(const T* x, T* y, int64_t n) {
  T m = x[0];
  for (int64_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
  T sum = T(0);
  for (int64_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - m);
    sum += y[i];
  }
  T inv = T(1) / sum;
  for (int64_t i = 0; i < n; ++i) y[i] *= inv;
}

template <typename T>
void log_softmax_row(const T* x, T* y, int64_t n) {
  T m = x[0];
  for (int64_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
  T sum = T(0);
  for (int64_t i = 0; i < n; ++i) sum += std::exp(x[i] - m);
  T lse = std::log(sum);
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] - m - lse;
}

template <typename T>
T gelu_scalar(T x) {
  return x * T(0.5) * (T(1) + std::erf(x * T(0.7071067811865476)));
}

template <typename T>
T gelu_grad_scalar(T x) {
  T phi = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865476)));
  T pdf = std::exp(-x * x * T(0.5)) * T(0.3989422804014327);
  return phi + x * pdf;
}

// y = gain * (x - mean) / sqrt(var + eps) + bias over one row of width d
template <typename T>
void layer_norm_row(const T* x, const T* gain, const T* bias, T eps, T* y,
                    T* saved_mean, T* saved_invstd, int64_t d) {
  T mean = T(0);
  for (int64_t i = 0; i < d; ++i) mean += x[i];
  mean /= static_cast<T>(d);
  T var = T(0);
  for (int64_t i = 0; i < d; ++i) {
    T c = x[i] - mean;
    var += c * c;
  }
  var /= static_cast<T>(d);
  T invstd = T(1) / std::sqrt(var + eps);
  for (int64_t i = 0; i < d; ++i) y[i] = gain[i] * (x[i] - mean) * invstd + bias[i];
  *saved_mean = mean;
  *saved_invstd = invstd;
}

// im2col for a single image: x[ci,H,W] -> cols[ci*kh*kw, ho*wo]
template <typename T>
void im2col(const T* x, int64_t ci, int64_t h, int64_t w, int64_t kh,
            int64_t kw, int64_t stride, int64_t pad, int64_t ho, int64_t wo,
            T* cols) {
  for (int64_t c = 0; c < ci; ++c) {
    for (int64_t ky = 0; ky < kh; ++ky) {
      for (int64_t kx = 0; kx < kw; ++kx) {
        T* dst = cols + ((c * kh + ky) * kw + kx) * ho * wo;
        for (int64_t oy = 0; oy < ho; ++oy) {
          int64_t iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            for (int64_t ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = T(0);
            continue;
          }
          const T* src = x + (c * h + iy) * w;
          for (int64_t ox = 0; ox < wo; ++ox) {
            int64_t ix = ox * stride + kx - pad;
            dst[oy * wo + ox] = (ix < 0 || ix >= w) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

// scatter-add transpose of im2col: cols[ci*kh*kw, ho*wo] -> x[ci,H,W] (+=)
template <typename T>
void col2im_acc(const T* cols, int64_t ci, int64_t h, int64_t w, int64_t kh,
                int64_t kw, int64_t stride, int64_t pad, int64_t ho, int64_t wo,
                T* x) {
  for (int64_t c = 0; c < ci; ++c) {
    for (int64_t ky = 0; ky < kh; ++ky) {
      for (int64_t kx = 0; kx < kw; ++kx) {
        const T* src = cols + ((c * kh + ky) * kw + kx) * ho * wo;
        for (int64_t oy = 0; oy < ho; ++oy) {
          int64_t iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          T* dst = x + (c * h + iy) * w;
          for (int64_t ox = 0; ox < wo; ++ox) {
            int64_t ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[ix] += src[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace pagetext::kernels
