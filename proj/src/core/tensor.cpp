#include "core/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "core/kernels.h"
#include "core/parallel.h"

namespace pagetext {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

namespace {

void check_shape(const std::vector<int>& shape) {
  if (shape.empty()) throw contract_error("tensor shape must be non-empty");
  for (int d : shape) {
    if (d <= 0) throw contract_error("tensor dims must be positive, got " + shape_str(shape));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw contract_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(std::vector<int> shape) {
  check_shape(shape);
  Tensor t;
  t.st_ = std::make_shared<Storage>();
  t.st_->v.assign(static_cast<size_t>(shape_numel(shape)), T(0));
  t.st_->shape = std::move(shape);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::full(std::vector<int> shape, T value) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.st_->v.begin(), t.st_->v.end(), value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from(std::vector<int> shape, std::vector<T> values) {
  check_shape(shape);
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw contract_error("tensor data length does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.st_ = std::make_shared<Storage>();
  t.st_->shape = std::move(shape);
  t.st_->v = std::move(values);
  return t;
}

template <typename T>
void Tape<T>::backward(Tensor<T>& loss, T seed) {
  if (loss.size() != 1) throw contract_error("backward requires a scalar loss");
  loss.grad()[0] += seed;
  for (size_t i = ops_.size(); i-- > 0;) ops_[i]();
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T x : t.values()) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

namespace ops {

namespace {

template <typename T>
bool tracking(Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (!tape) return false;
  for (const Tensor<T>* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

}  // namespace

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  auto out = Tensor<T>::zeros(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
  if (tracking(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      if (a.requires_grad()) {
        T* ga = a.grad();
        for (int64_t i = 0; i < out.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        T* gb = b.grad();
        for (int64_t i = 0; i < out.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  auto out = Tensor<T>::zeros(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] - pb[i];
  if (tracking(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      if (a.requires_grad()) {
        T* ga = a.grad();
        for (int64_t i = 0; i < out.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        T* gb = b.grad();
        for (int64_t i = 0; i < out.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  auto out = Tensor<T>::zeros(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
  if (tracking(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      if (a.requires_grad()) {
        T* ga = a.grad();
        const T* pb2 = b.data();
        for (int64_t i = 0; i < out.size(); ++i) ga[i] += g[i] * pb2[i];
      }
      if (b.requires_grad()) {
        T* gb = b.grad();
        const T* pa2 = a.data();
        for (int64_t i = 0; i < out.size(); ++i) gb[i] += g[i] * pa2[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& a, T s) {
  auto out = Tensor<T>::zeros(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] * s;
  if (tracking(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record([a, out, s]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      T* ga = a.grad();
      for (int64_t i = 0; i < out.size(); ++i) ga[i] += g[i] * s;
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_bias_rows(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& bias) {
  if (x.rank() != 2 || bias.rank() != 1 || x.dim(1) != bias.dim(0)) {
    throw contract_error("add_bias_rows: need x[r,n] and bias[n], got " +
                         shape_str(x.shape()) + " and " + shape_str(bias.shape()));
  }
  int64_t rows = x.dim(0), n = x.dim(1);
  auto out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  const T* pb = bias.data();
  T* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t j = 0; j < n; ++j) po[r * n + j] = px[r * n + j] + pb[j];
  }
  if (tracking(tape, {&x, &bias})) {
    out.set_requires_grad(true);
    tape->record([x, bias, out, rows, n]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      if (x.requires_grad()) {
        T* gx = x.grad();
        for (int64_t i = 0; i < rows * n; ++i) gx[i] += g[i];
      }
      if (bias.requires_grad()) {
        T* gb = bias.grad();
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw contract_error("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  }
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = Tensor<T>::zeros({a.dim(0), b.dim(1)});
  kernels::matmul_acc(a.data(), b.data(), out.data(), m, k, n);
  if (tracking(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      if (a.requires_grad()) kernels::matmul_nt_acc(g, b.data(), a.grad(), m, n, k);
      if (b.requires_grad()) kernels::matmul_tn_acc(a.data(), g, b.grad(), m, k, n);
    });
  }
  return out;
}

template <typename T>
Tensor<T> matmul_nt(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b, T s) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw contract_error("matmul_nt: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()) + "^T");
  }
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  auto out = Tensor<T>::zeros({a.dim(0), b.dim(0)});
  kernels::matmul_nt_acc(a.data(), b.data(), out.data(), m, k, n, s);
  if (tracking(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out, m, k, n, s]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      // dL/da = s * g * b ; dL/db = s * g^T * a
      if (a.requires_grad()) {
        std::vector<T> gs;
        const T* guse = g;
        if (s != T(1)) {
          gs.assign(g, g + m * n);
          for (T& x : gs) x *= s;
          guse = gs.data();
        }
        kernels::matmul_acc(guse, b.data(), a.grad(), m, n, k);
        if (b.requires_grad()) kernels::matmul_tn_acc(guse, a.data(), b.grad(), m, n, k);
      } else if (b.requires_grad()) {
        std::vector<T> gs;
        const T* guse = g;
        if (s != T(1)) {
          gs.assign(g, g + m * n);
          for (T& x : gs) x *= s;
          guse = gs.data();
        }
        kernels::matmul_tn_acc(guse, a.data(), b.grad(), m, n, k);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> matmul_tn(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw contract_error("matmul_tn: incompatible shapes " + shape_str(a.shape()) +
                         "^T x " + shape_str(b.shape()));
  }
  int64_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  auto out = Tensor<T>::zeros({a.dim(1), b.dim(1)});
  kernels::matmul_tn_acc(a.data(), b.data(), out.data(), k, m, n);
  if (tracking(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a, b, out, k, m, n]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      // out = a^T b ; da = b g^T (shape [k,m]), db = a g (shape [k,n])
      if (a.requires_grad()) kernels::matmul_nt_acc(b.data(), g, a.grad(), k, n, m);
      if (b.requires_grad()) kernels::matmul_acc(a.data(), g, b.grad(), k, m, n);
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  auto out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
  if (tracking(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      const T* px2 = x.data();
      T* gx = x.grad();
      for (int64_t i = 0; i < out.size(); ++i) {
        if (px2[i] > T(0)) gx[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> gelu(Tape<T>* tape, const Tensor<T>& x) {
  auto out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = kernels::gelu_scalar(px[i]);
  if (tracking(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      const T* px2 = x.data();
      T* gx = x.grad();
      for (int64_t i = 0; i < out.size(); ++i) {
        gx[i] += g[i] * kernels::gelu_grad_scalar(px2[i]);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(Tape<T>* tape, const Tensor<T>& x, int axis) {
  if (axis < 0) axis += x.rank();
  if (axis < 0 || axis >= x.rank()) throw contract_error("softmax: axis out of range");
  int64_t outer = 1, inner = 1;
  int64_t len = x.dim(axis);
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  auto out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* po = out.data();
  std::vector<T> row(static_cast<size_t>(len)), srow(static_cast<size_t>(len));
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const T* base = px + o * len * inner + in;
      for (int64_t l = 0; l < len; ++l) row[static_cast<size_t>(l)] = base[l * inner];
      kernels::softmax_row(row.data(), srow.data(), len);
      T* obase = po + o * len * inner + in;
      for (int64_t l = 0; l < len; ++l) obase[l * inner] = srow[static_cast<size_t>(l)];
    }
  }
  if (tracking(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out, outer, len, inner]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      const T* y = out.data();
      T* gx = x.grad();
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
          int64_t base = o * len * inner + in;
          T dot = T(0);
          for (int64_t l = 0; l < len; ++l) dot += g[base + l * inner] * y[base + l * inner];
          for (int64_t l = 0; l < len; ++l) {
            int64_t idx = base + l * inner;
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> log_softmax_rows(Tape<T>* tape, const Tensor<T>& x) {
  if (x.rank() != 2) throw contract_error("log_softmax_rows: need rank-2 input");
  int64_t rows = x.dim(0), n = x.dim(1);
  auto out = Tensor<T>::zeros(x.shape());
  const T* px = x.data();
  T* po = out.data();
  parallel_for(rows, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) kernels::log_softmax_row(px + r * n, po + r * n, n);
  });
  if (tracking(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out, rows, n]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      const T* lp = out.data();
      T* gx = x.grad();
      for (int64_t r = 0; r < rows; ++r) {
        T gsum = T(0);
        for (int64_t j = 0; j < n; ++j) gsum += g[r * n + j];
        for (int64_t j = 0; j < n; ++j) {
          gx[r * n + j] += g[r * n + j] - std::exp(lp[r * n + j]) * gsum;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps) {
  int d = x.dim(x.rank() - 1);
  if (gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != d || bias.dim(0) != d) {
    throw contract_error("layer_norm: gain/bias must have shape [d]");
  }
  int64_t rows = x.size() / d;
  auto out = Tensor<T>::zeros(x.shape());
  auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  auto invstd = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  const T* px = x.data();
  const T* pg = gain.data();
  const T* pb = bias.data();
  T* po = out.data();
  parallel_for(rows, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      kernels::layer_norm_row(px + r * d, pg, pb, eps, po + r * d,
                              mean->data() + r, invstd->data() + r, d);
    }
  });
  if (tracking(tape, {&x, &gain, &bias})) {
    out.set_requires_grad(true);
    tape->record([x, gain, bias, out, mean, invstd, rows, d]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      const T* px2 = x.data();
      const T* pg2 = gain.data();
      for (int64_t r = 0; r < rows; ++r) {
        T mu = (*mean)[static_cast<size_t>(r)];
        T is = (*invstd)[static_cast<size_t>(r)];
        T s1 = T(0), s2 = T(0);
        for (int64_t j = 0; j < d; ++j) {
          T xhat = (px2[r * d + j] - mu) * is;
          T dxhat = g[r * d + j] * pg2[j];
          s1 += dxhat;
          s2 += dxhat * xhat;
        }
        if (x.requires_grad()) {
          T* gx = x.grad();
          for (int64_t j = 0; j < d; ++j) {
            T xhat = (px2[r * d + j] - mu) * is;
            T dxhat = g[r * d + j] * pg2[j];
            gx[r * d + j] += is * (dxhat - s1 / static_cast<T>(d) - xhat * s2 / static_cast<T>(d));
          }
        }
        if (gain.requires_grad()) {
          T* gg = gain.grad();
          for (int64_t j = 0; j < d; ++j) {
            T xhat = (px2[r * d + j] - mu) * is;
            gg[j] += g[r * d + j] * xhat;
          }
        }
        if (bias.requires_grad()) {
          T* gb = bias.grad();
          for (int64_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> group_norm(Tape<T>* tape, const Tensor<T>& x, int groups,
                     const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  if (x.rank() != 4) throw contract_error("group_norm: need x[B,C,H,W]");
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (groups < 1 || C % groups != 0) throw contract_error("group_norm: groups must divide channels");
  if (gain.rank() != 1 || gain.dim(0) != C || bias.rank() != 1 || bias.dim(0) != C) {
    throw contract_error("group_norm: gain/bias must have shape [C]");
  }
  int cg = C / groups;
  int64_t spatial = static_cast<int64_t>(H) * W;
  int64_t gsize = cg * spatial;
  auto out = Tensor<T>::zeros(x.shape());
  auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(B) * groups);
  auto invstd = std::make_shared<std::vector<T>>(static_cast<size_t>(B) * groups);
  const T* px = x.data();
  const T* pg = gain.data();
  const T* pb = bias.data();
  T* po = out.data();
  parallel_for(static_cast<int64_t>(B) * groups, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      int64_t b = i / groups, grp = i % groups;
      const T* base = px + (b * C + grp * cg) * spatial;
      T mu = T(0);
      for (int64_t j = 0; j < gsize; ++j) mu += base[j];
      mu /= static_cast<T>(gsize);
      T var = T(0);
      for (int64_t j = 0; j < gsize; ++j) {
        T c = base[j] - mu;
        var += c * c;
      }
      var /= static_cast<T>(gsize);
      T is = T(1) / std::sqrt(var + eps);
      (*mean)[static_cast<size_t>(i)] = mu;
      (*invstd)[static_cast<size_t>(i)] = is;
      T* obase = po + (b * C + grp * cg) * spatial;
      for (int c = 0; c < cg; ++c) {
        T gc = pg[grp * cg + c];
        T bc = pb[grp * cg + c];
        for (int64_t s = 0; s < spatial; ++s) {
          obase[c * spatial + s] = gc * (base[c * spatial + s] - mu) * is + bc;
        }
      }
    }
  });
  if (tracking(tape, {&x, &gain, &bias})) {
    out.set_requires_grad(true);
    tape->record([x, gain, bias, out, mean, invstd, B, C, groups, cg, spatial, gsize]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      const T* px2 = x.data();
      const T* pg2 = gain.data();
      for (int64_t i = 0; i < static_cast<int64_t>(B) * groups; ++i) {
        int64_t b = i / groups, grp = i % groups;
        int64_t off = (b * C + grp * cg) * spatial;
        T mu = (*mean)[static_cast<size_t>(i)];
        T is = (*invstd)[static_cast<size_t>(i)];
        T s1 = T(0), s2 = T(0);
        for (int c = 0; c < cg; ++c) {
          T gc = pg2[grp * cg + c];
          for (int64_t s = 0; s < spatial; ++s) {
            int64_t idx = off + c * spatial + s;
            T xhat = (px2[idx] - mu) * is;
            T dxhat = g[idx] * gc;
            s1 += dxhat;
            s2 += dxhat * xhat;
          }
        }
        if (x.requires_grad()) {
          T* gx = x.grad();
          for (int c = 0; c < cg; ++c) {
            T gc = pg2[grp * cg + c];
            for (int64_t s = 0; s < spatial; ++s) {
              int64_t idx = off + c * spatial + s;
              T xhat = (px2[idx] - mu) * is;
              T dxhat = g[idx] * gc;
              gx[idx] += is * (dxhat - s1 / static_cast<T>(gsize) - xhat * s2 / static_cast<T>(gsize));
            }
          }
        }
        if (gain.requires_grad() || bias.requires_grad()) {
          for (int c = 0; c < cg; ++c) {
            T sg = T(0), sb = T(0);
            for (int64_t s = 0; s < spatial; ++s) {
              int64_t idx = off + c * spatial + s;
              T xhat = (px2[idx] - mu) * is;
              sg += g[idx] * xhat;
              sb += g[idx];
            }
            if (gain.requires_grad()) gain.grad()[grp * cg + c] += sg;
            if (bias.requires_grad()) bias.grad()[grp * cg + c] += sb;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& kernel,
                 const Tensor<T>& bias, int stride, int padding) {
  if (stride < 1) throw contract_error("conv2d: stride must be >= 1");
  if (padding < 0) throw contract_error("conv2d: padding must be >= 0");
  if (kernel.rank() != 4) throw contract_error("conv2d: kernel must be [co,ci,kh,kw]");
  bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3) throw contract_error("conv2d: input must be [ci,H,W] or [B,ci,H,W]");
  int B = batched ? x.dim(0) : 1;
  int ci = batched ? x.dim(1) : x.dim(0);
  int H = batched ? x.dim(2) : x.dim(1);
  int W = batched ? x.dim(3) : x.dim(2);
  int co = kernel.dim(0), kci = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kci != ci) throw contract_error("conv2d: channel mismatch");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co)) {
    throw contract_error("conv2d: bias must be [co]");
  }
  int ho = (H + 2 * padding - kh) / stride + 1;
  int wo = (W + 2 * padding - kw) / stride + 1;
  if (H + 2 * padding < kh || W + 2 * padding < kw) {
    throw contract_error("conv2d: kernel larger than padded input");
  }
  std::vector<int> oshape = batched ? std::vector<int>{B, co, ho, wo}
                                    : std::vector<int>{co, ho, wo};
  auto out = Tensor<T>::zeros(oshape);
  int64_t cols_rows = static_cast<int64_t>(ci) * kh * kw;
  int64_t cols_cols = static_cast<int64_t>(ho) * wo;
  int64_t in_sz = static_cast<int64_t>(ci) * H * W;
  int64_t out_sz = static_cast<int64_t>(co) * ho * wo;
  const T* px = x.data();
  const T* pk = kernel.data();
  T* po = out.data();
  parallel_for(B, [&](int64_t b0, int64_t b1) {
    std::vector<T> cols(static_cast<size_t>(cols_rows * cols_cols));
    for (int64_t b = b0; b < b1; ++b) {
      kernels::im2col(px + b * in_sz, ci, H, W, kh, kw, stride, padding, ho, wo, cols.data());
      kernels::matmul_acc(pk, cols.data(), po + b * out_sz, co, cols_rows, cols_cols);
      if (bias.defined()) {
        const T* pb = bias.data();
        for (int c = 0; c < co; ++c) {
          T* row = po + b * out_sz + static_cast<int64_t>(c) * cols_cols;
          for (int64_t j = 0; j < cols_cols; ++j) row[j] += pb[c];
        }
      }
    }
  });
  if (tracking(tape, {&x, &kernel, &bias})) {
    out.set_requires_grad(true);
    Tensor<T> bias_copy = bias;
    tape->record([x, kernel, bias_copy, out, B, ci, H, W, co, kh, kw, stride, padding,
                  ho, wo, cols_rows, cols_cols, in_sz, out_sz]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      const T* px2 = x.data();
      const T* pk2 = kernel.data();
      std::vector<T> cols(static_cast<size_t>(cols_rows * cols_cols));
      std::vector<T> dcols(static_cast<size_t>(cols_rows * cols_cols));
      for (int64_t b = 0; b < B; ++b) {
        const T* gb = g + b * out_sz;
        if (kernel.requires_grad()) {
          kernels::im2col(px2 + b * in_sz, ci, H, W, kh, kw, stride, padding, ho, wo, cols.data());
          kernels::matmul_nt_acc(gb, cols.data(), kernel.grad(), co, cols_cols, cols_rows);
        }
        if (x.requires_grad()) {
          std::fill(dcols.begin(), dcols.end(), T(0));
          kernels::matmul_tn_acc(pk2, gb, dcols.data(), co, cols_rows, cols_cols);
          kernels::col2im_acc(dcols.data(), ci, H, W, kh, kw, stride, padding, ho, wo,
                              x.grad() + b * in_sz);
        }
        if (bias_copy.defined() && bias_copy.requires_grad()) {
          T* gbias = bias_copy.grad();
          for (int c = 0; c < co; ++c) {
            T acc = T(0);
            const T* row = gb + static_cast<int64_t>(c) * cols_cols;
            for (int64_t j = 0; j < cols_cols; ++j) acc += row[j];
            gbias[c] += acc;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> dropout(Tape<T>* tape, const Tensor<T>& x, double p, Mode mode, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw contract_error("dropout: p must be in [0,1)");
  if (mode == Mode::kEval || p == 0.0) return x;
  auto keep_scale = std::make_shared<std::vector<T>>(static_cast<size_t>(x.size()));
  T inv = static_cast<T>(1.0 / (1.0 - p));
  const T* px = x.data();
  auto out = Tensor<T>::zeros(x.shape());
  T* po = out.data();
  for (int64_t i = 0; i < x.size(); ++i) {
    T s = rng.uniform() < p ? T(0) : inv;
    (*keep_scale)[static_cast<size_t>(i)] = s;
    po[i] = px[i] * s;
  }
  if (tracking(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out, keep_scale]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      T* gx = x.grad();
      for (int64_t i = 0; i < out.size(); ++i) gx[i] += g[i] * (*keep_scale)[static_cast<size_t>(i)];
    });
  }
  return out;
}

template <typename T>
Tensor<T> embedding(Tape<T>* tape, const Tensor<T>& table, const std::vector<int32_t>& ids) {
  if (table.rank() != 2) throw contract_error("embedding: table must be [V,d]");
  int V = table.dim(0), d = table.dim(1);
  for (int32_t id : ids) {
    if (id < 0 || id >= V) throw contract_error("embedding: id out of range");
  }
  int rows = static_cast<int>(ids.size());
  if (rows == 0) throw contract_error("embedding: empty id list");
  auto out = Tensor<T>::zeros({rows, d});
  const T* pt = table.data();
  T* po = out.data();
  for (int r = 0; r < rows; ++r) {
    const T* src = pt + static_cast<int64_t>(ids[static_cast<size_t>(r)]) * d;
    std::copy(src, src + d, po + static_cast<int64_t>(r) * d);
  }
  if (tracking(tape, {&table})) {
    out.set_requires_grad(true);
    auto ids_copy = std::make_shared<std::vector<int32_t>>(ids);
    tape->record([table, out, ids_copy, rows, d]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      T* gt = table.grad();
      for (int r = 0; r < rows; ++r) {
        T* dst = gt + static_cast<int64_t>((*ids_copy)[static_cast<size_t>(r)]) * d;
        const T* src = g + static_cast<int64_t>(r) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_block(Tape<T>* tape, const Tensor<T>& x, int r0, int r1, int c0, int c1) {
  if (x.rank() != 2) throw contract_error("slice_block: need rank-2 input");
  int R = x.dim(0), C = x.dim(1);
  if (r0 < 0 || r1 > R || c0 < 0 || c1 > C || r0 >= r1 || c0 >= c1) {
    throw contract_error("slice_block: invalid bounds");
  }
  int rows = r1 - r0, cols = c1 - c0;
  auto out = Tensor<T>::zeros({rows, cols});
  const T* px = x.data();
  T* po = out.data();
  for (int r = 0; r < rows; ++r) {
    const T* src = px + static_cast<int64_t>(r0 + r) * C + c0;
    std::copy(src, src + cols, po + static_cast<int64_t>(r) * cols);
  }
  if (tracking(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out, r0, c0, rows, cols, C]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      T* gx = x.grad();
      for (int r = 0; r < rows; ++r) {
        T* dst = gx + static_cast<int64_t>(r0 + r) * C + c0;
        const T* src = g + static_cast<int64_t>(r) * cols;
        for (int j = 0; j < cols; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(Tape<T>* tape, const std::vector<Tensor<T>>& pieces) {
  if (pieces.empty()) throw contract_error("concat_cols: no pieces");
  int rows = pieces[0].dim(0);
  int total = 0;
  for (const auto& p : pieces) {
    if (p.rank() != 2 || p.dim(0) != rows) throw contract_error("concat_cols: row mismatch");
    total += p.dim(1);
  }
  auto out = Tensor<T>::zeros({rows, total});
  T* po = out.data();
  int off = 0;
  for (const auto& p : pieces) {
    int cols = p.dim(1);
    const T* src = p.data();
    for (int r = 0; r < rows; ++r) {
      std::copy(src + static_cast<int64_t>(r) * cols, src + static_cast<int64_t>(r + 1) * cols,
                po + static_cast<int64_t>(r) * total + off);
    }
    off += cols;
  }
  bool track = false;
  if (tape) {
    for (const auto& p : pieces) track = track || p.requires_grad();
  }
  if (track) {
    out.set_requires_grad(true);
    auto pieces_copy = std::make_shared<std::vector<Tensor<T>>>(pieces);
    tape->record([pieces_copy, out, rows, total]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      int off2 = 0;
      for (auto& p : *pieces_copy) {
        int cols = p.dim(1);
        if (p.requires_grad()) {
          T* gp = p.grad();
          for (int r = 0; r < rows; ++r) {
            const T* src = g + static_cast<int64_t>(r) * total + off2;
            T* dst = gp + static_cast<int64_t>(r) * cols;
            for (int j = 0; j < cols; ++j) dst[j] += src[j];
          }
        }
        off2 += cols;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_rows(Tape<T>* tape, const std::vector<Tensor<T>>& pieces) {
  if (pieces.empty()) throw contract_error("concat_rows: no pieces");
  int cols = pieces[0].dim(1);
  int total = 0;
  for (const auto& p : pieces) {
    if (p.rank() != 2 || p.dim(1) != cols) throw contract_error("concat_rows: col mismatch");
    total += p.dim(0);
  }
  auto out = Tensor<T>::zeros({total, cols});
  T* po = out.data();
  int64_t off = 0;
  for (const auto& p : pieces) {
    std::copy(p.data(), p.data() + p.size(), po + off);
    off += p.size();
  }
  bool track = false;
  if (tape) {
    for (const auto& p : pieces) track = track || p.requires_grad();
  }
  if (track) {
    out.set_requires_grad(true);
    auto pieces_copy = std::make_shared<std::vector<Tensor<T>>>(pieces);
    tape->record([pieces_copy, out]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      int64_t off2 = 0;
      for (auto& p : *pieces_copy) {
        if (p.requires_grad()) {
          T* gp = p.grad();
          for (int64_t i = 0; i < p.size(); ++i) gp[i] += g[off2 + i];
        }
        off2 += p.size();
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> flatten_hw(Tape<T>* tape, const Tensor<T>& x) {
  if (x.rank() != 4) throw contract_error("flatten_hw: need x[B,c,H,W]");
  int B = x.dim(0), c = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t hw = static_cast<int64_t>(H) * W;
  auto out = Tensor<T>::zeros({static_cast<int>(B * hw), c});
  const T* px = x.data();
  T* po = out.data();
  for (int b = 0; b < B; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const T* src = px + (static_cast<int64_t>(b) * c + ch) * hw;
      T* dst = po + static_cast<int64_t>(b) * hw * c + ch;
      for (int64_t s = 0; s < hw; ++s) dst[s * c] = src[s];
    }
  }
  if (tracking(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out, B, c, hw]() mutable {
      if (!out.has_grad()) return;
      const T* g = out.grad();
      T* gx = x.grad();
      for (int b = 0; b < B; ++b) {
        for (int ch = 0; ch < c; ++ch) {
          T* dst = gx + (static_cast<int64_t>(b) * c + ch) * hw;
          const T* src = g + static_cast<int64_t>(b) * hw * c + ch;
          for (int64_t s = 0; s < hw; ++s) dst[s] += src[s * c];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& x) {
  auto out = Tensor<T>::zeros({1});
  const T* px = x.data();
  T acc = T(0);
  for (int64_t i = 0; i < x.size(); ++i) acc += px[i];
  out.data()[0] = acc;
  if (tracking(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x, out]() mutable {
      if (!out.has_grad()) return;
      T g = out.grad()[0];
      T* gx = x.grad();
      for (int64_t i = 0; i < x.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> nll_masked(Tape<T>* tape, const Tensor<T>& logp,
                     const std::vector<int32_t>& ids, const std::vector<T>& mask) {
  if (logp.rank() != 2) throw contract_error("nll_masked: need logp[r,V]");
  int64_t rows = logp.dim(0), V = logp.dim(1);
  if (static_cast<int64_t>(ids.size()) != rows || static_cast<int64_t>(mask.size()) != rows) {
    throw contract_error("nll_masked: ids/mask length mismatch");
  }
  for (int32_t id : ids) {
    if (id < 0 || id >= V) throw contract_error("nll_masked: id out of range");
  }
  auto out = Tensor<T>::zeros({1});
  const T* lp = logp.data();
  T acc = T(0);
  for (int64_t r = 0; r < rows; ++r) {
    acc -= mask[static_cast<size_t>(r)] * lp[r * V + ids[static_cast<size_t>(r)]];
  }
  out.data()[0] = acc;
  if (tracking(tape, {&logp})) {
    out.set_requires_grad(true);
    auto ids_copy = std::make_shared<std::vector<int32_t>>(ids);
    auto mask_copy = std::make_shared<std::vector<T>>(mask);
    tape->record([logp, out, ids_copy, mask_copy, rows, V]() mutable {
      if (!out.has_grad()) return;
      T g = out.grad()[0];
      T* gx = logp.grad();
      for (int64_t r = 0; r < rows; ++r) {
        gx[r * V + (*ids_copy)[static_cast<size_t>(r)]] -= g * (*mask_copy)[static_cast<size_t>(r)];
      }
    });
  }
  return out;
}

}  // namespace ops

template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, std::span<T> m,
               std::span<T> v, const AdamParams& hp, int64_t t) {
  if (t < 1) throw contract_error("adam_step: t must be >= 1");
  if (param.size() != grad.size() || param.size() != m.size() || param.size() != v.size()) {
    throw contract_error("adam_step: size mismatch between params, grads and state");
  }
  T b1 = static_cast<T>(hp.beta1), b2 = static_cast<T>(hp.beta2);
  T bc1 = static_cast<T>(1.0 - std::pow(hp.beta1, static_cast<double>(t)));
  T bc2 = static_cast<T>(1.0 - std::pow(hp.beta2, static_cast<double>(t)));
  T alpha = static_cast<T>(hp.alpha);
  T eps = static_cast<T>(hp.eps);
  for (size_t i = 0; i < param.size(); ++i) {
    T g = grad[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    T mhat = m[i] / bc1;
    T vhat = v[i] / bc2;
    param[i] -= alpha * mhat / (std::sqrt(vhat) + eps);
  }
}

// explicit instantiations
#define PAGETEXT_INSTANTIATE(T)                                                              \
  template class Tensor<T>;                                                                  \
  template class Tape<T>;                                                                    \
  template bool all_finite<T>(const Tensor<T>&);                                             \
  template void adam_step<T>(std::span<T>, std::span<const T>, std::span<T>, std::span<T>,   \
                             const AdamParams&, int64_t);                                    \
  namespace ops {                                                                            \
  template Tensor<T> add<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> sub<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> mul<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> scale<T>(Tape<T>*, const Tensor<T>&, T);                                \
  template Tensor<T> add_bias_rows<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> matmul<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> matmul_nt<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&, T);          \
  template Tensor<T> matmul_tn<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> relu<T>(Tape<T>*, const Tensor<T>&);                                    \
  template Tensor<T> gelu<T>(Tape<T>*, const Tensor<T>&);                                    \
  template Tensor<T> softmax<T>(Tape<T>*, const Tensor<T>&, int);                            \
  template Tensor<T> log_softmax_rows<T>(Tape<T>*, const Tensor<T>&);                        \
  template Tensor<T> layer_norm<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,             \
                                   const Tensor<T>&, T);                                     \
  template Tensor<T> group_norm<T>(Tape<T>*, const Tensor<T>&, int, const Tensor<T>&,        \
                                   const Tensor<T>&, T);                                     \
  template Tensor<T> conv2d<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,                 \
                               const Tensor<T>&, int, int);                                  \
  template Tensor<T> dropout<T>(Tape<T>*, const Tensor<T>&, double, Mode, Rng&);             \
  template Tensor<T> embedding<T>(Tape<T>*, const Tensor<T>&, const std::vector<int32_t>&);  \
  template Tensor<T> slice_block<T>(Tape<T>*, const Tensor<T>&, int, int, int, int);         \
  template Tensor<T> concat_cols<T>(Tape<T>*, const std::vector<Tensor<T>>&);                \
  template Tensor<T> concat_rows<T>(Tape<T>*, const std::vector<Tensor<T>>&);                \
  template Tensor<T> flatten_hw<T>(Tape<T>*, const Tensor<T>&);                              \
  template Tensor<T> sum_all<T>(Tape<T>*, const Tensor<T>&);                                 \
  template Tensor<T> nll_masked<T>(Tape<T>*, const Tensor<T>&, const std::vector<int32_t>&,  \
                                   const std::vector<T>&);                                   \
  }

PAGETEXT_INSTANTIATE(float)
PAGETEXT_INSTANTIATE(double)
#undef PAGETEXT_INSTANTIATE

}  // namespace pagetext
