#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "core/errors.h"
#include "core/rng.h"

namespace pagetext {

enum class Mode { kTrain, kEval };

// Dense row-major tensor with optional gradient buffer. Copying a Tensor
// aliases the same storage (handle semantics); ops always allocate fresh
// outputs.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, T value);
  static Tensor from(std::vector<int> shape, std::vector<T> values);
  static Tensor scalar(T value) { return from({1}, {value}); }

  bool defined() const { return st_ != nullptr; }
  const std::vector<int>& shape() const { return st_->shape; }
  int dim(int i) const { return st_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(st_->shape.size()); }
  int64_t size() const { return static_cast<int64_t>(st_->v.size()); }

  // Handle semantics: a const Tensor is a const handle to shared storage,
  // so accessors hand out mutable pointers (as shared_ptr does).
  T* data() const { return st_->v.data(); }
  std::span<T> values() const { return std::span<T>(st_->v.data(), st_->v.size()); }

  bool requires_grad() const { return st_->requires_grad; }
  void set_requires_grad(bool b) const { st_->requires_grad = b; }

  // Gradient buffer, zero-allocated on first access.
  T* grad() const {
    if (st_->g.empty()) st_->g.assign(st_->v.size(), T(0));
    return st_->g.data();
  }
  bool has_grad() const { return !st_->g.empty(); }
  void zero_grad() const {
    if (!st_->g.empty()) std::fill(st_->g.begin(), st_->g.end(), T(0));
  }

  T item() const {
    if (size() != 1) throw contract_error("item() requires a scalar tensor");
    return st_->v[0];
  }

  bool same_storage(const Tensor& o) const { return st_ == o.st_; }

 private:
  struct Storage {
    std::vector<int> shape;
    std::vector<T> v;
    std::vector<T> g;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> st_;
};

// Ordered record of executed ops. backward() replays the chain rule in
// reverse creation order; inputs always precede the ops that consume them,
// so this order is a valid reverse-topological order. Single-threaded.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    ops_.push_back(std::move(backward_fn));
  }
  // Seeds d(loss)/d(loss) = seed and propagates. Accumulates into existing
  // grad buffers; callers zero parameter grads when starting a new update.
  void backward(Tensor<T>& loss, T seed = T(1));
  void clear() { ops_.clear(); }
  size_t size() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
};

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

template <typename T>
bool all_finite(const Tensor<T>& t);

namespace ops {

// elementwise, same shape
template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& a, T s);

// x[r,n] + bias[n] broadcast over rows
template <typename T>
Tensor<T> add_bias_rows(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& bias);

// matrix products; nt multiplies by b transposed (with optional scalar),
// tn multiplies a transposed by b
template <typename T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> matmul_nt(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b,
                    T s = T(1));
template <typename T>
Tensor<T> matmul_tn(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x);
// exact Gaussian-CDF GELU
template <typename T>
Tensor<T> gelu(Tape<T>* tape, const Tensor<T>& x);

template <typename T>
Tensor<T> softmax(Tape<T>* tape, const Tensor<T>& x, int axis);
template <typename T>
Tensor<T> log_softmax_rows(Tape<T>* tape, const Tensor<T>& x);

template <typename T>
Tensor<T> layer_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps);

// x[B,C,H,W], per-image groups of C/groups channels
template <typename T>
Tensor<T> group_norm(Tape<T>* tape, const Tensor<T>& x, int groups,
                     const Tensor<T>& gain, const Tensor<T>& bias, T eps);

// cross-correlation; x[B,ci,H,W] (or [ci,H,W]), kernel[co,ci,kh,kw]
template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& kernel,
                 const Tensor<T>& bias, int stride, int padding);

// inverted dropout: train zeroes with prob p and scales by 1/(1-p),
// eval is the identity
template <typename T>
Tensor<T> dropout(Tape<T>* tape, const Tensor<T>& x, double p, Mode mode,
                  Rng& rng);

template <typename T>
Tensor<T> embedding(Tape<T>* tape, const Tensor<T>& table,
                    const std::vector<int32_t>& ids);

template <typename T>
Tensor<T> slice_block(Tape<T>* tape, const Tensor<T>& x, int r0, int r1,
                      int c0, int c1);
template <typename T>
Tensor<T> concat_cols(Tape<T>* tape, const std::vector<Tensor<T>>& pieces);
template <typename T>
Tensor<T> concat_rows(Tape<T>* tape, const std::vector<Tensor<T>>& pieces);

// [B,c,H,W] -> [B*H*W, c], y-major within each image
template <typename T>
Tensor<T> flatten_hw(Tape<T>* tape, const Tensor<T>& x);

template <typename T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& x);

// sum over rows of -logp[r, ids[r]] * mask[r]
template <typename T>
Tensor<T> nll_masked(Tape<T>* tape, const Tensor<T>& logp,
                     const std::vector<int32_t>& ids,
                     const std::vector<T>& mask);

}  // namespace ops

struct AdamParams {
  double alpha = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected ADAM update, no weight decay. t is the 1-based step count.
template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, std::span<T> m,
               std::span<T> v, const AdamParams& hp, int64_t t);

}  // namespace pagetext
