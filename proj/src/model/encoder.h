#pragma once

#include <string>
#include <utility>
#include <vector>

#include "core/config.h"
#include "core/rng.h"
#include "core/tensor.h"

namespace pagetext {

// Flattened encoder output: one d_model row per feature-grid cell, y-major
// within each image, images stacked along the row axis.
template <typename T>
struct EncodedImage {
  Tensor<T> memory;  // [batch * grid_h * grid_w, d_model]
  int batch = 0;
  int grid_h = 0;
  int grid_w = 0;
  int rows_per_image() const { return grid_h * grid_w; }
};

// Truncated residual CNN (no classification head): 3x3 stride-2 stem, then
// one stage per configured width, two 3x3 convs per block with identity
// shortcuts and a 1x1 projection shortcut on stage transitions. Total
// stride = 2^(number of stages). Per-channel normalization keeps single
// image inference batch-independent; "none" disables normalization.
template <typename T>
class Encoder {
 public:
  Encoder(const ModelConfig& cfg, Rng& rng);

  // images [B,1,H,W]; H and W must be multiples of the stride
  Tensor<T> features(Tape<T>* tape, const Tensor<T>& images) const;

  // project to d_model, add the 2D positional encoding, flatten
  EncodedImage<T> encode(Tape<T>* tape, const Tensor<T>& images) const;

  int stride() const { return cfg_.encoder_stride(); }
  void collect_params(const std::string& prefix,
                      std::vector<std::pair<std::string, Tensor<T>>>& out);

  // test hook: zero the projection so that memory == positional encoding
  Tensor<T>& projection_weight() { return proj_w_; }
  Tensor<T>& projection_bias() { return proj_b_; }

 private:
  struct Norm {
    Tensor<T> gain, bias;
  };
  struct Block {
    Tensor<T> conv1_w, conv1_b, conv2_w, conv2_b;
    Norm n1, n2;
    Tensor<T> proj_w, proj_b;  // defined on stage transitions
    Norm nproj;
    int stride = 1;
  };

  Tensor<T> apply_norm(Tape<T>* tape, const Tensor<T>& x, const Norm& n) const;

  ModelConfig cfg_;
  bool use_norm_;
  Tensor<T> stem_w_, stem_b_;
  Norm stem_norm_;
  std::vector<std::vector<Block>> stages_;
  Tensor<T> proj_w_, proj_b_;  // 1x1 conv to d_model
};

}  // namespace pagetext
