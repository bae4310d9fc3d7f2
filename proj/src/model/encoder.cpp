#include "model/encoder.h"

#include <cmath>

#include "model/positional.h"

namespace pagetext {

namespace {

template <typename T>
Tensor<T> he_conv(int co, int ci, int kh, int kw, Rng& rng) {
  auto w = Tensor<T>::zeros({co, ci, kh, kw});
  double std = std::sqrt(2.0 / (static_cast<double>(ci) * kh * kw));
  T* p = w.data();
  for (int64_t i = 0; i < w.size(); ++i) p[i] = static_cast<T>(rng.normal(0.0, std));
  w.set_requires_grad(true);
  return w;
}

template <typename T>
Tensor<T> zero_param(std::vector<int> shape) {
  auto t = Tensor<T>::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> ones_param(std::vector<int> shape) {
  auto t = Tensor<T>::full(std::move(shape), T(1));
  t.set_requires_grad(true);
  return t;
}

}  // namespace

template <typename T>
Encoder<T>::Encoder(const ModelConfig& cfg, Rng& rng)
    : cfg_(cfg), use_norm_(cfg.encoder_norm == "group") {
  int w0 = cfg.encoder_widths[0];
  stem_w_ = he_conv<T>(w0, 1, 3, 3, rng);
  if (use_norm_) {
    stem_norm_.gain = ones_param<T>({w0});
    stem_norm_.bias = zero_param<T>({w0});
  } else {
    stem_b_ = zero_param<T>({w0});
  }
  int in_c = w0;
  for (size_t s = 0; s < cfg.encoder_widths.size(); ++s) {
    int width = cfg.encoder_widths[s];
    std::vector<Block> stage;
    for (int b = 0; b < cfg.encoder_blocks[s]; ++b) {
      Block blk;
      blk.stride = (b == 0 && s > 0) ? 2 : 1;
      blk.conv1_w = he_conv<T>(width, in_c, 3, 3, rng);
      blk.conv2_w = he_conv<T>(width, width, 3, 3, rng);
      if (use_norm_) {
        blk.n1.gain = ones_param<T>({width});
        blk.n1.bias = zero_param<T>({width});
        blk.n2.gain = ones_param<T>({width});
        blk.n2.bias = zero_param<T>({width});
      } else {
        blk.conv1_b = zero_param<T>({width});
        blk.conv2_b = zero_param<T>({width});
      }
      if (blk.stride != 1 || in_c != width) {
        blk.proj_w = he_conv<T>(width, in_c, 1, 1, rng);
        if (use_norm_) {
          blk.nproj.gain = ones_param<T>({width});
          blk.nproj.bias = zero_param<T>({width});
        } else {
          blk.proj_b = zero_param<T>({width});
        }
      }
      in_c = width;
      stage.push_back(std::move(blk));
    }
    stages_.push_back(std::move(stage));
  }
  proj_w_ = he_conv<T>(cfg.d_model, in_c, 1, 1, rng);
  proj_b_ = zero_param<T>({cfg.d_model});
}

template <typename T>
Tensor<T> Encoder<T>::apply_norm(Tape<T>* tape, const Tensor<T>& x, const Norm& n) const {
  // one group per channel: statistics are per image and per channel
  return ops::group_norm(tape, x, x.dim(1), n.gain, n.bias, T(1e-5));
}

template <typename T>
Tensor<T> Encoder<T>::features(Tape<T>* tape, const Tensor<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != 1) {
    throw contract_error("encoder: images must be [B,1,H,W]");
  }
  int st = stride();
  if (images.dim(2) % st != 0 || images.dim(3) % st != 0) {
    throw contract_error("encoder: image dims must be multiples of the stride (pad first)");
  }
  Tensor<T> none;
  Tensor<T> x = ops::conv2d(tape, images, stem_w_, use_norm_ ? none : stem_b_, 2, 1);
  if (use_norm_) x = apply_norm(tape, x, stem_norm_);
  x = ops::relu(tape, x);
  for (const auto& stage : stages_) {
    for (const Block& blk : stage) {
      Tensor<T> shortcut = x;
      Tensor<T> h = ops::conv2d(tape, x, blk.conv1_w, use_norm_ ? none : blk.conv1_b,
                                blk.stride, 1);
      if (use_norm_) h = apply_norm(tape, h, blk.n1);
      h = ops::relu(tape, h);
      h = ops::conv2d(tape, h, blk.conv2_w, use_norm_ ? none : blk.conv2_b, 1, 1);
      if (use_norm_) h = apply_norm(tape, h, blk.n2);
      if (blk.proj_w.defined()) {
        shortcut = ops::conv2d(tape, shortcut, blk.proj_w, use_norm_ ? none : blk.proj_b,
                               blk.stride, 0);
        if (use_norm_) shortcut = apply_norm(tape, shortcut, blk.nproj);
      }
      x = ops::relu(tape, ops::add(tape, h, shortcut));
    }
  }
  return x;
}

template <typename T>
EncodedImage<T> Encoder<T>::encode(Tape<T>* tape, const Tensor<T>& images) const {
  Tensor<T> feats = features(tape, images);
  Tensor<T> none;
  Tensor<T> proj = ops::conv2d(tape, feats, proj_w_, proj_b_, 1, 0);  // [B,d,H',W']
  int B = proj.dim(0), gh = proj.dim(2), gw = proj.dim(3);
  Tensor<T> flat = ops::flatten_hw(tape, proj);  // [B*H'*W', d]
  Tensor<T> pe = positional_encoding_2d<T>(gh, gw, cfg_.d_model);
  Tensor<T> pe_tiled = pe;
  if (B > 1) {
    pe_tiled = Tensor<T>::zeros({flat.dim(0), cfg_.d_model});
    T* dst = pe_tiled.data();
    for (int b = 0; b < B; ++b) {
      std::copy(pe.data(), pe.data() + pe.size(), dst + static_cast<int64_t>(b) * pe.size());
    }
  }
  EncodedImage<T> out;
  out.memory = ops::add(tape, flat, pe_tiled);
  out.batch = B;
  out.grid_h = gh;
  out.grid_w = gw;
  return out;
}

template <typename T>
void Encoder<T>::collect_params(const std::string& prefix,
                                std::vector<std::pair<std::string, Tensor<T>>>& out) {
  auto put = [&out](const std::string& name, const Tensor<T>& t) {
    if (t.defined()) out.emplace_back(name, t);
  };
  put(prefix + "stem.w", stem_w_);
  put(prefix + "stem.b", stem_b_);
  put(prefix + "stem.norm.gain", stem_norm_.gain);
  put(prefix + "stem.norm.bias", stem_norm_.bias);
  for (size_t s = 0; s < stages_.size(); ++s) {
    for (size_t b = 0; b < stages_[s].size(); ++b) {
      Block& blk = stages_[s][b];
      std::string p = prefix + "s" + std::to_string(s) + ".b" + std::to_string(b) + ".";
      put(p + "conv1.w", blk.conv1_w);
      put(p + "conv1.b", blk.conv1_b);
      put(p + "conv2.w", blk.conv2_w);
      put(p + "conv2.b", blk.conv2_b);
      put(p + "n1.gain", blk.n1.gain);
      put(p + "n1.bias", blk.n1.bias);
      put(p + "n2.gain", blk.n2.gain);
      put(p + "n2.bias", blk.n2.bias);
      put(p + "proj.w", blk.proj_w);
      put(p + "proj.b", blk.proj_b);
      put(p + "nproj.gain", blk.nproj.gain);
      put(p + "nproj.bias", blk.nproj.bias);
    }
  }
  put(prefix + "proj.w", proj_w_);
  put(prefix + "proj.b", proj_b_);
}

template class Encoder<float>;
template class Encoder<double>;

}  // namespace pagetext
