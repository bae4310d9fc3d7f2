#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "core/config.h"
#include "core/rng.h"
#include "core/tensor.h"
#include "core/vocab.h"
#include "model/encoder.h"

namespace pagetext {

template <typename T>
struct DecodeResult {
  std::vector<int32_t> ids;  // without the terminating EOS
  bool truncated = false;    // hit max_decode_len before EOS
};

// Transformer decoder stack: windowed causal self-attention, unmasked
// cross-attention over the encoder memory, GELU feed-forward, post-norm
// residuals. Inputs are token embeddings (scaled by sqrt(d)) plus 1D
// sinusoidal positions; when enabled, the scaled line number is concatenated
// as one extra channel and projected back to d_model.
template <typename T>
class Decoder {
 public:
  Decoder(const ModelConfig& cfg, int vocab_size, Rng& rng);

  // ids/lines are [B*T] row-major with trailing PAD; logits [B*T, V]
  Tensor<T> forward(Tape<T>* tape, const std::vector<int32_t>& ids,
                    const std::vector<int>& lines, int batch, int len,
                    const EncodedImage<T>& enc, Mode mode, Rng* dropout_rng) const;

  // Incremental decoding: one token per step, O(T * window) self-attention.
  // Produces bit-identical logits to eval-mode forward().
  struct StepState {
    int S = 0;
    int pos = 0;
    std::vector<std::vector<T>> self_k, self_v;    // per layer, appended rows of d
    std::vector<std::vector<T>> cross_k, cross_v;  // per layer, [S*d], precomputed
    Tensor<T> pe;                                  // [max_decode_len+1, d]
    std::vector<T> logits;
  };
  std::unique_ptr<StepState> begin_decode(const EncodedImage<T>& enc) const;
  // feeds one input token (line index for its lne) and returns logits [V]
  const std::vector<T>& step(StepState& st, int32_t token, int line) const;

  // Greedy argmax decoding; ties break toward the lowest token id. Stops at
  // EOS or cfg.max_decode_len. Line numbers follow emitted newlines.
  DecodeResult<T> greedy_decode(const EncodedImage<T>& enc, const Vocabulary& vocab) const;

  void collect_params(const std::string& prefix,
                      std::vector<std::pair<std::string, Tensor<T>>>& out);

  int vocab_size() const { return vocab_size_; }
  const ModelConfig& config() const { return cfg_; }
  Tensor<T>& output_bias() { return out_b_; }  // test hook

 private:
  struct Linear {
    Tensor<T> w, b;  // w[in,out]
  };
  struct Norm {
    Tensor<T> gain, bias;
  };
  struct Layer {
    Linear self_q, self_k, self_v, self_o;
    Norm ln1;
    Linear cross_q, cross_k, cross_v, cross_o;
    Norm ln2;
    Linear ff1, ff2;
    Norm ln3;
  };

  Tensor<T> linear(Tape<T>* tape, const Tensor<T>& x, const Linear& l) const;
  Tensor<T> attention(Tape<T>* tape, const Tensor<T>& q_in, const Tensor<T>& kv_in, int batch,
                      int q_len, int kv_len, const Layer& layer, bool self_attn,
                      const Tensor<T>& mask, Mode mode, Rng* rng) const;

  ModelConfig cfg_;
  int vocab_size_;
  Tensor<T> embed_;  // [V, d]
  Linear lne_proj_;  // [d+1, d], only when line_number_encoding
  std::vector<Layer> layers_;
  Tensor<T> out_w_, out_b_;  // [d, V]
};

// softmax over one logits row
template <typename T>
std::vector<T> step_distribution(std::span<const T> logits);

}  // namespace pagetext
