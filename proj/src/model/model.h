#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "core/config.h"
#include "core/vocab.h"
#include "model/decoder.h"
#include "model/encoder.h"

namespace pagetext {

// Encoder + decoder with a flat named-parameter registry. Parameter names
// are the checkpoint contract.
template <typename T>
class PageModel {
 public:
  PageModel(const ModelConfig& cfg, int vocab_size, uint64_t init_seed);

  Encoder<T>& encoder() { return *encoder_; }
  Decoder<T>& decoder() { return *decoder_; }
  const ModelConfig& config() const { return cfg_; }

  std::vector<std::pair<std::string, Tensor<T>>>& params() { return params_; }
  Tensor<T>* find_param(const std::string& name);
  void zero_grads();
  int64_t param_count() const;

  EncodedImage<T> encode(Tape<T>* tape, const Tensor<T>& images) const {
    return encoder_->encode(tape, images);
  }

  // logits [B*len, V]
  Tensor<T> forward(Tape<T>* tape, const Tensor<T>& images, const std::vector<int32_t>& input_ids,
                    const std::vector<int>& lines, int batch, int len, Mode mode,
                    Rng* dropout_rng) const;

  // ln P(seq | image) under teacher forcing; seq must end with EOS.
  // newline_id feeds the line-number channel when that is enabled.
  double sequence_log_prob(const std::vector<int32_t>& seq, const EncodedImage<T>& enc,
                           int32_t newline_id = -1) const;

 private:
  ModelConfig cfg_;
  std::unique_ptr<Encoder<T>> encoder_;
  std::unique_ptr<Decoder<T>> decoder_;
  std::vector<std::pair<std::string, Tensor<T>>> params_;
};

}  // namespace pagetext
