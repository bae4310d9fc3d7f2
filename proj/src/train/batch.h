#pragma once

#include <utility>
#include <vector>

#include "core/config.h"
#include "core/tensor.h"
#include "core/vocab.h"
#include "data/render.h"

namespace pagetext {

// Padded teacher-forcing batch. target_ids are input_ids shifted left by one
// with EOS as the final real target; mask is 1 for real targets, 0 for PAD;
// n_tokens counts real targets.
template <typename T>
struct Batch {
  Tensor<T> images;                 // [B,1,H,W] on a common canvas
  std::vector<int32_t> input_ids;   // [B*len]
  std::vector<int32_t> target_ids;  // [B*len]
  std::vector<int> lines;           // line index of each input token
  std::vector<T> mask;              // [B*len]
  int batch = 0;
  int len = 0;
  int64_t n_tokens = 0;
};

// input = [BOS] + seq without EOS; target = seq. Lengths stay equal.
std::pair<std::vector<int32_t>, std::vector<int32_t>> teacher_forcing_shift(
    const std::vector<int32_t>& seq);

// Places each sample image on the canvas (train: uniform random offset,
// eval: centered), pads with the corner max or zero, encodes transcripts.
// Throws contract_error when an image exceeds the canvas.
template <typename T>
Batch<T> make_batch(const std::vector<Sample>& samples, const Vocabulary& vocab, int canvas_h,
                    int canvas_w, Mode mode, const std::string& pad_mode, int max_lines,
                    Rng& rng);

// mean NLL over the real tokens of one sequence (EOS included)
template <typename T>
Tensor<T> sequence_loss(Tape<T>* tape, const Tensor<T>& logits,
                        const std::vector<int32_t>& target);

// sum over the batch of -ln p(target); divide by n_tokens for the batch loss
template <typename T>
Tensor<T> batch_nll_sum(Tape<T>* tape, const Tensor<T>& logits, const Batch<T>& batch);

template <typename T>
Tensor<T> batch_loss(Tape<T>* tape, const Tensor<T>& logits, const Batch<T>& batch);

}  // namespace pagetext
