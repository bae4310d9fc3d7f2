#include "train/batch.h"

#include <algorithm>

#include "model/positional.h"

namespace pagetext {

std::pair<std::vector<int32_t>, std::vector<int32_t>> teacher_forcing_shift(
    const std::vector<int32_t>& seq) {
  if (seq.empty() || seq.back() != Vocabulary::kEos) {
    throw contract_error("teacher_forcing_shift: sequence must end with EOS");
  }
  std::vector<int32_t> input(seq.size());
  input[0] = Vocabulary::kBos;
  std::copy(seq.begin(), seq.end() - 1, input.begin() + 1);
  return {input, seq};
}

template <typename T>
Batch<T> make_batch(const std::vector<Sample>& samples, const Vocabulary& vocab, int canvas_h,
                    int canvas_w, Mode mode, const std::string& pad_mode, int max_lines,
                    Rng& rng) {
  if (samples.empty()) throw contract_error("make_batch: no samples");
  Batch<T> b;
  b.batch = static_cast<int>(samples.size());

  std::vector<std::vector<int32_t>> inputs, targets;
  int len = 0;
  for (const Sample& s : samples) {
    auto [in, tgt] = teacher_forcing_shift(vocab.encode(s.transcript));
    len = std::max(len, static_cast<int>(in.size()));
    inputs.push_back(std::move(in));
    targets.push_back(std::move(tgt));
  }
  b.len = len;
  b.input_ids.assign(static_cast<size_t>(b.batch) * len, Vocabulary::kPad);
  b.target_ids.assign(static_cast<size_t>(b.batch) * len, Vocabulary::kPad);
  b.lines.assign(static_cast<size_t>(b.batch) * len, 1);
  b.mask.assign(static_cast<size_t>(b.batch) * len, T(0));
  for (int i = 0; i < b.batch; ++i) {
    const auto& in = inputs[static_cast<size_t>(i)];
    const auto& tgt = targets[static_cast<size_t>(i)];
    std::vector<int> lines = token_line_numbers(in, vocab.newline_id(), max_lines);
    int64_t off = static_cast<int64_t>(i) * len;
    for (size_t t = 0; t < in.size(); ++t) {
      b.input_ids[static_cast<size_t>(off) + t] = in[t];
      b.target_ids[static_cast<size_t>(off) + t] = tgt[t];
      b.lines[static_cast<size_t>(off) + t] = lines[t];
      b.mask[static_cast<size_t>(off) + t] = T(1);
    }
    // padded tail keeps the last line index so lne stays in range
    for (size_t t = in.size(); t < static_cast<size_t>(len); ++t) {
      b.lines[static_cast<size_t>(off) + t] = lines.back();
    }
    b.n_tokens += static_cast<int64_t>(tgt.size());
  }

  b.images = Tensor<T>::zeros({b.batch, 1, canvas_h, canvas_w});
  T* px = b.images.data();
  for (int i = 0; i < b.batch; ++i) {
    const Image& img = samples[static_cast<size_t>(i)].image;
    if (img.height > canvas_h || img.width > canvas_w) {
      throw contract_error("make_batch: image larger than the canvas; rescale first");
    }
    int oy, ox;
    if (mode == Mode::kTrain) {
      oy = static_cast<int>(rng.uniform_int(0, canvas_h - img.height));
      ox = static_cast<int>(rng.uniform_int(0, canvas_w - img.width));
    } else {
      oy = (canvas_h - img.height) / 2;
      ox = (canvas_w - img.width) / 2;
    }
    T fill = pad_mode == "zero" ? T(0) : static_cast<T>(img.corner_max());
    T* dst = px + static_cast<int64_t>(i) * canvas_h * canvas_w;
    for (int y = 0; y < canvas_h; ++y) {
      for (int x = 0; x < canvas_w; ++x) {
        bool inside = y >= oy && y < oy + img.height && x >= ox && x < ox + img.width;
        dst[static_cast<int64_t>(y) * canvas_w + x] =
            inside ? static_cast<T>(img.at(y - oy, x - ox)) : fill;
      }
    }
  }
  return b;
}

template <typename T>
Tensor<T> sequence_loss(Tape<T>* tape, const Tensor<T>& logits,
                        const std::vector<int32_t>& target) {
  if (logits.rank() != 2 || logits.dim(0) != static_cast<int>(target.size())) {
    throw contract_error("sequence_loss: logits rows must match target length");
  }
  Tensor<T> logp = ops::log_softmax_rows(tape, logits);
  std::vector<T> mask(target.size(), T(1));
  Tensor<T> nll = ops::nll_masked(tape, logp, target, mask);
  return ops::scale(tape, nll, static_cast<T>(1.0 / static_cast<double>(target.size())));
}

template <typename T>
Tensor<T> batch_nll_sum(Tape<T>* tape, const Tensor<T>& logits, const Batch<T>& batch) {
  if (logits.rank() != 2 || logits.dim(0) != batch.batch * batch.len) {
    throw contract_error("batch loss: logits shape mismatch");
  }
  Tensor<T> logp = ops::log_softmax_rows(tape, logits);
  return ops::nll_masked(tape, logp, batch.target_ids, batch.mask);
}

template <typename T>
Tensor<T> batch_loss(Tape<T>* tape, const Tensor<T>& logits, const Batch<T>& batch) {
  Tensor<T> nll = batch_nll_sum(tape, logits, batch);
  return ops::scale(tape, nll, static_cast<T>(1.0 / static_cast<double>(batch.n_tokens)));
}

#define PAGETEXT_INSTANTIATE_BATCH(T)                                                        \
  template Batch<T> make_batch<T>(const std::vector<Sample>&, const Vocabulary&, int, int,   \
                                  Mode, const std::string&, int, Rng&);                      \
  template Tensor<T> sequence_loss<T>(Tape<T>*, const Tensor<T>&,                            \
                                      const std::vector<int32_t>&);                          \
  template Tensor<T> batch_nll_sum<T>(Tape<T>*, const Tensor<T>&, const Batch<T>&);          \
  template Tensor<T> batch_loss<T>(Tape<T>*, const Tensor<T>&, const Batch<T>&);

PAGETEXT_INSTANTIATE_BATCH(float)
PAGETEXT_INSTANTIATE_BATCH(double)
#undef PAGETEXT_INSTANTIATE_BATCH

}  // namespace pagetext
