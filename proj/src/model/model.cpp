#include "model/model.h"

#include "core/kernels.h"
#include "model/positional.h"

namespace pagetext {

template <typename T>
PageModel<T>::PageModel(const ModelConfig& cfg, int vocab_size, uint64_t init_seed) : cfg_(cfg) {
  Rng rng(init_seed);
  Rng enc_rng = rng.split(1);
  Rng dec_rng = rng.split(2);
  encoder_ = std::make_unique<Encoder<T>>(cfg, enc_rng);
  decoder_ = std::make_unique<Decoder<T>>(cfg, vocab_size, dec_rng);
  encoder_->collect_params("encoder.", params_);
  decoder_->collect_params("decoder.", params_);
}

template <typename T>
Tensor<T>* PageModel<T>::find_param(const std::string& name) {
  for (auto& [n, t] : params_) {
    if (n == name) return &t;
  }
  return nullptr;
}

template <typename T>
void PageModel<T>::zero_grads() {
  for (auto& [n, t] : params_) t.zero_grad();
}

template <typename T>
int64_t PageModel<T>::param_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

template <typename T>
Tensor<T> PageModel<T>::forward(Tape<T>* tape, const Tensor<T>& images,
                                const std::vector<int32_t>& input_ids,
                                const std::vector<int>& lines, int batch, int len, Mode mode,
                                Rng* dropout_rng) const {
  EncodedImage<T> enc = encoder_->encode(tape, images);
  return decoder_->forward(tape, input_ids, lines, batch, len, enc, mode, dropout_rng);
}

template <typename T>
double PageModel<T>::sequence_log_prob(const std::vector<int32_t>& seq,
                                       const EncodedImage<T>& enc, int32_t newline_id) const {
  if (seq.empty() || seq.back() != Vocabulary::kEos) {
    throw contract_error("sequence_log_prob: sequence must end with EOS");
  }
  std::vector<int32_t> input(seq.size());
  input[0] = Vocabulary::kBos;
  std::copy(seq.begin(), seq.end() - 1, input.begin() + 1);
  std::vector<int> lines = token_line_numbers(input, newline_id, cfg_.max_lines);
  Tensor<T> logits = decoder_->forward(nullptr, input, lines, 1, static_cast<int>(input.size()),
                                       enc, Mode::kEval, nullptr);
  int V = logits.dim(1);
  double total = 0.0;
  std::vector<T> logp(static_cast<size_t>(V));
  for (size_t t = 0; t < seq.size(); ++t) {
    kernels::log_softmax_row(logits.data() + static_cast<int64_t>(t) * V, logp.data(), V);
    total += static_cast<double>(logp[static_cast<size_t>(seq[t])]);
  }
  return total;
}

template class PageModel<float>;
template class PageModel<double>;

}  // namespace pagetext
