#include "model/decoder.h"

#include <cmath>

#include "core/kernels.h"
#include "model/positional.h"

namespace pagetext {

namespace {

template <typename T>
Tensor<T> xavier(int in, int out, Rng& rng) {
  auto w = Tensor<T>::zeros({in, out});
  double limit = std::sqrt(6.0 / (in + out));
  T* p = w.data();
  for (int64_t i = 0; i < w.size(); ++i) p[i] = static_cast<T>(rng.uniform(-limit, limit));
  w.set_requires_grad(true);
  return w;
}

template <typename T>
Tensor<T> zeros_param(std::vector<int> shape) {
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
Decoder<T>::Decoder(const ModelConfig& cfg, int vocab_size, Rng& rng)
    : cfg_(cfg), vocab_size_(vocab_size) {
  int d = cfg.d_model;
  embed_ = Tensor<T>::zeros({vocab_size, d});
  T* e = embed_.data();
  for (int64_t i = 0; i < embed_.size(); ++i) e[i] = static_cast<T>(rng.normal(0.0, 0.02));
  embed_.set_requires_grad(true);
  if (cfg.line_number_encoding) {
    lne_proj_.w = xavier<T>(d + 1, d, rng);
    lne_proj_.b = zeros_param<T>({d});
  }
  layers_.resize(static_cast<size_t>(cfg.decoder_layers));
  for (Layer& l : layers_) {
    auto mk = [&](int in, int out) {
      Linear lin;
      lin.w = xavier<T>(in, out, rng);
      lin.b = zeros_param<T>({out});
      return lin;
    };
    l.self_q = mk(d, d);
    l.self_k = mk(d, d);
    l.self_v = mk(d, d);
    l.self_o = mk(d, d);
    l.ln1.gain = ones_param<T>({d});
    l.ln1.bias = zeros_param<T>({d});
    l.cross_q = mk(d, d);
    l.cross_k = mk(d, d);
    l.cross_v = mk(d, d);
    l.cross_o = mk(d, d);
    l.ln2.gain = ones_param<T>({d});
    l.ln2.bias = zeros_param<T>({d});
    l.ff1 = mk(d, cfg.d_ff);
    l.ff2 = mk(cfg.d_ff, d);
    l.ln3.gain = ones_param<T>({d});
    l.ln3.bias = zeros_param<T>({d});
  }
  out_w_ = xavier<T>(d, vocab_size, rng);
  out_b_ = zeros_param<T>({vocab_size});
}

template <typename T>
Tensor<T> Decoder<T>::linear(Tape<T>* tape, const Tensor<T>& x, const Linear& l) const {
  return ops::add_bias_rows(tape, ops::matmul(tape, x, l.w), l.b);
}

template <typename T>
Tensor<T> Decoder<T>::attention(Tape<T>* tape, const Tensor<T>& q_in, const Tensor<T>& kv_in,
                                int batch, int q_len, int kv_len, const Layer& layer,
                                bool self_attn, const Tensor<T>& mask, Mode mode,
                                Rng* rng) const {
  int d = cfg_.d_model;
  int heads = cfg_.heads;
  int dk = d / heads;
  T inv_sqrt_dk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
  const Linear& lq = self_attn ? layer.self_q : layer.cross_q;
  const Linear& lk = self_attn ? layer.self_k : layer.cross_k;
  const Linear& lv = self_attn ? layer.self_v : layer.cross_v;
  const Linear& lo = self_attn ? layer.self_o : layer.cross_o;

  Tensor<T> q = linear(tape, q_in, lq);   // [B*Tq, d]
  Tensor<T> k = linear(tape, kv_in, lk);  // [B*S, d]
  Tensor<T> v = linear(tape, kv_in, lv);

  std::vector<Tensor<T>> rows;
  rows.reserve(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    std::vector<Tensor<T>> head_ctx;
    head_ctx.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Tensor<T> qb = ops::slice_block(tape, q, b * q_len, (b + 1) * q_len, h * dk, (h + 1) * dk);
      Tensor<T> kb = ops::slice_block(tape, k, b * kv_len, (b + 1) * kv_len, h * dk, (h + 1) * dk);
      Tensor<T> vb = ops::slice_block(tape, v, b * kv_len, (b + 1) * kv_len, h * dk, (h + 1) * dk);
      Tensor<T> scores = ops::matmul_nt(tape, qb, kb, inv_sqrt_dk);  // [Tq, S]
      if (mask.defined()) scores = ops::add(tape, scores, mask);
      Tensor<T> probs = ops::softmax(tape, scores, 1);
      if (mode == Mode::kTrain && cfg_.dropout > 0.0 && rng) {
        probs = ops::dropout(tape, probs, cfg_.dropout, mode, *rng);
      }
      head_ctx.push_back(ops::matmul(tape, probs, vb));  // [Tq, dk]
    }
    rows.push_back(ops::concat_cols(tape, head_ctx));  // [Tq, d]
  }
  Tensor<T> ctx = batch == 1 ? rows[0] : ops::concat_rows(tape, rows);  // [B*Tq, d]
  return linear(tape, ctx, lo);
}

template <typename T>
Tensor<T> Decoder<T>::forward(Tape<T>* tape, const std::vector<int32_t>& ids,
                              const std::vector<int>& lines, int batch, int len,
                              const EncodedImage<T>& enc, Mode mode, Rng* dropout_rng) const {
  if (static_cast<int64_t>(ids.size()) != static_cast<int64_t>(batch) * len) {
    throw contract_error("decoder: ids size must equal batch*len");
  }
  if (enc.batch != batch) throw contract_error("decoder: encoder batch mismatch");
  if (cfg_.line_number_encoding && lines.size() != ids.size()) {
    throw contract_error("decoder: line numbers misaligned with ids");
  }
  int d = cfg_.d_model;
  int S = enc.rows_per_image();
  bool drop = mode == Mode::kTrain && cfg_.dropout > 0.0 && dropout_rng;

  Tensor<T> x = ops::embedding(tape, embed_, ids);
  x = ops::scale(tape, x, static_cast<T>(std::sqrt(static_cast<double>(d))));
  Tensor<T> pe = positional_encoding_1d<T>(len, d);
  Tensor<T> pe_tiled = pe;
  if (batch > 1) {
    pe_tiled = Tensor<T>::zeros({batch * len, d});
    T* dst = pe_tiled.data();
    for (int b = 0; b < batch; ++b) {
      std::copy(pe.data(), pe.data() + pe.size(), dst + static_cast<int64_t>(b) * pe.size());
    }
  }
  x = ops::add(tape, x, pe_tiled);
  if (drop) x = ops::dropout(tape, x, cfg_.dropout, mode, *dropout_rng);
  if (cfg_.line_number_encoding) {
    auto lne = Tensor<T>::zeros({batch * len, 1});
    T* p = lne.data();
    for (size_t i = 0; i < lines.size(); ++i) {
      p[i] = static_cast<T>(line_number_encoding(lines[i], cfg_.max_lines));
    }
    x = ops::concat_cols(tape, {x, lne});
    x = linear(tape, x, lne_proj_);
  }

  Tensor<T> mask = causal_window_mask<T>(len, cfg_.attention_window);
  for (const Layer& layer : layers_) {
    Tensor<T> attn = attention(tape, x, x, batch, len, len, layer, true, mask, mode, dropout_rng);
    if (drop) attn = ops::dropout(tape, attn, cfg_.dropout, mode, *dropout_rng);
    x = ops::layer_norm(tape, ops::add(tape, x, attn), layer.ln1.gain, layer.ln1.bias, T(1e-5));

    Tensor<T> none;
    Tensor<T> cross = attention(tape, x, enc.memory, batch, len, S, layer, false, none, mode,
                                dropout_rng);
    if (drop) cross = ops::dropout(tape, cross, cfg_.dropout, mode, *dropout_rng);
    x = ops::layer_norm(tape, ops::add(tape, x, cross), layer.ln2.gain, layer.ln2.bias, T(1e-5));

    Tensor<T> h = ops::gelu(tape, linear(tape, x, layer.ff1));
    h = linear(tape, h, layer.ff2);
    if (drop) h = ops::dropout(tape, h, cfg_.dropout, mode, *dropout_rng);
    x = ops::layer_norm(tape, ops::add(tape, x, h), layer.ln3.gain, layer.ln3.bias, T(1e-5));
  }
  return linear(tape, x, Linear{out_w_, out_b_});
}

// ---------------------------------------------------------------------------
// incremental decoding

template <typename T>
std::unique_ptr<typename Decoder<T>::StepState> Decoder<T>::begin_decode(
    const EncodedImage<T>& enc) const {
  if (enc.batch != 1) throw contract_error("begin_decode: batch must be 1");
  auto st = std::make_unique<StepState>();
  int d = cfg_.d_model;
  st->S = enc.rows_per_image();
  st->pe = positional_encoding_1d<T>(cfg_.max_decode_len + 1, d);
  size_t n = static_cast<size_t>(layers_.size());
  st->self_k.resize(n);
  st->self_v.resize(n);
  st->cross_k.resize(n);
  st->cross_v.resize(n);
  const T* mem = enc.memory.data();
  for (size_t li = 0; li < n; ++li) {
    const Layer& l = layers_[li];
    st->cross_k[li].assign(static_cast<size_t>(st->S) * d, T(0));
    st->cross_v[li].assign(static_cast<size_t>(st->S) * d, T(0));
    kernels::matmul_acc(mem, l.cross_k.w.data(), st->cross_k[li].data(), st->S, d, d);
    kernels::matmul_acc(mem, l.cross_v.w.data(), st->cross_v[li].data(), st->S, d, d);
    const T* bk = l.cross_k.b.data();
    const T* bv = l.cross_v.b.data();
    for (int s = 0; s < st->S; ++s) {
      for (int j = 0; j < d; ++j) {
        st->cross_k[li][static_cast<size_t>(s) * d + j] += bk[j];
        st->cross_v[li][static_cast<size_t>(s) * d + j] += bv[j];
      }
    }
  }
  st->logits.assign(static_cast<size_t>(vocab_size_), T(0));
  return st;
}

namespace {

// y = x * w[in,out] + b, single row, same accumulation order as the batched path
template <typename T>
void linear_row(const T* x, const T* w, const T* b, T* y, int in, int out) {
  std::fill(y, y + out, T(0));
  kernels::matmul_acc(x, w, y, 1, in, out);
  for (int j = 0; j < out; ++j) y[j] += b[j];
}

}  // namespace

template <typename T>
const std::vector<T>& Decoder<T>::step(StepState& st, int32_t token, int line) const {
  if (token < 0 || token >= vocab_size_) throw contract_error("step: token id out of range");
  if (st.pos > cfg_.max_decode_len) throw contract_error("step: past max_decode_len");
  int d = cfg_.d_model;
  int heads = cfg_.heads;
  int dk = d / heads;
  T inv_sqrt_dk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
  T sqrt_d = static_cast<T>(std::sqrt(static_cast<double>(d)));

  std::vector<T> x(static_cast<size_t>(d));
  {
    const T* row = embed_.data() + static_cast<int64_t>(token) * d;
    const T* pe = st.pe.data() + static_cast<int64_t>(st.pos) * d;
    for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] = row[j] * sqrt_d + pe[j];
  }
  if (cfg_.line_number_encoding) {
    std::vector<T> xin(static_cast<size_t>(d) + 1);
    std::copy(x.begin(), x.end(), xin.begin());
    xin[static_cast<size_t>(d)] = static_cast<T>(line_number_encoding(line, cfg_.max_lines));
    x.assign(static_cast<size_t>(d), T(0));
    linear_row(xin.data(), lne_proj_.w.data(), lne_proj_.b.data(), x.data(), d + 1, d);
  }

  int t = st.pos;
  int lo = t - cfg_.attention_window < 0 ? 0 : t - cfg_.attention_window;
  std::vector<T> q(static_cast<size_t>(d)), kv(static_cast<size_t>(d));
  std::vector<T> ctx(static_cast<size_t>(d)), proj(static_cast<size_t>(d));
  std::vector<T> scores, probs;
  std::vector<T> h(static_cast<size_t>(cfg_.d_ff));
  T dummy_mean, dummy_invstd;

  for (size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    // self attention
    linear_row(x.data(), l.self_q.w.data(), l.self_q.b.data(), q.data(), d, d);
    linear_row(x.data(), l.self_k.w.data(), l.self_k.b.data(), kv.data(), d, d);
    st.self_k[li].insert(st.self_k[li].end(), kv.begin(), kv.end());
    linear_row(x.data(), l.self_v.w.data(), l.self_v.b.data(), kv.data(), d, d);
    st.self_v[li].insert(st.self_v[li].end(), kv.begin(), kv.end());

    int span = t - lo + 1;
    scores.assign(static_cast<size_t>(span), T(0));
    probs.assign(static_cast<size_t>(span), T(0));
    for (int hd = 0; hd < heads; ++hd) {
      const T* qh = q.data() + hd * dk;
      for (int s = 0; s < span; ++s) {
        const T* krow = st.self_k[li].data() + static_cast<size_t>(lo + s) * d + hd * dk;
        T acc = T(0);
        for (int p = 0; p < dk; ++p) acc += qh[p] * krow[p];
        scores[static_cast<size_t>(s)] = inv_sqrt_dk * acc;
      }
      kernels::softmax_row(scores.data(), probs.data(), span);
      T* ch = ctx.data() + hd * dk;
      std::fill(ch, ch + dk, T(0));
      for (int s = 0; s < span; ++s) {
        T p = probs[static_cast<size_t>(s)];
        if (p == T(0)) continue;  // mirrors the zero skip in matmul_acc
        const T* vrow = st.self_v[li].data() + static_cast<size_t>(lo + s) * d + hd * dk;
        for (int j = 0; j < dk; ++j) ch[j] += p * vrow[j];
      }
    }
    linear_row(ctx.data(), l.self_o.w.data(), l.self_o.b.data(), proj.data(), d, d);
    for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] += proj[j];
    kernels::layer_norm_row(x.data(), l.ln1.gain.data(), l.ln1.bias.data(), T(1e-5), x.data(),
                            &dummy_mean, &dummy_invstd, d);

    // cross attention over all memory rows
    linear_row(x.data(), l.cross_q.w.data(), l.cross_q.b.data(), q.data(), d, d);
    scores.assign(static_cast<size_t>(st.S), T(0));
    probs.assign(static_cast<size_t>(st.S), T(0));
    for (int hd = 0; hd < heads; ++hd) {
      const T* qh = q.data() + hd * dk;
      for (int s = 0; s < st.S; ++s) {
        const T* krow = st.cross_k[li].data() + static_cast<size_t>(s) * d + hd * dk;
        T acc = T(0);
        for (int p = 0; p < dk; ++p) acc += qh[p] * krow[p];
        scores[static_cast<size_t>(s)] = inv_sqrt_dk * acc;
      }
      kernels::softmax_row(scores.data(), probs.data(), st.S);
      T* ch = ctx.data() + hd * dk;
      std::fill(ch, ch + dk, T(0));
      for (int s = 0; s < st.S; ++s) {
        T p = probs[static_cast<size_t>(s)];
        if (p == T(0)) continue;
        const T* vrow = st.cross_v[li].data() + static_cast<size_t>(s) * d + hd * dk;
        for (int j = 0; j < dk; ++j) ch[j] += p * vrow[j];
      }
    }
    linear_row(ctx.data(), l.cross_o.w.data(), l.cross_o.b.data(), proj.data(), d, d);
    for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] += proj[j];
    kernels::layer_norm_row(x.data(), l.ln2.gain.data(), l.ln2.bias.data(), T(1e-5), x.data(),
                            &dummy_mean, &dummy_invstd, d);

    // feed-forward
    linear_row(x.data(), l.ff1.w.data(), l.ff1.b.data(), h.data(), d, cfg_.d_ff);
    for (T& v : h) v = kernels::gelu_scalar(v);
    linear_row(h.data(), l.ff2.w.data(), l.ff2.b.data(), proj.data(), cfg_.d_ff, d);
    for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] += proj[j];
    kernels::layer_norm_row(x.data(), l.ln3.gain.data(), l.ln3.bias.data(), T(1e-5), x.data(),
                            &dummy_mean, &dummy_invstd, d);
  }

  linear_row(x.data(), out_w_.data(), out_b_.data(), st.logits.data(), d, vocab_size_);
  ++st.pos;
  return st.logits;
}

template <typename T>
DecodeResult<T> Decoder<T>::greedy_decode(const EncodedImage<T>& enc,
                                          const Vocabulary& vocab) const {
  auto st = begin_decode(enc);
  DecodeResult<T> result;
  int line = 1;
  int32_t token = Vocabulary::kBos;
  for (int step_i = 0; step_i < cfg_.max_decode_len; ++step_i) {
    const std::vector<T>& logits = step(*st, token, line);
    int32_t best = 0;
    for (int32_t v = 1; v < vocab_size_; ++v) {
      if (logits[static_cast<size_t>(v)] > logits[static_cast<size_t>(best)]) best = v;
    }
    if (best == Vocabulary::kEos) return result;
    result.ids.push_back(best);
    if (best == vocab.newline_id() && line < cfg_.max_lines) ++line;
    token = best;
  }
  result.truncated = true;
  return result;
}

template <typename T>
void Decoder<T>::collect_params(const std::string& prefix,
                                std::vector<std::pair<std::string, Tensor<T>>>& out) {
  auto put = [&out](const std::string& name, const Tensor<T>& t) {
    if (t.defined()) out.emplace_back(name, t);
  };
  put(prefix + "embed.w", embed_);
  put(prefix + "lne.w", lne_proj_.w);
  put(prefix + "lne.b", lne_proj_.b);
  for (size_t i = 0; i < layers_.size(); ++i) {
    Layer& l = layers_[i];
    std::string p = prefix + "l" + std::to_string(i) + ".";
    auto put_lin = [&](const std::string& name, Linear& lin) {
      put(p + name + ".w", lin.w);
      put(p + name + ".b", lin.b);
    };
    put_lin("self.q", l.self_q);
    put_lin("self.k", l.self_k);
    put_lin("self.v", l.self_v);
    put_lin("self.o", l.self_o);
    put(p + "ln1.gain", l.ln1.gain);
    put(p + "ln1.bias", l.ln1.bias);
    put_lin("cross.q", l.cross_q);
    put_lin("cross.k", l.cross_k);
    put_lin("cross.v", l.cross_v);
    put_lin("cross.o", l.cross_o);
    put(p + "ln2.gain", l.ln2.gain);
    put(p + "ln2.bias", l.ln2.bias);
    put_lin("ff1", l.ff1);
    put_lin("ff2", l.ff2);
    put(p + "ln3.gain", l.ln3.gain);
    put(p + "ln3.bias", l.ln3.bias);
  }
  put(prefix + "out.w", out_w_);
  put(prefix + "out.b", out_b_);
}

template <typename T>
std::vector<T> step_distribution(std::span<const T> logits) {
  std::vector<T> out(logits.size());
  kernels::softmax_row(logits.data(), out.data(), static_cast<int64_t>(logits.size()));
  return out;
}

template class Decoder<float>;
template class Decoder<double>;
template std::vector<float> step_distribution<float>(std::span<const float>);
template std::vector<double> step_distribution<double>(std::span<const double>);

}  // namespace pagetext
