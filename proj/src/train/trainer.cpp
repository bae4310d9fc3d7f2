#include "train/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "core/parallel.h"

namespace fs = std::filesystem;

namespace pagetext {

namespace {

uint64_t batch_digest(const Batch<float>& b) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, size_t n) {
    const unsigned char* c = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
  };
  mix(b.input_ids.data(), b.input_ids.size() * sizeof(int32_t));
  mix(b.images.data(), static_cast<size_t>(b.images.size()) * sizeof(float));
  return h;
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg, const Vocabulary& vocab)
    : cfg_(cfg),
      vocab_(vocab),
      dropout_rng_(Rng(cfg.seed).split(0xD0)),
      placement_rng_(Rng(cfg.seed).split(0xB1)) {
  if (cfg.threads > 0) set_num_threads(cfg.threads);
  model_ = std::make_unique<PageModel<float>>(cfg.model, vocab.size(), cfg.seed);
  for (auto& [name, t] : model_->params()) {
    adam_m_.emplace_back(static_cast<size_t>(t.size()), 0.0f);
    adam_v_.emplace_back(static_cast<size_t>(t.size()), 0.0f);
  }
}

double Trainer::apply_update(const std::vector<Batch<float>>& micro_batches) {
  if (micro_batches.empty()) throw contract_error("apply_update: no micro batches");
  int64_t n_total = 0;
  for (const auto& b : micro_batches) n_total += b.n_tokens;
  if (n_total <= 0) throw contract_error("apply_update: batch has no tokens");

  model_->zero_grads();
  double nll_total = 0.0;
  for (const auto& b : micro_batches) {
    Tape<float> tape;
    Tensor<float> logits = model_->forward(&tape, b.images, b.input_ids, b.lines, b.batch,
                                           b.len, Mode::kTrain, &dropout_rng_);
    Tensor<float> nll = batch_nll_sum(&tape, logits, b);
    double val = static_cast<double>(nll.item());
    if (!std::isfinite(val)) {
      char buf[128];
      std::snprintf(buf, sizeof(buf),
                    "non-finite loss at step %lld (batch digest %016llx)",
                    static_cast<long long>(step_ + 1),
                    static_cast<unsigned long long>(batch_digest(b)));
      throw runtime_failure(buf);
    }
    nll_total += val;
    tape.backward(nll, static_cast<float>(1.0 / static_cast<double>(n_total)));
    tape.clear();
  }

  ++step_;
  AdamParams hp;
  hp.alpha = cfg_.train.learning_rate;
  if (cfg_.train.warmup_steps > 0 && step_ < cfg_.train.warmup_steps) {
    hp.alpha *= static_cast<double>(step_) / static_cast<double>(cfg_.train.warmup_steps);
  }
  hp.beta1 = cfg_.train.beta1;
  hp.beta2 = cfg_.train.beta2;
  hp.eps = cfg_.train.adam_eps;
  auto& params = model_->params();
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<float>& t = params[i].second;
    adam_step<float>(std::span<float>(t.data(), static_cast<size_t>(t.size())),
                     std::span<const float>(t.grad(), static_cast<size_t>(t.size())),
                     adam_m_[i], adam_v_[i], hp, step_);
  }
  return nll_total / static_cast<double>(n_total);
}

double Trainer::update_from_stream(const SampleFn& next) {
  std::vector<Batch<float>> micros;
  micros.reserve(static_cast<size_t>(cfg_.train.grad_accumulation));
  for (int a = 0; a < cfg_.train.grad_accumulation; ++a) {
    std::vector<Sample> samples;
    samples.reserve(static_cast<size_t>(cfg_.train.batch_size));
    for (int i = 0; i < cfg_.train.batch_size; ++i) samples.push_back(next());
    micros.push_back(make_batch<float>(samples, vocab_, cfg_.train.canvas_height,
                                       cfg_.train.canvas_width, Mode::kTrain,
                                       cfg_.train.padding, cfg_.model.max_lines,
                                       placement_rng_));
  }
  return apply_update(micros);
}

std::string Trainer::transcribe(const Image& image, bool* truncated) {
  Sample s;
  s.image = image;
  Rng rng(0);  // unused in eval placement
  Batch<float> b = make_batch<float>({s}, vocab_, cfg_.train.canvas_height,
                                     cfg_.train.canvas_width, Mode::kEval, cfg_.train.padding,
                                     cfg_.model.max_lines, rng);
  EncodedImage<float> enc = model_->encode(nullptr, b.images);
  DecodeResult<float> res = model_->decoder().greedy_decode(enc, vocab_);
  if (truncated) *truncated = res.truncated;
  res.ids.push_back(Vocabulary::kEos);
  return vocab_.decode(res.ids);
}

EvalReport Trainer::evaluate(const std::vector<Sample>& val) {
  if (val.empty()) throw contract_error("evaluate: empty validation set");
  std::vector<EvalPair> pairs(val.size());
  // decoding is read-only on the weights; fan out across samples
  parallel_for(static_cast<int64_t>(val.size()), [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      const Sample& s = val[static_cast<size_t>(i)];
      // cap the decode length so early checkpoints do not spin to
      // max_decode_len on every validation page
      int gt_tokens = static_cast<int>(vocab_.encode(s.transcript).size());
      int cap = std::min(cfg_.model.max_decode_len, 2 * gt_tokens + 32);

      Sample one;
      one.image = s.image;
      Rng rng(0);
      Batch<float> b = make_batch<float>({one}, vocab_, cfg_.train.canvas_height,
                                         cfg_.train.canvas_width, Mode::kEval,
                                         cfg_.train.padding, cfg_.model.max_lines, rng);
      EncodedImage<float> enc = model_->encode(nullptr, b.images);
      Decoder<float>& dec = model_->decoder();
      DecodeResult<float> res;
      auto st = dec.begin_decode(enc);
      int line = 1;
      int32_t token = Vocabulary::kBos;
      for (int t = 0; t < cap; ++t) {
        const std::vector<float>& logits = dec.step(*st, token, line);
        int32_t best = 0;
        for (int32_t v2 = 1; v2 < vocab_.size(); ++v2) {
          if (logits[static_cast<size_t>(v2)] > logits[static_cast<size_t>(best)]) best = v2;
        }
        if (best == Vocabulary::kEos) break;
        res.ids.push_back(best);
        if (best == vocab_.newline_id() && line < cfg_.model.max_lines) ++line;
        token = best;
        if (t + 1 == cap) res.truncated = true;
      }
      std::vector<int32_t> ids = res.ids;
      ids.push_back(Vocabulary::kEos);
      EvalPair& p = pairs[static_cast<size_t>(i)];
      p.id = "val" + std::to_string(i);
      p.pred = vocab_.decode(ids);
      p.gt = s.transcript;
      p.truncated = res.truncated;
    }
  });
  return evaluate_pairs(pairs);
}

Checkpoint Trainer::make_checkpoint() const {
  Checkpoint ckpt;
  ckpt.step = step_;
  ckpt.config_text = cfg_.to_ini();
  const auto& params = const_cast<PageModel<float>&>(*model_).params();
  for (const auto& [name, t] : params) ckpt.tensors.emplace_back(name, t);
  for (size_t i = 0; i < params.size(); ++i) {
    ckpt.tensors.emplace_back("adam.m." + params[i].first,
                              Tensor<float>::from(params[i].second.shape(),
                                                  std::vector<float>(adam_m_[i])));
    ckpt.tensors.emplace_back("adam.v." + params[i].first,
                              Tensor<float>::from(params[i].second.shape(),
                                                  std::vector<float>(adam_v_[i])));
  }
  return ckpt;
}

void Trainer::load(const Checkpoint& ckpt) {
  load_into_params(ckpt, model_->params());
  auto& params = model_->params();
  for (size_t i = 0; i < params.size(); ++i) {
    if (const Tensor<float>* m = ckpt.find("adam.m." + params[i].first)) {
      adam_m_[i].assign(m->data(), m->data() + m->size());
    }
    if (const Tensor<float>* v = ckpt.find("adam.v." + params[i].first)) {
      adam_v_[i].assign(v->data(), v->data() + v->size());
    }
  }
  step_ = ckpt.step;
}

void Trainer::save_eval_checkpoint(const std::string& out_dir, double val_cer, const LogFn& log) {
  Checkpoint ckpt = make_checkpoint();
  ckpt.val_cer = val_cer;
  char name[64];
  std::snprintf(name, sizeof(name), "ckpt_%08lld.ptck", static_cast<long long>(step_));
  std::string path = out_dir + "/" + name;
  save_checkpoint(ckpt, path);
  saved_.push_back({step_, val_cer, path});
  if (best_index_ < 0 || val_cer < saved_[static_cast<size_t>(best_index_)].cer) {
    best_index_ = static_cast<int>(saved_.size()) - 1;
    fs::copy_file(path, out_dir + "/best.ptck", fs::copy_options::overwrite_existing);
    log(std::string("best checkpoint: ") + name);
  }
  // retention: the best one plus the most recent keep_last
  int keep = cfg_.train.keep_last;
  for (size_t i = 0; i + static_cast<size_t>(keep) < saved_.size(); ++i) {
    if (static_cast<int>(i) == best_index_ || saved_[i].path.empty()) continue;
    std::error_code ec;
    fs::remove(saved_[i].path, ec);
    saved_[i].path.clear();
  }
}

TrainResult Trainer::run(const SampleFn& next, const std::vector<Sample>& val,
                         const std::string& out_dir, const LogFn& log) {
  if (val.empty()) throw contract_error("train: validation set must be non-empty");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw io_error("cannot create output dir: " + out_dir);

  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&t0]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  double running_loss = 0.0;
  int64_t loss_count = 0;
  bool stop = false;
  while (step_ < cfg_.train.updates && !stop) {
    double loss = update_from_stream(next);
    running_loss += loss;
    ++loss_count;
    if (step_ % cfg_.train.log_interval == 0 || step_ == cfg_.train.updates) {
      char line[160];
      std::snprintf(line, sizeof(line), "step=%lld loss=%.6f wall=%.1fs",
                    static_cast<long long>(step_), running_loss / loss_count, elapsed());
      log(line);
      running_loss = 0.0;
      loss_count = 0;
    }
    if (step_ % cfg_.train.eval_interval == 0 || step_ == cfg_.train.updates) {
      EvalReport rep = evaluate(val);
      char line[200];
      std::snprintf(line, sizeof(line), "step=%lld val_cer=%.6f val_mean_cer=%.6f wall=%.1fs",
                    static_cast<long long>(step_), rep.corpus_cer, rep.mean_cer, elapsed());
      log(line);
      save_eval_checkpoint(out_dir, rep.corpus_cer, log);
      if (cfg_.train.early_stop_cer > 0.0 && rep.corpus_cer <= cfg_.train.early_stop_cer) {
        log("early stop: validation CER reached the configured threshold");
        stop = true;
      }
    }
  }
  if (saved_.empty()) {
    EvalReport rep = evaluate(val);
    save_eval_checkpoint(out_dir, rep.corpus_cer, log);
  }
  TrainResult result;
  result.best_path = out_dir + "/best.ptck";
  result.best_val_cer = saved_[static_cast<size_t>(best_index_)].cer;
  result.steps = step_;
  return result;
}

}  // namespace pagetext
