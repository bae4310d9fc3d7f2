#include "pagetext.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include "core/config.h"
#include "core/errors.h"
#include "core/image.h"
#include "core/metrics.h"
#include "data/dataset.h"
#include "data/synth.h"
#include "train/trainer.h"

namespace fs = std::filesystem;
using namespace pagetext;

extern "C" {

struct pagetext_engine {
  RunConfig cfg;
  Vocabulary vocab = Vocabulary::standard();
  std::unique_ptr<Trainer> trainer;  // holds the model and decode paths
};

}  // extern "C"

namespace {

thread_local std::string t_last_error;

pagetext_status fail(pagetext_status st, const std::string& msg) {
  t_last_error = msg;
  return st;
}

pagetext_status from_exception() {
  try {
    throw;
  } catch (const contract_error& e) {
    return fail(PAGETEXT_ERR_ARGUMENT, e.what());
  } catch (const io_error& e) {
    return fail(PAGETEXT_ERR_IO, e.what());
  } catch (const format_error& e) {
    return fail(PAGETEXT_ERR_FORMAT, e.what());
  } catch (const std::exception& e) {
    return fail(PAGETEXT_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(PAGETEXT_ERR_RUNTIME, "unknown failure");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(pagetext_log_fn log, void* user, const std::string& line) {
  if (log) log(line.c_str(), user);
}

// config problems (unreadable, malformed, out of range) are usage errors
RunConfig load_config_checked(const char* path) {
  try {
    return RunConfig::load(path);
  } catch (const std::exception& e) {
    throw contract_error(e.what());
  }
}

std::string apply_normalize(const std::string& text, const std::vector<std::string>& tags) {
  NormalizeRules rules;
  rules.tags = tags;
  return normalize_for_comparison(text, rules);
}

}  // namespace

extern "C" {

const char* pagetext_version(void) { return "0.1.0"; }

const char* pagetext_last_error(void) { return t_last_error.c_str(); }

const char* pagetext_status_name(pagetext_status status) {
  switch (status) {
    case PAGETEXT_OK: return "ok";
    case PAGETEXT_ERR_ARGUMENT: return "argument";
    case PAGETEXT_ERR_IO: return "io";
    case PAGETEXT_ERR_FORMAT: return "format";
    case PAGETEXT_ERR_RUNTIME: return "runtime";
    case PAGETEXT_ERR_PARTIAL: return "partial";
  }
  return "unknown";
}

void pagetext_free(void* ptr) { std::free(ptr); }

pagetext_status pagetext_engine_open(const char* checkpoint_path, pagetext_engine** out_engine) {
  if (!checkpoint_path || !out_engine) {
    return fail(PAGETEXT_ERR_ARGUMENT, "engine_open: null argument");
  }
  *out_engine = nullptr;
  try {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    auto engine = std::make_unique<pagetext_engine>();
    engine->cfg = RunConfig::parse_ini(ckpt.config_text);
    engine->cfg.validate();
    engine->vocab = Vocabulary::build(Vocabulary::base_charset(), engine->cfg.model.tags);
    engine->trainer = std::make_unique<Trainer>(engine->cfg, engine->vocab);
    engine->trainer->load(ckpt);
    *out_engine = engine.release();
    return PAGETEXT_OK;
  } catch (...) {
    return from_exception();
  }
}

void pagetext_engine_close(pagetext_engine* engine) { delete engine; }

static pagetext_status transcribe_image(pagetext_engine* engine, const Image& img, int normalize,
                                        char** out_text, int* out_truncated) {
  if (img.height > engine->cfg.train.canvas_height ||
      img.width > engine->cfg.train.canvas_width) {
    return fail(PAGETEXT_ERR_ARGUMENT,
                "image exceeds the model canvas (" +
                    std::to_string(engine->cfg.train.canvas_height) + "x" +
                    std::to_string(engine->cfg.train.canvas_width) + ")");
  }
  bool truncated = false;
  std::string text = engine->trainer->transcribe(img, &truncated);
  if (normalize) text = apply_normalize(text, engine->cfg.model.tags);
  *out_text = dup_string(text);
  if (out_truncated) *out_truncated = truncated ? 1 : 0;
  return PAGETEXT_OK;
}

pagetext_status pagetext_transcribe_file(pagetext_engine* engine, const char* image_path,
                                         int normalize, char** out_text, int* out_truncated) {
  if (!engine || !image_path || !out_text) {
    return fail(PAGETEXT_ERR_ARGUMENT, "transcribe_file: null argument");
  }
  try {
    Image img = read_image(image_path);
    return transcribe_image(engine, img, normalize, out_text, out_truncated);
  } catch (...) {
    return from_exception();
  }
}

pagetext_status pagetext_transcribe_pixels(pagetext_engine* engine, const float* pixels,
                                           int height, int width, int normalize, char** out_text,
                                           int* out_truncated) {
  if (!engine || !pixels || !out_text || height < 1 || width < 1) {
    return fail(PAGETEXT_ERR_ARGUMENT, "transcribe_pixels: bad arguments");
  }
  try {
    Image img(height, width);
    std::copy(pixels, pixels + static_cast<size_t>(height) * width, img.px.begin());
    img.clamp01();
    return transcribe_image(engine, img, normalize, out_text, out_truncated);
  } catch (...) {
    return from_exception();
  }
}

pagetext_status pagetext_generate(const char* config_path, const char* out_dir, long count,
                                  uint64_t seed_override, int has_seed, pagetext_log_fn log,
                                  void* user) {
  if (!config_path || !out_dir || count < 0) {
    return fail(PAGETEXT_ERR_ARGUMENT, "generate: bad arguments");
  }
  try {
    RunConfig cfg = load_config_checked(config_path);
    if (has_seed) cfg.seed = seed_override;
    Vocabulary vocab = Vocabulary::build(Vocabulary::base_charset(), cfg.model.tags);
    DatasetWriter writer(out_dir, cfg.data.image_format);
    int64_t layout_counts[4] = {0, 0, 0, 0};  // one_col, two_col, empty, stitched
    std::vector<int64_t> len_hist(8, 0);      // transcript length deciles of span_max
    if (count > 0) {
      SynthStream stream(cfg, vocab, Rng(cfg.seed).split(0xDA7A));
      for (long i = 0; i < count; ++i) {
        Sample s = stream.next();
        writer.add(s);
        if (s.meta.layout == "one_col") ++layout_counts[0];
        else if (s.meta.layout == "two_col") ++layout_counts[1];
        else if (s.meta.layout == "empty") ++layout_counts[2];
        else ++layout_counts[3];
        size_t bucket = std::min<size_t>(len_hist.size() - 1,
                                         s.transcript.size() * len_hist.size() /
                                             (static_cast<size_t>(cfg.data.span_max) + 1));
        ++len_hist[bucket];
      }
    }
    writer.finish();
    emit(log, user,
         "generated " + std::to_string(writer.count()) + " samples: one_col=" +
             std::to_string(layout_counts[0]) + " two_col=" + std::to_string(layout_counts[1]) +
             " empty=" + std::to_string(layout_counts[2]) + " stitched=" +
             std::to_string(layout_counts[3]));
    std::string hist = "transcript length histogram:";
    for (size_t i = 0; i < len_hist.size(); ++i) hist += " " + std::to_string(len_hist[i]);
    emit(log, user, hist);
    return PAGETEXT_OK;
  } catch (...) {
    return from_exception();
  }
}

pagetext_status pagetext_train(const char* config_path, const char* out_dir,
                               uint64_t seed_override, int has_seed, pagetext_log_fn log,
                               void* user) {
  if (!config_path || !out_dir) return fail(PAGETEXT_ERR_ARGUMENT, "train: bad arguments");
  try {
    RunConfig cfg = load_config_checked(config_path);
    if (has_seed) cfg.seed = seed_override;
    Vocabulary vocab = Vocabulary::build(Vocabulary::base_charset(), cfg.model.tags);

    SynthStream train_stream(cfg, vocab, Rng(cfg.seed).split(0xDA7A));
    RunConfig val_cfg = cfg;
    val_cfg.augment.enabled = false;  // validation pages stay clean
    SynthStream val_stream(val_cfg, vocab, Rng(cfg.seed).split(0x7A11));
    std::vector<Sample> val;
    val.reserve(static_cast<size_t>(cfg.train.val_pages));
    for (int i = 0; i < cfg.train.val_pages; ++i) val.push_back(val_stream.next());

    Trainer trainer(cfg, vocab);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
      return fail(PAGETEXT_ERR_IO, std::string("cannot create output dir: ") + out_dir);
    }
    vocab.save(std::string(out_dir) + "/vocab.txt");
    TrainResult result = trainer.run([&train_stream] { return train_stream.next(); }, val,
                                     out_dir, [&](const std::string& line) {
                                       emit(log, user, line);
                                     });
    emit(log, user, "best=" + result.best_path + " val_cer=" + std::to_string(result.best_val_cer));
    return PAGETEXT_OK;
  } catch (...) {
    return from_exception();
  }
}

pagetext_status pagetext_evaluate(pagetext_engine* engine, const char* data_dir, int normalize,
                                  const char* report_path, pagetext_log_fn log, void* user,
                                  double* out_mean_cer, double* out_corpus_cer) {
  if (!engine || !data_dir || !report_path) {
    return fail(PAGETEXT_ERR_ARGUMENT, "evaluate: bad arguments");
  }
  try {
    std::vector<DatasetEntry> entries = read_dataset_index(data_dir);
    if (entries.empty()) return fail(PAGETEXT_ERR_FORMAT, "evaluate: dataset is empty");
    std::vector<EvalPair> pairs;
    bool skipped = false;
    for (const DatasetEntry& e : entries) {
      if (!e.has_transcript) {
        emit(log, user, "warning: no transcript for " + e.filename + ", skipped");
        skipped = true;
        continue;
      }
      Image img = read_image(std::string(data_dir) + "/" + e.filename);
      bool truncated = false;
      std::string pred = engine->trainer->transcribe(img, &truncated);
      EvalPair p;
      p.id = e.filename;
      p.pred = normalize ? apply_normalize(pred, engine->cfg.model.tags) : pred;
      p.gt = normalize ? apply_normalize(e.transcript, engine->cfg.model.tags) : e.transcript;
      p.truncated = truncated;
      pairs.push_back(std::move(p));
    }
    if (pairs.empty()) return fail(PAGETEXT_ERR_FORMAT, "evaluate: no usable samples");
    EvalReport report = evaluate_pairs(pairs);
    std::ofstream f(report_path, std::ios::binary);
    if (!f) return fail(PAGETEXT_ERR_IO, std::string("cannot write report: ") + report_path);
    f << report.to_tsv();
    if (out_mean_cer) *out_mean_cer = report.mean_cer;
    if (out_corpus_cer) *out_corpus_cer = report.corpus_cer;
    emit(log, user, "mean_cer=" + std::to_string(report.mean_cer) +
                        " corpus_cer=" + std::to_string(report.corpus_cer));
    return skipped ? fail(PAGETEXT_ERR_PARTIAL, "some samples had no transcript") : PAGETEXT_OK;
  } catch (...) {
    return from_exception();
  }
}

}  // extern "C"
