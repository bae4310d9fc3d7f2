/* pagetext - full-page text recognition engine.
 *
 * C interface over the C++ core: opaque handles, status codes, and a
 * thread-local error message. All strings are UTF-8. Functions returning
 * char** allocate with malloc; release with pagetext_free().
 */
#ifndef PAGETEXT_H
#define PAGETEXT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pagetext_status {
  PAGETEXT_OK = 0,
  PAGETEXT_ERR_ARGUMENT = 1, /* bad arguments, invalid or unreadable config */
  PAGETEXT_ERR_IO = 2,       /* filesystem failure */
  PAGETEXT_ERR_FORMAT = 3,   /* file exists but its contents are malformed */
  PAGETEXT_ERR_RUNTIME = 4,  /* training/decoding failure */
  PAGETEXT_ERR_PARTIAL = 5   /* batch finished but some items failed */
} pagetext_status;

typedef struct pagetext_engine pagetext_engine;

/* library version string, static storage */
const char* pagetext_version(void);

/* message for the most recent failing call on this thread; static until the
 * next failing call */
const char* pagetext_last_error(void);

const char* pagetext_status_name(pagetext_status status);

void pagetext_free(void* ptr);

/* ---- inference ---------------------------------------------------------- */

/* Loads a checkpoint (weights + embedded config) into a new engine. */
pagetext_status pagetext_engine_open(const char* checkpoint_path, pagetext_engine** out_engine);
void pagetext_engine_close(pagetext_engine* engine);

/* Transcribes one 8-bit grayscale PNG or binary PGM page. normalize != 0
 * applies the comparison normalization (strip markup tags, strip line
 * indentation, lowercase). out_truncated (optional) is set when decoding hit
 * the configured length cap. */
pagetext_status pagetext_transcribe_file(pagetext_engine* engine, const char* image_path,
                                         int normalize, char** out_text, int* out_truncated);

/* Same, for raw pixels in [0,1], row-major. */
pagetext_status pagetext_transcribe_pixels(pagetext_engine* engine, const float* pixels,
                                           int height, int width, int normalize, char** out_text,
                                           int* out_truncated);

/* ---- batch operations ---------------------------------------------------- */

typedef void (*pagetext_log_fn)(const char* line, void* user);

/* Writes `count` synthetic samples into out_dir (images, .gt.txt sidecars,
 * index.tsv) and logs a generation summary. seed_override replaces the
 * config seed when has_seed != 0. */
pagetext_status pagetext_generate(const char* config_path, const char* out_dir, long count,
                                  uint64_t seed_override, int has_seed, pagetext_log_fn log,
                                  void* user);

/* Runs the training loop described by the config; checkpoints land in
 * out_dir with the best one copied to best.ptck. */
pagetext_status pagetext_train(const char* config_path, const char* out_dir,
                               uint64_t seed_override, int has_seed, pagetext_log_fn log,
                               void* user);

/* Decodes every sample of a dataset directory and writes a TSV report.
 * normalize applies the comparison normalization to predictions and ground
 * truth. Samples without transcripts are skipped with a warning through the
 * log callback; if any were skipped the call returns PAGETEXT_ERR_PARTIAL.
 * out_mean_cer / out_corpus_cer are optional. */
pagetext_status pagetext_evaluate(pagetext_engine* engine, const char* data_dir, int normalize,
                                  const char* report_path, pagetext_log_fn log, void* user,
                                  double* out_mean_cer, double* out_corpus_cer);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* PAGETEXT_H */
