#pragma once

#include <string>
#include <vector>

#include "core/config.h"
#include "core/rng.h"
#include "core/vocab.h"
#include "data/render.h"

namespace pagetext {

// Seed text normalized to the vocabulary charset: lowercased, common
// lookalikes mapped (per config), everything else dropped.
class Corpus {
 public:
  static Corpus load(const std::string& path, const Vocabulary& vocab,
                     const std::string& unknown_mode);
  static Corpus from_text(const std::string& raw, const Vocabulary& vocab,
                          const std::string& unknown_mode);

  const std::string& text() const { return text_; }
  int64_t size() const { return static_cast<int64_t>(text_.size()); }

 private:
  std::string text_;
};

// Uniformly random contiguous span; length uniform in [len_min, len_max].
std::string sample_text_span(const Corpus& corpus, int len_min, int len_max, Rng& rng);

// On-the-fly sample generator: picks a source (one-column, two-column,
// empty, stitched) by weight, draws every generator parameter uniformly,
// and applies image augmentation when enabled. The stream is unbounded and
// fully determined by the seed of the Rng it was given.
class SynthStream {
 public:
  SynthStream(const RunConfig& cfg, const Vocabulary& vocab, Rng rng);

  Sample next();

 private:
  Sample generate(int source);
  Sample render_with_retry(Layout layout);
  std::string draw_word(int max_len);

  RunConfig cfg_;
  Corpus corpus_;
  Rng rng_;
  std::vector<double> cum_weights_;  // one_col, two_col, empty, stitched
};

}  // namespace pagetext
