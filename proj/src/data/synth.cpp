#include "data/synth.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "core/errors.h"
#include "core/utf8.h"
#include "data/augment.h"

namespace pagetext {

Corpus Corpus::load(const std::string& path, const Vocabulary& vocab,
                    const std::string& unknown_mode) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot read corpus file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str(), vocab, unknown_mode);
}

Corpus Corpus::from_text(const std::string& raw, const Vocabulary& vocab,
                         const std::string& unknown_mode) {
  bool map = unknown_mode == "map";
  std::vector<uint32_t> cps = utf8_decode(raw);
  std::string out;
  out.reserve(cps.size());
  for (uint32_t cp : cps) {
    if (cp >= 'A' && cp <= 'Z') cp += 32;
    if (cp == '\r') continue;
    if (map) {
      switch (cp) {
        case '\t': cp = ' '; break;
        case 0x00A0: cp = ' '; break;      // nbsp
        case 0x2018: case 0x2019: cp = '\''; break;
        case 0x201C: case 0x201D: cp = '"'; break;
        case 0x2013: case 0x2014: cp = '-'; break;
        case 0x2026: out += "..."; continue;
        default: break;
      }
    }
    if ((cp == '\n' || (cp >= 0x20 && cp < 0x7F)) && vocab.in_charset(cp)) {
      out.push_back(static_cast<char>(cp));
    }
  }
  Corpus c;
  c.text_ = std::move(out);
  return c;
}

std::string sample_text_span(const Corpus& corpus, int len_min, int len_max, Rng& rng) {
  if (corpus.size() == 0) throw contract_error("sample_text_span: empty corpus");
  if (len_min < 1 || len_max < len_min) throw contract_error("sample_text_span: bad length range");
  if (corpus.size() < len_max) {
    throw contract_error("sample_text_span: corpus shorter than the maximum span length");
  }
  int64_t len = rng.uniform_int(len_min, len_max);
  int64_t start = rng.uniform_int(0, corpus.size() - len);
  return corpus.text().substr(static_cast<size_t>(start), static_cast<size_t>(len));
}

SynthStream::SynthStream(const RunConfig& cfg, const Vocabulary& vocab, Rng rng)
    : cfg_(cfg), rng_(rng), cum_weights_(4, 0.0) {
  double needs_text =
      cfg.data.weight_one_column + cfg.data.weight_two_column + cfg.data.weight_stitched;
  if (needs_text > 0.0) {
    corpus_ = Corpus::load(cfg.data.corpus, vocab, cfg.data.unknown_chars);
    if (corpus_.size() < cfg.data.span_max) {
      throw format_error("corpus too short for span_max after normalization: " +
                         cfg.data.corpus);
    }
  }
  cum_weights_[0] = cfg.data.weight_one_column;
  cum_weights_[1] = cum_weights_[0] + cfg.data.weight_two_column;
  cum_weights_[2] = cum_weights_[1] + cfg.data.weight_empty;
  cum_weights_[3] = cum_weights_[2] + cfg.data.weight_stitched;
  if (cum_weights_[3] <= 0.0) throw contract_error("sample sources: all weights zero");
}

Sample SynthStream::next() {
  double u = rng_.uniform() * cum_weights_[3];
  int source = 0;
  while (source < 3 && u >= cum_weights_[static_cast<size_t>(source)]) ++source;
  Sample s = generate(source);
  if (cfg_.augment.enabled && s.meta.layout != "empty") {
    AugmentDraw draw;
    Image augmented = augment(s.image, cfg_.augment, rng_, &draw);
    if (augmented.height <= cfg_.train.canvas_height &&
        augmented.width <= cfg_.train.canvas_width) {
      s.image = std::move(augmented);
      s.meta.augment = draw;
    }
    // otherwise keep the clean render; upscaling may not exceed the canvas
  }
  return s;
}

Sample SynthStream::generate(int source) {
  switch (source) {
    case 0: return render_with_retry(Layout::kOneCol);
    case 1: return render_with_retry(Layout::kTwoCol);
    case 2: return empty_page(cfg_.data, rng_);
    default: break;
  }
  // stitched word crops
  int words = static_cast<int>(
      rng_.uniform_int(cfg_.data.stitch_min_words, cfg_.data.stitch_max_words));
  const Font& font = Font::face(
      cfg_.data.faces[static_cast<size_t>(rng_.uniform_int(0, static_cast<int64_t>(cfg_.data.faces.size()) - 1))]);
  int scale = cfg_.data.font_scales[static_cast<size_t>(
      rng_.uniform_int(0, static_cast<int64_t>(cfg_.data.font_scales.size()) - 1))];
  GenConfig word_cfg = cfg_.data;
  word_cfg.margin = 2;
  word_cfg.wrap_min = 1;
  std::vector<std::pair<Image, std::string>> frags;
  for (int i = 0; i < words; ++i) {
    std::string word = draw_word(12);
    GenConfig wc = word_cfg;
    wc.wrap_min = wc.wrap_max = std::max<int>(1, static_cast<int>(word.size()));
    Sample frag = render_page(word, Layout::kOneCol, font, scale, wc, rng_);
    frags.emplace_back(std::move(frag.image), frag.transcript);
  }
  Sample s = stitch_spans(frags, ' ', cfg_.data, rng_);
  s.meta.face = font.name();
  s.meta.scale = scale;
  if (s.image.height > cfg_.train.canvas_height || s.image.width > cfg_.train.canvas_width) {
    // stitched strip too wide; fall back to a single word
    return stitch_spans({{frags[0].first, frags[0].second}}, ' ', cfg_.data, rng_);
  }
  return s;
}

std::string SynthStream::draw_word(int max_len) {
  for (int attempt = 0; attempt < 16; ++attempt) {
    std::string span = sample_text_span(corpus_, std::min<int>(24, cfg_.data.span_max),
                                        std::min<int>(24, cfg_.data.span_max), rng_);
    std::istringstream is(span);
    std::string w;
    while (is >> w) {
      if (!w.empty() && w.size() <= static_cast<size_t>(max_len)) return w;
    }
  }
  return "a";
}

Sample SynthStream::render_with_retry(Layout layout) {
  const Font& font = Font::face(cfg_.data.faces[static_cast<size_t>(
      rng_.uniform_int(0, static_cast<int64_t>(cfg_.data.faces.size()) - 1))]);
  int scale = cfg_.data.font_scales[static_cast<size_t>(
      rng_.uniform_int(0, static_cast<int64_t>(cfg_.data.font_scales.size()) - 1))];
  int span_max = cfg_.data.span_max;
  for (int attempt = 0; attempt < 24; ++attempt) {
    std::string text = sample_text_span(corpus_, std::min(cfg_.data.span_min, span_max),
                                        span_max, rng_);
    try {
      return render_page(text, layout, font, scale, cfg_.data, rng_);
    } catch (const runtime_failure&) {
      // shrink and retry; a span of one character always fits a valid config
      span_max = std::max(1, span_max / 2);
    }
  }
  throw runtime_failure("synth: could not fit any span on the page; check page_max and wrap");
}

}  // namespace pagetext
