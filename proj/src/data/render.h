#pragma once

#include <string>
#include <vector>

#include "core/config.h"
#include "core/image.h"
#include "core/rng.h"
#include "data/font.h"

namespace pagetext {

struct AugmentDraw {
  bool applied = false;
  double scale = 1.0;
  double rotation_deg = 0.0;
  double brightness = 0.0;
  double background = 0.0;
  double contrast = 1.0;
  double perspective = 0.0;
  double noise_sigma = 0.0;
};

// Generator parameters for one sample; enough to re-derive the glyph grid.
struct SampleMeta {
  std::string layout;  // one_col | two_col | empty | stitched
  std::string face;
  int scale = 1;
  int wrap_cols = 0;
  int margin = 0;     // pixels
  int gutter_px = 0;  // two-column gap between the column grids
  int lines_left = 0;
  int lines_right = 0;
  float background = 1.0f;
  float ink = 0.0f;
  AugmentDraw augment;
};

struct Sample {
  Image image;
  std::string transcript;  // whitespace-faithful, may contain markup tags
  SampleMeta meta;
};

// Greedy wrap at `width` characters. Explicit newlines are kept; the break
// prefers the last space in the buffer and consumes exactly that space;
// words longer than the width are hard-broken. Trailing spaces are dropped
// from emitted lines since they are invisible on the page.
std::vector<std::string> wrap_text(const std::string& text, int width);

enum class Layout { kOneCol, kTwoCol };

// Monospaced glyph-grid rendering. The page is sized to the wrap width and
// line count plus margins; background and ink levels are sampled from cfg.
// Throws runtime_failure when the text cannot fit cfg.page_max_* at the
// given face/scale.
Sample render_page(const std::string& text, Layout layout, const Font& font, int scale,
                   const GenConfig& cfg, Rng& rng);

// Constant background with the level sampled from cfg; empty transcript.
Sample empty_page(const GenConfig& cfg, Rng& rng);

// Joins fragments with a space (horizontal, space-width gaps) or newline
// (vertical stack). Fragment images are padded to a common height/width
// with their own background estimate.
Sample stitch_spans(const std::vector<std::pair<Image, std::string>>& fragments, char separator,
                    const GenConfig& cfg, Rng& rng);

// Splits wrapped lines at the boundary nearest the character midpoint of the
// joined text. Returns the first right-column line index, in [1, lines].
size_t two_col_split(const std::vector<std::string>& lines);

}  // namespace pagetext
