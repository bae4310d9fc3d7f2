#include "data/render.h"

#include <algorithm>
#include <numeric>

#include "core/errors.h"

namespace pagetext {

std::vector<std::string> wrap_text(const std::string& text, int width) {
  if (width < 1) throw contract_error("wrap_text: width must be >= 1");
  std::vector<std::string> lines;
  auto rstrip = [](std::string s) {
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
  };
  std::string cur;
  auto flush_overflow = [&]() {
    // cur just exceeded the width by one character
    size_t sp = cur.rfind(' ');
    if (sp != std::string::npos) {
      lines.push_back(rstrip(cur.substr(0, sp)));
      cur.erase(0, sp + 1);
    } else {
      lines.push_back(cur.substr(0, static_cast<size_t>(width)));
      cur.erase(0, static_cast<size_t>(width));
    }
  };
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(rstrip(cur));
      cur.clear();
      continue;
    }
    cur.push_back(c);
    if (cur.size() > static_cast<size_t>(width)) flush_overflow();
  }
  lines.push_back(rstrip(cur));
  return lines;
}

size_t two_col_split(const std::vector<std::string>& lines) {
  if (lines.size() <= 1) return 1;
  int64_t total = 0;
  for (const auto& l : lines) total += static_cast<int64_t>(l.size());
  total += static_cast<int64_t>(lines.size()) - 1;  // newlines between lines
  int64_t best_diff = INT64_MAX;
  size_t best = 1;
  int64_t cum = 0;
  for (size_t s = 1; s < lines.size(); ++s) {
    cum += static_cast<int64_t>(lines[s - 1].size()) + (s > 1 ? 1 : 0);
    int64_t diff = std::abs(2 * cum - total);
    if (diff < best_diff) {
      best_diff = diff;
      best = s;
    }
  }
  return best;
}

namespace {

void draw_line(Image& img, const std::string& line, const Font& font, int scale, int x0, int y0,
               float ink) {
  int cw = Font::kCellW * scale;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (c == ' ') continue;
    const auto& rows = font.glyph(c);
    int gx = x0 + static_cast<int>(i) * cw;
    for (int r = 0; r < Font::kCellH; ++r) {
      uint8_t bits = rows[static_cast<size_t>(r)];
      if (!bits) continue;
      for (int cbit = 0; cbit < 8; ++cbit) {
        if (!(bits & (1u << cbit))) continue;
        for (int dy = 0; dy < scale; ++dy) {
          for (int dx = 0; dx < scale; ++dx) {
            int yy = y0 + r * scale + dy;
            int xx = gx + cbit * scale + dx;
            if (yy >= 0 && yy < img.height && xx >= 0 && xx < img.width) img.at(yy, xx) = ink;
          }
        }
      }
    }
  }
}

std::string join_lines(const std::vector<std::string>& lines, size_t b, size_t e) {
  std::string out;
  for (size_t i = b; i < e; ++i) {
    if (i > b) out.push_back('\n');
    out += lines[i];
  }
  return out;
}

}  // namespace

Sample render_page(const std::string& text, Layout layout, const Font& font, int scale,
                   const GenConfig& cfg, Rng& rng) {
  if (text.empty()) throw contract_error("render_page: text must be non-empty");
  int cw = Font::kCellW * scale;
  int ch = Font::kCellH * scale;
  int margin = cfg.margin * scale;
  int gutter = cfg.gutter_cells * cw;

  // largest wrap width that fits the page, then sample within config range
  int cols_budget = layout == Layout::kTwoCol
                        ? (cfg.page_max_width - 2 * margin - gutter) / (2 * cw)
                        : (cfg.page_max_width - 2 * margin) / cw;
  int wrap_hi = std::min(cfg.wrap_max, cols_budget);
  if (wrap_hi < cfg.wrap_min) {
    throw runtime_failure("render_page: page too narrow for the configured wrap width");
  }
  int wrap = static_cast<int>(rng.uniform_int(cfg.wrap_min, wrap_hi));

  std::vector<std::string> lines = wrap_text(text, wrap);
  size_t split = lines.size();
  int rows;
  if (layout == Layout::kTwoCol) {
    split = two_col_split(lines);
    rows = static_cast<int>(std::max(split, lines.size() - split));
  } else {
    rows = static_cast<int>(lines.size());
  }
  int height = 2 * margin + rows * ch;
  int width = layout == Layout::kTwoCol ? 2 * margin + (2 * wrap) * cw + gutter
                                        : 2 * margin + wrap * cw;
  if (height > cfg.page_max_height || width > cfg.page_max_width) {
    throw runtime_failure("render_page: text does not fit the page");
  }

  float bg = static_cast<float>(rng.uniform(cfg.background_min, cfg.background_max));
  float ink = static_cast<float>(rng.uniform(cfg.ink_min, cfg.ink_max));

  Sample s;
  s.image = Image(height, width, bg);
  s.meta.face = font.name();
  s.meta.scale = scale;
  s.meta.wrap_cols = wrap;
  s.meta.margin = margin;
  s.meta.background = bg;
  s.meta.ink = ink;

  if (layout == Layout::kTwoCol) {
    int right_x0 = margin + wrap * cw + gutter;
    for (size_t i = 0; i < split; ++i) {
      draw_line(s.image, lines[i], font, scale, margin, margin + static_cast<int>(i) * ch, ink);
    }
    for (size_t i = split; i < lines.size(); ++i) {
      draw_line(s.image, lines[i], font, scale, right_x0,
                margin + static_cast<int>(i - split) * ch, ink);
    }
    s.transcript = join_lines(lines, 0, split) + "<col>" + join_lines(lines, split, lines.size());
    s.meta.layout = "two_col";
    s.meta.gutter_px = gutter;
    s.meta.lines_left = static_cast<int>(split);
    s.meta.lines_right = static_cast<int>(lines.size() - split);
  } else {
    for (size_t i = 0; i < lines.size(); ++i) {
      draw_line(s.image, lines[i], font, scale, margin, margin + static_cast<int>(i) * ch, ink);
    }
    s.transcript = join_lines(lines, 0, lines.size());
    s.meta.layout = "one_col";
    s.meta.lines_left = static_cast<int>(lines.size());
  }
  return s;
}

Sample empty_page(const GenConfig& cfg, Rng& rng) {
  int h = static_cast<int>(rng.uniform_int(cfg.empty_min_size, cfg.page_max_height));
  int w = static_cast<int>(rng.uniform_int(cfg.empty_min_size, cfg.page_max_width));
  float bg = static_cast<float>(rng.uniform(cfg.background_min, cfg.background_max));
  Sample s;
  s.image = Image(h, w, bg);
  s.transcript.clear();
  s.meta.layout = "empty";
  s.meta.background = bg;
  return s;
}

Sample stitch_spans(const std::vector<std::pair<Image, std::string>>& fragments, char separator,
                    const GenConfig& cfg, Rng& rng) {
  (void)rng;
  if (fragments.empty()) throw contract_error("stitch_spans: no fragments");
  if (separator != ' ' && separator != '\n') {
    throw contract_error("stitch_spans: separator must be space or newline");
  }
  Sample s;
  s.meta.layout = "stitched";
  if (fragments.size() == 1) {
    s.image = fragments[0].first;
    s.transcript = fragments[0].second;
    return s;
  }
  if (separator == ' ') {
    int gap = Font::kCellW * cfg.font_scales.front();
    int maxh = 0, total_w = 0;
    for (const auto& [img, txt] : fragments) {
      maxh = std::max(maxh, img.height);
      total_w += img.width;
    }
    total_w += gap * static_cast<int>(fragments.size() - 1);
    s.image = Image(maxh, total_w, fragments[0].first.corner_max());
    int x = 0;
    for (size_t i = 0; i < fragments.size(); ++i) {
      const Image& frag = fragments[i].first;
      float fill = frag.corner_max();
      int y0 = (maxh - frag.height) / 2;
      // backfill the vertical padding band with this fragment's background
      for (int y = 0; y < maxh; ++y) {
        for (int xx = 0; xx < frag.width; ++xx) {
          int sy = y - y0;
          s.image.at(y, x + xx) = (sy >= 0 && sy < frag.height) ? frag.at(sy, xx) : fill;
        }
      }
      if (i + 1 < fragments.size()) {
        for (int y = 0; y < maxh; ++y) {
          for (int g = 0; g < gap; ++g) s.image.at(y, x + frag.width + g) = fill;
        }
      }
      x += frag.width + (i + 1 < fragments.size() ? gap : 0);
      if (i) s.transcript.push_back(' ');
      s.transcript += fragments[i].second;
    }
  } else {
    int maxw = 0, total_h = 0;
    for (const auto& [img, txt] : fragments) {
      maxw = std::max(maxw, img.width);
      total_h += img.height;
    }
    s.image = Image(total_h, maxw, fragments[0].first.corner_max());
    int y = 0;
    for (size_t i = 0; i < fragments.size(); ++i) {
      const Image& frag = fragments[i].first;
      float fill = frag.corner_max();
      for (int yy = 0; yy < frag.height; ++yy) {
        for (int x = 0; x < maxw; ++x) {
          s.image.at(y + yy, x) = x < frag.width ? frag.at(yy, x) : fill;
        }
      }
      y += frag.height;
      if (i) s.transcript.push_back('\n');
      s.transcript += fragments[i].second;
    }
  }
  return s;
}

}  // namespace pagetext
