#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace pagetext {

// Embedded monospaced bitmap faces on an 8x8 cell grid. Glyph rows are
// bitmasks; bit k is the pixel in column k. "regular" is hand-drawn,
// "bold" thickens it rightward, "slant" shears the top rows rightward.
class Font {
 public:
  static constexpr int kCellW = 8;
  static constexpr int kCellH = 8;

  static const Font& face(const std::string& name);
  static std::vector<std::string> face_names();

  const std::string& name() const { return name_; }
  int id() const { return id_; }
  bool has(char c) const;
  // rows for a renderable charset character (not '\n')
  const std::array<uint8_t, 8>& glyph(char c) const;

  // every renderable glyph bitmap is unique within the face
  bool glyphs_distinct() const;

 private:
  Font(std::string name, int id);
  std::string name_;
  int id_;
  std::array<std::array<uint8_t, 8>, 128> glyphs_{};
  std::array<bool, 128> present_{};
};

}  // namespace pagetext
