#include "data/font.h"

#include <map>
#include <set>

#include "core/errors.h"

namespace pagetext {

namespace {

struct GlyphArt {
  char c;
  const char* rows[8];  // 5 columns, '#' = ink
};

// 5x7-ish shapes with row 7 reserved for descenders
const GlyphArt kArt[] = {
    {' ', {".....", ".....", ".....", ".....", ".....", ".....", ".....", "....."}},
    {'!', {"..#..", "..#..", "..#..", "..#..", "..#..", ".....", "..#..", "....."}},
    {'"', {".#.#.", ".#.#.", ".....", ".....", ".....", ".....", ".....", "....."}},
    {'#', {".#.#.", "#####", ".#.#.", ".#.#.", "#####", ".#.#.", ".....", "....."}},
    {'$', {"..#..", ".####", "#....", ".###.", "....#", "####.", "..#..", "....."}},
    {'%', {"##..#", "##..#", "...#.", "..#..", ".#...", "#..##", "#..##", "....."}},
    {'&', {".##..", "#..#.", "#.#..", ".#...", "#.#.#", "#..#.", ".##.#", "....."}},
    {'\'', {"..#..", "..#..", ".....", ".....", ".....", ".....", ".....", "....."}},
    {'(', {"...#.", "..#..", "..#..", "..#..", "..#..", "..#..", "...#.", "....."}},
    {')', {".#...", "..#..", "..#..", "..#..", "..#..", "..#..", ".#...", "....."}},
    {'*', {".....", "..#..", "#.#.#", ".###.", "#.#.#", "..#..", ".....", "....."}},
    {'+', {".....", "..#..", "..#..", "#####", "..#..", "..#..", ".....", "....."}},
    {',', {".....", ".....", ".....", ".....", ".....", "..#..", "..#..", ".#..."}},
    {'-', {".....", ".....", ".....", "#####", ".....", ".....", ".....", "....."}},
    {'.', {".....", ".....", ".....", ".....", ".....", ".##..", ".##..", "....."}},
    {'/', {"....#", "...#.", "...#.", "..#..", ".#...", ".#...", "#....", "....."}},
    {'0', {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###.", "....."}},
    {'1', {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###.", "....."}},
    {'2', {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####", "....."}},
    {'3', {".###.", "#...#", "....#", "..##.", "....#", "#...#", ".###.", "....."}},
    {'4', {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#.", "....."}},
    {'5', {"#####", "#....", "####.", "....#", "....#", "#...#", ".###.", "....."}},
    {'6', {".###.", "#....", "#....", "####.", "#...#", "#...#", ".###.", "....."}},
    {'7', {"#####", "....#", "...#.", "..#..", "..#..", "..#..", "..#..", "....."}},
    {'8', {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###.", "....."}},
    {'9', {".###.", "#...#", "#...#", ".####", "....#", "....#", ".###.", "....."}},
    {':', {".....", ".....", ".##..", ".##..", ".....", ".##..", ".##..", "....."}},
    {';', {".....", ".....", ".##..", ".##..", ".....", ".##..", "..#..", ".#..."}},
    {'<', {"....#", "...#.", "..#..", ".#...", "..#..", "...#.", "....#", "....."}},
    {'=', {".....", ".....", "#####", ".....", "#####", ".....", ".....", "....."}},
    {'>', {"#....", ".#...", "..#..", "...#.", "..#..", ".#...", "#....", "....."}},
    {'?', {".###.", "#...#", "....#", "...#.", "..#..", ".....", "..#..", "....."}},
    {'@', {".###.", "#...#", "#.###", "#.#.#", "#.###", "#....", ".###.", "....."}},
    {'[', {".###.", ".#...", ".#...", ".#...", ".#...", ".#...", ".###.", "....."}},
    {'\\', {"#....", ".#...", ".#...", "..#..", "...#.", "...#.", "....#", "....."}},
    {']', {".###.", "...#.", "...#.", "...#.", "...#.", "...#.", ".###.", "....."}},
    {'^', {"..#..", ".#.#.", "#...#", ".....", ".....", ".....", ".....", "....."}},
    {'_', {".....", ".....", ".....", ".....", ".....", ".....", ".....", "#####"}},
    {'`', {".#...", "..#..", ".....", ".....", ".....", ".....", ".....", "....."}},
    {'a', {".....", ".....", ".###.", "....#", ".####", "#...#", ".####", "....."}},
    {'b', {"#....", "#....", "####.", "#...#", "#...#", "#...#", "####.", "....."}},
    {'c', {".....", ".....", ".###.", "#....", "#....", "#....", ".###.", "....."}},
    {'d', {"....#", "....#", ".####", "#...#", "#...#", "#...#", ".####", "....."}},
    {'e', {".....", ".....", ".###.", "#...#", "#####", "#....", ".###.", "....."}},
    {'f', {"..##.", ".#...", "####.", ".#...", ".#...", ".#...", ".#...", "....."}},
    {'g', {".....", ".....", ".####", "#...#", "#...#", ".####", "....#", ".###."}},
    {'h', {"#....", "#....", "####.", "#...#", "#...#", "#...#", "#...#", "....."}},
    {'i', {"..#..", ".....", ".##..", "..#..", "..#..", "..#..", ".###.", "....."}},
    {'j', {"...#.", ".....", "..##.", "...#.", "...#.", "...#.", "#..#.", ".##.."}},
    {'k', {"#....", "#....", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "....."}},
    {'l', {".##..", "..#..", "..#..", "..#..", "..#..", "..#..", ".###.", "....."}},
    {'m', {".....", ".....", "##.#.", "#.#.#", "#.#.#", "#.#.#", "#.#.#", "....."}},
    {'n', {".....", ".....", "####.", "#...#", "#...#", "#...#", "#...#", "....."}},
    {'o', {".....", ".....", ".###.", "#...#", "#...#", "#...#", ".###.", "....."}},
    {'p', {".....", ".....", "####.", "#...#", "#...#", "####.", "#....", "#...."}},
    {'q', {".....", ".....", ".####", "#...#", "#...#", ".####", "....#", "....#"}},
    {'r', {".....", ".....", "#.##.", "##...", "#....", "#....", "#....", "....."}},
    {'s', {".....", ".....", ".####", "#....", ".###.", "....#", "####.", "....."}},
    {'t', {".#...", ".#...", "####.", ".#...", ".#...", ".#...", "..##.", "....."}},
    {'u', {".....", ".....", "#...#", "#...#", "#...#", "#...#", ".####", "....."}},
    {'v', {".....", ".....", "#...#", "#...#", "#...#", ".#.#.", "..#..", "....."}},
    {'w', {".....", ".....", "#.#.#", "#.#.#", "#.#.#", "#.#.#", ".#.#.", "....."}},
    {'x', {".....", ".....", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "....."}},
    {'y', {".....", ".....", "#...#", "#...#", "#...#", ".####", "....#", ".###."}},
    {'z', {".....", ".....", "#####", "...#.", "..#..", ".#...", "#####", "....."}},
    {'{', {"...##", "..#..", "..#..", ".#...", "..#..", "..#..", "...##", "....."}},
    {'|', {"..#..", "..#..", "..#..", "..#..", "..#..", "..#..", "..#..", "....."}},
    {'}', {"##...", "..#..", "..#..", "...#.", "..#..", "..#..", "##...", "....."}},
    {'~', {".....", ".#...", "#.#.#", "...#.", ".....", ".....", ".....", "....."}},
};

std::array<uint8_t, 8> parse_art(const GlyphArt& art) {
  std::array<uint8_t, 8> rows{};
  for (int r = 0; r < 8; ++r) {
    uint8_t bits = 0;
    for (int c = 0; c < 5; ++c) {
      if (art.rows[r][c] == '#') bits |= static_cast<uint8_t>(1u << c);
    }
    rows[static_cast<size_t>(r)] = bits;
  }
  return rows;
}

// top rows lean right: shift 2 for rows 0-1, 1 for rows 2-4, 0 below
int slant_shift(int row) { return (7 - row) / 3; }

}  // namespace

Font::Font(std::string name, int id) : name_(std::move(name)), id_(id) {
  for (const GlyphArt& art : kArt) {
    auto rows = parse_art(art);
    if (name_ == "bold") {
      for (auto& r : rows) r = static_cast<uint8_t>(r | (r << 1));
    } else if (name_ == "slant") {
      for (int r = 0; r < 8; ++r) {
        rows[static_cast<size_t>(r)] =
            static_cast<uint8_t>(rows[static_cast<size_t>(r)] << slant_shift(r));
      }
    }
    glyphs_[static_cast<size_t>(art.c)] = rows;
    present_[static_cast<size_t>(art.c)] = true;
  }
}

const Font& Font::face(const std::string& name) {
  static const Font regular("regular", 0);
  static const Font bold("bold", 1);
  static const Font slant("slant", 2);
  if (name == "regular") return regular;
  if (name == "bold") return bold;
  if (name == "slant") return slant;
  throw contract_error("unknown font face: " + name);
}

std::vector<std::string> Font::face_names() { return {"regular", "bold", "slant"}; }

bool Font::has(char c) const {
  unsigned char u = static_cast<unsigned char>(c);
  return u < 128 && present_[u];
}

const std::array<uint8_t, 8>& Font::glyph(char c) const {
  if (!has(c)) throw contract_error(std::string("no glyph for character code ") +
                                    std::to_string(static_cast<int>(c)));
  return glyphs_[static_cast<size_t>(static_cast<unsigned char>(c))];
}

bool Font::glyphs_distinct() const {
  std::set<std::array<uint8_t, 8>> seen;
  for (int c = 0; c < 128; ++c) {
    if (!present_[static_cast<size_t>(c)]) continue;
    if (!seen.insert(glyphs_[static_cast<size_t>(c)]).second) return false;
  }
  return true;
}

}  // namespace pagetext
