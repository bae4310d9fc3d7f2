#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pagetext {

// Character-level vocabulary with multi-character markup tags. Ids 0..3 are
// reserved (PAD, BOS, EOS, UNK) so checkpoints stay valid when the tail of
// the vocabulary is extended. Immutable after construction.
class Vocabulary {
 public:
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kBos = 1;
  static constexpr int32_t kEos = 2;
  static constexpr int32_t kUnk = 3;

  // Deterministic ordering: reserved ids, then charset characters in
  // codepoint order, then tags in the given order.
  static Vocabulary build(std::string_view charset, const std::vector<std::string>& tags);

  // Newline plus all printable ASCII except the uppercase letters.
  static std::string base_charset();

  // The markup tags emitted for untranscribed or structural regions.
  static std::vector<std::string> standard_tags();

  // base_charset() + standard_tags()
  static Vocabulary standard();

  int32_t size() const { return static_cast<int32_t>(tokens_.size()); }
  const std::string& token(int32_t id) const;
  // -1 when the token string is unknown
  int32_t id(std::string_view token) const;
  bool is_tag(int32_t id) const;
  int32_t newline_id() const { return newline_id_; }

  // Longest-match tokenization: tags become single tokens, other characters
  // are lowercased then mapped, anything unmapped becomes UNK. EOS appended.
  std::vector<int32_t> encode(std::string_view text) const;

  // Concatenates token strings, stopping before EOS. PAD and BOS are
  // dropped; UNK renders as U+FFFD.
  std::string decode(const std::vector<int32_t>& ids) const;

  // One token per line, line number = id, newline escaped as backslash-n.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  const std::vector<std::string>& tags() const { return tags_; }
  bool in_charset(uint32_t cp) const;

 private:
  Vocabulary() = default;

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t> index_;
  std::vector<std::string> tags_;  // in id order
  int32_t first_tag_id_ = 0;
  int32_t newline_id_ = -1;
};

}  // namespace pagetext
