#include "core/vocab.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "core/errors.h"
#include "core/utf8.h"

namespace pagetext {

namespace {

const char* kReservedNames[4] = {"<pad>", "<bos>", "<eos>", "<unk>"};

bool valid_tag(const std::string& tag) {
  if (tag.size() < 3 || tag.front() != '<' || tag.back() != '>') return false;
  for (size_t i = 1; i + 1 < tag.size(); ++i) {
    char c = tag[i];
    if (c == '<' || c == '>' || c == '\n' || c == '\\') return false;
  }
  return true;
}

}  // namespace

std::string Vocabulary::base_charset() {
  std::string s;
  s.push_back('\n');
  for (char c = 0x20; c < 0x7F; ++c) {
    if (c >= 'A' && c <= 'Z') continue;
    s.push_back(c);
  }
  return s;
}

std::vector<std::string> Vocabulary::standard_tags() {
  return {"<end-of-region>", "<math>", "<deleted-text>", "<table>", "<drawing>", "<col>"};
}

Vocabulary Vocabulary::standard() { return build(base_charset(), standard_tags()); }

Vocabulary Vocabulary::build(std::string_view charset, const std::vector<std::string>& tags) {
  Vocabulary v;
  for (const char* name : kReservedNames) {
    v.index_.emplace(name, static_cast<int32_t>(v.tokens_.size()));
    v.tokens_.emplace_back(name);
  }
  std::vector<uint32_t> cps = utf8_decode(charset);
  std::sort(cps.begin(), cps.end());
  for (size_t i = 0; i < cps.size(); ++i) {
    if (i > 0 && cps[i] == cps[i - 1]) {
      throw contract_error("vocabulary: duplicate character in charset");
    }
    std::string tok;
    utf8_append(tok, cps[i]);
    if (cps[i] == '\n') v.newline_id_ = static_cast<int32_t>(v.tokens_.size());
    v.index_.emplace(tok, static_cast<int32_t>(v.tokens_.size()));
    v.tokens_.push_back(tok);
  }
  v.first_tag_id_ = static_cast<int32_t>(v.tokens_.size());
  for (const std::string& tag : tags) {
    if (!valid_tag(tag)) {
      throw contract_error("vocabulary: malformed tag \"" + tag + "\"");
    }
    if (v.index_.count(tag)) {
      throw contract_error("vocabulary: duplicate token \"" + tag + "\"");
    }
    v.index_.emplace(tag, static_cast<int32_t>(v.tokens_.size()));
    v.tokens_.push_back(tag);
    v.tags_.push_back(tag);
  }
  return v;
}

const std::string& Vocabulary::token(int32_t id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocabulary: token id out of range");
  return tokens_[static_cast<size_t>(id)];
}

int32_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

bool Vocabulary::is_tag(int32_t id) const { return id >= first_tag_id_; }

bool Vocabulary::in_charset(uint32_t cp) const {
  std::string tok;
  utf8_append(tok, cp >= 'A' && cp <= 'Z' ? cp + 32 : cp);
  auto it = index_.find(tok);
  return it != index_.end() && it->second >= 4 && it->second < first_tag_id_;
}

std::vector<int32_t> Vocabulary::encode(std::string_view text) const {
  std::vector<uint32_t> cps = utf8_decode(text);
  for (uint32_t& cp : cps) {
    if (cp >= 'A' && cp <= 'Z') cp += 32;
  }
  // tags as scalar sequences, longest first
  std::vector<std::vector<uint32_t>> tag_cps;
  tag_cps.reserve(tags_.size());
  for (const std::string& t : tags_) tag_cps.push_back(utf8_decode(t));

  std::vector<int32_t> out;
  out.reserve(cps.size() + 1);
  size_t i = 0;
  while (i < cps.size()) {
    if (cps[i] == '<' && !tags_.empty()) {
      int32_t best = -1;
      size_t best_len = 0;
      for (size_t t = 0; t < tag_cps.size(); ++t) {
        const auto& tc = tag_cps[t];
        if (tc.size() <= best_len || i + tc.size() > cps.size()) continue;
        if (std::equal(tc.begin(), tc.end(), cps.begin() + static_cast<ptrdiff_t>(i))) {
          best = first_tag_id_ + static_cast<int32_t>(t);
          best_len = tc.size();
        }
      }
      if (best >= 0) {
        out.push_back(best);
        i += best_len;
        continue;
      }
    }
    std::string tok;
    utf8_append(tok, cps[i]);
    auto it = index_.find(tok);
    out.push_back(it == index_.end() || it->second < 4 ? kUnk : it->second);
    ++i;
  }
  out.push_back(kEos);
  return out;
}

std::string Vocabulary::decode(const std::vector<int32_t>& ids) const {
  std::string out;
  for (int32_t id : ids) {
    if (id < 0 || id >= size()) throw std::out_of_range("vocabulary: token id out of range");
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    if (id == kUnk) {
      utf8_append(out, 0xFFFD);
      continue;
    }
    out += tokens_[static_cast<size_t>(id)];
  }
  return out;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const std::string& tok : tokens_) {
    if (tok == "\n") {
      out += "\\n";
    } else {
      out += tok;
    }
    out.push_back('\n');
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  std::vector<std::string> lines;
  size_t start = 0;
  while (start <= text.size()) {
    size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < text.size()) lines.emplace_back(text.substr(start));
      break;
    }
    lines.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  if (lines.size() < 4) throw format_error("vocabulary file: missing reserved tokens");
  for (int i = 0; i < 4; ++i) {
    if (lines[static_cast<size_t>(i)] != kReservedNames[i]) {
      throw format_error("vocabulary file: reserved token mismatch at line " + std::to_string(i));
    }
  }
  std::string charset;
  std::vector<std::string> tags;
  for (size_t i = 4; i < lines.size(); ++i) {
    std::string tok = lines[i] == "\\n" ? "\n" : lines[i];
    if (tok.empty()) throw format_error("vocabulary file: empty token at line " + std::to_string(i));
    std::vector<uint32_t> cps = utf8_decode(tok);
    if (cps.size() == 1) {
      charset += tok;
    } else {
      tags.push_back(tok);
    }
  }
  Vocabulary v = build(charset, tags);
  // build() sorts the charset; reject files whose order would not round-trip
  if (v.serialize() != std::string(text)) {
    throw format_error("vocabulary file: tokens out of canonical order");
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot write vocabulary file: " + path);
  f << serialize();
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot read vocabulary file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

}  // namespace pagetext
