#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/errors.h"
#include "core/rng.h"
#include "core/utf8.h"
#include "core/vocab.h"

#include <filesystem>

using namespace pagetext;

TEST_CASE("charset size derived by enumeration") {
  // newline + printable ASCII (0x20..0x7E is 95 chars) minus 26 uppercase
  std::string cs = Vocabulary::base_charset();
  int printable = 0;
  for (int c = 0x20; c < 0x7F; ++c) ++printable;
  CHECK(printable == 95);
  CHECK(static_cast<int>(cs.size()) == 95 - 26 + 1);  // 70
  Vocabulary v = Vocabulary::standard();
  CHECK(v.size() == 4 + 70 + 6);  // 80

  Vocabulary no_tags = Vocabulary::build(cs, {});
  CHECK(no_tags.size() == 4 + static_cast<int32_t>(cs.size()));
}

TEST_CASE("reserved ids are fixed") {
  Vocabulary v = Vocabulary::standard();
  CHECK(Vocabulary::kPad == 0);
  CHECK(Vocabulary::kBos == 1);
  CHECK(Vocabulary::kEos == 2);
  CHECK(Vocabulary::kUnk == 3);
  CHECK(v.token(0) == "<pad>");
  CHECK(v.token(3) == "<unk>");
  // newline is the first charset member, directly after the reserved block
  CHECK(v.newline_id() == 4);
  CHECK(v.token(4) == "\n");
}

TEST_CASE("duplicate and malformed tags are rejected") {
  std::string cs = Vocabulary::base_charset();
  CHECK_THROWS_AS(Vocabulary::build(cs, {"<math>", "<math>"}), contract_error);
  CHECK_THROWS_AS(Vocabulary::build(cs, {"no-brackets"}), contract_error);
  CHECK_THROWS_AS(Vocabulary::build(cs, {"<>"}), contract_error);
  CHECK_THROWS_AS(Vocabulary::build(cs, {"<unk>"}), contract_error);  // reserved collision
  CHECK_THROWS_AS(Vocabulary::build(cs + cs.substr(1, 1), {}), contract_error);  // dup char
}

TEST_CASE("encode: empty, tags, lowercasing, UNK") {
  Vocabulary v = Vocabulary::standard();
  CHECK(v.encode("") == std::vector<int32_t>{Vocabulary::kEos});

  auto ids = v.encode("ab<math>c");
  REQUIRE(ids.size() == 5);
  CHECK(ids[0] == v.id("a"));
  CHECK(ids[1] == v.id("b"));
  CHECK(ids[2] == v.id("<math>"));
  CHECK(v.is_tag(ids[2]));
  CHECK(ids[3] == v.id("c"));
  CHECK(ids[4] == Vocabulary::kEos);

  auto u = v.encode("A\xE2\x82\xACz");  // "A€z"
  REQUIRE(u.size() == 4);
  CHECK(u[0] == v.id("a"));
  CHECK(u[1] == Vocabulary::kUnk);
  CHECK(u[2] == v.id("z"));
  CHECK(u[3] == Vocabulary::kEos);
}

TEST_CASE("encode never fails on arbitrary bytes") {
  Vocabulary v = Vocabulary::standard();
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    std::string junk;
    int len = static_cast<int>(rng.uniform_int(0, 40));
    for (int i = 0; i < len; ++i) junk.push_back(static_cast<char>(rng.uniform_int(0, 255)));
    auto ids = v.encode(junk);
    CHECK(!ids.empty());
    CHECK(ids.back() == Vocabulary::kEos);
    for (int32_t id : ids) {
      CHECK(id >= 0);
      CHECK(id < v.size());
    }
  }
}

TEST_CASE("decode: EOS stop, PAD/BOS dropped, UNK replacement, range check") {
  Vocabulary v = Vocabulary::standard();
  CHECK(v.decode({Vocabulary::kEos}) == "");
  auto ids = v.encode("hi<col>");
  CHECK(v.decode(ids) == "hi<col>");
  std::vector<int32_t> padded = ids;
  padded.push_back(Vocabulary::kPad);
  padded.push_back(Vocabulary::kPad);
  CHECK(v.decode(padded) == v.decode(ids));
  std::vector<int32_t> with_bos = {Vocabulary::kBos, v.id("x"), Vocabulary::kEos};
  CHECK(v.decode(with_bos) == "x");
  CHECK(v.decode({Vocabulary::kUnk, Vocabulary::kEos}) == "\xEF\xBF\xBD");
  CHECK_THROWS_AS(v.decode({v.size()}), std::out_of_range);
  // text after EOS is ignored
  CHECK(v.decode({v.id("a"), Vocabulary::kEos, v.id("b")}) == "a");
}

TEST_CASE("roundtrip property over random charset strings") {
  Vocabulary v = Vocabulary::standard();
  std::string cs = Vocabulary::base_charset();
  Rng rng(1234);
  for (int trial = 0; trial < 300; ++trial) {
    std::string s;
    int len = static_cast<int>(rng.uniform_int(0, 60));
    for (int i = 0; i < len; ++i) {
      // avoid '<' so no accidental literal tag spellings
      char c;
      do {
        c = cs[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(cs.size()) - 1))];
      } while (c == '<');
      if (c >= 'a' && c <= 'z' && rng.uniform() < 0.3) c = static_cast<char>(c - 32);
      s.push_back(c);
    }
    std::string lowered = s;
    for (char& c : lowered) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
    }
    CHECK(v.decode(v.encode(s)) == lowered);
  }
}

TEST_CASE("token ids are stable across builds") {
  Vocabulary a = Vocabulary::standard();
  Vocabulary b = Vocabulary::standard();
  for (int32_t id = 0; id < a.size(); ++id) CHECK(a.token(id) == b.token(id));
  CHECK(a.id("<col>") == b.id("<col>"));
}

TEST_CASE("serialization: one token per line, newline escaped, id = line number") {
  Vocabulary v = Vocabulary::standard();
  std::string text = v.serialize();
  // line 4 (0-based) is the newline token, escaped
  std::vector<std::string> lines;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  REQUIRE(static_cast<int32_t>(lines.size()) == v.size());
  CHECK(lines[0] == "<pad>");
  CHECK(lines[4] == "\\n");
  CHECK(lines[5] == " ");
  CHECK(lines.back() == "<col>");

  Vocabulary back = Vocabulary::deserialize(text);
  CHECK(back.size() == v.size());
  for (int32_t id = 0; id < v.size(); ++id) CHECK(back.token(id) == v.token(id));

  auto tmp = std::filesystem::temp_directory_path() / "pagetext_vocab_test.txt";
  v.save(tmp.string());
  Vocabulary loaded = Vocabulary::load(tmp.string());
  CHECK(loaded.serialize() == text);
  std::filesystem::remove(tmp);
}
