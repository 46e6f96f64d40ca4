#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "e2llm/chunker.hpp"
#include "e2llm/vocab.hpp"

#include <filesystem>
#include <random>

using namespace e2llm;

namespace {

std::string random_unicode_string(std::mt19937_64& rng, std::size_t max_len) {
  static const std::vector<char32_t> pool = {
      U'a', U'b', U'c', U' ', U'.', U'\n', U'?', U'!', U'é', U'ß', U'Ж', U'中', U'文',
      U'🙂', U'x', U'y', U'z', U',', U'-', U'0', U'9'};
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<char32_t> cps;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) cps.push_back(pool[pick(rng)]);
  return utf8_encode(cps, 0, cps.size());
}

}  // namespace

TEST_CASE("chunk_text trivial inputs") {
  ChunkSpec spec;
  CHECK(chunk_text("", spec).empty());

  auto one = chunk_text("short text", spec);
  REQUIRE(one.size() == 1);
  CHECK(one[0].text == "short text");
  CHECK(one[0].char_start == 0);
  CHECK(one[0].char_end == 10);
}

TEST_CASE("chunk_text worked example with breakpoints") {
  ChunkSpec spec;
  spec.max_chars = 10;
  spec.breakpoint_chars = {U'.'};
  const auto chunks = chunk_text("Aaa bbb. Ccc ddd. Eee", spec);
  REQUIRE(chunks.size() == 3);
  CHECK(chunks[0].text == "Aaa bbb.");
  CHECK(chunks[1].text == " Ccc ddd.");
  CHECK(chunks[2].text == " Eee");
  CHECK(chunks[0].char_start == 0);
  CHECK(chunks[0].char_end == 8);
  CHECK(chunks[1].char_start == 8);
  CHECK(chunks[1].char_end == 17);
  CHECK(chunks[2].char_start == 17);
  CHECK(chunks[2].char_end == 21);
}

TEST_CASE("chunk_text overlap examples") {
  ChunkSpec spec;
  spec.max_chars = 40;
  spec.overlap_frac = 0.25;
  spec.breakpoint_chars = {};
  const std::string source(100, 'q');
  const auto chunks = chunk_text(source, spec);
  REQUIRE(chunks.size() == 4);
  CHECK(chunks[0].char_start == 0);
  CHECK(chunks[1].char_start == 30);
  CHECK(chunks[2].char_start == 60);
  CHECK(chunks[3].char_start == 90);

  // adjacent pairs share exactly the rewound span
  for (std::size_t i = 1; i < chunks.size(); ++i) {
    const std::size_t prev_len = chunks[i - 1].char_end - chunks[i - 1].char_start;
    const std::size_t rewind = static_cast<std::size_t>(0.25 * static_cast<double>(prev_len));
    CHECK(chunks[i].char_start == chunks[i - 1].char_end - rewind);
  }

  // overlap 0 is identical to the plain path
  ChunkSpec plain = spec;
  plain.overlap_frac = 0.0;
  ChunkSpec zero_as_overlap = plain;
  const auto a = chunk_text(source, plain);
  const auto b = chunk_text(source, zero_as_overlap);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].char_start == b[i].char_start);
    CHECK(a[i].char_end == b[i].char_end);
  }
}

TEST_CASE("chunker invariants on random unicode") {
  std::mt19937_64 rng(20240817);
  for (int iter = 0; iter < 1000; ++iter) {
    const std::string source = random_unicode_string(rng, 300);
    ChunkSpec spec;
    std::uniform_int_distribution<std::size_t> mc(1, 64);
    spec.max_chars = mc(rng);
    const auto chunks = chunk_text(source, spec);
    const auto again = chunk_text(source, spec);

    // determinism
    REQUIRE(chunks.size() == again.size());
    for (std::size_t i = 0; i < chunks.size(); ++i) CHECK(chunks[i].text == again[i].text);

    // tiling, bound, breakpoint preference, progress
    std::string joined;
    const auto cps = utf8_decode(source);
    std::size_t expect_start = 0;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      const auto& c = chunks[i];
      CHECK(c.index == i);
      CHECK(c.char_start == expect_start);
      CHECK(c.char_end > c.char_start);  // non-empty
      CHECK(c.char_end - c.char_start <= spec.max_chars);
      joined += c.text;
      expect_start = c.char_end;
      if (i + 1 < chunks.size()) {
        bool has_bp = false;
        const auto ccps = utf8_decode(c.text);
        for (char32_t ch : ccps)
          if (spec.breakpoint_chars.count(ch)) has_bp = true;
        if (has_bp) CHECK(spec.breakpoint_chars.count(ccps.back()) == 1);
      }
    }
    if (!cps.empty()) CHECK(expect_start == cps.size());
    CHECK(joined == source);
  }
}

TEST_CASE("vocab build, encode, decode") {
  CHECK(build_vocab({}, 100).size() == Vocab::kNumReserved);

  Vocab v = build_vocab({"a b. a"}, 100);
  CHECK(v.contains("a"));
  CHECK(v.contains("b"));
  CHECK(v.contains("."));

  // determinism
  Vocab v2 = build_vocab({"a b. a"}, 100);
  CHECK(v.content_hash() == v2.content_hash());

  // frequency ranking: "a" (2) outranks "b" and "." (1 each, lexicographic)
  CHECK(v.id("a") == Vocab::kNumReserved);
  CHECK(v.id(".") == Vocab::kNumReserved + 1);
  CHECK(v.id("b") == Vocab::kNumReserved + 2);

  CHECK(v.encode("").empty());

  // round-trip over word tokens joined by single spaces
  const std::string text = "a b a a b";
  CHECK(v.decode(v.encode(text)) == text);

  // unknown word maps to UNK at its position
  const auto ids = v.encode("a zzz b");
  REQUIRE(ids.size() == 3);
  CHECK(ids[1] == Vocab::kUnk);

  // punctuation spacing: none before, single after
  CHECK(v.decode(v.encode("a b. a")) == "a b. a");

  CHECK_THROWS_AS(v.decode({9999}), std::out_of_range);
}

TEST_CASE("vocab persistence round trip") {
  Vocab v = build_vocab({"alpha beta gamma.\nalpha line"}, 64);
  const std::string path = (std::filesystem::temp_directory_path() / "e2llm_vocab.txt").string();
  v.save(path);
  Vocab loaded = Vocab::load(path);
  CHECK(loaded.size() == v.size());
  CHECK(loaded.content_hash() == v.content_hash());
  std::filesystem::remove(path);
}

TEST_CASE("newline handling in tokenizer and decode") {
  Vocab v = build_vocab({"one two\nthree: four"}, 64);
  const auto toks = Vocab::tokenize("one two\nthree: four");
  REQUIRE(toks.size() == 6);
  CHECK(toks[2] == "\n");
  CHECK(v.decode(v.encode("one two\nthree: four")) == "one two\nthree: four");
}
