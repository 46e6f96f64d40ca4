#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <vector>

namespace e2llm {

/// Chunking parameters. Sizes and offsets are measured in Unicode code
/// points, not bytes, so multi-byte characters are never split.
struct ChunkSpec {
  std::size_t max_chars = 512;
  double overlap_frac = 0.0;  // in [0, 0.5)
  std::set<char32_t> breakpoint_chars = {U'.', U'\n', U'?', U'!'};
};

struct Chunk {
  std::string text;
  std::size_t char_start = 0;  // half-open [char_start, char_end), code points
  std::size_t char_end = 0;
  std::size_t index = 0;
};

/// UTF-8 <-> code point helpers. Invalid bytes are passed through as single
/// code points so chunking still terminates and tiles on arbitrary input.
std::vector<char32_t> utf8_decode(const std::string& s);
std::string utf8_encode(const std::vector<char32_t>& cps, std::size_t start, std::size_t end);

/// Greedy breakpoint-aware chunking. Takes up to max_chars from the current
/// position; if the window holds a breakpoint (and does not reach the end of
/// the text) the cut lands just after the last breakpoint, otherwise it is a
/// hard cut at max_chars. With overlap_frac > 0 each next start rewinds by
/// floor(overlap_frac * previous chunk length).
std::vector<Chunk> chunk_text(const std::string& source, const ChunkSpec& spec);

}  // namespace e2llm
