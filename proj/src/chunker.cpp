#include "e2llm/chunker.hpp"

#include <algorithm>
#include <stdexcept>

namespace e2llm {

std::vector<char32_t> utf8_decode(const std::string& s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    char32_t cp = c;
    if ((c & 0x80u) == 0) {
      len = 1;
    } else if ((c & 0xE0u) == 0xC0u) {
      len = 2;
      cp = c & 0x1Fu;
    } else if ((c & 0xF0u) == 0xE0u) {
      len = 3;
      cp = c & 0x0Fu;
    } else if ((c & 0xF8u) == 0xF0u) {
      len = 4;
      cp = c & 0x07u;
    } else {
      out.push_back(c);  // stray continuation byte, pass through
      ++i;
      continue;
    }
    if (i + len > s.size()) len = 1, cp = c;
    bool valid = true;
    for (std::size_t k = 1; k < len; ++k) {
      const unsigned char cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0u) != 0x80u) {
        valid = false;
        break;
      }
      cp = (cp << 6) | (cc & 0x3Fu);
    }
    if (!valid) {
      out.push_back(c);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string utf8_encode(const std::vector<char32_t>& cps, std::size_t start, std::size_t end) {
  std::string out;
  for (std::size_t i = start; i < end && i < cps.size(); ++i) {
    const char32_t cp = cps[i];
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

std::vector<Chunk> chunk_text(const std::string& source, const ChunkSpec& spec) {
  if (spec.max_chars < 1) throw std::invalid_argument("chunk_text: max_chars must be >= 1");
  if (spec.overlap_frac < 0.0 || spec.overlap_frac >= 0.5)
    throw std::invalid_argument("chunk_text: overlap_frac must be in [0, 0.5)");
  const std::vector<char32_t> cps = utf8_decode(source);
  const std::size_t n = cps.size();
  std::vector<Chunk> chunks;
  std::size_t start = 0;
  bool reached_end = false;
  while (start < n) {
    const std::size_t window_end = std::min(start + spec.max_chars, n);
    std::size_t cut = window_end;
    if (window_end < n) {
      // Backtrack to the last breakpoint inside the window.
      for (std::size_t i = window_end; i-- > start;) {
        if (spec.breakpoint_chars.count(cps[i])) {
          cut = i + 1;
          break;
        }
      }
    }
    Chunk c;
    c.char_start = start;
    c.char_end = cut;
    c.text = utf8_encode(cps, start, cut);
    c.index = chunks.size();
    chunks.push_back(std::move(c));
    if (cut >= n) {
      // With overlap, one rewound tail chunk follows the chunk that first
      // reaches the end (unless that chunk was also the first).
      if (spec.overlap_frac == 0.0 || reached_end || start == 0) break;
      reached_end = true;
    }
    std::size_t next = cut;
    if (spec.overlap_frac > 0.0) {
      const std::size_t rewind =
          static_cast<std::size_t>(spec.overlap_frac * static_cast<double>(cut - start));
      next = cut - std::min(rewind, cut - start);
      if (next <= start) throw std::runtime_error("overlap stalls chunking");
      if (reached_end && next >= n) break;
    }
    start = next;
  }
  return chunks;
}

}  // namespace e2llm
