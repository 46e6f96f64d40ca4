#include "e2llm/vocab.hpp"

#include "e2llm/chunker.hpp"  // utf8 helpers

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

namespace e2llm {

namespace {

const char* kReservedNames[] = {"<pad>", "<bos>", "<eos>", "<unk>", "<chunk>"};

bool is_word_cp(char32_t c) {
  return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || (c >= U'0' && c <= U'9') ||
         c == U'_' || c > 127;
}

bool is_space_cp(char32_t c) { return c == U' ' || c == U'\t' || c == U'\r'; }

bool is_word_token(const std::string& tok) {
  if (tok.empty()) return false;
  const auto cps = utf8_decode(tok);
  return is_word_cp(cps[0]);
}

}  // namespace

Vocab::Vocab() {
  for (const char* r : kReservedNames) add_token(r);
}

std::vector<std::string> Vocab::tokenize(const std::string& text) {
  const auto cps = utf8_decode(text);
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < cps.size()) {
    if (is_space_cp(cps[i])) {
      ++i;
      continue;
    }
    if (is_word_cp(cps[i])) {
      std::size_t j = i + 1;
      while (j < cps.size() && is_word_cp(cps[j])) ++j;
      out.push_back(utf8_encode(cps, i, j));
      i = j;
    } else {
      // Punctuation, newline, and anything else: one token per code point.
      out.push_back(utf8_encode(cps, i, i + 1));
      ++i;
    }
  }
  return out;
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("vocab: unknown token id " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(const std::string& token) const { return ids_.count(token) > 0; }

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> out;
  for (const auto& tok : tokenize(text)) out.push_back(id(tok));
  return out;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string out;
  std::string prev;
  bool first = true;
  for (int id : ids) {
    const std::string& tok = token(id);
    if (!first) {
      const bool prev_glues = (prev == "\n");
      const bool sep = is_word_token(tok) && !prev_glues &&
                       (is_word_token(prev) || prev == "." || prev == "," || prev == "!" ||
                        prev == "?" || prev == ":" || prev == ";");
      if (sep) out += ' ';
    }
    out += tok;
    prev = tok;
    first = false;
  }
  return out;
}

void Vocab::add_token(const std::string& token) {
  if (ids_.count(token)) return;
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

void Vocab::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("vocab: cannot write " + path);
  for (const auto& t : tokens_) {
    std::string esc = t;
    // Newline tokens are stored escaped so the file stays one token per line.
    if (esc == "\n") esc = "\\n";
    f << esc << '\n';
  }
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("vocab: cannot read " + path);
  Vocab v;
  std::string line;
  std::size_t idx = 0;
  while (std::getline(f, line)) {
    if (line == "\\n") line = "\n";
    if (idx < static_cast<std::size_t>(kNumReserved)) {
      if (line != kReservedNames[idx])
        throw std::runtime_error("vocab: reserved token mismatch at line " + std::to_string(idx));
    } else {
      v.add_token(line);
    }
    ++idx;
  }
  return v;
}

std::uint64_t Vocab::content_hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  for (const auto& t : tokens_) {
    for (char c : t) mix(static_cast<unsigned char>(c));
    mix(0);
  }
  return h;
}

Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t max_size) {
  if (max_size <= static_cast<std::size_t>(Vocab::kNumReserved))
    throw std::invalid_argument("build_vocab: max_size must exceed reserved count");
  std::map<std::string, std::size_t> freq;
  for (const auto& doc : corpus)
    for (const auto& tok : Vocab::tokenize(doc)) ++freq[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (const auto& [tok, n] : ranked) {
    if (v.size() >= max_size) break;
    v.add_token(tok);
  }
  return v;
}

}  // namespace e2llm
