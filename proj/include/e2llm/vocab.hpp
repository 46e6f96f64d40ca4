#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace e2llm {

/// Word/punctuation tokenizer with a frequency-ranked vocabulary.
/// Reserved ids come first: PAD, BOS, EOS, UNK, CHUNK_SLOT. CHUNK_SLOT marks
/// where soft chunk tokens splice into a rendered prompt.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kChunkSlot = 4;
  static constexpr int kNumReserved = 5;

  Vocab();

  /// Tokenize: maximal runs of word characters (alphanumerics, underscore,
  /// and any code point above ASCII) plus single non-space characters.
  static std::vector<std::string> tokenize(const std::string& text);

  int id(const std::string& token) const;       // UNK id when absent
  const std::string& token(int id) const;        // throws on unknown id
  bool contains(const std::string& token) const;
  std::size_t size() const { return tokens_.size(); }

  std::vector<int> encode(const std::string& text) const;
  /// Single space between word tokens, none before punctuation, newline
  /// tokens glue to their neighbours.
  std::string decode(const std::vector<int>& ids) const;

  void add_token(const std::string& token);

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  /// FNV-1a over the token list, used to detect checkpoint/vocab mismatch.
  std::uint64_t content_hash() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Frequency-ranked vocab over a corpus (ties broken lexicographically),
/// truncated to max_size entries including the reserved ones.
Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t max_size);

}  // namespace e2llm
