#include "e2llm/model.hpp"

#include <stdexcept>

namespace e2llm {

MixedSequence build_sequence(TemplateKind kind, int n_chunk_tokens, const Vocab& vocab,
                             const std::string& query,
                             const std::optional<std::vector<int>>& target_ids,
                             int max_positions) {
  MixedSequence seq;
  seq.append_text(vocab.encode(kTemplatePrefix), false);
  seq.append_soft(n_chunk_tokens);
  if (kind == TemplateKind::kUnderstanding) {
    seq.append_text(vocab.encode(kUnderstandingSuffix), false);
  } else {
    seq.append_text(vocab.encode(std::string(kReasoningSuffix) + query), false);
  }
  if (target_ids) {
    std::vector<int> supervised = *target_ids;
    supervised.push_back(Vocab::kEos);
    seq.append_text(supervised, true);
  }
  if (seq.total_positions() > max_positions)
    throw std::invalid_argument("decoder window exceeded (need " +
                                std::to_string(seq.total_positions()) + " positions, have " +
                                std::to_string(max_positions) + ")");
  return seq;
}

}  // namespace e2llm
