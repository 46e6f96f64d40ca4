#pragma once

#include <cstdint>

namespace e2llm {

/// Analytic cost of processing an L-token context with chunk size C:
/// L*C for encoding all L/C chunks plus (L/C)^2 * C^2 / C^2 = L^2/C^2 for the
/// decoder pass over the chunk tokens.
double attention_cost(std::int64_t context_len, std::int64_t chunk_size);

/// Integer chunk size in [1, L] minimizing attention_cost; ties break toward
/// the smaller size. The continuous minimizer is (2L)^(1/3), so only its
/// neighbourhood needs scanning.
std::int64_t optimal_chunk_size(std::int64_t context_len);

/// Maximum input size processable through chunk compression:
/// floor((decoder_window - template_overhead) * chunk_max_chars / chars_per_token).
std::int64_t effective_context_length(std::int64_t chunk_max_chars, double chars_per_token,
                                      std::int64_t decoder_window,
                                      std::int64_t template_overhead);

}  // namespace e2llm
