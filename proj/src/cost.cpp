#include "e2llm/cost.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace e2llm {

double attention_cost(std::int64_t context_len, std::int64_t chunk_size) {
  if (context_len < 1) throw std::invalid_argument("cost: context length must be >= 1");
  if (chunk_size < 1) throw std::invalid_argument("cost: chunk size must be >= 1");
  if (chunk_size > context_len)
    throw std::invalid_argument("cost: chunk size exceeds context length");
  const double l = static_cast<double>(context_len);
  const double c = static_cast<double>(chunk_size);
  return l * c + (l * l) / (c * c);
}

std::int64_t optimal_chunk_size(std::int64_t context_len) {
  if (context_len < 1) throw std::invalid_argument("optimal_chunk_size: L must be >= 1");
  // d/dC (LC + L^2/C^2) = L - 2 L^2 / C^3 = 0  =>  C = (2L)^(1/3).
  const double cont = std::cbrt(2.0 * static_cast<double>(context_len));
  const std::int64_t lo = std::max<std::int64_t>(1, static_cast<std::int64_t>(cont) - 2);
  const std::int64_t hi =
      std::min<std::int64_t>(context_len, static_cast<std::int64_t>(cont) + 2);
  std::int64_t best = lo;
  double best_cost = attention_cost(context_len, lo);
  for (std::int64_t c = lo + 1; c <= hi; ++c) {
    const double cc = attention_cost(context_len, c);
    if (cc < best_cost) {
      best_cost = cc;
      best = c;
    }
  }
  return best;
}

std::int64_t effective_context_length(std::int64_t chunk_max_chars, double chars_per_token,
                                      std::int64_t decoder_window,
                                      std::int64_t template_overhead) {
  if (chunk_max_chars < 1 || chars_per_token <= 0.0 || decoder_window < 1 ||
      template_overhead < 0)
    throw std::invalid_argument("effective_context_length: arguments must be positive");
  if (template_overhead >= decoder_window)
    throw std::invalid_argument("effective_context_length: overhead exceeds decoder window");
  const double tokens_per_chunk = static_cast<double>(chunk_max_chars) / chars_per_token;
  return static_cast<std::int64_t>(
      std::floor(static_cast<double>(decoder_window - template_overhead) * tokens_per_chunk));
}

}  // namespace e2llm
