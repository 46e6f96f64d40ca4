#pragma once

#include "e2llm/chunker.hpp"
#include "e2llm/model.hpp"

#include <thread>

namespace e2llm {

/// Tokenize chunks for the encoder, hard-splitting any chunk whose token
/// count exceeds the encoder window (content is never silently truncated).
inline std::vector<std::vector<int>> chunk_token_ids(const std::vector<Chunk>& chunks,
                                                     const Vocab& vocab, int max_enc_tokens) {
  const int budget = max_enc_tokens - 1;  // CLS occupies one position
  if (budget < 1) throw std::invalid_argument("encoder window too small");
  std::vector<std::vector<int>> out;
  for (const auto& c : chunks) {
    std::vector<int> ids = vocab.encode(c.text);
    if (ids.empty()) ids.push_back(Vocab::kPad);
    for (std::size_t at = 0; at < ids.size(); at += static_cast<std::size_t>(budget))
      out.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(at),
                       ids.begin() + static_cast<std::ptrdiff_t>(
                                         std::min(at + static_cast<std::size_t>(budget),
                                                  ids.size())));
  }
  return out;
}

/// The full chunk-compression model: encoder + adapter + decoder.
template <class S>
struct E2llmModel {
  Encoder<S> encoder;
  Adapter<S> adapter;
  Decoder<S> decoder;

  E2llmModel() = default;

  /// Encode every chunk (order preserved) and map each CLS vector through the
  /// adapter: returns an n_chunks x d_dec var of chunk tokens.
  typename Tape<S>::Var chunk_tokens(Tape<S>& t, const std::vector<std::vector<int>>& chunks) {
    std::vector<typename Tape<S>::Var> cls_rows;
    cls_rows.reserve(chunks.size());
    for (const auto& ids : chunks) cls_rows.push_back(encoder.encode_chunk(t, ids));
    return adapter.forward(t, concat_rows(t, cls_rows));
  }

  /// Inference-only chunk tokens, optionally fanned out over a worker pool.
  /// Encoding is pure, so parallel and sequential results agree elementwise.
  Mat<S> chunk_tokens_values(const std::vector<std::vector<int>>& chunks, int threads = 1) {
    Mat<S> cls(static_cast<Eigen::Index>(chunks.size()), encoder.cfg.d_model);
    if (chunks.empty()) {
      Tape<S> t;
      return Mat<S>(0, decoder.cfg.d_model);
    }
    auto work = [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        Tape<S> t;
        cls.row(static_cast<Eigen::Index>(i)) = t.value(encoder.encode_chunk(t, chunks[i]));
      }
    };
    if (threads <= 1 || chunks.size() < 2) {
      work(0, chunks.size());
    } else {
      const std::size_t n = chunks.size();
      const std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < nw; ++w) {
        const std::size_t lo = n * w / nw, hi = n * (w + 1) / nw;
        pool.emplace_back(work, lo, hi);
      }
      for (auto& th : pool) th.join();
    }
    Tape<S> t;
    return t.value(adapter.forward(t, t.constant(cls)));
  }

  void collect(NamedParams<S>& out) {
    encoder.collect(out);
    adapter.collect(out);
    decoder.collect(out);
  }

  std::vector<Tensor<S>*> parameters() {
    NamedParams<S> named;
    collect(named);
    std::vector<Tensor<S>*> out;
    out.reserve(named.size());
    for (auto& [name, p] : named) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (Tensor<S>* p : parameters()) p->zero_grad();
  }
};

}  // namespace e2llm
