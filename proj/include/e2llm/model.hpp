#pragma once

#include "e2llm/layers.hpp"
#include "e2llm/ops.hpp"
#include "e2llm/vocab.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace e2llm {

template <class S>
using NamedParams = std::vector<std::pair<std::string, Tensor<S>*>>;

using AttnMask = std::vector<std::vector<std::uint8_t>>;

inline AttnMask causal_mask(Eigen::Index n) {
  AttnMask m(static_cast<std::size_t>(n),
             std::vector<std::uint8_t>(static_cast<std::size_t>(n), 0));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j)
      m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = 1;
  return m;
}

/// Full attention over the first n_valid keys; padded keys are invisible.
inline AttnMask padded_full_mask(Eigen::Index n, Eigen::Index n_valid) {
  AttnMask m(static_cast<std::size_t>(n),
             std::vector<std::uint8_t>(static_cast<std::size_t>(n), 0));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n_valid; ++j)
      m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = 1;
  return m;
}

// ---------------------------------------------------------------------------
// Transformer building blocks (pre-LN, LoRA-wrapped projections everywhere).
// ---------------------------------------------------------------------------

template <class S>
struct TransformerLayer {
  LoraLinear<S> q, k, v, o, fc1, fc2;
  LayerNormParams<S> ln1, ln2;

  TransformerLayer() = default;
  TransformerLayer(Eigen::Index d, Eigen::Index d_ff, int rank, S alpha, std::mt19937_64& rng)
      : q(d, d, rank, alpha, rng),
        k(d, d, rank, alpha, rng),
        v(d, d, rank, alpha, rng),
        o(d, d, rank, alpha, rng),
        fc1(d_ff, d, rank, alpha, rng),
        fc2(d, d_ff, rank, alpha, rng),
        ln1(d),
        ln2(d) {}

  typename Tape<S>::Var forward(Tape<S>& t, typename Tape<S>::Var h, const AttnMask& mask,
                                int heads) {
    auto x = ln1.forward(t, h);
    auto qp = q.forward(t, x);
    auto kp = k.forward(t, x);
    auto vp = v.forward(t, x);
    const Eigen::Index d = t.value(h).cols();
    const Eigen::Index hd = d / heads;
    std::vector<typename Tape<S>::Var> head_outs;
    for (int hh = 0; hh < heads; ++hh) {
      auto qh = slice_cols(t, qp, hh * hd, hd);
      auto kh = slice_cols(t, kp, hh * hd, hd);
      auto vh = slice_cols(t, vp, hh * hd, hd);
      head_outs.push_back(attention(t, qh, kh, vh, mask));
    }
    auto attn = o.forward(t, concat_cols(t, head_outs));
    h = add(t, h, attn);
    auto ff = fc2.forward(t, gelu(t, fc1.forward(t, ln2.forward(t, h))));
    return add(t, h, ff);
  }

  void collect(NamedParams<S>& out, const std::string& p) {
    auto lin = [&out](LoraLinear<S>& l, const std::string& q) {
      out.push_back({q + ".weight", &l.weight});
      out.push_back({q + ".bias", &l.bias});
      out.push_back({q + ".lora_a", &l.A});
      out.push_back({q + ".lora_b", &l.B});
    };
    lin(q, p + ".attn.q");
    lin(k, p + ".attn.k");
    lin(v, p + ".attn.v");
    lin(o, p + ".attn.o");
    lin(fc1, p + ".ff.fc1");
    lin(fc2, p + ".ff.fc2");
    out.push_back({p + ".ln1.gain", &ln1.gain});
    out.push_back({p + ".ln1.bias", &ln1.bias});
    out.push_back({p + ".ln2.gain", &ln2.gain});
    out.push_back({p + ".ln2.bias", &ln2.bias});
  }

  /// Apply fn to (tensor, is_lora_branch, is_layernorm).
  template <class Fn>
  void for_each_tensor(Fn fn) {
    for (LoraLinear<S>* l : {&q, &k, &v, &o, &fc1, &fc2}) {
      fn(l->weight, false, false);
      fn(l->bias, false, false);
      fn(l->A, true, false);
      fn(l->B, true, false);
    }
    for (LayerNormParams<S>* n : {&ln1, &ln2}) {
      fn(n->gain, false, true);
      fn(n->bias, false, true);
    }
  }
};

// ---------------------------------------------------------------------------
// Encoder: bidirectional stack with a learned CLS row prepended per chunk.
// ---------------------------------------------------------------------------

struct StackConfig {
  int layers = 2;
  int d_model = 32;
  int heads = 2;
  int max_positions = 128;
  int vocab_size = 0;
  int d_ff = 0;  // defaults to 4 * d_model when 0
  int lora_rank = 8;
  double lora_alpha = 16.0;
};

template <class S>
struct Encoder {
  StackConfig cfg;
  Tensor<S> tok_emb;  // V x d
  Tensor<S> pos_emb;  // max_positions x d
  Tensor<S> cls;      // 1 x d
  std::vector<TransformerLayer<S>> layers;
  LayerNormParams<S> final_ln;

  Encoder() = default;
  Encoder(const StackConfig& c, std::mt19937_64& rng)
      : cfg(c),
        tok_emb(randn<S>(c.vocab_size, c.d_model, rng, S(0.08)), true),
        pos_emb(randn<S>(c.max_positions, c.d_model, rng, S(0.08)), true),
        cls(randn<S>(1, c.d_model, rng, S(0.08)), true),
        final_ln(c.d_model) {
    if (c.d_model % c.heads != 0)
      throw std::invalid_argument("encoder: d_model must be divisible by heads");
    const int dff = c.d_ff > 0 ? c.d_ff : 4 * c.d_model;
    for (int i = 0; i < c.layers; ++i)
      layers.emplace_back(c.d_model, dff, c.lora_rank, S(c.lora_alpha), rng);
  }

  /// Encode one chunk's token ids; returns the final CLS row (1 x d_enc).
  /// pad_to, when larger than the natural length, appends masked PAD rows.
  typename Tape<S>::Var encode_chunk(Tape<S>& t, const std::vector<int>& ids,
                                     Eigen::Index pad_to = 0) {
    const Eigen::Index n_tok = static_cast<Eigen::Index>(ids.size());
    if (n_tok > cfg.max_positions - 1)
      throw std::invalid_argument("chunk exceeds encoder window");
    Eigen::Index n = 1 + n_tok;
    const Eigen::Index n_valid = n;
    if (pad_to > n) n = std::min<Eigen::Index>(pad_to, cfg.max_positions);
    std::vector<int> padded = ids;
    padded.resize(static_cast<std::size_t>(n - 1), Vocab::kPad);
    auto toks = embed(t, tok_emb, padded);
    auto h = concat_rows(t, {t.leaf(cls), toks});
    std::vector<int> pos_ids(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) pos_ids[static_cast<std::size_t>(i)] = static_cast<int>(i);
    h = add(t, h, embed(t, pos_emb, pos_ids));
    const AttnMask mask = padded_full_mask(n, n_valid);
    for (auto& layer : layers) h = layer.forward(t, h, mask, cfg.heads);
    return slice_rows(t, final_ln.forward(t, h), 0, 1);
  }

  void collect(NamedParams<S>& out, const std::string& p = "encoder") {
    out.push_back({p + ".tok_emb", &tok_emb});
    out.push_back({p + ".pos_emb", &pos_emb});
    out.push_back({p + ".cls", &cls});
    for (std::size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(out, p + ".layer" + std::to_string(i));
    out.push_back({p + ".final_ln.gain", &final_ln.gain});
    out.push_back({p + ".final_ln.bias", &final_ln.bias});
  }
};

enum class EncoderTrainMode { kLora, kLastLayers };

/// Freeze/unfreeze encoder tensors per the chosen training mode.
template <class S>
void configure_encoder_trainability(Encoder<S>& enc, bool train, EncoderTrainMode mode,
                                    int last_k = 2) {
  auto freeze_all = [](Tensor<S>& x) { x.frozen = true; };
  freeze_all(enc.tok_emb);
  freeze_all(enc.pos_emb);
  freeze_all(enc.cls);
  freeze_all(enc.final_ln.gain);
  freeze_all(enc.final_ln.bias);
  for (std::size_t i = 0; i < enc.layers.size(); ++i) {
    const bool in_tail =
        static_cast<int>(enc.layers.size() - i) <= last_k;
    enc.layers[i].for_each_tensor([&](Tensor<S>& x, bool is_lora, bool) {
      if (!train) {
        x.frozen = true;
      } else if (mode == EncoderTrainMode::kLora) {
        x.frozen = !is_lora;
      } else {
        x.frozen = is_lora || !in_tail;
      }
    });
  }
  if (train && mode == EncoderTrainMode::kLastLayers) {
    enc.final_ln.gain.frozen = false;
    enc.final_ln.bias.frozen = false;
  }
}

// ---------------------------------------------------------------------------
// Adapter: small GELU MLP from d_enc to d_dec, always trainable.
// ---------------------------------------------------------------------------

template <class S>
struct Adapter {
  std::vector<Linear<S>> layers;

  Adapter() = default;
  Adapter(int n_layers, Eigen::Index d_enc, Eigen::Index d_hidden, Eigen::Index d_dec,
          std::mt19937_64& rng) {
    if (n_layers < 1) throw std::invalid_argument("adapter: need at least one layer");
    Eigen::Index in = d_enc;
    for (int i = 0; i < n_layers; ++i) {
      const Eigen::Index out = (i == n_layers - 1) ? d_dec : d_hidden;
      layers.emplace_back(out, in, rng);
      in = out;
    }
  }

  typename Tape<S>::Var forward(Tape<S>& t, typename Tape<S>::Var x) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i].forward(t, x);
      if (i + 1 < layers.size()) x = gelu(t, x);
    }
    return x;
  }

  void collect(NamedParams<S>& out, const std::string& p = "adapter") {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      out.push_back({p + ".fc" + std::to_string(i) + ".weight", &layers[i].weight});
      out.push_back({p + ".fc" + std::to_string(i) + ".bias", &layers[i].bias});
    }
  }
};

// ---------------------------------------------------------------------------
// Mixed soft/text decoder input.
// ---------------------------------------------------------------------------

struct Segment {
  bool soft = false;
  std::vector<int> ids;  // text segments
  int soft_count = 0;    // soft segments
};

struct MixedSequence {
  std::vector<Segment> segments;
  std::vector<int> flat_ids;             // -1 at soft positions
  std::vector<std::uint8_t> label_mask;  // true only on supervised text positions
  int n_soft = 0;

  int total_positions() const { return static_cast<int>(flat_ids.size()); }

  void append_text(const std::vector<int>& ids, bool supervised) {
    segments.push_back(Segment{false, ids, 0});
    for (int id : ids) {
      flat_ids.push_back(id);
      label_mask.push_back(supervised ? 1 : 0);
    }
  }
  void append_soft(int count) {
    segments.push_back(Segment{true, {}, count});
    n_soft += count;
    for (int i = 0; i < count; ++i) {
      flat_ids.push_back(-1);
      label_mask.push_back(0);
    }
  }
};

enum class TemplateKind { kUnderstanding, kReasoning };

inline constexpr const char* kTemplatePrefix = "Given the contexts: ";
inline constexpr const char* kUnderstandingSuffix =
    "\nPlease follow the instruction:\nRestate the aforementioned context";
inline constexpr const char* kReasoningSuffix =
    "\nPlease follow the instruction:\nAnswer the question: ";

/// Render a prompt template around k soft chunk tokens. When target ids are
/// given they are appended (plus EOS) as the supervised span.
MixedSequence build_sequence(TemplateKind kind, int n_chunk_tokens, const Vocab& vocab,
                             const std::string& query,
                             const std::optional<std::vector<int>>& target_ids,
                             int max_positions);

// ---------------------------------------------------------------------------
// Decoder: causal stack over mixed soft/text inputs.
// ---------------------------------------------------------------------------

template <class S>
struct Decoder {
  StackConfig cfg;
  Tensor<S> tok_emb;  // V x d
  Tensor<S> pos_emb;  // max_positions x d
  std::vector<TransformerLayer<S>> layers;
  LayerNormParams<S> final_ln;
  LoraLinear<S> out_proj;  // V x d

  Decoder() = default;
  Decoder(const StackConfig& c, std::mt19937_64& rng)
      : cfg(c),
        tok_emb(randn<S>(c.vocab_size, c.d_model, rng, S(0.08)), true),
        pos_emb(randn<S>(c.max_positions, c.d_model, rng, S(0.08)), true),
        final_ln(c.d_model),
        out_proj(c.vocab_size, c.d_model, c.lora_rank, S(c.lora_alpha), rng) {
    if (c.d_model % c.heads != 0)
      throw std::invalid_argument("decoder: d_model must be divisible by heads");
    const int dff = c.d_ff > 0 ? c.d_ff : 4 * c.d_model;
    for (int i = 0; i < c.layers; ++i)
      layers.emplace_back(c.d_model, dff, c.lora_rank, S(c.lora_alpha), rng);
  }

  /// Forward over a mixed sequence. soft_rows holds seq.n_soft chunk-token
  /// rows (d_dec wide); soft positions consume them in order, text positions
  /// go through the embedding table, everyone gets absolute position rows.
  typename Tape<S>::Var forward(Tape<S>& t, const MixedSequence& seq,
                                typename Tape<S>::Var soft_rows) {
    const int n = seq.total_positions();
    if (n > cfg.max_positions)
      throw std::invalid_argument("decoder window exceeded (need " + std::to_string(n) +
                                  " positions, have " + std::to_string(cfg.max_positions) + ")");
    if (seq.n_soft > 0 && t.value(soft_rows).rows() != seq.n_soft)
      throw std::invalid_argument("decoder: soft row count mismatch");
    std::vector<typename Tape<S>::Var> parts;
    Eigen::Index soft_at = 0;
    for (const auto& seg : seq.segments) {
      if (seg.soft) {
        parts.push_back(slice_rows(t, soft_rows, soft_at, seg.soft_count));
        soft_at += seg.soft_count;
      } else if (!seg.ids.empty()) {
        parts.push_back(embed(t, tok_emb, seg.ids));
      }
    }
    auto h = concat_rows(t, parts);
    std::vector<int> pos_ids(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pos_ids[static_cast<std::size_t>(i)] = i;
    h = add(t, h, embed(t, pos_emb, pos_ids));
    const AttnMask mask = causal_mask(n);
    for (auto& layer : layers) h = layer.forward(t, h, mask, cfg.heads);
    return out_proj.forward(t, final_ln.forward(t, h));
  }

  void collect(NamedParams<S>& out, const std::string& p = "decoder") {
    out.push_back({p + ".tok_emb", &tok_emb});
    out.push_back({p + ".pos_emb", &pos_emb});
    for (std::size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(out, p + ".layer" + std::to_string(i));
    out.push_back({p + ".final_ln.gain", &final_ln.gain});
    out.push_back({p + ".final_ln.bias", &final_ln.bias});
    out.push_back({p + ".out_proj.weight", &out_proj.weight});
    out.push_back({p + ".out_proj.bias", &out_proj.bias});
    out.push_back({p + ".out_proj.lora_a", &out_proj.A});
    out.push_back({p + ".out_proj.lora_b", &out_proj.B});
  }
};

template <class S>
void configure_decoder_trainability(Decoder<S>& dec, bool train) {
  dec.tok_emb.frozen = true;
  dec.pos_emb.frozen = true;
  dec.final_ln.gain.frozen = true;
  dec.final_ln.bias.frozen = true;
  for (auto& layer : dec.layers)
    layer.for_each_tensor([&](Tensor<S>& x, bool is_lora, bool) {
      x.frozen = !(train && is_lora);
    });
  dec.out_proj.weight.frozen = true;
  dec.out_proj.bias.frozen = true;
  dec.out_proj.A.frozen = !train;
  dec.out_proj.B.frozen = !train;
}

/// Next-token cross-entropy over the supervised span: logits at position i-1
/// score the token at position i wherever label_mask[i] is set.
template <class S>
typename Tape<S>::Var lm_loss(Tape<S>& t, typename Tape<S>::Var logits,
                              const MixedSequence& seq) {
  const int n = seq.total_positions();
  if (t.value(logits).rows() != n)
    throw std::invalid_argument("lm_loss: logits/sequence length mismatch");
  std::vector<int> targets(static_cast<std::size_t>(n), 0);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 0);
  for (int i = 0; i + 1 < n; ++i) {
    if (seq.label_mask[static_cast<std::size_t>(i + 1)]) {
      targets[static_cast<std::size_t>(i)] = seq.flat_ids[static_cast<std::size_t>(i + 1)];
      mask[static_cast<std::size_t>(i)] = 1;
    }
  }
  return cross_entropy_rows(t, logits, targets, mask);
}

struct GenerationResult {
  std::vector<int> ids;
  bool truncated = false;
};

/// Greedy argmax decoding; stops at EOS or the token budget.
template <class S>
GenerationResult generate(Decoder<S>& dec, const MixedSequence& prompt,
                          const Mat<S>& soft_rows, int max_new_tokens) {
  GenerationResult out;
  MixedSequence seq = prompt;
  for (int step = 0; step < max_new_tokens; ++step) {
    if (seq.total_positions() + 1 > dec.cfg.max_positions) {
      out.truncated = true;
      break;
    }
    Tape<S> t;
    auto soft = t.constant(soft_rows);
    auto logits = dec.forward(t, seq, soft);
    const auto& z = t.value(logits);
    Eigen::Index best = 0;
    z.row(z.rows() - 1).maxCoeff(&best);
    const int tok = static_cast<int>(best);
    if (tok == Vocab::kEos) break;
    out.ids.push_back(tok);
    seq.append_text({tok}, false);
  }
  return out;
}

}  // namespace e2llm
