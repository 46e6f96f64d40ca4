#include "e2llm/training.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace e2llm {

using nlohmann::json;

std::vector<Sample> load_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("dataset: cannot read " + path);
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("dataset: bad JSON at " + path + ":" + std::to_string(lineno) +
                               ": " + e.what());
    }
    Sample s;
    s.id = j.value("id", "line" + std::to_string(lineno));
    s.context = j.value("context", "");
    s.query = j.value("query", "");
    s.answer = j.value("answer", "");
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_dataset(std::vector<Sample> samples,
                                                                  double ratio,
                                                                  std::uint64_t seed) {
  if (ratio <= 0.0 || ratio >= 1.0)
    throw std::invalid_argument("split_dataset: ratio must be in (0, 1)");
  std::mt19937_64 rng(seed);
  std::shuffle(samples.begin(), samples.end(), rng);
  const std::size_t n_train = static_cast<std::size_t>(
      static_cast<double>(samples.size()) * ratio + 1e-9);
  std::vector<Sample> train(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<Sample> val(samples.begin() + static_cast<std::ptrdiff_t>(n_train), samples.end());
  return {std::move(train), std::move(val)};
}

std::vector<UnderstandingExample> build_understanding_examples(const std::string& context,
                                                               const ChunkSpec& spec,
                                                               std::size_t window_chunks) {
  if (window_chunks < 1)
    throw std::invalid_argument("build_understanding_examples: window must be >= 1");
  const auto chunks = chunk_text(context, spec);
  const auto cps = utf8_decode(context);
  std::vector<UnderstandingExample> out;
  std::size_t covered = 0;  // character-granularity overlap trim
  for (std::size_t first = 0; first < chunks.size(); first += window_chunks) {
    const std::size_t last = std::min(first + window_chunks, chunks.size()) - 1;
    UnderstandingExample ex;
    ex.first_chunk = first;
    ex.n_chunks = last - first + 1;
    const std::size_t start = std::max(covered, chunks[first].char_start);
    const std::size_t end = chunks[last].char_end;
    ex.target_text = utf8_encode(cps, start, end);
    covered = std::max(covered, end);
    out.push_back(std::move(ex));
  }
  return out;
}

double joint_loss(double reason_loss, double und_loss, double w_und) {
  if (w_und < 0.0) throw std::invalid_argument("joint_loss: w_und must be >= 0");
  return reason_loss + w_und * und_loss;
}

E2llmModel<float> make_model(const ModelConfig& mc, const TrainConfig& tc, const Vocab& vocab) {
  std::mt19937_64 rng(tc.seed);
  StackConfig enc_cfg = mc.encoder;
  enc_cfg.vocab_size = static_cast<int>(vocab.size());
  enc_cfg.lora_rank = tc.lora_rank_enc;
  StackConfig dec_cfg = mc.decoder;
  dec_cfg.vocab_size = static_cast<int>(vocab.size());
  dec_cfg.lora_rank = tc.lora_rank_dec;
  E2llmModel<float> m;
  m.encoder = Encoder<float>(enc_cfg, rng);
  const int hidden = mc.adapter_hidden > 0 ? mc.adapter_hidden
                                           : std::max(enc_cfg.d_model, dec_cfg.d_model);
  m.adapter = Adapter<float>(tc.adapter_layers, enc_cfg.d_model, hidden, dec_cfg.d_model, rng);
  m.decoder = Decoder<float>(dec_cfg, rng);
  const EncoderTrainMode mode = tc.encoder_mode == "last_layers" ? EncoderTrainMode::kLastLayers
                                                                 : EncoderTrainMode::kLora;
  configure_encoder_trainability(m.encoder, tc.train_encoder, mode);
  configure_decoder_trainability(m.decoder, tc.train_decoder);
  return m;
}

MixedSequence reasoning_sequence(const Sample& s, const ModelConfig& mc, const Vocab& vocab,
                                 std::size_t n_chunks) {
  if (s.answer.empty()) throw std::runtime_error("sample " + s.id + ": empty answer");
  try {
    return build_sequence(TemplateKind::kReasoning, static_cast<int>(n_chunks), vocab, s.query,
                          vocab.encode(s.answer), mc.decoder.max_positions);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("sample " + s.id + ": " + e.what());
  }
}

namespace {

struct ChunkedContext {
  std::vector<Chunk> chunks;
  std::vector<std::vector<int>> ids;       // hard-split encoder inputs
  std::vector<std::size_t> chunk_offset;   // chunks.size() + 1 boundaries into ids
};

ChunkedContext chunk_context(const std::string& context, const ChunkSpec& spec,
                             const Vocab& vocab, int max_enc_tokens) {
  ChunkedContext cc;
  cc.chunks = chunk_text(context, spec);
  cc.chunk_offset.push_back(0);
  for (const auto& c : cc.chunks) {
    auto split = chunk_token_ids({c}, vocab, max_enc_tokens);
    for (auto& ids : split) cc.ids.push_back(std::move(ids));
    cc.chunk_offset.push_back(cc.ids.size());
  }
  return cc;
}

struct PreparedSample {
  ChunkedContext ctx;
  MixedSequence reason_seq;
  std::vector<UnderstandingExample> und;
  std::vector<MixedSequence> und_seqs;
};

}  // namespace

Checkpoint snapshot(E2llmModel<float>& model, const std::string& meta_json) {
  Checkpoint c;
  c.meta_json = meta_json;
  NamedParams<float> named;
  model.collect(named);
  for (auto& [name, p] : named) c.tensors.emplace_back(name, p->value);
  return c;
}

void restore(E2llmModel<float>& model, const Checkpoint& ckpt) {
  NamedParams<float> named;
  model.collect(named);
  if (named.size() != ckpt.tensors.size())
    throw std::runtime_error("restore: tensor count mismatch (" + std::to_string(named.size()) +
                             " vs " + std::to_string(ckpt.tensors.size()) + ")");
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].first != ckpt.tensors[i].first)
      throw std::runtime_error("restore: tensor name mismatch at " + named[i].first);
    if (named[i].second->value.rows() != ckpt.tensors[i].second.rows() ||
        named[i].second->value.cols() != ckpt.tensors[i].second.cols())
      throw std::runtime_error("restore: tensor shape mismatch at " + named[i].first);
    named[i].second->value = ckpt.tensors[i].second;
  }
}

void write_metrics_csv(const std::vector<StepMetric>& metrics, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("metrics: cannot write " + path);
  f << "step,task,loss,lr,wall_ms\n";
  for (const auto& m : metrics) {
    std::ostringstream row;
    row.precision(9);
    row << m.step << ',' << m.task << ',' << m.loss << ',' << m.lr << ',' << m.wall_ms << '\n';
    f << row.str();
  }
}

TrainResult train(E2llmModel<float>& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const ModelConfig& mc,
                  const TrainConfig& tc, const Vocab& vocab) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  ChunkSpec spec = mc.chunker;
  if (tc.use_overlap && spec.overlap_frac == 0.0) spec.overlap_frac = 0.3;

  // Precompute sequences once; only the soft-token values change with weights.
  std::vector<PreparedSample> prepared;
  for (const auto& s : train_set) {
    if (s.context.empty()) throw std::runtime_error("sample " + s.id + ": empty context");
    PreparedSample ps;
    ps.ctx = chunk_context(s.context, spec, vocab, model.encoder.cfg.max_positions);
    ps.reason_seq = reasoning_sequence(s, mc, vocab, ps.ctx.ids.size());
    if (tc.w_und > 0.0) {
      ps.und = build_understanding_examples(s.context, spec, tc.window_chunks);
      for (const auto& ex : ps.und) {
        const std::size_t lo = ps.ctx.chunk_offset[ex.first_chunk];
        const std::size_t hi = ps.ctx.chunk_offset[ex.first_chunk + ex.n_chunks];
        try {
          ps.und_seqs.push_back(build_sequence(TemplateKind::kUnderstanding,
                                               static_cast<int>(hi - lo), vocab, "",
                                               vocab.encode(ex.target_text),
                                               mc.decoder.max_positions));
        } catch (const std::invalid_argument& e) {
          throw std::runtime_error("sample " + s.id + ": " + e.what());
        }
      }
    }
    prepared.push_back(std::move(ps));
  }

  struct UndRef {
    std::size_t sample, example;
  };
  std::vector<UndRef> und_pool;
  for (std::size_t i = 0; i < prepared.size(); ++i)
    for (std::size_t j = 0; j < prepared[i].und_seqs.size(); ++j) und_pool.push_back({i, j});

  auto params = model.parameters();
  Adam<float> opt(static_cast<float>(tc.lr));
  std::mt19937_64 rng(tc.seed ^ 0x9e3779b97f4a7c15ull);

  auto forward_reason = [&](Tape<float>& t, const PreparedSample& ps) {
    auto soft = model.chunk_tokens(t, ps.ctx.ids);
    auto logits = model.decoder.forward(t, ps.reason_seq, soft);
    return lm_loss(t, logits, ps.reason_seq);
  };
  auto forward_und = [&](Tape<float>& t, const PreparedSample& ps, std::size_t j) {
    const auto& ex = ps.und[j];
    const std::size_t lo = ps.ctx.chunk_offset[ex.first_chunk];
    const std::size_t hi = ps.ctx.chunk_offset[ex.first_chunk + ex.n_chunks];
    std::vector<std::vector<int>> window(ps.ctx.ids.begin() + static_cast<std::ptrdiff_t>(lo),
                                         ps.ctx.ids.begin() + static_cast<std::ptrdiff_t>(hi));
    auto soft = model.chunk_tokens(t, window);
    auto logits = model.decoder.forward(t, ps.und_seqs[j], soft);
    return lm_loss(t, logits, ps.und_seqs[j]);
  };

  TrainResult result;
  auto validate = [&]() {
    const auto& set = val_set.empty() ? train_set : val_set;
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& s : set) {
      ChunkedContext cc = chunk_context(s.context, spec, vocab, model.encoder.cfg.max_positions);
      MixedSequence seq = reasoning_sequence(s, mc, vocab, cc.ids.size());
      Tape<float> t;
      auto soft = model.chunk_tokens(t, cc.ids);
      auto logits = model.decoder.forward(t, seq, soft);
      total += static_cast<double>(t.value(lm_loss(t, logits, seq))(0, 0));
      ++n;
    }
    return total / static_cast<double>(n);
  };

  result.best_val_loss = std::numeric_limits<double>::infinity();
  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 1; step <= tc.steps; ++step) {
    const bool have_und = !und_pool.empty() && tc.w_und > 0.0;
    bool do_reason = true, do_und = false;
    if (tc.joint_mode == "sum") {
      do_und = have_und;
    } else if (have_und) {
      // Task sampled proportionally to pool sizes.
      const double p_und = static_cast<double>(und_pool.size()) /
                           static_cast<double>(und_pool.size() + prepared.size());
      std::uniform_real_distribution<double> u(0.0, 1.0);
      do_und = u(rng) < p_und;
      do_reason = !do_und;
    }

    model.zero_grad();
    double reason_loss = 0.0, und_loss = 0.0;
    const int b = tc.batch_size;
    if (do_reason) {
      std::uniform_int_distribution<std::size_t> pick(0, prepared.size() - 1);
      for (int i = 0; i < b; ++i) {
        Tape<float> t;
        auto loss = forward_reason(t, prepared[pick(rng)]);
        reason_loss += static_cast<double>(t.value(loss)(0, 0)) / b;
        t.backward(scale(t, loss, 1.0f / static_cast<float>(b)));
      }
    }
    if (do_und) {
      const float w = tc.joint_mode == "sum" ? static_cast<float>(tc.w_und)
                                             : static_cast<float>(tc.w_und);
      std::uniform_int_distribution<std::size_t> pick(0, und_pool.size() - 1);
      for (int i = 0; i < b; ++i) {
        const UndRef ref = und_pool[pick(rng)];
        Tape<float> t;
        auto loss = forward_und(t, prepared[ref.sample], ref.example);
        und_loss += static_cast<double>(t.value(loss)(0, 0)) / b;
        t.backward(scale(t, loss, w / static_cast<float>(b)));
      }
    }
    if (std::isnan(reason_loss) || std::isinf(reason_loss) || std::isnan(und_loss) ||
        std::isinf(und_loss))
      throw TrainingDiverged(step, "loss diverged at step " + std::to_string(step));
    opt.step(params);

    const double wall_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
    if (do_reason)
      result.metrics.push_back({step, "reason", reason_loss, tc.lr, wall_ms});
    if (do_und) result.metrics.push_back({step, "und", und_loss, tc.lr, wall_ms});

    if (tc.eval_every > 0 && (step % tc.eval_every == 0 || step == tc.steps)) {
      const double val_loss = validate();
      result.metrics.push_back({step, "val", val_loss, tc.lr, wall_ms});
      if (val_loss < result.best_val_loss) {
        result.best_val_loss = val_loss;
        result.best_ckpt = snapshot(model, "");
      }
    }
  }
  result.final_ckpt = snapshot(model, "");
  if (result.best_ckpt.tensors.empty()) {
    result.best_ckpt = result.final_ckpt;
    result.best_val_loss = validate();
  }
  return result;
}

}  // namespace e2llm
