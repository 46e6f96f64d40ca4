// Acceptance gate: ten go/no-go checks covering gradients, chunking, metrics,
// overfit capacity, joint training, ablations, scaling, and persistence.
// Each criterion prints exactly one PASS/FAIL line; the exit code is the
// number of failures.

#include "e2llm/bench.hpp"
#include "e2llm/cost.hpp"
#include "e2llm/metrics.hpp"
#include "e2llm/training.hpp"
#include "gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

using namespace e2llm;
using e2llm::test::grad_check;
using e2llm::test::random_mat;

namespace {

// ---------------------------------------------------------------------------
// Criterion 1: finite-difference checks for every differentiable op.
// ---------------------------------------------------------------------------

struct OpCheck {
  std::string name;
  double worst = 0.0;
};

double check_op(std::vector<Tensor<double>*> leaves,
                const std::function<Tape<double>::Var(Tape<double>&)>& build) {
  auto loss_fn = [&]() {
    Tape<double> t;
    return t.value(build(t))(0, 0);
  };
  auto backward_fn = [&]() {
    Tape<double> t;
    t.backward(build(t));
  };
  double worst = 0.0;
  for (Tensor<double>* p : leaves) worst = std::max(worst, grad_check(*p, loss_fn, backward_fn));
  return worst;
}

bool criterion_gradient_suite(std::string& detail) {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    const Mat<double> wsum = random_mat(8, 3, rng);  // non-uniform readout weights

    Tensor<double> a(random_mat(3, 4, rng), true);
    Tensor<double> b4x2(random_mat(4, 2, rng), true);
    Tensor<double> b2x4(random_mat(2, 4, rng), true);
    Tensor<double> row(random_mat(1, 4, rng), true);
    Tensor<double> gain(random_mat(1, 4, rng, 0.2), true);
    Tensor<double> bias(random_mat(1, 4, rng, 0.2), true);
    gain.value.array() += 1.0;
    Tensor<double> q(random_mat(3, 4, rng), true);
    Tensor<double> k(random_mat(3, 4, rng), true);
    Tensor<double> v(random_mat(3, 4, rng), true);
    Tensor<double> table(random_mat(5, 4, rng), true);
    Tensor<double> logits(random_mat(3, 5, rng), true);

    auto readout = [&wsum](Tape<double>& t, Tape<double>::Var x) {
      return sum_all(t, matmul(t, x, t.constant(wsum.topRows(t.value(x).cols()))));
    };
    const AttnMask mask = causal_mask(3);
    const std::vector<int> ids = {1, 3, 1, 4};
    const std::vector<int> targets = {2, 0, 4};
    const std::vector<std::uint8_t> tmask = {1, 0, 1};

    worst = std::max(worst, check_op({&a, &b4x2}, [&](Tape<double>& t) {
      return readout(t, matmul(t, t.leaf(a), t.leaf(b4x2)));
    }));
    worst = std::max(worst, check_op({&a, &b2x4}, [&](Tape<double>& t) {
      return readout(t, matmul_nt(t, t.leaf(a), t.leaf(b2x4)));
    }));
    worst = std::max(worst, check_op({&a, &q}, [&](Tape<double>& t) {
      return readout(t, add(t, t.leaf(a), t.leaf(q)));
    }));
    worst = std::max(worst, check_op({&a, &row}, [&](Tape<double>& t) {
      return readout(t, add_row(t, t.leaf(a), t.leaf(row)));
    }));
    worst = std::max(worst, check_op({&a}, [&](Tape<double>& t) {
      return readout(t, scale(t, t.leaf(a), 0.37));
    }));
    worst = std::max(worst, check_op({&a}, [&](Tape<double>& t) {
      return readout(t, gelu(t, t.leaf(a)));
    }));
    worst = std::max(worst, check_op({&a}, [&](Tape<double>& t) {
      return readout(t, softmax_rows(t, t.leaf(a)));
    }));
    worst = std::max(worst, check_op({&a, &gain, &bias}, [&](Tape<double>& t) {
      return readout(t, layer_norm(t, t.leaf(a), t.leaf(gain), t.leaf(bias), 1e-5));
    }));
    worst = std::max(worst, check_op({&q, &k, &v}, [&](Tape<double>& t) {
      return readout(t, attention(t, t.leaf(q), t.leaf(k), t.leaf(v), mask));
    }));
    worst = std::max(worst, check_op({&table}, [&](Tape<double>& t) {
      return readout(t, embed(t, table, ids));
    }));
    worst = std::max(worst, check_op({&a, &q}, [&](Tape<double>& t) {
      return readout(t, concat_rows(t, {t.leaf(a), t.leaf(q)}));
    }));
    worst = std::max(worst, check_op({&a, &q}, [&](Tape<double>& t) {
      return readout(t, concat_cols(t, {t.leaf(a), t.leaf(q)}));
    }));
    worst = std::max(worst, check_op({&a}, [&](Tape<double>& t) {
      return readout(t, slice_rows(t, t.leaf(a), 1, 2));
    }));
    worst = std::max(worst, check_op({&a}, [&](Tape<double>& t) {
      return readout(t, slice_cols(t, t.leaf(a), 1, 2));
    }));
    worst = std::max(worst, check_op({&a}, [&](Tape<double>& t) {
      return sum_all(t, t.leaf(a));
    }));
    worst = std::max(worst, check_op({&logits}, [&](Tape<double>& t) {
      return cross_entropy_rows(t, t.leaf(logits), targets, tmask);
    }));
  }
  std::ostringstream os;
  os << "worst relative error " << worst << " over 5 seeds";
  detail = os.str();
  return worst < 1e-4;
}

// ---------------------------------------------------------------------------
// Criterion 2: gradients traverse encoder -> adapter -> decoder end to end.
// ---------------------------------------------------------------------------

bool criterion_end_to_end_gradients(std::string& detail) {
  std::vector<std::string> corpus = {
      std::string(kTemplatePrefix) + kUnderstandingSuffix + kReasoningSuffix,
      "alpha beta gamma delta what is answer forty"};
  Vocab vocab = build_vocab(corpus, 128);

  StackConfig ec;
  ec.layers = 1;
  ec.d_model = 16;
  ec.heads = 2;
  ec.max_positions = 16;
  ec.vocab_size = static_cast<int>(vocab.size());
  ec.lora_rank = 2;
  StackConfig dc = ec;
  dc.d_model = 32;
  dc.max_positions = 64;

  std::mt19937_64 rng(99);
  E2llmModel<double> m;
  m.encoder = Encoder<double>(ec, rng);
  m.adapter = Adapter<double>(2, 16, 32, 32, rng);
  m.decoder = Decoder<double>(dc, rng);
  m.encoder.layers[0].v.weight.frozen = false;  // sampled base weight

  std::vector<std::vector<int>> chunks = {vocab.encode("alpha beta"), vocab.encode("gamma delta")};
  MixedSequence seq = build_sequence(TemplateKind::kReasoning, 2, vocab, "what is alpha",
                                     vocab.encode("forty"), 64);
  auto build = [&](Tape<double>& t) {
    auto soft = m.chunk_tokens(t, chunks);
    return lm_loss(t, m.decoder.forward(t, seq, soft), seq);
  };
  auto loss_fn = [&]() {
    Tape<double> t;
    return t.value(build(t))(0, 0);
  };
  auto backward_fn = [&]() {
    Tape<double> t;
    t.backward(build(t));
  };
  const double worst = grad_check(m.encoder.layers[0].v.weight, loss_fn, backward_fn);
  std::ostringstream os;
  os << "encoder weight vs finite differences, worst relative error " << worst;
  detail = os.str();
  return worst < 1e-3;
}

// ---------------------------------------------------------------------------
// Criterion 3: chunker invariants under fuzzing plus the worked offsets.
// ---------------------------------------------------------------------------

bool criterion_chunker(std::string& detail) {
  {
    ChunkSpec spec;
    spec.max_chars = 10;
    spec.breakpoint_chars = {U'.'};
    const auto chunks = chunk_text("Aaa bbb. Ccc ddd. Eee", spec);
    if (chunks.size() != 3 || chunks[0].char_start != 0 || chunks[0].char_end != 8 ||
        chunks[1].char_start != 8 || chunks[1].char_end != 17 || chunks[2].char_start != 17 ||
        chunks[2].char_end != 21) {
      detail = "worked 21-char example produced wrong offsets";
      return false;
    }
  }

  static const std::vector<char32_t> pool = {U'a', U'b', U'c', U' ',  U'.', U'\n', U'?',
                                             U'!', U'é', U'ß', U'Ж',  U'中', U'文', U'🙂',
                                             U'x', U'y', U'z', U',', U'-'};
  std::mt19937_64 rng(20240817);
  for (int iter = 0; iter < 1000; ++iter) {
    std::uniform_int_distribution<std::size_t> len(0, 300), pick(0, pool.size() - 1);
    std::vector<char32_t> cps;
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) cps.push_back(pool[pick(rng)]);
    const std::string source = utf8_encode(cps, 0, cps.size());

    ChunkSpec spec;
    std::uniform_int_distribution<std::size_t> mc(1, 64);
    spec.max_chars = mc(rng);
    const auto chunks = chunk_text(source, spec);
    const auto again = chunk_text(source, spec);
    if (chunks.size() != again.size()) {
      detail = "nondeterministic chunk count at iteration " + std::to_string(iter);
      return false;
    }
    std::string joined;
    std::size_t expect = 0;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      const auto& c = chunks[i];
      const bool ok = c.text == again[i].text && c.index == i && c.char_start == expect &&
                      c.char_end > c.char_start && c.char_end - c.char_start <= spec.max_chars;
      if (!ok) {
        detail = "invariant violated at iteration " + std::to_string(iter);
        return false;
      }
      if (i + 1 < chunks.size()) {
        const auto ccps = utf8_decode(c.text);
        bool has_bp = false;
        for (char32_t ch : ccps)
          if (spec.breakpoint_chars.count(ch)) has_bp = true;
        if (has_bp && spec.breakpoint_chars.count(ccps.back()) == 0) {
          detail = "breakpoint preference violated at iteration " + std::to_string(iter);
          return false;
        }
      }
      joined += c.text;
      expect = c.char_end;
    }
    if (joined != source || (!cps.empty() && expect != cps.size())) {
      detail = "tiling violated at iteration " + std::to_string(iter);
      return false;
    }
  }
  detail = "1000 fuzzed strings: tiling, bound, breakpoints, determinism";
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 4: metric implementations vs brute-force oracles.
// ---------------------------------------------------------------------------

double rouge_n_oracle(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                      int n) {
  auto grams = [n](const std::vector<std::string>& t) {
    std::map<std::string, int> g;
    for (std::size_t i = 0; i + n <= t.size(); ++i) {
      std::string key;
      for (int j = 0; j < n; ++j) key += t[i + j] + "\x1f";
      ++g[key];
    }
    return g;
  };
  const auto cg = grams(cand), rg = grams(ref);
  long ct = 0, rt = 0, ov = 0;
  for (const auto& [key, c] : cg) ct += c;
  for (const auto& [key, c] : rg) rt += c;
  for (const auto& [key, c] : cg) {
    auto it = rg.find(key);
    if (it != rg.end()) ov += std::min(c, it->second);
  }
  if (ct == 0 || rt == 0) return 0.0;
  const double p = double(ov) / ct, r = double(ov) / rt;
  return (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
}

int lcs_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto& s = a.size() <= b.size() ? a : b;
  const auto& t = a.size() <= b.size() ? b : a;
  int best = 0;
  for (std::uint64_t mask = 0; mask < (1ull << s.size()); ++mask) {
    std::vector<std::string> sub;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (mask & (1ull << i)) sub.push_back(s[i]);
    if (static_cast<int>(sub.size()) <= best) continue;
    std::size_t j = 0;
    for (const auto& tok : t)
      if (j < sub.size() && tok == sub[j]) ++j;
    if (j == sub.size()) best = static_cast<int>(sub.size());
  }
  return best;
}

bool criterion_metric_oracles(std::string& detail) {
  std::mt19937_64 rng(4242);
  const std::vector<std::string> words = {"red", "blue", "green", "sun", "moon", "dog"};
  std::uniform_int_distribution<std::size_t> len(0, 12), pick(0, words.size() - 1);
  for (int iter = 0; iter < 500; ++iter) {
    std::vector<std::string> cand, ref;
    const std::size_t nc = len(rng), nr = len(rng);
    for (std::size_t i = 0; i < nc; ++i) cand.push_back(words[pick(rng)]);
    for (std::size_t i = 0; i < nr; ++i) ref.push_back(words[pick(rng)]);
    auto join = [](const std::vector<std::string>& v) {
      std::string out;
      for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + v[i];
      return out;
    };
    const std::string cs = join(cand), rs = join(ref);
    for (int n = 1; n <= 2; ++n) {
      if (std::abs(rouge_n(cs, rs, n) - rouge_n_oracle(cand, ref, n)) > 1e-12) {
        detail = "rouge_" + std::to_string(n) + " mismatch at iteration " + std::to_string(iter);
        return false;
      }
    }
    const int lcs = lcs_oracle(cand, ref);
    double expect = 0.0;
    if (!cand.empty() && !ref.empty()) {
      const double p = double(lcs) / cand.size(), r = double(lcs) / ref.size();
      expect = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
    }
    if (std::abs(rouge_l(cs, rs) - expect) > 1e-12) {
      detail = "rouge_l mismatch at iteration " + std::to_string(iter);
      return false;
    }
  }
  const QAScores half = qa_scores("the capital is paris", "paris france");
  const QAScores full = qa_scores("Paris.", "paris");
  if (std::abs(half.f1 - 0.5) > 1e-12 || std::abs(full.f1 - 1.0) > 1e-12) {
    detail = "qa_scores hand examples mismatch";
    return false;
  }
  detail = "500 random sequences exact vs counting and subsequence oracles";
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 5: the G-mean definition reproduces published score rows.
// ---------------------------------------------------------------------------

bool criterion_g_mean(std::string& detail) {
  const double g1 = g_mean(0.2537, 0.0655, 0.1875);
  const double g2 = g_mean(0.3314, 0.1075, 0.1859);
  std::ostringstream os;
  os << "g1 = " << g1 << " (want 0.1461 +- 5e-4), g2 = " << g2 << " (want 0.1878 +- 5e-4)";
  detail = os.str();
  return std::abs(g1 - 0.1461) < 5e-4 && std::abs(g2 - 0.1878) < 5e-4;
}

// ---------------------------------------------------------------------------
// Criteria 6/7/10 share a 32-sample synthetic key/value fixture: each context
// is 2-10 fixed-width sentences (one chunk each), and each query asks for one
// key's value.
// ---------------------------------------------------------------------------

struct Fixture {
  std::vector<Sample> samples;
  Vocab vocab;
  ModelConfig mc;
  TrainConfig tc;
};

std::string pad_sentence(std::string s, std::size_t width) {
  if (s.size() > width) throw std::logic_error("fixture sentence too long");
  if (s.size() < width) {
    s += ' ';
    s += std::string(width - s.size(), 'z');
  }
  return s;
}

Fixture make_fixture() {
  static const char* syl[] = {"ba", "de", "fi", "go", "lu", "me", "no", "pi"};
  auto word = [&](char prefix, int i) {
    return std::string(1, prefix) + syl[i % 8] + syl[(i / 8) % 8];
  };
  constexpr std::size_t kWidth = 24;

  Fixture fx;
  std::mt19937_64 rng(2025);
  for (int i = 0; i < 32; ++i) {
    const std::string key = word('k', i);
    const std::string value = word('v', i);
    std::uniform_int_distribution<int> n_facts(2, 10);
    const int k = n_facts(rng);
    std::uniform_int_distribution<int> slot(0, k - 1);
    const int own = slot(rng);
    std::string context;
    for (int j = 0; j < k; ++j) {
      // the queried fact sits at a random chunk; fillers use other ids
      const int fid = (j == own) ? i : 32 + (i * 10 + j) % 32;
      const std::string fk = (j == own) ? key : word('k', fid);
      const std::string fv = (j == own) ? value : word('v', fid);
      context += pad_sentence(fk + " is " + fv + ".", kWidth);
    }
    fx.samples.push_back({"s" + std::to_string(i), context, "what is " + key, value});
  }

  std::vector<std::string> corpus = {
      std::string(kTemplatePrefix) + kUnderstandingSuffix + kReasoningSuffix};
  for (const auto& s : fx.samples) {
    corpus.push_back(s.context);
    corpus.push_back(s.query);
    corpus.push_back(s.answer);
  }
  fx.vocab = build_vocab(corpus, 1024);

  fx.mc.encoder.layers = 2;
  fx.mc.encoder.d_model = 32;
  fx.mc.encoder.heads = 2;
  fx.mc.encoder.max_positions = 16;
  fx.mc.decoder.layers = 2;
  fx.mc.decoder.d_model = 64;
  fx.mc.decoder.heads = 2;
  fx.mc.decoder.max_positions = 160;
  fx.mc.adapter_hidden = 64;
  fx.mc.chunker.max_chars = kWidth;
  fx.mc.chunker.overlap_frac = 0.0;
  fx.mc.chunker.breakpoint_chars.clear();

  fx.tc.w_und = 0.0;
  fx.tc.window_chunks = 2;
  fx.tc.lr = 2e-3;
  fx.tc.steps = 2000;
  fx.tc.batch_size = 4;
  fx.tc.seed = 11;
  fx.tc.lora_rank_enc = 16;
  fx.tc.lora_rank_dec = 16;
  fx.tc.adapter_layers = 2;
  fx.tc.eval_every = 0;
  return fx;
}

std::vector<std::vector<int>> context_chunk_ids(const Fixture& fx, const std::string& context) {
  return chunk_token_ids(chunk_text(context, fx.mc.chunker), fx.vocab,
                         fx.mc.encoder.max_positions);
}

std::string answer_query(E2llmModel<float>& model, const Fixture& fx, const Sample& s) {
  const auto ids = context_chunk_ids(fx, s.context);
  const Mat<float> soft = model.chunk_tokens_values(ids);
  MixedSequence prompt = build_sequence(TemplateKind::kReasoning, static_cast<int>(ids.size()),
                                        fx.vocab, s.query, std::nullopt,
                                        fx.mc.decoder.max_positions);
  return fx.vocab.decode(generate(model.decoder, prompt, soft, 4).ids);
}

double exact_match_rate(E2llmModel<float>& model, const Fixture& fx) {
  int hits = 0;
  for (const auto& s : fx.samples)
    if (answer_query(model, fx, s) == s.answer) ++hits;
  return static_cast<double>(hits) / static_cast<double>(fx.samples.size());
}

double last_reason_loss(const TrainResult& r) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t seen = 0;
  for (auto it = r.metrics.rbegin(); it != r.metrics.rend() && seen < 25; ++it) {
    if (it->task != "reason") continue;
    best = std::min(best, it->loss);
    ++seen;
  }
  return best;
}

/// Mean unigram F1 of greedy chunk restatements against the source windows.
double restatement_f1(E2llmModel<float>& model, const Fixture& fx) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : fx.samples) {
    const auto ids = context_chunk_ids(fx, s.context);
    const auto windows =
        build_understanding_examples(s.context, fx.mc.chunker, fx.tc.window_chunks);
    for (const auto& w : windows) {
      std::vector<std::vector<int>> window_ids(
          ids.begin() + static_cast<std::ptrdiff_t>(w.first_chunk),
          ids.begin() + static_cast<std::ptrdiff_t>(w.first_chunk + w.n_chunks));
      const Mat<float> soft = model.chunk_tokens_values(window_ids);
      MixedSequence prompt =
          build_sequence(TemplateKind::kUnderstanding, static_cast<int>(window_ids.size()),
                         fx.vocab, "", std::nullopt, fx.mc.decoder.max_positions);
      const auto gen = generate(model.decoder, prompt, soft, 20);
      total += qa_scores(fx.vocab.decode(gen.ids), w.target_text).f1;
      ++n;
    }
  }
  return total / static_cast<double>(n);
}

struct SharedRuns {
  std::optional<Fixture> fx;
  std::optional<E2llmModel<float>> reason_only;  // w_und = 0
  std::optional<E2llmModel<float>> joint;        // w_und = 0.3
};
SharedRuns g_runs;

bool criterion_overfit(std::string& detail) {
  g_runs.fx = make_fixture();
  Fixture& fx = *g_runs.fx;
  const auto t0 = std::chrono::steady_clock::now();
  auto model = make_model(fx.mc, fx.tc, fx.vocab);
  TrainResult r = train(model, fx.samples, {}, fx.mc, fx.tc, fx.vocab);
  const double loss = last_reason_loss(r);
  const double em = exact_match_rate(model, fx);
  const double mins =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  g_runs.reason_only = std::move(model);
  std::ostringstream os;
  os << "reasoning loss " << loss << " (< 0.05), exact match " << em * 100.0
     << "% (>= 90%), " << mins << " min (< 15)";
  detail = os.str();
  return loss < 0.05 && em >= 0.90 && mins < 15.0;
}

bool criterion_understanding(std::string& detail) {
  if (!g_runs.fx || !g_runs.reason_only) {
    detail = "skipped: overfit fixture unavailable";
    return false;
  }
  Fixture& fx = *g_runs.fx;
  TrainConfig tc = fx.tc;
  tc.w_und = 0.3;
  // The restatement task is prone to early mode collapse (the decoder learns
  // an unconditional restatement and stops attending to the chunk tokens), so
  // the joint run trains longer and gentler than the reasoning-only run.
  tc.steps = 8000;
  tc.lr = 1e-3;
  auto model = make_model(fx.mc, tc, fx.vocab);
  train(model, fx.samples, {}, fx.mc, tc, fx.vocab);
  const double with_und = restatement_f1(model, fx);
  const double without_und = restatement_f1(*g_runs.reason_only, fx);
  g_runs.joint = std::move(model);
  std::ostringstream os;
  os << "restatement F1 " << with_und << " with w_und=0.3 (>= 0.8) vs " << without_und
     << " with w_und=0 (strictly lower)";
  detail = os.str();
  return with_und >= 0.8 && without_und < with_und;
}

// ---------------------------------------------------------------------------
// Criterion 8: ablation plumbing.
// ---------------------------------------------------------------------------

bool tensors_equal(const Checkpoint& a, const Checkpoint& b, const std::string& prefix) {
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    if (a.tensors[i].first.rfind(prefix, 0) != 0) continue;
    const auto& x = a.tensors[i].second;
    const auto& y = b.tensors[i].second;
    if (!(x.array() == y.array()).all()) return false;
  }
  return true;
}

bool criterion_ablations(std::string& detail) {
  std::vector<Sample> data = {
      {"a", "the cat sat on the mat here. the dog ran far away now.", "who sat", "cat"},
      {"b", "red green blue colors here now. sun and moon in the sky.", "what shines", "sun"},
  };
  std::vector<std::string> corpus = {
      std::string(kTemplatePrefix) + kUnderstandingSuffix + kReasoningSuffix};
  for (const auto& s : data) {
    corpus.push_back(s.context);
    corpus.push_back(s.query);
    corpus.push_back(s.answer);
  }
  Vocab vocab = build_vocab(corpus, 256);

  ModelConfig mc;
  mc.encoder.layers = 1;
  mc.encoder.d_model = 8;
  mc.encoder.heads = 1;
  mc.encoder.max_positions = 32;
  mc.decoder.layers = 1;
  mc.decoder.d_model = 16;
  mc.decoder.heads = 1;
  mc.decoder.max_positions = 128;
  mc.chunker.max_chars = 28;
  TrainConfig tc;
  tc.steps = 4;
  tc.batch_size = 2;
  tc.eval_every = 0;
  tc.lora_rank_enc = 2;
  tc.lora_rank_dec = 2;

  // -encoder and -decoder leave the excluded component bitwise untouched
  for (const bool enc_off : {true, false}) {
    TrainConfig ab = tc;
    ab.train_encoder = !enc_off;
    ab.train_decoder = enc_off;
    auto model = make_model(mc, ab, vocab);
    const Checkpoint before = snapshot(model, "");
    train(model, data, {}, mc, ab, vocab);
    const Checkpoint after = snapshot(model, "");
    const std::string frozen = enc_off ? "encoder." : "decoder.";
    if (!tensors_equal(before, after, frozen)) {
      detail = "frozen " + frozen + " tensors moved during training";
      return false;
    }
  }

  // +overlap: consecutive spans share exactly the rewound suffix
  ChunkSpec olap = mc.chunker;
  olap.overlap_frac = 0.3;
  olap.breakpoint_chars.clear();
  const std::string wall(200, 'w');
  const auto chunks = chunk_text(wall, olap);
  if (chunks.size() < 3) {
    detail = "overlap produced too few chunks";
    return false;
  }
  for (std::size_t i = 1; i < chunks.size(); ++i) {
    const std::size_t prev_len = chunks[i - 1].char_end - chunks[i - 1].char_start;
    const std::size_t rewind = static_cast<std::size_t>(0.3 * static_cast<double>(prev_len));
    if (chunks[i].char_start != chunks[i - 1].char_end - rewind) {
      detail = "overlap span " + std::to_string(i) + " does not share the rewound suffix";
      return false;
    }
  }

  // adapter depth sweep trains without error
  for (int depth : {1, 2, 3}) {
    TrainConfig sw = tc;
    sw.adapter_layers = depth;
    auto model = make_model(mc, sw, vocab);
    try {
      train(model, data, {}, mc, sw, vocab);
    } catch (const std::exception& e) {
      detail = "adapter depth " + std::to_string(depth) + " failed: " + e.what();
      return false;
    }
  }
  detail = "frozen components bitwise stable; overlap spans exact; adapter depths 1/2/3 train";
  return true;
}

// ---------------------------------------------------------------------------
// Criterion 9: asymptotic separation plus the analytic cost model.
// ---------------------------------------------------------------------------

bool criterion_scaling(std::string& detail) {
  // boundary and convexity checks for the analytic model
  if (std::abs(attention_cost(1000, 100) - 100100.0) > 1e-9) {
    detail = "cost(1000, 100) != 100100";
    return false;
  }
  for (std::int64_t L : {100, 1000, 10000}) {
    for (std::int64_t c = 2; c < std::min<std::int64_t>(L, 200); ++c) {
      if (attention_cost(L, c - 1) - 2.0 * attention_cost(L, c) + attention_cost(L, c + 1) <
          -1e-6) {
        detail = "cost not convex at L=" + std::to_string(L) + ", C=" + std::to_string(c);
        return false;
      }
    }
  }

  // optimal_chunk_size vs exhaustive scan, every L up to 1e5
  for (std::int64_t L = 1; L <= 100000; ++L) {
    const double dl = static_cast<double>(L);
    const double l2 = dl * dl;
    std::int64_t best = 1;
    double best_cost = dl + l2;
    for (std::int64_t c = 2; c <= L; ++c) {
      const double dc = static_cast<double>(c);
      const double cost = dl * dc + l2 / (dc * dc);
      if (cost < best_cost) {
        best_cost = cost;
        best = c;
      }
    }
    if (optimal_chunk_size(L) != best) {
      detail = "optimal_chunk_size(" + std::to_string(L) + ") = " +
               std::to_string(optimal_chunk_size(L)) + ", exhaustive scan found " +
               std::to_string(best);
      return false;
    }
  }

  BenchConfig cfg;
  cfg.chunk_size = 128;
  cfg.repeats = 3;
  const ScalingResult r = run_scaling(cfg, {1024, 2048, 4096, 8192, 16384});
  std::ostringstream os;
  os << "baseline slope " << r.baseline_slope << " (>= 1.5), e2llm slope " << r.e2llm_slope
     << " (gap >= 0.4); optimal chunk exhaustive to 1e5";
  detail = os.str();
  return r.baseline_slope >= 1.5 && r.baseline_slope - r.e2llm_slope >= 0.4;
}

// ---------------------------------------------------------------------------
// Criterion 10: persistence round trip and post-reload generation identity.
// ---------------------------------------------------------------------------

bool criterion_persistence(std::string& detail) {
  if (!g_runs.fx || !g_runs.joint) {
    detail = "skipped: trained model unavailable";
    return false;
  }
  Fixture& fx = *g_runs.fx;
  E2llmModel<float>& model = *g_runs.joint;

  std::vector<std::string> before;
  for (const auto& s : fx.samples) before.push_back(answer_query(model, fx, s));

  const std::string path =
      (std::filesystem::temp_directory_path() / "e2llm_acceptance.ckpt").string();
  const Checkpoint saved = snapshot(model, "{}");
  save_checkpoint(saved, path);
  const Checkpoint loaded = load_checkpoint(path);
  std::filesystem::remove(path);

  if (loaded.tensors.size() != saved.tensors.size()) {
    detail = "tensor count changed across round trip";
    return false;
  }
  for (std::size_t i = 0; i < saved.tensors.size(); ++i) {
    if (loaded.tensors[i].first != saved.tensors[i].first ||
        !(loaded.tensors[i].second.array() == saved.tensors[i].second.array()).all()) {
      detail = "round trip not bit-exact at " + saved.tensors[i].first;
      return false;
    }
  }

  TrainConfig tc = fx.tc;
  tc.w_und = 0.3;
  auto fresh = make_model(fx.mc, tc, fx.vocab);
  restore(fresh, loaded);
  for (std::size_t i = 0; i < fx.samples.size(); ++i) {
    if (answer_query(fresh, fx, fx.samples[i]) != before[i]) {
      detail = "generation differs after reload on sample " + fx.samples[i].id;
      return false;
    }
  }
  detail = "bit-exact tensors; 32/32 generations identical after reload";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::string&)> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient suite", criterion_gradient_suite},
      {2, "end-to-end gradient flow", criterion_end_to_end_gradients},
      {3, "chunker invariants", criterion_chunker},
      {4, "metric oracle equivalence", criterion_metric_oracles},
      {5, "published g-mean arithmetic", criterion_g_mean},
      {6, "reasoning overfit", criterion_overfit},
      {7, "understanding restatement", criterion_understanding},
      {8, "ablation wiring", criterion_ablations},
      {9, "scaling separation", criterion_scaling},
      {10, "persistence", criterion_persistence},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    std::string detail;
    bool ok = false;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %2d. %s: %s (%.1fs)\n", ok ? "PASS" : "FAIL", c.id, c.name, detail.c_str(),
                secs);
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
