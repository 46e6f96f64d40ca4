// Command-line front end: chunk inspection, training, evaluation, generation,
// and the scaling benchmark.

#include "e2llm/bench.hpp"
#include "e2llm/cost.hpp"
#include "e2llm/metrics.hpp"
#include "e2llm/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace e2llm;

namespace {

// Exit codes: 0 success, 2 config/schema, 3 data, 4 divergence, 5 capacity.
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitCapacity = 5;

int env_threads() {
  const char* v = std::getenv("E2LLM_THREADS");
  if (!v) return 1;
  const int n = std::atoi(v);
  return n > 0 ? n : 1;
}

json default_config() {
  return json{
      {"model",
       {{"encoder", {{"layers", 2}, {"d_model", 32}, {"heads", 2}, {"max_positions", 64}}},
        {"decoder", {{"layers", 2}, {"d_model", 64}, {"heads", 2}, {"max_positions", 256}}},
        {"adapter_hidden", 0}}},
      {"chunker", {{"max_chars", 512}, {"overlap_frac", 0.0}, {"breakpoints", ".\n?!"}}},
      {"training",
       {{"w_und", 0.3},       {"window_chunks", 2},  {"lr", 3e-3},
        {"steps", 500},       {"batch_size", 4},     {"seed", 42},
        {"lora_rank_enc", 8}, {"lora_rank_dec", 8},  {"adapter_layers", 2},
        {"train_encoder", true}, {"train_decoder", true}, {"use_overlap", false},
        {"encoder_mode", "lora"}, {"joint_mode", "alternate"}, {"eval_every", 100},
        {"split_ratio", 0.95}}},
      {"eval", {{"task", "qa"}, {"stopword_file", ""}}},
      {"paths", {{"data", ""}, {"vocab", ""}, {"checkpoint", ""}, {"output", ""}}},
      {"vocab_size", 2048}};
}

void check_schema(const json& value, const json& reference, const std::string& where) {
  if (!value.is_object()) return;
  for (auto it = value.begin(); it != value.end(); ++it) {
    if (!reference.contains(it.key()))
      throw std::runtime_error("config: unknown key '" + where + it.key() + "'");
    if (reference[it.key()].is_object())
      check_schema(it.value(), reference[it.key()], where + it.key() + ".");
  }
}

json merge(json base, const json& overlay) {
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object())
      base[it.key()] = merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
  return base;
}

void apply_set(json& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw std::runtime_error("--set expects key=value: " + kv);
  const std::string key = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (...) {
    value = raw;
  }
  json* node = &cfg;
  std::istringstream parts(key);
  std::string part, prev;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) node = &(*node)[path[i]];
  (*node)[path.back()] = value;
}

StackConfig stack_from_json(const json& j) {
  StackConfig c;
  c.layers = j.value("layers", c.layers);
  c.d_model = j.value("d_model", c.d_model);
  c.heads = j.value("heads", c.heads);
  c.max_positions = j.value("max_positions", c.max_positions);
  return c;
}

ModelConfig model_from_json(const json& cfg) {
  ModelConfig mc;
  mc.encoder = stack_from_json(cfg["model"]["encoder"]);
  mc.decoder = stack_from_json(cfg["model"]["decoder"]);
  mc.adapter_hidden = cfg["model"].value("adapter_hidden", 0);
  mc.chunker.max_chars = cfg["chunker"].value("max_chars", 512);
  mc.chunker.overlap_frac = cfg["chunker"].value("overlap_frac", 0.0);
  const std::string bp = cfg["chunker"].value("breakpoints", ".\n?!");
  mc.chunker.breakpoint_chars.clear();
  for (char32_t c : utf8_decode(bp)) mc.chunker.breakpoint_chars.insert(c);
  return mc;
}

TrainConfig train_from_json(const json& cfg) {
  const json& t = cfg["training"];
  TrainConfig tc;
  tc.w_und = t.value("w_und", tc.w_und);
  tc.window_chunks = t.value("window_chunks", tc.window_chunks);
  tc.lr = t.value("lr", tc.lr);
  tc.steps = t.value("steps", tc.steps);
  tc.batch_size = t.value("batch_size", tc.batch_size);
  tc.seed = t.value("seed", tc.seed);
  tc.lora_rank_enc = t.value("lora_rank_enc", tc.lora_rank_enc);
  tc.lora_rank_dec = t.value("lora_rank_dec", tc.lora_rank_dec);
  tc.adapter_layers = t.value("adapter_layers", tc.adapter_layers);
  tc.train_encoder = t.value("train_encoder", tc.train_encoder);
  tc.train_decoder = t.value("train_decoder", tc.train_decoder);
  tc.use_overlap = t.value("use_overlap", tc.use_overlap);
  tc.encoder_mode = t.value("encoder_mode", tc.encoder_mode);
  tc.joint_mode = t.value("joint_mode", tc.joint_mode);
  tc.eval_every = t.value("eval_every", tc.eval_every);
  tc.split_ratio = t.value("split_ratio", tc.split_ratio);
  return tc;
}

json load_config(const std::string& path, const std::vector<std::string>& sets,
                 std::optional<std::uint64_t> seed_override) {
  json cfg = default_config();
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot read " + path);
    json user = json::parse(f);
    check_schema(user, cfg, "");
    cfg = merge(cfg, user);
  }
  for (const auto& kv : sets) apply_set(cfg, kv);
  check_schema(cfg, default_config(), "");
  if (seed_override) cfg["training"]["seed"] = *seed_override;
  return cfg;
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

struct LoadedModel {
  json cfg;
  ModelConfig mc;
  TrainConfig tc;
  Vocab vocab;
  E2llmModel<float> model;
};

LoadedModel load_model(const std::string& ckpt_path, const std::string& vocab_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  LoadedModel lm;
  json meta = json::parse(ckpt.meta_json);
  lm.cfg = meta["config"];
  lm.mc = model_from_json(lm.cfg);
  lm.tc = train_from_json(lm.cfg);
  std::string vp = vocab_path;
  if (vp.empty()) vp = (fs::path(ckpt_path).parent_path() / "vocab.txt").string();
  lm.vocab = Vocab::load(vp);
  const std::string want = meta.value("vocab_hash", "");
  const std::string got = hash_hex(lm.vocab.content_hash());
  if (!want.empty() && want != got)
    throw std::runtime_error("vocab mismatch: checkpoint expects hash " + want +
                             ", file has hash " + got);
  lm.model = make_model(lm.mc, lm.tc, lm.vocab);
  restore(lm.model, ckpt);
  return lm;
}

std::string generate_answer(LoadedModel& lm, const std::string& context, const std::string& query,
                            int max_new, bool show_chunks) {
  const auto chunks = chunk_text(context, lm.mc.chunker);
  if (show_chunks) {
    for (const auto& c : chunks)
      std::cout << "# chunk " << c.index << " [" << c.char_start << "," << c.char_end << ") len "
                << (c.char_end - c.char_start) << "\n";
  }
  const auto ids = chunk_token_ids(chunks, lm.vocab, lm.model.encoder.cfg.max_positions);
  Mat<float> soft = lm.model.chunk_tokens_values(ids, env_threads());
  MixedSequence prompt =
      build_sequence(TemplateKind::kReasoning, static_cast<int>(ids.size()), lm.vocab, query,
                     std::nullopt, lm.model.decoder.cfg.max_positions);
  auto gen = generate(lm.model.decoder, prompt, soft, max_new);
  return lm.vocab.decode(gen.ids);
}

int cmd_chunk(const std::string& input, int max_chars, double overlap, bool as_json) {
  std::ifstream f(input, std::ios::binary);
  if (!f) {
    std::cerr << "error: cannot read " << input << "\n";
    return kExitData;
  }
  std::stringstream buf;
  buf << f.rdbuf();
  ChunkSpec spec;
  spec.max_chars = static_cast<std::size_t>(max_chars);
  spec.overlap_frac = overlap;
  const auto chunks = chunk_text(buf.str(), spec);
  if (as_json) {
    json out = json::array();
    for (const auto& c : chunks)
      out.push_back({{"index", c.index},
                     {"char_start", c.char_start},
                     {"char_end", c.char_end},
                     {"text", c.text}});
    std::cout << out.dump(2) << "\n";
  } else if (chunks.empty()) {
    std::cout << "0 chunks\n";
  } else {
    for (const auto& c : chunks) {
      const auto cps = utf8_decode(c.text);
      const std::string last = cps.empty() ? "" : utf8_encode(cps, cps.size() - 1, cps.size());
      std::cout << c.index << "\t" << c.char_start << "\t" << c.char_end << "\t"
                << (c.char_end - c.char_start) << "\t"
                << (last == "\n" ? std::string("\\n") : last) << "\n";
    }
  }
  return 0;
}

int cmd_train(const json& cfg, const std::string& data_path, const std::string& out_dir) {
  auto samples = load_jsonl(data_path);
  if (samples.empty()) {
    std::cerr << "error: dataset is empty\n";
    return kExitData;
  }
  const ModelConfig mc = model_from_json(cfg);
  const TrainConfig tc = train_from_json(cfg);

  fs::create_directories(out_dir);
  std::ofstream(fs::path(out_dir) / "resolved_config.json") << cfg.dump(2) << "\n";

  // Vocab covers the dataset plus the prompt templates.
  std::vector<std::string> corpus;
  corpus.push_back(std::string(kTemplatePrefix) + kUnderstandingSuffix + kReasoningSuffix);
  for (const auto& s : samples) {
    corpus.push_back(s.context);
    corpus.push_back(s.query);
    corpus.push_back(s.answer);
  }
  Vocab vocab = build_vocab(corpus, cfg.value("vocab_size", 2048));
  vocab.save((fs::path(out_dir) / "vocab.txt").string());

  auto [train_set, val_set] = split_dataset(samples, tc.split_ratio, tc.seed);
  auto model = make_model(mc, tc, vocab);

  json meta = {{"config", cfg}, {"vocab_hash", hash_hex(vocab.content_hash())}};
  TrainResult result = train(model, train_set, val_set, mc, tc, vocab);
  result.final_ckpt.meta_json = meta.dump();
  result.best_ckpt.meta_json = meta.dump();
  save_checkpoint(result.final_ckpt, (fs::path(out_dir) / "final.ckpt").string());
  save_checkpoint(result.best_ckpt, (fs::path(out_dir) / "best.ckpt").string());
  write_metrics_csv(result.metrics, (fs::path(out_dir) / "metrics.csv").string());
  std::cout << "trained " << tc.steps << " steps; best validation loss " << result.best_val_loss
            << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& vocab_path, const std::string& data_path,
             const std::string& task, const std::string& out_path, int max_new) {
  std::ifstream f(data_path);
  if (!f) {
    std::cerr << "error: cannot read " << data_path << "\n";
    return kExitData;
  }
  std::optional<LoadedModel> lm;
  if (!ckpt.empty()) lm.emplace(load_model(ckpt, vocab_path));

  json report;
  report["task"] = task;
  report["samples"] = json::array();
  int warnings = 0;
  double p_sum = 0, r_sum = 0, f_sum = 0, r1_sum = 0, r2_sum = 0, rl_sum = 0, g_sum = 0;
  std::size_t n = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line);
    std::string id = j.value("id", "line" + std::to_string(lineno));
    std::string reference, candidate;
    if (j.contains("candidate")) {
      candidate = j.value("candidate", "");
      reference = j.value("reference", "");
    } else {
      if (!lm) throw std::runtime_error("sample " + id + ": no candidate field and no --ckpt");
      reference = j.value("answer", "");
      candidate = generate_answer(*lm, j.value("context", ""), j.value("query", ""), max_new,
                                  false);
    }
    json row = {{"id", id}, {"candidate", candidate}, {"reference", reference}};
    if (task == "qa") {
      const QAScores s = qa_scores(candidate, reference);
      if (s.warning || candidate.empty()) ++warnings;
      row["precision"] = s.precision;
      row["recall"] = s.recall;
      row["f1"] = s.f1;
      p_sum += s.precision;
      r_sum += s.recall;
      f_sum += s.f1;
    } else {
      const RougeScores s = rouge_all(candidate, reference);
      if (candidate.empty()) ++warnings;
      row["rouge1"] = s.r1;
      row["rouge2"] = s.r2;
      row["rougeL"] = s.rl;
      row["g_mean"] = s.g_mean;
      r1_sum += s.r1;
      r2_sum += s.r2;
      rl_sum += s.rl;
      g_sum += s.g_mean;
    }
    report["samples"].push_back(row);
    ++n;
  }
  if (n == 0) {
    std::cerr << "error: no samples\n";
    return kExitData;
  }
  const double dn = static_cast<double>(n);
  if (task == "qa")
    report["aggregate"] = {{"precision", p_sum / dn}, {"recall", r_sum / dn}, {"f1", f_sum / dn}};
  else
    report["aggregate"] = {{"rouge1", r1_sum / dn},
                           {"rouge2", r2_sum / dn},
                           {"rougeL", rl_sum / dn},
                           {"g_mean", g_sum / dn}};
  report["warnings"] = warnings;
  if (lm) report["config"] = lm->cfg;
  std::ofstream out(out_path);
  out << report.dump(2) << "\n";
  std::cout << "evaluated " << n << " samples -> " << out_path << "\n";
  return 0;
}

int cmd_bench(const std::string& lengths_csv, int chunk_size, int repeats,
              const std::string& out_path, const std::string& summary_path) {
  std::vector<std::int64_t> lengths;
  std::istringstream parts(lengths_csv);
  std::string part;
  while (std::getline(parts, part, ',')) lengths.push_back(std::stoll(part));
  BenchConfig cfg;
  cfg.chunk_size = chunk_size;
  cfg.repeats = repeats;
  cfg.threads = env_threads();
  ScalingResult r = run_scaling(cfg, lengths);
  write_bench_csv(r, out_path);
  const std::string summary = bench_summary_json(r);
  if (!summary_path.empty()) std::ofstream(summary_path) << summary << "\n";
  std::cout << summary << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chunk-compressed long-context language model toolkit"};
  app.require_subcommand(1);

  // chunk
  auto* chunk = app.add_subcommand("chunk", "Inspect chunker output for a file");
  std::string chunk_input;
  int chunk_max = 512;
  double chunk_overlap = 0.0;
  bool chunk_json = false;
  chunk->add_option("--input", chunk_input)->required();
  chunk->add_option("--max-chars", chunk_max);
  chunk->add_option("--overlap", chunk_overlap);
  chunk->add_flag("--json", chunk_json);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train on a JSONL dataset");
  std::string train_config, train_data, train_out;
  std::vector<std::string> train_sets;
  std::optional<std::uint64_t> seed_override;
  std::uint64_t seed_value = 0;
  train_cmd->add_option("--config", train_config);
  train_cmd->add_option("--data", train_data)->required();
  train_cmd->add_option("--out", train_out)->required();
  train_cmd->add_option("--set", train_sets);
  auto* seed_opt = train_cmd->add_option("--seed", seed_value);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate generations or candidates");
  std::string eval_ckpt, eval_vocab, eval_data, eval_task = "qa", eval_out = "report.json";
  int eval_max_new = 16;
  eval_cmd->add_option("--ckpt", eval_ckpt);
  eval_cmd->add_option("--vocab", eval_vocab);
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--task", eval_task)->check(CLI::IsMember({"qa", "summ"}));
  eval_cmd->add_option("--out", eval_out);
  eval_cmd->add_option("--max-new", eval_max_new);

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Answer a query over a context file");
  std::string gen_ckpt, gen_vocab, gen_context, gen_query;
  int gen_max_new = 16;
  bool gen_show_chunks = false;
  gen_cmd->add_option("--ckpt", gen_ckpt)->required();
  gen_cmd->add_option("--vocab", gen_vocab);
  gen_cmd->add_option("--context", gen_context)->required();
  gen_cmd->add_option("--query", gen_query)->required();
  gen_cmd->add_option("--max-new", gen_max_new);
  gen_cmd->add_flag("--show-chunks", gen_show_chunks);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Scaling benchmark vs full attention");
  std::string bench_lengths = "1024,2048,4096,8192";
  int bench_chunk = 128, bench_repeats = 3;
  std::string bench_out = "bench.csv", bench_summary = "bench_summary.json";
  bench_cmd->add_option("--lengths", bench_lengths);
  bench_cmd->add_option("--chunk-size", bench_chunk);
  bench_cmd->add_option("--repeats", bench_repeats);
  bench_cmd->add_option("--out", bench_out);
  bench_cmd->add_option("--summary", bench_summary);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*chunk) return cmd_chunk(chunk_input, chunk_max, chunk_overlap, chunk_json);
    if (*train_cmd) {
      if (seed_opt->count() > 0) seed_override = seed_value;
      json cfg;
      try {
        cfg = load_config(train_config, train_sets, seed_override);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
      }
      return cmd_train(cfg, train_data, train_out);
    }
    if (*eval_cmd)
      return cmd_eval(eval_ckpt, eval_vocab, eval_data, eval_task, eval_out, eval_max_new);
    if (*gen_cmd) {
      LoadedModel lm = load_model(gen_ckpt, gen_vocab);
      std::ifstream cf(gen_context, std::ios::binary);
      if (!cf) {
        std::cerr << "error: cannot read " << gen_context << "\n";
        return kExitData;
      }
      std::stringstream buf;
      buf << cf.rdbuf();
      std::cout << generate_answer(lm, buf.str(), gen_query, gen_max_new, gen_show_chunks)
                << "\n";
      return 0;
    }
    if (*bench_cmd)
      return cmd_bench(bench_lengths, bench_chunk, bench_repeats, bench_out, bench_summary);
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    std::cerr << "error: " << msg << "\n";
    return msg.find("window exceeded") != std::string::npos ? kExitCapacity : kExitConfig;
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    std::cerr << "error: " << msg << "\n";
    return msg.find("window exceeded") != std::string::npos ? kExitCapacity : kExitData;
  }
  return 0;
}
