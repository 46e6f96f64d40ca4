#pragma once

#include "e2llm/checkpoint.hpp"
#include "e2llm/chunker.hpp"
#include "e2llm/pipeline.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace e2llm {

struct Sample {
  std::string id;
  std::string context;
  std::string query;
  std::string answer;
};

std::vector<Sample> load_jsonl(const std::string& path);

/// Deterministic seeded shuffle + split; the two parts partition the input.
std::pair<std::vector<Sample>, std::vector<Sample>> split_dataset(std::vector<Sample> samples,
                                                                  double ratio,
                                                                  std::uint64_t seed);

/// One restatement target: a contiguous window of chunk ordinals whose source
/// text (overlap deduplicated at character granularity) is the supervised
/// output.
struct UnderstandingExample {
  std::size_t first_chunk = 0;
  std::size_t n_chunks = 0;
  std::string target_text;
};

std::vector<UnderstandingExample> build_understanding_examples(const std::string& context,
                                                               const ChunkSpec& spec,
                                                               std::size_t window_chunks);

/// L = L_reason + w_und * L_und.
double joint_loss(double reason_loss, double und_loss, double w_und);

struct TrainConfig {
  double w_und = 0.3;
  std::size_t window_chunks = 2;
  double lr = 3e-3;
  int steps = 500;
  int batch_size = 4;
  std::uint64_t seed = 42;
  int lora_rank_enc = 8;
  int lora_rank_dec = 8;
  int adapter_layers = 2;
  bool train_encoder = true;
  bool train_decoder = true;
  bool use_overlap = false;
  std::string encoder_mode = "lora";  // or "last_layers"
  std::string joint_mode = "alternate";  // or "sum"
  int eval_every = 100;
  double split_ratio = 0.95;
};

struct ModelConfig {
  StackConfig encoder;
  StackConfig decoder;
  int adapter_hidden = 0;  // defaults to max(d_enc, d_dec)
  ChunkSpec chunker;
};

struct StepMetric {
  int step = 0;
  std::string task;
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<StepMetric> metrics;
  Checkpoint final_ckpt;
  Checkpoint best_ckpt;
  double best_val_loss = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int step, const std::string& msg) : std::runtime_error(msg), step(step) {}
  int step;
};

/// Build a float model from config (LoRA ranks and adapter depth come from
/// the train config) with trainability flags applied.
E2llmModel<float> make_model(const ModelConfig& mc, const TrainConfig& tc, const Vocab& vocab);

/// Reasoning-task sequence for one sample (all chunk tokens + query + answer).
/// Errors name the offending sample id.
MixedSequence reasoning_sequence(const Sample& s, const ModelConfig& mc, const Vocab& vocab,
                                 std::size_t n_chunks);

/// Joint optimization of the understanding and reasoning tasks.
TrainResult train(E2llmModel<float>& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const ModelConfig& mc,
                  const TrainConfig& tc, const Vocab& vocab);

Checkpoint snapshot(E2llmModel<float>& model, const std::string& meta_json);
void restore(E2llmModel<float>& model, const Checkpoint& ckpt);

void write_metrics_csv(const std::vector<StepMetric>& metrics, const std::string& path);

}  // namespace e2llm
