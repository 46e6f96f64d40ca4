#pragma once

#include "e2llm/tensor.hpp"

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace e2llm {

/// Named float32 tensor table plus a JSON metadata blob (resolved config and
/// vocab hash), persisted to a single file. Round-trips bit-exactly.
struct Checkpoint {
  std::vector<std::pair<std::string, Mat<float>>> tensors;
  std::string meta_json;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kBadMagic, kBadVersion, kTruncated, kIo };
  CheckpointError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
  Kind kind;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace e2llm
