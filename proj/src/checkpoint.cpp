#include "e2llm/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace e2llm {

namespace {

constexpr char kMagic[4] = {'E', '2', 'C', 'K'};
constexpr std::uint8_t kDtypeF32 = 0;

template <class T>
void write_le(std::ofstream& f, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  f.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T read_le(std::ifstream& f) {
  unsigned char buf[sizeof(T)];
  f.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!f) throw CheckpointError(CheckpointError::Kind::kTruncated, "checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointError::Kind::kIo, "cannot write " + path);
  f.write(kMagic, 4);
  write_le<std::uint32_t>(f, kCheckpointVersion);
  write_le<std::uint32_t>(f, static_cast<std::uint32_t>(ckpt.meta_json.size()));
  f.write(ckpt.meta_json.data(), static_cast<std::streamsize>(ckpt.meta_json.size()));
  write_le<std::uint32_t>(f, static_cast<std::uint32_t>(ckpt.tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, m] : ckpt.tensors) {
    write_le<std::uint32_t>(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint8_t>(f, kDtypeF32);
    write_le<std::uint8_t>(f, 2);
    write_le<std::uint64_t>(f, static_cast<std::uint64_t>(m.rows()));
    write_le<std::uint64_t>(f, static_cast<std::uint64_t>(m.cols()));
    write_le<std::uint64_t>(f, offset);
    offset += static_cast<std::uint64_t>(m.size()) * 4;
  }
  for (const auto& [name, m] : ckpt.tensors) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const float v = m(i, j);
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        write_le<std::uint32_t>(f, bits);
      }
  }
  if (!f) throw CheckpointError(CheckpointError::Kind::kIo, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointError::Kind::kIo, "cannot read " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError(CheckpointError::Kind::kBadMagic, "bad magic in " + path);
  const auto version = read_le<std::uint32_t>(f);
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointError::Kind::kBadVersion,
                          "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto meta_len = read_le<std::uint32_t>(f);
  ckpt.meta_json.resize(meta_len);
  f.read(ckpt.meta_json.data(), meta_len);
  if (!f) throw CheckpointError(CheckpointError::Kind::kTruncated, "checkpoint truncated");
  const auto count = read_le<std::uint32_t>(f);
  struct Entry {
    std::string name;
    std::uint64_t rows, cols, offset;
  };
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const auto name_len = read_le<std::uint32_t>(f);
    e.name.resize(name_len);
    f.read(e.name.data(), name_len);
    if (!f) throw CheckpointError(CheckpointError::Kind::kTruncated, "checkpoint truncated");
    const auto dtype = read_le<std::uint8_t>(f);
    const auto rank = read_le<std::uint8_t>(f);
    if (dtype != kDtypeF32 || rank != 2)
      throw CheckpointError(CheckpointError::Kind::kBadVersion, "unsupported tensor layout");
    e.rows = read_le<std::uint64_t>(f);
    e.cols = read_le<std::uint64_t>(f);
    e.offset = read_le<std::uint64_t>(f);
    entries.push_back(std::move(e));
  }
  const std::streampos payload_start = f.tellg();
  for (const auto& e : entries) {
    f.seekg(payload_start + static_cast<std::streamoff>(e.offset));
    Mat<float> m(static_cast<Eigen::Index>(e.rows), static_cast<Eigen::Index>(e.cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const auto bits = read_le<std::uint32_t>(f);
        float v;
        std::memcpy(&v, &bits, 4);
        m(i, j) = v;
      }
    ckpt.tensors.emplace_back(e.name, std::move(m));
  }
  return ckpt;
}

}  // namespace e2llm
