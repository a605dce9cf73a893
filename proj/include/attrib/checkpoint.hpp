#pragma once

#include <cstdint>
#include <string>

#include "attrib/config.hpp"
#include "attrib/model.hpp"

namespace attrib {

// 64-bit FNV-1a over raw bytes; fingerprints tokenizer files.
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64_file(const std::string& path);

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMeta {
  ModelConfig model_config;
  TrainConfig train_config;
  std::string tokenizer_mode;
  std::uint64_t vocab_fingerprint = 0;
  bool has_subword = false;
};

// Checkpoint directory layout:
//   manifest.json  - format version, configs, tokenizer fingerprint, array
//                    table (name/shape/offset/length) and the blob checksum
//   params.bin     - little-endian IEEE-754 float32 arrays, concatenated in
//                    manifest order
//   vocab.txt      - copy of the tokenizer vocabulary (when supplied)
//   subword.tsv    - copy of the subword model (subword mode only)
// Writes go to a temporary directory followed by an atomic rename.
// Training happens in float64; parameters are rounded to float32 here, so
// save -> load -> save is byte-identical.
void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::string& dir,
                     const std::string& vocab_file_src = "",
                     const std::string& subword_file_src = "");

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
  std::string vocab_path;    // path of the embedded copy, empty if absent
  std::string subword_path;
};

// Validates the format version, the array table against the blob, and the
// blob checksum; refuses fingerprint mismatches against the embedded vocab.
LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace attrib
