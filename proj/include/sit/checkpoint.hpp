#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sit/model.hpp"
#include "sit/tensor.hpp"

namespace sit {

// CRC-32 (IEEE, reflected). crc32("123456789") == 0xCBF43926.
uint32_t crc32(const uint8_t* data, size_t n);

// Adam first/second moments for one parameter, keyed by its name.
struct MomentEntry {
  std::string name;
  std::vector<float> m, v;
};

// Everything beyond the weights needed to resume a run bit-exactly.
struct TrainState {
  int64_t epoch = 0;
  int64_t step = 0;
  int64_t adam_t = 0;
  std::string rng_state;
  std::vector<MomentEntry> moments;
};

struct LoadedCheckpoint {
  ModelConfig config;
  std::vector<Parameter> params;
  bool has_state = false;
  TrainState state;
};

// Binary container: "SITC" magic, u32 version, u64 payload length, payload,
// u32 CRC-32 of the payload. All integers little-endian, tensor data float32.
void save_checkpoint(const std::string& path, const ModelConfig& config, const std::vector<Parameter>& params,
                     const TrainState* state = nullptr);

LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies loaded values into the target parameters. Both sides must carry
// exactly the same names and shapes; any mismatch is reported by name.
void apply_parameters(const std::vector<Parameter>& loaded, std::vector<Parameter>& target);

}  // namespace sit
