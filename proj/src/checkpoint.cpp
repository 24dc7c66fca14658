#include "sit/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sit {

uint32_t crc32(const uint8_t* data, size_t n) {
  static uint32_t table[256];
  static bool ready = false;
  if (!ready) {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    ready = true;
  }
  uint32_t crc = 0xFFFFFFFFu;
  for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

namespace {

constexpr char kMagic[4] = {'S', 'I', 'T', 'C'};
constexpr uint32_t kVersion = 1;

struct ByteWriter {
  std::vector<uint8_t> buf;

  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    buf.insert(buf.end(), s.begin(), s.end());
  }
  void floats(const std::vector<float>& v) {
    u64(v.size());
    for (float x : v) f32(x);
  }
};

struct ByteReader {
  const uint8_t* p;
  size_t left;
  std::string path;

  void need(size_t n) const {
    if (left < n) throw std::runtime_error(path + ": checkpoint payload truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    left -= n;
    return s;
  }
  std::vector<float> floats() {
    const uint64_t n = u64();
    need(n * 4);
    std::vector<float> v(n);
    for (uint64_t i = 0; i < n; ++i) v[i] = f32();
    return v;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config, const std::vector<Parameter>& params,
                     const TrainState* state) {
  ByteWriter w;
  w.i64(config.image_size);
  w.i64(config.channels);
  w.i64(config.patch_size);
  w.i64(config.dim);
  w.i64(config.depth);
  w.i64(config.num_heads);
  w.i64(config.mlp_ratio);
  w.i64(config.contrastive_dim);
  w.i64(config.head_classes);
  w.u32(state ? 1u : 0u);
  w.u64(params.size());
  for (const Parameter& p : params) {
    w.str(p.name);
    w.u32(static_cast<uint32_t>(p.tensor.rank()));
    for (int i = 0; i < p.tensor.rank(); ++i) w.i64(p.tensor.dim(i));
    w.floats(p.tensor.values());
  }
  if (state) {
    w.i64(state->epoch);
    w.i64(state->step);
    w.i64(state->adam_t);
    w.str(state->rng_state);
    w.u64(state->moments.size());
    for (const MomentEntry& m : state->moments) {
      w.str(m.name);
      w.floats(m.m);
      w.floats(m.v);
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(kMagic, 4);
  ByteWriter head;
  head.u32(kVersion);
  head.u64(w.buf.size());
  out.write(reinterpret_cast<const char*>(head.buf.data()), static_cast<std::streamsize>(head.buf.size()));
  out.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
  ByteWriter tail;
  tail.u32(crc32(w.buf.data(), w.buf.size()));
  out.write(reinterpret_cast<const char*>(tail.buf.data()), 4);
  if (!out) throw std::runtime_error("short write on " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<uint8_t> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() < 20 || std::memcmp(raw.data(), kMagic, 4) != 0) {
    throw std::runtime_error(path + ": not a checkpoint file");
  }
  ByteReader head{raw.data() + 4, raw.size() - 4, path};
  const uint32_t version = head.u32();
  if (version != kVersion) {
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const uint64_t payload_len = head.u64();
  if (raw.size() != 4 + 12 + payload_len + 4) {
    throw std::runtime_error(path + ": checkpoint length does not match its header");
  }
  const uint8_t* payload = raw.data() + 16;
  ByteReader tail{payload + payload_len, 4, path};
  const uint32_t stored_crc = tail.u32();
  if (crc32(payload, payload_len) != stored_crc) {
    throw std::runtime_error(path + ": checksum mismatch, file is corrupt");
  }
  ByteReader r{payload, payload_len, path};
  LoadedCheckpoint ck;
  ck.config.image_size = r.i64();
  ck.config.channels = r.i64();
  ck.config.patch_size = r.i64();
  ck.config.dim = r.i64();
  ck.config.depth = r.i64();
  ck.config.num_heads = r.i64();
  ck.config.mlp_ratio = r.i64();
  ck.config.contrastive_dim = r.i64();
  ck.config.head_classes = r.i64();
  const bool has_state = r.u32() != 0;
  const uint64_t n_params = r.u64();
  ck.params.reserve(n_params);
  for (uint64_t i = 0; i < n_params; ++i) {
    Parameter p;
    p.name = r.str();
    const uint32_t rank = r.u32();
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = r.i64();
    std::vector<float> values = r.floats();
    if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
      throw std::runtime_error(path + ": parameter " + p.name + " data does not match its shape");
    }
    p.tensor = Tensor(std::move(shape), std::move(values));
    ck.params.push_back(std::move(p));
  }
  if (has_state) {
    ck.has_state = true;
    ck.state.epoch = r.i64();
    ck.state.step = r.i64();
    ck.state.adam_t = r.i64();
    ck.state.rng_state = r.str();
    const uint64_t n_moments = r.u64();
    for (uint64_t i = 0; i < n_moments; ++i) {
      MomentEntry m;
      m.name = r.str();
      m.m = r.floats();
      m.v = r.floats();
      ck.state.moments.push_back(std::move(m));
    }
  }
  if (r.left != 0) throw std::runtime_error(path + ": trailing bytes in checkpoint payload");
  return ck;
}

void apply_parameters(const std::vector<Parameter>& loaded, std::vector<Parameter>& target) {
  if (loaded.size() != target.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(loaded.size()) + " parameters, model has " +
                             std::to_string(target.size()));
  }
  for (size_t i = 0; i < target.size(); ++i) {
    const Parameter* src = nullptr;
    for (const Parameter& cand : loaded) {
      if (cand.name == target[i].name) {
        src = &cand;
        break;
      }
    }
    if (!src) throw std::runtime_error("checkpoint is missing parameter " + target[i].name);
    if (src->tensor.shape() != target[i].tensor.shape()) {
      throw std::runtime_error("checkpoint parameter " + target[i].name + " has shape " +
                               shape_str(src->tensor.shape()) + " but the model expects " +
                               shape_str(target[i].tensor.shape()));
    }
    target[i].tensor.values() = src->tensor.values();
  }
}

}  // namespace sit
