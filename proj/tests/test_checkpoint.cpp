#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "sit/checkpoint.hpp"
#include "sit/model.hpp"

using namespace sit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("sit_ckpt_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int counter;
};
int TempDir::counter = 0;

ModelConfig small_config() {
  ModelConfig c;
  c.image_size = 8;
  c.patch_size = 4;
  c.dim = 8;
  c.depth = 1;
  c.num_heads = 2;
  c.mlp_ratio = 2;
  c.contrastive_dim = 4;
  return c;
}

}  // namespace

TEST_CASE("crc32 reference vector") {
  const char* s = "123456789";
  CHECK(crc32(reinterpret_cast<const uint8_t*>(s), 9) == 0xCBF43926u);
  CHECK(crc32(nullptr, 0) == 0x0u);
}

TEST_CASE("checkpoint round trip preserves weights, config and train state") {
  TempDir tmp;
  ModelConfig cfg = small_config();
  SiTModel model(cfg, 77);
  TrainState state;
  state.epoch = 3;
  state.step = 123;
  state.adam_t = 123;
  state.rng_state = "12345 678 0 1 abcd";
  state.moments.push_back({"patch_embed.weight", std::vector<float>(8, 0.5f), std::vector<float>(8, 0.25f)});
  const std::string f = tmp.file("model.ckpt");
  save_checkpoint(f, cfg, model.parameters(), &state);

  LoadedCheckpoint ck = load_checkpoint(f);
  CHECK(ck.config.image_size == cfg.image_size);
  CHECK(ck.config.dim == cfg.dim);
  CHECK(ck.config.head_classes == 0);
  REQUIRE(ck.params.size() == model.parameters().size());
  for (size_t i = 0; i < ck.params.size(); ++i) {
    CHECK(ck.params[i].name == model.parameters()[i].name);
    CHECK(ck.params[i].tensor.shape() == model.parameters()[i].tensor.shape());
    CHECK(std::memcmp(ck.params[i].tensor.data(), model.parameters()[i].tensor.data(),
                      sizeof(float) * static_cast<size_t>(ck.params[i].tensor.numel())) == 0);
  }
  REQUIRE(ck.has_state);
  CHECK(ck.state.epoch == 3);
  CHECK(ck.state.step == 123);
  CHECK(ck.state.adam_t == 123);
  CHECK(ck.state.rng_state == state.rng_state);
  REQUIRE(ck.state.moments.size() == 1);
  CHECK(ck.state.moments[0].name == "patch_embed.weight");
  CHECK(ck.state.moments[0].m == state.moments[0].m);
  CHECK(ck.state.moments[0].v == state.moments[0].v);
}

TEST_CASE("checkpoint without state and re-application to a fresh model") {
  TempDir tmp;
  ModelConfig cfg = small_config();
  SiTModel source(cfg, 101);
  const std::string f = tmp.file("weights.ckpt");
  save_checkpoint(f, cfg, source.parameters(), nullptr);

  LoadedCheckpoint ck = load_checkpoint(f);
  CHECK_FALSE(ck.has_state);

  SiTModel other(cfg, 202);
  apply_parameters(ck.params, other.parameters());
  for (size_t i = 0; i < ck.params.size(); ++i) {
    CHECK(other.parameters()[i].tensor.values() == source.parameters()[i].tensor.values());
  }
}

TEST_CASE("shape and name mismatches are reported by parameter") {
  TempDir tmp;
  ModelConfig cfg = small_config();
  SiTModel source(cfg, 1);
  const std::string f = tmp.file("weights.ckpt");
  save_checkpoint(f, cfg, source.parameters(), nullptr);
  LoadedCheckpoint ck = load_checkpoint(f);

  ModelConfig wide = cfg;
  wide.dim = 16;
  wide.num_heads = 4;
  SiTModel other(wide, 2);
  try {
    apply_parameters(ck.params, other.parameters());
    FAIL("expected a shape mismatch");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("patch_embed.weight") != std::string::npos);
    CHECK(std::string(e.what()).find("shape") != std::string::npos);
  }

  SiTModel renamed(cfg, 3);
  renamed.parameters()[0].name = "patch_embed.kernel";
  try {
    apply_parameters(ck.params, renamed.parameters());
    FAIL("expected a missing parameter error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("patch_embed.kernel") != std::string::npos);
  }

  std::vector<Parameter> fewer(ck.params.begin(), ck.params.end() - 1);
  CHECK_THROWS_AS(apply_parameters(fewer, source.parameters()), std::runtime_error);
}

TEST_CASE("corruption and truncation are detected") {
  TempDir tmp;
  ModelConfig cfg = small_config();
  SiTModel model(cfg, 5);
  const std::string f = tmp.file("model.ckpt");
  save_checkpoint(f, cfg, model.parameters(), nullptr);

  std::ifstream in(f, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  {
    std::vector<char> flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x40;
    std::ofstream out(tmp.file("flipped.ckpt"), std::ios::binary);
    out.write(flipped.data(), static_cast<std::streamsize>(flipped.size()));
    out.close();
    try {
      load_checkpoint(tmp.file("flipped.ckpt"));
      FAIL("expected a checksum failure");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("checksum") != std::string::npos);
    }
  }
  {
    std::ofstream out(tmp.file("short.ckpt"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(tmp.file("short.ckpt")), std::runtime_error);
  }
  {
    std::vector<char> wrong = bytes;
    wrong[0] = 'X';
    std::ofstream out(tmp.file("magic.ckpt"), std::ios::binary);
    out.write(wrong.data(), static_cast<std::streamsize>(wrong.size()));
    out.close();
    try {
      load_checkpoint(tmp.file("magic.ckpt"));
      FAIL("expected a magic failure");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("not a checkpoint") != std::string::npos);
    }
  }
  CHECK_THROWS_AS(load_checkpoint(tmp.file("absent.ckpt")), std::runtime_error);
}

TEST_CASE("classifier-head checkpoints rebuild classifier models") {
  TempDir tmp;
  ModelConfig cfg = small_config();
  SiTModel model(cfg, 8);
  Rng rng(9);
  model.replace_heads_for_classification(7, rng);
  const std::string f = tmp.file("cls.ckpt");
  save_checkpoint(f, model.config(), model.parameters(), nullptr);
  LoadedCheckpoint ck = load_checkpoint(f);
  CHECK(ck.config.head_classes == 7);
  SiTModel restored(ck.config, 0);
  apply_parameters(ck.params, restored.parameters());
  CHECK(restored.find("rot_head.weight")->tensor.shape() == Shape{8, 7});
}
