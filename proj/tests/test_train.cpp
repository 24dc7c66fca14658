#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sit/checkpoint.hpp"
#include "sit/metrics.hpp"
#include "sit/ops.hpp"
#include "sit/train.hpp"

using namespace sit;

namespace {

std::string fresh_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() / ("sit_train_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(bool(in), path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.image_size = 16;
  m.patch_size = 4;
  m.dim = 32;
  m.depth = 2;
  m.num_heads = 2;
  m.mlp_ratio = 2;
  m.contrastive_dim = 16;
  return m;
}

RunConfig tiny_run(const std::string& out_dir, uint64_t seed = 11) {
  RunConfig c;
  c.model = tiny_model();
  c.adam.lr = 3e-4;
  c.schedule.base_lr = 3e-4;
  c.schedule.warmup_steps = 2;
  c.batch_size = 8;
  c.epochs = 2;
  c.seed = seed;
  c.out_dir = out_dir;
  return c;
}

std::string save_fresh_pretext_checkpoint(const std::string& dir, uint64_t seed) {
  SiTModel model(tiny_model(), seed);
  const std::string path = dir + "/init.sitc";
  save_checkpoint(path, model.config(), model.parameters());
  return path;
}

bool rows_equal_ignoring_ms(const std::vector<MetricsRow>& a, const std::vector<MetricsRow>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].step != b[i].step || a[i].epoch != b[i].epoch) return false;
    if (a[i].l_rec != b[i].l_rec || a[i].l_rot != b[i].l_rot || a[i].l_con != b[i].l_con)
      return false;
    if (a[i].w1 != b[i].w1 || a[i].w2 != b[i].w2 || a[i].w3 != b[i].w3) return false;
    if (a[i].total != b[i].total || a[i].lr != b[i].lr) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("pretraining runs, logs well-formed metrics and checkpoints") {
  const std::string dir = fresh_dir("smoke");
  const Dataset data = synthetic_dataset(32, 16, 3, 4, 101);
  const RunConfig config = tiny_run(dir);

  const PretrainResult result = pretrain(data, config);
  CHECK(result.steps_run == 8);  // 32/8 batches over 2 epochs
  CHECK(result.final_checkpoint == dir + "/checkpoint_final.sitc");
  CHECK(std::filesystem::exists(dir + "/checkpoint_epoch_0001.sitc"));
  CHECK(std::filesystem::exists(dir + "/checkpoint_epoch_0002.sitc"));
  CHECK(std::filesystem::exists(result.final_checkpoint));

  const auto rows = read_metrics_csv(dir + "/metrics.csv");
  REQUIRE(rows.size() == 8);
  for (size_t i = 0; i < rows.size(); ++i) {
    CAPTURE(i);
    CHECK(rows[i].step == static_cast<int64_t>(i) + 1);
    CHECK(rows[i].epoch == static_cast<int64_t>(i) / 4);
    CHECK(rows[i].l_rec > 0.0);
    CHECK(rows[i].l_rot > 0.0);
    CHECK(rows[i].l_con > 0.0);
    CHECK(rows[i].lr >= 0.0);
    CHECK(rows[i].ms >= 0.0);
    // Learned weights stay positive and the logged columns reconstruct the
    // total: w1 = exp(-s1/2) and w2, w3 = exp(-s) invert to the s penalty.
    CHECK(rows[i].w1 > 0.0);
    CHECK(rows[i].w2 > 0.0);
    CHECK(rows[i].w3 > 0.0);
    const double s_sum = -2.0 * std::log(rows[i].w1) - std::log(rows[i].w2) - std::log(rows[i].w3);
    const double rebuilt = rows[i].w1 * rows[i].l_rec + rows[i].w2 * rows[i].l_rot +
                           rows[i].w3 * rows[i].l_con + 0.5 * s_sum;
    CHECK(std::abs(rebuilt - rows[i].total) < 5e-4);
  }
  // The s parameters start at zero, so the first step weighs every task at 1.
  CHECK(rows[0].w1 == 1.0);
  CHECK(rows[0].w2 == 1.0);
  CHECK(rows[0].w3 == 1.0);
  CHECK(result.first_total == doctest::Approx(rows.front().total).epsilon(1e-8));
  CHECK(result.last_total == doctest::Approx(rows.back().total).epsilon(1e-8));

  // Warmup means the first step uses a smaller rate than the second.
  CHECK(rows[0].lr < rows[1].lr);

  const LoadedCheckpoint loaded = load_checkpoint(result.final_checkpoint);
  CHECK(loaded.has_state);
  CHECK(loaded.state.epoch == 2);
  CHECK(loaded.state.step == 8);
  CHECK(loaded.state.adam_t == 8);
  bool has_s1 = false;
  for (const Parameter& p : loaded.params) has_s1 |= p.name == "uncertainty.s1";
  CHECK(has_s1);
}

TEST_CASE("fixed weighting logs the configured multipliers") {
  const std::string dir = fresh_dir("fixed");
  const Dataset data = synthetic_dataset(16, 16, 3, 4, 102);
  RunConfig config = tiny_run(dir);
  config.epochs = 1;
  config.scheme = WeightScheme::kFixed;
  config.fixed_alphas[0] = 0.7;
  config.fixed_alphas[1] = 1.0;
  config.fixed_alphas[2] = 0.4;

  pretrain(data, config);
  const auto rows = read_metrics_csv(dir + "/metrics.csv");
  REQUIRE(rows.size() == 2);
  for (const MetricsRow& r : rows) {
    CHECK(r.w1 == 0.7);
    CHECK(r.w2 == 1.0);
    CHECK(r.w3 == 0.4);
    const double rebuilt = 0.7 * r.l_rec + 1.0 * r.l_rot + 0.4 * r.l_con;
    CHECK(std::abs(rebuilt - r.total) < 5e-4);
  }

  // No learned scalars ride along under fixed weighting.
  const LoadedCheckpoint loaded = load_checkpoint(dir + "/checkpoint_final.sitc");
  for (const Parameter& p : loaded.params) CHECK(p.name.rfind("uncertainty.", 0) != 0);
}

TEST_CASE("disabled tasks contribute nothing and log zero weight") {
  const std::string dir = fresh_dir("rotonly");
  const Dataset data = synthetic_dataset(16, 16, 3, 4, 103);
  RunConfig config = tiny_run(dir);
  config.epochs = 1;
  config.tasks.reconstruction = false;
  config.tasks.contrastive = false;

  pretrain(data, config);
  const auto rows = read_metrics_csv(dir + "/metrics.csv");
  REQUIRE(rows.size() == 2);
  for (const MetricsRow& r : rows) {
    CHECK(r.l_rec == 0.0);
    CHECK(r.l_con == 0.0);
    CHECK(r.w1 == 0.0);
    CHECK(r.w3 == 0.0);
    CHECK(r.l_rot > 0.0);
    CHECK(r.total > 0.0);
  }
}

TEST_CASE("two identical pretraining runs produce identical checkpoints and metrics") {
  const Dataset data = synthetic_dataset(32, 16, 3, 4, 104);
  const std::string dir_a = fresh_dir("det_a");
  const std::string dir_b = fresh_dir("det_b");
  pretrain(data, tiny_run(dir_a, 21));
  pretrain(data, tiny_run(dir_b, 21));

  CHECK(read_file_bytes(dir_a + "/checkpoint_final.sitc") ==
        read_file_bytes(dir_b + "/checkpoint_final.sitc"));
  CHECK(rows_equal_ignoring_ms(read_metrics_csv(dir_a + "/metrics.csv"),
                               read_metrics_csv(dir_b + "/metrics.csv")));
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted run bit-exactly") {
  const Dataset data = synthetic_dataset(32, 16, 3, 4, 105);

  const std::string dir_full = fresh_dir("resume_full");
  RunConfig full = tiny_run(dir_full, 22);
  full.epochs = 4;
  pretrain(data, full);

  const std::string dir_split = fresh_dir("resume_split");
  RunConfig head = tiny_run(dir_split, 22);
  head.epochs = 2;
  // The schedule spans the full planned run even though this invocation stops
  // halfway; otherwise the cosine horizon would differ from the 4-epoch run.
  head.schedule.total_steps = 16;
  pretrain(data, head);
  RunConfig tail = head;
  tail.epochs = 4;
  const PretrainResult resumed = pretrain(data, tail, dir_split + "/checkpoint_epoch_0002.sitc");
  CHECK(resumed.steps_run == 8);

  CHECK(read_file_bytes(dir_full + "/checkpoint_final.sitc") ==
        read_file_bytes(dir_split + "/checkpoint_final.sitc"));
  CHECK(read_file_bytes(dir_full + "/checkpoint_epoch_0004.sitc") ==
        read_file_bytes(dir_split + "/checkpoint_epoch_0004.sitc"));
}

TEST_CASE("a diverging run aborts naming the non-finite term") {
  const std::string dir = fresh_dir("diverge");
  const Dataset data = synthetic_dataset(32, 16, 3, 4, 106);
  RunConfig config = tiny_run(dir);
  config.adam.lr = 1e15;
  config.schedule.base_lr = 1e15;
  config.schedule.warmup_steps = 0;

  bool threw = false;
  try {
    pretrain(data, config);
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("is not finite at step") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("pretraining rejects bad configurations") {
  const Dataset data = synthetic_dataset(16, 16, 3, 4, 107);
  const std::string dir = fresh_dir("reject");

  RunConfig config = tiny_run(dir);
  config.tasks = {false, false, false};
  CHECK_THROWS_AS(pretrain(data, config), std::invalid_argument);

  config = tiny_run(dir);
  config.batch_size = 1;
  CHECK_THROWS_AS(pretrain(data, config), std::invalid_argument);

  config = tiny_run(dir);
  config.model.head_classes = 4;
  CHECK_THROWS_AS(pretrain(data, config), std::invalid_argument);

  config = tiny_run(dir);
  config.corruption.patch_size = 2;
  CHECK_THROWS_AS(pretrain(data, config), std::invalid_argument);

  // Dataset resolution must match the model.
  const Dataset wrong = synthetic_dataset(16, 8, 3, 4, 108);
  CHECK_THROWS_AS(pretrain(wrong, tiny_run(dir)), std::invalid_argument);

  // Resume needs a checkpoint that carries training state.
  const std::string bare = save_fresh_pretext_checkpoint(dir, 1);
  CHECK_THROWS_AS(pretrain(data, tiny_run(dir), bare), std::runtime_error);
}

TEST_CASE("linear probe trains only the classifier and stays near chance on shuffled labels") {
  const std::string dir = fresh_dir("probe");
  Dataset train = synthetic_dataset(64, 16, 3, 4, 109);
  const Dataset test = synthetic_dataset(64, 16, 3, 4, 110);

  SiTModel model(tiny_model(), 31);
  ProbeConfig config;
  config.epochs = 10;
  config.batch_size = 32;

  const EvalReport report = linear_probe(model, train, test, config, "ckpt-id");
  CHECK(report.protocol == "linprobe");
  CHECK(report.dataset == train.name);
  CHECK(report.sample_count == 64);
  CHECK(report.checkpoint_id == "ckpt-id");
  // Even untrained transformer features separate the plaid classes linearly.
  CHECK(report.accuracy >= 0.9);

  // Shuffling the training labels destroys most of the signal, so the gap to
  // the true-label probe shows the probe is reading features, not noise.
  Dataset shuffled = train;
  Rng rng(7);
  rng.shuffle(shuffled.labels.begin(), shuffled.labels.end());
  const EvalReport chance = linear_probe(model, shuffled, test, config, "ckpt-id");
  CHECK(chance.accuracy <= 0.7);
  CHECK(report.accuracy - chance.accuracy >= 0.25);

  CHECK_THROWS_AS(linear_probe(model, synthetic_dataset(8, 8, 3, 4, 1), test, config, "x"),
                  std::invalid_argument);
}

TEST_CASE("probing a checkpoint resizes mismatched data instead of failing") {
  const std::string dir = fresh_dir("probe_ckpt");
  const std::string ckpt = save_fresh_pretext_checkpoint(dir, 32);
  const Dataset train = synthetic_dataset(32, 24, 3, 4, 111);  // 24px vs 16px model
  const Dataset test = synthetic_dataset(32, 24, 3, 4, 112);
  ProbeConfig config;
  config.epochs = 2;
  const EvalReport report = linear_probe_checkpoint(ckpt, train, test, config);
  CHECK(report.checkpoint_id == ckpt);
  CHECK(report.sample_count == 32);

  const EvalReport transfer = domain_transfer(ckpt, "plaid16", train, test, config);
  CHECK(transfer.protocol == "transfer");
  CHECK(transfer.dataset == "plaid16->" + train.name);
  CHECK(transfer.accuracy == report.accuracy);
}

TEST_CASE("finetuning fits a small labeled set and reports both accuracies") {
  const std::string dir = fresh_dir("finetune");
  const std::string ckpt = save_fresh_pretext_checkpoint(dir, 33);
  const Dataset train = synthetic_dataset(64, 16, 3, 4, 113);
  const Dataset test = synthetic_dataset(32, 16, 3, 4, 114);

  FinetuneConfig config;
  config.epochs = 40;
  config.batch_size = 16;
  config.lr = 3e-4;
  const std::string saved = dir + "/finetuned.sitc";
  const FinetuneResult result = finetune(ckpt, train, test, 4, config, saved);

  CHECK(result.train_accuracy >= 0.95);
  CHECK(result.report.protocol == "finetune");
  CHECK(result.report.checkpoint_id == ckpt);
  CHECK(result.report.sample_count == 32);
  CHECK(result.checkpoint_path == saved);

  // The saved classifier reloads into an equivalent model.
  const LoadedCheckpoint loaded = load_checkpoint(saved);
  CHECK(loaded.config.head_classes == 4);
  SiTModel reloaded(loaded.config, 0);
  apply_parameters(loaded.params, reloaded.parameters());
  CHECK(classifier_accuracy(reloaded, test) == result.report.accuracy);

  CHECK_THROWS_AS(finetune(ckpt, train, test, 7, config), std::invalid_argument);
  CHECK_THROWS_AS(finetune(saved, train, test, 4, config), std::invalid_argument);
}

TEST_CASE("finetune options run: mixup and light augmentation") {
  const std::string dir = fresh_dir("finetune_opts");
  const std::string ckpt = save_fresh_pretext_checkpoint(dir, 34);
  const Dataset train = synthetic_dataset(24, 16, 3, 4, 115);
  const Dataset test = synthetic_dataset(16, 16, 3, 4, 116);

  FinetuneConfig config;
  config.epochs = 2;
  config.batch_size = 8;
  config.mixup = true;
  config.auto_augment = true;
  const FinetuneResult result = finetune(ckpt, train, test, 4, config);
  CHECK(result.report.accuracy >= 0.0);
  CHECK(result.report.accuracy <= 1.0);
}

TEST_CASE("head replacement keeps parameter names and resizes both heads") {
  SiTModel model(tiny_model(), 35);
  std::vector<std::string> before;
  for (const Parameter& p : model.parameters()) before.push_back(p.name);

  Rng rng(1);
  model.replace_heads_for_classification(10, rng);
  REQUIRE(model.parameters().size() == before.size());
  for (size_t i = 0; i < before.size(); ++i) CHECK(model.parameters()[i].name == before[i]);
  CHECK(model.config().head_classes == 10);
  CHECK(model.find("rot_head.weight")->tensor.shape() == Shape({32, 10}));
  CHECK(model.find("contr_head.weight")->tensor.shape() == Shape({32, 10}));
}

TEST_CASE("prediction averages the two heads' softmax outputs") {
  SiTModel model(tiny_model(), 36);
  Rng rng(2);
  model.replace_heads_for_classification(4, rng);

  const Dataset data = synthetic_dataset(6, 16, 3, 4, 117);
  std::vector<int64_t> idx = {0, 1, 2, 3, 4, 5};
  const Tensor images = data.batch(idx);
  const Tensor averaged = classifier_predict(model, images);
  ClassifierOutput out = model.forward_classifier(images);
  const Tensor p0 = softmax(out.logits0, 1);
  const Tensor p1 = softmax(out.logits1, 1);
  REQUIRE(averaged.shape() == p0.shape());

  // Probabilities are averaged, not logits: the mean of the two softmax maps.
  double max_gap_to_single = 0.0;
  for (int64_t i = 0; i < averaged.numel(); ++i) {
    const auto k = static_cast<size_t>(i);
    const double expected = 0.5 * (static_cast<double>(p0.values()[k]) + p1.values()[k]);
    CHECK(averaged.values()[k] == doctest::Approx(expected).epsilon(1e-5));
    max_gap_to_single =
        std::max(max_gap_to_single, std::abs(averaged.values()[k] - static_cast<double>(p0.values()[k])));
  }
  // The two heads read different task tokens, so the average is not just one
  // head's output under another name.
  CHECK(max_gap_to_single > 1e-3);

  // Averaged probabilities stay normalized per row.
  for (int64_t r = 0; r < averaged.dim(0); ++r) {
    double sum = 0;
    for (int64_t c = 0; c < 4; ++c) sum += averaged.at({r, c});
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("a 100 percent few-shot run equals plain finetuning") {
  const std::string dir = fresh_dir("fewshot_full");
  const std::string ckpt = save_fresh_pretext_checkpoint(dir, 37);
  const Dataset train = synthetic_dataset(32, 16, 3, 4, 118);
  const Dataset test = synthetic_dataset(16, 16, 3, 4, 119);

  FinetuneConfig ft;
  ft.epochs = 3;
  ft.batch_size = 8;
  ProbeConfig probe;
  probe.epochs = 3;

  const FewShotResult fs = few_shot_protocol(ckpt, train, test, 100.0, ft, probe);
  const FinetuneResult direct = finetune(ckpt, train, test, 4, ft);
  CHECK(fs.fewshot.accuracy == direct.report.accuracy);
  CHECK(fs.fewshot.protocol == "fewshot");
  CHECK(fs.fewshot.label_fraction == 1.0);
  CHECK(fs.probe.protocol == "fewshot_probe");
  CHECK(fs.fewshot.checkpoint_id == ckpt);
  CHECK(fs.probe.checkpoint_id == ckpt);

  CHECK_THROWS_AS(few_shot_protocol(ckpt, train, test, 0.0, ft, probe), std::invalid_argument);
  CHECK_THROWS_AS(few_shot_protocol(ckpt, train, test, 101.0, ft, probe), std::invalid_argument);
}

TEST_CASE("a smaller label budget uses fewer training examples") {
  const Dataset train = synthetic_dataset(40, 16, 3, 4, 120);
  const auto keep10 = few_shot_split(train, 0.10, 3);
  const auto keep50 = few_shot_split(train, 0.50, 3);
  CHECK(keep10.size() == 4);   // one per class at 10% of 10-per-class
  CHECK(keep50.size() == 20);
  const Dataset small = subset(train, keep10);
  CHECK(small.size() == 4);
  CHECK(small.num_classes == 4);
}

TEST_CASE("preview writes original, corrupted and reconstructed images") {
  const std::string dir = fresh_dir("preview");
  const std::string ckpt = save_fresh_pretext_checkpoint(dir, 38);
  const Dataset data = synthetic_dataset(3, 16, 3, 4, 121);

  CorruptionParams corruption;
  reconstruct_preview(ckpt, data, 2, corruption, dir + "/out", 9);
  for (const char* stem : {"preview_000_", "preview_001_"})
    for (const char* kind : {"original.ppm", "corrupted.ppm", "reconstructed.ppm"})
      CHECK(std::filesystem::exists(dir + "/out/" + stem + kind));
  CHECK(!std::filesystem::exists(dir + "/out/preview_002_original.ppm"));

  // With corruption disabled the corrupted panel is the original, byte for byte.
  reconstruct_preview(ckpt, data, 1, CorruptionParams::disabled(4), dir + "/clean", 9);
  CHECK(read_file_bytes(dir + "/clean/preview_000_original.ppm") ==
        read_file_bytes(dir + "/clean/preview_000_corrupted.ppm"));

  // A classifier checkpoint has no reconstruction pathway to preview.
  const Dataset train = synthetic_dataset(16, 16, 3, 4, 122);
  FinetuneConfig ft;
  ft.epochs = 1;
  const std::string cls = dir + "/cls.sitc";
  finetune(ckpt, train, train, 4, ft, cls);
  CHECK_THROWS_AS(reconstruct_preview(cls, data, 1, corruption, dir + "/bad", 9),
                  std::invalid_argument);
}

TEST_CASE("evaluation reports append to a single CSV with one header") {
  const std::string dir = fresh_dir("reports");
  const std::string path = dir + "/reports.csv";
  EvalReport a{"linprobe", "synthetic", 0.8125, 64, "ckpt_a", 1.0};
  EvalReport b{"fewshot", "synthetic", 0.5, 32, "ckpt_b", 0.1};
  append_eval_report_csv(path, a);
  append_eval_report_csv(path, b);

  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "protocol,dataset,accuracy,samples,checkpoint,label_fraction");
  CHECK(lines[1] == "linprobe,synthetic,0.812500,64,ckpt_a,1.0000");
  CHECK(lines[2] == "fewshot,synthetic,0.500000,32,ckpt_b,0.1000");
}
