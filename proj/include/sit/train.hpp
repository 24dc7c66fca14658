#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sit/data.hpp"
#include "sit/losses.hpp"
#include "sit/model.hpp"
#include "sit/optim.hpp"
#include "sit/pretext.hpp"
#include "sit/rng.hpp"

namespace sit {

struct TaskFlags {
  bool reconstruction = true;
  bool rotation = true;
  bool contrastive = true;

  int enabled_count() const {
    return (reconstruction ? 1 : 0) + (rotation ? 1 : 0) + (contrastive ? 1 : 0);
  }
};

enum class WeightScheme { kFixed, kUncertainty };

/// Full pretraining run description. The schedule's total_steps of 0 is
/// filled in from epochs * steps_per_epoch at run start.
struct RunConfig {
  ModelConfig model;
  AugmentParams augment;
  CorruptionParams corruption;
  AdamConfig adam;
  ScheduleConfig schedule;
  TaskFlags tasks;
  WeightScheme scheme = WeightScheme::kUncertainty;
  double fixed_alphas[3] = {1.0, 1.0, 1.0};
  double temperature = 0.5;
  int64_t batch_size = 16;  // source images per step; the model sees two views each
  int64_t epochs = 1;
  int64_t checkpoint_every = 1;  // epochs between checkpoints
  uint64_t seed = 0;
  std::string out_dir;

  void validate() const;
};

struct EvalReport {
  std::string protocol;
  std::string dataset;
  double accuracy = 0.0;
  int64_t sample_count = 0;
  std::string checkpoint_id;
  double label_fraction = 1.0;
};

/// One CSV row per report: protocol,dataset,accuracy,samples,checkpoint,label_fraction.
/// Creates the file with a header on first use, appends afterwards.
void append_eval_report_csv(const std::string& path, const EvalReport& report);

struct PretrainResult {
  std::string final_checkpoint;
  LossBreakdown last;
  double first_total = 0.0;
  double last_total = 0.0;
  int64_t steps_run = 0;
};

/// Pretraining loop: shuffle, build pretext batches, forward, combine the
/// enabled losses per the configured scheme, Adam step. Appends one metrics
/// row per step to out_dir/metrics.csv, checkpoints every checkpoint_every
/// epochs and at the end (checkpoint_final.sitc). A non-finite loss aborts
/// with the offending term named. Passing a checkpoint path resumes from its
/// stored state and continues bit-exactly.
PretrainResult pretrain(const Dataset& data, const RunConfig& config,
                        const std::string& resume_checkpoint = "");

struct ProbeConfig {
  int64_t epochs = 30;
  int64_t batch_size = 128;
  double lr = 0.01;
  double weight_decay = 0.0;
  uint64_t seed = 1;
};

/// Trains a linear classifier on frozen features (the concatenated final
/// embeddings of the two task tokens) and reports test accuracy. Features are
/// standardized per dimension with training-set statistics before the fit.
/// Backbone immutability is asserted by byte comparison.
EvalReport linear_probe(SiTModel& model, const Dataset& train, const Dataset& test,
                        const ProbeConfig& config, const std::string& checkpoint_id);

/// Loads the checkpoint and probes it. The datasets must match the model's
/// configured channels; resolution is adapted by bilinear resize if needed.
EvalReport linear_probe_checkpoint(const std::string& checkpoint_path, const Dataset& train,
                                   const Dataset& test, const ProbeConfig& config);

struct FinetuneConfig {
  int64_t epochs = 10;
  int64_t batch_size = 32;
  double lr = 1e-4;
  double weight_decay = 0.05;
  double clip_norm = 1.0;
  bool mixup = false;        // pairs each batch with a shifted copy, Beta(alpha,alpha) mix
  double mixup_alpha = 0.2;
  bool auto_augment = false;  // light per-image policy: flip / crop / jitter
  uint64_t seed = 2;
};

struct FinetuneResult {
  SiTModel model;
  EvalReport report;          // test accuracy
  double train_accuracy = 0.0;
  std::string checkpoint_path;  // empty unless a save path was given
};

/// Replaces both task heads with n-class linear heads and trains the whole
/// network with the mean of the two heads' cross-entropies. Inference
/// averages the two heads' softmax outputs.
FinetuneResult finetune(const std::string& checkpoint_path, const Dataset& train,
                        const Dataset& test, int64_t n_classes, const FinetuneConfig& config,
                        const std::string& save_checkpoint_path = "");

/// Averaged head probabilities, (B, classes). Runs without gradient taping.
Tensor classifier_predict(SiTModel& model, const Tensor& images);

/// Top-1 accuracy of the averaged-head prediction over a labeled dataset.
double classifier_accuracy(SiTModel& model, const Dataset& data, int64_t batch_size = 256);

/// Linear probe of a checkpoint pretrained on another dataset; target data
/// is resized to the model resolution. The report's dataset field records
/// "source->target".
EvalReport domain_transfer(const std::string& checkpoint_path, const std::string& source_name,
                           const Dataset& target_train, const Dataset& target_test,
                           const ProbeConfig& config);

struct FewShotResult {
  EvalReport fewshot;  // finetune on the stratified percent split
  EvalReport probe;    // linear probe of the finetuned backbone on the full train set
};

/// percent in (0,100]. Finetunes on a stratified percent split of train,
/// reports test accuracy, then linear-probes the finetuned backbone on the
/// full train set. Both reports carry the source checkpoint id.
FewShotResult few_shot_protocol(const std::string& checkpoint_path, const Dataset& train,
                                const Dataset& test, double percent, const FinetuneConfig& ft,
                                const ProbeConfig& probe, uint64_t split_seed = 3);

/// Writes preview_NNN_{original,corrupted,reconstructed}.ppm for the first
/// count images: the raw image, its corruption (replacement content from the
/// next image), and the model's reconstruction of the corrupted input.
void reconstruct_preview(const std::string& checkpoint_path, const Dataset& data, int64_t count,
                         const CorruptionParams& corruption, const std::string& out_dir,
                         uint64_t seed);

}  // namespace sit
