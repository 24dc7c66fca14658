#include "sit/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "sit/autograd.hpp"
#include "sit/checkpoint.hpp"
#include "sit/image_io.hpp"
#include "sit/metrics.hpp"
#include "sit/ops.hpp"

namespace sit {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

void check_finite(const Tensor& loss, const char* term, int64_t step) {
  if (!std::isfinite(static_cast<double>(loss.item())))
    throw std::runtime_error("pretrain: " + std::string(term) + " loss is not finite at step " +
                             std::to_string(step + 1));
}

std::vector<MomentEntry> moments_from(Adam& adam) {
  std::vector<MomentEntry> out;
  out.reserve(adam.params().size());
  for (size_t i = 0; i < adam.params().size(); ++i)
    out.push_back({adam.params()[i].name, adam.slots()[i].m, adam.slots()[i].v});
  return out;
}

void restore_moments(Adam& adam, const TrainState& state) {
  for (size_t i = 0; i < adam.params().size(); ++i) {
    const std::string& name = adam.params()[i].name;
    const MomentEntry* found = nullptr;
    for (const MomentEntry& e : state.moments) {
      if (e.name == name) {
        found = &e;
        break;
      }
    }
    if (!found) throw std::runtime_error("resume: checkpoint has no optimizer state for " + name);
    Adam::Slot& slot = adam.slots()[i];
    if (!found->m.empty() &&
        found->m.size() != static_cast<size_t>(adam.params()[i].tensor.numel()))
      throw std::runtime_error("resume: optimizer state size mismatch for " + name);
    slot.m = found->m;
    slot.v = found->v;
  }
}

/// Copies checkpoint values into the model by name, ignoring extra entries
/// (training-only scalars ride along in pretraining checkpoints).
void apply_model_parameters(const LoadedCheckpoint& loaded, SiTModel& model) {
  for (Parameter& p : model.parameters()) {
    const Parameter* found = nullptr;
    for (const Parameter& q : loaded.params) {
      if (q.name == p.name) {
        found = &q;
        break;
      }
    }
    if (!found) throw std::runtime_error("checkpoint is missing parameter " + p.name);
    if (found->tensor.shape() != p.tensor.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + p.name);
    p.tensor.values() = found->tensor.values();
  }
}

std::vector<float> flat_parameter_values(const std::vector<Parameter>& params) {
  std::vector<float> all;
  for (const Parameter& p : params)
    all.insert(all.end(), p.tensor.values().begin(), p.tensor.values().end());
  return all;
}

Dataset resized_for_model(const Dataset& data, const ModelConfig& config, const char* who) {
  require(data.channels == config.channels,
          std::string(who) + ": dataset channel count does not match the model");
  if (data.height == config.image_size && data.width == config.image_size) return data;
  return resize_dataset(data, config.image_size);
}

SiTModel model_from_checkpoint(const LoadedCheckpoint& loaded, uint64_t seed) {
  SiTModel model(loaded.config, seed);
  apply_model_parameters(loaded, model);
  return model;
}

std::string checkpoint_path_for_epoch(const std::string& out_dir, int64_t epoch) {
  char name[48];
  std::snprintf(name, sizeof(name), "/checkpoint_epoch_%04lld.sitc",
                static_cast<long long>(epoch));
  return out_dir + name;
}

/// Rows of a feature matrix gathered into a (B, dim) batch.
Tensor gather_rows(const Tensor& features, const std::vector<int64_t>& rows) {
  const int64_t dim = features.dim(1);
  Tensor out({static_cast<int64_t>(rows.size()), dim});
  for (size_t i = 0; i < rows.size(); ++i)
    std::memcpy(out.data() + static_cast<int64_t>(i) * dim, features.data() + rows[i] * dim,
                sizeof(float) * static_cast<size_t>(dim));
  return out;
}

Tensor extract_features(SiTModel& model, const Dataset& data) {
  const int64_t dim = 2 * model.config().dim;
  Tensor features({data.size(), dim});
  const int64_t chunk = 256;
  for (int64_t start = 0; start < data.size(); start += chunk) {
    const int64_t n = std::min(chunk, data.size() - start);
    std::vector<int64_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), start);
    Tensor f = model.probe_features(data.batch(idx));
    std::memcpy(features.data() + start * dim, f.data(),
                sizeof(float) * static_cast<size_t>(n * dim));
  }
  return features;
}

int64_t argmax_row(const float* row, int64_t n) {
  int64_t best = 0;
  for (int64_t j = 1; j < n; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

double sample_beta(double alpha, Rng& rng) {
  for (;;) {
    const double x = std::pow(rng.uniform01(), 1.0 / alpha);
    const double y = std::pow(rng.uniform01(), 1.0 / alpha);
    const double s = x + y;
    if (s > 0.0 && s <= 1.0) return x / s;
  }
}

/// One light op per image: keep, flip, zoom crop, or mild colour jitter.
Tensor light_augment(const Tensor& image, Rng& rng) {
  AugmentParams p;
  p.crop_scale_min = p.crop_scale_max = 1.0;
  p.hflip_prob = 0.0;
  p.brightness = p.contrast = p.saturation = 0.0;
  switch (rng.uniform_int(4)) {
    case 0: return Tensor(image.shape(), image.values());
    case 1: p.hflip_prob = 1.0; break;
    case 2: p.crop_scale_min = 0.7; break;
    default: p.brightness = p.contrast = p.saturation = 0.3; break;
  }
  return augment_view(image, p, rng);
}

Tensor image_row(const Dataset& data, int64_t i) {
  Tensor img({data.channels, data.height, data.width});
  std::memcpy(img.data(), data.image(i), sizeof(float) * static_cast<size_t>(data.image_numel()));
  return img;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  augment.validate();
  corruption.validate(model.image_size, model.image_size);
  require(model.head_classes == 0, "RunConfig: pretraining requires the pretext heads");
  require(corruption.patch_size == model.patch_size,
          "RunConfig: corruption patches must align with the model patch grid");
  require(tasks.enabled_count() > 0, "RunConfig: enable at least one task");
  require(batch_size >= 2,
          "RunConfig: batch_size must be at least 2 so every view has a contrastive partner");
  require(epochs >= 1, "RunConfig: epochs must be positive");
  require(checkpoint_every >= 1, "RunConfig: checkpoint_every must be positive");
  require(temperature > 0.0, "RunConfig: temperature must be positive");
  require(!out_dir.empty(), "RunConfig: out_dir is required");
  if (scheme == WeightScheme::kFixed)
    for (double a : fixed_alphas)
      require(a >= 0.0, "RunConfig: fixed weights must be nonnegative");
}

void append_eval_report_csv(const std::string& path, const EvalReport& report) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open report file: " + path);
  if (fresh) out << "protocol,dataset,accuracy,samples,checkpoint,label_fraction\n";
  char line[512];
  std::snprintf(line, sizeof(line), "%s,%s,%.6f,%lld,%s,%.4f", report.protocol.c_str(),
                report.dataset.c_str(), report.accuracy,
                static_cast<long long>(report.sample_count), report.checkpoint_id.c_str(),
                report.label_fraction);
  out << line << '\n';
}

PretrainResult pretrain(const Dataset& data, const RunConfig& config,
                        const std::string& resume_checkpoint) {
  config.validate();
  data.validate();
  require(data.channels == config.model.channels,
          "pretrain: dataset channel count does not match the model");
  require(data.height == config.model.image_size && data.width == config.model.image_size,
          "pretrain: dataset resolution does not match the model");
  require(data.size() >= config.batch_size, "pretrain: dataset smaller than one batch");

  std::filesystem::create_directories(config.out_dir);

  SiTModel model(config.model, config.seed);
  model.set_requires_grad(true);
  UncertaintyWeights weights(0.0);

  std::vector<Parameter> trained = model.parameters();
  if (config.scheme == WeightScheme::kUncertainty)
    for (Parameter& p : weights.parameters()) {
      p.tensor.set_requires_grad(true);
      trained.push_back(p);
    }

  Adam adam(trained, config.adam);
  Rng rng = Rng::derive(config.seed, 1);

  const int64_t steps_per_epoch = data.size() / config.batch_size;
  ScheduleConfig schedule = config.schedule;
  if (schedule.total_steps == 0) schedule.total_steps = steps_per_epoch * config.epochs;

  int64_t start_epoch = 0;
  int64_t global_step = 0;
  if (!resume_checkpoint.empty()) {
    LoadedCheckpoint loaded = load_checkpoint(resume_checkpoint);
    if (!loaded.has_state)
      throw std::runtime_error("pretrain: checkpoint carries no training state to resume from: " +
                               resume_checkpoint);
    apply_parameters(loaded.params, adam.params());
    restore_moments(adam, loaded.state);
    adam.set_step_count(loaded.state.adam_t);
    rng = Rng::deserialize(loaded.state.rng_state);
    start_epoch = loaded.state.epoch;
    global_step = loaded.state.step;
  }

  MetricsWriter metrics(config.out_dir + "/metrics.csv");
  auto save_state_checkpoint = [&](const std::string& path, int64_t completed_epochs) {
    TrainState state;
    state.epoch = completed_epochs;
    state.step = global_step;
    state.adam_t = adam.step_count();
    state.rng_state = rng.serialize();
    state.moments = moments_from(adam);
    save_checkpoint(path, config.model, adam.params(), &state);
  };

  PretrainResult result;
  bool first_recorded = false;
  std::vector<int64_t> order(static_cast<size_t>(data.size()));

  for (int64_t epoch = start_epoch; epoch < config.epochs; ++epoch) {
    // The order must be a function of the rng state alone, or resuming from a
    // checkpoint could not reproduce it.
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    for (int64_t b = 0; b < steps_per_epoch; ++b) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::vector<int64_t> idx(order.begin() + b * config.batch_size,
                                     order.begin() + (b + 1) * config.batch_size);
      PretextBatch batch =
          make_pretext_batch(data.batch(idx), config.augment, config.corruption, rng);

      const double lr = lr_at(schedule, global_step);
      LossBreakdown breakdown;
      {
        GradTape<float> tape;
        SiTOutput out = model.forward(batch.corrupted_views);
        TaskLosses losses;
        if (config.tasks.reconstruction) {
          losses.reconstruction = l1_loss(out.reconstruction, batch.clean_targets);
          check_finite(losses.reconstruction, "reconstruction", global_step);
        }
        if (config.tasks.rotation) {
          losses.rotation = cross_entropy(out.rotation_logits, batch.rotation_labels);
          check_finite(losses.rotation, "rotation", global_step);
        }
        if (config.tasks.contrastive) {
          losses.contrastive = nt_xent(out.contrastive, batch.pair_index, config.temperature);
          check_finite(losses.contrastive, "contrastive", global_step);
        }
        Tensor total = config.scheme == WeightScheme::kFixed
                           ? fixed_weighted_total(losses, config.fixed_alphas, &breakdown)
                           : uncertainty_total(losses, weights, &breakdown);
        check_finite(total, "total", global_step);
        tape.backward(total);
      }
      adam.step(lr);
      ++global_step;

      MetricsRow row;
      row.step = global_step;
      row.epoch = epoch;
      row.l_rec = breakdown.reconstruction;
      row.l_rot = breakdown.rotation;
      row.l_con = breakdown.contrastive;
      row.w1 = breakdown.weights[0];
      row.w2 = breakdown.weights[1];
      row.w3 = breakdown.weights[2];
      row.total = breakdown.total;
      row.lr = lr;
      row.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                   .count();
      metrics.append(row);

      if (!first_recorded) {
        result.first_total = breakdown.total;
        first_recorded = true;
      }
      result.last = breakdown;
      result.last_total = breakdown.total;
      ++result.steps_run;
    }
    if ((epoch + 1) % config.checkpoint_every == 0 || epoch + 1 == config.epochs)
      save_state_checkpoint(checkpoint_path_for_epoch(config.out_dir, epoch + 1), epoch + 1);
  }

  const std::string final_path = config.out_dir + "/checkpoint_final.sitc";
  save_state_checkpoint(final_path, config.epochs);
  result.final_checkpoint = final_path;
  return result;
}

EvalReport linear_probe(SiTModel& model, const Dataset& train, const Dataset& test,
                        const ProbeConfig& config, const std::string& checkpoint_id) {
  require(train.num_classes >= 2, "linear_probe: labeled training data required");
  require(test.num_classes == train.num_classes, "linear_probe: train/test class counts differ");
  require(train.channels == model.config().channels &&
              train.height == model.config().image_size &&
              train.width == model.config().image_size,
          "linear_probe: dataset geometry does not match the model");

  const std::vector<float> backbone_before = flat_parameter_values(model.parameters());

  Tensor train_features = extract_features(model, train);
  Tensor test_features = extract_features(model, test);

  // Standardize each feature dimension with training-set statistics. Frozen
  // embeddings have wildly uneven per-dimension scales; without this the
  // classifier only sees the high-variance directions.
  {
    const int64_t n = train_features.dim(0);
    const int64_t m = test_features.dim(0);
    const int64_t dims = train_features.dim(1);
    for (int64_t j = 0; j < dims; ++j) {
      double mean = 0.0;
      for (int64_t i = 0; i < n; ++i) mean += train_features.data()[i * dims + j];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const double z = train_features.data()[i * dims + j] - mean;
        var += z * z;
      }
      const double sd = std::sqrt(var / static_cast<double>(n) + 1e-6);
      for (int64_t i = 0; i < n; ++i)
        train_features.data()[i * dims + j] =
            static_cast<float>((train_features.data()[i * dims + j] - mean) / sd);
      for (int64_t i = 0; i < m; ++i)
        test_features.data()[i * dims + j] =
            static_cast<float>((test_features.data()[i * dims + j] - mean) / sd);
    }
  }

  const int64_t feature_dim = train_features.dim(1);
  const int64_t classes = train.num_classes;
  Tensor w({feature_dim, classes});
  Tensor bias({classes});
  w.set_requires_grad(true);
  bias.set_requires_grad(true);
  std::vector<Parameter> probe_params = {{"probe.weight", w}, {"probe.bias", bias}};
  AdamConfig adam_config;
  adam_config.lr = config.lr;
  adam_config.weight_decay = config.weight_decay;
  Adam adam(probe_params, adam_config);

  Rng rng(config.seed);
  std::vector<int64_t> order(static_cast<size_t>(train.size()));
  std::iota(order.begin(), order.end(), 0);
  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (int64_t start = 0; start < train.size(); start += config.batch_size) {
      const int64_t n = std::min(config.batch_size, train.size() - start);
      const std::vector<int64_t> idx(order.begin() + start, order.begin() + start + n);
      Tensor xb = gather_rows(train_features, idx);
      const std::vector<int64_t> yb = train.batch_labels(idx);
      GradTape<float> tape;
      Tensor loss = cross_entropy(linear(xb, w, bias), yb);
      tape.backward(loss);
      adam.step();
    }
  }

  int64_t correct = 0;
  Tensor logits = linear(test_features, w, bias);
  for (int64_t i = 0; i < test.size(); ++i)
    if (argmax_row(logits.data() + i * classes, classes) == test.labels[static_cast<size_t>(i)])
      ++correct;

  const std::vector<float> backbone_after = flat_parameter_values(model.parameters());
  if (backbone_before.size() != backbone_after.size() ||
      std::memcmp(backbone_before.data(), backbone_after.data(),
                  backbone_before.size() * sizeof(float)) != 0)
    throw std::runtime_error("linear_probe: backbone parameters changed during probing");

  EvalReport report;
  report.protocol = "linprobe";
  report.dataset = train.name;
  report.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  report.sample_count = test.size();
  report.checkpoint_id = checkpoint_id;
  report.label_fraction = 1.0;
  return report;
}

EvalReport linear_probe_checkpoint(const std::string& checkpoint_path, const Dataset& train,
                                   const Dataset& test, const ProbeConfig& config) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  SiTModel model = model_from_checkpoint(loaded, 0);
  Dataset train_fit = resized_for_model(train, model.config(), "linear_probe");
  Dataset test_fit = resized_for_model(test, model.config(), "linear_probe");
  return linear_probe(model, train_fit, test_fit, config, checkpoint_path);
}

Tensor classifier_predict(SiTModel& model, const Tensor& images) {
  ClassifierOutput out = model.forward_classifier(images);
  return mul_scalar(add(softmax(out.logits0, 1), softmax(out.logits1, 1)), 0.5);
}

double classifier_accuracy(SiTModel& model, const Dataset& data, int64_t batch_size) {
  require(data.num_classes == model.config().head_classes,
          "classifier_accuracy: class count does not match the model heads");
  int64_t correct = 0;
  for (int64_t start = 0; start < data.size(); start += batch_size) {
    const int64_t n = std::min(batch_size, data.size() - start);
    std::vector<int64_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), start);
    Tensor probs = classifier_predict(model, data.batch(idx));
    for (int64_t i = 0; i < n; ++i)
      if (argmax_row(probs.data() + i * data.num_classes, data.num_classes) ==
          data.labels[static_cast<size_t>(start + i)])
        ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

FinetuneResult finetune(const std::string& checkpoint_path, const Dataset& train,
                        const Dataset& test, int64_t n_classes, const FinetuneConfig& config,
                        const std::string& save_checkpoint_path) {
  require(n_classes >= 2, "finetune: need at least two classes");
  require(train.num_classes == n_classes, "finetune: n_classes does not match the dataset");
  require(test.num_classes == n_classes, "finetune: test class count does not match");

  LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  require(loaded.config.head_classes == 0,
          "finetune: expected a pretext checkpoint without classification heads");
  SiTModel model = model_from_checkpoint(loaded, config.seed);
  Dataset train_fit = resized_for_model(train, model.config(), "finetune");
  Dataset test_fit = resized_for_model(test, model.config(), "finetune");

  Rng rng = Rng::derive(config.seed, 17);
  model.replace_heads_for_classification(n_classes, rng);
  model.set_requires_grad(true);

  AdamConfig adam_config;
  adam_config.lr = config.lr;
  adam_config.weight_decay = config.weight_decay;
  adam_config.clip_norm = config.clip_norm;
  Adam adam(model.parameters(), adam_config);

  const int64_t chw = train_fit.image_numel();
  std::vector<int64_t> order(static_cast<size_t>(train_fit.size()));
  std::iota(order.begin(), order.end(), 0);
  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (int64_t start = 0; start < train_fit.size(); start += config.batch_size) {
      const int64_t n = std::min(config.batch_size, train_fit.size() - start);
      const std::vector<int64_t> idx(order.begin() + start, order.begin() + start + n);
      Tensor xb = train_fit.batch(idx);
      std::vector<int64_t> ya = train_fit.batch_labels(idx);

      if (config.auto_augment) {
        for (int64_t i = 0; i < n; ++i) {
          Tensor img({train_fit.channels, train_fit.height, train_fit.width});
          std::memcpy(img.data(), xb.data() + i * chw, sizeof(float) * static_cast<size_t>(chw));
          Tensor aug = light_augment(img, rng);
          std::memcpy(xb.data() + i * chw, aug.data(), sizeof(float) * static_cast<size_t>(chw));
        }
      }

      double lam = 1.0;
      std::vector<int64_t> yb = ya;
      if (config.mixup && n >= 2) {
        lam = sample_beta(config.mixup_alpha, rng);
        Tensor mixed(xb.shape());
        for (int64_t i = 0; i < n; ++i) {
          const float* a = xb.data() + i * chw;
          const float* b = xb.data() + ((i + 1) % n) * chw;
          float* dst = mixed.data() + i * chw;
          for (int64_t j = 0; j < chw; ++j)
            dst[j] = static_cast<float>(lam * a[j] + (1.0 - lam) * b[j]);
          yb[static_cast<size_t>(i)] = ya[static_cast<size_t>((i + 1) % n)];
        }
        xb = mixed;
      }

      GradTape<float> tape;
      ClassifierOutput out = model.forward_classifier(xb);
      Tensor loss_primary = mul_scalar(
          add(cross_entropy(out.logits0, ya), cross_entropy(out.logits1, ya)), 0.5);
      Tensor loss = loss_primary;
      if (config.mixup && n >= 2) {
        Tensor loss_partner = mul_scalar(
            add(cross_entropy(out.logits0, yb), cross_entropy(out.logits1, yb)), 0.5);
        loss = add(mul_scalar(loss_primary, lam), mul_scalar(loss_partner, 1.0 - lam));
      }
      tape.backward(loss);
      adam.step();
    }
  }

  FinetuneResult result{std::move(model), {}, 0.0, {}};
  result.train_accuracy = classifier_accuracy(result.model, train_fit);
  result.report.protocol = "finetune";
  result.report.dataset = train.name;
  result.report.accuracy = classifier_accuracy(result.model, test_fit);
  result.report.sample_count = test_fit.size();
  result.report.checkpoint_id = checkpoint_path;
  result.report.label_fraction = 1.0;
  if (!save_checkpoint_path.empty()) {
    save_checkpoint(save_checkpoint_path, result.model.config(), result.model.parameters());
    result.checkpoint_path = save_checkpoint_path;
  }
  return result;
}

EvalReport domain_transfer(const std::string& checkpoint_path, const std::string& source_name,
                           const Dataset& target_train, const Dataset& target_test,
                           const ProbeConfig& config) {
  EvalReport report = linear_probe_checkpoint(checkpoint_path, target_train, target_test, config);
  report.protocol = "transfer";
  report.dataset = source_name + "->" + target_train.name;
  return report;
}

FewShotResult few_shot_protocol(const std::string& checkpoint_path, const Dataset& train,
                                const Dataset& test, double percent, const FinetuneConfig& ft,
                                const ProbeConfig& probe, uint64_t split_seed) {
  require(percent > 0.0 && percent <= 100.0, "few_shot_protocol: percent must lie in (0,100]");
  const std::vector<int64_t> keep = few_shot_split(train, percent / 100.0, split_seed);
  Dataset labeled = subset(train, keep);

  FinetuneResult tuned = finetune(checkpoint_path, labeled, test, train.num_classes, ft);

  FewShotResult result;
  result.fewshot = tuned.report;
  result.fewshot.protocol = "fewshot";
  result.fewshot.dataset = train.name;
  result.fewshot.checkpoint_id = checkpoint_path;
  result.fewshot.label_fraction = percent / 100.0;

  Dataset train_fit = resized_for_model(train, tuned.model.config(), "few_shot_protocol");
  Dataset test_fit = resized_for_model(test, tuned.model.config(), "few_shot_protocol");
  result.probe = linear_probe(tuned.model, train_fit, test_fit, probe, checkpoint_path);
  result.probe.protocol = "fewshot_probe";
  return result;
}

void reconstruct_preview(const std::string& checkpoint_path, const Dataset& data, int64_t count,
                         const CorruptionParams& corruption, const std::string& out_dir,
                         uint64_t seed) {
  require(count >= 1, "reconstruct_preview: count must be positive");
  LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  require(loaded.config.head_classes == 0,
          "reconstruct_preview: expected a pretext checkpoint with a reconstruction head");
  SiTModel model = model_from_checkpoint(loaded, 0);
  Dataset fit = resized_for_model(data, model.config(), "reconstruct_preview");
  count = std::min(count, fit.size());

  std::filesystem::create_directories(out_dir);
  Rng rng(seed);
  const int64_t chw = fit.image_numel();
  for (int64_t i = 0; i < count; ++i) {
    Tensor original = image_row(fit, i);
    Tensor source = image_row(fit, (i + 1) % fit.size());
    CorruptResult corrupted = corrupt(original, source, corruption, rng);

    Tensor input({1, fit.channels, fit.height, fit.width}, corrupted.image.values());
    SiTOutput out = model.forward(input);
    Tensor recon({fit.channels, fit.height, fit.width});
    std::memcpy(recon.data(), out.reconstruction.data(),
                sizeof(float) * static_cast<size_t>(chw));
    for (int64_t j = 0; j < chw; ++j)
      recon.data()[j] = std::min(1.0f, std::max(0.0f, recon.data()[j]));

    char stem[32];
    std::snprintf(stem, sizeof(stem), "/preview_%03lld_", static_cast<long long>(i));
    write_ppm(out_dir + stem + "original.ppm", original);
    write_ppm(out_dir + stem + "corrupted.ppm", corrupted.image);
    write_ppm(out_dir + stem + "reconstructed.ppm", recon);
  }
}

}  // namespace sit
