// Command-line front end: pretraining, the evaluation protocols, previews and
// the gradient check suite. Exit codes: 0 success, 1 usage or configuration
// error, 2 runtime failure.
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sit/checkpoint.hpp"
#include "sit/gradcheck.hpp"
#include "sit/image_io.hpp"
#include "sit/train.hpp"

using namespace sit;

namespace {

// Where the images come from. synthetic draws the procedural plaid set; the
// file-backed kinds read the standard binary layouts from data.path.
struct DataSpec {
  std::string kind = "synthetic";  // synthetic | cifar10 | cifar100 | stl10 | stl10-unlabeled
  std::string path;
  int64_t limit = 0;       // keep only the first records; 0 keeps all
  int64_t test_limit = 0;
  int64_t n = 512;         // synthetic: training examples; test split uses n/4
  int64_t image_size = 32;
  int64_t channels = 3;
  int64_t classes = 10;
  uint64_t seed = 0;
};

struct CliConfig {
  RunConfig run;
  DataSpec data;
  ProbeConfig probe;
  FinetuneConfig ft;
  double fewshot_percent = 10.0;
  uint64_t fewshot_split_seed = 3;
};

Dataset load_split(const DataSpec& spec, bool train) {
  if (spec.kind == "synthetic") {
    const int64_t n = train ? spec.n : std::max<int64_t>(spec.n / 4, spec.classes);
    // The test split draws from a disjoint seed stream.
    return synthetic_dataset(n, spec.image_size, spec.channels, spec.classes,
                             train ? spec.seed : spec.seed + 1);
  }
  const int64_t limit = train ? spec.limit : spec.test_limit;
  if (spec.kind == "cifar10") return load_cifar10(spec.path, train, limit);
  if (spec.kind == "cifar100") return load_cifar100(spec.path, train, limit);
  if (spec.kind == "stl10") {
    const std::string stem = train ? "/train" : "/test";
    return load_stl10(spec.path + stem + "_X.bin", spec.path + stem + "_y.bin", limit);
  }
  if (spec.kind == "stl10-unlabeled") {
    if (!train) throw std::invalid_argument("stl10-unlabeled has no test split");
    return load_stl10(spec.path + "/unlabeled_X.bin", "", limit);
  }
  throw std::invalid_argument("unknown data.kind '" + spec.kind +
                              "' (synthetic, cifar10, cifar100, stl10, stl10-unlabeled)");
}

int64_t to_i64(const std::string& key, const std::string& value) {
  size_t used = 0;
  int64_t v = 0;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size()) throw std::invalid_argument(key + ": expected an integer, got '" + value + "'");
  return v;
}

uint64_t to_u64(const std::string& key, const std::string& value) {
  const int64_t v = to_i64(key, value);
  if (v < 0) throw std::invalid_argument(key + ": expected a nonnegative integer");
  return static_cast<uint64_t>(v);
}

double to_f64(const std::string& key, const std::string& value) {
  size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size()) throw std::invalid_argument(key + ": expected a number, got '" + value + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw std::invalid_argument(key + ": expected true/false, got '" + value + "'");
}

void apply_key(CliConfig& c, const std::string& key, const std::string& value) {
  RunConfig& r = c.run;
  if (key == "model.preset") r.model = ModelConfig::preset(value);
  else if (key == "model.image_size") r.model.image_size = to_i64(key, value);
  else if (key == "model.channels") r.model.channels = to_i64(key, value);
  else if (key == "model.patch_size") r.model.patch_size = to_i64(key, value);
  else if (key == "model.dim") r.model.dim = to_i64(key, value);
  else if (key == "model.depth") r.model.depth = to_i64(key, value);
  else if (key == "model.num_heads") r.model.num_heads = to_i64(key, value);
  else if (key == "model.mlp_ratio") r.model.mlp_ratio = to_i64(key, value);
  else if (key == "model.contrastive_dim") r.model.contrastive_dim = to_i64(key, value);
  else if (key == "augment.crop_scale_min") r.augment.crop_scale_min = to_f64(key, value);
  else if (key == "augment.crop_scale_max") r.augment.crop_scale_max = to_f64(key, value);
  else if (key == "augment.hflip_prob") r.augment.hflip_prob = to_f64(key, value);
  else if (key == "augment.brightness") r.augment.brightness = to_f64(key, value);
  else if (key == "augment.contrast") r.augment.contrast = to_f64(key, value);
  else if (key == "augment.saturation") r.augment.saturation = to_f64(key, value);
  else if (key == "corrupt.patch_size") r.corruption.patch_size = to_i64(key, value);
  else if (key == "corrupt.drop_fraction_min") r.corruption.drop_fraction_min = to_f64(key, value);
  else if (key == "corrupt.drop_fraction_max") r.corruption.drop_fraction_max = to_f64(key, value);
  else if (key == "corrupt.replace_fraction_min") r.corruption.replace_fraction_min = to_f64(key, value);
  else if (key == "corrupt.replace_fraction_max") r.corruption.replace_fraction_max = to_f64(key, value);
  else if (key == "corrupt.block_patches_min") r.corruption.block_patches_min = to_i64(key, value);
  else if (key == "corrupt.block_patches_max") r.corruption.block_patches_max = to_i64(key, value);
  else if (key == "corrupt.grey_blocks_min") r.corruption.grey_blocks_min = to_i64(key, value);
  else if (key == "corrupt.grey_blocks_max") r.corruption.grey_blocks_max = to_i64(key, value);
  else if (key == "corrupt.blur_blocks_min") r.corruption.blur_blocks_min = to_i64(key, value);
  else if (key == "corrupt.blur_blocks_max") r.corruption.blur_blocks_max = to_i64(key, value);
  else if (key == "corrupt.blur_sigma") r.corruption.blur_sigma = to_f64(key, value);
  else if (key == "corrupt.blur_kernel") r.corruption.blur_kernel = to_i64(key, value);
  else if (key == "corrupt.colour_strength") r.corruption.colour_strength = to_f64(key, value);
  else if (key == "adam.lr") r.adam.lr = to_f64(key, value);
  else if (key == "adam.beta1") r.adam.beta1 = to_f64(key, value);
  else if (key == "adam.beta2") r.adam.beta2 = to_f64(key, value);
  else if (key == "adam.eps") r.adam.eps = to_f64(key, value);
  else if (key == "adam.weight_decay") r.adam.weight_decay = to_f64(key, value);
  else if (key == "adam.clip_norm") r.adam.clip_norm = to_f64(key, value);
  else if (key == "schedule.base_lr") r.schedule.base_lr = to_f64(key, value);
  else if (key == "schedule.warmup_steps") r.schedule.warmup_steps = to_i64(key, value);
  else if (key == "schedule.total_steps") r.schedule.total_steps = to_i64(key, value);
  else if (key == "schedule.floor_lr") r.schedule.floor_lr = to_f64(key, value);
  else if (key == "schedule.cosine") r.schedule.cosine = to_bool(key, value);
  else if (key == "tasks.reconstruction") r.tasks.reconstruction = to_bool(key, value);
  else if (key == "tasks.rotation") r.tasks.rotation = to_bool(key, value);
  else if (key == "tasks.contrastive") r.tasks.contrastive = to_bool(key, value);
  else if (key == "scheme") {
    if (value == "fixed") r.scheme = WeightScheme::kFixed;
    else if (value == "uncertainty") r.scheme = WeightScheme::kUncertainty;
    else throw std::invalid_argument("scheme: expected fixed or uncertainty, got '" + value + "'");
  }
  else if (key == "fixed_alpha1") r.fixed_alphas[0] = to_f64(key, value);
  else if (key == "fixed_alpha2") r.fixed_alphas[1] = to_f64(key, value);
  else if (key == "fixed_alpha3") r.fixed_alphas[2] = to_f64(key, value);
  else if (key == "temperature") r.temperature = to_f64(key, value);
  else if (key == "batch_size") r.batch_size = to_i64(key, value);
  else if (key == "epochs") r.epochs = to_i64(key, value);
  else if (key == "checkpoint_every") r.checkpoint_every = to_i64(key, value);
  else if (key == "seed") r.seed = to_u64(key, value);
  else if (key == "out_dir") r.out_dir = value;
  else if (key == "data.kind") c.data.kind = value;
  else if (key == "data.path") c.data.path = value;
  else if (key == "data.limit") c.data.limit = to_i64(key, value);
  else if (key == "data.test_limit") c.data.test_limit = to_i64(key, value);
  else if (key == "data.n") c.data.n = to_i64(key, value);
  else if (key == "data.image_size") c.data.image_size = to_i64(key, value);
  else if (key == "data.channels") c.data.channels = to_i64(key, value);
  else if (key == "data.classes") c.data.classes = to_i64(key, value);
  else if (key == "data.seed") c.data.seed = to_u64(key, value);
  else if (key == "probe.epochs") c.probe.epochs = to_i64(key, value);
  else if (key == "probe.batch_size") c.probe.batch_size = to_i64(key, value);
  else if (key == "probe.lr") c.probe.lr = to_f64(key, value);
  else if (key == "probe.weight_decay") c.probe.weight_decay = to_f64(key, value);
  else if (key == "probe.seed") c.probe.seed = to_u64(key, value);
  else if (key == "ft.epochs") c.ft.epochs = to_i64(key, value);
  else if (key == "ft.batch_size") c.ft.batch_size = to_i64(key, value);
  else if (key == "ft.lr") c.ft.lr = to_f64(key, value);
  else if (key == "ft.weight_decay") c.ft.weight_decay = to_f64(key, value);
  else if (key == "ft.clip_norm") c.ft.clip_norm = to_f64(key, value);
  else if (key == "ft.mixup") c.ft.mixup = to_bool(key, value);
  else if (key == "ft.mixup_alpha") c.ft.mixup_alpha = to_f64(key, value);
  else if (key == "ft.auto_augment") c.ft.auto_augment = to_bool(key, value);
  else if (key == "ft.seed") c.ft.seed = to_u64(key, value);
  else if (key == "fewshot.percent") c.fewshot_percent = to_f64(key, value);
  else if (key == "fewshot.split_seed") c.fewshot_split_seed = to_u64(key, value);
  else throw std::invalid_argument("unknown configuration key '" + key + "'");
}

void apply_assignment(CliConfig& c, const std::string& assignment, const std::string& origin) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument(origin + ": expected key=value, got '" + assignment + "'");
  std::string key = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);
  auto trim = [](std::string& s) {
    const size_t a = s.find_first_not_of(" \t");
    const size_t b = s.find_last_not_of(" \t");
    s = a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  trim(key);
  trim(value);
  if (key.empty()) throw std::invalid_argument(origin + ": empty key in '" + assignment + "'");
  apply_key(c, key, value);
}

// key = value lines; # starts a comment; blank lines ignored.
void apply_config_file(CliConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path);
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    const size_t b = line.find_last_not_of(" \t\r");
    apply_assignment(c, line.substr(a, b - a + 1), path + ":" + std::to_string(lineno));
  }
}

struct CommonOpts {
  std::vector<std::string> config_files;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_files, "key=value configuration file (repeatable)");
  cmd->add_option("--set", opts.sets, "single key=value override (repeatable)");
}

CliConfig resolve(const CommonOpts& opts) {
  CliConfig c;
  for (const std::string& f : opts.config_files) apply_config_file(c, f);
  for (const std::string& s : opts.sets) apply_assignment(c, s, "--set");
  return c;
}

void print_report(const EvalReport& r) {
  std::printf("%s %s: accuracy %.2f%% over %lld samples (checkpoint %s, label fraction %.2f)\n",
              r.protocol.c_str(), r.dataset.c_str(), 100.0 * r.accuracy,
              static_cast<long long>(r.sample_count), r.checkpoint_id.c_str(), r.label_fraction);
}

void emit(const EvalReport& r, const std::string& report_csv) {
  print_report(r);
  if (!report_csv.empty()) append_eval_report_csv(report_csv, r);
}

int run_gradcheck(double tol, uint64_t seed) {
  const std::vector<GradCheckLine> lines = run_gradcheck_suite(tol, seed);
  for (const GradCheckLine& l : lines)
    std::printf("%-34s max_rel_err %.3e  %s\n", l.name.c_str(), l.max_rel_err,
                l.pass ? "pass" : "FAIL");
  if (!gradcheck_all_pass(lines)) {
    std::fprintf(stderr, "gradient check failed\n");
    return 2;
  }
  std::printf("all %zu gradient checks passed\n", lines.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised vision transformer: pretraining and evaluation"};
  app.require_subcommand(1);

  CommonOpts pretrain_opts;
  std::string resume;
  CLI::App* cmd_pretrain = app.add_subcommand("pretrain", "pretrain on unlabeled images");
  add_common(cmd_pretrain, pretrain_opts);
  cmd_pretrain->add_option("--resume", resume, "checkpoint to continue from");

  CommonOpts finetune_opts;
  std::string ft_checkpoint, ft_save, ft_report;
  int64_t ft_classes = 0;
  CLI::App* cmd_finetune = app.add_subcommand("finetune", "train a classifier from a checkpoint");
  add_common(cmd_finetune, finetune_opts);
  cmd_finetune->add_option("--checkpoint", ft_checkpoint, "pretrained checkpoint")->required();
  cmd_finetune->add_option("--classes", ft_classes, "output classes (default: from the dataset)");
  cmd_finetune->add_option("--save", ft_save, "write the finetuned model here");
  cmd_finetune->add_option("--report", ft_report, "append the evaluation row to this CSV");

  CommonOpts probe_opts;
  std::string probe_checkpoint, probe_report;
  CLI::App* cmd_probe = app.add_subcommand("linprobe", "linear evaluation of frozen features");
  add_common(cmd_probe, probe_opts);
  cmd_probe->add_option("--checkpoint", probe_checkpoint, "pretrained checkpoint")->required();
  cmd_probe->add_option("--report", probe_report, "append the evaluation row to this CSV");

  CommonOpts transfer_opts;
  std::string tr_checkpoint, tr_report, tr_source = "pretrain";
  CLI::App* cmd_transfer = app.add_subcommand("transfer", "linear evaluation on another dataset");
  add_common(cmd_transfer, transfer_opts);
  cmd_transfer->add_option("--checkpoint", tr_checkpoint, "checkpoint pretrained on the source")->required();
  cmd_transfer->add_option("--source-name", tr_source, "source dataset name for the report");
  cmd_transfer->add_option("--report", tr_report, "append the evaluation row to this CSV");

  CommonOpts fewshot_opts;
  std::string fs_checkpoint, fs_report;
  double fs_percent = -1.0;
  CLI::App* cmd_fewshot = app.add_subcommand("fewshot", "finetune on a labeled fraction, then probe");
  add_common(cmd_fewshot, fewshot_opts);
  cmd_fewshot->add_option("--checkpoint", fs_checkpoint, "pretrained checkpoint")->required();
  cmd_fewshot->add_option("--percent", fs_percent, "labeled percent in (0,100]; 0 probes only");
  cmd_fewshot->add_option("--report", fs_report, "append the evaluation rows to this CSV");

  CommonOpts preview_opts;
  std::string pv_checkpoint, pv_out;
  int64_t pv_count = 8;
  uint64_t pv_seed = 0;
  CLI::App* cmd_preview = app.add_subcommand("preview", "write original/corrupted/reconstructed images");
  add_common(cmd_preview, preview_opts);
  cmd_preview->add_option("--checkpoint", pv_checkpoint, "pretext checkpoint")->required();
  cmd_preview->add_option("--out", pv_out, "output directory")->required();
  cmd_preview->add_option("--count", pv_count, "number of images");
  cmd_preview->add_option("--seed", pv_seed, "corruption seed");

  CommonOpts corrupt_opts;
  std::string cp_out;
  int64_t cp_count = 8;
  uint64_t cp_seed = 0;
  CLI::App* cmd_corrupt = app.add_subcommand("corrupt-preview", "write original/corrupted image pairs");
  add_common(cmd_corrupt, corrupt_opts);
  cmd_corrupt->add_option("--out", cp_out, "output directory")->required();
  cmd_corrupt->add_option("--count", cp_count, "number of images");
  cmd_corrupt->add_option("--seed", cp_seed, "corruption seed");

  double gc_tol = 1e-4;
  uint64_t gc_seed = 7;
  CLI::App* cmd_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  cmd_gradcheck->add_option("--tol", gc_tol, "max relative error accepted");
  cmd_gradcheck->add_option("--seed", gc_seed, "randomization seed");

  if (argc >= 2 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr) {
    std::fprintf(stderr, "error: unknown subcommand '%s'\n%s\n", argv[1], app.help().c_str());
    return 1;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(cmd_pretrain)) {
      const CliConfig c = resolve(pretrain_opts);
      const Dataset data = load_split(c.data, true);
      const PretrainResult r = pretrain(data, c.run, resume);
      std::printf("pretrained %lld steps: total %.4f -> %.4f\n",
                  static_cast<long long>(r.steps_run), r.first_total, r.last_total);
      std::printf("checkpoint %s\n", r.final_checkpoint.c_str());
      std::printf("metrics %s/metrics.csv\n", c.run.out_dir.c_str());
    } else if (app.got_subcommand(cmd_finetune)) {
      const CliConfig c = resolve(finetune_opts);
      const Dataset train = load_split(c.data, true);
      const Dataset test = load_split(c.data, false);
      const int64_t classes = ft_classes > 0 ? ft_classes : train.num_classes;
      const FinetuneResult r = finetune(ft_checkpoint, train, test, classes, c.ft, ft_save);
      std::printf("train accuracy %.2f%%\n", 100.0 * r.train_accuracy);
      emit(r.report, ft_report);
      if (!r.checkpoint_path.empty()) std::printf("saved %s\n", r.checkpoint_path.c_str());
    } else if (app.got_subcommand(cmd_probe)) {
      const CliConfig c = resolve(probe_opts);
      const Dataset train = load_split(c.data, true);
      const Dataset test = load_split(c.data, false);
      emit(linear_probe_checkpoint(probe_checkpoint, train, test, c.probe), probe_report);
    } else if (app.got_subcommand(cmd_transfer)) {
      const CliConfig c = resolve(transfer_opts);
      const Dataset train = load_split(c.data, true);
      const Dataset test = load_split(c.data, false);
      emit(domain_transfer(tr_checkpoint, tr_source, train, test, c.probe), tr_report);
    } else if (app.got_subcommand(cmd_fewshot)) {
      const CliConfig c = resolve(fewshot_opts);
      const Dataset train = load_split(c.data, true);
      const Dataset test = load_split(c.data, false);
      const double percent = fs_percent >= 0.0 ? fs_percent : c.fewshot_percent;
      if (percent == 0.0) {
        // 0% labeled data means no finetuning at all: pure linear evaluation.
        EvalReport r = linear_probe_checkpoint(fs_checkpoint, train, test, c.probe);
        r.label_fraction = 0.0;
        emit(r, fs_report);
      } else {
        const FewShotResult r =
            few_shot_protocol(fs_checkpoint, train, test, percent, c.ft, c.probe, c.fewshot_split_seed);
        emit(r.fewshot, fs_report);
        emit(r.probe, fs_report);
      }
    } else if (app.got_subcommand(cmd_preview)) {
      const CliConfig c = resolve(preview_opts);
      const Dataset data = load_split(c.data, true);
      reconstruct_preview(pv_checkpoint, data, pv_count, c.run.corruption, pv_out, pv_seed);
      std::printf("wrote %lld preview triplets to %s\n",
                  static_cast<long long>(std::min(pv_count, data.size())), pv_out.c_str());
    } else if (app.got_subcommand(cmd_corrupt)) {
      const CliConfig c = resolve(corrupt_opts);
      const Dataset data = load_split(c.data, true);
      if (cp_count < 1) throw std::invalid_argument("corrupt-preview: count must be positive");
      const int64_t count = std::min(cp_count, data.size());
      std::filesystem::create_directories(cp_out);
      Rng rng(cp_seed);
      for (int64_t i = 0; i < count; ++i) {
        Tensor original({data.channels, data.height, data.width});
        std::memcpy(original.data(), data.image(i),
                    sizeof(float) * static_cast<size_t>(data.image_numel()));
        Tensor source({data.channels, data.height, data.width});
        std::memcpy(source.data(), data.image((i + 1) % data.size()),
                    sizeof(float) * static_cast<size_t>(data.image_numel()));
        const CorruptResult cr = corrupt(original, source, c.run.corruption, rng);
        char stem[32];
        std::snprintf(stem, sizeof(stem), "/corrupt_%03lld_", static_cast<long long>(i));
        write_ppm(cp_out + stem + "original.ppm", original);
        write_ppm(cp_out + stem + "corrupted.ppm", cr.image);
      }
      std::printf("wrote %lld corruption pairs to %s\n", static_cast<long long>(count), cp_out.c_str());
    } else if (app.got_subcommand(cmd_gradcheck)) {
      return run_gradcheck(gc_tol, gc_seed);
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
