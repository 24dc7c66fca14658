#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "sit/checkpoint.hpp"
#include "sit/data.hpp"
#include "sit/gradcheck.hpp"
#include "sit/losses.hpp"
#include "sit/model.hpp"
#include "sit/optim.hpp"
#include "sit/pretext.hpp"
#include "sit/rng.hpp"
#include "sit/train.hpp"

namespace py = pybind11;
using namespace sit;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<int64_t, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const FloatArray& array) {
  py::buffer_info info = array.request();
  Shape shape(info.shape.begin(), info.shape.end());
  Tensor t(shape);
  std::memcpy(t.data(), info.ptr, sizeof(float) * static_cast<size_t>(t.numel()));
  return t;
}

py::array_t<float> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::memcpy(out.mutable_data(), t.data(), sizeof(float) * static_cast<size_t>(t.numel()));
  return out;
}

std::vector<int64_t> labels_from_array(const LabelArray& array) {
  py::buffer_info info = array.request();
  const int64_t* p = static_cast<const int64_t*>(info.ptr);
  return std::vector<int64_t>(p, p + info.size);
}

Dataset dataset_from_arrays(const FloatArray& images, const LabelArray& labels, int64_t classes,
                            const std::string& name) {
  py::buffer_info info = images.request();
  if (info.ndim != 4) throw std::invalid_argument(name + ": images must be (N, C, H, W)");
  Dataset d;
  d.name = name;
  d.channels = info.shape[1];
  d.height = info.shape[2];
  d.width = info.shape[3];
  d.num_classes = classes;
  const float* p = static_cast<const float*>(info.ptr);
  d.images.assign(p, p + info.size);
  d.labels = labels_from_array(labels);
  d.validate();
  return d;
}

template <typename T>
void set_if(const py::dict& d, const char* key, T& field) {
  if (d.contains(key)) field = d[key].cast<T>();
}

ModelConfig model_config_from_dict(const py::dict& d) {
  ModelConfig m;
  if (d.contains("preset")) m = ModelConfig::preset(d["preset"].cast<std::string>());
  set_if(d, "image_size", m.image_size);
  set_if(d, "channels", m.channels);
  set_if(d, "patch_size", m.patch_size);
  set_if(d, "dim", m.dim);
  set_if(d, "depth", m.depth);
  set_if(d, "num_heads", m.num_heads);
  set_if(d, "mlp_ratio", m.mlp_ratio);
  set_if(d, "contrastive_dim", m.contrastive_dim);
  set_if(d, "head_classes", m.head_classes);
  m.validate();
  return m;
}

py::dict model_config_to_dict(const ModelConfig& m) {
  py::dict d;
  d["image_size"] = m.image_size;
  d["channels"] = m.channels;
  d["patch_size"] = m.patch_size;
  d["dim"] = m.dim;
  d["depth"] = m.depth;
  d["num_heads"] = m.num_heads;
  d["mlp_ratio"] = m.mlp_ratio;
  d["contrastive_dim"] = m.contrastive_dim;
  d["head_classes"] = m.head_classes;
  return d;
}

AugmentParams augment_from_dict(const py::dict& d) {
  AugmentParams a;
  set_if(d, "crop_scale_min", a.crop_scale_min);
  set_if(d, "crop_scale_max", a.crop_scale_max);
  set_if(d, "hflip_prob", a.hflip_prob);
  set_if(d, "brightness", a.brightness);
  set_if(d, "contrast", a.contrast);
  set_if(d, "saturation", a.saturation);
  return a;
}

CorruptionParams corruption_from_dict(const py::dict& d) {
  CorruptionParams c;
  set_if(d, "patch_size", c.patch_size);
  set_if(d, "drop_fraction_min", c.drop_fraction_min);
  set_if(d, "drop_fraction_max", c.drop_fraction_max);
  set_if(d, "replace_fraction_min", c.replace_fraction_min);
  set_if(d, "replace_fraction_max", c.replace_fraction_max);
  set_if(d, "block_patches_min", c.block_patches_min);
  set_if(d, "block_patches_max", c.block_patches_max);
  set_if(d, "grey_blocks_min", c.grey_blocks_min);
  set_if(d, "grey_blocks_max", c.grey_blocks_max);
  set_if(d, "blur_blocks_min", c.blur_blocks_min);
  set_if(d, "blur_blocks_max", c.blur_blocks_max);
  set_if(d, "blur_sigma", c.blur_sigma);
  set_if(d, "blur_kernel", c.blur_kernel);
  set_if(d, "colour_strength", c.colour_strength);
  return c;
}

SiTModel model_from_checkpoint_file(const std::string& path) {
  LoadedCheckpoint loaded = load_checkpoint(path);
  SiTModel model(loaded.config, 1);
  auto& target = model.parameters();
  std::vector<Parameter> filtered;
  for (const auto& entry : loaded.params) {
    const bool known = std::any_of(target.begin(), target.end(),
                                   [&](const Parameter& p) { return p.name == entry.name; });
    if (known) filtered.push_back(entry);
  }
  apply_parameters(filtered, target);
  return model;
}

py::dict report_to_dict(const EvalReport& r) {
  py::dict d;
  d["protocol"] = r.protocol;
  d["dataset"] = r.dataset;
  d["accuracy"] = r.accuracy;
  d["samples"] = r.sample_count;
  d["checkpoint"] = r.checkpoint_id;
  d["label_fraction"] = r.label_fraction;
  return d;
}

class PyModel {
 public:
  PyModel(const py::dict& config, uint64_t seed)
      : model_(model_config_from_dict(config), seed) {}
  explicit PyModel(SiTModel model) : model_(std::move(model)) {}

  py::dict config() const { return model_config_to_dict(model_.config()); }
  int64_t parameter_count() const { return model_.parameter_count(); }

  py::dict parameters() {
    py::dict d;
    for (auto& p : model_.parameters()) d[p.name.c_str()] = array_from_tensor(p.tensor);
    return d;
  }

  py::array_t<float> encode(const FloatArray& images) {
    return array_from_tensor(model_.encode(tensor_from_array(images)));
  }

  py::dict forward(const FloatArray& images) {
    SiTOutput out = model_.forward(tensor_from_array(images));
    py::dict d;
    d["reconstruction"] = array_from_tensor(out.reconstruction);
    d["rotation_logits"] = array_from_tensor(out.rotation_logits);
    d["contrastive"] = array_from_tensor(out.contrastive);
    return d;
  }

  py::tuple forward_classifier(const FloatArray& images) {
    ClassifierOutput out = model_.forward_classifier(tensor_from_array(images));
    return py::make_tuple(array_from_tensor(out.logits0), array_from_tensor(out.logits1));
  }

  py::array_t<float> probe_features(const FloatArray& images) {
    return array_from_tensor(model_.probe_features(tensor_from_array(images)));
  }

  py::array_t<float> predict(const FloatArray& images) {
    return array_from_tensor(classifier_predict(model_, tensor_from_array(images)));
  }

  void replace_heads(int64_t classes, uint64_t seed) {
    Rng rng(seed);
    model_.replace_heads_for_classification(classes, rng);
  }

 private:
  SiTModel model_;
};

RunConfig run_config_from_kwargs(const py::kwargs& kw) {
  RunConfig rc;
  py::dict d = kw;
  if (d.contains("model")) rc.model = model_config_from_dict(d["model"].cast<py::dict>());
  if (d.contains("tasks")) {
    auto t = d["tasks"].cast<std::tuple<bool, bool, bool>>();
    rc.tasks.reconstruction = std::get<0>(t);
    rc.tasks.rotation = std::get<1>(t);
    rc.tasks.contrastive = std::get<2>(t);
  }
  if (d.contains("scheme")) {
    const auto s = d["scheme"].cast<std::string>();
    if (s == "fixed") rc.scheme = WeightScheme::kFixed;
    else if (s == "uncertainty") rc.scheme = WeightScheme::kUncertainty;
    else throw std::invalid_argument("scheme must be 'fixed' or 'uncertainty'");
  }
  if (d.contains("fixed_alphas")) {
    auto a = d["fixed_alphas"].cast<std::tuple<double, double, double>>();
    rc.fixed_alphas[0] = std::get<0>(a);
    rc.fixed_alphas[1] = std::get<1>(a);
    rc.fixed_alphas[2] = std::get<2>(a);
  }
  if (d.contains("augment")) rc.augment = augment_from_dict(d["augment"].cast<py::dict>());
  if (d.contains("corruption")) {
    rc.corruption = corruption_from_dict(d["corruption"].cast<py::dict>());
  } else {
    rc.corruption.patch_size = rc.model.patch_size;
  }
  set_if(d, "temperature", rc.temperature);
  set_if(d, "batch_size", rc.batch_size);
  set_if(d, "epochs", rc.epochs);
  set_if(d, "checkpoint_every", rc.checkpoint_every);
  set_if(d, "seed", rc.seed);
  set_if(d, "out_dir", rc.out_dir);
  set_if(d, "lr", rc.adam.lr);
  if (d.contains("lr")) rc.schedule.base_lr = rc.adam.lr;
  set_if(d, "weight_decay", rc.adam.weight_decay);
  set_if(d, "clip_norm", rc.adam.clip_norm);
  set_if(d, "warmup_steps", rc.schedule.warmup_steps);
  set_if(d, "total_steps", rc.schedule.total_steps);
  set_if(d, "floor_lr", rc.schedule.floor_lr);
  set_if(d, "cosine", rc.schedule.cosine);
  return rc;
}

ProbeConfig probe_config_from_dict(const py::dict& d) {
  ProbeConfig pc;
  set_if(d, "epochs", pc.epochs);
  set_if(d, "batch_size", pc.batch_size);
  set_if(d, "lr", pc.lr);
  set_if(d, "weight_decay", pc.weight_decay);
  set_if(d, "seed", pc.seed);
  return pc;
}

FinetuneConfig finetune_config_from_dict(const py::dict& d) {
  FinetuneConfig ft;
  set_if(d, "epochs", ft.epochs);
  set_if(d, "batch_size", ft.batch_size);
  set_if(d, "lr", ft.lr);
  set_if(d, "weight_decay", ft.weight_decay);
  set_if(d, "clip_norm", ft.clip_norm);
  set_if(d, "mixup", ft.mixup);
  set_if(d, "mixup_alpha", ft.mixup_alpha);
  set_if(d, "auto_augment", ft.auto_augment);
  set_if(d, "seed", ft.seed);
  return ft;
}

}  // namespace

PYBIND11_MODULE(_sit, m) {
  m.doc() = "Self-supervised vision transformer: model, pretext corruption, losses, "
            "training and evaluation protocols.";

  py::class_<PyModel>(m, "Model")
      .def(py::init([](uint64_t seed, const py::kwargs& kw) {
             return PyModel(py::dict(kw), seed);
           }),
           py::arg("seed") = 0)
      .def_static("from_checkpoint",
                  [](const std::string& path) { return PyModel(model_from_checkpoint_file(path)); },
                  py::arg("path"))
      .def_property_readonly("config", &PyModel::config)
      .def_property_readonly("parameter_count", &PyModel::parameter_count)
      .def("parameters", &PyModel::parameters)
      .def("encode", &PyModel::encode, py::arg("images"))
      .def("forward", &PyModel::forward, py::arg("images"))
      .def("forward_classifier", &PyModel::forward_classifier, py::arg("images"))
      .def("probe_features", &PyModel::probe_features, py::arg("images"))
      .def("predict", &PyModel::predict, py::arg("images"))
      .def("replace_heads", &PyModel::replace_heads, py::arg("classes"), py::arg("seed") = 17);

  m.def(
      "synthetic_dataset",
      [](int64_t n, int64_t image_size, int64_t channels, int64_t classes, uint64_t seed) {
        Dataset d = synthetic_dataset(n, image_size, channels, classes, seed);
        Tensor images({d.size(), d.channels, d.height, d.width});
        std::copy(d.images.begin(), d.images.end(), images.data());
        py::array_t<int64_t> labels(static_cast<py::ssize_t>(d.labels.size()));
        std::copy(d.labels.begin(), d.labels.end(), labels.mutable_data());
        return py::make_tuple(array_from_tensor(images), labels);
      },
      py::arg("n"), py::arg("image_size") = 32, py::arg("channels") = 3, py::arg("classes") = 10,
      py::arg("seed") = 0,
      "Plaid-pattern toy dataset; returns (images (N,C,H,W) float32, labels int64).");

  m.def(
      "l1_loss",
      [](const FloatArray& prediction, const FloatArray& target) {
        return l1_loss(tensor_from_array(prediction), tensor_from_array(target)).item();
      },
      py::arg("prediction"), py::arg("target"));

  m.def(
      "cross_entropy",
      [](const FloatArray& logits, const LabelArray& labels) {
        return cross_entropy(tensor_from_array(logits), labels_from_array(labels)).item();
      },
      py::arg("logits"), py::arg("labels"));

  m.def(
      "nt_xent",
      [](const FloatArray& embeddings, const LabelArray& pair_index, double temperature) {
        return nt_xent(tensor_from_array(embeddings), labels_from_array(pair_index), temperature)
            .item();
      },
      py::arg("embeddings"), py::arg("pair_index"), py::arg("temperature") = 0.5);

  m.def(
      "rotate90",
      [](const FloatArray& image, int64_t k) {
        return array_from_tensor(rotate90(tensor_from_array(image), k));
      },
      py::arg("image"), py::arg("k"),
      "k counter-clockwise quarter turns of a (C,H,W) image; exact permutation.");

  m.def(
      "corrupt",
      [](const FloatArray& image, const FloatArray& replacement_source, uint64_t seed,
         const py::kwargs& kw) {
        CorruptionParams params = corruption_from_dict(py::dict(kw));
        Rng rng(seed);
        CorruptResult result =
            corrupt(tensor_from_array(image), tensor_from_array(replacement_source), params, rng);
        py::array_t<uint8_t> mask({result.mask.grid_h, result.mask.grid_w});
        for (int64_t i = 0; i < result.mask.grid_h * result.mask.grid_w; ++i)
          mask.mutable_data()[i] = static_cast<uint8_t>(result.mask.labels[static_cast<size_t>(i)]);
        return py::make_tuple(array_from_tensor(result.image), mask);
      },
      py::arg("image"), py::arg("replacement_source"), py::arg("seed") = 0,
      "Applies drop/replace/grey/blur plus global colour distortion; returns "
      "(corrupted (C,H,W), patch label grid: 0 clean, 1 dropped, 2 replaced, 3 blurred, "
      "4 greyed).");

  m.def("corruption_self_check", &corruption_self_check, py::arg("seed"),
        "Empty string when the randomized corruption case keeps every invariant.");

  m.def(
      "lr_at",
      [](int64_t step, double base_lr, int64_t warmup_steps, int64_t total_steps, double floor_lr,
         bool cosine) {
        ScheduleConfig s;
        s.base_lr = base_lr;
        s.warmup_steps = warmup_steps;
        s.total_steps = total_steps;
        s.floor_lr = floor_lr;
        s.cosine = cosine;
        return lr_at(s, step);
      },
      py::arg("step"), py::arg("base_lr") = 5e-4, py::arg("warmup_steps") = 0,
      py::arg("total_steps") = 0, py::arg("floor_lr") = 0.0, py::arg("cosine") = true);

  m.def(
      "pretrain",
      [](const FloatArray& images, const LabelArray& labels, const py::kwargs& kw) {
        RunConfig rc = run_config_from_kwargs(kw);
        Dataset data = dataset_from_arrays(images, labels, 0, "ndarray");
        PretrainResult result = pretrain(data, rc);
        py::dict out;
        out["final_checkpoint"] = result.final_checkpoint;
        out["steps"] = result.steps_run;
        out["first_total"] = result.first_total;
        out["last_total"] = result.last_total;
        py::dict last;
        last["reconstruction"] = result.last.reconstruction;
        last["rotation"] = result.last.rotation;
        last["contrastive"] = result.last.contrastive;
        last["total"] = result.last.total;
        last["weights"] = py::make_tuple(result.last.weights[0], result.last.weights[1],
                                         result.last.weights[2]);
        out["last"] = last;
        return out;
      },
      py::arg("images"), py::arg("labels"),
      "Joint pretext pretraining. Keyword arguments mirror the run configuration "
      "(model=dict, tasks=(rec,rot,con), scheme, lr, epochs, batch_size, seed, out_dir, ...).");

  m.def(
      "linear_probe",
      [](const std::string& checkpoint, const FloatArray& train_images,
         const LabelArray& train_labels, const FloatArray& test_images,
         const LabelArray& test_labels, int64_t classes, const py::kwargs& kw) {
        Dataset train = dataset_from_arrays(train_images, train_labels, classes, "train");
        Dataset test = dataset_from_arrays(test_images, test_labels, classes, "test");
        ProbeConfig pc = probe_config_from_dict(py::dict(kw));
        return report_to_dict(linear_probe_checkpoint(checkpoint, train, test, pc));
      },
      py::arg("checkpoint"), py::arg("train_images"), py::arg("train_labels"),
      py::arg("test_images"), py::arg("test_labels"), py::arg("classes"),
      "Frozen-feature linear evaluation of a checkpoint.");

  m.def(
      "finetune",
      [](const std::string& checkpoint, const FloatArray& train_images,
         const LabelArray& train_labels, const FloatArray& test_images,
         const LabelArray& test_labels, int64_t classes, const std::string& save_checkpoint,
         const py::kwargs& kw) {
        Dataset train = dataset_from_arrays(train_images, train_labels, classes, "train");
        Dataset test = dataset_from_arrays(test_images, test_labels, classes, "test");
        FinetuneConfig ft = finetune_config_from_dict(py::dict(kw));
        FinetuneResult result = finetune(checkpoint, train, test, classes, ft, save_checkpoint);
        py::dict out;
        out["report"] = report_to_dict(result.report);
        out["train_accuracy"] = result.train_accuracy;
        out["checkpoint_path"] = result.checkpoint_path;
        return out;
      },
      py::arg("checkpoint"), py::arg("train_images"), py::arg("train_labels"),
      py::arg("test_images"), py::arg("test_labels"), py::arg("classes"),
      py::arg("save_checkpoint") = std::string(),
      "Replaces both task heads and trains the full network on labeled data.");

  m.def(
      "load_checkpoint",
      [](const std::string& path) {
        LoadedCheckpoint loaded = load_checkpoint(path);
        py::dict out;
        out["config"] = model_config_to_dict(loaded.config);
        py::dict params;
        for (const auto& p : loaded.params) params[p.name.c_str()] = array_from_tensor(p.tensor);
        out["params"] = params;
        out["has_state"] = loaded.has_state;
        if (loaded.has_state) {
          out["epoch"] = loaded.state.epoch;
          out["step"] = loaded.state.step;
        }
        return out;
      },
      py::arg("path"));

  m.def(
      "gradcheck",
      [](double tolerance, uint64_t seed) {
        py::list out;
        for (const GradCheckLine& line : run_gradcheck_suite(tolerance, seed))
          out.append(py::make_tuple(line.name, line.max_rel_err, line.pass));
        return out;
      },
      py::arg("tolerance") = 1e-4, py::arg("seed") = 7,
      "Finite-difference audit of every operator and composite; returns a list of "
      "(name, max_rel_err, pass).");
}
