#include "sit/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "sit/rng.hpp"

namespace sit {

Tensor Dataset::batch(const std::vector<int64_t>& indices) const {
  if (indices.empty()) throw std::invalid_argument("batch: no indices");
  const int64_t pix = image_numel();
  Tensor out({static_cast<int64_t>(indices.size()), channels, height, width});
  float* dst = out.data();
  for (size_t i = 0; i < indices.size(); ++i) {
    const int64_t idx = indices[i];
    if (idx < 0 || idx >= size()) throw std::invalid_argument("batch: index out of range");
    std::copy_n(image(idx), pix, dst + static_cast<int64_t>(i) * pix);
  }
  return out;
}

std::vector<int64_t> Dataset::batch_labels(const std::vector<int64_t>& indices) const {
  std::vector<int64_t> out;
  out.reserve(indices.size());
  for (int64_t idx : indices) {
    if (idx < 0 || idx >= size()) throw std::invalid_argument("batch_labels: index out of range");
    out.push_back(labels[static_cast<size_t>(idx)]);
  }
  return out;
}

void Dataset::validate() const {
  if (channels <= 0 || height <= 0 || width <= 0) throw std::invalid_argument("dataset: bad geometry");
  if (static_cast<int64_t>(images.size()) != size() * image_numel()) {
    throw std::invalid_argument("dataset: image buffer does not match label count");
  }
  for (int64_t l : labels) {
    if (l < -1 || (num_classes > 0 && l >= num_classes)) throw std::invalid_argument("dataset: label out of range");
  }
}

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff len = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> buf(static_cast<size_t>(len));
  in.read(reinterpret_cast<char*>(buf.data()), len);
  if (!in) throw std::runtime_error("short read on " + path);
  return buf;
}

// Shared CIFAR record walker; label_bytes is 1 (CIFAR-10) or 2 (CIFAR-100,
// keeping the second, fine byte).
void append_cifar_records(Dataset& d, const std::string& path, int64_t label_bytes, int64_t limit) {
  const std::vector<uint8_t> buf = read_file(path);
  const int64_t record = label_bytes + 3072;
  if (buf.empty() || static_cast<int64_t>(buf.size()) % record != 0) {
    throw std::runtime_error(path + ": size " + std::to_string(buf.size()) + " is not a multiple of " +
                             std::to_string(record) + "-byte records");
  }
  const int64_t n = static_cast<int64_t>(buf.size()) / record;
  for (int64_t i = 0; i < n; ++i) {
    if (limit > 0 && d.size() >= limit) return;
    const uint8_t* rec = buf.data() + i * record;
    d.labels.push_back(rec[label_bytes - 1]);
    const uint8_t* pix = rec + label_bytes;
    for (int64_t j = 0; j < 3072; ++j) d.images.push_back(static_cast<float>(pix[j]) / 255.0f);
  }
}

std::vector<std::string> cifar_files(const std::string& path, bool train, bool cifar100) {
  if (!std::filesystem::is_directory(path)) return {path};
  std::vector<std::string> files;
  if (cifar100) {
    files.push_back(path + (train ? "/train.bin" : "/test.bin"));
  } else if (train) {
    for (int i = 1; i <= 5; ++i) files.push_back(path + "/data_batch_" + std::to_string(i) + ".bin");
  } else {
    files.push_back(path + "/test_batch.bin");
  }
  return files;
}

}  // namespace

Dataset load_cifar10(const std::string& path, bool train, int64_t limit) {
  Dataset d;
  d.name = "cifar10";
  d.channels = 3;
  d.height = 32;
  d.width = 32;
  d.num_classes = 10;
  for (const std::string& f : cifar_files(path, train, false)) append_cifar_records(d, f, 1, limit);
  d.validate();
  return d;
}

Dataset load_cifar100(const std::string& path, bool train, int64_t limit) {
  Dataset d;
  d.name = "cifar100";
  d.channels = 3;
  d.height = 32;
  d.width = 32;
  d.num_classes = 100;
  for (const std::string& f : cifar_files(path, train, true)) append_cifar_records(d, f, 2, limit);
  d.validate();
  return d;
}

Dataset load_stl10(const std::string& images_path, const std::string& labels_path, int64_t limit) {
  Dataset d;
  d.name = "stl10";
  d.channels = 3;
  d.height = 96;
  d.width = 96;
  const std::vector<uint8_t> buf = read_file(images_path);
  const int64_t bytes_per = 3 * 96 * 96;
  if (buf.empty() || static_cast<int64_t>(buf.size()) % bytes_per != 0) {
    throw std::runtime_error(images_path + ": size is not a multiple of " + std::to_string(bytes_per));
  }
  int64_t n = static_cast<int64_t>(buf.size()) / bytes_per;
  std::vector<uint8_t> raw_labels;
  if (!labels_path.empty()) {
    raw_labels = read_file(labels_path);
    if (static_cast<int64_t>(raw_labels.size()) != n) {
      throw std::runtime_error(labels_path + ": " + std::to_string(raw_labels.size()) + " labels for " +
                               std::to_string(n) + " images");
    }
    d.num_classes = 10;
  }
  if (limit > 0) n = std::min(n, limit);
  d.images.resize(static_cast<size_t>(n * bytes_per));
  for (int64_t i = 0; i < n; ++i) {
    const uint8_t* src = buf.data() + i * bytes_per;
    float* dst = d.images.data() + i * bytes_per;
    // stored column-major inside each channel plane
    for (int64_t c = 0; c < 3; ++c) {
      for (int64_t x = 0; x < 96; ++x) {
        for (int64_t y = 0; y < 96; ++y) {
          dst[(c * 96 + y) * 96 + x] = static_cast<float>(src[c * 96 * 96 + x * 96 + y]) / 255.0f;
        }
      }
    }
    if (!labels_path.empty()) {
      const int64_t lab = raw_labels[static_cast<size_t>(i)];
      if (lab < 1 || lab > 10) throw std::runtime_error(labels_path + ": label byte outside 1..10");
      d.labels.push_back(lab - 1);
    } else {
      d.labels.push_back(-1);
    }
  }
  d.validate();
  return d;
}

Dataset synthetic_dataset(int64_t n, int64_t image_size, int64_t channels, int64_t num_classes, uint64_t seed) {
  if (n <= 0 || image_size <= 0 || channels <= 0 || num_classes <= 0) {
    throw std::invalid_argument("synthetic_dataset: all sizes must be positive");
  }
  Dataset d;
  d.name = "synthetic";
  d.channels = channels;
  d.height = image_size;
  d.width = image_size;
  d.num_classes = num_classes;
  d.images.resize(static_cast<size_t>(n * channels * image_size * image_size));
  d.labels.resize(static_cast<size_t>(n));
  Rng rng(seed);
  const double tau = 6.283185307179586;
  for (int64_t i = 0; i < n; ++i) {
    const int64_t k = i % num_classes;
    d.labels[static_cast<size_t>(i)] = k;
    const double fx = 1.0 + static_cast<double>(k % 3);
    const double fy = 1.0 + static_cast<double>((k / 3) % 3);
    const double phase = rng.uniform(0.0, tau);
    const double brightness = rng.uniform(-0.08, 0.08);
    float* img = d.images.data() + i * channels * image_size * image_size;
    for (int64_t c = 0; c < channels; ++c) {
      const double cast =
          0.15 * std::sin(tau * static_cast<double>(k) / static_cast<double>(num_classes) +
                          tau * static_cast<double>(c) / 3.0);
      for (int64_t y = 0; y < image_size; ++y) {
        for (int64_t x = 0; x < image_size; ++x) {
          const double wave = 0.22 * std::sin(tau * (fx * static_cast<double>(x) / static_cast<double>(image_size) +
                                                     fy * static_cast<double>(y) / static_cast<double>(image_size)) +
                                              phase);
          double v = 0.5 + wave + cast + brightness + rng.uniform(-0.06, 0.06);
          v = std::min(1.0, std::max(0.0, v));
          img[(c * image_size + y) * image_size + x] = static_cast<float>(v);
        }
      }
    }
  }
  return d;
}

std::vector<int64_t> few_shot_split(const Dataset& dataset, double fraction, uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw std::invalid_argument("few_shot_split: fraction must lie in (0,1]");
  }
  if (dataset.num_classes <= 0) throw std::invalid_argument("few_shot_split: dataset has no labels");
  std::vector<std::vector<int64_t>> per_class(static_cast<size_t>(dataset.num_classes));
  for (int64_t i = 0; i < dataset.size(); ++i) {
    const int64_t l = dataset.labels[static_cast<size_t>(i)];
    if (l < 0) throw std::invalid_argument("few_shot_split: unlabeled example present");
    per_class[static_cast<size_t>(l)].push_back(i);
  }
  std::vector<int64_t> keep;
  for (size_t k = 0; k < per_class.size(); ++k) {
    auto& idx = per_class[k];
    if (idx.empty()) continue;
    Rng rng = Rng::derive(seed, k);
    rng.shuffle(idx.begin(), idx.end());
    const int64_t count =
        std::max<int64_t>(1, static_cast<int64_t>(std::floor(fraction * static_cast<double>(idx.size()))));
    keep.insert(keep.end(), idx.begin(), idx.begin() + count);
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

Dataset subset(const Dataset& dataset, const std::vector<int64_t>& indices) {
  Dataset out;
  out.name = dataset.name;
  out.channels = dataset.channels;
  out.height = dataset.height;
  out.width = dataset.width;
  out.num_classes = dataset.num_classes;
  const int64_t pix = dataset.image_numel();
  out.images.reserve(indices.size() * static_cast<size_t>(pix));
  out.labels.reserve(indices.size());
  for (int64_t idx : indices) {
    if (idx < 0 || idx >= dataset.size()) throw std::invalid_argument("subset: index out of range");
    out.images.insert(out.images.end(), dataset.image(idx), dataset.image(idx) + pix);
    out.labels.push_back(dataset.labels[static_cast<size_t>(idx)]);
  }
  return out;
}

Dataset resize_dataset(const Dataset& dataset, int64_t new_size) {
  if (new_size <= 0) throw std::invalid_argument("resize_dataset: new_size must be positive");
  if (new_size == dataset.height && new_size == dataset.width) return dataset;
  Dataset out;
  out.name = dataset.name;
  out.channels = dataset.channels;
  out.height = new_size;
  out.width = new_size;
  out.num_classes = dataset.num_classes;
  out.labels = dataset.labels;
  out.images.resize(static_cast<size_t>(dataset.size() * dataset.channels * new_size * new_size));
  const int64_t h = dataset.height, w = dataset.width, c = dataset.channels;
  for (int64_t i = 0; i < dataset.size(); ++i) {
    const float* src = dataset.image(i);
    float* dst = out.images.data() + i * c * new_size * new_size;
    for (int64_t ch = 0; ch < c; ++ch) {
      for (int64_t y = 0; y < new_size; ++y) {
        for (int64_t x = 0; x < new_size; ++x) {
          const double sy = (static_cast<double>(y) + 0.5) * static_cast<double>(h) / static_cast<double>(new_size) - 0.5;
          const double sx = (static_cast<double>(x) + 0.5) * static_cast<double>(w) / static_cast<double>(new_size) - 0.5;
          const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(sy)), 0, h - 1);
          const int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(sx)), 0, w - 1);
          const int64_t y1 = std::min<int64_t>(y0 + 1, h - 1);
          const int64_t x1 = std::min<int64_t>(x0 + 1, w - 1);
          const double fy = std::clamp(sy - static_cast<double>(y0), 0.0, 1.0);
          const double fx = std::clamp(sx - static_cast<double>(x0), 0.0, 1.0);
          const double v00 = src[(ch * h + y0) * w + x0];
          const double v01 = src[(ch * h + y0) * w + x1];
          const double v10 = src[(ch * h + y1) * w + x0];
          const double v11 = src[(ch * h + y1) * w + x1];
          const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
          dst[(ch * new_size + y) * new_size + x] = static_cast<float>(v);
        }
      }
    }
  }
  return out;
}

}  // namespace sit
