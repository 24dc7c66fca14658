#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sit/tensor.hpp"

namespace sit {

// In-memory image classification dataset: float pixels in [0,1], NCHW layout.
// labels may be -1 throughout for unlabeled data (num_classes 0).
struct Dataset {
  std::string name;
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;
  int64_t num_classes = 0;
  std::vector<float> images;
  std::vector<int64_t> labels;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  int64_t image_numel() const { return channels * height * width; }
  const float* image(int64_t i) const { return images.data() + i * image_numel(); }
  // Stacks the selected images into a (B,C,H,W) tensor.
  Tensor batch(const std::vector<int64_t>& indices) const;
  std::vector<int64_t> batch_labels(const std::vector<int64_t>& indices) const;
  void validate() const;
};

// CIFAR-10 binary format: 3073-byte records, one label byte then 3072 pixel
// bytes (RGB planes, row-major 32x32). path is either a single .bin file or a
// directory holding data_batch_1..5.bin and test_batch.bin. limit > 0 keeps
// only the first records.
Dataset load_cifar10(const std::string& path, bool train, int64_t limit = 0);

// CIFAR-100 binary format: 3074-byte records (coarse byte, fine byte, pixels).
// The fine label is kept. path is a file or a directory with train.bin and
// test.bin.
Dataset load_cifar100(const std::string& path, bool train, int64_t limit = 0);

// STL-10 binary format: 96x96x3 images stored column-major per channel, one
// optional label file of bytes 1..10. Empty labels_path loads the images as
// unlabeled (all labels -1).
Dataset load_stl10(const std::string& images_path, const std::string& labels_path, int64_t limit = 0);

// Procedural dataset, deterministic in seed. Each class is a low-frequency
// plaid (a class-specific frequency pair plus a class-specific colour cast);
// instances vary by random phase, brightness and pixel noise, so the class is
// recoverable from structure, not from any single pixel.
Dataset synthetic_dataset(int64_t n, int64_t image_size, int64_t channels, int64_t num_classes, uint64_t seed);

// Stratified index selection: per class, a deterministic shuffle keeps
// max(1, floor(fraction * count)) examples. fraction must lie in (0, 1].
// Returned indices are sorted.
std::vector<int64_t> few_shot_split(const Dataset& dataset, double fraction, uint64_t seed);

Dataset subset(const Dataset& dataset, const std::vector<int64_t>& indices);

// Bilinear resize of every image to new_size x new_size.
Dataset resize_dataset(const Dataset& dataset, int64_t new_size);

}  // namespace sit
