#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sit/rng.hpp"
#include "sit/tensor.hpp"

namespace sit {

/// Per-view augmentation: random resized crop, horizontal flip, colour
/// jitter. All images are CHW float in [0,1] with three channels.
struct AugmentParams {
  double crop_scale_min = 0.5;  // area fraction of the source image
  double crop_scale_max = 1.0;
  double hflip_prob = 0.5;
  double brightness = 0.4;  // factor drawn from 1 +/- strength
  double contrast = 0.4;
  double saturation = 0.4;

  void validate() const;
};

/// Local patch corruptions plus a global colour distortion. Patch blocks are
/// axis-aligned rectangles measured in patch units; every affected patch
/// receives exactly one label.
struct CorruptionParams {
  int64_t patch_size = 4;
  double drop_fraction_min = 0.10;  // patches overwritten with uniform noise
  double drop_fraction_max = 0.30;
  double replace_fraction_min = 0.05;  // patches copied from another image
  double replace_fraction_max = 0.15;
  int64_t block_patches_min = 1;  // rectangle side lengths, in patches
  int64_t block_patches_max = 4;
  int64_t grey_blocks_min = 1;
  int64_t grey_blocks_max = 3;
  int64_t blur_blocks_min = 1;
  int64_t blur_blocks_max = 3;
  double blur_sigma = 1.0;
  int64_t blur_kernel = 5;  // odd
  double colour_strength = 0.4;  // global jitter after local damage

  void validate(int64_t height, int64_t width) const;

  static CorruptionParams disabled(int64_t patch_size);
};

enum class PatchLabel : uint8_t {
  kClean = 0,
  kDropped = 1,
  kReplaced = 2,
  kBlurred = 3,
  kGreyed = 4,
};

struct CorruptionMask {
  int64_t grid_h = 0;
  int64_t grid_w = 0;
  std::vector<PatchLabel> labels;  // row-major, grid_h * grid_w

  int64_t count(PatchLabel label) const;
  double fraction(PatchLabel label) const;
};

struct CorruptResult {
  Tensor image;
  CorruptionMask mask;
};

/// Two augmented views per source image, each independently rotated and
/// corrupted. Views of source i sit at rows 2i and 2i+1.
struct PretextBatch {
  Tensor corrupted_views;              // (2N, C, H, W), model inputs
  Tensor clean_targets;                // (2N, C, H, W), rotated but uncorrupted
  std::vector<int64_t> rotation_labels;  // in [0,4), one per view
  std::vector<int64_t> pair_index;       // fixed-point-free involution
  std::vector<CorruptionMask> masks;
};

/// Crop (area fraction from the scale range, resized back bilinearly), flip,
/// then brightness/contrast/saturation jitter; output clamped to [0,1]. A
/// crop that would fall below one pixel uses the full frame instead. Draw
/// order per call: scale, top, left, flip, brightness, contrast, saturation.
Tensor augment_view(const Tensor& image, const AugmentParams& params, Rng& rng);

/// k quarter-turns counter-clockwise; exact pixel permutation. For k=1 the
/// output at (r,c) reads the input at (c, W-1-r). Square images only.
Tensor rotate90(const Tensor& image, int64_t k);

/// 2D Gaussian weights, row-major size*size, normalized to sum 1.
std::vector<double> gaussian_kernel_2d(int64_t size, double sigma);

/// Applies, in order: drop (uniform noise), replace (same-location content
/// from replacement_source), grey (R=G=B luminance), blur (Gaussian,
/// edge-replicated reads of the pre-blur image), then the global colour
/// distortion; result clamped to [0,1]. Drop/replace patch counts are exact:
/// round(fraction * patches) with the final block trimmed in row-major
/// order. Grey/blur rectangles touch only still-clean patches.
CorruptResult corrupt(const Tensor& image, const Tensor& replacement_source,
                      const CorruptionParams& params, Rng& rng);

/// Augment -> rotate -> corrupt for every view; clean targets are captured
/// after rotation and before corruption. Replacement content comes from the
/// rotated clean view of a different source image, chosen uniformly.
PretextBatch make_pretext_batch(const Tensor& images, const AugmentParams& aug,
                                const CorruptionParams& corruption, Rng& rng);

/// Runs one randomized corruption case (geometry and params derived from the
/// seed) and checks the mask/pixel invariants: exact label accounting, drop
/// and replace fractions within the requested range (one patch of rounding
/// slack), greyed patches with equal channels, untouched clean patches and
///source-exact replaced patches when the colour distortion is off, outputs in
/// [0,1], bit-exact determinism, and identity under all-zero params. Returns
/// an empty string on success, else a description of the first violation.
std::string corruption_self_check(uint64_t seed);

}  // namespace sit
