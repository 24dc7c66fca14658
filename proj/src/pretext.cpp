#include "sit/pretext.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace sit {
namespace {

constexpr double kLumR = 0.299;
constexpr double kLumG = 0.587;
constexpr double kLumB = 0.114;

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

void check_chw(const Tensor& image, const char* who) {
  require(image.defined() && image.rank() == 3,
          std::string(who) + ": expected a CHW image tensor");
  require(image.dim(0) == 3, std::string(who) + ": expected 3 channels");
}

float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

/// Brightness scales, contrast pulls toward the mean luminance, saturation
/// pulls toward per-pixel luminance. Factors of exactly 1 are skipped so a
/// zero-strength jitter is bit-exact identity.
void apply_colour_jitter(float* px, int64_t hw, double fb, double fc, double fs) {
  float* r = px;
  float* g = px + hw;
  float* b = px + 2 * hw;
  if (fb != 1.0) {
    for (int64_t i = 0; i < 3 * hw; ++i) px[i] = static_cast<float>(px[i] * fb);
  }
  if (fc != 1.0) {
    double mean = 0.0;
    for (int64_t i = 0; i < hw; ++i) mean += kLumR * r[i] + kLumG * g[i] + kLumB * b[i];
    mean /= static_cast<double>(hw);
    for (int64_t i = 0; i < 3 * hw; ++i)
      px[i] = static_cast<float>((px[i] - mean) * fc + mean);
  }
  if (fs != 1.0) {
    for (int64_t i = 0; i < hw; ++i) {
      double lum = kLumR * r[i] + kLumG * g[i] + kLumB * b[i];
      r[i] = static_cast<float>(lum + (r[i] - lum) * fs);
      g[i] = static_cast<float>(lum + (g[i] - lum) * fs);
      b[i] = static_cast<float>(lum + (b[i] - lum) * fs);
    }
  }
}

double jitter_factor(double strength, Rng& rng) {
  return 1.0 + rng.uniform(-strength, strength);
}

/// Bilinear resize of a crop window back to the full frame, matching the
/// half-pixel-center (align_corners=false) convention of the dataset resizer.
Tensor crop_resize(const Tensor& image, int64_t top, int64_t left, int64_t side) {
  const int64_t h = image.dim(1);
  const int64_t w = image.dim(2);
  if (side == h && side == w && top == 0 && left == 0) return Tensor(image.shape(), image.values());
  Tensor out(image.shape());
  const float* src = image.data();
  float* dst = out.data();
  const double sy = static_cast<double>(side) / static_cast<double>(h);
  const double sx = static_cast<double>(side) / static_cast<double>(w);
  for (int64_t y = 0; y < h; ++y) {
    double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(side - 1));
    const int64_t y0 = static_cast<int64_t>(fy);
    const int64_t y1 = std::min(y0 + 1, side - 1);
    const double wy = fy - static_cast<double>(y0);
    for (int64_t x = 0; x < w; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(side - 1));
      const int64_t x0 = static_cast<int64_t>(fx);
      const int64_t x1 = std::min(x0 + 1, side - 1);
      const double wx = fx - static_cast<double>(x0);
      for (int64_t c = 0; c < 3; ++c) {
        const float* plane = src + c * h * w;
        const double v00 = plane[(top + y0) * w + left + x0];
        const double v01 = plane[(top + y0) * w + left + x1];
        const double v10 = plane[(top + y1) * w + left + x0];
        const double v11 = plane[(top + y1) * w + left + x1];
        const double v = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                         wy * ((1.0 - wx) * v10 + wx * v11);
        dst[(c * h + y) * w + x] = static_cast<float>(v);
      }
    }
  }
  return out;
}

struct Claimer {
  CorruptionMask* mask;
  const CorruptionParams* params;
  int64_t grid_h;
  int64_t grid_w;

  PatchLabel& label_at(int64_t r, int64_t c) {
    return mask->labels[static_cast<size_t>(r * grid_w + c)];
  }

  /// Draws one rectangle (sides in patch units, clamped to the grid) and
  /// claims its still-clean patches in row-major order, stopping at `budget`.
  /// Returns how many were claimed.
  template <typename Apply>
  int64_t claim_block(PatchLabel label, int64_t budget, Rng& rng, Apply&& apply) {
    const int64_t span = params->block_patches_max - params->block_patches_min + 1;
    int64_t bh = params->block_patches_min + rng.uniform_int(span);
    int64_t bw = params->block_patches_min + rng.uniform_int(span);
    bh = std::min(bh, grid_h);
    bw = std::min(bw, grid_w);
    const int64_t top = rng.uniform_int(grid_h - bh + 1);
    const int64_t left = rng.uniform_int(grid_w - bw + 1);
    int64_t claimed = 0;
    for (int64_t r = top; r < top + bh && claimed < budget; ++r) {
      for (int64_t c = left; c < left + bw && claimed < budget; ++c) {
        if (label_at(r, c) != PatchLabel::kClean) continue;
        label_at(r, c) = label;
        apply(r, c);
        ++claimed;
      }
    }
    return claimed;
  }

  /// Places random blocks until exactly `target` patches carry `label`. A
  /// deterministic row-major sweep finishes the job if random placement
  /// stalls against already-claimed regions.
  template <typename Apply>
  void claim_exact(PatchLabel label, int64_t target, Rng& rng, Apply&& apply) {
    int64_t placed = 0;
    int64_t attempts = 0;
    const int64_t attempt_cap = 16 * grid_h * grid_w + 64;
    while (placed < target && attempts < attempt_cap) {
      placed += claim_block(label, target - placed, rng, apply);
      ++attempts;
    }
    for (int64_t i = 0; placed < target && i < grid_h * grid_w; ++i) {
      if (mask->labels[static_cast<size_t>(i)] != PatchLabel::kClean) continue;
      mask->labels[static_cast<size_t>(i)] = label;
      apply(i / grid_w, i % grid_w);
      ++placed;
    }
  }
};

}  // namespace

void AugmentParams::validate() const {
  require(crop_scale_min > 0.0 && crop_scale_max <= 1.0 &&
              crop_scale_min <= crop_scale_max,
          "AugmentParams: crop scale range must lie within (0,1]");
  require(hflip_prob >= 0.0 && hflip_prob <= 1.0,
          "AugmentParams: hflip_prob must lie in [0,1]");
  require(brightness >= 0.0 && contrast >= 0.0 && saturation >= 0.0 &&
              brightness <= 1.0 && contrast <= 1.0 && saturation <= 1.0,
          "AugmentParams: jitter strengths must lie in [0,1]");
}

void CorruptionParams::validate(int64_t height, int64_t width) const {
  require(patch_size >= 1, "CorruptionParams: patch_size must be positive");
  require(height % patch_size == 0 && width % patch_size == 0,
          "CorruptionParams: image size must be divisible by patch_size");
  auto frac_range = [](double lo, double hi) {
    return lo >= 0.0 && hi <= 1.0 && lo <= hi;
  };
  require(frac_range(drop_fraction_min, drop_fraction_max),
          "CorruptionParams: drop fraction range must lie within [0,1]");
  require(frac_range(replace_fraction_min, replace_fraction_max),
          "CorruptionParams: replace fraction range must lie within [0,1]");
  require(drop_fraction_max + replace_fraction_max <= 1.0,
          "CorruptionParams: drop and replace fractions may not exceed the image");
  require(block_patches_min >= 1 && block_patches_min <= block_patches_max,
          "CorruptionParams: block extent range is invalid");
  require(grey_blocks_min >= 0 && grey_blocks_min <= grey_blocks_max,
          "CorruptionParams: grey block count range is invalid");
  require(blur_blocks_min >= 0 && blur_blocks_min <= blur_blocks_max,
          "CorruptionParams: blur block count range is invalid");
  require(blur_sigma > 0.0, "CorruptionParams: blur_sigma must be positive");
  require(blur_kernel >= 1 && blur_kernel % 2 == 1,
          "CorruptionParams: blur_kernel must be odd");
  require(colour_strength >= 0.0 && colour_strength <= 1.0,
          "CorruptionParams: colour_strength must lie in [0,1]");
}

CorruptionParams CorruptionParams::disabled(int64_t patch) {
  CorruptionParams p;
  p.patch_size = patch;
  p.drop_fraction_min = p.drop_fraction_max = 0.0;
  p.replace_fraction_min = p.replace_fraction_max = 0.0;
  p.grey_blocks_min = p.grey_blocks_max = 0;
  p.blur_blocks_min = p.blur_blocks_max = 0;
  p.colour_strength = 0.0;
  return p;
}

int64_t CorruptionMask::count(PatchLabel label) const {
  return static_cast<int64_t>(
      std::count(labels.begin(), labels.end(), label));
}

double CorruptionMask::fraction(PatchLabel label) const {
  if (labels.empty()) return 0.0;
  return static_cast<double>(count(label)) / static_cast<double>(labels.size());
}

Tensor augment_view(const Tensor& image, const AugmentParams& params, Rng& rng) {
  check_chw(image, "augment_view");
  params.validate();
  const int64_t h = image.dim(1);
  const int64_t w = image.dim(2);
  require(h == w, "augment_view: expected a square image");

  const double area = rng.uniform(params.crop_scale_min, params.crop_scale_max);
  int64_t side = static_cast<int64_t>(std::llround(std::sqrt(area) * static_cast<double>(h)));
  if (side < 1 || side > h) side = h;  // degenerate crop falls back to the full frame
  const int64_t top = rng.uniform_int(h - side + 1);
  const int64_t left = rng.uniform_int(w - side + 1);
  Tensor out = crop_resize(image, top, left, side);

  const bool flip = rng.uniform01() < params.hflip_prob;
  if (flip) {
    float* px = out.data();
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < h; ++y)
        std::reverse(px + (c * h + y) * w, px + (c * h + y) * w + w);
  }

  const double fb = jitter_factor(params.brightness, rng);
  const double fc = jitter_factor(params.contrast, rng);
  const double fs = jitter_factor(params.saturation, rng);
  apply_colour_jitter(out.data(), h * w, fb, fc, fs);

  float* px = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) px[i] = clamp01(px[i]);
  return out;
}

Tensor rotate90(const Tensor& image, int64_t k) {
  require(image.defined() && image.rank() == 3, "rotate90: expected a CHW image tensor");
  require(k >= 0 && k <= 3, "rotate90: k must lie in [0,3]");
  const int64_t c = image.dim(0);
  const int64_t n = image.dim(1);
  require(image.dim(2) == n, "rotate90: expected a square image");
  if (k == 0) return Tensor(image.shape(), image.values());
  Tensor out(image.shape());
  const float* src = image.data();
  float* dst = out.data();
  for (int64_t ch = 0; ch < c; ++ch) {
    const float* in = src + ch * n * n;
    float* o = dst + ch * n * n;
    for (int64_t r = 0; r < n; ++r) {
      for (int64_t col = 0; col < n; ++col) {
        int64_t sr = 0, sc = 0;
        switch (k) {
          case 1: sr = col; sc = n - 1 - r; break;
          case 2: sr = n - 1 - r; sc = n - 1 - col; break;
          default: sr = n - 1 - col; sc = r; break;
        }
        o[r * n + col] = in[sr * n + sc];
      }
    }
  }
  return out;
}

std::vector<double> gaussian_kernel_2d(int64_t size, double sigma) {
  require(size >= 1 && size % 2 == 1, "gaussian_kernel_2d: size must be odd");
  require(sigma > 0.0, "gaussian_kernel_2d: sigma must be positive");
  const int64_t rad = size / 2;
  std::vector<double> k(static_cast<size_t>(size * size));
  double sum = 0.0;
  for (int64_t dy = -rad; dy <= rad; ++dy)
    for (int64_t dx = -rad; dx <= rad; ++dx) {
      const double v = std::exp(-(static_cast<double>(dy * dy + dx * dx)) / (2.0 * sigma * sigma));
      k[static_cast<size_t>((dy + rad) * size + dx + rad)] = v;
      sum += v;
    }
  for (double& v : k) v /= sum;
  return k;
}

CorruptResult corrupt(const Tensor& image, const Tensor& replacement_source,
                      const CorruptionParams& params, Rng& rng) {
  check_chw(image, "corrupt");
  require(replacement_source.defined() && replacement_source.shape() == image.shape(),
          "corrupt: replacement_source must match the image shape");
  const int64_t h = image.dim(1);
  const int64_t w = image.dim(2);
  params.validate(h, w);
  const int64_t p = params.patch_size;
  const int64_t gh = h / p;
  const int64_t gw = w / p;
  const int64_t total = gh * gw;

  CorruptResult result;
  result.image = Tensor(image.shape(), image.values());
  result.mask.grid_h = gh;
  result.mask.grid_w = gw;
  result.mask.labels.assign(static_cast<size_t>(total), PatchLabel::kClean);

  float* px = result.image.data();
  const float* src = replacement_source.data();
  const int64_t hw = h * w;
  auto patch_pixels = [&](int64_t r, int64_t c, auto&& fn) {
    for (int64_t ch = 0; ch < 3; ++ch)
      for (int64_t y = r * p; y < (r + 1) * p; ++y)
        for (int64_t x = c * p; x < (c + 1) * p; ++x) fn(ch * hw + y * w + x);
  };

  Claimer claimer{&result.mask, &params, gh, gw};

  const double drop_frac = rng.uniform(params.drop_fraction_min, params.drop_fraction_max);
  int64_t n_drop = std::llround(drop_frac * static_cast<double>(total));
  n_drop = std::min(n_drop, total);
  claimer.claim_exact(PatchLabel::kDropped, n_drop, rng, [&](int64_t r, int64_t c) {
    patch_pixels(r, c, [&](int64_t i) { px[i] = static_cast<float>(rng.uniform01()); });
  });

  const double repl_frac = rng.uniform(params.replace_fraction_min, params.replace_fraction_max);
  int64_t n_repl = std::llround(repl_frac * static_cast<double>(total));
  n_repl = std::min(n_repl, total - n_drop);
  claimer.claim_exact(PatchLabel::kReplaced, n_repl, rng, [&](int64_t r, int64_t c) {
    patch_pixels(r, c, [&](int64_t i) { px[i] = src[i]; });
  });

  const int64_t n_grey = params.grey_blocks_min +
      rng.uniform_int(params.grey_blocks_max - params.grey_blocks_min + 1);
  for (int64_t b = 0; b < n_grey; ++b) {
    claimer.claim_block(PatchLabel::kGreyed, total, rng, [&](int64_t r, int64_t c) {
      for (int64_t y = r * p; y < (r + 1) * p; ++y)
        for (int64_t x = c * p; x < (c + 1) * p; ++x) {
          const int64_t i = y * w + x;
          const float lum = static_cast<float>(
              kLumR * px[i] + kLumG * px[hw + i] + kLumB * px[2 * hw + i]);
          px[i] = px[hw + i] = px[2 * hw + i] = lum;
        }
    });
  }

  const int64_t n_blur = params.blur_blocks_min +
      rng.uniform_int(params.blur_blocks_max - params.blur_blocks_min + 1);
  std::vector<std::pair<int64_t, int64_t>> blurred;
  for (int64_t b = 0; b < n_blur; ++b) {
    claimer.claim_block(PatchLabel::kBlurred, total, rng,
                        [&](int64_t r, int64_t c) { blurred.emplace_back(r, c); });
  }
  if (!blurred.empty()) {
    const std::vector<float> snapshot(result.image.values());
    const std::vector<double> kernel = gaussian_kernel_2d(params.blur_kernel, params.blur_sigma);
    const int64_t rad = params.blur_kernel / 2;
    for (const auto& [r, c] : blurred) {
      for (int64_t ch = 0; ch < 3; ++ch) {
        const float* plane = snapshot.data() + ch * hw;
        for (int64_t y = r * p; y < (r + 1) * p; ++y)
          for (int64_t x = c * p; x < (c + 1) * p; ++x) {
            double acc = 0.0;
            for (int64_t dy = -rad; dy <= rad; ++dy) {
              const int64_t yy = std::min(std::max<int64_t>(y + dy, 0), h - 1);
              for (int64_t dx = -rad; dx <= rad; ++dx) {
                const int64_t xx = std::min(std::max<int64_t>(x + dx, 0), w - 1);
                acc += kernel[static_cast<size_t>((dy + rad) * params.blur_kernel + dx + rad)] *
                       plane[yy * w + xx];
              }
            }
            px[ch * hw + y * w + x] = static_cast<float>(acc);
          }
      }
    }
  }

  const double fb = jitter_factor(params.colour_strength, rng);
  const double fc = jitter_factor(params.colour_strength, rng);
  const double fs = jitter_factor(params.colour_strength, rng);
  apply_colour_jitter(px, hw, fb, fc, fs);
  for (int64_t i = 0; i < result.image.numel(); ++i) px[i] = clamp01(px[i]);
  return result;
}

PretextBatch make_pretext_batch(const Tensor& images, const AugmentParams& aug,
                                const CorruptionParams& corruption, Rng& rng) {
  require(images.defined() && images.rank() == 4,
          "make_pretext_batch: expected an NCHW image batch");
  const int64_t n = images.dim(0);
  require(n >= 2, "make_pretext_batch: need at least two samples for contrastive pairs");
  require(images.dim(1) == 3, "make_pretext_batch: expected 3 channels");
  const int64_t h = images.dim(2);
  const int64_t w = images.dim(3);
  const int64_t chw = 3 * h * w;
  aug.validate();
  corruption.validate(h, w);

  PretextBatch batch;
  batch.corrupted_views = Tensor({2 * n, 3, h, w});
  batch.clean_targets = Tensor({2 * n, 3, h, w});
  batch.rotation_labels.resize(static_cast<size_t>(2 * n));
  batch.pair_index.resize(static_cast<size_t>(2 * n));
  batch.masks.resize(static_cast<size_t>(2 * n));

  std::vector<Tensor> clean(static_cast<size_t>(2 * n));
  for (int64_t i = 0; i < n; ++i) {
    Tensor img({3, h, w});
    std::memcpy(img.data(), images.data() + i * chw, sizeof(float) * static_cast<size_t>(chw));
    for (int64_t v = 0; v < 2; ++v) {
      const int64_t idx = 2 * i + v;
      Tensor view = augment_view(img, aug, rng);
      const int64_t k = rng.uniform_int(4);
      clean[static_cast<size_t>(idx)] = rotate90(view, k);
      batch.rotation_labels[static_cast<size_t>(idx)] = k;
      batch.pair_index[static_cast<size_t>(idx)] = v == 0 ? idx + 1 : idx - 1;
      std::memcpy(batch.clean_targets.data() + idx * chw,
                  clean[static_cast<size_t>(idx)].data(),
                  sizeof(float) * static_cast<size_t>(chw));
    }
  }

  for (int64_t idx = 0; idx < 2 * n; ++idx) {
    // replacement content from a view of any other source image
    int64_t other = rng.uniform_int(2 * n - 2);
    if (other >= 2 * (idx / 2)) other += 2;
    CorruptResult r = corrupt(clean[static_cast<size_t>(idx)],
                              clean[static_cast<size_t>(other)], corruption, rng);
    std::memcpy(batch.corrupted_views.data() + idx * chw, r.image.data(),
                sizeof(float) * static_cast<size_t>(chw));
    batch.masks[static_cast<size_t>(idx)] = std::move(r.mask);
  }
  return batch;
}

std::string corruption_self_check(uint64_t seed) {
  Rng rng(seed);
  const int64_t grid = 2 + rng.uniform_int(5);
  const int64_t p = 2 + 2 * rng.uniform_int(2);
  const int64_t h = grid * p;
  const int64_t total = grid * grid;

  Tensor image({3, h, h});
  Tensor source({3, h, h});
  for (int64_t i = 0; i < image.numel(); ++i) image.data()[i] = static_cast<float>(rng.uniform01());
  for (int64_t i = 0; i < source.numel(); ++i) source.data()[i] = static_cast<float>(rng.uniform01());

  CorruptionParams params;
  params.patch_size = p;
  const bool identity_case = seed % 37 == 0;
  if (identity_case) {
    params = CorruptionParams::disabled(p);
  } else {
    params.drop_fraction_min = rng.uniform(0.0, 0.5);
    params.drop_fraction_max = params.drop_fraction_min +
        rng.uniform(0.0, 0.5 - params.drop_fraction_min);
    params.replace_fraction_min = rng.uniform(0.0, 0.3);
    params.replace_fraction_max = params.replace_fraction_min +
        rng.uniform(0.0, 0.5 - params.replace_fraction_min);
    params.block_patches_min = 1;
    params.block_patches_max = 1 + rng.uniform_int(4);
    params.grey_blocks_min = rng.uniform_int(3);
    params.grey_blocks_max = params.grey_blocks_min + rng.uniform_int(3);
    params.blur_blocks_min = rng.uniform_int(3);
    params.blur_blocks_max = params.blur_blocks_min + rng.uniform_int(3);
    params.blur_sigma = rng.uniform(0.5, 2.0);
    params.blur_kernel = 3 + 2 * rng.uniform_int(2);
    params.colour_strength = seed % 4 == 0 ? rng.uniform(0.0, 0.4) : 0.0;
  }

  auto fail = [seed](const std::string& what) {
    return "corruption case " + std::to_string(seed) + ": " + what;
  };

  Rng corrupt_rng = Rng::derive(seed, 1);
  CorruptResult result = corrupt(image, source, params, corrupt_rng);
  const CorruptionMask& mask = result.mask;
  if (mask.grid_h != grid || mask.grid_w != grid ||
      mask.labels.size() != static_cast<size_t>(total))
    return fail("mask geometry does not match the patch grid");

  int64_t labeled = 0;
  for (PatchLabel l : mask.labels) {
    if (static_cast<uint8_t>(l) > 4) return fail("invalid patch label");
    if (l != PatchLabel::kClean) ++labeled;
  }
  if (labeled != mask.count(PatchLabel::kDropped) + mask.count(PatchLabel::kReplaced) +
                     mask.count(PatchLabel::kBlurred) + mask.count(PatchLabel::kGreyed))
    return fail("label counts do not account for every non-clean patch");

  const double slack = 1.0 / static_cast<double>(total);
  const double dropped = mask.fraction(PatchLabel::kDropped);
  if (dropped < params.drop_fraction_min - slack ||
      dropped > params.drop_fraction_max + slack)
    return fail("drop fraction outside the requested range");
  const double replaced = mask.fraction(PatchLabel::kReplaced);
  if (replaced < params.replace_fraction_min - 2.0 * slack ||
      replaced > params.replace_fraction_max + slack)
    return fail("replace fraction outside the requested range");

  const float* out = result.image.data();
  for (int64_t i = 0; i < result.image.numel(); ++i)
    if (!(out[i] >= 0.0f && out[i] <= 1.0f)) return fail("output pixel outside [0,1]");

  const int64_t hw = h * h;
  auto patch_equal = [&](int64_t r, int64_t c, const float* ref) {
    for (int64_t ch = 0; ch < 3; ++ch)
      for (int64_t y = r * p; y < (r + 1) * p; ++y)
        for (int64_t x = c * p; x < (c + 1) * p; ++x) {
          const int64_t i = ch * hw + y * h + x;
          if (out[i] != ref[i]) return false;
        }
    return true;
  };

  for (int64_t r = 0; r < grid; ++r) {
    for (int64_t c = 0; c < grid; ++c) {
      const PatchLabel l = mask.labels[static_cast<size_t>(r * grid + c)];
      if (l == PatchLabel::kGreyed) {
        for (int64_t y = r * p; y < (r + 1) * p; ++y)
          for (int64_t x = c * p; x < (c + 1) * p; ++x) {
            const int64_t i = y * h + x;
            if (out[i] != out[hw + i] || out[i] != out[2 * hw + i])
              return fail("greyed patch has unequal channels");
          }
      }
      if (params.colour_strength == 0.0) {
        if (l == PatchLabel::kClean && !patch_equal(r, c, image.data()))
          return fail("clean patch was modified");
        if (l == PatchLabel::kReplaced && !patch_equal(r, c, source.data()))
          return fail("replaced patch does not match the replacement source");
        if (l == PatchLabel::kDropped && patch_equal(r, c, image.data()))
          return fail("dropped patch kept its original content");
      }
    }
  }

  if (identity_case) {
    if (labeled != 0) return fail("all-zero params produced a non-clean mask");
    if (image.values() != result.image.values())
      return fail("all-zero params did not reproduce the input");
  }

  if (seed % 10 == 0) {
    Rng again = Rng::derive(seed, 1);
    CorruptResult repeat = corrupt(image, source, params, again);
    if (repeat.image.values() != result.image.values() || repeat.mask.labels != mask.labels)
      return fail("same seed did not reproduce the corruption bit-for-bit");
  }
  return std::string();
}

}  // namespace sit
