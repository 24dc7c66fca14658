#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "sit/pretext.hpp"
#include "sit/rng.hpp"
#include "sit/tensor.hpp"

using namespace sit;

namespace {

Tensor ramp_image(int64_t h, int64_t w) {
  Tensor t({3, h, w});
  for (int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<float>(i % 191) / 190.0f;
  return t;
}

Tensor random_image(int64_t h, int64_t w, Rng& rng) {
  Tensor t({3, h, w});
  for (int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<float>(rng.uniform01());
  return t;
}

uint64_t fnv1a(const float* data, int64_t n) {
  uint64_t hash = 1469598103934665603ull;
  for (int64_t i = 0; i < n; ++i) {
    uint32_t bits = 0;
    std::memcpy(&bits, data + i, sizeof(bits));
    for (int b = 0; b < 4; ++b) {
      hash ^= (bits >> (8 * b)) & 0xffu;
      hash *= 1099511628211ull;
    }
  }
  return hash;
}

AugmentParams identity_augment() {
  AugmentParams p;
  p.crop_scale_min = p.crop_scale_max = 1.0;
  p.hflip_prob = 0.0;
  p.brightness = p.contrast = p.saturation = 0.0;
  return p;
}

}  // namespace

TEST_CASE("augment_view with neutral params is the identity") {
  Rng rng(5);
  Tensor img = ramp_image(16, 16);
  Tensor out = augment_view(img, identity_augment(), rng);
  CHECK(out.values() == img.values());
}

TEST_CASE("horizontal flip applied twice restores the image") {
  AugmentParams p = identity_augment();
  p.hflip_prob = 1.0;
  Rng rng(6);
  Tensor img = ramp_image(8, 8);
  Tensor once = augment_view(img, p, rng);
  CHECK(once.values() != img.values());
  Tensor twice = augment_view(once, p, rng);
  CHECK(twice.values() == img.values());
}

TEST_CASE("augment_view is deterministic per seed and matches the frozen digest") {
  Tensor img = ramp_image(16, 16);
  AugmentParams p;
  Rng a(123);
  Rng b(123);
  Tensor va = augment_view(img, p, a);
  Tensor vb = augment_view(img, p, b);
  CHECK(va.values() == vb.values());
  for (int64_t i = 0; i < va.numel(); ++i) {
    CHECK(va.data()[i] >= 0.0f);
    CHECK(va.data()[i] <= 1.0f);
  }
  const uint64_t digest = fnv1a(va.data(), va.numel());
  CAPTURE(digest);
  CHECK(digest == 0xf4ad3427b2badca1ull);
}

TEST_CASE("augment_view validates its parameters") {
  Tensor img = ramp_image(8, 8);
  Rng rng(1);
  AugmentParams p;
  p.crop_scale_min = 0.0;
  CHECK_THROWS_AS(augment_view(img, p, rng), std::invalid_argument);
  p = AugmentParams{};
  p.hflip_prob = 1.5;
  CHECK_THROWS_AS(augment_view(img, p, rng), std::invalid_argument);
  Tensor grey({1, 8, 8});
  CHECK_THROWS_AS(augment_view(grey, AugmentParams{}, rng), std::invalid_argument);
}

TEST_CASE("rotate90 follows the counter-clockwise permutation") {
  Rng rng(7);
  Tensor img = random_image(6, 6, rng);
  const int64_t n = 6;

  Tensor r0 = rotate90(img, 0);
  CHECK(r0.values() == img.values());

  // transpose then reverse rows gives one counter-clockwise quarter turn
  auto reference_ccw = [n](const Tensor& in) {
    Tensor out(in.shape());
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t r = 0; r < n; ++r)
        for (int64_t col = 0; col < n; ++col)
          out.data()[(c * n + r) * n + col] = in.data()[(c * n + col) * n + (n - 1 - r)];
    return out;
  };

  Tensor expect = Tensor(img.shape(), img.values());
  for (int64_t k = 1; k <= 3; ++k) {
    expect = reference_ccw(expect);
    CHECK(rotate90(img, k).values() == expect.values());
  }

  Tensor cycle = Tensor(img.shape(), img.values());
  for (int i = 0; i < 4; ++i) cycle = rotate90(cycle, 1);
  CHECK(cycle.values() == img.values());

  CHECK_THROWS_AS(rotate90(img, 4), std::invalid_argument);
  CHECK_THROWS_AS(rotate90(Tensor({3, 4, 6}), 1), std::invalid_argument);
}

TEST_CASE("gaussian kernels are normalized and symmetric") {
  for (int64_t size : {3, 5, 7}) {
    for (double sigma : {0.5, 1.0, 2.0}) {
      std::vector<double> k = gaussian_kernel_2d(size, sigma);
      double sum = 0.0;
      for (double v : k) sum += v;
      CHECK(std::abs(sum - 1.0) < 1e-6);
      const size_t n = k.size();
      for (size_t i = 0; i < n; ++i) CHECK(k[i] == doctest::Approx(k[n - 1 - i]).epsilon(1e-12));
      CHECK(k[n / 2] >= k[0]);
    }
  }
  CHECK_THROWS_AS(gaussian_kernel_2d(4, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_kernel_2d(5, 0.0), std::invalid_argument);
}

TEST_CASE("blurring a constant image changes nothing") {
  Tensor img = Tensor::full({3, 16, 16}, 0.37f);
  CorruptionParams p = CorruptionParams::disabled(4);
  p.blur_blocks_min = p.blur_blocks_max = 3;
  Rng rng(11);
  CorruptResult r = corrupt(img, img, p, rng);
  CHECK(r.mask.count(PatchLabel::kBlurred) > 0);
  for (int64_t i = 0; i < r.image.numel(); ++i)
    CHECK(r.image.data()[i] == doctest::Approx(0.37f).epsilon(1e-6));
}

TEST_CASE("disabled corruption is a bit-exact identity") {
  Rng rng(21);
  Tensor img = random_image(12, 12, rng);
  Tensor src = random_image(12, 12, rng);
  CorruptResult r = corrupt(img, src, CorruptionParams::disabled(4), rng);
  CHECK(r.image.values() == img.values());
  CHECK(r.mask.count(PatchLabel::kClean) == 9);
  CHECK(r.mask.fraction(PatchLabel::kClean) == 1.0);
}

TEST_CASE("drop fraction one with unit blocks drops every patch") {
  Rng rng(22);
  Tensor img = random_image(16, 16, rng);
  CorruptionParams p = CorruptionParams::disabled(4);
  p.drop_fraction_min = p.drop_fraction_max = 1.0;
  p.block_patches_min = p.block_patches_max = 1;
  CorruptResult r = corrupt(img, img, p, rng);
  CHECK(r.mask.fraction(PatchLabel::kDropped) == 1.0);
  CHECK(r.image.values() != img.values());
}

TEST_CASE("greyed patches collapse to the luminance of the original") {
  Tensor red({3, 8, 8});
  for (int64_t i = 0; i < 64; ++i) red.data()[i] = 1.0f;  // pure red image
  CorruptionParams p = CorruptionParams::disabled(4);
  p.grey_blocks_min = p.grey_blocks_max = 2;
  Rng rng(23);
  CorruptResult r = corrupt(red, red, p, rng);
  REQUIRE(r.mask.count(PatchLabel::kGreyed) > 0);
  const int64_t hw = 64;
  for (int64_t patch = 0; patch < 4; ++patch) {
    if (r.mask.labels[static_cast<size_t>(patch)] != PatchLabel::kGreyed) continue;
    const int64_t y0 = (patch / 2) * 4;
    const int64_t x0 = (patch % 2) * 4;
    for (int64_t y = y0; y < y0 + 4; ++y)
      for (int64_t x = x0; x < x0 + 4; ++x) {
        const int64_t i = y * 8 + x;
        CHECK(r.image.data()[i] == doctest::Approx(0.299).epsilon(1e-6));
        CHECK(r.image.data()[i] == r.image.data()[hw + i]);
        CHECK(r.image.data()[i] == r.image.data()[2 * hw + i]);
      }
  }
}

TEST_CASE("replaced patches copy the replacement source verbatim") {
  Rng rng(24);
  Tensor img = random_image(16, 16, rng);
  Tensor src = random_image(16, 16, rng);
  CorruptionParams p = CorruptionParams::disabled(4);
  p.replace_fraction_min = p.replace_fraction_max = 0.5;
  CorruptResult r = corrupt(img, src, p, rng);
  CHECK(r.mask.count(PatchLabel::kReplaced) == 8);
  const int64_t hw = 256;
  for (int64_t patch = 0; patch < 16; ++patch) {
    const bool replaced = r.mask.labels[static_cast<size_t>(patch)] == PatchLabel::kReplaced;
    const float* want = replaced ? src.data() : img.data();
    const int64_t y0 = (patch / 4) * 4;
    const int64_t x0 = (patch % 4) * 4;
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = y0; y < y0 + 4; ++y)
        for (int64_t x = x0; x < x0 + 4; ++x) {
          const int64_t i = c * hw + y * 16 + x;
          CHECK(r.image.data()[i] == want[i]);
        }
  }
}

TEST_CASE("corruption parameter validation rejects bad ranges") {
  CorruptionParams p;
  CHECK_THROWS_AS(p.validate(30, 30), std::invalid_argument);  // off-grid size
  p = CorruptionParams{};
  p.drop_fraction_max = 0.9;
  p.replace_fraction_max = 0.2;
  CHECK_THROWS_AS(p.validate(32, 32), std::invalid_argument);
  p = CorruptionParams{};
  p.blur_kernel = 4;
  CHECK_THROWS_AS(p.validate(32, 32), std::invalid_argument);
  p = CorruptionParams{};
  p.block_patches_min = 0;
  CHECK_THROWS_AS(p.validate(32, 32), std::invalid_argument);
}

TEST_CASE("randomized corruption property suite holds over 1000 cases") {
  for (uint64_t seed = 1; seed <= 1000; ++seed) {
    std::string violation = corruption_self_check(seed);
    CAPTURE(seed);
    REQUIRE_MESSAGE(violation.empty(), violation);
  }
}

TEST_CASE("make_pretext_batch produces paired rotated views") {
  Rng data_rng(31);
  Tensor images({4, 3, 16, 16});
  for (int64_t i = 0; i < images.numel(); ++i)
    images.data()[i] = static_cast<float>(data_rng.uniform01());

  AugmentParams aug;
  CorruptionParams cor;
  cor.patch_size = 4;
  Rng rng(32);
  PretextBatch batch = make_pretext_batch(images, aug, cor, rng);

  CHECK(batch.corrupted_views.shape() == Shape{8, 3, 16, 16});
  CHECK(batch.clean_targets.shape() == Shape{8, 3, 16, 16});
  CHECK(batch.rotation_labels.size() == 8);
  CHECK(batch.masks.size() == 8);
  for (int64_t v = 0; v < 8; ++v) {
    const int64_t partner = batch.pair_index[static_cast<size_t>(v)];
    CHECK(partner != v);
    CHECK(batch.pair_index[static_cast<size_t>(partner)] == v);
    CHECK(partner / 2 == v / 2);  // same source image
    CHECK(batch.rotation_labels[static_cast<size_t>(v)] >= 0);
    CHECK(batch.rotation_labels[static_cast<size_t>(v)] < 4);
  }

  Rng rerun(32);
  PretextBatch again = make_pretext_batch(images, aug, cor, rerun);
  CHECK(again.corrupted_views.values() == batch.corrupted_views.values());
  CHECK(again.clean_targets.values() == batch.clean_targets.values());
  CHECK(again.rotation_labels == batch.rotation_labels);

  CHECK_THROWS_AS(make_pretext_batch(Tensor({1, 3, 16, 16}), aug, cor, rng),
                  std::invalid_argument);
}

TEST_CASE("disabling corruption makes inputs equal the clean targets") {
  Rng data_rng(41);
  Tensor images({3, 3, 8, 8});
  for (int64_t i = 0; i < images.numel(); ++i)
    images.data()[i] = static_cast<float>(data_rng.uniform01());
  Rng rng(42);
  PretextBatch batch =
      make_pretext_batch(images, AugmentParams{}, CorruptionParams::disabled(4), rng);
  CHECK(batch.corrupted_views.values() == batch.clean_targets.values());
  for (const CorruptionMask& m : batch.masks)
    CHECK(m.fraction(PatchLabel::kClean) == 1.0);
}

TEST_CASE("replacement content comes from a different source image") {
  // constant-colour sources are invariant to augmentation and rotation, so a
  // fully-replaced view must equal the other source's colour
  Tensor images({2, 3, 8, 8});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < 64; ++i) {
      images.data()[c * 64 + i] = 0.25f;
      images.data()[192 + c * 64 + i] = 0.75f;
    }
  AugmentParams aug = identity_augment();
  CorruptionParams cor = CorruptionParams::disabled(4);
  cor.replace_fraction_min = cor.replace_fraction_max = 1.0;
  Rng rng(51);
  PretextBatch batch = make_pretext_batch(images, aug, cor, rng);
  for (int64_t v = 0; v < 4; ++v) {
    const float expect = v < 2 ? 0.75f : 0.25f;
    for (int64_t i = 0; i < 192; ++i)
      CHECK(batch.corrupted_views.data()[v * 192 + i] == expect);
  }
}

TEST_CASE("rotation labels are drawn uniformly") {
  Rng data_rng(61);
  Tensor images({25, 3, 8, 8});
  for (int64_t i = 0; i < images.numel(); ++i)
    images.data()[i] = static_cast<float>(data_rng.uniform01());
  AugmentParams aug;
  CorruptionParams cor = CorruptionParams::disabled(4);
  Rng rng(62);
  int64_t counts[4] = {0, 0, 0, 0};
  int64_t total = 0;
  for (int rep = 0; rep < 200; ++rep) {
    PretextBatch batch = make_pretext_batch(images, aug, cor, rng);
    for (int64_t label : batch.rotation_labels) {
      ++counts[label];
      ++total;
    }
  }
  CHECK(total == 10000);
  for (int64_t c = 0; c < 4; ++c) {
    const double freq = static_cast<double>(counts[c]) / static_cast<double>(total);
    CHECK(freq > 0.23);
    CHECK(freq < 0.27);
  }
}
