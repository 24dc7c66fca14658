#pragma once

#include <string>
#include <vector>

#include "sit/tensor.hpp"

namespace sit {

// Writes a (3,H,W) float image as binary PPM (P6, maxval 255). Values are
// clamped to [0,1] and rounded half-up to bytes.
void write_ppm(const std::string& path, const Tensor& image);

// Reads a binary PPM back into a (3,H,W) float tensor in [0,1].
Tensor read_ppm(const std::string& path);

// Places images side by side with a light separator strip; all images must
// share channel count and height.
Tensor hstack_images(const std::vector<Tensor>& images, int64_t gap = 2);

}  // namespace sit
