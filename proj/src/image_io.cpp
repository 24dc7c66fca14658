#include "sit/image_io.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace sit {

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw std::invalid_argument("write_ppm: expects (3,H,W), got " + shape_str(image.shape()));
  }
  const int64_t h = image.dim(1), w = image.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(w * 3));
  const float* px = image.data();
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        float v = px[(c * h + y) * w + x];
        v = std::min(1.0f, std::max(0.0f, v));
        row[static_cast<size_t>(x * 3 + c)] = static_cast<uint8_t>(std::floor(v * 255.0f + 0.5f));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("short write on " + path);
}

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error(path + ": not a binary PPM");
  // header tokens may be separated by comments
  auto next_int = [&]() {
    for (;;) {
      int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    int64_t v = 0;
    in >> v;
    if (!in) throw std::runtime_error(path + ": truncated header");
    return v;
  };
  const int64_t w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || maxval != 255) throw std::runtime_error(path + ": unsupported PPM geometry");
  in.get();  // single whitespace after maxval
  std::vector<uint8_t> raw(static_cast<size_t>(w * h * 3));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw std::runtime_error(path + ": truncated pixel data");
  Tensor img({3, h, w});
  float* px = img.data();
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        px[(c * h + y) * w + x] = static_cast<float>(raw[static_cast<size_t>((y * w + x) * 3 + c)]) / 255.0f;
      }
    }
  }
  return img;
}

Tensor hstack_images(const std::vector<Tensor>& images, int64_t gap) {
  if (images.empty()) throw std::invalid_argument("hstack_images: no images");
  const int64_t c = images[0].dim(0), h = images[0].dim(1);
  int64_t total_w = 0;
  for (const Tensor& im : images) {
    if (im.rank() != 3 || im.dim(0) != c || im.dim(1) != h) {
      throw std::invalid_argument("hstack_images: images must share channels and height");
    }
    total_w += im.dim(2);
  }
  total_w += gap * static_cast<int64_t>(images.size() - 1);
  Tensor out = Tensor::full({c, h, total_w}, 0.9f);
  int64_t xoff = 0;
  for (const Tensor& im : images) {
    const int64_t w = im.dim(2);
    for (int64_t ch = 0; ch < c; ++ch) {
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
          out.data()[(ch * h + y) * total_w + xoff + x] = im.data()[(ch * h + y) * w + x];
        }
      }
    }
    xoff += w + gap;
  }
  return out;
}

}  // namespace sit
