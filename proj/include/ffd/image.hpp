#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ffd/errors.hpp"
#include "ffd/tensor.hpp"

namespace ffd {

// 8-bit RGB image, row-major, 3 bytes per pixel.
struct ImageU8 {
  int width = 0, height = 0;
  std::vector<uint8_t> pixels;

  uint8_t* at(int x, int y) { return pixels.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
};

// 16-bit instance-id mask: 0 background, k >= 1 instance ids.
struct MaskU16 {
  int width = 0, height = 0;
  std::vector<uint16_t> ids;

  uint16_t& at(int x, int y) { return ids[static_cast<size_t>(y) * width + x]; }
  uint16_t at(int x, int y) const { return ids[static_cast<size_t>(y) * width + x]; }
};

inline ImageU8 make_image(int width, int height, uint8_t fill = 0) {
  return {width, height, std::vector<uint8_t>(static_cast<size_t>(width) * height * 3, fill)};
}

inline MaskU16 make_mask(int width, int height) {
  return {width, height, std::vector<uint16_t>(static_cast<size_t>(width) * height, 0)};
}

// PNG I/O. Images are written as 8-bit RGB, masks as 16-bit grayscale.
// Readers accept 8-bit gray/RGB/RGBA for images (alpha dropped, gray
// replicated) and 8/16-bit gray for masks; anything else is a DataError.
ImageU8 read_image_png(const std::string& path);
void write_image_png(const std::string& path, const ImageU8& image);
MaskU16 read_mask_png(const std::string& path);
void write_mask_png(const std::string& path, const MaskU16& mask);

// [3, H, W] tensor with values scaled to [0, 1].
template <typename S>
TensorT<S> image_to_tensor(const ImageU8& image) {
  std::vector<S> v(static_cast<size_t>(3) * image.height * image.width);
  const size_t plane = static_cast<size_t>(image.height) * image.width;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const uint8_t* px = image.at(x, y);
      for (int c = 0; c < 3; ++c)
        v[c * plane + static_cast<size_t>(y) * image.width + x] = S(px[c]) / S(255);
    }
  return make_tensor<S>({3, image.height, image.width}, std::move(v));
}

}  // namespace ffd
