#include "ffd/image.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace ffd {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

uint32_t get_u32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& data) {
  std::vector<uint8_t> head;
  put_u32(head, uint32_t(data.size()));
  f.write(reinterpret_cast<const char*>(head.data()), 4);
  f.write(type, 4);
  if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
  uint32_t crc = crc32(0, reinterpret_cast<const Bytef*>(type), 4);
  if (!data.empty()) crc = crc32(crc, data.data(), uInt(data.size()));
  std::vector<uint8_t> tail;
  put_u32(tail, crc);
  f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

void write_png(const std::string& path, int width, int height, int bit_depth, int color_type,
               const std::vector<uint8_t>& raw_rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path);

  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<uint8_t> ihdr;
  put_u32(ihdr, uint32_t(width));
  put_u32(ihdr, uint32_t(height));
  ihdr.push_back(uint8_t(bit_depth));
  ihdr.push_back(uint8_t(color_type));
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // no interlace
  write_chunk(f, "IHDR", ihdr);

  uLongf bound = compressBound(uLong(raw_rows.size()));
  std::vector<uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw_rows.data(), uLong(raw_rows.size()), 6) != Z_OK)
    throw DataError("png deflate failed for " + path);
  compressed.resize(bound);
  write_chunk(f, "IDAT", compressed);
  write_chunk(f, "IEND", {});
  if (!f) throw DataError("write failed: " + path);
}

struct PngData {
  int width = 0, height = 0, bit_depth = 0, color_type = 0;
  std::vector<uint8_t> scanlines;  // unfiltered, bpp * width per row
  int channels = 0;
};

int channels_for(int color_type, const std::string& path) {
  switch (color_type) {
    case 0: return 1;
    case 2: return 3;
    case 4: return 2;
    case 6: return 4;
    default:
      throw DataError("unsupported png color type " + std::to_string(color_type) + " in " + path);
  }
}

uint8_t paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return uint8_t(a);
  if (pb <= pc) return uint8_t(b);
  return uint8_t(c);
}

PngData read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path);
  std::vector<uint8_t> file((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0)
    throw DataError("not a png file: " + path);

  PngData png;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  bool saw_ihdr = false, saw_iend = false;
  while (pos + 8 <= file.size() && !saw_iend) {
    uint32_t len = get_u32(&file[pos]);
    if (pos + 12 + len > file.size()) throw DataError("truncated png: " + path);
    const char* type = reinterpret_cast<const char*>(&file[pos + 4]);
    const uint8_t* data = &file[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw DataError("bad IHDR in " + path);
      png.width = int(get_u32(data));
      png.height = int(get_u32(data + 4));
      png.bit_depth = data[8];
      png.color_type = data[9];
      if (data[12] != 0) throw DataError("interlaced png not supported: " + path);
      if (png.width <= 0 || png.height <= 0) throw DataError("bad png size in " + path);
      saw_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_iend = true;
    }
    pos += 12 + len;
  }
  if (!saw_ihdr || idat.empty()) throw DataError("png missing IHDR/IDAT: " + path);
  if (png.bit_depth != 8 && png.bit_depth != 16)
    throw DataError("unsupported png bit depth " + std::to_string(png.bit_depth) + " in " + path);

  png.channels = channels_for(png.color_type, path);
  const int bpp = png.channels * png.bit_depth / 8;
  const size_t stride = size_t(png.width) * bpp;
  const size_t raw_size = (stride + 1) * size_t(png.height);

  std::vector<uint8_t> raw(raw_size);
  uLongf out_len = uLongf(raw_size);
  int rc = uncompress(raw.data(), &out_len, idat.data(), uLong(idat.size()));
  if (rc != Z_OK || out_len != raw_size) throw DataError("png inflate failed for " + path);

  png.scanlines.resize(stride * size_t(png.height));
  std::vector<uint8_t> prev(stride, 0);
  for (int y = 0; y < png.height; ++y) {
    uint8_t filter = raw[size_t(y) * (stride + 1)];
    const uint8_t* src = &raw[size_t(y) * (stride + 1) + 1];
    uint8_t* dst = &png.scanlines[size_t(y) * stride];
    for (size_t i = 0; i < stride; ++i) {
      int a = i >= size_t(bpp) ? dst[i - size_t(bpp)] : 0;
      int b = prev[i];
      int c = i >= size_t(bpp) ? prev[i - size_t(bpp)] : 0;
      switch (filter) {
        case 0: dst[i] = src[i]; break;
        case 1: dst[i] = uint8_t(src[i] + a); break;
        case 2: dst[i] = uint8_t(src[i] + b); break;
        case 3: dst[i] = uint8_t(src[i] + (a + b) / 2); break;
        case 4: dst[i] = uint8_t(src[i] + paeth(a, b, c)); break;
        default: throw DataError("bad png filter type in " + path);
      }
    }
    std::memcpy(prev.data(), dst, stride);
  }
  return png;
}

}  // namespace

ImageU8 read_image_png(const std::string& path) {
  PngData png = read_png(path);
  if (png.bit_depth != 8)
    throw DataError("image must be 8-bit, got " + std::to_string(png.bit_depth) + "-bit: " + path);
  ImageU8 img = make_image(png.width, png.height);
  const int ch = png.channels;
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) {
      const uint8_t* src = &png.scanlines[(size_t(y) * png.width + x) * size_t(ch)];
      uint8_t* dst = img.at(x, y);
      if (ch >= 3) {
        dst[0] = src[0];
        dst[1] = src[1];
        dst[2] = src[2];
      } else {
        dst[0] = dst[1] = dst[2] = src[0];
      }
    }
  return img;
}

void write_image_png(const std::string& path, const ImageU8& image) {
  const size_t stride = size_t(image.width) * 3;
  std::vector<uint8_t> raw((stride + 1) * size_t(image.height));
  for (int y = 0; y < image.height; ++y) {
    raw[size_t(y) * (stride + 1)] = 0;  // filter: none
    std::memcpy(&raw[size_t(y) * (stride + 1) + 1], &image.pixels[size_t(y) * stride], stride);
  }
  write_png(path, image.width, image.height, 8, 2, raw);
}

MaskU16 read_mask_png(const std::string& path) {
  PngData png = read_png(path);
  if (png.color_type != 0)
    throw DataError("mask must be grayscale: " + path);
  MaskU16 mask = make_mask(png.width, png.height);
  for (int y = 0; y < png.height; ++y)
    for (int x = 0; x < png.width; ++x) {
      size_t i = size_t(y) * png.width + x;
      if (png.bit_depth == 16) {
        const uint8_t* p = &png.scanlines[i * 2];
        mask.ids[i] = uint16_t((uint16_t(p[0]) << 8) | p[1]);
      } else {
        mask.ids[i] = png.scanlines[i];
      }
    }
  return mask;
}

void write_mask_png(const std::string& path, const MaskU16& mask) {
  const size_t stride = size_t(mask.width) * 2;
  std::vector<uint8_t> raw((stride + 1) * size_t(mask.height));
  for (int y = 0; y < mask.height; ++y) {
    raw[size_t(y) * (stride + 1)] = 0;
    for (int x = 0; x < mask.width; ++x) {
      uint16_t v = mask.at(x, y);
      raw[size_t(y) * (stride + 1) + 1 + size_t(x) * 2] = uint8_t(v >> 8);
      raw[size_t(y) * (stride + 1) + 2 + size_t(x) * 2] = uint8_t(v & 0xff);
    }
  }
  write_png(path, mask.width, mask.height, 16, 0, raw);
}

}  // namespace ffd
