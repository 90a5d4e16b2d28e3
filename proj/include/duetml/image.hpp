#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "duetml/util.hpp"

namespace duetml {

/// Interleaved 8-bit RGB raster, row-major, no padding.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t* at(int x, int y) { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* at(int x, int y) const {
    return &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
  }

  bool operator==(const Image&) const = default;
};

enum class ImageFormat { Png, Jpeg };

/// Sniffs the magic bytes; throws UndecodableImage for anything else.
ImageFormat sniff_format(std::span<const std::uint8_t> data);
std::string_view extension(ImageFormat fmt);
std::string_view mime_type(ImageFormat fmt);

/// Decodes PNG or JPEG to RGB. Alpha is composited onto black.
Image decode_image(std::span<const std::uint8_t> data);

Bytes encode_png(const Image& img);
Bytes encode_jpeg(const Image& img, int quality = 90);

/// Digest over dimensions plus decoded pixels; independent of container
/// format, file name and encoder settings.
std::string pixel_digest(const Image& img);

/// Bilinear resample with pixel-centre alignment and edge clamping.
Image resize_bilinear(const Image& src, int width, int height);

}  // namespace duetml
