#include "duetml/image.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>

#include "duetml/error.hpp"

namespace duetml {

ImageFormat sniff_format(std::span<const std::uint8_t> data) {
  static constexpr std::uint8_t kPng[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (data.size() >= 8 && std::memcmp(data.data(), kPng, 8) == 0) return ImageFormat::Png;
  if (data.size() >= 3 && data[0] == 0xff && data[1] == 0xd8 && data[2] == 0xff)
    return ImageFormat::Jpeg;
  throw Error(ErrorCode::UndecodableImage, "not a PNG or JPEG payload");
}

std::string_view extension(ImageFormat fmt) { return fmt == ImageFormat::Png ? "png" : "jpg"; }

std::string_view mime_type(ImageFormat fmt) {
  return fmt == ImageFormat::Png ? "image/png" : "image/jpeg";
}

namespace {

Image decode_png(std::span<const std::uint8_t> data) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, data.data(), data.size()))
    throw Error(ErrorCode::UndecodableImage, std::string("png: ") + png.message);
  png.format = PNG_FORMAT_RGB;
  if (png.width == 0 || png.height == 0 || png.width > 16384 || png.height > 16384) {
    png_image_free(&png);
    throw Error(ErrorCode::UndecodableImage, "png: unsupported dimensions");
  }
  Image img(static_cast<int>(png.width), static_cast<int>(png.height));
  if (!png_image_finish_read(&png, nullptr, img.rgb.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw Error(ErrorCode::UndecodableImage, "png: " + msg);
  }
  return img;
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr, int) {}

Image decode_jpeg(std::span<const std::uint8_t> data) {
  jpeg_decompress_struct cinfo{};
  JpegErrorMgr err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  err.pub.emit_message = jpeg_silent;
  Image img;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(ErrorCode::UndecodableImage, std::string("jpeg: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data.data(), static_cast<unsigned long>(data.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  cinfo.dct_method = JDCT_ISLOW;
  jpeg_start_decompress(&cinfo);
  if (cinfo.output_components != 3 || cinfo.output_width == 0 || cinfo.output_height == 0) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(ErrorCode::UndecodableImage, "jpeg: unsupported colour layout");
  }
  img.width = static_cast<int>(cinfo.output_width);
  img.height = static_cast<int>(cinfo.output_height);
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * img.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> data) {
  switch (sniff_format(data)) {
    case ImageFormat::Png: return decode_png(data);
    case ImageFormat::Jpeg: return decode_jpeg(data);
  }
  throw Error(ErrorCode::UndecodableImage, "unreachable");
}

Bytes encode_png(const Image& img) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, img.rgb.data(), 0, nullptr))
    throw Error(ErrorCode::IoError, std::string("png encode: ") + png.message);
  Bytes out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, img.rgb.data(), 0, nullptr))
    throw Error(ErrorCode::IoError, std::string("png encode: ") + png.message);
  out.resize(size);
  return out;
}

Bytes encode_jpeg(const Image& img, int quality) {
  jpeg_compress_struct cinfo{};
  JpegErrorMgr err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(buffer);
    throw Error(ErrorCode::IoError, std::string("jpeg encode: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPROW>(img.rgb.data() +
                                     static_cast<std::size_t>(cinfo.next_scanline) * img.width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  Bytes out(buffer, buffer + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buffer);
  return out;
}

std::string pixel_digest(const Image& img) {
  Bytes buf;
  buf.reserve(8 + img.rgb.size());
  for (int v : {img.width, img.height})
    for (int s = 0; s < 32; s += 8) buf.push_back(static_cast<std::uint8_t>(v >> s));
  buf.insert(buf.end(), img.rgb.begin(), img.rgb.end());
  return sha256_hex(buf);
}

Image resize_bilinear(const Image& src, int width, int height) {
  Image dst(width, height);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      const std::uint8_t* p00 = src.at(x0, y0);
      const std::uint8_t* p10 = src.at(x1, y0);
      const std::uint8_t* p01 = src.at(x0, y1);
      const std::uint8_t* p11 = src.at(x1, y1);
      std::uint8_t* out = dst.at(x, y);
      for (int c = 0; c < 3; ++c) {
        const double top = p00[c] + (p10[c] - p00[c]) * wx;
        const double bottom = p01[c] + (p11[c] - p01[c]) * wx;
        out[c] = static_cast<std::uint8_t>(std::lround(top + (bottom - top) * wy));
      }
    }
  }
  return dst;
}

}  // namespace duetml
