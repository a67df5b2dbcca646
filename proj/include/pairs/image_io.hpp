#pragma once
// PNG and JPEG file IO via libpng / libjpeg, normalized to 8-bit depth and
// float [0,1] in memory. setjmp regions touch only POD state that was set
// up beforehand, so C++ destructors never run on indeterminate objects.

#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "pairs/errors.hpp"
#include "pairs/image.hpp"

namespace pairs {

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFileError(path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

inline unsigned char to_byte(float v) {
  const float scaled = v * 255.0f + 0.5f;
  if (scaled <= 0.0f) return 0;
  if (scaled >= 255.0f) return 255;
  return static_cast<unsigned char>(scaled);
}

struct PngMemReader {
  const unsigned char* data;
  size_t size;
  size_t offset;
};

inline void png_mem_read(png_structp png, png_bytep out, png_size_t n) {
  auto* r = static_cast<PngMemReader*>(png_get_io_ptr(png));
  if (r->offset + n > r->size) {
    png_error(png, "read past end of PNG buffer");
  }
  std::memcpy(out, r->data + r->offset, n);
  r->offset += n;
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

inline void jpeg_quiet_message(j_common_ptr) {}

// Default libpng handlers print to stderr; failures surface as exceptions
// instead.
inline void png_quiet_error(png_structp png, png_const_charp) {
  png_longjmp(png, 1);
}

inline void png_quiet_warning(png_structp, png_const_charp) {}

}  // namespace detail

inline RgbImage read_png_rgb(const std::filesystem::path& path) {
  const std::vector<unsigned char> file = detail::read_file_bytes(path);
  if (file.size() < 8 || png_sig_cmp(file.data(), 0, 8) != 0) {
    throw BadFormatError("not a PNG file: " + path.string());
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           detail::png_quiet_error,
                                           detail::png_quiet_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    throw BadFormatError("failed to init libpng");
  }
  detail::PngMemReader reader{file.data(), file.size(), 0};

  // Region A: header only.
  png_uint_32 w = 0, h = 0;
  size_t rowbytes = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw BadFormatError("failed to read PNG: " + path.string());
  }
  png_set_read_fn(png, &reader, detail::png_mem_read);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  rowbytes = png_get_rowbytes(png, info);
  if (w == 0 || h == 0 || png_get_channels(png, info) != 3 ||
      rowbytes < static_cast<size_t>(w) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw BadFormatError("unsupported PNG layout: " + path.string());
  }

  // Buffers live outside any protected region; region B only fills them.
  std::vector<unsigned char> raw(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * rowbytes;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw BadFormatError("failed to decode PNG: " + path.string());
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  RgbImage img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.pixels.resize(static_cast<size_t>(w) * h * 3);
  for (size_t y = 0; y < h; ++y) {
    const unsigned char* src = raw.data() + y * rowbytes;
    for (size_t x = 0; x < static_cast<size_t>(w) * 3; ++x) {
      img.pixels[y * w * 3 + x] = static_cast<float>(src[x]) / 255.0f;
    }
  }
  return img;
}

namespace detail {

template <int C>
inline void write_png_impl(const std::filesystem::path& path, const BasicImage<C>& img,
                           int color_type) {
  if (img.width <= 0 || img.height <= 0) {
    throw DimensionMismatchError("cannot write empty image");
  }
  std::vector<unsigned char> raw(static_cast<size_t>(img.width) * img.height * C);
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = to_byte(img.pixels[i]);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    rows[static_cast<size_t>(y)] = raw.data() + static_cast<size_t>(y) * img.width * C;
  }

  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw MissingFileError(path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            detail::png_quiet_error,
                                            detail::png_quiet_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw BadFormatError("failed to init libpng");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw BadFormatError("failed to write PNG: " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace detail

inline void write_png(const std::filesystem::path& path, const RgbImage& img) {
  detail::write_png_impl(path, img, PNG_COLOR_TYPE_RGB);
}

inline void write_png(const std::filesystem::path& path, const GrayImage& img) {
  detail::write_png_impl(path, img, PNG_COLOR_TYPE_GRAY);
}

inline RgbImage read_jpeg_rgb(const std::filesystem::path& path) {
  const std::vector<unsigned char> file = detail::read_file_bytes(path);

  jpeg_decompress_struct cinfo;
  detail::JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = detail::jpeg_error_exit;
  jerr.pub.output_message = detail::jpeg_quiet_message;

  // malloc'd so the longjmp path can free it without touching any C++
  // object constructed inside the protected region.
  unsigned char* volatile out = nullptr;
  int w = 0, h = 0;
  if (setjmp(jerr.jump)) {
    std::free(out);
    jpeg_destroy_decompress(&cinfo);
    throw BadFormatError("failed to decode JPEG: " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, file.data(), static_cast<unsigned long>(file.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  w = static_cast<int>(cinfo.output_width);
  h = static_cast<int>(cinfo.output_height);
  if (w <= 0 || h <= 0 || cinfo.output_components != 3) {
    jpeg_destroy_decompress(&cinfo);
    throw BadFormatError("unsupported JPEG layout: " + path.string());
  }
  out = static_cast<unsigned char*>(std::malloc(static_cast<size_t>(w) * h * 3));
  if (!out) {
    jpeg_destroy_decompress(&cinfo);
    throw std::bad_alloc();
  }
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out + static_cast<size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);

  RgbImage img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<size_t>(w) * h * 3);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<float>(out[i]) / 255.0f;
  }
  std::free(out);
  return img;
}

inline void write_jpeg(const std::filesystem::path& path, const RgbImage& img,
                       int quality = 95) {
  if (img.width <= 0 || img.height <= 0) {
    throw DimensionMismatchError("cannot write empty image");
  }
  std::vector<unsigned char> raw(static_cast<size_t>(img.width) * img.height * 3);
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = detail::to_byte(img.pixels[i]);

  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw MissingFileError(path.string());

  jpeg_compress_struct cinfo;
  detail::JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = detail::jpeg_error_exit;
  jerr.pub.output_message = detail::jpeg_quiet_message;

  if (setjmp(jerr.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::fclose(fp);
    std::remove(path.string().c_str());
    throw BadFormatError("failed to encode JPEG: " + path.string());
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, fp);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = raw.data() + static_cast<size_t>(cinfo.next_scanline) * img.width * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(fp);
}

// Dispatch on magic bytes; PNG and JPEG are the supported containers.
inline RgbImage read_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw MissingFileError(path.string());
  unsigned char sig[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(sig), 2);
  probe.close();
  if (sig[0] == 0x89 && sig[1] == 'P') return read_png_rgb(path);
  if (sig[0] == 0xff && sig[1] == 0xd8) return read_jpeg_rgb(path);
  throw BadFormatError("unrecognized image format: " + path.string());
}

}  // namespace pairs
