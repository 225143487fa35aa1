#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <fstream>

#include "acl/data.hpp"

#include <jpeglib.h>

namespace acl::data {

ImageU8 ImageU8::filled(int w, int h, std::array<std::uint8_t, 3> rgb) {
  ImageU8 img;
  img.w = w;
  img.h = h;
  img.px.resize(static_cast<std::size_t>(w * h * 3));
  for (int i = 0; i < w * h; ++i) {
    img.px[static_cast<std::size_t>(3 * i)] = rgb[0];
    img.px[static_cast<std::size_t>(3 * i + 1)] = rgb[1];
    img.px[static_cast<std::size_t>(3 * i + 2)] = rgb[2];
  }
  return img;
}

namespace {

struct JpegErr {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_err_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

ImageU8 load_jpeg(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path.string());
  jpeg_decompress_struct cinfo;
  JpegErr jerr;
  cinfo.err = jpeg_std_error(&jerr.mgr);
  jerr.mgr.error_exit = jpeg_err_exit;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    std::fclose(f);
    throw IoError("undecodable JPEG: " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  ImageU8 img;
  img.w = static_cast<int>(cinfo.output_width);
  img.h = static_cast<int>(cinfo.output_height);
  img.px.resize(static_cast<std::size_t>(img.w) * img.h * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.px.data() + static_cast<std::size_t>(cinfo.output_scanline) * img.w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::fclose(f);
  return img;
}

ImageU8 load_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("undecodable PNG: " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  ImageU8 img;
  img.w = static_cast<int>(image.width);
  img.h = static_cast<int>(image.height);
  img.px.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, img.px.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("undecodable PNG: " + path.string() + ": " + image.message);
  }
  return img;
}

}  // namespace

ImageU8 load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  unsigned char magic[4] = {0, 0, 0, 0};
  in.read(reinterpret_cast<char*>(magic), 4);
  in.close();
  if (magic[0] == 0x89 && magic[1] == 'P') return load_png(path);
  if (magic[0] == 0xFF && magic[1] == 0xD8) return load_jpeg(path);
  throw IoError("unsupported image format: " + path.string());
}

void save_png(const std::filesystem::path& path, const ImageU8& img) {
  if (img.w < 1 || img.h < 1 || img.px.size() != static_cast<std::size_t>(img.w) * img.h * 3)
    throw ArgumentError("save_png: malformed image buffer");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.w);
  image.height = static_cast<png_uint_32>(img.h);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.px.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
}

void save_png_gray(const std::filesystem::path& path, int w, int h, const std::vector<std::uint8_t>& gray) {
  if (w < 1 || h < 1 || gray.size() != static_cast<std::size_t>(w) * h)
    throw ArgumentError("save_png_gray: malformed buffer");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, gray.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
}

}  // namespace acl::data
