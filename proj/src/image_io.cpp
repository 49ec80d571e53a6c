#include "image_io.hpp"

#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <png.h>

#include "checkpoint.hpp"
#include "errors.hpp"

namespace retarget {
namespace {

struct ReadSource {
  const unsigned char* data;
  size_t size;
  size_t pos;
};

void read_callback(png_structp png, png_bytep out, png_size_t length) {
  auto* src = static_cast<ReadSource*>(png_get_io_ptr(png));
  if (src->size - src->pos < length) png_error(png, "unexpected end of PNG data");
  std::memcpy(out, src->data + src->pos, length);
  src->pos += length;
}

void write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

void flush_callback(png_structp) {}

// Decodes into `pixels` as packed RGB8. Only trivially destructible state
// lives across setjmp.
bool decode_rgb8(const unsigned char* data, size_t size, std::vector<unsigned char>& pixels,
                 png_uint_32& width, png_uint_32& height) {
  if (size < 8 || png_sig_cmp(data, 0, 8) != 0) return false;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  ReadSource src{data, size, 0};
  std::vector<png_bytep>* rows = new std::vector<png_bytep>();
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    delete rows;
    return false;
  }
  png_set_read_fn(png, &src, read_callback);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<size_t>(width) * 3) {
    png_error(png, "unsupported PNG layout");
  }
  pixels.resize(static_cast<size_t>(width) * height * 3);
  rows->resize(height);
  for (png_uint_32 r = 0; r < height; ++r) (*rows)[r] = pixels.data() + static_cast<size_t>(r) * width * 3;
  png_read_image(png, rows->data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  delete rows;
  return true;
}

bool encode_rgb8(const unsigned char* pixels, png_uint_32 width, png_uint_32 height, std::string& out) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &out, write_callback, flush_callback);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (png_uint_32 r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(pixels + static_cast<size_t>(r) * width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

torch::Tensor decode_png(std::string_view bytes) {
  std::vector<unsigned char> pixels;
  png_uint_32 width = 0, height = 0;
  if (!decode_rgb8(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), pixels, width,
                   height)) {
    throw IoError("cannot decode PNG image");
  }
  auto hwc = torch::from_blob(pixels.data(), {static_cast<int64_t>(height), static_cast<int64_t>(width), 3},
                              torch::kUInt8);
  return hwc.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

torch::Tensor read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_png(bytes);
  } catch (const IoError&) {
    throw IoError("cannot decode PNG image " + path.string());
  }
}

std::string encode_png(const torch::Tensor& image) {
  auto chw = image.dim() == 4 && image.size(0) == 1 ? image.squeeze(0) : image;
  if (chw.dim() != 3 || chw.size(0) != 3) throw ShapeError("encode_png expects a [3,H,W] image");
  const auto hwc = chw.detach()
                       .to(torch::kFloat32)
                       .clamp(0.0, 1.0)
                       .mul(255.0)
                       .round()
                       .to(torch::kUInt8)
                       .permute({1, 2, 0})
                       .contiguous();
  std::string out;
  if (!encode_rgb8(hwc.data_ptr<uint8_t>(), static_cast<png_uint_32>(hwc.size(1)),
                   static_cast<png_uint_32>(hwc.size(0)), out)) {
    throw IoError("PNG encoding failed");
  }
  return out;
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  write_file_atomic(path, encode_png(image));
}

}  // namespace retarget
