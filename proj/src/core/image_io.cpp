#include "pugs/core/image_io.hpp"

#include "pugs/core/error.hpp"

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace pugs {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

// libpng reports errors by longjmp; no C++ object with a destructor may be created between setjmp
// and the libpng calls below.
struct PngErrorState {
  std::jmp_buf jump;
  char message[256] = {};
};

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngErrorState*>(png_get_error_ptr(png));
  std::snprintf(state->message, sizeof(state->message), "%s", msg);
  std::longjmp(state->jump, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

DecodedPng decode_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open PNG '" + path.string() + "'");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ParseError("not a PNG file: '" + path.string() + "'");
  }
  PngErrorState state;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &state, png_error_fn, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  DecodedPng out;
  std::vector<png_byte> raw;
  std::vector<png_bytep> rows;
  if (setjmp(state.jump)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("PNG '" + path.string() + "': " + state.message);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (png_get_bit_depth(png, info) == 16) png_set_swap(png);
  png_read_update_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  raw.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(n);
  if (out.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint16_t v;
      std::memcpy(&v, raw.data() + 2 * i, 2);
      out.samples[i] = v;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = raw[i];
  }
  return out;
}

void encode_png(const std::filesystem::path& path, int width, int height, int channels, int depth,
                const std::vector<std::uint16_t>& samples) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write PNG '" + path.string() + "'");
  const std::size_t row_samples = static_cast<std::size_t>(width) * channels;
  const std::size_t bytes = depth / 8;
  std::vector<png_byte> image(row_samples * bytes * height);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::uint16_t v = samples[i];
    if (bytes == 2) {
      std::memcpy(image.data() + 2 * i, &v, 2);
    } else {
      image[i] = static_cast<png_byte>(v);
    }
  }
  PngErrorState state;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &state, png_error_fn, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  if (setjmp(state.jump)) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG '" + path.string() + "': " + state.message);
  }
  png_init_io(png, fp.get());
  const int color = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, width, height, depth, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (depth == 16) png_set_swap(png);
  for (int y = 0; y < height; ++y) png_write_row(png, image.data() + y * row_samples * bytes);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

ImageF load_png_rgb(const std::filesystem::path& path) {
  const DecodedPng png = decode_png(path);
  const double scale = png.bit_depth == 16 ? 65535.0 : 255.0;
  ImageF img(png.width, png.height, 3);
  for (int y = 0; y < png.height; ++y) {
    for (int x = 0; x < png.width; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * png.width + x) * png.channels;
      for (int c = 0; c < 3; ++c) {
        // gray / gray+alpha replicate the first sample
        const int src = png.channels >= 3 ? c : 0;
        img.at(x, y, c) = png.samples[base + src] / scale;
      }
    }
  }
  return img;
}

void save_png(const std::filesystem::path& path, const ImageF& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ValidationError("PNG export supports 1 or 3 channels");
  }
  std::vector<std::uint16_t> samples(image.data.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i] = static_cast<std::uint16_t>(std::lround(std::clamp(image.data[i], 0.0, 1.0) * 255.0));
  }
  encode_png(path, image.width, image.height, image.channels, 8, samples);
}

MaskMap load_mask_png(const std::filesystem::path& path) {
  const DecodedPng png = decode_png(path);
  if (png.channels != 1) {
    throw ValidationError("mask '" + path.string() + "' must be single-channel");
  }
  MaskMap mask(png.width, png.height, 1);
  std::copy(png.samples.begin(), png.samples.end(), mask.data.begin());
  return mask;
}

void save_mask_png(const std::filesystem::path& path, const MaskMap& mask) {
  encode_png(path, mask.width, mask.height, 1, 16, mask.data);
}

MaskMap load_mask_map(const std::filesystem::path& path, const CameraView& view) {
  MaskMap mask = load_mask_png(path);
  if (mask.width != view.width || mask.height != view.height) {
    throw ValidationError("mask '" + path.string() + "' is " + std::to_string(mask.width) + "x" +
                          std::to_string(mask.height) + ", view '" + view.name + "' is " +
                          std::to_string(view.width) + "x" + std::to_string(view.height));
  }
  return mask;
}

void save_pfm(const std::filesystem::path& path, const ImageF& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ValidationError("PFM export supports 1 or 3 channels");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write PFM '" + path.string() + "'");
  out << (image.channels == 3 ? "PF" : "Pf") << "\n" << image.width << " " << image.height << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(image.width) * image.channels);
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c)
        row[static_cast<std::size_t>(x) * image.channels + c] = static_cast<float>(image.at(x, y, c));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
  }
}

ImageF load_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PFM '" + path.string() + "'");
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  in.get();
  if ((magic != "PF" && magic != "Pf") || w <= 0 || h <= 0) throw ParseError("bad PFM header");
  if (scale > 0) throw ParseError("big-endian PFM is not supported");
  const int channels = magic == "PF" ? 3 : 1;
  ImageF img(w, h, channels);
  std::vector<float> row(static_cast<std::size_t>(w) * channels);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    if (!in) throw ParseError("truncated PFM");
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) img.at(x, y, c) = row[static_cast<std::size_t>(x) * channels + c];
  }
  return img;
}

}  // namespace pugs
