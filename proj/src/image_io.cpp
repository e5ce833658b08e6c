#include "gsseg/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>

namespace gsseg {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) {
    throw std::runtime_error("cannot open '" + path.string() + "'");
  }
  return f;
}

// Errors are recorded and unwound with png_longjmp back to the setjmp in the caller; no C++
// frames sit between libpng and that setjmp, so no destructors are skipped.
thread_local std::string g_png_error;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  g_png_error = msg != nullptr ? msg : "unknown error";
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

class PngReader {
 public:
  PngReader() {
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    if (png_ == nullptr) throw std::runtime_error("png_create_read_struct failed");
    info_ = png_create_info_struct(png_);
    if (info_ == nullptr) {
      png_destroy_read_struct(&png_, nullptr, nullptr);
      throw std::runtime_error("png_create_info_struct failed");
    }
  }
  ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  png_structp png() { return png_; }
  png_infop info() { return info_; }

 private:
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

class PngWriter {
 public:
  PngWriter() {
    png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    if (png_ == nullptr) throw std::runtime_error("png_create_write_struct failed");
    info_ = png_create_info_struct(png_);
    if (info_ == nullptr) {
      png_destroy_write_struct(&png_, nullptr);
      throw std::runtime_error("png_create_info_struct failed");
    }
  }
  ~PngWriter() { png_destroy_write_struct(&png_, &info_); }
  PngWriter(const PngWriter&) = delete;
  PngWriter& operator=(const PngWriter&) = delete;

  png_structp png() { return png_; }
  png_infop info() { return info_; }

 private:
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

}  // namespace

GrayImage read_png_gray(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw std::runtime_error("'" + path.string() + "' is not a PNG file");
  }

  PngReader reader;
  GrayImage image;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(reader.png())) != 0) {
    throw std::runtime_error("reading '" + path.string() + "': " + g_png_error);
  }
  png_init_io(reader.png(), file.get());
  png_set_sig_bytes(reader.png(), 8);
  png_read_info(reader.png(), reader.info());

  const int color_type = png_get_color_type(reader.png(), reader.info());
  const int bit_depth = png_get_bit_depth(reader.png(), reader.info());
  if (color_type != PNG_COLOR_TYPE_GRAY) {
    throw std::runtime_error("'" + path.string() + "' is not a single-channel grayscale PNG");
  }
  if (bit_depth != 8 && bit_depth != 16) {
    throw std::runtime_error("'" + path.string() + "' must be 8- or 16-bit, got " +
                             std::to_string(bit_depth));
  }
  if (bit_depth == 16) png_set_swap(reader.png());  // host little-endian samples

  image.width = static_cast<int>(png_get_image_width(reader.png(), reader.info()));
  image.height = static_cast<int>(png_get_image_height(reader.png(), reader.info()));
  image.bit_depth = bit_depth;
  image.pixels.resize(static_cast<std::size_t>(image.width) * image.height);

  const std::size_t row_bytes = png_get_rowbytes(reader.png(), reader.info());
  row.resize(row_bytes);
  for (int y = 0; y < image.height; ++y) {
    png_read_row(reader.png(), row.data(), nullptr);
    std::uint16_t* out = image.pixels.data() + static_cast<std::size_t>(y) * image.width;
    if (bit_depth == 8) {
      std::copy(row.begin(), row.begin() + image.width, out);
    } else {
      for (int x = 0; x < image.width; ++x) {
        out[x] = static_cast<std::uint16_t>(row[2 * x] | (row[2 * x + 1] << 8));
      }
    }
  }
  png_read_end(reader.png(), nullptr);
  return image;
}

void write_png_gray(const GrayImage& image, const std::filesystem::path& path) {
  if (image.bit_depth != 8 && image.bit_depth != 16) {
    throw std::invalid_argument("PNG bit depth must be 8 or 16");
  }
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw std::invalid_argument("pixel buffer does not match image size");
  }
  if (image.bit_depth == 8 &&
      std::any_of(image.pixels.begin(), image.pixels.end(), [](std::uint16_t v) { return v > 255; })) {
    throw std::invalid_argument("pixel value exceeds 8-bit range");
  }
  FilePtr file = open_file(path, "wb");
  PngWriter writer;
  const std::size_t bytes_per_sample = image.bit_depth == 8 ? 1 : 2;
  std::vector<png_byte> row(image.width * bytes_per_sample);
  if (setjmp(png_jmpbuf(writer.png())) != 0) {
    throw std::runtime_error("writing '" + path.string() + "': " + g_png_error);
  }
  png_init_io(writer.png(), file.get());
  png_set_IHDR(writer.png(), writer.info(), image.width, image.height, image.bit_depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(writer.png(), writer.info());

  for (int y = 0; y < image.height; ++y) {
    const std::uint16_t* in = image.pixels.data() + static_cast<std::size_t>(y) * image.width;
    for (int x = 0; x < image.width; ++x) {
      if (image.bit_depth == 8) {
        row[x] = static_cast<png_byte>(in[x]);
      } else {
        // PNG stores 16-bit samples big-endian.
        row[2 * x] = static_cast<png_byte>(in[x] >> 8);
        row[2 * x + 1] = static_cast<png_byte>(in[x] & 0xff);
      }
    }
    png_write_row(writer.png(), row.data());
  }
  png_write_end(writer.png(), nullptr);
}

void write_png_rgb(int width, int height, const std::vector<std::uint8_t>& rgb,
                   const std::filesystem::path& path) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw std::invalid_argument("RGB buffer does not match image size");
  }
  FilePtr file = open_file(path, "wb");
  PngWriter writer;
  if (setjmp(png_jmpbuf(writer.png())) != 0) {
    throw std::runtime_error("writing '" + path.string() + "': " + g_png_error);
  }
  png_init_io(writer.png(), file.get());
  png_set_IHDR(writer.png(), writer.info(), width, height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(writer.png(), writer.info());
  for (int y = 0; y < height; ++y) {
    png_write_row(writer.png(),
                  const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(y) * width * 3));
  }
  png_write_end(writer.png(), nullptr);
}

void write_pgm(int width, int height, const std::vector<double>& values,
               const std::filesystem::path& path) {
  if (values.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("PGM buffer does not match image size");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << "P5\n" << width << " " << height << "\n255\n";
  std::vector<char> bytes(values.size());
  std::transform(values.begin(), values.end(), bytes.begin(), [](double v) {
    return static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  });
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace gsseg
