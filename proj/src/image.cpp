#include "wirefield/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace wirefield {

namespace {

void require_same_size(const Image& a, const Image& b) {
  if (a.width() != b.width() || a.height() != b.height() || a.pixel_count() == 0) {
    throw std::invalid_argument("image metrics need equal, non-empty dimensions");
  }
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

constexpr int kSsimWindow = 8;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

}  // namespace

Image::Image(int width, int height, const Vec3& fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw std::invalid_argument("Image: negative size");
  data_.resize(pixel_count() * 3);
  for (std::size_t i = 0; i < pixel_count(); ++i) set(i, fill);
}

Vec3 Image::pixel(int x, int y) const { return pixel(static_cast<std::size_t>(y) * width_ + x); }

void Image::set(int x, int y, const Vec3& c) { set(static_cast<std::size_t>(y) * width_ + x, c); }

void Image::set(std::size_t i, const Vec3& c) {
  data_[3 * i] = c.x();
  data_[3 * i + 1] = c.y();
  data_[3 * i + 2] = c.z();
}

double mean_squared_error(const Image& a, const Image& b) {
  require_same_size(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.data().size());
}

double psnr(const Image& a, const Image& b, double cap) {
  const double mse = mean_squared_error(a, b);
  if (mse <= 0.0) return cap;
  return std::min(cap, -10.0 * std::log10(mse));
}

double ssim(const Image& a, const Image& b) {
  require_same_size(a, b);
  const int w = std::min(kSsimWindow, a.width());
  const int h = std::min(kSsimWindow, a.height());
  const double n = static_cast<double>(w * h);
  double total = 0.0;
  int windows = 0;
  for (int c = 0; c < 3; ++c) {
    for (int y0 = 0; y0 + h <= a.height(); ++y0) {
      for (int x0 = 0; x0 + w <= a.width(); ++x0) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int y = y0; y < y0 + h; ++y) {
          for (int x = x0; x < x0 + w; ++x) {
            const std::size_t i = 3 * (static_cast<std::size_t>(y) * a.width() + x) + c;
            const double va = a.data()[i];
            const double vb = b.data()[i];
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        }
        const double ma = sa / n;
        const double mb = sb / n;
        const double var_a = std::max(0.0, saa / n - ma * ma);
        const double var_b = std::max(0.0, sbb / n - mb * mb);
        const double cov = sab / n - ma * mb;
        total += ((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
                 ((ma * ma + mb * mb + kSsimC1) * (var_a + var_b + kSsimC2));
        ++windows;
      }
    }
  }
  return total / windows;
}

void write_png(const std::string& path, const Image& image) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw std::runtime_error("cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  std::vector<unsigned char> row(static_cast<std::size_t>(image.width()) * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width(), image.height(), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const Vec3 p = image.pixel(x, y);
      for (int c = 0; c < 3; ++c) row[3 * x + c] = to_byte(p[c]);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_ppm(const std::string& path, const Image& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    const Vec3 p = image.pixel(i);
    for (int c = 0; c < 3; ++c) os.put(static_cast<char>(to_byte(p[c])));
  }
}

}  // namespace wirefield
