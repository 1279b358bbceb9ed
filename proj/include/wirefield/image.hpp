#pragma once

#include "wirefield/geometry.hpp"

#include <string>
#include <vector>

namespace wirefield {

/// Linear RGB image, values nominally in [0,1], row-major, interleaved.
class Image {
 public:
  Image() = default;
  Image(int width, int height, const Vec3& fill = Vec3::Zero());

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  Vec3 pixel(int x, int y) const;
  Vec3 pixel(std::size_t i) const { return {data_[3 * i], data_[3 * i + 1], data_[3 * i + 2]}; }
  void set(int x, int y, const Vec3& c);
  void set(std::size_t i, const Vec3& c);

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

inline constexpr double kPsnrCap = 99.0;

double mean_squared_error(const Image& a, const Image& b);
/// -10 log10(MSE); identical images report `cap`.
double psnr(const Image& a, const Image& b, double cap = kPsnrCap);
/// Mean SSIM over all 8×8 windows (stride 1) and the three channels, with
/// C1 = 0.01², C2 = 0.03² for unit dynamic range.
double ssim(const Image& a, const Image& b);

void write_png(const std::string& path, const Image& image);
void write_ppm(const std::string& path, const Image& image);

}  // namespace wirefield
