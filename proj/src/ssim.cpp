#include "copyforge/ssim.hpp"

#include <string>
#include <vector>

#include "copyforge/error.hpp"

namespace copyforge {
namespace {

// Summed-area table with a zero first row and column.
class Integral {
 public:
  Integral(int h, int w) : w1_(w + 1), data_(static_cast<std::size_t>(h + 1) * (w + 1), 0.0) {}

  double& at(int y, int x) { return data_[static_cast<std::size_t>(y) * w1_ + x]; }
  double box(int y, int x, int size) const {
    auto get = [&](int yy, int xx) { return data_[static_cast<std::size_t>(yy) * w1_ + xx]; };
    return get(y + size, x + size) - get(y, x + size) - get(y + size, x) + get(y, x);
  }

 private:
  int w1_;
  std::vector<double> data_;
};

double channel_ssim(const ImageBuffer& a, const ImageBuffer& b, int c) {
  const int h = a.height();
  const int w = a.width();
  Integral sa(h, w), sb(h, w), saa(h, w), sbb(h, w), sab(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = a.at(y, x, c);
      const double v = b.at(y, x, c);
      auto accumulate = [&](Integral& t, double value) {
        t.at(y + 1, x + 1) = value + t.at(y, x + 1) + t.at(y + 1, x) - t.at(y, x);
      };
      accumulate(sa, u);
      accumulate(sb, v);
      accumulate(saa, u * u);
      accumulate(sbb, v * v);
      accumulate(sab, u * v);
    }
  }
  constexpr double n = kSsimWindow * kSsimWindow;
  double total = 0.0;
  for (int y = 0; y + kSsimWindow <= h; ++y) {
    for (int x = 0; x + kSsimWindow <= w; ++x) {
      const double mu_a = sa.box(y, x, kSsimWindow) / n;
      const double mu_b = sb.box(y, x, kSsimWindow) / n;
      const double var_a = saa.box(y, x, kSsimWindow) / n - mu_a * mu_a;
      const double var_b = sbb.box(y, x, kSsimWindow) / n - mu_b * mu_b;
      const double cov = sab.box(y, x, kSsimWindow) / n - mu_a * mu_b;
      total += ((2 * mu_a * mu_b + kSsimC1) * (2 * cov + kSsimC2)) /
               ((mu_a * mu_a + mu_b * mu_b + kSsimC1) * (var_a + var_b + kSsimC2));
    }
  }
  const double windows = static_cast<double>(h - kSsimWindow + 1) * (w - kSsimWindow + 1);
  return total / windows;
}

}  // namespace

double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    fail(ErrorKind::Shape, "ssim needs equal sizes, got " + std::to_string(a.height()) + "x" +
                               std::to_string(a.width()) + " and " +
                               std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
  double sum = 0.0;
  for (int c = 0; c < ImageBuffer::kChannels; ++c) sum += channel_ssim(a, b, c);
  return sum / ImageBuffer::kChannels;
}

}  // namespace copyforge
