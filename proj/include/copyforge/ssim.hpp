#pragma once

#include "copyforge/image.hpp"

namespace copyforge {

inline constexpr int kSsimWindow = 8;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

// Mean structural similarity over every valid 8x8 window (stride 1), computed
// per channel with uniform weights and population statistics, then averaged
// over the three channels. Throws Shape when the images differ in size.
double ssim(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace copyforge
