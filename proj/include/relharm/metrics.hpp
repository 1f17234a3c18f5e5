#pragma once

#include "relharm/image.hpp"

namespace relharm {

/// Mean squared difference over all pixels and channels.
double mse(const Image& a, const Image& b);

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) for unit peak; 99 dB when MSE < 1e-10.
double psnr_from_mse(double mse_value);
double psnr(const Image& a, const Image& b);

/// Structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, L = 1; averaged over all fully-contained windows and
/// over channels. Images smaller than the window use a single window covering
/// the whole image.
double ssim(const Image& a, const Image& b);

/// MSE restricted to pixels with mask > 0.5 (all channels). Returns 0 for an
/// empty mask.
double masked_mse(const Image& a, const Image& b, const Mask& m);

}  // namespace relharm
