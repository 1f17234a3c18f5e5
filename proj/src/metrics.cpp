#include "relharm/metrics.hpp"

#include <cmath>
#include <vector>

namespace relharm {

double mse(const Image& a, const Image& b) {
    require_same_shape(a, b, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        s += d * d;
    }
    return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}

double psnr_from_mse(double mse_value) {
    if (mse_value < 1e-10) return kPsnrCap;
    return -10.0 * std::log10(mse_value);
}

double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 1.0) * (0.01 * 1.0);
constexpr double kC2 = (0.03 * 1.0) * (0.03 * 1.0);

std::vector<double> gaussian_kernel(int size) {
    std::vector<double> k(size);
    const double mid = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        k[i] = std::exp(-(i - mid) * (i - mid) / (2.0 * kSigma * kSigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    require_same_shape(a, b, "ssim");
    const int wy = std::min(kWindow, a.height), wx = std::min(kWindow, a.width);
    const std::vector<double> ky = gaussian_kernel(wy), kx = gaussian_kernel(wx);
    const int ny = a.height - wy + 1, nx = a.width - wx + 1;
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c)
        for (int y0 = 0; y0 < ny; ++y0)
            for (int x0 = 0; x0 < nx; ++x0) {
                double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
                for (int dy = 0; dy < wy; ++dy)
                    for (int dx = 0; dx < wx; ++dx) {
                        const double w = ky[dy] * kx[dx];
                        const double va = a.at(c, y0 + dy, x0 + dx), vb = b.at(c, y0 + dy, x0 + dx);
                        mu_a += w * va;
                        mu_b += w * vb;
                        aa += w * va * va;
                        bb += w * vb * vb;
                        ab += w * va * vb;
                    }
                const double var_a = aa - mu_a * mu_a, var_b = bb - mu_b * mu_b, cov = ab - mu_a * mu_b;
                total += ((2 * mu_a * mu_b + kC1) * (2 * cov + kC2)) /
                         ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
            }
    return total / (static_cast<double>(a.channels) * ny * nx);
}

double masked_mse(const Image& a, const Image& b, const Mask& m) {
    require_same_shape(a, b, "masked_mse");
    if (m.channels != 1 || m.height != a.height || m.width != a.width) throw ShapeError("masked_mse: mask shape");
    double s = 0.0;
    std::size_t n = 0;
    for (int c = 0; c < a.channels; ++c)
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                if (m.at(0, y, x) <= 0.5f) continue;
                const double d = static_cast<double>(a.at(c, y, x)) - b.at(c, y, x);
                s += d * d;
                ++n;
            }
    return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace relharm
