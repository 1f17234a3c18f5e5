#include "relharm/envlight.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace relharm {

static_assert(std::endian::native == std::endian::little, "ENVM I/O assumes a little-endian host");

Vec3 normalize(const Vec3& v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return {v[0] / n, v[1] / n, v[2] / n};
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

EnvMap::EnvMap(Image radiance) : pixels_(std::move(radiance)) {
    if (pixels_.channels != 3) throw ContractError("EnvMap: need 3 channels");
    if (pixels_.height < 1 || pixels_.width != 2 * pixels_.height) throw ContractError("EnvMap: width must be 2*height");
    for (float v : pixels_.data)
        if (!std::isfinite(v) || v < 0.0f) throw ContractError("EnvMap: radiance must be finite and >= 0");
}

EnvMap EnvMap::constant(int height, Rgb value) {
    Image img(3, height, 2 * height);
    for (int c = 0; c < 3; ++c)
        std::fill_n(img.data.begin() + c * img.plane(), img.plane(), static_cast<float>(value[c]));
    return EnvMap(std::move(img));
}

Rgb EnvMap::sample(double u, double v) const {
    const int w = width();
    const int h = height();
    const double fx = u - 0.5;
    const double fy = std::clamp(v - 0.5, 0.0, h - 1.0);
    const double x0f = std::floor(fx);
    const int x0 = ((static_cast<int>(x0f) % w) + w) % w;
    const int x1 = (x0 + 1) % w;
    const double tx = fx - x0f;
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    Rgb out{};
    for (int c = 0; c < 3; ++c) {
        const double a = pixels_.at(c, y0, x0), b = pixels_.at(c, y0, x1);
        const double d = pixels_.at(c, y1, x0), e = pixels_.at(c, y1, x1);
        const double top = a + tx * (b - a);
        const double bot = d + tx * (e - d);
        out[c] = top + ty * (bot - top);
    }
    return out;
}

double EnvMap::texel_solid_angle(int v) const {
    const double theta = (v + 0.5) / height() * kPi;
    return (2.0 * kPi / width()) * (kPi / height()) * std::sin(theta);
}

EnvMap EnvMap::scaled(double s) const {
    Image img = pixels_;
    for (float& v : img.data) v = static_cast<float>(v * s);
    return EnvMap(std::move(img));
}

EnvMap EnvMap::mirrored() const { return EnvMap(flip_horizontal(pixels_)); }

void CropSpec::validate() const {
    if (!(fov_deg > 10.0 && fov_deg < 150.0)) throw ContractError("CropSpec: fov must lie in (10, 150) degrees");
    if (!(pitch > -kPi / 2 && pitch < kPi / 2)) throw ContractError("CropSpec: pitch must lie in (-pi/2, pi/2)");
    if (out_w < 8 || out_h < 8) throw ContractError("CropSpec: output must be at least 8x8");
}

EquirectCoord dir_to_equirect(const Vec3& d, int height, int width) {
    const double len2 = dot(d, d);
    if (std::abs(std::sqrt(len2) - 1.0) > 1e-6) throw ContractError("dir_to_equirect: direction is not unit length");
    const double theta = std::acos(std::clamp(d[1], -1.0, 1.0));
    const double horiz = d[0] * d[0] + d[2] * d[2];
    const double phi = horiz < 1e-24 ? 0.0 : std::atan2(d[0], d[2]);
    double u = (phi + kPi) / (2.0 * kPi) * width;
    if (u >= width) u -= width;
    return {u, theta / kPi * height};
}

Vec3 equirect_to_dir(double u, double v, int height, int width) {
    const double phi = u / width * 2.0 * kPi - kPi;
    const double theta = v / height * kPi;
    return {std::sin(theta) * std::sin(phi), std::cos(theta), std::sin(theta) * std::cos(phi)};
}

namespace {

int yaw_shift(double yaw, int width) {
    const long k = std::lround(yaw / (2.0 * kPi) * width);
    return static_cast<int>(((k % width) + width) % width);
}

}  // namespace

EnvMap rotate_envmap(const EnvMap& env, double yaw) {
    const int w = env.width();
    const int k = yaw_shift(yaw, w);
    if (k == 0) return env;
    Image out(3, env.height(), w);
    for (int c = 0; c < 3; ++c)
        for (int v = 0; v < env.height(); ++v)
            for (int u = 0; u < w; ++u) out.at(c, v, u) = env.at(c, v, (u + k) % w);
    return EnvMap(std::move(out));
}

Vec3 rotate_dir_yaw(const Vec3& d, double yaw) {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {d[0] * c + d[2] * s, d[1], -d[0] * s + d[2] * c};
}

Vec3 crop_ray(const CropSpec& crop, double px, double py) {
    const double tan_half = std::tan(crop.fov_deg * kPi / 360.0);
    const double x = ((px + 0.5) / crop.out_w * 2.0 - 1.0) * tan_half;
    const double y = (1.0 - (py + 0.5) / crop.out_h * 2.0) * tan_half * crop.out_h / crop.out_w;
    Vec3 d = normalize({x, y, 1.0});
    const double cp = std::cos(crop.pitch), sp = std::sin(crop.pitch);
    d = {d[0], d[1] * cp + d[2] * sp, -d[1] * sp + d[2] * cp};
    const double cy = std::cos(crop.yaw), sy = std::sin(crop.yaw);
    return normalize({d[0] * cy + d[2] * sy, d[1], -d[0] * sy + d[2] * cy});
}

Image project_to_background(const EnvMap& env, const CropSpec& crop) {
    crop.validate();
    Image out(3, crop.out_h, crop.out_w);
    for (int y = 0; y < crop.out_h; ++y)
        for (int x = 0; x < crop.out_w; ++x) {
            const auto [u, v] = dir_to_equirect(crop_ray(crop, x, y), env.height(), env.width());
            const Rgb rgb = env.sample(u, v);
            for (int c = 0; c < 3; ++c) out.at(c, y, x) = static_cast<float>(rgb[c]);
        }
    return out;
}

Rgb irradiance(const EnvMap& env, const Vec3& n) {
    const int h = env.height(), w = env.width();
    Rgb e{};
    for (int v = 0; v < h; ++v) {
        const double dw = env.texel_solid_angle(v);
        for (int u = 0; u < w; ++u) {
            const double cosine = dot(n, equirect_to_dir(u + 0.5, v + 0.5, h, w));
            if (cosine <= 0.0) continue;
            for (int c = 0; c < 3; ++c) e[c] += env.at(c, v, u) * cosine * dw;
        }
    }
    return e;
}

float tonemap_value(float x) {
    const double r = static_cast<double>(x) / (1.0 + x);
    return static_cast<float>(std::pow(r, 1.0 / 2.2));
}

Image tonemap_ldr(const Image& linear) {
    Image out = linear;
    for (float& v : out.data) v = tonemap_value(std::max(v, 0.0f));
    return out;
}

Image env_thumbnail(const EnvMap& env, int size) { return resize_bilinear(tonemap_ldr(env.pixels()), size, size); }

void write_envm(const std::filesystem::path& path, const EnvMap& env) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    const std::uint32_t h = env.height(), w = env.width();
    out.write("ENVM", 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    std::vector<float> row(static_cast<std::size_t>(w) * 3);
    for (std::uint32_t v = 0; v < h; ++v) {
        for (std::uint32_t u = 0; u < w; ++u)
            for (int c = 0; c < 3; ++c) row[u * 3 + c] = env.at(c, v, u);
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

EnvMap read_envm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    char magic[4];
    std::uint32_t h = 0, w = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&h), 4);
    in.read(reinterpret_cast<char*>(&w), 4);
    if (!in || std::memcmp(magic, "ENVM", 4) != 0) throw std::runtime_error("not an ENVM file: " + path.string());
    if (h == 0 || h > 8192 || w != 2 * h) throw std::runtime_error("bad ENVM dimensions: " + path.string());
    Image img(3, static_cast<int>(h), static_cast<int>(w));
    std::vector<float> row(static_cast<std::size_t>(w) * 3);
    for (std::uint32_t v = 0; v < h; ++v) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
        if (!in) throw std::runtime_error("truncated ENVM file: " + path.string());
        for (std::uint32_t u = 0; u < w; ++u)
            for (int c = 0; c < 3; ++c) img.at(c, v, u) = row[u * 3 + c];
    }
    return EnvMap(std::move(img));
}

}  // namespace relharm
