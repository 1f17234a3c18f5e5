#pragma once

#include <array>
#include <filesystem>
#include <stdexcept>

#include "relharm/image.hpp"

namespace relharm {

using Vec3 = std::array<double, 3>;
using Rgb = std::array<double, 3>;

inline constexpr double kPi = 3.14159265358979323846;

/// Violated precondition on an argument (non-unit direction, bad crop, ...).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Equirectangular radiance map. Row v spans polar angle [0, pi] from the +y
/// pole downwards, column u spans azimuth [-pi, pi) where azimuth 0 is +z and
/// azimuth +pi/2 is +x. Width is always twice the height.
class EnvMap {
public:
    EnvMap() = default;
    /// Takes ownership of a 3-channel planar radiance image; validates it.
    explicit EnvMap(Image radiance);
    static EnvMap constant(int height, Rgb value);

    int height() const { return pixels_.height; }
    int width() const { return pixels_.width; }
    const Image& pixels() const { return pixels_; }

    float at(int c, int v, int u) const { return pixels_.at(c, v, u); }

    /// Bilinear lookup at continuous texel coordinates (texel j covers [j, j+1)).
    /// Wraps horizontally, clamps vertically.
    Rgb sample(double u, double v) const;

    /// Solid angle of a texel in row v, using the midpoint sin(theta) weight.
    double texel_solid_angle(int v) const;

    EnvMap scaled(double s) const;
    /// Mirror about the x = 0 plane (azimuth -> -azimuth).
    EnvMap mirrored() const;

private:
    Image pixels_;
};

struct CropSpec {
    double fov_deg = 60.0;  // horizontal
    double yaw = 0.0;
    double pitch = 0.0;
    int out_w = 64;
    int out_h = 64;

    void validate() const;
};

struct EquirectCoord {
    double u;
    double v;
};

/// Direction to continuous equirect coordinates. At the poles the azimuth is
/// undefined; u = W/2 is returned there.
EquirectCoord dir_to_equirect(const Vec3& d, int height, int width);
Vec3 equirect_to_dir(double u, double v, int height, int width);

/// Camera-yaw rotation: the result is the map as seen from a frame yawed by
/// `yaw`, so projecting the result at yaw 0 matches projecting the input at
/// `yaw`. Implemented as an exact cyclic column shift by round(yaw/2pi * W).
EnvMap rotate_envmap(const EnvMap& env, double yaw);

/// Rotation applied to a direction by the same yaw, i.e. the world direction
/// that lands on `d` after rotate_envmap(env, yaw).
Vec3 rotate_dir_yaw(const Vec3& d, double yaw);

/// Pinhole camera ray through the centre of pixel (px, py) for a crop.
/// Image x grows with world +x, image y grows downwards.
Vec3 crop_ray(const CropSpec& crop, double px, double py);

/// Perspective crop of the panorama (linear radiance).
Image project_to_background(const EnvMap& env, const CropSpec& crop);

/// Cosine-weighted sum over all texels: sum L(w) max(0, n.w) dw.
Rgb irradiance(const EnvMap& env, const Vec3& n);

/// Reinhard x/(1+x) then gamma 1/2.2; output in [0,1].
float tonemap_value(float x);
Image tonemap_ldr(const Image& linear);

/// Tonemapped panorama resized to a square thumbnail for network input.
Image env_thumbnail(const EnvMap& env, int size);

/// Binary "ENVM" file: magic, u32 H, u32 W, H*W*3 little-endian float32,
/// row-major with interleaved RGB.
void write_envm(const std::filesystem::path& path, const EnvMap& env);
EnvMap read_envm(const std::filesystem::path& path);

Vec3 normalize(const Vec3& v);
double dot(const Vec3& a, const Vec3& b);

}  // namespace relharm
