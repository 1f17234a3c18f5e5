#include "relharm/lightcond/features.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace relharm {

Image feature_norm_map(const nn::Tensor<float>& f) {
    const nn::Shape s = f.shape();
    Image map(1, s.h, s.w);
    float peak = 0.0f;
    for (std::size_t p = 0; p < s.plane(); ++p) {
        double sum = 0.0;
        for (int c = 0; c < s.c; ++c) {
            const double v = f.data()[c * s.plane() + p];
            sum += v * v;
        }
        map.data[p] = static_cast<float>(std::sqrt(sum));
        peak = std::max(peak, map.data[p]);
    }
    if (peak > 0.0f)
        for (float& v : map.data) v /= peak;
    return map;
}

void write_feature(const std::filesystem::path& path, const nn::Tensor<float>& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    const nn::Shape s = f.shape();
    const std::uint32_t dims[3] = {static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.h),
                                   static_cast<std::uint32_t>(s.w)};
    out.write("FEAT", 4);
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(s.c * s.plane() * 4));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

nn::Tensor<float> read_feature(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    char magic[4];
    std::uint32_t dims[3] = {0, 0, 0};
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!in || std::memcmp(magic, "FEAT", 4) != 0) throw std::runtime_error("not a FEAT file: " + path.string());
    if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0 || dims[0] > 65536 || dims[1] > 4096 || dims[2] > 4096)
        throw std::runtime_error("bad FEAT dimensions: " + path.string());
    const nn::Shape s{1, static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2])};
    std::vector<float> v(s.numel());
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
    if (!in) throw std::runtime_error("truncated FEAT file: " + path.string());
    return nn::Tensor<float>::from(s, std::move(v));
}

}  // namespace relharm
