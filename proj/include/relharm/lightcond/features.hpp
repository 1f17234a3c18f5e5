#pragma once

#include <filesystem>

#include "relharm/image.hpp"
#include "relharm/nn/tensor.hpp"

namespace relharm {

/// Per-cell L2 norm over channels of the first feature in the batch, divided
/// by its maximum (an all-zero feature gives an all-zero map). [1,h,w].
Image feature_norm_map(const nn::Tensor<float>& f);

/// Binary "FEAT" file: magic, u32 C, u32 H, u32 W, C*H*W little-endian
/// float32 in channel-major order. Writes the first feature of the batch.
void write_feature(const std::filesystem::path& path, const nn::Tensor<float>& f);
nn::Tensor<float> read_feature(const std::filesystem::path& path);

}  // namespace relharm
