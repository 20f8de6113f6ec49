#pragma once

// PNG-backed image I/O. Images travel through the pipeline as channel-first
// float tensors in [0,1]; parse maps stay 8-bit label grids.

#include <cstdint>
#include <string>
#include <vector>

#include "tryon/tensor.hpp"

namespace tryon {

// Human-parse label table (8-bit single-channel PNG values).
enum ParseLabel : std::uint8_t {
    kParseBackground = 0,
    kParseHair = 1,
    kParseFace = 2,
    kParseUpperClothes = 3,
    kParseArms = 4,
    kParseLegs = 5,
    kParseOtherBody = 6,
};
inline constexpr std::uint8_t kParseLabelMax = 6;

struct ParseMap {
    int h = 0, w = 0;
    std::vector<std::uint8_t> labels;  // row-major

    std::uint8_t at(int r, int c) const {
        return labels[static_cast<std::size_t>(r) * static_cast<std::size_t>(w) +
                      static_cast<std::size_t>(c)];
    }
};

// Loads an 8-bit PNG as a [3,H,W] tensor in [0,1]; gray and RGBA inputs are
// expanded/flattened to RGB.
Tensor<float> load_image_png(const std::string& path);

// Loads an 8-bit single-channel PNG of region labels.
ParseMap load_parse_png(const std::string& path);

// Writes [3,H,W] (RGB) or [1,H,W] / 2-d (gray) tensors as 8-bit PNG with
// round-half-up quantization.
void save_image_png(const std::string& path, const Tensor<float>& image);
void save_gray_png(const std::string& path, const Tensor<float>& image);
void save_parse_png(const std::string& path, const ParseMap& parse);

}  // namespace tryon
