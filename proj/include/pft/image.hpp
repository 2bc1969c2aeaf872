#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pft/tensor.hpp"

namespace pft {

class ImageError : public Error {
public:
    using Error::Error;
};

/// Planar RGB image, values in [0,1]. Plane order is R, G, B.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;

    Image() = default;
    Image(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), values(3 * h * w, fill) {}

    bool empty() const { return values.empty(); }
    std::size_t plane() const { return height * width; }
    float& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
    float at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
    bool same_size(const Image& o) const { return height == o.height && width == o.width; }
};

struct StereoPair {
    Image left;
    Image right;
};

/// 8 or 16 bit RGB/RGBA; alpha is dropped.
Image load_png(const std::string& path);

/// Writes 8-bit RGB, byte = round(clamp(v) * 255), halves away from zero.
void save_png(const Image& img, const std::string& path);

std::uint8_t quantize_8bit(float v);

/// Keys cubic convolution kernel.
double cubic_weight(double t, double a = -0.5);

/// Separable bicubic (a = -0.5). Downscaling widens the kernel by the scale
/// ratio. Pixel-center aligned, edges clamp.
Image bicubic_resize(const Image& img, std::size_t out_h, std::size_t out_w);

Image crop(const Image& img, std::size_t y, std::size_t x, std::size_t h, std::size_t w);
Image mirror_horizontal(const Image& img);

struct PatchPair {
    StereoPair lr;
    StereoPair hr;
};

/// Same crop in both views: LR patch at (y, x), HR patch scale times larger
/// at (scale*y, scale*x).
PatchPair extract_patch_pair(const StereoPair& lr, const StereoPair& hr, std::size_t patch_h, std::size_t patch_w,
                             std::size_t scale, std::size_t y, std::size_t x);

/// Stacks equally sized images into [B,3,H,W].
template <typename T>
Tensor<T> images_to_tensor(const std::vector<const Image*>& images);

template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
    return images_to_tensor<T>({&img});
}

/// Batch entry `index` of a [B,3,H,W] tensor, clamped to [0,1].
template <typename T>
Image tensor_to_image(const Tensor<T>& t, std::size_t index = 0);

}  // namespace pft
