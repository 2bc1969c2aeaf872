#include "pft/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

namespace pft {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngMessage {
    char text[256] = {};
};

void on_png_error(png_structp png, png_const_charp msg) {
    auto* m = static_cast<PngMessage*>(png_get_error_ptr(png));
    std::snprintf(m->text, sizeof(m->text), "%s", msg);
    png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct RawPng {
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int bit_depth = 0;
    int color_type = 0;
    std::size_t row_bytes = 0;
};

// Everything touched after setjmp lives in the caller so longjmp never skips
// a destructor.
bool read_png_raw(std::FILE* fp, RawPng* info, std::vector<unsigned char>* pixels, std::vector<png_bytep>* rows,
                  PngMessage* msg) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, msg, on_png_error, on_png_warning);
    if (!png) return false;
    png_infop pinfo = png_create_info_struct(png);
    if (!pinfo) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        return false;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &pinfo, nullptr);
        return false;
    }
    png_init_io(png, fp);
    png_read_info(png, pinfo);
    info->width = png_get_image_width(png, pinfo);
    info->height = png_get_image_height(png, pinfo);
    info->bit_depth = png_get_bit_depth(png, pinfo);
    info->color_type = png_get_color_type(png, pinfo);
    if ((info->color_type != PNG_COLOR_TYPE_RGB && info->color_type != PNG_COLOR_TYPE_RGB_ALPHA) ||
        (info->bit_depth != 8 && info->bit_depth != 16)) {
        png_destroy_read_struct(&png, &pinfo, nullptr);
        return true;  // caller reports the unsupported format
    }
    png_set_interlace_handling(png);
    png_read_update_info(png, pinfo);
    info->row_bytes = png_get_rowbytes(png, pinfo);
    pixels->resize(info->row_bytes * info->height);
    rows->resize(info->height);
    for (png_uint_32 y = 0; y < info->height; ++y) (*rows)[y] = pixels->data() + y * info->row_bytes;
    png_read_image(png, rows->data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &pinfo, nullptr);
    return true;
}

bool write_png_raw(std::FILE* fp, png_uint_32 width, png_uint_32 height, std::vector<png_bytep>* rows,
                   PngMessage* msg) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, msg, on_png_error, on_png_warning);
    if (!png) return false;
    png_infop pinfo = png_create_info_struct(png);
    if (!pinfo) {
        png_destroy_write_struct(&png, nullptr);
        return false;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &pinfo);
        return false;
    }
    png_init_io(png, fp);
    png_set_IHDR(png, pinfo, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, pinfo);
    png_write_image(png, rows->data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &pinfo);
    return true;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

struct Taps {
    std::vector<std::size_t> offset;  // first tap of each output sample in `index`/`weight`
    std::vector<std::size_t> count;
    std::vector<std::size_t> index;
    std::vector<double> weight;
};

Taps resample_taps(std::size_t in, std::size_t out) {
    Taps t;
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    const double stretch = std::max(ratio, 1.0);
    const double support = 2.0 * stretch;
    for (std::size_t d = 0; d < out; ++d) {
        const double center = (static_cast<double>(d) + 0.5) * ratio - 0.5;
        const auto first = static_cast<long long>(std::ceil(center - support));
        const auto last = static_cast<long long>(std::floor(center + support));
        t.offset.push_back(t.index.size());
        double total = 0.0;
        const std::size_t begin = t.weight.size();
        for (long long j = first; j <= last; ++j) {
            const double w = cubic_weight((static_cast<double>(j) - center) / stretch);
            if (w == 0.0) continue;
            t.index.push_back(static_cast<std::size_t>(std::clamp<long long>(j, 0, static_cast<long long>(in) - 1)));
            t.weight.push_back(w);
            total += w;
        }
        for (std::size_t k = begin; k < t.weight.size(); ++k) t.weight[k] /= total;
        t.count.push_back(t.weight.size() - begin);
    }
    return t;
}

// Written as ref + sum w (v - ref) so a constant signal comes back exactly
// even though the normalized weights only sum to 1 up to rounding.
double apply_taps(const Taps& t, std::size_t d, const double* src, std::size_t stride) {
    const std::size_t o = t.offset[d];
    const double ref = src[t.index[o] * stride];
    double acc = 0.0;
    for (std::size_t k = 0; k < t.count[d]; ++k) acc += t.weight[o + k] * (src[t.index[o + k] * stride] - ref);
    return ref + acc;
}

}  // namespace

Image load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw ImageError("cannot open image " + path);
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw ImageError(path + ": not a PNG file");
    }
    std::rewind(fp.get());

    RawPng info;
    std::vector<unsigned char> pixels;
    std::vector<png_bytep> rows;
    PngMessage msg;
    if (!read_png_raw(fp.get(), &info, &pixels, &rows, &msg)) {
        throw ImageError(path + ": unreadable PNG (" + std::string(msg.text) + ")");
    }
    if (pixels.empty()) {
        throw ImageError(path + ": unsupported PNG format (color type " + std::to_string(info.color_type) +
                         ", bit depth " + std::to_string(info.bit_depth) + "); need 8/16-bit RGB or RGBA");
    }

    const std::size_t channels = info.color_type == PNG_COLOR_TYPE_RGB_ALPHA ? 4 : 3;
    const bool wide = info.bit_depth == 16;
    const double maxv = wide ? 65535.0 : 255.0;
    Image img(info.height, info.width);
    for (std::size_t y = 0; y < img.height; ++y) {
        const unsigned char* row = rows[y];
        for (std::size_t x = 0; x < img.width; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                const std::size_t k = x * channels + c;
                const double v = wide ? static_cast<double>((row[2 * k] << 8) | row[2 * k + 1]) : row[k];
                img.at(c, y, x) = clamp01(v / maxv);
            }
        }
    }
    return img;
}

std::uint8_t quantize_8bit(float v) {
    const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

void save_png(const Image& img, const std::string& path) {
    if (img.empty()) throw ImageError("cannot save an empty image to " + path);
    std::vector<unsigned char> pixels(img.plane() * 3);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) pixels[(y * img.width + x) * 3 + c] = quantize_8bit(img.at(c, y, x));
    std::vector<png_bytep> rows(img.height);
    for (std::size_t y = 0; y < img.height; ++y) rows[y] = pixels.data() + y * img.width * 3;

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw ImageError("cannot write image " + path);
    PngMessage msg;
    if (!write_png_raw(fp.get(), static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), &rows,
                       &msg)) {
        throw ImageError(path + ": PNG write failed (" + std::string(msg.text) + ")");
    }
    if (std::fflush(fp.get()) != 0) throw ImageError("write failed for " + path);
}

double cubic_weight(double t, double a) {
    const double x = std::abs(t);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

Image bicubic_resize(const Image& img, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw ImageError("bicubic_resize: output size must be at least 1x1");
    if (img.empty()) throw ImageError("bicubic_resize: empty input");
    const Taps tx = resample_taps(img.width, out_w);
    const Taps ty = resample_taps(img.height, out_h);

    Image out(out_h, out_w);
    std::vector<double> src(img.plane());
    std::vector<double> mid(img.height * out_w);
    for (std::size_t c = 0; c < 3; ++c) {
        std::copy(img.values.begin() + c * img.plane(), img.values.begin() + (c + 1) * img.plane(), src.begin());
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < out_w; ++x) mid[y * out_w + x] = apply_taps(tx, x, &src[y * img.width], 1);
        for (std::size_t y = 0; y < out_h; ++y)
            for (std::size_t x = 0; x < out_w; ++x) out.at(c, y, x) = clamp01(apply_taps(ty, y, &mid[x], out_w));
    }
    return out;
}

Image crop(const Image& img, std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
    if (y + h > img.height || x + w > img.width) {
        throw ImageError("crop " + std::to_string(h) + "x" + std::to_string(w) + " at (" + std::to_string(y) + "," +
                         std::to_string(x) + ") exceeds image " + std::to_string(img.height) + "x" +
                         std::to_string(img.width));
    }
    Image out(h, w);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) out.at(c, i, j) = img.at(c, y + i, x + j);
    return out;
}

Image mirror_horizontal(const Image& img) {
    Image out(img.height, img.width);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
    return out;
}

PatchPair extract_patch_pair(const StereoPair& lr, const StereoPair& hr, std::size_t patch_h, std::size_t patch_w,
                             std::size_t scale, std::size_t y, std::size_t x) {
    if (!lr.left.same_size(lr.right) || !hr.left.same_size(hr.right)) {
        throw ImageError("extract_patch_pair: left and right views differ in size");
    }
    if (hr.left.height != lr.left.height * scale || hr.left.width != lr.left.width * scale) {
        throw ImageError("extract_patch_pair: HR size is not scale x LR size");
    }
    PatchPair p;
    p.lr.left = crop(lr.left, y, x, patch_h, patch_w);
    p.lr.right = crop(lr.right, y, x, patch_h, patch_w);
    p.hr.left = crop(hr.left, y * scale, x * scale, patch_h * scale, patch_w * scale);
    p.hr.right = crop(hr.right, y * scale, x * scale, patch_h * scale, patch_w * scale);
    return p;
}

template <typename T>
Tensor<T> images_to_tensor(const std::vector<const Image*>& images) {
    if (images.empty()) throw ImageError("images_to_tensor: no images");
    const Image& first = *images.front();
    for (const Image* im : images)
        if (!im->same_size(first)) throw ImageError("images_to_tensor: images differ in size");
    Tensor<T> t({images.size(), 3, first.height, first.width});
    auto out = t.mutable_values();
    std::size_t k = 0;
    for (const Image* im : images)
        for (float v : im->values) out[k++] = static_cast<T>(v);
    return t;
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t, std::size_t index) {
    if (t.rank() != 4 || t.dim(1) != 3 || index >= t.dim(0)) {
        throw ShapeError("tensor_to_image: expected [B,3,H,W] with batch index " + std::to_string(index) + ", got " +
                         shape_str(t.shape()));
    }
    Image img(t.dim(2), t.dim(3));
    auto v = t.values();
    const std::size_t n = img.values.size();
    for (std::size_t i = 0; i < n; ++i) img.values[i] = clamp01(static_cast<double>(v[index * n + i]));
    return img;
}

template Tensor<float> images_to_tensor(const std::vector<const Image*>&);
template Tensor<double> images_to_tensor(const std::vector<const Image*>&);
template Image tensor_to_image(const Tensor<float>&, std::size_t);
template Image tensor_to_image(const Tensor<double>&, std::size_t);

}  // namespace pft
