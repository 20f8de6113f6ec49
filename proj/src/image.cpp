#include "tryon/image.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

namespace tryon {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngRead {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngRead() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWrite {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWrite() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

// Decodes any 8/16-bit PNG into 8-bit rows with `channels` samples per pixel.
std::vector<std::uint8_t> read_png_rows(const std::string& path, int want_channels, int& h,
                                        int& w) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) fail("cannot open PNG for reading: ", path);
    PngRead ctx;
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) fail("libpng init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) fail("libpng info init failed");
    if (setjmp(png_jmpbuf(ctx.png))) fail("failed to decode PNG: ", path);
    png_init_io(ctx.png, file.get());
    png_read_info(ctx.png, ctx.info);

    png_set_expand(ctx.png);  // palette -> rgb, low bit depth -> 8 bits
    if (png_get_bit_depth(ctx.png, ctx.info) == 16) png_set_strip_16(ctx.png);
    const int color = png_get_color_type(ctx.png, ctx.info);
    if (want_channels == 3) {
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(ctx.png);
        png_set_strip_alpha(ctx.png);
    } else {
        if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(ctx.png, 1, -1, -1);
        png_set_strip_alpha(ctx.png);
    }
    png_read_update_info(ctx.png, ctx.info);

    h = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    w = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    const int ch = static_cast<int>(png_get_channels(ctx.png, ctx.info));
    if (ch != want_channels)
        fail("PNG ", path, ": expected ", want_channels, " channels after expansion, got ", ch);

    std::vector<std::uint8_t> rows(static_cast<std::size_t>(h) * w * want_channels);
    std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(h));
    for (int r = 0; r < h; ++r)
        row_ptrs[static_cast<std::size_t>(r)] =
            rows.data() + static_cast<std::size_t>(r) * w * want_channels;
    png_read_image(ctx.png, row_ptrs.data());
    png_read_end(ctx.png, nullptr);
    return rows;
}

void write_png_rows(const std::string& path, const std::uint8_t* rows, int h, int w,
                    int channels) {
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) fail("cannot open PNG for writing: ", path);
    PngWrite ctx;
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) fail("libpng init failed");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) fail("libpng info init failed");
    if (setjmp(png_jmpbuf(ctx.png))) fail("failed to encode PNG: ", path);
    png_init_io(ctx.png, file.get());
    // fixed settings keep output byte-stable across runs
    png_set_compression_level(ctx.png, 6);
    png_set_filter(ctx.png, 0, PNG_FILTER_NONE);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(h));
    for (int r = 0; r < h; ++r)
        row_ptrs[static_cast<std::size_t>(r)] =
            const_cast<png_bytep>(rows + static_cast<std::size_t>(r) * w * channels);
    png_write_image(ctx.png, row_ptrs.data());
    png_write_end(ctx.png, nullptr);
}

std::uint8_t quantize(float v) {
    float x = v * 255.0f + 0.5f;  // round half up
    if (x < 0.0f) x = 0.0f;
    if (x > 255.0f) x = 255.0f;
    return static_cast<std::uint8_t>(x);
}

}  // namespace

Tensor<float> load_image_png(const std::string& path) {
    int h = 0, w = 0;
    std::vector<std::uint8_t> rows = read_png_rows(path, 3, h, w);
    std::vector<float> data(static_cast<std::size_t>(3) * h * w);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const std::size_t px = static_cast<std::size_t>(r) * w + c;
            for (int ch = 0; ch < 3; ++ch)
                data[static_cast<std::size_t>(ch) * plane + px] =
                    static_cast<float>(rows[px * 3 + static_cast<std::size_t>(ch)]) / 255.0f;
        }
    return Tensor<float>::from_data({3, h, w}, std::move(data));
}

ParseMap load_parse_png(const std::string& path) {
    ParseMap parse;
    parse.labels = read_png_rows(path, 1, parse.h, parse.w);
    for (std::uint8_t v : parse.labels)
        if (v > kParseLabelMax)
            fail("parse map ", path, ": label ", static_cast<int>(v), " outside table 0..",
                 static_cast<int>(kParseLabelMax));
    return parse;
}

void save_image_png(const std::string& path, const Tensor<float>& image) {
    const auto& s = image.shape();
    if (s.size() != 3 || s[0] != 3) fail("save_image_png: tensor must be [3,H,W]");
    const int h = s[1], w = s[2];
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<std::uint8_t> rows(plane * 3);
    for (std::size_t px = 0; px < plane; ++px)
        for (int ch = 0; ch < 3; ++ch)
            rows[px * 3 + static_cast<std::size_t>(ch)] =
                quantize(image.data()[static_cast<std::size_t>(ch) * plane + px]);
    write_png_rows(path, rows.data(), h, w, 3);
}

void save_gray_png(const std::string& path, const Tensor<float>& image) {
    const auto& s = image.shape();
    int h = 0, w = 0;
    if (s.size() == 3 && s[0] == 1) {
        h = s[1];
        w = s[2];
    } else if (s.size() == 2) {
        h = s[0];
        w = s[1];
    } else {
        fail("save_gray_png: tensor must be [1,H,W] or [H,W]");
    }
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<std::uint8_t> rows(plane);
    for (std::size_t px = 0; px < plane; ++px) rows[px] = quantize(image.data()[px]);
    write_png_rows(path, rows.data(), h, w, 1);
}

void save_parse_png(const std::string& path, const ParseMap& parse) {
    write_png_rows(path, parse.labels.data(), parse.h, parse.w, 1);
}

}  // namespace tryon
