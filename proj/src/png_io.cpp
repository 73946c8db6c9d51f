#include "harunet/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>

#include "harunet/errors.hpp"

namespace harunet {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

void write_gray(const std::string& path, int bit_depth, int height, int width,
                const std::vector<std::vector<png_byte>>& rows) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot write png: " + path);

    PngWriter w;
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!w.png) throw IoError("png_create_write_struct failed");
    w.info = png_create_info_struct(w.png);
    if (!w.info) throw IoError("png_create_info_struct failed");
    if (setjmp(png_jmpbuf(w.png))) throw IoError("png write error: " + path);

    png_init_io(w.png, f.get());
    png_set_IHDR(w.png, w.info, width, height, bit_depth, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);
    for (int y = 0; y < height; ++y)
        png_write_row(w.png, const_cast<png_bytep>(rows[y].data()));
    png_write_end(w.png, nullptr);
}

void read_gray(const std::string& path, int expect_depth, int& height, int& width,
               std::vector<std::vector<png_byte>>& rows) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open png: " + path);

    PngReader r;
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) throw IoError("png_create_read_struct failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw IoError("png_create_info_struct failed");
    if (setjmp(png_jmpbuf(r.png))) throw IoError("png read error: " + path);

    png_init_io(r.png, f.get());
    png_read_info(r.png, r.info);

    width = static_cast<int>(png_get_image_width(r.png, r.info));
    height = static_cast<int>(png_get_image_height(r.png, r.info));
    const int depth = png_get_bit_depth(r.png, r.info);
    const int color = png_get_color_type(r.png, r.info);
    if (color != PNG_COLOR_TYPE_GRAY || depth != expect_depth)
        throw IoError("png: expected " + std::to_string(expect_depth) +
                      "-bit grayscale: " + path);

    rows.assign(height, std::vector<png_byte>(png_get_rowbytes(r.png, r.info)));
    for (int y = 0; y < height; ++y) png_read_row(r.png, rows[y].data(), nullptr);
    png_read_end(r.png, nullptr);
}

}  // namespace

void write_png16(const std::string& path, const float* pixels, int height, int width) {
    std::vector<std::vector<png_byte>> rows(height, std::vector<png_byte>(width * 2));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            float v = pixels[static_cast<size_t>(y) * width + x];
            v = std::min(1.0f, std::max(0.0f, v));
            const auto q = static_cast<uint16_t>(std::lround(v * 65535.0f));
            rows[y][2 * x] = static_cast<png_byte>(q >> 8);  // network byte order
            rows[y][2 * x + 1] = static_cast<png_byte>(q & 0xFF);
        }
    }
    write_gray(path, 16, height, width, rows);
}

void read_png16(const std::string& path, std::vector<float>& pixels, int& height, int& width) {
    std::vector<std::vector<png_byte>> rows;
    read_gray(path, 16, height, width, rows);
    pixels.resize(static_cast<size_t>(height) * width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const uint16_t q = static_cast<uint16_t>((rows[y][2 * x] << 8) | rows[y][2 * x + 1]);
            pixels[static_cast<size_t>(y) * width + x] = static_cast<float>(q) / 65535.0f;
        }
    }
}

void write_png1(const std::string& path, const uint8_t* bits, int height, int width) {
    const int rowbytes = (width + 7) / 8;
    std::vector<std::vector<png_byte>> rows(height, std::vector<png_byte>(rowbytes, 0));
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (bits[static_cast<size_t>(y) * width + x])
                rows[y][x / 8] |= static_cast<png_byte>(0x80 >> (x % 8));
    write_gray(path, 1, height, width, rows);
}

void read_png1(const std::string& path, std::vector<uint8_t>& bits, int& height, int& width) {
    std::vector<std::vector<png_byte>> rows;
    read_gray(path, 1, height, width, rows);
    bits.assign(static_cast<size_t>(height) * width, 0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            bits[static_cast<size_t>(y) * width + x] =
                (rows[y][x / 8] >> (7 - x % 8)) & 1u;
}

}  // namespace harunet
