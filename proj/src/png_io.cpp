#include "svia/png_io.hpp"

#include "svia/errors.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <vector>

namespace svia {

namespace {

std::vector<std::uint8_t> read_raw(const std::filesystem::path& path, std::uint32_t format, int& height,
                                   int& width) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        throw IoError("cannot read PNG '" + path.string() + "': " + image.message);
    }
    image.format = format;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        const std::string message = image.message;
        png_image_free(&image);
        throw IoError("cannot decode PNG '" + path.string() + "': " + message);
    }
    height = static_cast<int>(image.height);
    width = static_cast<int>(image.width);
    return buffer;
}

void write_raw(const std::filesystem::path& path, std::uint32_t format, int height, int width,
               const std::vector<std::uint8_t>& buffer) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = format;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
        throw IoError("cannot write PNG '" + path.string() + "': " + image.message);
    }
}

} // namespace

std::uint8_t to_byte(float v) noexcept {
    const double clamped = std::fmin(std::fmax(static_cast<double>(v), 0.0), 1.0);
    return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

float from_byte(std::uint8_t b) noexcept { return static_cast<float>(b) / 255.0f; }

void quantize_8bit(ImageTensor& x) {
    for (float& v : x.data()) {
        v = from_byte(to_byte(v));
    }
}

void write_png(const std::filesystem::path& path, const ImageTensor& image) {
    const int h = image.height();
    const int w = image.width();
    std::vector<std::uint8_t> buffer(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                buffer[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(image.at(c, y, x));
            }
        }
    }
    write_raw(path, PNG_FORMAT_RGB, h, w, buffer);
}

ImageTensor read_png(const std::filesystem::path& path) {
    int h = 0;
    int w = 0;
    const auto buffer = read_raw(path, PNG_FORMAT_RGB, h, w);
    ImageTensor image(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                image.at(c, y, x) = from_byte(buffer[(static_cast<std::size_t>(y) * w + x) * 3 + c]);
            }
        }
    }
    return image;
}

void write_label_png(const std::filesystem::path& path, const LabelMap& labels) {
    write_raw(path, PNG_FORMAT_GRAY, labels.height, labels.width, labels.labels);
}

LabelMap read_label_png(const std::filesystem::path& path) {
    LabelMap labels;
    labels.labels = read_raw(path, PNG_FORMAT_GRAY, labels.height, labels.width);
    return labels;
}

} // namespace svia
