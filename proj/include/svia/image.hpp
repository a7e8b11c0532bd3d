#pragma once

// Pixel-space value types shared by every module.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace svia {

/// Fixed category order used by the generator, the segmenter and the pipeline.
enum class Category : int {
    sky = 0,
    road = 1,
    building = 2,
    vehicle = 3,
    person = 4,
    traffic_sign = 5,
    other = 6,
};

inline constexpr int kNumCategories = 7;

const std::vector<std::string>& category_names();
std::string_view category_name(Category c);
/// Accepts the display name ("traffic sign") or the identifier ("traffic_sign").
Category category_from_name(std::string_view name);

/// 3 x H x W intensities in [0, 1], channel-major.
class ImageTensor {
public:
    ImageTensor() = default;
    /// Zero-filled image.
    ImageTensor(int height, int width);
    /// Takes ownership of channel-major data; throws ValidationError on a
    /// size mismatch or a value outside [0, 1].
    ImageTensor(int height, int width, std::vector<float> data);

    static ImageTensor filled(int height, int width, float value);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t pixels() const noexcept { return static_cast<std::size_t>(height_) * width_; }
    bool empty() const noexcept { return data_.empty(); }

    float at(int c, int y, int x) const { return data_[index(c, y, x)]; }
    float& at(int c, int y, int x) { return data_[index(c, y, x)]; }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }
    std::span<const float> channel(int c) const { return {data_.data() + c * pixels(), pixels()}; }
    std::span<float> channel(int c) { return {data_.data() + c * pixels(), pixels()}; }

    void clamp();
    bool same_shape(const ImageTensor& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    bool operator==(const ImageTensor&) const = default;

private:
    std::size_t index(int c, int y, int x) const noexcept {
        return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_;
};

/// Binary H x W mask, row-major, values 0 or 1.
class Mask {
public:
    Mask() = default;
    Mask(int height, int width, std::uint8_t value = 0);
    Mask(int height, int width, std::vector<std::uint8_t> bits);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t pixels() const noexcept { return bits_.size(); }

    std::uint8_t operator()(int y, int x) const { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
    std::uint8_t& operator()(int y, int x) { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
    std::span<const std::uint8_t> bits() const noexcept { return bits_; }
    std::span<std::uint8_t> bits() noexcept { return bits_; }

    std::size_t area() const noexcept;
    bool same_shape(const ImageTensor& image) const noexcept {
        return height_ == image.height() && width_ == image.width();
    }
    bool same_shape(const Mask& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    Mask operator|(const Mask& other) const;

    bool operator==(const Mask&) const = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// Per-pixel category index, row-major.
struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> labels;

    LabelMap() = default;
    LabelMap(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t operator()(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& operator()(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const LabelMap&) const = default;
};

/// One-hot partition of the image into n category masks.
struct MaskSet {
    std::vector<Mask> masks;
    std::vector<std::string> category_names;

    std::size_t size() const noexcept { return masks.size(); }
    const Mask& operator[](std::size_t i) const { return masks[i]; }
    /// Mask for a named category; throws ValidationError if absent.
    const Mask& by_name(std::string_view name) const;
    /// Union of the masks of the named categories.
    Mask union_of(std::span<const std::string> names) const;
};

/// Ordered, duplicate-free list of categories selected for inpainting.
class SensitiveCategorySet {
public:
    /// person, vehicle, traffic sign, road, building
    static SensitiveCategorySet defaults();

    explicit SensitiveCategorySet(std::vector<std::string> names);

    const std::vector<std::string>& names() const noexcept { return names_; }
    /// Throws ValidationError unless every name appears in the mask set.
    void check_subset_of(const MaskSet& masks) const;

private:
    std::vector<std::string> names_;
};

} // namespace svia
