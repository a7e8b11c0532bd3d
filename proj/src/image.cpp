#include "svia/image.hpp"

#include "svia/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace svia {

const std::vector<std::string>& category_names() {
    static const std::vector<std::string> names = {
        "sky", "road", "building", "vehicle", "person", "traffic sign", "other"};
    return names;
}

std::string_view category_name(Category c) {
    return category_names().at(static_cast<std::size_t>(c));
}

Category category_from_name(std::string_view name) {
    std::string normalized(name);
    std::replace(normalized.begin(), normalized.end(), '_', ' ');
    const auto& names = category_names();
    const auto it = std::find(names.begin(), names.end(), normalized);
    if (it == names.end()) {
        throw ValidationError("unknown category '" + std::string(name) + "'");
    }
    return static_cast<Category>(it - names.begin());
}

ImageTensor::ImageTensor(int height, int width)
    : height_(height), width_(width), data_(3 * static_cast<std::size_t>(height) * width, 0.0f) {
    if (height <= 0 || width <= 0) {
        throw ValidationError("image dimensions must be positive");
    }
}

ImageTensor::ImageTensor(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
    if (height <= 0 || width <= 0) {
        throw ValidationError("image dimensions must be positive");
    }
    if (data_.size() != 3 * static_cast<std::size_t>(height) * width) {
        throw ValidationError("image data size does not match 3 x H x W");
    }
    for (float v : data_) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw ValidationError("image intensity outside [0, 1]");
        }
    }
}

ImageTensor ImageTensor::filled(int height, int width, float value) {
    ImageTensor image(height, width);
    std::fill(image.data_.begin(), image.data_.end(), value);
    return image;
}

void ImageTensor::clamp() {
    for (float& v : data_) {
        v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
    }
}

Mask::Mask(int height, int width, std::uint8_t value)
    : height_(height), width_(width), bits_(static_cast<std::size_t>(height) * width, value ? 1 : 0) {}

Mask::Mask(int height, int width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
    if (bits_.size() != static_cast<std::size_t>(height) * width) {
        throw ValidationError("mask data size does not match H x W");
    }
    for (auto& b : bits_) {
        if (b > 1) {
            throw ValidationError("mask values must be 0 or 1");
        }
    }
}

std::size_t Mask::area() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Mask Mask::operator|(const Mask& other) const {
    if (!same_shape(other)) {
        throw ValidationError("mask union: shape mismatch");
    }
    Mask out = *this;
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        out.bits_[i] = bits_[i] | other.bits_[i];
    }
    return out;
}

const Mask& MaskSet::by_name(std::string_view name) const {
    std::string normalized(name);
    std::replace(normalized.begin(), normalized.end(), '_', ' ');
    for (std::size_t i = 0; i < category_names.size(); ++i) {
        if (category_names[i] == normalized) {
            return masks[i];
        }
    }
    throw ValidationError("mask set has no category '" + std::string(name) + "'");
}

Mask MaskSet::union_of(std::span<const std::string> names) const {
    if (masks.empty()) {
        throw ValidationError("union of an empty mask set");
    }
    Mask out(masks.front().height(), masks.front().width(), 0);
    for (const auto& name : names) {
        out = out | by_name(name);
    }
    return out;
}

SensitiveCategorySet SensitiveCategorySet::defaults() {
    return SensitiveCategorySet({"person", "vehicle", "traffic sign", "road", "building"});
}

SensitiveCategorySet::SensitiveCategorySet(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty()) {
        throw ValidationError("sensitive category set must be nonempty");
    }
    std::unordered_set<std::string> seen;
    for (auto& name : names_) {
        std::replace(name.begin(), name.end(), '_', ' ');
        if (!seen.insert(name).second) {
            throw ValidationError("duplicate sensitive category '" + name + "'");
        }
    }
}

void SensitiveCategorySet::check_subset_of(const MaskSet& masks) const {
    for (const auto& name : names_) {
        (void)masks.by_name(name);
    }
}

} // namespace svia
