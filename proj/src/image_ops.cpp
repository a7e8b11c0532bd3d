#include "svia/image_ops.hpp"

#include "svia/errors.hpp"
#include "svia/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace svia {

MaskSet extract_masks(const LabelMap& segmap, int n, const std::vector<std::string>& names) {
    if (n <= 0) {
        throw ValidationError("extract_masks: category count must be positive");
    }
    MaskSet out;
    out.masks.assign(static_cast<std::size_t>(n), Mask(segmap.height, segmap.width, 0));
    for (int i = 0; i < n; ++i) {
        out.category_names.push_back(i < static_cast<int>(names.size()) ? names[i]
                                                                         : "category " + std::to_string(i));
    }
    for (std::size_t p = 0; p < segmap.labels.size(); ++p) {
        const int label = segmap.labels[p];
        if (label >= n) {
            throw ValidationError("extract_masks: label " + std::to_string(label) +
                                  " out of range for n = " + std::to_string(n));
        }
        out.masks[label].bits()[p] = 1;
    }
    return out;
}

LabelMap argmax_labels(std::span<const float> scores, int n, int height, int width) {
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    if (scores.size() != plane * n) {
        throw ValidationError("argmax_labels: score size does not match n x H x W");
    }
    LabelMap out(height, width, 0);
    for (std::size_t p = 0; p < plane; ++p) {
        float best = scores[p];
        int best_index = 0;
        for (int c = 1; c < n; ++c) {
            const float s = scores[c * plane + p];
            if (s > best) {
                best = s;
                best_index = c;
            }
        }
        out.labels[p] = static_cast<std::uint8_t>(best_index);
    }
    return out;
}

std::vector<double> masked_laplace_noise(std::size_t count, double scale, std::uint64_t seed) {
    const CounterRng rng(seed, 0x4C41504CULL);
    std::vector<double> noise(count);
    for (std::size_t k = 0; k < count; ++k) {
        noise[k] = rng.laplace(k, scale);
    }
    return noise;
}

ImageTensor add_masked_laplace(const ImageTensor& x, const Mask& mask, double scale, std::uint64_t seed) {
    if (!(scale > 0.0)) {
        throw ValidationError("add_masked_laplace: scale must be positive");
    }
    if (!mask.same_shape(x)) {
        throw ValidationError("add_masked_laplace: mask shape does not match image");
    }
    const CounterRng rng(seed, 0x4C41504CULL);
    ImageTensor out = x;
    const std::size_t plane = x.pixels();
    auto data = out.data();
    for (int c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < plane; ++p) {
            if (!mask.bits()[p]) {
                continue;
            }
            const std::size_t k = c * plane + p;
            const double noisy = static_cast<double>(data[k]) + rng.laplace(k, scale);
            data[k] = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
        }
    }
    return out;
}

ImageTensor composite(const ImageTensor& x, std::span<const Mask> masks, std::span<const ImageTensor> inpainted) {
    if (masks.size() != inpainted.size()) {
        throw ValidationError("composite: mask and inpainted counts differ");
    }
    const std::size_t plane = x.pixels();
    std::vector<int> owner(plane, -1);
    for (std::size_t i = 0; i < masks.size(); ++i) {
        if (!masks[i].same_shape(x) || !inpainted[i].same_shape(x)) {
            throw ValidationError("composite: shape mismatch at layer " + std::to_string(i));
        }
        const auto bits = masks[i].bits();
        for (std::size_t p = 0; p < plane; ++p) {
            if (!bits[p]) {
                continue;
            }
            if (owner[p] >= 0) {
                throw ValidationError("composite: masks " + std::to_string(owner[p]) + " and " +
                                      std::to_string(i) + " overlap");
            }
            owner[p] = static_cast<int>(i);
        }
    }
    ImageTensor out = x;
    for (int c = 0; c < 3; ++c) {
        auto dst = out.channel(c);
        for (std::size_t p = 0; p < plane; ++p) {
            if (owner[p] >= 0) {
                dst[p] = inpainted[owner[p]].channel(c)[p];
            }
        }
    }
    return out;
}

ImageTensor crop(const ImageTensor& x, const Box& box) {
    if (box.top < 0 || box.left < 0 || box.height <= 0 || box.width <= 0 ||
        box.top + box.height > x.height() || box.left + box.width > x.width()) {
        throw ValidationError("crop: box outside image");
    }
    ImageTensor out(box.height, box.width);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < box.height; ++y) {
            for (int xx = 0; xx < box.width; ++xx) {
                out.at(c, y, xx) = x.at(c, box.top + y, box.left + xx);
            }
        }
    }
    return out;
}

std::vector<Box> connected_component_boxes(const Mask& mask, int min_area) {
    if (min_area < 1) {
        throw ValidationError("connected components: min_area must be >= 1");
    }
    const int h = mask.height();
    const int w = mask.width();
    std::vector<std::uint8_t> visited(mask.pixels(), 0);
    std::vector<Box> boxes;
    std::vector<int> stack;
    for (int y0 = 0; y0 < h; ++y0) {
        for (int x0 = 0; x0 < w; ++x0) {
            const int start = y0 * w + x0;
            if (!mask.bits()[start] || visited[start]) {
                continue;
            }
            int top = y0, bottom = y0, left = x0, right = x0, area = 0;
            visited[start] = 1;
            stack.assign(1, start);
            while (!stack.empty()) {
                const int p = stack.back();
                stack.pop_back();
                const int y = p / w;
                const int x = p % w;
                ++area;
                top = std::min(top, y);
                bottom = std::max(bottom, y);
                left = std::min(left, x);
                right = std::max(right, x);
                const int neighbours[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
                for (const auto& [ny, nx] : neighbours) {
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) {
                        continue;
                    }
                    const int q = ny * w + nx;
                    if (mask.bits()[q] && !visited[q]) {
                        visited[q] = 1;
                        stack.push_back(q);
                    }
                }
            }
            if (area >= min_area) {
                boxes.push_back({top, left, bottom - top + 1, right - left + 1});
            }
        }
    }
    return boxes;
}

std::vector<ImageTensor> connected_person_crops(const ImageTensor& x, const Mask& person_mask, int min_area) {
    if (!person_mask.same_shape(x)) {
        throw ValidationError("connected_person_crops: mask shape does not match image");
    }
    std::vector<ImageTensor> crops;
    for (const Box& box : connected_component_boxes(person_mask, min_area)) {
        crops.push_back(crop(x, box));
    }
    return crops;
}

ImageTensor resize_bilinear(const ImageTensor& x, int height, int width) {
    ImageTensor out(height, width);
    const double sy = static_cast<double>(x.height()) / height;
    const double sx = static_cast<double>(x.width()) / width;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, x.height() - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, x.height() - 1);
        const double wy = fy - y0;
        for (int xx = 0; xx < width; ++xx) {
            const double fx = std::clamp((xx + 0.5) * sx - 0.5, 0.0, x.width() - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, x.width() - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1 - wx) * x.at(c, y0, x0) + wx * x.at(c, y0, x1);
                const double bottom = (1 - wx) * x.at(c, y1, x0) + wx * x.at(c, y1, x1);
                out.at(c, y, xx) = static_cast<float>(std::clamp((1 - wy) * top + wy * bottom, 0.0, 1.0));
            }
        }
    }
    return out;
}

void validate_pipeline_image(const ImageTensor& x, int downsample_factor) {
    if (x.height() < 8 || x.width() < 8) {
        throw ValidationError("image must be at least 8 x 8");
    }
    if (downsample_factor < 1 || x.height() % downsample_factor != 0 || x.width() % downsample_factor != 0) {
        throw ValidationError("image dimensions must be divisible by the codec downsampling factor " +
                              std::to_string(downsample_factor));
    }
}

} // namespace svia
