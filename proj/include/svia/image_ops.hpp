#pragma once

// Pixel-space primitives: one-hot masks, masked Laplace noising, the
// per-category composite and connected-component person crops.

#include "svia/image.hpp"

#include <cstdint>
#include <vector>

namespace svia {

/// One-hot MaskSet from an index map. Throws ValidationError for an index >= n.
MaskSet extract_masks(const LabelMap& segmap, int n,
                      const std::vector<std::string>& names = category_names());

/// Per-pixel argmax over n x H x W scores; ties go to the lowest index.
LabelMap argmax_labels(std::span<const float> scores, int n, int height, int width);

/// The raw Laplace(0, scale) draws that add_masked_laplace uses for a
/// 3 x H x W image: element k is the noise for flat index k.
std::vector<double> masked_laplace_noise(std::size_t count, double scale, std::uint64_t seed);

/// x + mask * Laplace(0, scale), clamped to [0, 1]. Unmasked pixels are
/// copied bit for bit.
ImageTensor add_masked_laplace(const ImageTensor& x, const Mask& mask, double scale,
                               std::uint64_t seed);

/// sum_i mask_i * inpainted_i + x * prod_i (1 - mask_i) for disjoint masks.
ImageTensor composite(const ImageTensor& x, std::span<const Mask> masks,
                      std::span<const ImageTensor> inpainted);

struct Box {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;

    bool operator==(const Box&) const = default;
};

ImageTensor crop(const ImageTensor& x, const Box& box);

/// Bounding boxes of 4-connected components with area >= min_area, ordered by
/// each component's first pixel in raster order.
std::vector<Box> connected_component_boxes(const Mask& mask, int min_area);

std::vector<ImageTensor> connected_person_crops(const ImageTensor& x, const Mask& person_mask,
                                                int min_area);

ImageTensor resize_bilinear(const ImageTensor& x, int height, int width);

/// Throws ValidationError unless H, W >= 8 and both divisible by factor.
void validate_pipeline_image(const ImageTensor& x, int downsample_factor);

} // namespace svia
