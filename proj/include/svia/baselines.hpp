#pragma once

// Model-free anonymization applied inside a mask: Gaussian blur,
// pixelization and constant gray fill.

#include "svia/image.hpp"

#include <string_view>

namespace svia::baselines {

enum class BaselineKind { blur, pixelate, graymask };

BaselineKind baseline_kind_from_name(std::string_view name);
std::string_view baseline_kind_name(BaselineKind kind);

struct BaselineSpec {
    BaselineKind kind = BaselineKind::graymask;
    double blur_sigma = 4.0;
    int block_size = 16;
    double gray_value = 0.5;

    /// Throws ValidationError on sigma <= 0, block_size < 2 or gray outside [0, 1].
    void validate() const;
};

/// Separable Gaussian blur of the whole image with reflect padding
/// (mirror about the edge pixel, edge not repeated).
ImageTensor gaussian_blur(const ImageTensor& x, double sigma);

/// Pixels outside the mask are copied bit for bit.
ImageTensor apply_baseline(const ImageTensor& x, const Mask& mask, const BaselineSpec& spec);

} // namespace svia::baselines
