#include "svia/baselines.hpp"

#include "svia/errors.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace svia::baselines {

namespace {

int reflect(int i, int n) {
    if (n == 1) {
        return 0;
    }
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) {
        i += period;
    }
    return i < n ? i : period - i;
}

} // namespace

BaselineKind baseline_kind_from_name(std::string_view name) {
    if (name == "blur") {
        return BaselineKind::blur;
    }
    if (name == "pixelate") {
        return BaselineKind::pixelate;
    }
    if (name == "graymask") {
        return BaselineKind::graymask;
    }
    throw ValidationError("unknown baseline '" + std::string(name) + "'");
}

std::string_view baseline_kind_name(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::blur: return "blur";
        case BaselineKind::pixelate: return "pixelate";
        case BaselineKind::graymask: return "graymask";
    }
    return "graymask";
}

void BaselineSpec::validate() const {
    if (!(blur_sigma > 0.0)) {
        throw ValidationError("baseline: blur_sigma must be positive");
    }
    if (block_size < 2) {
        throw ValidationError("baseline: block_size must be at least 2");
    }
    if (!(gray_value >= 0.0 && gray_value <= 1.0)) {
        throw ValidationError("baseline: gray_value must lie in [0, 1]");
    }
}

ImageTensor gaussian_blur(const ImageTensor& x, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double total = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
        total += kernel[k + radius];
    }
    for (double& k : kernel) {
        k /= total;
    }
    const int h = x.height();
    const int w = x.width();
    std::vector<double> tmp(static_cast<std::size_t>(h) * w);
    ImageTensor out(h, w);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    acc += kernel[k + radius] * x.at(c, y, reflect(xx + k, w));
                }
                tmp[static_cast<std::size_t>(y) * w + xx] = acc;
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    acc += kernel[k + radius] * tmp[static_cast<std::size_t>(reflect(y + k, h)) * w + xx];
                }
                out.at(c, y, xx) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
            }
        }
    }
    return out;
}

ImageTensor apply_baseline(const ImageTensor& x, const Mask& mask, const BaselineSpec& spec) {
    spec.validate();
    if (!mask.same_shape(x)) {
        throw ValidationError("apply_baseline: mask shape does not match image");
    }
    ImageTensor out = x;
    const int h = x.height();
    const int w = x.width();
    switch (spec.kind) {
        case BaselineKind::graymask: {
            const auto gray = static_cast<float>(spec.gray_value);
            for (int c = 0; c < 3; ++c) {
                for (int y = 0; y < h; ++y) {
                    for (int xx = 0; xx < w; ++xx) {
                        if (mask(y, xx)) {
                            out.at(c, y, xx) = gray;
                        }
                    }
                }
            }
            break;
        }
        case BaselineKind::blur: {
            const ImageTensor blurred = gaussian_blur(x, spec.blur_sigma);
            for (int c = 0; c < 3; ++c) {
                for (int y = 0; y < h; ++y) {
                    for (int xx = 0; xx < w; ++xx) {
                        if (mask(y, xx)) {
                            out.at(c, y, xx) = blurred.at(c, y, xx);
                        }
                    }
                }
            }
            break;
        }
        case BaselineKind::pixelate: {
            // Each block is replaced by the mean of its masked pixels.
            const int b = spec.block_size;
            for (int by = 0; by < h; by += b) {
                for (int bx = 0; bx < w; bx += b) {
                    const int y1 = std::min(by + b, h);
                    const int x1 = std::min(bx + b, w);
                    for (int c = 0; c < 3; ++c) {
                        double sum = 0.0;
                        int count = 0;
                        for (int y = by; y < y1; ++y) {
                            for (int xx = bx; xx < x1; ++xx) {
                                if (mask(y, xx)) {
                                    sum += x.at(c, y, xx);
                                    ++count;
                                }
                            }
                        }
                        if (count == 0) {
                            continue;
                        }
                        const auto mean = static_cast<float>(sum / count);
                        for (int y = by; y < y1; ++y) {
                            for (int xx = bx; xx < x1; ++xx) {
                                if (mask(y, xx)) {
                                    out.at(c, y, xx) = mean;
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
    }
    return out;
}

} // namespace svia::baselines
