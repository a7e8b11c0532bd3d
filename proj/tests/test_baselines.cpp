#include "helpers.hpp"

#include "svia/baselines.hpp"
#include "svia/errors.hpp"

#include <doctest.h>

#include <cmath>

using namespace svia;
using namespace svia::baselines;

namespace {

// Direct 2-D convolution with explicit mirror indexing.
float blur_oracle(const ImageTensor& x, int c, int y, int xx, double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    auto mirror = [](int i, int n) {
        while (i < 0 || i >= n) {
            i = i < 0 ? -i : 2 * (n - 1) - i;
        }
        return i;
    };
    double acc = 0.0;
    double norm = 0.0;
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            const double k = std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
            acc += k * x.at(c, mirror(y + dy, x.height()), mirror(xx + dx, x.width()));
            norm += k;
        }
    }
    return static_cast<float>(acc / norm);
}

} // namespace

TEST_CASE("pixels outside the mask are untouched by every baseline") {
    const ImageTensor x = test::random_image(16, 12, 1);
    const Mask m = test::random_mask(16, 12, 0.4, 2);
    for (auto kind : {BaselineKind::blur, BaselineKind::pixelate, BaselineKind::graymask}) {
        BaselineSpec spec;
        spec.kind = kind;
        spec.block_size = 4;
        spec.blur_sigma = 1.5;
        const ImageTensor y = apply_baseline(x, m, spec);
        for (int c = 0; c < 3; ++c) {
            for (int r = 0; r < 16; ++r) {
                for (int q = 0; q < 12; ++q) {
                    if (!m(r, q)) {
                        CHECK(y.at(c, r, q) == x.at(c, r, q));
                    }
                }
            }
        }
    }
}

TEST_CASE("graymask fills with the configured value") {
    const ImageTensor x = test::random_image(8, 8, 3);
    const Mask m(8, 8, 1);
    BaselineSpec spec;
    spec.gray_value = 0.25;
    const ImageTensor y = apply_baseline(x, m, spec);
    for (float v : y.data()) {
        CHECK(v == 0.25f);
    }
}

TEST_CASE("blur matches a direct 2-D convolution") {
    const ImageTensor x = test::random_image(9, 7, 4);
    const ImageTensor b = gaussian_blur(x, 1.2);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 9; ++y) {
            for (int q = 0; q < 7; ++q) {
                CHECK(b.at(c, y, q) == doctest::Approx(blur_oracle(x, c, y, q, 1.2)).epsilon(1e-5));
            }
        }
    }
    const ImageTensor flat = ImageTensor::filled(8, 8, 0.3f);
    const ImageTensor blurred_flat = gaussian_blur(flat, 3.0);
    for (float v : blurred_flat.data()) {
        CHECK(v == doctest::Approx(0.3f).epsilon(1e-6));
    }
}

TEST_CASE("pixelate averages the masked pixels of each block") {
    ImageTensor x(4, 4);
    for (int y = 0; y < 4; ++y) {
        for (int q = 0; q < 4; ++q) {
            for (int c = 0; c < 3; ++c) {
                x.at(c, y, q) = static_cast<float>(y * 4 + q) / 16.0f;
            }
        }
    }
    Mask m(4, 4, 1);
    m(0, 0) = 0;
    BaselineSpec spec;
    spec.kind = BaselineKind::pixelate;
    spec.block_size = 2;
    const ImageTensor y = apply_baseline(x, m, spec);
    CHECK(y.at(0, 0, 0) == 0.0f);
    CHECK(y.at(0, 0, 1) == doctest::Approx((1 + 4 + 5) / 48.0));
    CHECK(y.at(0, 3, 3) == doctest::Approx((10 + 11 + 14 + 15) / 64.0));
}

TEST_CASE("baseline specs are validated") {
    BaselineSpec spec;
    spec.blur_sigma = 0.0;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = {};
    spec.block_size = 1;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    spec = {};
    spec.gray_value = 1.5;
    CHECK_THROWS_AS(spec.validate(), ValidationError);
    CHECK_THROWS_AS(apply_baseline(ImageTensor(4, 4), Mask(4, 5), BaselineSpec{}), ValidationError);
    CHECK_THROWS_AS(baseline_kind_from_name("mosaic"), ValidationError);
    CHECK(baseline_kind_from_name(baseline_kind_name(BaselineKind::pixelate)) == BaselineKind::pixelate);
}
