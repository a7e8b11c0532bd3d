#pragma once

#include "svia/image.hpp"
#include "svia/models.hpp"
#include "svia/rng.hpp"

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>

namespace svia::test {

inline ImageTensor random_image(int h, int w, std::uint64_t seed) {
    ImageTensor x(h, w);
    RngStream rng(seed, 1);
    for (float& v : x.data()) {
        v = static_cast<float>(rng.uniform());
    }
    return x;
}

inline Mask random_mask(int h, int w, double p, std::uint64_t seed) {
    Mask m(h, w);
    RngStream rng(seed, 2);
    for (auto& b : m.bits()) {
        b = rng.uniform() < p ? 1 : 0;
    }
    return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    static std::atomic<int> counter{0};
    const auto dir = std::filesystem::temp_directory_path() /
                     ("svia_test_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Segmenter that returns a fixed label map as one-hot scores.
class LabelSegmenter final : public models::SegmenterInterface {
public:
    explicit LabelSegmenter(LabelMap labels) : labels_(std::move(labels)) {}
    int n_categories() const override { return kNumCategories; }
    nn::Tensor predict(const ImageTensor& x) const override {
        nn::Tensor t(kNumCategories, x.height(), x.width());
        for (int y = 0; y < x.height(); ++y) {
            for (int c = 0; c < x.width(); ++c) {
                t.at(labels_(y, c), y, c) = 1.0f;
            }
        }
        return t;
    }

private:
    LabelMap labels_;
};

/// Ignores its input; every logit is zero.
class ConstantClassifier final : public models::CityClassifierInterface {
public:
    explicit ConstantClassifier(int n) : n_(n) {}
    int n_cities() const override { return n_; }
    std::vector<float> predict(const ImageTensor&) const override { return std::vector<float>(n_, 0.0f); }
    nn::Tensor feature_maps(const ImageTensor& x) const override { return nn::Tensor(4, x.height() / 4, x.width() / 4, 1.0f); }
    models::GradCamInputs class_gradients(const ImageTensor& x, int) const override {
        return {feature_maps(x), nn::Tensor(4, x.height() / 4, x.width() / 4, 0.0f)};
    }

private:
    int n_;
};

} // namespace svia::test
