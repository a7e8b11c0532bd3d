#include "helpers.hpp"

#include "svia/errors.hpp"
#include "svia/models.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace svia;
using namespace svia::models;

namespace {

bool close(double analytic, double numeric) {
    return std::abs(analytic - numeric) <= 2e-3 + 5e-2 * std::abs(numeric);
}

// Checks every stride-th parameter of every block against central differences.
void check_parameter_gradients(nn::ParameterStore& store, nn::Gradients& grads, const std::function<double()>& loss,
                               std::size_t stride) {
    int checked = 0;
    int failed = 0;
    for (std::size_t b = 0; b < store.blocks().size(); ++b) {
        auto values = store.values(static_cast<int>(b));
        for (std::size_t i = b % stride; i < values.size(); i += stride) {
            auto numeric_at = [&](float eps) {
                const float saved = values[i];
                values[i] = saved + eps;
                const double up = loss();
                values[i] = saved - eps;
                const double down = loss();
                values[i] = saved;
                return (up - down) / (2.0 * eps);
            };
            const double analytic = grads.values(static_cast<int>(b))[i];
            double numeric = numeric_at(1e-2f);
            ++checked;
            // a ReLU kink inside the bracket: retry with narrower ones
            for (float eps : {1e-3f, 3e-4f}) {
                if (!close(analytic, numeric)) {
                    numeric = numeric_at(eps);
                }
            }
            if (!close(analytic, numeric)) {
                ++failed;
                MESSAGE("block " << store.block(static_cast<int>(b)).name << "[" << i
                                 << "] analytic=" << grads.values(static_cast<int>(b))[i] << " numeric=" << numeric);
            }
        }
    }
    CHECK(checked > 0);
    CHECK(failed <= checked / 50);
}

std::vector<std::uint8_t> stripe_labels(int h, int w, int n) {
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            labels[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>((y / 2 + x / 3) % n);
        }
    }
    return labels;
}

} // namespace

TEST_CASE("identity codec round trips exactly") {
    const ImageTensor x = test::random_image(6, 4, 1);
    const IdentityCodec codec;
    const Latent z = codec.encode(x);
    CHECK(z.channels == 3);
    CHECK(codec.decode(z) == x);

    Mask m(4, 4);
    m(1, 1) = 1;
    const Latent dm = codec.downsample_mask(m);
    CHECK(dm.values[5] == 1.0);
    CHECK(dm.values[0] == 0.0);
}

TEST_CASE("text encoder is deterministic and normalized") {
    const HashedTextEncoder enc;
    const auto a = enc.encode("a plausible person, street view");
    CHECK(a == enc.encode("A plausible PERSON street-view"));
    double n = 0.0;
    for (float v : a) {
        n += static_cast<double>(v) * v;
    }
    CHECK(n == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(a != enc.encode("a road"));
    CHECK(HashedTextEncoder(8, 1).encode("road") != HashedTextEncoder(8, 2).encode("road"));
}

TEST_CASE("step encoder uses the step's relative position") {
    const SinusoidalStepEncoder enc;
    CHECK(enc.encode(10, 50) == enc.encode(20, 100));
    CHECK(enc.encode(10, 50) == enc.encode_position(0.2));
    CHECK(enc.encode(10, 50) != enc.encode(11, 50));
    CHECK(static_cast<int>(enc.encode(1, 2).size()) == enc.dimension());
}

TEST_CASE("segmenter parameter gradients") {
    ConvSegmenter model(7, 4);
    model.init(1);
    const ImageTensor x = test::random_image(8, 8, 2);
    const auto labels = stripe_labels(8, 8, 7);
    auto loss = [&] { return nn::pixel_cross_entropy(model.forward(x, nullptr), labels, nullptr); };

    ConvSegmenter::Cache cache;
    nn::Tensor grad;
    nn::pixel_cross_entropy(model.forward(x, &cache), labels, &grad);
    nn::Gradients grads(model.parameters());
    model.backward(cache, grad, grads);
    check_parameter_gradients(model.parameters(), grads, loss, 7);
}

TEST_CASE("city classifier parameter gradients and grad-cam oracle") {
    ConvCityClassifier model(3, 4);
    model.init(3);
    const ImageTensor x = test::random_image(8, 8, 4);
    auto loss = [&] { return nn::cross_entropy(model.forward(x, nullptr), 1, nullptr); };

    ConvCityClassifier::Cache cache;
    std::vector<float> grad;
    nn::cross_entropy(model.forward(x, &cache), 1, &grad);
    nn::Gradients grads(model.parameters());
    model.backward(cache, grad, grads);
    check_parameter_gradients(model.parameters(), grads, loss, 5);

    // logit_c = sum_k W[c,k] * mean(a_k) + b_c, so d logit_c / d a_k(p) = W[c,k] / plane
    const auto gc = model.class_gradients(x, 2);
    const auto& fc_weight = model.parameters().blocks()[model.parameters().blocks().size() - 2];
    REQUIRE(fc_weight.shape == std::vector<int>{3, gc.activations.channels});
    const double plane = static_cast<double>(gc.activations.plane());
    for (int k = 0; k < gc.activations.channels; ++k) {
        const double expected = fc_weight.values[static_cast<std::size_t>(2 * gc.activations.channels + k)] / plane;
        for (float g : gc.gradients.channel(k)) {
            CHECK(g == doctest::Approx(expected).epsilon(1e-5));
        }
    }
    CHECK(gc.activations.data == model.feature_maps(x).data);
    CHECK(gc.activations.height == 2);
    CHECK_THROWS_AS(model.predict(test::random_image(6, 8, 1)), ValidationError);
}

TEST_CASE("denoiser parameter gradients") {
    UNetDenoiser model({3, 4, 4, 4});
    model.init(5);
    Latent y(3, 8, 8);
    RngStream rng(6);
    for (double& v : y.values) {
        v = rng.normal();
    }
    ConditioningBundle cond;
    cond.text = HashedTextEncoder(4).encode("a road");
    cond.image = Latent(3, 8, 8, 0.25);
    cond.mask = Latent(1, 8, 8, 1.0);
    cond.step = SinusoidalStepEncoder(4).encode(3, 10);
    std::vector<float> target(3 * 64);
    for (float& t : target) {
        t = static_cast<float>(rng.normal());
    }
    auto loss = [&] { return nn::mse(model.forward(y, cond, nullptr), target, nullptr); };

    UNetDenoiser::Cache cache;
    nn::Tensor grad;
    nn::mse(model.forward(y, cond, &cache), target, &grad);
    nn::Gradients grads(model.parameters());
    model.backward(cache, grad, grads);
    check_parameter_gradients(model.parameters(), grads, loss, 7);

    CHECK_THROWS_AS(model.predict_noise(y, 3, cond), ValidationError);
    cond.alpha_bar = 0.64;
    const Latent eps = model.predict_noise(y, 3, cond);
    const nn::Tensor v = model.forward(y, cond, nullptr);
    REQUIRE(eps.same_shape(y));
    for (std::size_t i = 0; i < eps.size(); ++i) {
        CHECK(eps.values[i] == doctest::Approx(0.6 * y.values[i] + 0.8 * v.data[i]).epsilon(1e-6));
    }
}

TEST_CASE("autoencoder codec parameter gradients") {
    ConvAutoencoderCodec model(2, 4);
    model.init(7);
    const ImageTensor x = test::random_image(8, 8, 8);
    std::vector<float> target(x.data().begin(), x.data().end());
    auto loss = [&] { return nn::mse(model.forward(x, nullptr), target, nullptr); };

    ConvAutoencoderCodec::Cache cache;
    nn::Tensor grad;
    nn::mse(model.forward(x, &cache), target, &grad);
    nn::Gradients grads(model.parameters());
    model.backward(cache, grad, grads);
    check_parameter_gradients(model.parameters(), grads, loss, 5);

    const Latent z = model.encode(x);
    CHECK(z.channels == 2);
    CHECK(z.height == 4);
    const ImageTensor back = model.decode(z);
    CHECK(back.height() == 8);
    for (float v : back.data()) {
        CHECK((v >= 0.0f && v <= 1.0f));
    }
}

TEST_CASE("feature extractor head gradients") {
    ConvFeatureExtractor model(3, 4);
    const ImageTensor x = test::random_image(8, 8, 9);
    auto loss = [&] {
        std::vector<nn::ConvCache> caches;
        std::vector<nn::Tensor> acts;
        return nn::cross_entropy(model.head_forward(x, caches, acts), 2, nullptr);
    };
    std::vector<nn::ConvCache> caches;
    std::vector<nn::Tensor> acts;
    std::vector<float> grad;
    nn::cross_entropy(model.head_forward(x, caches, acts), 2, &grad);
    nn::Gradients grads(model.parameters());
    model.head_backward(caches, acts, grad, grads);
    check_parameter_gradients(model.parameters(), grads, loss, 5);

    const auto stages = model.stages(x);
    REQUIRE(stages.size() == 3);
    CHECK(stages[1].height == 4);
    CHECK(stages[2].height == 2);
    CHECK(model.features(x) == ConvFeatureExtractor(3, 4).features(x));
    CHECK(model.id() != ConvFeatureExtractor(4, 4).id());
}

TEST_CASE("models save and load bit-identically") {
    const auto dir = test::temp_dir("models");
    const ImageTensor x = test::random_image(8, 8, 10);

    ConvSegmenter seg(7, 4);
    seg.init(1);
    seg.save(dir / "seg.svw", {1, "abc"});
    CHECK(ConvSegmenter::load(dir / "seg.svw").predict(x).data == seg.predict(x).data);
    CHECK(weight_architecture(dir / "seg.svw") == ConvSegmenter::kArchitecture);

    ConvCityClassifier cls(3, 4);
    cls.init(2);
    cls.save(dir / "cls.svw", {2, ""});
    CHECK(ConvCityClassifier::load(dir / "cls.svw").predict(x) == cls.predict(x));

    ConvAutoencoderCodec codec(2, 4);
    codec.init(3);
    codec.save(dir / "codec.svw", {3, ""});
    CHECK(ConvAutoencoderCodec::load(dir / "codec.svw").encode(x) == codec.encode(x));

    UNetDenoiser den({3, 4, 4, 4});
    den.init(4);
    den.save(dir / "den.svw", {4, ""});
    const UNetDenoiser loaded = UNetDenoiser::load(dir / "den.svw");
    CHECK(loaded.dims().width == 4);
    CHECK(loaded.parameters().blocks()[0].values == den.parameters().blocks()[0].values);

    CHECK_THROWS_AS(ConvSegmenter::load(dir / "cls.svw"), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("segment turns scores into one-hot masks") {
    LabelMap labels(4, 4);
    labels(0, 0) = static_cast<std::uint8_t>(Category::person);
    labels(3, 3) = static_cast<std::uint8_t>(Category::road);
    const test::LabelSegmenter seg(labels);
    const MaskSet masks = segment(seg, test::random_image(4, 4, 1));
    CHECK(masks.by_name("person").area() == 1);
    CHECK(masks.by_name("road").area() == 1);
}
