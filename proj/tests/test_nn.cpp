#include "helpers.hpp"

#include "svia/errors.hpp"
#include "svia/nn.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace svia;
using namespace svia::nn;

namespace {

Tensor random_tensor(int c, int h, int w, std::uint64_t seed) {
    Tensor t(c, h, w);
    RngStream rng(seed, 3);
    for (float& v : t.data) {
        v = static_cast<float>(rng.normal());
    }
    return t;
}

double weighted_sum(const Tensor& y, const Tensor& weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        s += static_cast<double>(y.data[i]) * weights.data[i];
    }
    return s;
}

bool close(double analytic, double numeric) {
    return std::abs(analytic - numeric) <= 2e-3 + 2e-2 * std::abs(numeric);
}

// Central differences of loss() with respect to values[idx].
double numeric_grad(std::span<float> values, std::size_t idx, const std::function<double()>& loss, float eps = 1e-2f) {
    const float saved = values[idx];
    values[idx] = saved + eps;
    const double up = loss();
    values[idx] = saved - eps;
    const double down = loss();
    values[idx] = saved;
    return (up - down) / (2.0 * eps);
}

} // namespace

TEST_CASE("conv2d gradients match finite differences") {
    for (int stride : {1, 2}) {
        ParameterStore store;
        const Conv2d conv(store, "c", 3, 4, 3, stride);
        RngStream rng(1);
        conv.init(store, rng);
        for (float& b : store.values(conv.bias_index())) {
            b = static_cast<float>(rng.normal() * 0.1);
        }
        Tensor x = random_tensor(3, 6, 6, 2);
        const Tensor probe = random_tensor(4, stride == 1 ? 6 : 3, stride == 1 ? 6 : 3, 3);
        auto loss = [&] { return weighted_sum(conv.forward(store, x), probe); };

        ConvCache cache;
        const Tensor y = conv.forward(store, x, &cache);
        CHECK(y.height == (stride == 1 ? 6 : 3));
        Gradients grads(store);
        const Tensor dx = conv.backward(store, cache, probe, grads);

        for (std::size_t i = 0; i < x.data.size(); i += 7) {
            CHECK(close(dx.data[i], numeric_grad(x.data, i, loss)));
        }
        for (int block : {conv.weight_index(), conv.bias_index()}) {
            auto values = store.values(block);
            for (std::size_t i = 0; i < values.size(); i += 5) {
                CHECK(close(grads.values(block)[i], numeric_grad(values, i, loss)));
            }
        }
    }
}

TEST_CASE("linear gradients match finite differences") {
    ParameterStore store;
    const Linear fc(store, "fc", 5, 3);
    RngStream rng(4);
    fc.init(store, rng);
    std::vector<float> x = {0.3f, -1.2f, 0.7f, 2.0f, -0.1f};
    const std::vector<float> probe = {0.5f, -1.0f, 2.0f};
    auto loss = [&] {
        const auto y = fc.forward(store, x);
        double s = 0.0;
        for (int i = 0; i < 3; ++i) {
            s += static_cast<double>(y[i]) * probe[i];
        }
        return s;
    };
    Gradients grads(store);
    const auto dx = fc.backward(store, x, probe, grads);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(close(dx[i], numeric_grad(x, i, loss)));
    }
    for (int block = 0; block < 2; ++block) {
        auto values = store.values(block);
        for (std::size_t i = 0; i < values.size(); ++i) {
            CHECK(close(grads.values(block)[i], numeric_grad(values, i, loss)));
        }
    }
}

TEST_CASE("pooling, upsampling and concat backward are adjoints") {
    // <op(x), g> == <x, op_backward(g)> for linear ops
    const Tensor x = random_tensor(2, 4, 6, 5);
    const Tensor g_small = random_tensor(2, 2, 3, 6);
    CHECK(weighted_sum(avg_pool2(x), g_small) ==
          doctest::Approx(weighted_sum(x, avg_pool2_backward(g_small, 4, 6))).epsilon(1e-5));
    const Tensor g_big = random_tensor(2, 8, 12, 7);
    CHECK(weighted_sum(upsample2(x), g_big) ==
          doctest::Approx(weighted_sum(x, upsample2_backward(g_big))).epsilon(1e-5));

    const Tensor b = random_tensor(3, 4, 6, 8);
    const Tensor cat = concat_channels(x, b);
    CHECK(cat.channels == 5);
    const auto [ga, gb] = split_channels(cat, 2);
    CHECK(ga.data == x.data);
    CHECK(gb.data == b.data);

    std::vector<float> pooled_grad = {1.0f, -2.0f};
    const Tensor gp = global_avg_pool_backward(pooled_grad, 2, 4, 6);
    const auto pooled = global_avg_pool(x);
    CHECK(pooled[0] * 1.0 - pooled[1] * 2.0 == doctest::Approx(weighted_sum(x, gp)).epsilon(1e-5));
}

TEST_CASE("relu backward masks non-positive activations") {
    Tensor a(1, 1, 3);
    a.data = {-1.0f, 0.0f, 2.0f};
    Tensor g(1, 1, 3, 1.0f);
    relu_backward(a, g);
    CHECK(g.data == std::vector<float>{0.0f, 0.0f, 1.0f});
}

TEST_CASE("loss gradients match finite differences") {
    Tensor logits = random_tensor(4, 3, 3, 9);
    std::vector<std::uint8_t> labels(9);
    for (std::size_t i = 0; i < 9; ++i) {
        labels[i] = static_cast<std::uint8_t>(i % 4);
    }
    Tensor grad;
    pixel_cross_entropy(logits, labels, &grad);
    auto ce = [&] { return pixel_cross_entropy(logits, labels, nullptr); };
    for (std::size_t i = 0; i < logits.data.size(); i += 3) {
        CHECK(close(grad.data[i], numeric_grad(logits.data, i, ce, 1e-3f)));
    }

    std::vector<float> v = {0.2f, -0.4f, 1.3f};
    std::vector<float> vg;
    const double l = cross_entropy(v, 2, &vg);
    CHECK(l > 0.0);
    auto ce1 = [&] { return cross_entropy(v, 2, nullptr); };
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(close(vg[i], numeric_grad(v, i, ce1, 1e-3f)));
    }

    Tensor pred = random_tensor(2, 2, 2, 10);
    const std::vector<float> target(8, 0.5f);
    Tensor mg;
    mse(pred, target, &mg);
    auto m = [&] { return mse(pred, target, nullptr); };
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(close(mg.data[i], numeric_grad(pred.data, i, m, 1e-3f)));
    }
    CHECK_THROWS_AS(cross_entropy(v, 3, nullptr), ValidationError);
}

TEST_CASE("adam decreases a quadratic") {
    ParameterStore store;
    const int idx = store.add("p", {4});
    auto values = store.values(idx);
    for (std::size_t i = 0; i < 4; ++i) {
        values[i] = static_cast<float>(i + 1);
    }
    Adam adam(store, AdamConfig{0.1});
    Gradients grads(store);
    double first = 0.0;
    double last = 0.0;
    for (int step = 0; step < 200; ++step) {
        grads.zero();
        double loss = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            loss += values[i] * values[i];
            grads.values(idx)[i] = 2.0f * values[i];
        }
        if (step == 0) {
            first = loss;
        }
        last = loss;
        adam.step(store, grads);
    }
    CHECK(last < 0.01 * first);
}

TEST_CASE("weight files round trip and reject mismatched layouts") {
    ParameterStore store;
    const Conv2d conv(store, "c", 2, 3, 3);
    RngStream rng(5);
    conv.init(store, rng);
    const auto dir = test::temp_dir("weights");
    save_weights(dir / "w.svw", store, {{"architecture", "test_v1"}, {"seed", 5}});

    ParameterStore other;
    const Conv2d same(other, "c", 2, 3, 3);
    const auto header = load_weights(dir / "w.svw", other);
    CHECK(header["architecture"] == "test_v1");
    CHECK(header["blocks"].size() == 2);
    CHECK(other.blocks()[0].values == store.blocks()[0].values);
    CHECK(read_weights_header(dir / "w.svw")["seed"] == 5);

    ParameterStore wrong;
    const Conv2d bigger(wrong, "c", 2, 4, 3);
    CHECK_THROWS_AS(load_weights(dir / "w.svw", wrong), IoError);
    CHECK_THROWS_AS(load_weights(dir / "missing.svw", wrong), IoError);
    std::filesystem::remove_all(dir);
}
