#include "helpers.hpp"

#include "svia/errors.hpp"
#include "svia/sampler.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>

using namespace svia;
using namespace svia::sampler;

namespace {

Latent random_latent(int c, int h, int w, std::uint64_t seed) {
    Latent l(c, h, w);
    RngStream rng(seed, 9);
    for (double& v : l.values) {
        v = rng.uniform(-1.0, 1.0);
    }
    return l;
}

// Independent reimplementation of the linear schedule: product of per-step
// alphas on a 1000-step grid approximates the continuous integral.
double reference_linear_alpha_bar(double tau) {
    const int n = 200000;
    double log_abar = 0.0;
    for (int k = 0; k < n; ++k) {
        const double t = (k + 0.5) / n * tau;
        const double beta = 1e-4 + (0.02 - 1e-4) * t;
        log_abar -= 1000.0 * beta * tau / n;
    }
    return std::exp(log_abar);
}

class ZeroDenoiser final : public models::DenoiserInterface {
public:
    Latent predict_noise(const Latent& y, int, const ConditioningBundle&) const override {
        return Latent(y.channels, y.height, y.width);
    }
};

class NanDenoiser final : public models::DenoiserInterface {
public:
    Latent predict_noise(const Latent& y, int, const ConditioningBundle&) const override {
        return Latent(y.channels, y.height, y.width, std::nan(""));
    }
};

// Checks the signal rate it is handed against the schedule.
class RateCheckingDenoiser final : public models::DenoiserInterface {
public:
    explicit RateCheckingDenoiser(NoiseSchedule s) : s_(std::move(s)) {}
    Latent predict_noise(const Latent& y, int step, const ConditioningBundle& cond) const override {
        CHECK(cond.alpha_bar == s_.alpha_bar_at_step(step));
        return Latent(y.channels, y.height, y.width);
    }

private:
    NoiseSchedule s_;
};

SamplerModels identity_models(std::shared_ptr<const models::DenoiserInterface> denoiser) {
    return {std::move(denoiser), std::make_shared<models::IdentityCodec>(),
            std::make_shared<models::HashedTextEncoder>(), std::make_shared<models::SinusoidalStepEncoder>()};
}

} // namespace

TEST_CASE("schedules are monotone and match the reference integral") {
    for (auto kind : {ScheduleKind::linear, ScheduleKind::cosine}) {
        for (int d : {1, 2, 10, 50, 1000}) {
            const auto s = build_schedule(d, kind, 0.0);
            REQUIRE(s.alpha_bar.size() == static_cast<std::size_t>(d) + 1);
            CHECK(s.alpha_bar[0] == 1.0);
            for (int i = 1; i <= d; ++i) {
                CHECK(s.alpha_bar[i] < s.alpha_bar[i - 1]);
                CHECK(s.alpha_bar[i] > 0.0);
                CHECK(s.alpha[i - 1] == doctest::Approx(s.alpha_bar[i] / s.alpha_bar[i - 1]));
            }
        }
    }
    for (double tau : {0.1, 0.5, 1.0}) {
        CHECK(alpha_bar_at(ScheduleKind::linear, tau) ==
              doctest::Approx(reference_linear_alpha_bar(tau)).epsilon(1e-8));
    }
    // at d = 1000 the per-step betas are the textbook linear grid
    const auto s = build_schedule(1000, ScheduleKind::linear, 0.0);
    CHECK(1.0 - s.alpha[0] == doctest::Approx(1e-4 + 0.5 * (0.02 - 1e-4) / 1000.0).epsilon(1e-3));
    CHECK(1.0 - s.alpha[999] == doctest::Approx(0.02).epsilon(1e-3));
    CHECK(alpha_bar_at(ScheduleKind::cosine, 0.5) ==
          doctest::Approx(std::pow(std::cos(0.508 / 1.008 * M_PI / 2), 2) / std::pow(std::cos(0.008 / 1.008 * M_PI / 2), 2)));
}

TEST_CASE("sigma follows eta") {
    const auto det = build_schedule(10, ScheduleKind::linear, 0.0);
    for (double sg : det.sigma) {
        CHECK(sg == 0.0);
    }
    const auto full = build_schedule(10, ScheduleKind::linear, 1.0);
    for (int i = 1; i <= 10; ++i) {
        const double prev = full.alpha_bar[i - 1];
        const double cur = full.alpha_bar[i];
        const double expected = std::sqrt((1 - prev) / (1 - cur)) * std::sqrt(1 - cur / prev);
        CHECK(full.sigma_at_step(i) == doctest::Approx(expected));
        CHECK(1.0 - prev - expected * expected >= -1e-12);
    }
    CHECK_THROWS_AS(build_schedule(0, ScheduleKind::linear, 0.0), ScheduleError);
    CHECK_THROWS_AS(build_schedule(5, ScheduleKind::linear, 1.5), ScheduleError);
    CHECK_THROWS_AS(schedule_kind_from_name("quadratic"), ValidationError);
}

TEST_CASE("predict_x0 inverts forward_noise") {
    const auto s = build_schedule(50, ScheduleKind::linear, 0.0);
    const Latent x0 = random_latent(3, 4, 4, 1);
    const Latent z = random_latent(3, 4, 4, 2);
    for (int t : {1, 10, 25, 50}) {
        const Latent y = forward_noise(x0, t, s, z);
        const Latent back = predict_x0(y, z, t, s);
        for (std::size_t k = 0; k < x0.size(); ++k) {
            CHECK(std::abs(back.values[k] - x0.values[k]) < 1e-6);
        }
    }
    CHECK_THROWS_AS(predict_x0(x0, z, 0, s), ScheduleError);
    CHECK_THROWS_AS(predict_x0(x0, z, 51, s), ScheduleError);
    CHECK_THROWS_AS(predict_x0(x0, Latent(3, 4, 5), 1, s), ValidationError);
}

TEST_CASE("ddim_step matches the update written out by hand") {
    const auto s = build_schedule(20, ScheduleKind::cosine, 0.7);
    const Latent y = random_latent(2, 3, 3, 3);
    const Latent eps = random_latent(2, 3, 3, 4);
    const Latent z = random_latent(2, 3, 3, 5);
    const int i = 12;
    const Latent out = ddim_step(y, eps, i, s, z);
    const double a = s.alpha_bar[i];
    const double ap = s.alpha_bar[i - 1];
    const double sg = s.sigma[i - 1];
    for (std::size_t k = 0; k < y.size(); ++k) {
        const double x0 = (y.values[k] - std::sqrt(1 - a) * eps.values[k]) / std::sqrt(a);
        const double expected = std::sqrt(ap) * x0 + std::sqrt(1 - ap - sg * sg) * eps.values[k] + sg * z.values[k];
        CHECK(out.values[k] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("oracle denoiser drives the loop to its target") {
    for (int d : {2, 10, 50}) {
        const auto s = build_schedule(d, ScheduleKind::linear, 0.0);
        const Latent target = random_latent(3, 8, 8, static_cast<std::uint64_t>(d));
        const auto models = identity_models(std::make_shared<OracleDenoiser>(target, s));
        const Latent start = random_latent(3, 8, 8, 99);
        const Latent y0 = reverse_loop(start, d, {}, models, s, 1);
        for (std::size_t k = 0; k < target.size(); ++k) {
            CHECK(std::abs(y0.values[k] - target.values[k]) < 1e-4);
        }
    }
}

TEST_CASE("inpaint and harmonize are deterministic and validated") {
    const auto s = build_schedule(10, ScheduleKind::linear, 0.0);
    const ImageTensor x = test::random_image(8, 8, 1);
    const Mask m = test::random_mask(8, 8, 0.3, 2);
    Latent target(3, 8, 8, 0.4);
    const auto models = identity_models(std::make_shared<OracleDenoiser>(target, s));

    const ImageTensor a = inpaint(m, x, "a road", models, s, 5);
    CHECK(a == inpaint(m, x, "a road", models, s, 5));
    for (float v : a.data()) {
        CHECK(v == doctest::Approx(0.4f).epsilon(1e-4));
    }
    const ImageTensor h = harmonize(x, "scene", 0.3, models, s, 5);
    CHECK(h == harmonize(x, "scene", 0.3, models, s, 5));

    // stochastic sampling depends on the seed
    const auto noisy = build_schedule(10, ScheduleKind::linear, 1.0);
    const auto zero_models = identity_models(std::make_shared<ZeroDenoiser>());
    CHECK(inpaint(m, x, "a", zero_models, noisy, 1) == inpaint(m, x, "a", zero_models, noisy, 1));
    CHECK(inpaint(m, x, "a", zero_models, noisy, 1) != inpaint(m, x, "a", zero_models, noisy, 2));

    CHECK_THROWS_AS(inpaint(Mask(4, 4), x, "a", models, s, 1), ValidationError);
    CHECK_THROWS_AS(harmonize(x, "a", 0.0, models, s, 1), ValidationError);
    CHECK_THROWS_AS(inpaint(m, x, "a", identity_models(std::make_shared<NanDenoiser>()), s, 1), NumericError);
}

TEST_CASE("harmonize with the oracle recovers a known image") {
    const auto s = build_schedule(50, ScheduleKind::linear, 0.0);
    const ImageTensor x = test::random_image(8, 8, 3);
    const models::IdentityCodec codec;
    const auto models = identity_models(std::make_shared<OracleDenoiser>(codec.encode(x), s));
    const ImageTensor h = harmonize(x, "scene", 0.3, models, s, 9);
    for (std::size_t k = 0; k < h.data().size(); ++k) {
        CHECK(std::abs(h.data()[k] - x.data()[k]) < 1e-4);
    }
}

TEST_CASE("clipping keeps the clean estimate inside the codec range") {
    auto s = build_schedule(20, ScheduleKind::linear, 0.0);
    Latent target(3, 4, 4, 1.5);
    target.values[0] = -0.5;
    const auto models = identity_models(std::make_shared<OracleDenoiser>(target, s));
    const Latent start = forward_noise(target, 20, s, random_latent(3, 4, 4, 1));
    ConditioningBundle cond;
    const Latent free = reverse_loop(start, 20, cond, models, s, 1);
    CHECK(free.values[1] == doctest::Approx(1.5).epsilon(1e-4));

    s.clip_denoised = true;
    const Latent clipped = reverse_loop(start, 20, cond, models, s, 1);
    CHECK(clipped.values[0] == doctest::Approx(0.0));
    for (std::size_t k = 1; k < clipped.size(); ++k) {
        CHECK(clipped.values[k] == doctest::Approx(1.0));
    }
    CHECK(models::IdentityCodec().latent_range() == std::pair<double, double>{0.0, 1.0});

    reverse_loop(start, 20, cond, identity_models(std::make_shared<RateCheckingDenoiser>(s)), s, 1);
}
