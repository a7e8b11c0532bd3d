#include "svia/sampler.hpp"

#include "svia/errors.hpp"
#include "svia/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace svia::sampler {

namespace {

// Linear-beta schedule over a 1000-step reference grid, integrated in
// continuous time; cosine schedule with offset 0.008.
constexpr double kBetaStart = 1e-4;
constexpr double kBetaEnd = 0.02;
constexpr double kReferenceSteps = 1000.0;
constexpr double kCosineOffset = 0.008;
constexpr double kMinAlphaBar = 1e-5;

void require_step(int step, const NoiseSchedule& schedule) {
    if (step < 1 || step > schedule.steps) {
        throw ScheduleError("step " + std::to_string(step) + " outside [1, " + std::to_string(schedule.steps) + "]");
    }
}

void require_same_shape(const Latent& a, const Latent& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ValidationError(std::string(what) + ": latent shape mismatch");
    }
}

constexpr std::uint64_t kInitialNoiseStream = 0;

Latent gaussian_latent(int c, int h, int w, std::uint64_t seed, std::uint64_t stream) {
    Latent z(c, h, w);
    const CounterRng rng(seed, stream);
    for (std::size_t k = 0; k < z.size(); ++k) {
        z.values[k] = rng.normal(k);
    }
    return z;
}

// eps <- (y - sqrt(abar) clamp(x0_hat)) / sqrt(1 - abar)
void clip_through_x0(const Latent& y, Latent& eps, int step, const NoiseSchedule& schedule,
                     std::pair<double, double> range) {
    const double abar = schedule.alpha_bar_at_step(step);
    const double signal = std::sqrt(abar);
    const double noise = std::sqrt(1.0 - abar);
    for (std::size_t k = 0; k < y.size(); ++k) {
        const double x0 = std::clamp((y.values[k] - noise * eps.values[k]) / signal, range.first, range.second);
        eps.values[k] = (y.values[k] - signal * x0) / noise;
    }
}

} // namespace

ScheduleKind schedule_kind_from_name(std::string_view name) {
    if (name == "linear") {
        return ScheduleKind::linear;
    }
    if (name == "cosine") {
        return ScheduleKind::cosine;
    }
    throw ValidationError("unknown schedule kind '" + std::string(name) + "'");
}

std::string_view schedule_kind_name(ScheduleKind kind) {
    return kind == ScheduleKind::linear ? "linear" : "cosine";
}

double alpha_bar_at(ScheduleKind kind, double tau) {
    tau = std::clamp(tau, 0.0, 1.0);
    double value = 1.0;
    if (kind == ScheduleKind::linear) {
        const double integral =
            kReferenceSteps * (kBetaStart * tau + 0.5 * (kBetaEnd - kBetaStart) * tau * tau);
        value = std::exp(-integral);
    } else {
        auto f = [](double t) {
            const double c = std::cos((t + kCosineOffset) / (1.0 + kCosineOffset) * std::numbers::pi / 2.0);
            return c * c;
        };
        value = f(tau) / f(0.0);
    }
    return tau == 0.0 ? 1.0 : std::max(value, kMinAlphaBar);
}

NoiseSchedule build_schedule(int steps, ScheduleKind kind, double eta) {
    if (steps < 1) {
        throw ScheduleError("schedule needs at least one step");
    }
    if (!(eta >= 0.0 && eta <= 1.0)) {
        throw ScheduleError("eta must lie in [0, 1]");
    }
    NoiseSchedule s;
    s.steps = steps;
    s.kind = kind;
    s.eta = eta;
    s.alpha_bar.resize(static_cast<std::size_t>(steps) + 1);
    s.alpha_bar[0] = 1.0;
    for (int i = 1; i <= steps; ++i) {
        const double value = alpha_bar_at(kind, static_cast<double>(i) / steps);
        // keep strictly decreasing even where the floor clips the curve
        s.alpha_bar[i] = std::min(value, s.alpha_bar[i - 1] * (1.0 - 1e-9));
    }
    for (int i = 1; i <= steps; ++i) {
        const double prev = s.alpha_bar[i - 1];
        const double cur = s.alpha_bar[i];
        s.alpha.push_back(cur / prev);
        double sigma = 0.0;
        if (eta > 0.0) {
            sigma = eta * std::sqrt((1.0 - prev) / (1.0 - cur)) * std::sqrt(1.0 - cur / prev);
        }
        s.sigma.push_back(sigma);
    }
    return s;
}

Latent predict_x0(const Latent& y, const Latent& eps, int step, const NoiseSchedule& schedule) {
    require_step(step, schedule);
    require_same_shape(y, eps, "predict_x0");
    const double abar = schedule.alpha_bar_at_step(step);
    if (!(abar > 0.0)) {
        throw NumericError("predict_x0: alpha_bar is zero at step " + std::to_string(step));
    }
    const double signal = std::sqrt(abar);
    const double noise = std::sqrt(1.0 - abar);
    Latent out = y;
    for (std::size_t k = 0; k < out.size(); ++k) {
        out.values[k] = (y.values[k] - noise * eps.values[k]) / signal;
    }
    return out;
}

Latent ddim_step(const Latent& y, const Latent& eps, int step, const NoiseSchedule& schedule, const Latent& z) {
    require_step(step, schedule);
    require_same_shape(y, z, "ddim_step");
    const Latent x0 = predict_x0(y, eps, step, schedule);
    const double prev = schedule.alpha_bar_at_step(step - 1);
    const double sigma = schedule.sigma_at_step(step);
    const double radicand = 1.0 - prev - sigma * sigma;
    if (radicand < -1e-12) {
        throw ScheduleError("ddim_step: negative radicand at step " + std::to_string(step));
    }
    const double signal = std::sqrt(prev);
    const double direction = std::sqrt(std::max(radicand, 0.0));
    Latent out = y;
    for (std::size_t k = 0; k < out.size(); ++k) {
        out.values[k] = signal * x0.values[k] + direction * eps.values[k] + sigma * z.values[k];
    }
    if (!out.all_finite()) {
        throw NumericError("ddim_step: non-finite latent at step " + std::to_string(step));
    }
    return out;
}

Latent forward_noise(const Latent& x0, int step, const NoiseSchedule& schedule, const Latent& z) {
    require_step(step, schedule);
    require_same_shape(x0, z, "forward_noise");
    const double abar = schedule.alpha_bar_at_step(step);
    const double signal = std::sqrt(abar);
    const double noise = std::sqrt(1.0 - abar);
    Latent out = x0;
    for (std::size_t k = 0; k < out.size(); ++k) {
        out.values[k] = signal * x0.values[k] + noise * z.values[k];
    }
    return out;
}

Latent OracleDenoiser::predict_noise(const Latent& y, int step, const ConditioningBundle&) const {
    require_step(step, schedule_);
    require_same_shape(y, target_, "oracle denoiser");
    const double abar = schedule_.alpha_bar_at_step(step);
    const double signal = std::sqrt(abar);
    const double noise = std::sqrt(1.0 - abar);
    Latent eps = y;
    for (std::size_t k = 0; k < eps.size(); ++k) {
        eps.values[k] = (y.values[k] - signal * target_.values[k]) / noise;
    }
    return eps;
}

Latent denoise_conditioned(const models::DenoiserInterface& model, const Latent& y, int step,
                           const ConditioningBundle& cond, const NoiseSchedule& schedule) {
    require_step(step, schedule);
    if (!y.all_finite()) {
        throw NumericError("non-finite latent entering the denoiser at step " + std::to_string(step));
    }
    Latent eps = model.predict_noise(y, step, cond);
    if (!eps.same_shape(y)) {
        throw ValidationError("denoiser output shape differs from its input");
    }
    if (!eps.all_finite()) {
        throw NumericError("denoiser produced a non-finite estimate at step " + std::to_string(step));
    }
    return eps;
}

Latent reverse_loop(Latent y, int start, const ConditioningBundle& base, const SamplerModels& models,
                    const NoiseSchedule& schedule, std::uint64_t seed) {
    ConditioningBundle cond = base;
    const auto range = models.codec ? models.codec->latent_range() : std::nullopt;
    for (int i = start; i >= 1; --i) {
        cond.step = models.step_encoder->encode(i, schedule.steps);
        cond.alpha_bar = schedule.alpha_bar_at_step(i);
        Latent eps = denoise_conditioned(*models.denoiser, y, i, cond, schedule);
        if (schedule.clip_denoised && range) {
            clip_through_x0(y, eps, i, schedule, *range);
        }
        Latent z(y.channels, y.height, y.width);
        if (i != 1 && schedule.sigma_at_step(i) > 0.0) {
            z = gaussian_latent(y.channels, y.height, y.width, seed, static_cast<std::uint64_t>(i));
        }
        y = ddim_step(y, eps, i, schedule, z);
    }
    return y;
}

ImageTensor inpaint(const Mask& mask, const ImageTensor& noisy_image, std::string_view prompt,
                    const SamplerModels& models, const NoiseSchedule& schedule, std::uint64_t seed) {
    if (!mask.same_shape(noisy_image)) {
        throw ValidationError("inpaint: mask shape does not match image");
    }
    ImageTensor masked = noisy_image;
    for (int c = 0; c < 3; ++c) {
        auto ch = masked.channel(c);
        for (std::size_t p = 0; p < ch.size(); ++p) {
            if (mask.bits()[p]) {
                ch[p] = 0.0f;
            }
        }
    }
    ConditioningBundle cond;
    cond.text = models.text_encoder->encode(prompt);
    cond.image = models.codec->encode(masked);
    cond.mask = models.codec->downsample_mask(mask);

    const Latent y_d = gaussian_latent(cond.image.channels, cond.image.height, cond.image.width, seed,
                                       kInitialNoiseStream);
    const Latent y0 = reverse_loop(y_d, schedule.steps, cond, models, schedule, seed);
    ImageTensor out = models.codec->decode(y0);
    out.clamp();
    return out;
}

ImageTensor harmonize(const ImageTensor& coarse, std::string_view prompt, double strength,
                      const SamplerModels& models, const NoiseSchedule& schedule, std::uint64_t seed) {
    if (!(strength > 0.0 && strength <= 1.0)) {
        throw ValidationError("harmonize: strength must lie in (0, 1]");
    }
    const int start = std::clamp(static_cast<int>(std::ceil(strength * schedule.steps - 1e-9)), 1, schedule.steps);

    ConditioningBundle cond;
    cond.text = models.text_encoder->encode(prompt);
    const Latent x0 = models.codec->encode(coarse);
    cond.image = models.codec->encode(ImageTensor(coarse.height(), coarse.width()));
    cond.mask = models.codec->downsample_mask(Mask(coarse.height(), coarse.width(), 1));

    const Latent z = gaussian_latent(x0.channels, x0.height, x0.width, seed, kInitialNoiseStream);
    const Latent y_start = forward_noise(x0, start, schedule, z);
    const Latent y0 = reverse_loop(y_start, start, cond, models, schedule, seed);
    ImageTensor out = models.codec->decode(y0);
    out.clamp();
    return out;
}

} // namespace svia::sampler
