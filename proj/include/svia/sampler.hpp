#pragma once

// Noise schedules and the diffusion sampling loops for inpainting and
// harmonization.
//
// Update equations use the cumulative signal rate alpha_bar throughout:
//
//   x0_hat  = (y_i - sqrt(1 - abar_i) eps_i) / sqrt(abar_i)
//   y_{i-1} = sqrt(abar_{i-1}) x0_hat + sqrt(1 - abar_{i-1} - sigma_i^2) eps_i + sigma_i z
//   y_t     = sqrt(abar_t) x0 + sqrt(1 - abar_t) z

#include "svia/image.hpp"
#include "svia/models.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace svia::sampler {

using models::ConditioningBundle;
using models::Latent;

enum class ScheduleKind { linear, cosine };

ScheduleKind schedule_kind_from_name(std::string_view name);
std::string_view schedule_kind_name(ScheduleKind kind);

/// Cumulative signal rate at continuous position tau in [0, 1]; 1 at tau = 0.
double alpha_bar_at(ScheduleKind kind, double tau);

struct NoiseSchedule {
    int steps = 0;
    ScheduleKind kind = ScheduleKind::linear;
    double eta = 0.0;
    /// alpha[i - 1] is the per-step rate of step i.
    std::vector<double> alpha;
    /// alpha_bar[i] for i = 0..steps; alpha_bar[0] = 1.
    std::vector<double> alpha_bar;
    /// sigma[i - 1] is the stochasticity constant of step i.
    std::vector<double> sigma;
    /// Clamp x0_hat to the codec's latent range (when it has one) and
    /// re-derive eps from the clamped value before each update.
    bool clip_denoised = false;

    double alpha_bar_at_step(int i) const { return alpha_bar.at(static_cast<std::size_t>(i)); }
    double sigma_at_step(int i) const { return sigma.at(static_cast<std::size_t>(i - 1)); }
};

/// d steps sampled from the continuous schedule at tau = i / d, with
/// sigma_i = eta * sqrt((1 - abar_{i-1}) / (1 - abar_i)) * sqrt(1 - abar_i / abar_{i-1}).
NoiseSchedule build_schedule(int steps, ScheduleKind kind, double eta);

Latent predict_x0(const Latent& y, const Latent& eps, int step, const NoiseSchedule& schedule);

Latent ddim_step(const Latent& y, const Latent& eps, int step, const NoiseSchedule& schedule, const Latent& z);

Latent forward_noise(const Latent& x0, int step, const NoiseSchedule& schedule, const Latent& z);

/// Noise estimate for a known clean latent:
/// eps = (y - sqrt(abar_i) target) / sqrt(1 - abar_i).
class OracleDenoiser final : public models::DenoiserInterface {
public:
    OracleDenoiser(Latent target, NoiseSchedule schedule)
        : target_(std::move(target)), schedule_(std::move(schedule)) {}
    Latent predict_noise(const Latent& y, int step, const ConditioningBundle& cond) const override;

private:
    Latent target_;
    NoiseSchedule schedule_;
};

/// Checked call into a denoiser: step range, finiteness and output shape.
Latent denoise_conditioned(const models::DenoiserInterface& model, const Latent& y, int step,
                           const ConditioningBundle& cond, const NoiseSchedule& schedule);

/// Models the sampling loops need. Shared, read-only.
struct SamplerModels {
    std::shared_ptr<const models::DenoiserInterface> denoiser;
    std::shared_ptr<const models::CodecInterface> codec;
    std::shared_ptr<const models::TextEncoderInterface> text_encoder;
    std::shared_ptr<const models::StepEncoderInterface> step_encoder;
};

/// Masked-region inpainting: conditions on the encoded image with the masked
/// region zeroed, samples y_d ~ N(0, I) and runs the DDIM loop down to y_0.
ImageTensor inpaint(const Mask& mask, const ImageTensor& noisy_image, std::string_view prompt,
                    const SamplerModels& models, const NoiseSchedule& schedule, std::uint64_t seed);

/// Image-to-image pass: forward-noises the encoded image to step
/// ceil(strength * d) and denoises back with a full-image mask.
ImageTensor harmonize(const ImageTensor& coarse, std::string_view prompt, double strength,
                      const SamplerModels& models, const NoiseSchedule& schedule, std::uint64_t seed);

/// Runs the reverse loop from y_start at step start down to y_0.
Latent reverse_loop(Latent y, int start, const ConditioningBundle& base, const SamplerModels& models,
                    const NoiseSchedule& schedule, std::uint64_t seed);

} // namespace svia::sampler
