#pragma once

// Seeded, single-threaded training loops for the reference models.
//
// Hyperparameters come from train.<component>.* keys, e.g.
//   train.denoiser.epochs = 40
//   train.denoiser.learning_rate = 0.002

#include "svia/config.hpp"
#include "svia/models.hpp"
#include "svia/pipeline.hpp"
#include "svia/sampler.hpp"
#include "svia/synthetic_data.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace svia::training {

enum class ComponentKind { segmenter, denoiser, codec, city_classifier, feature_extractor };

ComponentKind component_kind_from_name(std::string_view name);
std::string_view component_kind_name(ComponentKind kind);

struct TrainingOptions {
    int epochs = 10;
    double learning_rate = 2e-3;
    int batch_size = 8;
    double clip_norm = 5.0;
    int width = 16;
    /// Denoiser: probability of a whole-image sample with the harmonizer prompt.
    double full_mask_probability = 0.2;
    /// Classifier and feature extractor: random horizontal flips.
    bool flip = true;
    /// Cosine learning-rate decay to zero over the run.
    bool cosine_decay = false;
    /// Denoiser: train on random square crops of this side (0 keeps whole
    /// images). Must be a multiple of 8.
    int crop = 0;
    /// Called after every epoch with (epoch from 1, mean loss).
    std::function<void(int, double)> on_epoch;

    static TrainingOptions defaults(ComponentKind kind);
    /// Reads train.<kind>.* over the component defaults.
    static TrainingOptions from_config(const KeyValueConfig& config, ComponentKind kind);
};

struct TrainingLog {
    std::vector<double> epoch_losses;
    double wall_seconds = 0.0;
};

models::ConvSegmenter train_segmenter(std::span<const data::DatasetItem> items, const TrainingOptions& options,
                                      std::uint64_t seed, TrainingLog& log);

models::ConvCityClassifier train_city_classifier(std::span<const data::DatasetItem> items, int n_cities,
                                                 const TrainingOptions& options, std::uint64_t seed,
                                                 TrainingLog& log);

models::ConvAutoencoderCodec train_codec(std::span<const data::DatasetItem> items, const TrainingOptions& options,
                                         std::uint64_t seed, TrainingLog& log);

models::ConvFeatureExtractor train_feature_extractor(std::span<const data::DatasetItem> items, int n_cities,
                                                     const TrainingOptions& options, std::uint64_t seed,
                                                     TrainingLog& log);

/// Prompts and category set the denoiser is conditioned on during training.
struct DenoiserTask {
    std::vector<std::string> categories;
    std::vector<std::string> prompts;
    std::string harmonizer_prompt;
    sampler::ScheduleKind schedule = sampler::ScheduleKind::linear;
    /// Identity codec when null.
    std::shared_ptr<const models::CodecInterface> codec;

    /// Categories, prompts and schedule taken from a pipeline config.
    static DenoiserTask from_pipeline(const pipeline::PipelineConfig& config);
};

/// Epsilon-prediction training. Each sample conditions on one present
/// sensitive category (masked region zeroed in the image condition) or, with
/// full_mask_probability, on the whole image with the harmonizer prompt; the
/// noise level is drawn uniformly in continuous time.
models::UNetDenoiser train_denoiser(std::span<const data::DatasetItem> items, const DenoiserTask& task,
                                    const TrainingOptions& options, std::uint64_t seed, TrainingLog& log);

struct DenoiserValidation {
    double model_mse = 0.0;
    /// MSE of predicting zero noise.
    double zero_mse = 0.0;
};

DenoiserValidation validate_denoiser(const models::UNetDenoiser& model, std::span<const data::DatasetItem> items,
                                     const DenoiserTask& task, std::uint64_t seed);

/// Mean pixel accuracy of a segmenter against ground-truth labels.
double pixel_accuracy(const models::SegmenterInterface& model, std::span<const data::DatasetItem> items);

struct TrainingResult {
    std::filesystem::path weights;
    std::filesystem::path log_file;
    TrainingLog log;
};

/// Loads the dataset, trains, writes the weights and a JSON log next to them
/// (<weights>.log.json). The weights path defaults to models.<kind> from the
/// config, then to <kind>.svw in the working directory.
TrainingResult train_component(ComponentKind kind, const std::filesystem::path& dataset,
                               const KeyValueConfig& config, std::uint64_t seed,
                               std::filesystem::path output = {});

} // namespace svia::training
