#pragma once

// Segment, noise and inpaint each sensitive category, composite, harmonize.

#include "svia/baselines.hpp"
#include "svia/config.hpp"
#include "svia/image.hpp"
#include "svia/models.hpp"
#include "svia/sampler.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace svia::pipeline {

/// Category name -> inpainting prompt for the five default sensitive categories.
std::map<std::string, std::string> default_prompts();
std::string default_harmonizer_prompt();

struct ScheduleParams {
    int steps = 50;
    sampler::ScheduleKind kind = sampler::ScheduleKind::linear;
    double eta = 0.0;
    double strength = 0.3;
    bool clip_denoised = true;
};

/// Empty paths select the training-free defaults where one exists
/// (identity codec, random-weight feature extractor).
struct ModelPaths {
    std::filesystem::path segmenter;
    std::filesystem::path denoiser;
    std::filesystem::path codec;
    std::filesystem::path city_classifier;
    std::filesystem::path feature_extractor;
};

struct PipelineConfig {
    SensitiveCategorySet sensitive = SensitiveCategorySet::defaults();
    double laplace_scale = 0.25;
    std::map<std::string, std::string> prompts = default_prompts();
    std::string harmonizer_prompt = default_harmonizer_prompt();
    ScheduleParams schedule;
    std::uint64_t seed = 0;
    ModelPaths models;
    baselines::BaselineSpec baseline;
    /// Hash of the configuration text the run was started from.
    std::string config_hash;

    /// Keys: pipeline.*, sampler.*, prompt.<category>, prompt.harmonizer,
    /// models.*, baseline.*. Missing keys keep their defaults.
    static PipelineConfig from_config(const KeyValueConfig& config);
    static PipelineConfig load(const std::filesystem::path& path);

    /// Throws ValidationError on a broken invariant.
    void validate() const;
    const std::string& prompt_for(const std::string& category) const;
};

struct PipelineModels {
    std::shared_ptr<const models::SegmenterInterface> segmenter;
    sampler::SamplerModels sampler;
};

/// Loads the segmenter, denoiser and codec named in the config.
PipelineModels load_models(const PipelineConfig& config);

struct AnonymizeTrace {
    MaskSet masks;
    /// Composite before the harmonizer.
    ImageTensor composite;
    /// Harmonized output; empty when the harmonizer was skipped.
    ImageTensor output;
};

/// Full run with a caller-chosen seed; harmonize = false stops after the
/// composite.
AnonymizeTrace anonymize_trace(const ImageTensor& x, const PipelineConfig& config, const PipelineModels& models,
                               std::uint64_t seed, bool harmonize = true);

ImageTensor anonymize(const ImageTensor& x, const PipelineConfig& config, const PipelineModels& models);
ImageTensor anonymize_without_harmonizer(const ImageTensor& x, const PipelineConfig& config,
                                         const PipelineModels& models);

struct ManifestRecord {
    std::string input;
    std::string output;
    std::uint64_t seed = 0;
    std::string config_hash;
    double wall_seconds = 0.0;
    std::optional<std::string> error;
};

struct ResultManifest {
    std::string config_hash;
    std::string mode;
    std::vector<ManifestRecord> records;
    nlohmann::json metrics = nlohmann::json::object();

    nlohmann::json to_json() const;
};

enum class BatchMode { full, no_harmonizer, baseline };

struct BatchOptions {
    BatchMode mode = BatchMode::full;
    baselines::BaselineKind baseline = baselines::BaselineKind::graymask;
    int workers = 1;
    /// Also write the pre-harmonizer composite to this directory when set.
    std::filesystem::path intermediate_dir;
};

/// Processes every PNG under input_dir (or input_dir/images), writing
/// same-named outputs and output_dir/manifest.json. Image k uses seed ^ k.
/// Unreadable images are recorded with an error and skipped.
ResultManifest anonymize_batch(const std::filesystem::path& input_dir, const std::filesystem::path& output_dir,
                               const PipelineConfig& config, const PipelineModels& models,
                               const BatchOptions& options);

} // namespace svia::pipeline
