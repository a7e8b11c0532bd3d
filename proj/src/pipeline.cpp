#include "svia/pipeline.hpp"

#include "svia/errors.hpp"
#include "svia/image_ops.hpp"
#include "svia/png_io.hpp"
#include "svia/rng.hpp"
#include "svia/synthetic_data.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <thread>

namespace svia::pipeline {

namespace {

// Seed tags: category k inpaints with derive_seed(seed, k + 1) and noises with
// derive_seed(seed, kNoiseTag + k).
constexpr std::uint64_t kNoiseTag = 0x100;
constexpr std::uint64_t kHarmonizerTag = 0x4841524DULL;

std::string prompt_key(const std::string& category) {
    std::string key = category;
    std::replace(key.begin(), key.end(), ' ', '_');
    return "prompt." + key;
}

std::filesystem::path optional_path(const KeyValueConfig& config, const std::string& key,
                                    std::string_view builtin) {
    const auto raw = config.find(key);
    if (!raw || raw->empty() || *raw == builtin) {
        return {};
    }
    return config.get_path(key);
}

std::string stage_error(const char* stage, const std::string& category, const std::exception& e) {
    std::string out = std::string("stage '") + stage + "'";
    if (!category.empty()) {
        out += " (category '" + category + "')";
    }
    return out + ": " + e.what();
}

} // namespace

std::map<std::string, std::string> default_prompts() {
    return {
        {"person", "a photo of pedestrians on a street"},
        {"vehicle", "a photo of a parked vehicle"},
        {"traffic sign", "a photo of a traffic sign"},
        {"road", "a photo of an empty asphalt road"},
        {"building", "a photo of a generic building facade"},
    };
}

std::string default_harmonizer_prompt() { return "a coherent street view photo"; }

PipelineConfig PipelineConfig::from_config(const KeyValueConfig& config) {
    PipelineConfig out;
    if (config.has("pipeline.sensitive_categories")) {
        std::vector<std::string> names;
        for (const auto& raw : config.get_list("pipeline.sensitive_categories", {})) {
            names.emplace_back(category_name(category_from_name(raw)));
        }
        out.sensitive = SensitiveCategorySet(std::move(names));
    }
    out.laplace_scale = config.get_double("pipeline.laplace_scale", out.laplace_scale);
    out.seed = static_cast<std::uint64_t>(config.get_int("pipeline.seed", 0));

    for (const auto& name : category_names()) {
        if (const auto p = config.find(prompt_key(name))) {
            out.prompts[name] = *p;
        }
    }
    out.harmonizer_prompt = config.get_string("prompt.harmonizer", out.harmonizer_prompt);

    out.schedule.steps = static_cast<int>(config.get_int("sampler.steps", out.schedule.steps));
    out.schedule.kind = sampler::schedule_kind_from_name(config.get_string("sampler.schedule", "linear"));
    out.schedule.eta = config.get_double("sampler.eta", out.schedule.eta);
    out.schedule.strength = config.get_double("sampler.strength", out.schedule.strength);
    out.schedule.clip_denoised = config.get_bool("sampler.clip_denoised", out.schedule.clip_denoised);

    out.models.segmenter = optional_path(config, "models.segmenter", "");
    out.models.denoiser = optional_path(config, "models.denoiser", "");
    out.models.codec = optional_path(config, "models.codec", "identity");
    out.models.city_classifier = optional_path(config, "models.city_classifier", "");
    out.models.feature_extractor = optional_path(config, "models.feature_extractor", "random");

    out.baseline.blur_sigma = config.get_double("baseline.blur_sigma", out.baseline.blur_sigma);
    out.baseline.block_size = static_cast<int>(config.get_int("baseline.block_size", out.baseline.block_size));
    out.baseline.gray_value = config.get_double("baseline.gray_value", out.baseline.gray_value);

    out.config_hash = config.hash();
    out.validate();
    return out;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    return from_config(KeyValueConfig::load(path));
}

void PipelineConfig::validate() const {
    if (!(laplace_scale > 0.0)) {
        throw ValidationError("pipeline.laplace_scale must be positive");
    }
    for (const auto& name : sensitive.names()) {
        if (!prompts.count(name)) {
            throw ValidationError("no prompt for sensitive category '" + name + "'");
        }
    }
    if (schedule.steps < 1) {
        throw ValidationError("sampler.steps must be at least 1");
    }
    if (!(schedule.eta >= 0.0 && schedule.eta <= 1.0)) {
        throw ValidationError("sampler.eta must lie in [0, 1]");
    }
    if (!(schedule.strength > 0.0 && schedule.strength <= 1.0)) {
        throw ValidationError("sampler.strength must lie in (0, 1]");
    }
    baseline.validate();
}

const std::string& PipelineConfig::prompt_for(const std::string& category) const {
    const auto it = prompts.find(category);
    if (it == prompts.end()) {
        throw ValidationError("no prompt for category '" + category + "'");
    }
    return it->second;
}

PipelineModels load_models(const PipelineConfig& config) {
    PipelineModels m;
    if (config.models.segmenter.empty()) {
        throw ValidationError("models.segmenter is not set");
    }
    if (config.models.denoiser.empty()) {
        throw ValidationError("models.denoiser is not set");
    }
    m.segmenter = std::make_shared<models::ConvSegmenter>(models::ConvSegmenter::load(config.models.segmenter));
    auto denoiser = std::make_shared<models::UNetDenoiser>(models::UNetDenoiser::load(config.models.denoiser));
    if (config.models.codec.empty()) {
        m.sampler.codec = std::make_shared<models::IdentityCodec>();
    } else {
        m.sampler.codec =
            std::make_shared<models::ConvAutoencoderCodec>(models::ConvAutoencoderCodec::load(config.models.codec));
    }
    if (denoiser->dims().latent_channels != m.sampler.codec->latent_channels()) {
        throw ValidationError("denoiser latent channels do not match the codec");
    }
    m.sampler.text_encoder = std::make_shared<models::HashedTextEncoder>(denoiser->dims().text_dim);
    m.sampler.step_encoder = std::make_shared<models::SinusoidalStepEncoder>(denoiser->dims().step_dim);
    m.sampler.denoiser = std::move(denoiser);
    return m;
}

AnonymizeTrace anonymize_trace(const ImageTensor& x, const PipelineConfig& config, const PipelineModels& models,
                               std::uint64_t seed, bool harmonize) {
    validate_pipeline_image(x, 4 * models.sampler.codec->downsample_factor());
    auto schedule = sampler::build_schedule(config.schedule.steps, config.schedule.kind, config.schedule.eta);
    schedule.clip_denoised = config.schedule.clip_denoised;

    AnonymizeTrace trace;
    try {
        trace.masks = models::segment(*models.segmenter, x);
        config.sensitive.check_subset_of(trace.masks);
    } catch (const std::exception& e) {
        throw ValidationError(stage_error("segment", "", e));
    }

    std::vector<Mask> layers;
    std::vector<ImageTensor> inpainted;
    for (const auto& name : config.sensitive.names()) {
        const Mask& mask = trace.masks.by_name(name);
        if (mask.area() == 0) {
            continue;
        }
        const auto index = static_cast<std::uint64_t>(category_from_name(name));
        try {
            const ImageTensor noisy =
                add_masked_laplace(x, mask, config.laplace_scale, derive_seed(seed, kNoiseTag + index));
            inpainted.push_back(sampler::inpaint(mask, noisy, config.prompt_for(name), models.sampler, schedule,
                                                 derive_seed(seed, index + 1)));
        } catch (const NumericError& e) {
            throw NumericError(stage_error("inpaint", name, e));
        } catch (const std::exception& e) {
            throw ValidationError(stage_error("inpaint", name, e));
        }
        layers.push_back(mask);
    }
    trace.composite = composite(x, layers, inpainted);

    if (harmonize) {
        try {
            trace.output = sampler::harmonize(trace.composite, config.harmonizer_prompt, config.schedule.strength,
                                              models.sampler, schedule, derive_seed(seed, kHarmonizerTag));
        } catch (const NumericError& e) {
            throw NumericError(stage_error("harmonize", "", e));
        } catch (const std::exception& e) {
            throw ValidationError(stage_error("harmonize", "", e));
        }
    }
    return trace;
}

ImageTensor anonymize(const ImageTensor& x, const PipelineConfig& config, const PipelineModels& models) {
    return anonymize_trace(x, config, models, config.seed, true).output;
}

ImageTensor anonymize_without_harmonizer(const ImageTensor& x, const PipelineConfig& config,
                                         const PipelineModels& models) {
    return anonymize_trace(x, config, models, config.seed, false).composite;
}

nlohmann::json ResultManifest::to_json() const {
    nlohmann::json records_json = nlohmann::json::array();
    for (const auto& r : records) {
        nlohmann::json j = {
            {"input", r.input},
            {"output", r.output},
            {"seed", r.seed},
            {"config_hash", r.config_hash},
            {"wall_seconds", r.wall_seconds},
        };
        j["error"] = r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr);
        records_json.push_back(std::move(j));
    }
    return {{"config_hash", config_hash}, {"mode", mode}, {"records", records_json}, {"metrics", metrics}};
}

ResultManifest anonymize_batch(const std::filesystem::path& input_dir, const std::filesystem::path& output_dir,
                               const PipelineConfig& config, const PipelineModels& models,
                               const BatchOptions& options) {
    if (!std::filesystem::is_directory(input_dir)) {
        throw IoError("input directory not found: " + input_dir.string());
    }
    const auto inputs = data::list_images(input_dir);
    std::filesystem::create_directories(output_dir);
    if (!options.intermediate_dir.empty()) {
        std::filesystem::create_directories(options.intermediate_dir);
    }

    ResultManifest manifest;
    manifest.config_hash = config.config_hash;
    switch (options.mode) {
    case BatchMode::full:
        manifest.mode = "svia";
        break;
    case BatchMode::no_harmonizer:
        manifest.mode = "svia_no_harmonizer";
        break;
    case BatchMode::baseline:
        manifest.mode = std::string(baselines::baseline_kind_name(options.baseline));
        break;
    }
    manifest.records.resize(inputs.size());

    auto process = [&](std::size_t k) {
        ManifestRecord& rec = manifest.records[k];
        const auto& path = inputs[k];
        rec.input = path.string();
        rec.output = (output_dir / path.filename()).string();
        rec.seed = config.seed ^ static_cast<std::uint64_t>(k);
        rec.config_hash = config.config_hash;
        const auto start = std::chrono::steady_clock::now();
        try {
            const ImageTensor x = read_png(path);
            ImageTensor y;
            if (options.mode == BatchMode::baseline) {
                const MaskSet masks = models::segment(*models.segmenter, x);
                config.sensitive.check_subset_of(masks);
                baselines::BaselineSpec spec = config.baseline;
                spec.kind = options.baseline;
                y = baselines::apply_baseline(x, masks.union_of(config.sensitive.names()), spec);
            } else {
                const bool harmonize = options.mode == BatchMode::full;
                AnonymizeTrace trace = anonymize_trace(x, config, models, rec.seed, harmonize);
                if (!options.intermediate_dir.empty()) {
                    write_png(options.intermediate_dir / path.filename(), trace.composite);
                }
                y = harmonize ? std::move(trace.output) : std::move(trace.composite);
            }
            write_png(rec.output, y);
        } catch (const std::exception& e) {
            rec.error = e.what();
            rec.output.clear();
        }
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(inputs.size())));
    if (workers <= 1) {
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            process(k);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t k = next++; k < inputs.size(); k = next++) {
                    process(k);
                }
            });
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    std::ofstream out(output_dir / "manifest.json");
    if (!out) {
        throw IoError("cannot write manifest in " + output_dir.string());
    }
    out << manifest.to_json().dump(2) << '\n';
    return manifest;
}

} // namespace svia::pipeline
