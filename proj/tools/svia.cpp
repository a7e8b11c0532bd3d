#include "svia/baselines.hpp"
#include "svia/errors.hpp"
#include "svia/evaluation.hpp"
#include "svia/pipeline.hpp"
#include "svia/synthetic_data.hpp"
#include "svia/training.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace {

using namespace svia;

int run_anonymize(const std::string& input, const std::string& output, const std::string& config_path,
                  bool no_harmonizer, int workers, const std::string& baseline, const std::string& intermediate) {
    const auto config = pipeline::PipelineConfig::load(config_path);
    const auto models = pipeline::load_models(config);
    pipeline::BatchOptions options;
    options.workers = workers;
    options.intermediate_dir = intermediate;
    if (!baseline.empty()) {
        options.mode = pipeline::BatchMode::baseline;
        options.baseline = baselines::baseline_kind_from_name(baseline);
    } else if (no_harmonizer) {
        options.mode = pipeline::BatchMode::no_harmonizer;
    }
    const auto manifest = pipeline::anonymize_batch(input, output, config, models, options);
    int failed = 0;
    for (const auto& r : manifest.records) {
        if (r.error) {
            std::cerr << r.input << ": " << *r.error << '\n';
            ++failed;
        }
    }
    std::cout << "processed " << manifest.records.size() << " images (" << failed << " failed), manifest "
              << (std::filesystem::path(output) / "manifest.json").string() << '\n';
    return failed == 0 ? 0 : 2;
}

int run_train(const std::string& component, const std::string& dataset, const std::string& config_path,
              std::optional<std::uint64_t> seed, const std::string& output, bool quiet) {
    const auto config = KeyValueConfig::load(config_path);
    const auto kind = training::component_kind_from_name(component);
    const std::uint64_t s = seed ? *seed : static_cast<std::uint64_t>(config.get_int("train.seed", 0));
    const auto result = training::train_component(kind, dataset, config, s, output);
    if (!quiet) {
        for (std::size_t e = 0; e < result.log.epoch_losses.size(); ++e) {
            std::cout << "epoch " << e + 1 << " loss " << result.log.epoch_losses[e] << '\n';
        }
    }
    std::cout << "wrote " << result.weights.string() << " in " << result.log.wall_seconds << " s\n";
    return 0;
}

int run_evaluate(const std::string& original, const std::vector<std::string>& anonymized,
                 const std::string& config_path, const std::string& report_path) {
    const auto config = pipeline::PipelineConfig::load(config_path);
    const auto raw = KeyValueConfig::load(config_path);
    evaluation::EvaluationOptions options;
    options.kid_bootstrap = static_cast<int>(raw.get_int("evaluate.kid_bootstrap", options.kid_bootstrap));
    options.seed = static_cast<std::uint64_t>(raw.get_int("evaluate.seed", 0));
    options.max_k = static_cast<int>(raw.get_int("evaluate.max_k", options.max_k));
    std::vector<evaluation::AnonymizedSet> sets;
    for (const auto& a : anonymized) {
        sets.push_back(evaluation::parse_anonymized_arg(a));
    }
    const auto report = evaluation::evaluate(original, sets, config, options);
    nlohmann::json j = report.to_json();
    j["config_hash"] = config.config_hash;
    std::ofstream out(report_path);
    if (!out) {
        throw IoError("cannot write report " + report_path);
    }
    out << j.dump(2) << '\n';
    std::cout << j.dump(2) << '\n';
    return 0;
}

int run_gen_data(const std::string& out, int n_images, int n_cities, std::uint64_t seed, int size) {
    data::DatasetOptions options;
    options.n_images = n_images;
    options.n_cities = n_cities;
    options.seed = seed;
    options.height = size;
    options.width = size;
    const auto layout = data::generate_dataset(options, out);
    std::cout << "wrote " << layout.filenames.size() << " scenes to " << out << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // keep large activation buffers on the heap instead of fresh mmaps
    mallopt(M_MMAP_THRESHOLD, 512 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    CLI::App app{"Street-view image anonymization"};
    app.require_subcommand(1);

    std::string input, output, config, baseline, intermediate;
    bool no_harmonizer = false;
    int workers = 1;
    auto* anonymize = app.add_subcommand("anonymize", "Anonymize a directory of images");
    anonymize->add_option("--input", input, "Input image directory")->required();
    anonymize->add_option("--output", output, "Output directory")->required();
    anonymize->add_option("--config", config, "Pipeline config file")->required();
    auto* no_harm_flag = anonymize->add_flag("--no-harmonizer", no_harmonizer, "Stop after the composite");
    anonymize->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    anonymize->add_option("--baseline", baseline, "blur, pixelate or graymask instead of inpainting")
        ->check(CLI::IsMember({"blur", "pixelate", "graymask"}))
        ->excludes(no_harm_flag);
    anonymize->add_option("--save-intermediate", intermediate, "Also write pre-harmonizer composites here");

    std::string component, dataset, train_output;
    std::optional<std::uint64_t> train_seed;
    bool quiet = false;
    auto* train = app.add_subcommand("train", "Train a model component");
    train->add_option("--component", component, "segmenter, denoiser, codec, city_classifier, feature_extractor")
        ->required();
    train->add_option("--dataset", dataset, "Dataset root")->required();
    train->add_option("--config", config, "Config file")->required();
    train->add_option("--seed", train_seed, "Training seed (default train.seed)");
    train->add_option("--output", train_output, "Weights path (default models.<component>)");
    train->add_flag("--quiet", quiet, "Do not print per-epoch losses");

    std::string original, report;
    std::vector<std::string> anonymized;
    auto* evaluate = app.add_subcommand("evaluate", "Score anonymized sets against the originals");
    evaluate->add_option("--original", original, "Original dataset root")->required();
    evaluate->add_option("--anonymized", anonymized, "Anonymized directory, optionally LABEL=DIR (repeatable)")
        ->required();
    evaluate->add_option("--config", config, "Pipeline config file")->required();
    evaluate->add_option("--report", report, "JSON report path")->required();

    std::string out;
    int n_images = 500, n_cities = 8, size = 64;
    std::uint64_t seed = 0;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic street-scene dataset");
    gen->add_option("--out", out, "Output root")->required();
    gen->add_option("--n-images", n_images, "Number of scenes")->check(CLI::NonNegativeNumber);
    gen->add_option("--n-cities", n_cities, "Number of cities")->check(CLI::Range(2, 255));
    gen->add_option("--seed", seed, "Generator seed");
    gen->add_option("--size", size, "Scene height and width")->check(CLI::Range(8, 4096));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*anonymize) {
            return run_anonymize(input, output, config, no_harmonizer, workers, baseline, intermediate);
        }
        if (*train) {
            return run_train(component, dataset, config, train_seed, train_output, quiet);
        }
        if (*evaluate) {
            return run_evaluate(original, anonymized, config, report);
        }
        if (*gen) {
            return run_gen_data(out, n_images, n_cities, seed, size);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
