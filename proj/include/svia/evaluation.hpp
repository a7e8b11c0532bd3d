#pragma once

// Batch evaluation behind `svia evaluate`: compares anonymized image sets
// against the originals and ranks the sets per metric.

#include "svia/metrics.hpp"
#include "svia/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace svia::evaluation {

struct AnonymizedSet {
    std::string label;
    std::filesystem::path dir;
};

/// "label=dir", or a bare dir labelled by its final path component.
AnonymizedSet parse_anonymized_arg(const std::string& arg);

struct EvaluationOptions {
    int kid_bootstrap = 100;
    std::uint64_t seed = 0;
    int max_k = 4;
};

struct SetMetrics {
    std::string label;
    std::size_t count = 0;
    double fid = 0.0;
    metrics::KidEstimate kid;
    double lpips = 0.0;
    std::optional<double> persim;
    std::size_t persim_count = 0;
    /// acr[k - 1] = ACR@k; empty without a classifier.
    std::vector<double> acr;
};

struct EvaluationReport {
    std::size_t original_count = 0;
    std::string extractor_id;
    std::vector<double> original_acr;
    std::optional<double> gradcam_road_building_mass;
    std::vector<SetMetrics> sets;

    /// Values plus "(rank)" strings; rank 1 is the lowest value for every metric.
    nlohmann::json to_json() const;
};

/// The original directory follows the dataset layout. Anonymized images are
/// paired with originals by filename. City labels and person masks come from
/// the original's cities.csv and label maps.
EvaluationReport evaluate(const std::filesystem::path& original_dir, const std::vector<AnonymizedSet>& sets,
                          const pipeline::PipelineConfig& config, const EvaluationOptions& options);

} // namespace svia::evaluation
