#include "svia/evaluation.hpp"

#include "svia/errors.hpp"
#include "svia/png_io.hpp"
#include "svia/synthetic_data.hpp"

#include <cstdio>
#include <memory>

namespace svia::evaluation {

namespace {

Mask label_mask(const LabelMap& labels, std::initializer_list<Category> categories) {
    Mask m(labels.height, labels.width);
    for (std::size_t p = 0; p < labels.labels.size(); ++p) {
        for (Category c : categories) {
            if (labels.labels[p] == static_cast<int>(c)) {
                m.bits()[p] = 1;
            }
        }
    }
    return m;
}

std::string with_rank(double value, int rank) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f (%d)", value, rank);
    return buf;
}

// 1 + number of strictly smaller values.
int rank_of(double value, const std::vector<double>& all) {
    int r = 1;
    for (double v : all) {
        r += v < value;
    }
    return r;
}

} // namespace

AnonymizedSet parse_anonymized_arg(const std::string& arg) {
    const auto eq = arg.find('=');
    if (eq != std::string::npos) {
        if (eq == 0 || eq + 1 == arg.size()) {
            throw ValidationError("expected LABEL=DIR, got '" + arg + "'");
        }
        return {arg.substr(0, eq), arg.substr(eq + 1)};
    }
    std::filesystem::path dir(arg);
    std::string label = dir.filename().string();
    if (label.empty()) {
        label = dir.parent_path().filename().string();
    }
    return {label, dir};
}

EvaluationReport evaluate(const std::filesystem::path& original_dir, const std::vector<AnonymizedSet>& sets,
                          const pipeline::PipelineConfig& config, const EvaluationOptions& options) {
    const auto originals = data::load_dataset(original_dir);
    if (originals.size() < 2) {
        throw ValidationError("evaluation needs at least 2 original images");
    }

    std::unique_ptr<models::ConvFeatureExtractor> extractor;
    if (config.models.feature_extractor.empty()) {
        extractor = std::make_unique<models::ConvFeatureExtractor>();
    } else {
        extractor =
            std::make_unique<models::ConvFeatureExtractor>(models::ConvFeatureExtractor::load(config.models.feature_extractor));
    }
    std::unique_ptr<models::ConvCityClassifier> classifier;
    if (!config.models.city_classifier.empty()) {
        classifier =
            std::make_unique<models::ConvCityClassifier>(models::ConvCityClassifier::load(config.models.city_classifier));
    }
    const models::RandomProjectionEmbedder embedder;

    EvaluationReport report;
    report.original_count = originals.size();
    report.extractor_id = extractor->id();

    std::vector<ImageTensor> original_images;
    std::vector<int> cities;
    for (const auto& item : originals) {
        original_images.push_back(item.image);
        cities.push_back(item.city_id);
    }
    const metrics::FeatureSet original_features = metrics::extract_features(*extractor, original_images);
    const int max_k = classifier ? std::min(options.max_k, classifier->n_cities()) : 0;

    if (classifier) {
        for (int k = 1; k <= max_k; ++k) {
            report.original_acr.push_back(metrics::acr_at_k(original_images, cities, *classifier, k));
        }
        double mass = 0.0;
        for (const auto& item : originals) {
            const auto map = metrics::grad_cam(*classifier, item.image, item.city_id);
            mass += metrics::heatmap_mass_inside(map, label_mask(item.labels, {Category::road, Category::building}));
        }
        report.gradcam_road_building_mass = mass / static_cast<double>(originals.size());
    }

    for (const auto& set : sets) {
        SetMetrics row;
        row.label = set.label;
        std::vector<ImageTensor> anonymized;
        std::vector<ImageTensor> paired_originals;
        std::vector<int> paired_cities;
        double lpips_total = 0.0;
        double persim_total = 0.0;
        for (const auto& item : originals) {
            const auto path = set.dir / item.filename;
            if (!std::filesystem::exists(path)) {
                continue;
            }
            ImageTensor y = read_png(path);
            if (!y.same_shape(item.image)) {
                throw ValidationError("size mismatch for " + path.string());
            }
            lpips_total += metrics::lpips(item.image, y, *extractor);
            if (const auto p = metrics::persim(item.image, y, label_mask(item.labels, {Category::person}), embedder)) {
                persim_total += *p;
                ++row.persim_count;
            }
            paired_originals.push_back(item.image);
            paired_cities.push_back(item.city_id);
            anonymized.push_back(std::move(y));
        }
        row.count = anonymized.size();
        if (row.count < 2) {
            throw ValidationError("set '" + set.label + "' has fewer than 2 images matching the originals");
        }
        const auto features = metrics::extract_features(*extractor, anonymized);
        row.fid = metrics::fid(original_features, features);
        row.kid = metrics::kid_with_bootstrap(original_features, features, options.kid_bootstrap, options.seed);
        row.lpips = lpips_total / static_cast<double>(row.count);
        if (row.persim_count > 0) {
            row.persim = persim_total / static_cast<double>(row.persim_count);
        }
        for (int k = 1; k <= max_k; ++k) {
            row.acr.push_back(metrics::acr_at_k(anonymized, paired_cities, *classifier, k));
        }
        report.sets.push_back(std::move(row));
    }
    return report;
}

nlohmann::json EvaluationReport::to_json() const {
    std::vector<double> fids, kids, lpipss, persims;
    std::vector<std::vector<double>> acrs(original_acr.size());
    for (const auto& s : sets) {
        fids.push_back(s.fid);
        kids.push_back(s.kid.value);
        lpipss.push_back(s.lpips);
        if (s.persim) {
            persims.push_back(*s.persim);
        }
        for (std::size_t k = 0; k < s.acr.size(); ++k) {
            acrs[k].push_back(s.acr[k]);
        }
    }

    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : sets) {
        nlohmann::json r = {
            {"label", s.label},
            {"count", s.count},
            {"fid", s.fid},
            {"kid", s.kid.value},
            {"kid_bootstrap_se", s.kid.bootstrap_se},
            {"lpips", s.lpips},
            {"persim_count", s.persim_count},
        };
        nlohmann::json ranked = {
            {"fid", with_rank(s.fid, rank_of(s.fid, fids))},
            {"kid", with_rank(s.kid.value, rank_of(s.kid.value, kids))},
            {"lpips", with_rank(s.lpips, rank_of(s.lpips, lpipss))},
        };
        if (s.persim) {
            r["persim"] = *s.persim;
            ranked["persim"] = with_rank(*s.persim, rank_of(*s.persim, persims));
        } else {
            r["persim"] = nullptr;
        }
        for (std::size_t k = 0; k < s.acr.size(); ++k) {
            const std::string key = "acr@" + std::to_string(k + 1);
            r[key] = s.acr[k];
            ranked[key] = with_rank(s.acr[k], rank_of(s.acr[k], acrs[k]));
        }
        r["ranked"] = std::move(ranked);
        rows.push_back(std::move(r));
    }

    nlohmann::json original = {{"count", original_count}};
    for (std::size_t k = 0; k < original_acr.size(); ++k) {
        original["acr@" + std::to_string(k + 1)] = original_acr[k];
    }
    original["gradcam_road_building_mass"] =
        gradcam_road_building_mass ? nlohmann::json(*gradcam_road_building_mass) : nlohmann::json(nullptr);
    return {{"extractor_id", extractor_id}, {"original", original}, {"rows", rows}};
}

} // namespace svia::evaluation
