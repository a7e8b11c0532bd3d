#pragma once

// Evaluation suite: FID, KID, an LPIPS-style perceptual distance, person
// similarity, city re-identification accuracy and Grad-CAM attribution.

#include "svia/image.hpp"
#include "svia/models.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace svia::metrics {

/// m x f feature matrix tagged with the extractor that produced it.
struct FeatureSet {
    Eigen::MatrixXd vectors;
    std::string extractor_id;

    Eigen::Index samples() const noexcept { return vectors.rows(); }
    Eigen::Index dims() const noexcept { return vectors.cols(); }
};

FeatureSet extract_features(const models::FeatureExtractorInterface& extractor, std::span<const ImageTensor> images);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with 1e-6 I added to
/// both covariances and the product square root taken through the symmetric
/// form S_a^(1/2) S_b S_a^(1/2), negative eigenvalues clipped to 0.
double fid(const FeatureSet& a, const FeatureSet& b);

/// Unbiased MMD^2 with kernel k(u, v) = (u.v / f + 1)^3.
double kid(const FeatureSet& a, const FeatureSet& b);

struct KidEstimate {
    double value = 0.0;
    double bootstrap_se = 0.0;
};

/// Full-set estimate plus the standard deviation over bootstrap resamples
/// of both sets.
KidEstimate kid_with_bootstrap(const FeatureSet& a, const FeatureSet& b, int resamples, std::uint64_t seed);

/// Sum over extractor stages of the spatial mean of squared differences of
/// channel-unit-normalized activations.
double lpips(const ImageTensor& x, const ImageTensor& y, const models::FeatureExtractorInterface& extractor);

/// Cosine similarity in [-1, 1]; 0 when either vector is zero.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

/// Mean cosine similarity of embeddings of paired person crops taken at the
/// original's connected-component boxes; nullopt when there is no person.
std::optional<double> persim(const ImageTensor& original, const ImageTensor& anonymized, const Mask& person_mask,
                             const models::PersonEmbedderInterface& embedder, int min_area = 4);

/// Fraction of samples whose label ranks within the top k scores (ties go
/// to the lower index).
double acr_at_k(std::span<const std::vector<float>> scores, std::span<const int> labels, int k);
double acr_at_k(std::span<const ImageTensor> images, std::span<const int> labels,
                const models::CityClassifierInterface& classifier, int k);

/// Nonnegative map at the classifier's last-stage resolution, max 1 when
/// nonzero.
struct HeatMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;
    int class_index = 0;

    double total() const;
};

HeatMap grad_cam(const models::CityClassifierInterface& classifier, const ImageTensor& x, int class_index);

/// Share of heat-map mass falling inside the mask after nearest upsampling
/// to the mask's resolution. Returns 0 for an all-zero map.
double heatmap_mass_inside(const HeatMap& map, const Mask& mask);

} // namespace svia::metrics
