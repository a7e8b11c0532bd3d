#include "svia/metrics.hpp"

#include "svia/errors.hpp"
#include "svia/image_ops.hpp"
#include "svia/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace svia::metrics {

namespace {

void check_compatible(const FeatureSet& a, const FeatureSet& b) {
    if (a.extractor_id != b.extractor_id) {
        throw ValidationError("feature sets come from different extractors: '" + a.extractor_id + "' vs '" +
                              b.extractor_id + "'");
    }
    if (a.dims() != b.dims()) {
        throw ValidationError("feature sets differ in dimension");
    }
    if (a.samples() < 2 || b.samples() < 2) {
        throw ValidationError("insufficient samples: need at least 2 per set");
    }
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& mean) {
    const Eigen::MatrixXd centred = x.rowwise() - mean;
    return centred.transpose() * centred / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    const Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

double kernel(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index j) {
    const double base = a.row(i).dot(b.row(j)) / static_cast<double>(a.cols()) + 1.0;
    return base * base * base;
}

double mmd_unbiased(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const Eigen::Index m = a.rows();
    const Eigen::Index n = b.rows();
    double kaa = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            if (i != j) {
                kaa += kernel(a, i, a, j);
            }
        }
    }
    double kbb = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i != j) {
                kbb += kernel(b, i, b, j);
            }
        }
    }
    double kab = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            kab += kernel(a, i, b, j);
        }
    }
    return kaa / static_cast<double>(m * (m - 1)) + kbb / static_cast<double>(n * (n - 1)) -
           2.0 * kab / static_cast<double>(m * n);
}

} // namespace

FeatureSet extract_features(const models::FeatureExtractorInterface& extractor, std::span<const ImageTensor> images) {
    FeatureSet set;
    set.extractor_id = extractor.id();
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto f = extractor.features(images[i]);
        if (i == 0) {
            set.vectors.resize(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(f.size()));
        }
        for (std::size_t j = 0; j < f.size(); ++j) {
            set.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[j];
        }
    }
    return set;
}

double fid(const FeatureSet& a, const FeatureSet& b) {
    check_compatible(a, b);
    const Eigen::RowVectorXd mu_a = a.vectors.colwise().mean();
    const Eigen::RowVectorXd mu_b = b.vectors.colwise().mean();
    const Eigen::MatrixXd ridge = 1e-6 * Eigen::MatrixXd::Identity(a.dims(), a.dims());
    const Eigen::MatrixXd cov_a = covariance(a.vectors, mu_a) + ridge;
    const Eigen::MatrixXd cov_b = covariance(b.vectors, mu_b) + ridge;

    const Eigen::MatrixXd root_a = psd_sqrt(cov_a);
    Eigen::MatrixXd middle = root_a * cov_b * root_a;
    middle = 0.5 * (middle + middle.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(middle, Eigen::EigenvaluesOnly);
    const double trace_root = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double mean_term = (mu_a - mu_b).squaredNorm();
    const double value = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * trace_root;
    return std::max(value, 0.0);
}

double kid(const FeatureSet& a, const FeatureSet& b) {
    check_compatible(a, b);
    return mmd_unbiased(a.vectors, b.vectors);
}

KidEstimate kid_with_bootstrap(const FeatureSet& a, const FeatureSet& b, int resamples, std::uint64_t seed) {
    KidEstimate out;
    out.value = kid(a, b);
    if (resamples < 2) {
        return out;
    }
    RngStream rng(seed, 0xB00);
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(resamples));
    for (int r = 0; r < resamples; ++r) {
        Eigen::MatrixXd ra(a.samples(), a.dims());
        Eigen::MatrixXd rb(b.samples(), b.dims());
        for (Eigen::Index i = 0; i < a.samples(); ++i) {
            ra.row(i) = a.vectors.row(static_cast<Eigen::Index>(rng.next_bits() % a.samples()));
        }
        for (Eigen::Index i = 0; i < b.samples(); ++i) {
            rb.row(i) = b.vectors.row(static_cast<Eigen::Index>(rng.next_bits() % b.samples()));
        }
        values.push_back(mmd_unbiased(ra, rb));
    }
    double mean = 0.0;
    for (double v : values) {
        mean += v;
    }
    mean /= resamples;
    double var = 0.0;
    for (double v : values) {
        var += (v - mean) * (v - mean);
    }
    out.bootstrap_se = std::sqrt(var / (resamples - 1));
    return out;
}

double lpips(const ImageTensor& x, const ImageTensor& y, const models::FeatureExtractorInterface& extractor) {
    if (!x.same_shape(y)) {
        throw ValidationError("lpips: image shapes differ");
    }
    const auto fx = extractor.stages(x);
    const auto fy = extractor.stages(y);
    double total = 0.0;
    for (std::size_t s = 0; s < fx.size(); ++s) {
        const auto& a = fx[s];
        const auto& b = fy[s];
        const std::size_t plane = a.plane();
        double stage = 0.0;
        for (std::size_t p = 0; p < plane; ++p) {
            double na = 0.0;
            double nb = 0.0;
            for (int c = 0; c < a.channels; ++c) {
                na += static_cast<double>(a.data[c * plane + p]) * a.data[c * plane + p];
                nb += static_cast<double>(b.data[c * plane + p]) * b.data[c * plane + p];
            }
            na = std::sqrt(na) + 1e-10;
            nb = std::sqrt(nb) + 1e-10;
            double diff = 0.0;
            for (int c = 0; c < a.channels; ++c) {
                const double d = a.data[c * plane + p] / na - b.data[c * plane + p] / nb;
                diff += d * d;
            }
            stage += diff;
        }
        total += stage / static_cast<double>(plane);
    }
    return total;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw ValidationError("cosine similarity: length mismatch");
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

std::optional<double> persim(const ImageTensor& original, const ImageTensor& anonymized, const Mask& person_mask,
                             const models::PersonEmbedderInterface& embedder, int min_area) {
    if (!original.same_shape(anonymized) || !person_mask.same_shape(original)) {
        throw ValidationError("persim: shape mismatch");
    }
    const auto boxes = connected_component_boxes(person_mask, min_area);
    if (boxes.empty()) {
        return std::nullopt;
    }
    double total = 0.0;
    for (const auto& box : boxes) {
        const auto ea = embedder.embed(crop(original, box));
        const auto eb = embedder.embed(crop(anonymized, box));
        total += cosine_similarity(ea, eb);
    }
    return total / static_cast<double>(boxes.size());
}

double acr_at_k(std::span<const std::vector<float>> scores, std::span<const int> labels, int k) {
    if (scores.size() != labels.size()) {
        throw ValidationError("acr: score and label counts differ");
    }
    if (scores.empty()) {
        throw ValidationError("acr: no samples");
    }
    int hits = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto& s = scores[i];
        const int label = labels[i];
        if (k < 1 || k > static_cast<int>(s.size())) {
            throw ValidationError("acr: k must lie in [1, number of cities]");
        }
        if (label < 0 || label >= static_cast<int>(s.size())) {
            throw ValidationError("acr: label " + std::to_string(label) + " outside the classifier's city set");
        }
        int rank = 0;
        for (int c = 0; c < static_cast<int>(s.size()); ++c) {
            if (s[c] > s[label] || (s[c] == s[label] && c < label)) {
                ++rank;
            }
        }
        hits += rank < k;
    }
    return static_cast<double>(hits) / static_cast<double>(scores.size());
}

double acr_at_k(std::span<const ImageTensor> images, std::span<const int> labels,
                const models::CityClassifierInterface& classifier, int k) {
    std::vector<std::vector<float>> scores;
    scores.reserve(images.size());
    for (const auto& image : images) {
        scores.push_back(classifier.predict(image));
    }
    return acr_at_k(scores, labels, k);
}

double HeatMap::total() const {
    double t = 0.0;
    for (double v : values) {
        t += v;
    }
    return t;
}

HeatMap grad_cam(const models::CityClassifierInterface& classifier, const ImageTensor& x, int class_index) {
    if (class_index < 0 || class_index >= classifier.n_cities()) {
        throw ValidationError("grad-cam: class index out of range");
    }
    const auto inputs = classifier.class_gradients(x, class_index);
    const auto& acts = inputs.activations;
    const auto& grads = inputs.gradients;
    HeatMap map;
    map.height = acts.height;
    map.width = acts.width;
    map.class_index = class_index;
    map.values.assign(acts.plane(), 0.0);
    for (int c = 0; c < acts.channels; ++c) {
        double weight = 0.0;
        for (float g : grads.channel(c)) {
            weight += g;
        }
        weight /= static_cast<double>(acts.plane());
        if (weight == 0.0) {
            continue;
        }
        const auto a = acts.channel(c);
        for (std::size_t p = 0; p < a.size(); ++p) {
            map.values[p] += weight * a[p];
        }
    }
    double peak = 0.0;
    for (double& v : map.values) {
        v = std::max(v, 0.0);
        peak = std::max(peak, v);
    }
    if (peak > 0.0) {
        for (double& v : map.values) {
            v /= peak;
        }
    }
    return map;
}

double heatmap_mass_inside(const HeatMap& map, const Mask& mask) {
    if (mask.height() % map.height != 0 || mask.width() % map.width != 0) {
        throw ValidationError("heat map resolution does not divide the mask resolution");
    }
    const int fy = mask.height() / map.height;
    const int fx = mask.width() / map.width;
    double inside = 0.0;
    double total = 0.0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            const double v = map.values[static_cast<std::size_t>(y / fy) * map.width + x / fx];
            total += v;
            if (mask(y, x)) {
                inside += v;
            }
        }
    }
    return total > 0.0 ? inside / total : 0.0;
}

} // namespace svia::metrics
