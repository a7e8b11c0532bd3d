#pragma once

// Pluggable model interfaces for the anonymization pipeline and the small
// reference implementations trained on synthetic scenes.

#include "svia/image.hpp"
#include "svia/nn.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace svia::models {

/// Diffusion latent: C x h x w values in double precision.
struct Latent {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> values;

    Latent() = default;
    Latent(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w), values(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t size() const noexcept { return values.size(); }
    bool same_shape(const Latent& o) const noexcept {
        return channels == o.channels && height == o.height && width == o.width;
    }
    bool all_finite() const noexcept;
    bool operator==(const Latent&) const = default;
};

/// e_t, e_img, e_s and the mask at latent resolution.
struct ConditioningBundle {
    std::vector<float> text;
    Latent image;
    Latent mask;
    std::vector<float> step;
    /// Signal rate of the current step; the sampler fills it in.
    double alpha_bar = 0.0;
};

class SegmenterInterface {
public:
    virtual ~SegmenterInterface() = default;
    virtual int n_categories() const = 0;
    /// Per-pixel category scores, n x H x W.
    virtual nn::Tensor predict(const ImageTensor& x) const = 0;
};

class DenoiserInterface {
public:
    virtual ~DenoiserInterface() = default;
    /// Noise estimate with the same shape as y.
    virtual Latent predict_noise(const Latent& y, int step, const ConditioningBundle& cond) const = 0;
};

class CodecInterface {
public:
    virtual ~CodecInterface() = default;
    virtual Latent encode(const ImageTensor& x) const = 0;
    /// Output is clamped to [0, 1].
    virtual ImageTensor decode(const Latent& latent) const = 0;
    virtual int downsample_factor() const = 0;
    virtual int latent_channels() const = 0;
    virtual std::string id() const = 0;
    /// Bounds of valid clean latents, if the codec has them.
    virtual std::optional<std::pair<double, double>> latent_range() const { return std::nullopt; }
    /// Mask coverage fraction at latent resolution (1 x H/f x W/f).
    Latent downsample_mask(const Mask& mask) const;
};

class TextEncoderInterface {
public:
    virtual ~TextEncoderInterface() = default;
    virtual std::vector<float> encode(std::string_view prompt) const = 0;
    virtual int dimension() const = 0;
};

class StepEncoderInterface {
public:
    virtual ~StepEncoderInterface() = default;
    virtual std::vector<float> encode(int step, int total_steps) const = 0;
    virtual int dimension() const = 0;
};

/// Last-conv-stage activations and d(class score)/d(activations).
struct GradCamInputs {
    nn::Tensor activations;
    nn::Tensor gradients;
};

class CityClassifierInterface {
public:
    virtual ~CityClassifierInterface() = default;
    virtual int n_cities() const = 0;
    virtual std::vector<float> predict(const ImageTensor& x) const = 0;
    virtual nn::Tensor feature_maps(const ImageTensor& x) const = 0;
    virtual GradCamInputs class_gradients(const ImageTensor& x, int class_index) const = 0;
};

/// Backbone for FID/KID (pooled vector) and LPIPS (per-stage maps).
class FeatureExtractorInterface {
public:
    virtual ~FeatureExtractorInterface() = default;
    virtual std::string id() const = 0;
    virtual std::vector<nn::Tensor> stages(const ImageTensor& x) const = 0;
    virtual std::vector<float> features(const ImageTensor& x) const = 0;
};

class PersonEmbedderInterface {
public:
    virtual ~PersonEmbedderInterface() = default;
    virtual std::vector<float> embed(const ImageTensor& crop) const = 0;
};

// ---------------------------------------------------------------------------
// Training-free encoders and codecs

/// Flatten/reshape; decode(encode(x)) == x bit for bit.
class IdentityCodec final : public CodecInterface {
public:
    Latent encode(const ImageTensor& x) const override;
    ImageTensor decode(const Latent& latent) const override;
    int downsample_factor() const override { return 1; }
    int latent_channels() const override { return 3; }
    std::string id() const override { return "identity"; }
    std::optional<std::pair<double, double>> latent_range() const override { return std::pair{0.0, 1.0}; }
};

/// Seeded hashed bag of lowercase alphanumeric tokens, L2-normalized.
class HashedTextEncoder final : public TextEncoderInterface {
public:
    explicit HashedTextEncoder(int dimension = 8, std::uint64_t seed = 0x5EED7E47ULL)
        : dimension_(dimension), seed_(seed) {}
    std::vector<float> encode(std::string_view prompt) const override;
    int dimension() const override { return dimension_; }

private:
    int dimension_;
    std::uint64_t seed_;
};

/// Sinusoidal features of the step's position 1000 * step / total_steps.
class SinusoidalStepEncoder final : public StepEncoderInterface {
public:
    explicit SinusoidalStepEncoder(int dimension = 16) : dimension_(dimension) {}
    std::vector<float> encode(int step, int total_steps) const override;
    /// Same features for a continuous position in (0, 1].
    std::vector<float> encode_position(double tau) const;
    int dimension() const override { return dimension_; }

private:
    int dimension_;
};

// ---------------------------------------------------------------------------
// Trainable networks. Each exposes forward/backward for the training loops
// and save/load against the weight-file format.

struct WeightMetadata {
    std::uint64_t seed = 0;
    std::string training_config_hash;
};

class ConvSegmenter final : public SegmenterInterface {
public:
    static constexpr std::string_view kArchitecture = "conv_segmenter_v1";

    struct Cache;

    explicit ConvSegmenter(int n_categories = kNumCategories, int width = 16);

    void init(std::uint64_t seed);
    int n_categories() const override { return n_categories_; }
    nn::Tensor predict(const ImageTensor& x) const override;

    nn::Tensor forward(const ImageTensor& x, Cache* cache) const;
    void backward(const Cache& cache, const nn::Tensor& grad_logits, nn::Gradients& grads) const;

    nn::ParameterStore& parameters() noexcept { return store_; }
    const nn::ParameterStore& parameters() const noexcept { return store_; }

    void save(const std::filesystem::path& path, const WeightMetadata& meta) const;
    static ConvSegmenter load(const std::filesystem::path& path);

private:
    int n_categories_;
    int width_;
    nn::ParameterStore store_;
    nn::Conv2d enc1a_, enc1b_, enc2a_, enc2b_, dec1_, head_;
};

class ConvCityClassifier final : public CityClassifierInterface {
public:
    static constexpr std::string_view kArchitecture = "conv_city_classifier_v1";

    struct Cache;

    explicit ConvCityClassifier(int n_cities = 8, int width = 16);

    void init(std::uint64_t seed);
    int n_cities() const override { return n_cities_; }
    std::vector<float> predict(const ImageTensor& x) const override;
    nn::Tensor feature_maps(const ImageTensor& x) const override;
    GradCamInputs class_gradients(const ImageTensor& x, int class_index) const override;

    std::vector<float> forward(const ImageTensor& x, Cache* cache) const;
    /// Returns the gradient at the last conv stage (post-ReLU activations).
    nn::Tensor backward(const Cache& cache, std::span<const float> grad_logits, nn::Gradients& grads,
                        bool stop_at_last_stage = false) const;

    nn::ParameterStore& parameters() noexcept { return store_; }
    const nn::ParameterStore& parameters() const noexcept { return store_; }

    void save(const std::filesystem::path& path, const WeightMetadata& meta) const;
    static ConvCityClassifier load(const std::filesystem::path& path);

private:
    int n_cities_;
    int width_;
    nn::ParameterStore store_;
    nn::Conv2d c1_, c2_, c3_;
    nn::Linear fc_;
};

/// The network output is the velocity v = sqrt(abar) eps - sqrt(1 - abar) x0;
/// predict_noise converts it back to a noise estimate.
class UNetDenoiser final : public DenoiserInterface {
public:
    static constexpr std::string_view kArchitecture = "unet_denoiser_v2";

    struct Dims {
        int latent_channels = 3;
        int text_dim = 8;
        int step_dim = 16;
        int width = 16;
    };
    struct Cache;

    explicit UNetDenoiser(Dims dims);

    void init(std::uint64_t seed);
    Latent predict_noise(const Latent& y, int step, const ConditioningBundle& cond) const override;

    const Dims& dims() const noexcept { return dims_; }
    /// Raw velocity output.
    nn::Tensor forward(const Latent& y, const ConditioningBundle& cond, Cache* cache) const;
    void backward(const Cache& cache, const nn::Tensor& grad_out, nn::Gradients& grads) const;

    nn::ParameterStore& parameters() noexcept { return store_; }
    const nn::ParameterStore& parameters() const noexcept { return store_; }

    void save(const std::filesystem::path& path, const WeightMetadata& meta) const;
    static UNetDenoiser load(const std::filesystem::path& path);

private:
    Dims dims_;
    nn::ParameterStore store_;
    nn::Conv2d in0_, e0_, in1_, e1_, in2_, e2_, up1_, up0_, out_;
    nn::Linear step_proj_;
};

/// Small convolutional autoencoder: factor-2 downsampling to a
/// latent_channels x H/2 x W/2 latent.
class ConvAutoencoderCodec final : public CodecInterface {
public:
    static constexpr std::string_view kArchitecture = "conv_autoencoder_v1";

    struct Cache;

    explicit ConvAutoencoderCodec(int latent_channels = 6, int width = 24);

    void init(std::uint64_t seed);
    Latent encode(const ImageTensor& x) const override;
    ImageTensor decode(const Latent& latent) const override;
    int downsample_factor() const override { return 2; }
    int latent_channels() const override { return latent_channels_; }
    std::string id() const override { return std::string(kArchitecture); }

    /// Unclamped reconstruction for training.
    nn::Tensor forward(const ImageTensor& x, Cache* cache) const;
    void backward(const Cache& cache, const nn::Tensor& grad_out, nn::Gradients& grads) const;

    nn::ParameterStore& parameters() noexcept { return store_; }
    const nn::ParameterStore& parameters() const noexcept { return store_; }

    void save(const std::filesystem::path& path, const WeightMetadata& meta) const;
    static ConvAutoencoderCodec load(const std::filesystem::path& path);

private:
    nn::Tensor decode_tensor(const nn::Tensor& latent, std::vector<nn::ConvCache>* caches,
                             std::vector<nn::Tensor>* acts) const;

    int latent_channels_;
    int width_;
    nn::ParameterStore store_;
    nn::Conv2d enc1_, enc2_, enc3_, dec1_, dec2_, dec3_;
};

/// Three conv stages (full, 1/2, 1/4 resolution); features are the
/// concatenated per-stage channel means. Random seeded weights by default.
class ConvFeatureExtractor final : public FeatureExtractorInterface {
public:
    static constexpr std::string_view kArchitecture = "conv_feature_extractor_v1";

    explicit ConvFeatureExtractor(std::uint64_t seed = 7, int n_classes = 8);

    std::string id() const override { return id_; }
    std::vector<nn::Tensor> stages(const ImageTensor& x) const override;
    std::vector<float> features(const ImageTensor& x) const override;

    /// Optional city-classification head used only when training the backbone.
    std::vector<float> head_forward(const ImageTensor& x, std::vector<nn::ConvCache>& caches,
                                    std::vector<nn::Tensor>& acts) const;
    void head_backward(const std::vector<nn::ConvCache>& caches, const std::vector<nn::Tensor>& acts,
                       std::span<const float> grad_logits, nn::Gradients& grads) const;
    void mark_trained(const std::string& training_hash);

    nn::ParameterStore& parameters() noexcept { return store_; }
    const nn::ParameterStore& parameters() const noexcept { return store_; }

    void save(const std::filesystem::path& path, const WeightMetadata& meta) const;
    static ConvFeatureExtractor load(const std::filesystem::path& path);

private:
    std::uint64_t seed_;
    std::string id_;
    nn::ParameterStore store_;
    nn::Conv2d s1_, s2_, s3_;
    nn::Linear head_;
};

/// Fixed random linear projection of a mean-centred 32 x 32 crop.
class RandomProjectionEmbedder final : public PersonEmbedderInterface {
public:
    explicit RandomProjectionEmbedder(std::uint64_t seed = 11);
    std::vector<float> embed(const ImageTensor& crop) const override;

private:
    nn::ParameterStore store_;
    nn::Conv2d projection_;
};

// Forward caches for the training loops.

struct ConvSegmenter::Cache {
    nn::ConvCache k1a, k1b, k2a, k2b, kd, kh;
    nn::Tensor a1a, a1b, a2a, a2b, d1;
};

struct ConvCityClassifier::Cache {
    nn::ConvCache k1, k2, k3;
    nn::Tensor a1, a2, a3;
    std::vector<float> pooled;
};

struct UNetDenoiser::Cache {
    nn::ConvCache k_in0, k_e0, k_in1, k_e1, k_in2, k_e2, k_up1, k_up0, k_out;
    nn::Tensor a0a, a0b, a1a, a1b, a2a, a2b, d1, d0;
    std::vector<float> step;
};

struct ConvAutoencoderCodec::Cache {
    std::vector<nn::ConvCache> enc{3};
    std::vector<nn::ConvCache> dec{3};
    nn::Tensor e1, e2;
    std::vector<nn::Tensor> dec_acts;
};

/// One-hot masks from the per-pixel argmax of the segmenter's scores.
MaskSet segment(const SegmenterInterface& model, const ImageTensor& x);

/// Architecture id stored in a weight file's header.
std::string weight_architecture(const std::filesystem::path& path);

nn::Tensor image_to_tensor(const ImageTensor& x, float offset = 0.0f);
Latent tensor_to_latent(const nn::Tensor& t);
nn::Tensor latent_to_tensor(const Latent& l);

} // namespace svia::models
