#pragma once

// Minimal CPU layer library for the desk-scale models.
//
// Weights live in a ParameterStore and are never mutated by inference, so a
// loaded network can be shared read-only across threads. Training passes an
// explicit cache object through forward() and accumulates into a separate
// Gradients object in backward().

#include "svia/rng.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace svia::nn {

/// Single-sample C x H x W activation.
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Tensor() = default;
    Tensor(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const noexcept { return data.size(); }
    std::span<float> channel(int c) { return {data.data() + c * plane(), plane()}; }
    std::span<const float> channel(int c) const { return {data.data() + c * plane(), plane()}; }
    float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

struct ParameterBlock {
    std::string name;
    std::vector<int> shape;
    std::vector<float> values;
};

class ParameterStore {
public:
    /// Declares a zero-initialized block; returns its index.
    int add(std::string name, std::vector<int> shape);

    ParameterBlock& block(int index) { return blocks_.at(static_cast<std::size_t>(index)); }
    const ParameterBlock& block(int index) const { return blocks_.at(static_cast<std::size_t>(index)); }
    std::span<float> values(int index) { return block(index).values; }
    std::span<const float> values(int index) const { return block(index).values; }

    std::vector<ParameterBlock>& blocks() noexcept { return blocks_; }
    const std::vector<ParameterBlock>& blocks() const noexcept { return blocks_; }
    std::size_t total_values() const noexcept;

private:
    std::vector<ParameterBlock> blocks_;
};

struct Gradients {
    std::vector<std::vector<float>> blocks;

    Gradients() = default;
    explicit Gradients(const ParameterStore& store);
    std::span<float> values(int index) { return blocks.at(static_cast<std::size_t>(index)); }
    void zero();
    double squared_norm() const;
};

struct ConvCache {
    std::vector<float> columns;
    int in_height = 0;
    int in_width = 0;
};

class Conv2d {
public:
    Conv2d() = default;
    /// padding < 0 selects kernel / 2.
    Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels, int kernel,
           int stride = 1, int padding = -1);

    /// He-normal weights, zero bias.
    void init(ParameterStore& store, RngStream& rng) const;
    Tensor forward(const ParameterStore& store, const Tensor& x, ConvCache* cache = nullptr) const;
    /// Returns dL/dx; skipped (empty tensor) when need_input_grad is false.
    Tensor backward(const ParameterStore& store, const ConvCache& cache, const Tensor& grad_out, Gradients& grads,
                    bool need_input_grad = true) const;

    int in_channels() const noexcept { return in_; }
    int out_channels() const noexcept { return out_; }
    int weight_index() const noexcept { return weight_; }
    int bias_index() const noexcept { return bias_; }

private:
    int out_size(int n) const noexcept { return (n + 2 * padding_ - kernel_) / stride_ + 1; }

    int weight_ = -1;
    int bias_ = -1;
    int in_ = 0;
    int out_ = 0;
    int kernel_ = 1;
    int stride_ = 1;
    int padding_ = 0;
};

class Linear {
public:
    Linear() = default;
    Linear(ParameterStore& store, const std::string& name, int in_features, int out_features);

    void init(ParameterStore& store, RngStream& rng) const;
    std::vector<float> forward(const ParameterStore& store, std::span<const float> x) const;
    /// Accumulates weight gradients; returns dL/dx.
    std::vector<float> backward(const ParameterStore& store, std::span<const float> input,
                                std::span<const float> grad_out, Gradients& grads) const;

    int in_features() const noexcept { return in_; }
    int out_features() const noexcept { return out_; }

private:
    int weight_ = -1;
    int bias_ = -1;
    int in_ = 0;
    int out_ = 0;
};

// Stateless ops. Backward functions take what the forward pass produced.

void relu_inplace(Tensor& x);
/// grad *= (activation > 0)
void relu_backward(const Tensor& activation, Tensor& grad);

Tensor avg_pool2(const Tensor& x);
Tensor avg_pool2_backward(const Tensor& grad_out, int in_height, int in_width);
Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& grad_out);

Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Splits a gradient of concat_channels(a, b) into its two parts.
std::pair<Tensor, Tensor> split_channels(const Tensor& grad, int first_channels);

/// y[c, :, :] += bias[c]
void add_channel_bias(Tensor& x, std::span<const float> bias);
/// d(bias)[c] = sum over pixels of grad[c]
std::vector<float> channel_bias_backward(const Tensor& grad);

std::vector<float> global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(std::span<const float> grad_out, int channels, int height, int width);

/// Mean cross-entropy over pixels of per-pixel logits (n x H x W) against
/// labels; writes dL/dlogits into grad when non-null.
double pixel_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels, Tensor* grad);
/// Cross-entropy of one logit vector; writes dL/dlogits when non-null.
double cross_entropy(std::span<const float> logits, int label, std::vector<float>* grad);
/// Mean squared error; writes dL/dprediction when non-null.
double mse(const Tensor& prediction, std::span<const float> target, Tensor* grad);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// Global-norm clip; <= 0 disables.
    double clip_norm = 0.0;
};

class Adam {
public:
    Adam(const ParameterStore& store, AdamConfig config);
    /// One update using grads (already averaged over the minibatch).
    void step(ParameterStore& store, const Gradients& grads);
    void set_learning_rate(double lr) noexcept { config_.learning_rate = lr; }

private:
    AdamConfig config_;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
    long long t_ = 0;
};

/// Binary weight file: little-endian u64 header length, JSON header, then
/// raw little-endian float32 blocks in declaration order. The header always
/// carries a "blocks" list of {name, shape}.
void save_weights(const std::filesystem::path& path, const ParameterStore& store, nlohmann::json header);
/// Reads a weight file into a store whose blocks were already declared by the
/// architecture; names and shapes must match. Returns the JSON header.
nlohmann::json load_weights(const std::filesystem::path& path, ParameterStore& store);
/// Header only, for dispatching on "architecture".
nlohmann::json read_weights_header(const std::filesystem::path& path);

} // namespace svia::nn
