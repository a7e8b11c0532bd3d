#include "svia/nn.hpp"

#include "svia/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace svia::nn {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

static_assert(std::endian::native == std::endian::little, "weight files assume a little-endian host");

void im2col(const Tensor& x, int kernel, int stride, int padding, int out_h, int out_w, std::vector<float>& cols) {
    const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
    cols.assign(static_cast<std::size_t>(x.channels) * kernel * kernel * n, 0.0f);
    float* dst = cols.data();
    for (int c = 0; c < x.channels; ++c) {
        const float* src = x.data.data() + c * x.plane();
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx, dst += n) {
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride - padding + ky;
                    if (iy < 0 || iy >= x.height) {
                        continue;
                    }
                    const float* row = src + static_cast<std::size_t>(iy) * x.width;
                    float* out_row = dst + static_cast<std::size_t>(oy) * out_w;
                    if (stride == 1) {
                        const int shift = kx - padding;
                        const int lo = std::max(0, -shift);
                        const int hi = std::min(out_w, x.width - shift);
                        if (hi > lo) {
                            std::memcpy(out_row + lo, row + lo + shift, sizeof(float) * (hi - lo));
                        }
                    } else {
                        for (int ox = 0; ox < out_w; ++ox) {
                            const int ix = ox * stride - padding + kx;
                            if (ix >= 0 && ix < x.width) {
                                out_row[ox] = row[ix];
                            }
                        }
                    }
                }
            }
        }
    }
}

void col2im(const std::vector<float>& cols, int kernel, int stride, int padding, int out_h, int out_w, Tensor& dx) {
    const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
    const float* src = cols.data();
    for (int c = 0; c < dx.channels; ++c) {
        float* dst = dx.data.data() + c * dx.plane();
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx, src += n) {
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride - padding + ky;
                    if (iy < 0 || iy >= dx.height) {
                        continue;
                    }
                    float* row = dst + static_cast<std::size_t>(iy) * dx.width;
                    const float* in_row = src + static_cast<std::size_t>(oy) * out_w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride - padding + kx;
                        if (ix >= 0 && ix < dx.width) {
                            row[ix] += in_row[ox];
                        }
                    }
                }
            }
        }
    }
}

} // namespace

int ParameterStore::add(std::string name, std::vector<int> shape) {
    std::size_t count = 1;
    for (int d : shape) {
        count *= static_cast<std::size_t>(d);
    }
    blocks_.push_back({std::move(name), std::move(shape), std::vector<float>(count, 0.0f)});
    return static_cast<int>(blocks_.size()) - 1;
}

std::size_t ParameterStore::total_values() const noexcept {
    std::size_t total = 0;
    for (const auto& b : blocks_) {
        total += b.values.size();
    }
    return total;
}

Gradients::Gradients(const ParameterStore& store) {
    for (const auto& b : store.blocks()) {
        blocks.emplace_back(b.values.size(), 0.0f);
    }
}

void Gradients::zero() {
    for (auto& b : blocks) {
        std::fill(b.begin(), b.end(), 0.0f);
    }
}

double Gradients::squared_norm() const {
    double total = 0.0;
    for (const auto& b : blocks) {
        for (float g : b) {
            total += static_cast<double>(g) * g;
        }
    }
    return total;
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels, int kernel,
               int stride, int padding)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride),
      padding_(padding < 0 ? kernel / 2 : padding) {
    weight_ = store.add(name + ".weight", {out_channels, in_channels, kernel, kernel});
    bias_ = store.add(name + ".bias", {out_channels});
}

void Conv2d::init(ParameterStore& store, RngStream& rng) const {
    const double std_dev = std::sqrt(2.0 / (in_ * kernel_ * kernel_));
    for (float& w : store.values(weight_)) {
        w = static_cast<float>(std_dev * rng.normal());
    }
    std::fill(store.values(bias_).begin(), store.values(bias_).end(), 0.0f);
}

Tensor Conv2d::forward(const ParameterStore& store, const Tensor& x, ConvCache* cache) const {
    if (x.channels != in_) {
        throw ValidationError("conv: expected " + std::to_string(in_) + " input channels, got " +
                              std::to_string(x.channels));
    }
    const int oh = out_size(x.height);
    const int ow = out_size(x.width);
    const int rows = in_ * kernel_ * kernel_;
    const int n = oh * ow;
    ConvCache local;
    ConvCache& c = cache ? *cache : local;
    im2col(x, kernel_, stride_, padding_, oh, ow, c.columns);
    c.in_height = x.height;
    c.in_width = x.width;

    Tensor y(out_, oh, ow);
    const ConstMatrixMap w(store.values(weight_).data(), out_, rows);
    const ConstMatrixMap cols(c.columns.data(), rows, n);
    MatrixMap out(y.data.data(), out_, n);
    out.noalias() = w * cols;
    const auto bias = store.values(bias_);
    for (int o = 0; o < out_; ++o) {
        out.row(o).array() += bias[o];
    }
    return y;
}

Tensor Conv2d::backward(const ParameterStore& store, const ConvCache& cache, const Tensor& grad_out, Gradients& grads,
                        bool need_input_grad) const {
    const int rows = in_ * kernel_ * kernel_;
    const int n = grad_out.height * grad_out.width;
    const ConstMatrixMap dy(grad_out.data.data(), out_, n);
    const ConstMatrixMap cols(cache.columns.data(), rows, n);
    MatrixMap dw(grads.values(weight_).data(), out_, rows);
    dw.noalias() += dy * cols.transpose();
    auto db = grads.values(bias_);
    // plain loop: Eigen's vectorized sum depends on the pointer's alignment
    for (int o = 0; o < out_; ++o) {
        const float* row = grad_out.data.data() + static_cast<std::size_t>(o) * n;
        float total = 0.0f;
        for (int k = 0; k < n; ++k) {
            total += row[k];
        }
        db[o] += total;
    }
    if (!need_input_grad) {
        return {};
    }
    std::vector<float> dcols(static_cast<std::size_t>(rows) * n);
    const ConstMatrixMap w(store.values(weight_).data(), out_, rows);
    MatrixMap dc(dcols.data(), rows, n);
    dc.noalias() = w.transpose() * dy;
    Tensor dx(in_, cache.in_height, cache.in_width);
    col2im(dcols, kernel_, stride_, padding_, grad_out.height, grad_out.width, dx);
    return dx;
}

Linear::Linear(ParameterStore& store, const std::string& name, int in_features, int out_features)
    : in_(in_features), out_(out_features) {
    weight_ = store.add(name + ".weight", {out_features, in_features});
    bias_ = store.add(name + ".bias", {out_features});
}

void Linear::init(ParameterStore& store, RngStream& rng) const {
    const double std_dev = std::sqrt(1.0 / in_);
    for (float& w : store.values(weight_)) {
        w = static_cast<float>(std_dev * rng.normal());
    }
    std::fill(store.values(bias_).begin(), store.values(bias_).end(), 0.0f);
}

std::vector<float> Linear::forward(const ParameterStore& store, std::span<const float> x) const {
    if (static_cast<int>(x.size()) != in_) {
        throw ValidationError("linear: input size mismatch");
    }
    const auto w = store.values(weight_);
    const auto b = store.values(bias_);
    std::vector<float> y(b.begin(), b.end());
    for (int o = 0; o < out_; ++o) {
        float acc = 0.0f;
        const float* row = w.data() + static_cast<std::size_t>(o) * in_;
        for (int i = 0; i < in_; ++i) {
            acc += row[i] * x[i];
        }
        y[o] += acc;
    }
    return y;
}

std::vector<float> Linear::backward(const ParameterStore& store, std::span<const float> input,
                                    std::span<const float> grad_out, Gradients& grads) const {
    const auto w = store.values(weight_);
    auto dw = grads.values(weight_);
    auto db = grads.values(bias_);
    std::vector<float> dx(static_cast<std::size_t>(in_), 0.0f);
    for (int o = 0; o < out_; ++o) {
        const float g = grad_out[o];
        db[o] += g;
        const std::size_t offset = static_cast<std::size_t>(o) * in_;
        for (int i = 0; i < in_; ++i) {
            dw[offset + i] += g * input[i];
            dx[i] += g * w[offset + i];
        }
    }
    return dx;
}

void relu_inplace(Tensor& x) {
    for (float& v : x.data) {
        v = v > 0.0f ? v : 0.0f;
    }
}

void relu_backward(const Tensor& activation, Tensor& grad) {
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
        if (!(activation.data[i] > 0.0f)) {
            grad.data[i] = 0.0f;
        }
    }
}

Tensor avg_pool2(const Tensor& x) {
    Tensor y(x.channels, x.height / 2, x.width / 2);
    for (int c = 0; c < x.channels; ++c) {
        for (int oy = 0; oy < y.height; ++oy) {
            for (int ox = 0; ox < y.width; ++ox) {
                y.at(c, oy, ox) = 0.25f * (x.at(c, 2 * oy, 2 * ox) + x.at(c, 2 * oy, 2 * ox + 1) +
                                           x.at(c, 2 * oy + 1, 2 * ox) + x.at(c, 2 * oy + 1, 2 * ox + 1));
            }
        }
    }
    return y;
}

Tensor avg_pool2_backward(const Tensor& grad_out, int in_height, int in_width) {
    Tensor dx(grad_out.channels, in_height, in_width);
    for (int c = 0; c < grad_out.channels; ++c) {
        for (int oy = 0; oy < grad_out.height; ++oy) {
            for (int ox = 0; ox < grad_out.width; ++ox) {
                const float g = 0.25f * grad_out.at(c, oy, ox);
                dx.at(c, 2 * oy, 2 * ox) = g;
                dx.at(c, 2 * oy, 2 * ox + 1) = g;
                dx.at(c, 2 * oy + 1, 2 * ox) = g;
                dx.at(c, 2 * oy + 1, 2 * ox + 1) = g;
            }
        }
    }
    return dx;
}

Tensor upsample2(const Tensor& x) {
    Tensor y(x.channels, x.height * 2, x.width * 2);
    for (int c = 0; c < y.channels; ++c) {
        for (int yy = 0; yy < y.height; ++yy) {
            for (int xx = 0; xx < y.width; ++xx) {
                y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
            }
        }
    }
    return y;
}

Tensor upsample2_backward(const Tensor& grad_out) {
    Tensor dx(grad_out.channels, grad_out.height / 2, grad_out.width / 2);
    for (int c = 0; c < grad_out.channels; ++c) {
        for (int yy = 0; yy < grad_out.height; ++yy) {
            for (int xx = 0; xx < grad_out.width; ++xx) {
                dx.at(c, yy / 2, xx / 2) += grad_out.at(c, yy, xx);
            }
        }
    }
    return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.height != b.height || a.width != b.width) {
        throw ValidationError("concat: spatial size mismatch");
    }
    Tensor y(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), y.data.begin());
    std::copy(b.data.begin(), b.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
    return y;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& grad, int first_channels) {
    Tensor a(first_channels, grad.height, grad.width);
    Tensor b(grad.channels - first_channels, grad.height, grad.width);
    const auto split = grad.data.begin() + static_cast<std::ptrdiff_t>(a.data.size());
    std::copy(grad.data.begin(), split, a.data.begin());
    std::copy(split, grad.data.end(), b.data.begin());
    return {std::move(a), std::move(b)};
}

void add_channel_bias(Tensor& x, std::span<const float> bias) {
    for (int c = 0; c < x.channels; ++c) {
        for (float& v : x.channel(c)) {
            v += bias[c];
        }
    }
}

std::vector<float> channel_bias_backward(const Tensor& grad) {
    std::vector<float> out(static_cast<std::size_t>(grad.channels), 0.0f);
    for (int c = 0; c < grad.channels; ++c) {
        double acc = 0.0;
        for (float v : grad.channel(c)) {
            acc += v;
        }
        out[c] = static_cast<float>(acc);
    }
    return out;
}

std::vector<float> global_avg_pool(const Tensor& x) {
    std::vector<float> out(static_cast<std::size_t>(x.channels));
    for (int c = 0; c < x.channels; ++c) {
        double acc = 0.0;
        for (float v : x.channel(c)) {
            acc += v;
        }
        out[c] = static_cast<float>(acc / static_cast<double>(x.plane()));
    }
    return out;
}

Tensor global_avg_pool_backward(std::span<const float> grad_out, int channels, int height, int width) {
    Tensor dx(channels, height, width);
    const float scale = 1.0f / static_cast<float>(height * width);
    for (int c = 0; c < channels; ++c) {
        std::fill(dx.channel(c).begin(), dx.channel(c).end(), grad_out[c] * scale);
    }
    return dx;
}

double pixel_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels, Tensor* grad) {
    const std::size_t plane = logits.plane();
    if (labels.size() != plane) {
        throw ValidationError("pixel cross-entropy: label size mismatch");
    }
    if (grad) {
        *grad = Tensor(logits.channels, logits.height, logits.width);
    }
    const int n = logits.channels;
    std::vector<double> probs(static_cast<std::size_t>(n));
    double total = 0.0;
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t p = 0; p < plane; ++p) {
        double max_logit = logits.data[p];
        for (int c = 1; c < n; ++c) {
            max_logit = std::max(max_logit, static_cast<double>(logits.data[c * plane + p]));
        }
        double sum = 0.0;
        for (int c = 0; c < n; ++c) {
            probs[c] = std::exp(logits.data[c * plane + p] - max_logit);
            sum += probs[c];
        }
        const int label = labels[p];
        total += -(logits.data[label * plane + p] - max_logit - std::log(sum));
        if (grad) {
            for (int c = 0; c < n; ++c) {
                grad->data[c * plane + p] = static_cast<float>((probs[c] / sum - (c == label ? 1.0 : 0.0)) * inv);
            }
        }
    }
    return total * inv;
}

double cross_entropy(std::span<const float> logits, int label, std::vector<float>* grad) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
        throw ValidationError("cross_entropy: label " + std::to_string(label) + " out of range");
    }
    double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (float l : logits) {
        sum += std::exp(l - max_logit);
    }
    if (grad) {
        grad->resize(logits.size());
        for (std::size_t c = 0; c < logits.size(); ++c) {
            (*grad)[c] = static_cast<float>(std::exp(logits[c] - max_logit) / sum - (static_cast<int>(c) == label));
        }
    }
    return -(logits[label] - max_logit - std::log(sum));
}

double mse(const Tensor& prediction, std::span<const float> target, Tensor* grad) {
    if (target.size() != prediction.data.size()) {
        throw ValidationError("mse: size mismatch");
    }
    if (grad) {
        *grad = Tensor(prediction.channels, prediction.height, prediction.width);
    }
    const double inv = 1.0 / static_cast<double>(target.size());
    double total = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double diff = static_cast<double>(prediction.data[i]) - target[i];
        total += diff * diff;
        if (grad) {
            grad->data[i] = static_cast<float>(2.0 * diff * inv);
        }
    }
    return total * inv;
}

Adam::Adam(const ParameterStore& store, AdamConfig config) : config_(config) {
    for (const auto& b : store.blocks()) {
        m_.emplace_back(b.values.size(), 0.0f);
        v_.emplace_back(b.values.size(), 0.0f);
    }
}

void Adam::step(ParameterStore& store, const Gradients& grads) {
    ++t_;
    double scale = 1.0;
    if (config_.clip_norm > 0.0) {
        const double norm = std::sqrt(grads.squared_norm());
        if (norm > config_.clip_norm) {
            scale = config_.clip_norm / norm;
        }
    }
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const double step = config_.learning_rate * std::sqrt(c2) / c1;
    for (std::size_t b = 0; b < m_.size(); ++b) {
        auto& values = store.blocks()[b].values;
        const auto& g = grads.blocks[b];
        auto& m = m_[b];
        auto& v = v_[b];
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double gi = g[i] * scale;
            m[i] = static_cast<float>(config_.beta1 * m[i] + (1.0 - config_.beta1) * gi);
            v[i] = static_cast<float>(config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi);
            values[i] -= static_cast<float>(step * m[i] / (std::sqrt(static_cast<double>(v[i])) + config_.epsilon));
        }
    }
}

void save_weights(const std::filesystem::path& path, const ParameterStore& store, nlohmann::json header) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : store.blocks()) {
        blocks.push_back({{"name", b.name}, {"shape", b.shape}});
    }
    header["blocks"] = blocks;
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write weights '" + path.string() + "'");
    }
    const std::uint64_t length = text.size();
    out.write(reinterpret_cast<const char*>(&length), sizeof(length));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& b : store.blocks()) {
        out.write(reinterpret_cast<const char*>(b.values.data()),
                  static_cast<std::streamsize>(b.values.size() * sizeof(float)));
    }
    if (!out) {
        throw IoError("short write on weights '" + path.string() + "'");
    }
}

namespace {

nlohmann::json read_header(std::ifstream& in, const std::filesystem::path& path) {
    std::uint64_t length = 0;
    in.read(reinterpret_cast<char*>(&length), sizeof(length));
    if (!in || length == 0 || length > (1u << 24)) {
        throw IoError("weights '" + path.string() + "': bad header length");
    }
    std::string text(length, '\0');
    in.read(text.data(), static_cast<std::streamsize>(length));
    if (!in) {
        throw IoError("weights '" + path.string() + "': truncated header");
    }
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("weights '" + path.string() + "': invalid JSON header: " + e.what());
    }
}

} // namespace

nlohmann::json read_weights_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open weights '" + path.string() + "'");
    }
    return read_header(in, path);
}

nlohmann::json load_weights(const std::filesystem::path& path, ParameterStore& store) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open weights '" + path.string() + "'");
    }
    nlohmann::json header = read_header(in, path);
    const auto& blocks = header.at("blocks");
    if (blocks.size() != store.blocks().size()) {
        throw IoError("weights '" + path.string() + "': block count does not match architecture");
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        auto& b = store.blocks()[i];
        if (blocks[i].at("name").get<std::string>() != b.name ||
            blocks[i].at("shape").get<std::vector<int>>() != b.shape) {
            throw IoError("weights '" + path.string() + "': block " + std::to_string(i) + " (" + b.name +
                          ") does not match architecture");
        }
        in.read(reinterpret_cast<char*>(b.values.data()), static_cast<std::streamsize>(b.values.size() * sizeof(float)));
        if (!in) {
            throw IoError("weights '" + path.string() + "': truncated parameter block " + b.name);
        }
    }
    return header;
}

} // namespace svia::nn
