#include "svia/models.hpp"

#include "svia/config.hpp"
#include "svia/errors.hpp"
#include "svia/image_ops.hpp"
#include "svia/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace svia::models {

using nn::Tensor;

namespace {

nlohmann::json make_header(std::string_view architecture, nlohmann::json dims, const WeightMetadata& meta) {
    return {{"architecture", architecture},
            {"dims", std::move(dims)},
            {"seed", meta.seed},
            {"training_config_hash", meta.training_config_hash}};
}

void expect_architecture(const nlohmann::json& header, std::string_view architecture,
                         const std::filesystem::path& path) {
    if (header.value("architecture", std::string{}) != architecture) {
        throw IoError("weights '" + path.string() + "' hold architecture '" +
                      header.value("architecture", std::string{"?"}) + "', expected '" + std::string(architecture) +
                      "'");
    }
}

Tensor relu(Tensor t) {
    nn::relu_inplace(t);
    return t;
}

void add_into(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.data.size(); ++i) {
        dst.data[i] += src.data[i];
    }
}

} // namespace

bool Latent::all_finite() const noexcept {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

Tensor image_to_tensor(const ImageTensor& x, float offset) {
    Tensor t(3, x.height(), x.width());
    const auto data = x.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        t.data[i] = data[i] + offset;
    }
    return t;
}

Latent tensor_to_latent(const Tensor& t) {
    Latent l(t.channels, t.height, t.width);
    std::copy(t.data.begin(), t.data.end(), l.values.begin());
    return l;
}

Tensor latent_to_tensor(const Latent& l) {
    Tensor t(l.channels, l.height, l.width);
    for (std::size_t i = 0; i < l.values.size(); ++i) {
        t.data[i] = static_cast<float>(l.values[i]);
    }
    return t;
}

MaskSet segment(const SegmenterInterface& model, const ImageTensor& x) {
    const Tensor scores = model.predict(x);
    if (scores.channels != model.n_categories() || scores.height != x.height() || scores.width != x.width()) {
        throw ValidationError("segmenter output does not match the input dimensions");
    }
    for (float v : scores.data) {
        if (!std::isfinite(v)) {
            throw NumericError("segmenter produced non-finite scores");
        }
    }
    const LabelMap labels = argmax_labels(scores.data, scores.channels, scores.height, scores.width);
    std::vector<std::string> names = category_names();
    names.resize(static_cast<std::size_t>(scores.channels));
    for (int i = kNumCategories; i < scores.channels; ++i) {
        names[static_cast<std::size_t>(i)] = "class_" + std::to_string(i);
    }
    return extract_masks(labels, scores.channels, names);
}

std::string weight_architecture(const std::filesystem::path& path) {
    return nn::read_weights_header(path).value("architecture", std::string{});
}

// ---------------------------------------------------------------------------

Latent CodecInterface::downsample_mask(const Mask& mask) const {
    const int f = downsample_factor();
    if (mask.height() % f != 0 || mask.width() % f != 0) {
        throw ValidationError("mask dimensions not divisible by codec factor");
    }
    Latent out(1, mask.height() / f, mask.width() / f);
    const double inv = 1.0 / (f * f);
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            out.values[static_cast<std::size_t>(y / f) * out.width + x / f] += mask(y, x) * inv;
        }
    }
    return out;
}

Latent IdentityCodec::encode(const ImageTensor& x) const {
    Latent l(3, x.height(), x.width());
    const auto data = x.data();
    std::copy(data.begin(), data.end(), l.values.begin());
    return l;
}

ImageTensor IdentityCodec::decode(const Latent& latent) const {
    if (latent.channels != 3) {
        throw ValidationError("identity codec: latent must have 3 channels");
    }
    std::vector<float> data(latent.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double v = latent.values[i];
        data[i] = static_cast<float>(std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0));
    }
    return ImageTensor(latent.height, latent.width, std::move(data));
}

std::vector<float> HashedTextEncoder::encode(std::string_view prompt) const {
    std::vector<double> acc(static_cast<std::size_t>(dimension_), 0.0);
    std::string token;
    auto flush = [&] {
        if (token.empty()) {
            return;
        }
        const CounterRng rng(fnv1a64(token) ^ seed_, 0x544F4BULL);
        for (int j = 0; j < dimension_; ++j) {
            acc[j] += rng.normal(static_cast<std::uint64_t>(j));
        }
        token.clear();
    };
    for (char ch : prompt) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            token.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
        }
    }
    flush();
    double norm = 0.0;
    for (double v : acc) {
        norm += v * v;
    }
    norm = std::sqrt(norm);
    std::vector<float> out(acc.size(), 0.0f);
    if (norm > 0.0) {
        for (std::size_t j = 0; j < acc.size(); ++j) {
            out[j] = static_cast<float>(acc[j] / norm);
        }
    }
    return out;
}

std::vector<float> SinusoidalStepEncoder::encode(int step, int total_steps) const {
    if (total_steps < 1 || step < 1 || step > total_steps) {
        throw ValidationError("step encoder: step " + std::to_string(step) + " outside [1, " +
                              std::to_string(total_steps) + "]");
    }
    return encode_position(static_cast<double>(step) / total_steps);
}

std::vector<float> SinusoidalStepEncoder::encode_position(double tau) const {
    const double position = 1000.0 * tau;
    const int half = dimension_ / 2;
    std::vector<float> out(static_cast<std::size_t>(dimension_), 0.0f);
    for (int k = 0; k < half; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(k) / half);
        out[k] = static_cast<float>(std::sin(position * freq));
        out[k + half] = static_cast<float>(std::cos(position * freq));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Segmenter: two-level encoder-decoder with one skip connection.

ConvSegmenter::ConvSegmenter(int n_categories, int width) : n_categories_(n_categories), width_(width) {
    enc1a_ = nn::Conv2d(store_, "enc1a", 3, width, 3);
    enc1b_ = nn::Conv2d(store_, "enc1b", width, width, 3);
    enc2a_ = nn::Conv2d(store_, "enc2a", width, 2 * width, 3);
    enc2b_ = nn::Conv2d(store_, "enc2b", 2 * width, 2 * width, 3);
    dec1_ = nn::Conv2d(store_, "dec1", 3 * width, width, 3);
    head_ = nn::Conv2d(store_, "head", width, n_categories, 1);
}

void ConvSegmenter::init(std::uint64_t seed) {
    RngStream rng(seed, 0x5E6);
    for (const auto* conv : {&enc1a_, &enc1b_, &enc2a_, &enc2b_, &dec1_, &head_}) {
        conv->init(store_, rng);
    }
}

Tensor ConvSegmenter::forward(const ImageTensor& x, Cache* cache) const {
    if (x.height() % 2 != 0 || x.width() % 2 != 0) {
        throw ValidationError("segmenter: image dimensions must be even");
    }
    Cache local;
    Cache& c = cache ? *cache : local;
    c.a1a = relu(enc1a_.forward(store_, image_to_tensor(x, -0.5f), &c.k1a));
    c.a1b = relu(enc1b_.forward(store_, c.a1a, &c.k1b));
    c.a2a = relu(enc2a_.forward(store_, nn::avg_pool2(c.a1b), &c.k2a));
    c.a2b = relu(enc2b_.forward(store_, c.a2a, &c.k2b));
    c.d1 = relu(dec1_.forward(store_, nn::concat_channels(c.a1b, nn::upsample2(c.a2b)), &c.kd));
    return head_.forward(store_, c.d1, &c.kh);
}

void ConvSegmenter::backward(const Cache& c, const Tensor& grad_logits, nn::Gradients& grads) const {
    Tensor g = head_.backward(store_, c.kh, grad_logits, grads);
    nn::relu_backward(c.d1, g);
    auto [skip, up] = nn::split_channels(dec1_.backward(store_, c.kd, g, grads), width_);
    g = nn::upsample2_backward(up);
    nn::relu_backward(c.a2b, g);
    g = enc2b_.backward(store_, c.k2b, g, grads);
    nn::relu_backward(c.a2a, g);
    g = nn::avg_pool2_backward(enc2a_.backward(store_, c.k2a, g, grads), c.a1b.height, c.a1b.width);
    add_into(g, skip);
    nn::relu_backward(c.a1b, g);
    g = enc1b_.backward(store_, c.k1b, g, grads);
    nn::relu_backward(c.a1a, g);
    enc1a_.backward(store_, c.k1a, g, grads, false);
}

Tensor ConvSegmenter::predict(const ImageTensor& x) const { return forward(x, nullptr); }

void ConvSegmenter::save(const std::filesystem::path& path, const WeightMetadata& meta) const {
    nn::save_weights(path, store_,
                     make_header(kArchitecture, {{"n_categories", n_categories_}, {"width", width_}}, meta));
}

ConvSegmenter ConvSegmenter::load(const std::filesystem::path& path) {
    const auto header = nn::read_weights_header(path);
    expect_architecture(header, kArchitecture, path);
    ConvSegmenter model(header["dims"].at("n_categories").get<int>(), header["dims"].at("width").get<int>());
    nn::load_weights(path, model.store_);
    return model;
}

// ---------------------------------------------------------------------------
// City classifier: three conv stages, global average pool, linear head.

ConvCityClassifier::ConvCityClassifier(int n_cities, int width) : n_cities_(n_cities), width_(width) {
    c1_ = nn::Conv2d(store_, "c1", 3, width, 3);
    c2_ = nn::Conv2d(store_, "c2", width, 2 * width, 3);
    c3_ = nn::Conv2d(store_, "c3", 2 * width, 2 * width, 3);
    fc_ = nn::Linear(store_, "fc", 2 * width, n_cities);
}

void ConvCityClassifier::init(std::uint64_t seed) {
    RngStream rng(seed, 0xC17);
    c1_.init(store_, rng);
    c2_.init(store_, rng);
    c3_.init(store_, rng);
    fc_.init(store_, rng);
}

std::vector<float> ConvCityClassifier::forward(const ImageTensor& x, Cache* cache) const {
    if (x.height() % 4 != 0 || x.width() % 4 != 0) {
        throw ValidationError("city classifier: image dimensions must be divisible by 4");
    }
    Cache local;
    Cache& c = cache ? *cache : local;
    c.a1 = relu(c1_.forward(store_, image_to_tensor(x, -0.5f), &c.k1));
    c.a2 = relu(c2_.forward(store_, nn::avg_pool2(c.a1), &c.k2));
    c.a3 = relu(c3_.forward(store_, nn::avg_pool2(c.a2), &c.k3));
    c.pooled = nn::global_avg_pool(c.a3);
    return fc_.forward(store_, c.pooled);
}

Tensor ConvCityClassifier::backward(const Cache& c, std::span<const float> grad_logits, nn::Gradients& grads,
                                    bool stop_at_last_stage) const {
    const auto dpooled = fc_.backward(store_, c.pooled, grad_logits, grads);
    Tensor d3 = nn::global_avg_pool_backward(dpooled, c.a3.channels, c.a3.height, c.a3.width);
    if (stop_at_last_stage) {
        return d3;
    }
    Tensor g = d3;
    nn::relu_backward(c.a3, g);
    g = nn::avg_pool2_backward(c3_.backward(store_, c.k3, g, grads), c.a2.height, c.a2.width);
    nn::relu_backward(c.a2, g);
    g = nn::avg_pool2_backward(c2_.backward(store_, c.k2, g, grads), c.a1.height, c.a1.width);
    nn::relu_backward(c.a1, g);
    c1_.backward(store_, c.k1, g, grads, false);
    return d3;
}

std::vector<float> ConvCityClassifier::predict(const ImageTensor& x) const { return forward(x, nullptr); }

Tensor ConvCityClassifier::feature_maps(const ImageTensor& x) const {
    Cache c;
    forward(x, &c);
    return c.a3;
}

GradCamInputs ConvCityClassifier::class_gradients(const ImageTensor& x, int class_index) const {
    if (class_index < 0 || class_index >= n_cities_) {
        throw ValidationError("grad-cam: class index out of range");
    }
    Cache c;
    const auto logits = forward(x, &c);
    std::vector<float> onehot(logits.size(), 0.0f);
    onehot[class_index] = 1.0f;
    nn::Gradients scratch(store_);
    Tensor grad = backward(c, onehot, scratch, true);
    return {std::move(c.a3), std::move(grad)};
}

void ConvCityClassifier::save(const std::filesystem::path& path, const WeightMetadata& meta) const {
    nn::save_weights(path, store_, make_header(kArchitecture, {{"n_cities", n_cities_}, {"width", width_}}, meta));
}

ConvCityClassifier ConvCityClassifier::load(const std::filesystem::path& path) {
    const auto header = nn::read_weights_header(path);
    expect_architecture(header, kArchitecture, path);
    ConvCityClassifier model(header["dims"].at("n_cities").get<int>(), header["dims"].at("width").get<int>());
    nn::load_weights(path, model.store_);
    return model;
}

// ---------------------------------------------------------------------------
// Denoiser: three-level UNet. Conditioning enters by channel concatenation
// (latent, encoded masked image, mask, broadcast text embedding); the step
// embedding is projected to per-channel biases on each encoder level.

UNetDenoiser::UNetDenoiser(Dims dims) : dims_(dims) {
    const int w = dims.width;
    const int in_channels = 2 * dims.latent_channels + 1 + dims.text_dim;
    in0_ = nn::Conv2d(store_, "in0", in_channels, w, 3);
    e0_ = nn::Conv2d(store_, "e0", w, w, 3);
    in1_ = nn::Conv2d(store_, "in1", w, 2 * w, 3);
    e1_ = nn::Conv2d(store_, "e1", 2 * w, 2 * w, 3);
    in2_ = nn::Conv2d(store_, "in2", 2 * w, 2 * w, 3);
    e2_ = nn::Conv2d(store_, "e2", 2 * w, 2 * w, 3);
    up1_ = nn::Conv2d(store_, "up1", 4 * w, 2 * w, 3);
    up0_ = nn::Conv2d(store_, "up0", 3 * w, w, 3);
    out_ = nn::Conv2d(store_, "out", w, dims.latent_channels, 3);
    step_proj_ = nn::Linear(store_, "step_proj", dims.step_dim, 5 * w);
}

void UNetDenoiser::init(std::uint64_t seed) {
    RngStream rng(seed, 0xD3);
    for (const auto* conv : {&in0_, &e0_, &in1_, &e1_, &in2_, &e2_, &up1_, &up0_, &out_}) {
        conv->init(store_, rng);
    }
    step_proj_.init(store_, rng);
}

Tensor UNetDenoiser::forward(const Latent& y, const ConditioningBundle& cond, Cache* cache) const {
    const int lc = dims_.latent_channels;
    if (y.channels != lc || !cond.image.same_shape(y) || cond.mask.channels != 1 ||
        cond.mask.height != y.height || cond.mask.width != y.width) {
        throw ValidationError("denoiser: latent/conditioning shape mismatch");
    }
    if (static_cast<int>(cond.text.size()) != dims_.text_dim || static_cast<int>(cond.step.size()) != dims_.step_dim) {
        throw ValidationError("denoiser: embedding dimension mismatch");
    }
    if (y.height % 4 != 0 || y.width % 4 != 0) {
        throw ValidationError("denoiser: latent spatial size must be divisible by 4");
    }
    Cache local;
    Cache& c = cache ? *cache : local;
    const int w = dims_.width;

    Tensor input(2 * lc + 1 + dims_.text_dim, y.height, y.width);
    const std::size_t plane = input.plane();
    for (std::size_t i = 0; i < y.size(); ++i) {
        input.data[i] = static_cast<float>(y.values[i]);
        input.data[y.size() + i] = static_cast<float>(cond.image.values[i]);
    }
    for (std::size_t p = 0; p < plane; ++p) {
        input.data[2 * y.size() + p] = static_cast<float>(cond.mask.values[p]);
    }
    for (int t = 0; t < dims_.text_dim; ++t) {
        auto ch = input.channel(2 * lc + 1 + t);
        std::fill(ch.begin(), ch.end(), cond.text[t]);
    }

    c.step = cond.step;
    const auto bias = step_proj_.forward(store_, c.step);
    const std::span<const float> b0(bias.data(), w);
    const std::span<const float> b1(bias.data() + w, 2 * w);
    const std::span<const float> b2(bias.data() + 3 * w, 2 * w);

    c.a0a = in0_.forward(store_, input, &c.k_in0);
    nn::add_channel_bias(c.a0a, b0);
    nn::relu_inplace(c.a0a);
    c.a0b = relu(e0_.forward(store_, c.a0a, &c.k_e0));

    c.a1a = in1_.forward(store_, nn::avg_pool2(c.a0b), &c.k_in1);
    nn::add_channel_bias(c.a1a, b1);
    nn::relu_inplace(c.a1a);
    c.a1b = relu(e1_.forward(store_, c.a1a, &c.k_e1));

    c.a2a = in2_.forward(store_, nn::avg_pool2(c.a1b), &c.k_in2);
    nn::add_channel_bias(c.a2a, b2);
    nn::relu_inplace(c.a2a);
    c.a2b = relu(e2_.forward(store_, c.a2a, &c.k_e2));

    c.d1 = relu(up1_.forward(store_, nn::concat_channels(nn::upsample2(c.a2b), c.a1b), &c.k_up1));
    c.d0 = relu(up0_.forward(store_, nn::concat_channels(nn::upsample2(c.d1), c.a0b), &c.k_up0));
    return out_.forward(store_, c.d0, &c.k_out);
}

void UNetDenoiser::backward(const Cache& c, const Tensor& grad_out, nn::Gradients& grads) const {
    const int w = dims_.width;
    Tensor g = out_.backward(store_, c.k_out, grad_out, grads);
    nn::relu_backward(c.d0, g);
    auto [up0, skip0] = nn::split_channels(up0_.backward(store_, c.k_up0, g, grads), 2 * w);
    g = nn::upsample2_backward(up0);
    nn::relu_backward(c.d1, g);
    auto [up1, skip1] = nn::split_channels(up1_.backward(store_, c.k_up1, g, grads), 2 * w);
    g = nn::upsample2_backward(up1);

    nn::relu_backward(c.a2b, g);
    g = e2_.backward(store_, c.k_e2, g, grads);
    nn::relu_backward(c.a2a, g);
    const auto db2 = nn::channel_bias_backward(g);
    g = nn::avg_pool2_backward(in2_.backward(store_, c.k_in2, g, grads), c.a1b.height, c.a1b.width);
    add_into(g, skip1);

    nn::relu_backward(c.a1b, g);
    g = e1_.backward(store_, c.k_e1, g, grads);
    nn::relu_backward(c.a1a, g);
    const auto db1 = nn::channel_bias_backward(g);
    g = nn::avg_pool2_backward(in1_.backward(store_, c.k_in1, g, grads), c.a0b.height, c.a0b.width);
    add_into(g, skip0);

    nn::relu_backward(c.a0b, g);
    g = e0_.backward(store_, c.k_e0, g, grads);
    nn::relu_backward(c.a0a, g);
    const auto db0 = nn::channel_bias_backward(g);
    in0_.backward(store_, c.k_in0, g, grads, false);

    std::vector<float> dbias;
    dbias.reserve(static_cast<std::size_t>(5 * w));
    dbias.insert(dbias.end(), db0.begin(), db0.end());
    dbias.insert(dbias.end(), db1.begin(), db1.end());
    dbias.insert(dbias.end(), db2.begin(), db2.end());
    step_proj_.backward(store_, c.step, dbias, grads);
}

Latent UNetDenoiser::predict_noise(const Latent& y, int /*step*/, const ConditioningBundle& cond) const {
    if (!y.all_finite()) {
        throw NumericError("denoiser: non-finite latent");
    }
    const double abar = cond.alpha_bar;
    if (!(abar > 0.0 && abar <= 1.0)) {
        throw ValidationError("denoiser: alpha_bar must lie in (0, 1]");
    }
    Latent eps = tensor_to_latent(forward(y, cond, nullptr));
    const double a = std::sqrt(abar);
    const double b = std::sqrt(1.0 - abar);
    for (std::size_t i = 0; i < eps.size(); ++i) {
        eps.values[i] = b * y.values[i] + a * eps.values[i];
    }
    return eps;
}

void UNetDenoiser::save(const std::filesystem::path& path, const WeightMetadata& meta) const {
    nn::save_weights(path, store_,
                     make_header(kArchitecture,
                                 {{"latent_channels", dims_.latent_channels},
                                  {"text_dim", dims_.text_dim},
                                  {"step_dim", dims_.step_dim},
                                  {"width", dims_.width}},
                                 meta));
}

UNetDenoiser UNetDenoiser::load(const std::filesystem::path& path) {
    const auto header = nn::read_weights_header(path);
    expect_architecture(header, kArchitecture, path);
    const auto& d = header.at("dims");
    UNetDenoiser model(Dims{d.at("latent_channels").get<int>(), d.at("text_dim").get<int>(),
                            d.at("step_dim").get<int>(), d.at("width").get<int>()});
    nn::load_weights(path, model.store_);
    return model;
}

// ---------------------------------------------------------------------------
// Autoencoder codec.

ConvAutoencoderCodec::ConvAutoencoderCodec(int latent_channels, int width)
    : latent_channels_(latent_channels), width_(width) {
    enc1_ = nn::Conv2d(store_, "enc1", 3, width, 3);
    enc2_ = nn::Conv2d(store_, "enc2", width, width, 3, 2);
    enc3_ = nn::Conv2d(store_, "enc3", width, latent_channels, 3);
    dec1_ = nn::Conv2d(store_, "dec1", latent_channels, width, 3);
    dec2_ = nn::Conv2d(store_, "dec2", width, width, 3);
    dec3_ = nn::Conv2d(store_, "dec3", width, 3, 3);
}

void ConvAutoencoderCodec::init(std::uint64_t seed) {
    RngStream rng(seed, 0xAE);
    for (const auto* conv : {&enc1_, &enc2_, &enc3_, &dec1_, &dec2_, &dec3_}) {
        conv->init(store_, rng);
    }
}

Tensor ConvAutoencoderCodec::decode_tensor(const Tensor& latent, std::vector<nn::ConvCache>* caches,
                                           std::vector<Tensor>* acts) const {
    nn::ConvCache* k = caches ? caches->data() : nullptr;
    Tensor d1 = relu(dec1_.forward(store_, nn::upsample2(latent), k ? &k[0] : nullptr));
    Tensor d2 = relu(dec2_.forward(store_, d1, k ? &k[1] : nullptr));
    Tensor out = dec3_.forward(store_, d2, k ? &k[2] : nullptr);
    for (float& v : out.data) {
        v += 0.5f;
    }
    if (acts) {
        *acts = {std::move(d1), std::move(d2)};
    }
    return out;
}

Tensor ConvAutoencoderCodec::forward(const ImageTensor& x, Cache* cache) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    c.e1 = relu(enc1_.forward(store_, image_to_tensor(x, -0.5f), &c.enc[0]));
    c.e2 = relu(enc2_.forward(store_, c.e1, &c.enc[1]));
    const Tensor latent = enc3_.forward(store_, c.e2, &c.enc[2]);
    return decode_tensor(latent, &c.dec, &c.dec_acts);
}

void ConvAutoencoderCodec::backward(const Cache& c, const Tensor& grad_out, nn::Gradients& grads) const {
    Tensor g = dec3_.backward(store_, c.dec[2], grad_out, grads);
    nn::relu_backward(c.dec_acts[1], g);
    g = dec2_.backward(store_, c.dec[1], g, grads);
    nn::relu_backward(c.dec_acts[0], g);
    g = nn::upsample2_backward(dec1_.backward(store_, c.dec[0], g, grads));
    g = enc3_.backward(store_, c.enc[2], g, grads);
    nn::relu_backward(c.e2, g);
    g = enc2_.backward(store_, c.enc[1], g, grads);
    nn::relu_backward(c.e1, g);
    enc1_.backward(store_, c.enc[0], g, grads, false);
}

Latent ConvAutoencoderCodec::encode(const ImageTensor& x) const {
    if (x.height() % 2 != 0 || x.width() % 2 != 0) {
        throw ValidationError("autoencoder: image dimensions must be even");
    }
    Tensor e1 = relu(enc1_.forward(store_, image_to_tensor(x, -0.5f)));
    Tensor e2 = relu(enc2_.forward(store_, e1));
    return tensor_to_latent(enc3_.forward(store_, e2));
}

ImageTensor ConvAutoencoderCodec::decode(const Latent& latent) const {
    if (latent.channels != latent_channels_) {
        throw ValidationError("autoencoder: latent channel mismatch");
    }
    Tensor out = decode_tensor(latent_to_tensor(latent), nullptr, nullptr);
    for (float& v : out.data) {
        v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
    }
    return ImageTensor(out.height, out.width, std::move(out.data));
}

void ConvAutoencoderCodec::save(const std::filesystem::path& path, const WeightMetadata& meta) const {
    nn::save_weights(path, store_,
                     make_header(kArchitecture, {{"latent_channels", latent_channels_}, {"width", width_}}, meta));
}

ConvAutoencoderCodec ConvAutoencoderCodec::load(const std::filesystem::path& path) {
    const auto header = nn::read_weights_header(path);
    expect_architecture(header, kArchitecture, path);
    ConvAutoencoderCodec model(header["dims"].at("latent_channels").get<int>(), header["dims"].at("width").get<int>());
    nn::load_weights(path, model.store_);
    return model;
}

// ---------------------------------------------------------------------------
// Feature extractor and person embedder.

ConvFeatureExtractor::ConvFeatureExtractor(std::uint64_t seed, int n_classes) : seed_(seed) {
    s1_ = nn::Conv2d(store_, "s1", 3, 16, 3);
    s2_ = nn::Conv2d(store_, "s2", 16, 32, 3);
    s3_ = nn::Conv2d(store_, "s3", 32, 32, 3);
    head_ = nn::Linear(store_, "head", 32, n_classes);
    RngStream rng(seed, 0xFE);
    s1_.init(store_, rng);
    s2_.init(store_, rng);
    s3_.init(store_, rng);
    head_.init(store_, rng);
    id_ = std::string(kArchitecture) + ":random:seed=" + std::to_string(seed);
}

void ConvFeatureExtractor::mark_trained(const std::string& training_hash) {
    id_ = std::string(kArchitecture) + ":trained:" + training_hash;
}

std::vector<Tensor> ConvFeatureExtractor::stages(const ImageTensor& x) const {
    std::vector<Tensor> out;
    out.push_back(relu(s1_.forward(store_, image_to_tensor(x, -0.5f))));
    out.push_back(relu(s2_.forward(store_, nn::avg_pool2(out[0]))));
    out.push_back(relu(s3_.forward(store_, nn::avg_pool2(out[1]))));
    return out;
}

std::vector<float> ConvFeatureExtractor::features(const ImageTensor& x) const {
    std::vector<float> out;
    for (const auto& stage : stages(x)) {
        const auto pooled = nn::global_avg_pool(stage);
        out.insert(out.end(), pooled.begin(), pooled.end());
    }
    return out;
}

std::vector<float> ConvFeatureExtractor::head_forward(const ImageTensor& x, std::vector<nn::ConvCache>& caches,
                                                      std::vector<Tensor>& acts) const {
    caches.assign(3, {});
    acts.clear();
    acts.push_back(relu(s1_.forward(store_, image_to_tensor(x, -0.5f), &caches[0])));
    acts.push_back(relu(s2_.forward(store_, nn::avg_pool2(acts[0]), &caches[1])));
    acts.push_back(relu(s3_.forward(store_, nn::avg_pool2(acts[1]), &caches[2])));
    const auto pooled = nn::global_avg_pool(acts[2]);
    acts.push_back(Tensor(static_cast<int>(pooled.size()), 1, 1));
    acts.back().data = pooled;
    return head_.forward(store_, pooled);
}

void ConvFeatureExtractor::head_backward(const std::vector<nn::ConvCache>& caches, const std::vector<Tensor>& acts,
                                         std::span<const float> grad_logits, nn::Gradients& grads) const {
    const auto dpooled = head_.backward(store_, acts[3].data, grad_logits, grads);
    Tensor g = nn::global_avg_pool_backward(dpooled, acts[2].channels, acts[2].height, acts[2].width);
    nn::relu_backward(acts[2], g);
    g = nn::avg_pool2_backward(s3_.backward(store_, caches[2], g, grads), acts[1].height, acts[1].width);
    nn::relu_backward(acts[1], g);
    g = nn::avg_pool2_backward(s2_.backward(store_, caches[1], g, grads), acts[0].height, acts[0].width);
    nn::relu_backward(acts[0], g);
    s1_.backward(store_, caches[0], g, grads, false);
}

void ConvFeatureExtractor::save(const std::filesystem::path& path, const WeightMetadata& meta) const {
    nn::save_weights(path, store_,
                     make_header(kArchitecture, {{"n_classes", head_.out_features()}, {"id", id_}}, meta));
}

ConvFeatureExtractor ConvFeatureExtractor::load(const std::filesystem::path& path) {
    const auto header = nn::read_weights_header(path);
    expect_architecture(header, kArchitecture, path);
    ConvFeatureExtractor model(header.value("seed", std::uint64_t{7}), header["dims"].at("n_classes").get<int>());
    nn::load_weights(path, model.store_);
    model.id_ = header["dims"].value("id", model.id_);
    return model;
}

RandomProjectionEmbedder::RandomProjectionEmbedder(std::uint64_t seed) {
    projection_ = nn::Conv2d(store_, "projection", 3, 8, 4, 2, 1);
    RngStream rng(seed, 0xE3B);
    for (float& w : store_.values(projection_.weight_index())) {
        w = static_cast<float>(rng.normal());
    }
}

std::vector<float> RandomProjectionEmbedder::embed(const ImageTensor& crop) const {
    Tensor t = image_to_tensor(resize_bilinear(crop, 32, 32));
    for (int c = 0; c < 3; ++c) {
        auto ch = t.channel(c);
        double mean = 0.0;
        for (float v : ch) {
            mean += v;
        }
        mean /= static_cast<double>(ch.size());
        for (float& v : ch) {
            v = static_cast<float>(v - mean);
        }
    }
    return projection_.forward(store_, t).data;
}

} // namespace svia::models
