#include "svia/training.hpp"

#include "svia/errors.hpp"
#include "svia/image_ops.hpp"
#include "svia/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

namespace svia::training {

namespace {

using nn::Tensor;

ImageTensor flip_horizontal(const ImageTensor& x) {
    ImageTensor out(x.height(), x.width());
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < x.height(); ++y) {
            for (int col = 0; col < x.width(); ++col) {
                out.at(c, y, col) = x.at(c, y, x.width() - 1 - col);
            }
        }
    }
    return out;
}

void scale_gradients(nn::Gradients& grads, double factor) {
    for (auto& block : grads.blocks) {
        for (float& g : block) {
            g = static_cast<float>(g * factor);
        }
    }
}

void require_finite(double loss, int epoch, std::size_t sample) {
    if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", sample " +
                           std::to_string(sample));
    }
}

// Shuffled minibatch epochs over n samples. step(index, rng, grads) runs one
// forward/backward pass, accumulates into grads and returns the loss.
template <class Step>
void run_epochs(nn::ParameterStore& store, std::size_t n, const TrainingOptions& options, std::uint64_t seed,
                TrainingLog& log, Step&& step) {
    if (n == 0) {
        throw ValidationError("training set is empty");
    }
    if (options.epochs < 1 || options.batch_size < 1 || !(options.learning_rate > 0.0)) {
        throw ValidationError("training needs epochs >= 1, batch_size >= 1 and a positive learning rate");
    }
    const auto start = std::chrono::steady_clock::now();
    nn::Adam adam(store, nn::AdamConfig{options.learning_rate, 0.9, 0.999, 1e-8, options.clip_norm});
    nn::Gradients grads(store);
    RngStream order_rng(seed, 0x5348);
    RngStream sample_rng(seed, 0x5350);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch = static_cast<std::size_t>(options.batch_size);
    const std::size_t batches = (n + batch - 1) / batch;
    const double total_steps = static_cast<double>(batches) * options.epochs;
    double step_index = 0.0;

    for (int epoch = 1; epoch <= options.epochs; ++epoch) {
        order_rng.shuffle(std::span<std::size_t>(order));
        double total = 0.0;
        for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(options.batch_size)) {
            const std::size_t end = std::min(n, begin + static_cast<std::size_t>(options.batch_size));
            grads.zero();
            for (std::size_t k = begin; k < end; ++k) {
                const double loss = step(order[k], sample_rng, grads);
                require_finite(loss, epoch, order[k]);
                total += loss;
            }
            scale_gradients(grads, 1.0 / static_cast<double>(end - begin));
            if (options.cosine_decay) {
                adam.set_learning_rate(options.learning_rate * 0.5 *
                                       (1.0 + std::cos(std::numbers::pi * step_index / total_steps)));
            }
            step_index += 1.0;
            adam.step(store, grads);
        }
        const double mean = total / static_cast<double>(n);
        log.epoch_losses.push_back(mean);
        if (options.on_epoch) {
            options.on_epoch(epoch, mean);
        }
    }
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ImageTensor maybe_flip(const ImageTensor& x, bool flip, RngStream& rng) {
    if (flip && rng.uniform() < 0.5) {
        return flip_horizontal(x);
    }
    return x;
}

Mask category_mask(const LabelMap& labels, int category) {
    Mask m(labels.height, labels.width);
    for (std::size_t p = 0; p < labels.labels.size(); ++p) {
        m.bits()[p] = labels.labels[p] == category ? 1 : 0;
    }
    return m;
}

ImageTensor zero_masked(const ImageTensor& x, const Mask& mask) {
    ImageTensor out = x;
    for (int c = 0; c < 3; ++c) {
        auto ch = out.channel(c);
        for (std::size_t p = 0; p < ch.size(); ++p) {
            if (mask.bits()[p]) {
                ch[p] = 0.0f;
            }
        }
    }
    return out;
}

data::DatasetItem random_crop(const data::DatasetItem& item, int side, RngStream& rng) {
    const int h = item.image.height();
    const int w = item.image.width();
    if (side == 0 || (side >= h && side >= w)) {
        return item;
    }
    const int ch = std::min(side, h);
    const int cw = std::min(side, w);
    const Box box{static_cast<int>(rng.next_bits() % static_cast<std::uint64_t>(h - ch + 1)),
                  static_cast<int>(rng.next_bits() % static_cast<std::uint64_t>(w - cw + 1)), ch, cw};
    data::DatasetItem out;
    out.image = crop(item.image, box);
    out.labels = LabelMap(ch, cw);
    for (int y = 0; y < ch; ++y) {
        for (int x = 0; x < cw; ++x) {
            out.labels(y, x) = item.labels(box.top + y, box.left + x);
        }
    }
    out.city_id = item.city_id;
    out.filename = item.filename;
    return out;
}

struct DenoiserSample {
    models::Latent y;
    models::Latent eps;
    models::Latent v;
    models::ConditioningBundle cond;
};

class DenoiserSampler {
public:
    DenoiserSampler(const DenoiserTask& task, int text_dim, int step_dim)
        : task_(task), text_(text_dim), step_(step_dim) {
        for (const auto& name : task.categories) {
            category_ids_.push_back(static_cast<int>(category_from_name(name)));
        }
        for (const auto& p : task.prompts) {
            prompt_embeddings_.push_back(text_.encode(p));
        }
        harmonizer_embedding_ = text_.encode(task.harmonizer_prompt);
    }

    const models::CodecInterface& codec() const { return *task_.codec; }

    DenoiserSample draw(const data::DatasetItem& item, double full_probability, RngStream& rng) const {
        const ImageTensor& x = item.image;
        DenoiserSample s;
        std::vector<std::size_t> present;
        for (std::size_t k = 0; k < category_ids_.size(); ++k) {
            for (auto l : item.labels.labels) {
                if (l == category_ids_[k]) {
                    present.push_back(k);
                    break;
                }
            }
        }
        const bool full = rng.uniform() < full_probability || present.empty();
        Mask mask;
        if (full) {
            mask = Mask(x.height(), x.width(), 1);
            s.cond.text = harmonizer_embedding_;
            s.cond.image = codec().encode(ImageTensor(x.height(), x.width()));
        } else {
            const std::size_t k = present[rng.next_bits() % present.size()];
            mask = category_mask(item.labels, category_ids_[k]);
            s.cond.text = prompt_embeddings_[k];
            s.cond.image = codec().encode(zero_masked(x, mask));
        }
        s.cond.mask = codec().downsample_mask(mask);

        const double tau = rng.uniform();
        const double abar = sampler::alpha_bar_at(task_.schedule, tau);
        s.cond.step = step_.encode_position(tau);
        s.cond.alpha_bar = abar;

        const models::Latent x0 = codec().encode(x);
        s.eps = models::Latent(x0.channels, x0.height, x0.width);
        s.y = s.eps;
        s.v = s.eps;
        const double a = std::sqrt(abar);
        const double b = std::sqrt(1.0 - abar);
        for (std::size_t i = 0; i < x0.size(); ++i) {
            s.eps.values[i] = rng.normal();
            s.y.values[i] = a * x0.values[i] + b * s.eps.values[i];
            s.v.values[i] = a * s.eps.values[i] - b * x0.values[i];
        }
        return s;
    }

private:
    const DenoiserTask& task_;
    models::HashedTextEncoder text_;
    models::SinusoidalStepEncoder step_;
    std::vector<int> category_ids_;
    std::vector<std::vector<float>> prompt_embeddings_;
    std::vector<float> harmonizer_embedding_;
};

std::vector<float> to_float(const models::Latent& l) {
    return std::vector<float>(l.values.begin(), l.values.end());
}

DenoiserTask with_codec(DenoiserTask task) {
    if (!task.codec) {
        task.codec = std::make_shared<models::IdentityCodec>();
    }
    if (task.categories.size() != task.prompts.size()) {
        throw ValidationError("denoiser task: one prompt per category required");
    }
    return task;
}

int count_cities(std::span<const data::DatasetItem> items) {
    int n = 0;
    for (const auto& item : items) {
        if (item.city_id < 0) {
            throw ValidationError("dataset item '" + item.filename + "' has no city id");
        }
        n = std::max(n, item.city_id + 1);
    }
    return n;
}

} // namespace

ComponentKind component_kind_from_name(std::string_view name) {
    if (name == "segmenter") {
        return ComponentKind::segmenter;
    }
    if (name == "denoiser") {
        return ComponentKind::denoiser;
    }
    if (name == "codec") {
        return ComponentKind::codec;
    }
    if (name == "city_classifier" || name == "classifier") {
        return ComponentKind::city_classifier;
    }
    if (name == "feature_extractor") {
        return ComponentKind::feature_extractor;
    }
    throw ValidationError("unknown component '" + std::string(name) + "'");
}

std::string_view component_kind_name(ComponentKind kind) {
    switch (kind) {
    case ComponentKind::segmenter:
        return "segmenter";
    case ComponentKind::denoiser:
        return "denoiser";
    case ComponentKind::codec:
        return "codec";
    case ComponentKind::city_classifier:
        return "city_classifier";
    case ComponentKind::feature_extractor:
        return "feature_extractor";
    }
    return "unknown";
}

TrainingOptions TrainingOptions::defaults(ComponentKind kind) {
    TrainingOptions o;
    switch (kind) {
    case ComponentKind::segmenter:
        o.epochs = 8;
        o.learning_rate = 3e-3;
        o.flip = false;
        break;
    case ComponentKind::city_classifier:
        o.epochs = 10;
        o.learning_rate = 2e-3;
        break;
    case ComponentKind::denoiser:
        o.epochs = 100;
        o.learning_rate = 2e-3;
        o.clip_norm = 1.0;
        o.flip = false;
        o.cosine_decay = true;
        o.crop = 32;
        break;
    case ComponentKind::codec:
        o.epochs = 20;
        o.width = 24;
        o.flip = false;
        break;
    case ComponentKind::feature_extractor:
        o.epochs = 5;
        break;
    }
    return o;
}

TrainingOptions TrainingOptions::from_config(const KeyValueConfig& config, ComponentKind kind) {
    TrainingOptions o = defaults(kind);
    const std::string p = "train." + std::string(component_kind_name(kind)) + ".";
    o.epochs = static_cast<int>(config.get_int(p + "epochs", o.epochs));
    o.learning_rate = config.get_double(p + "learning_rate", o.learning_rate);
    o.batch_size = static_cast<int>(config.get_int(p + "batch_size", o.batch_size));
    o.clip_norm = config.get_double(p + "clip_norm", o.clip_norm);
    o.width = static_cast<int>(config.get_int(p + "width", o.width));
    o.full_mask_probability = config.get_double(p + "full_mask_probability", o.full_mask_probability);
    o.flip = config.get_bool(p + "flip", o.flip);
    o.cosine_decay = config.get_bool(p + "cosine_decay", o.cosine_decay);
    o.crop = static_cast<int>(config.get_int(p + "crop", o.crop));
    if (o.crop < 0 || o.crop % 8 != 0) {
        throw ValidationError(p + "crop must be a non-negative multiple of 8");
    }
    return o;
}

models::ConvSegmenter train_segmenter(std::span<const data::DatasetItem> items, const TrainingOptions& options,
                                      std::uint64_t seed, TrainingLog& log) {
    models::ConvSegmenter model(kNumCategories, options.width);
    model.init(seed);
    run_epochs(model.parameters(), items.size(), options, seed, log,
               [&](std::size_t i, RngStream&, nn::Gradients& grads) {
                   models::ConvSegmenter::Cache cache;
                   const Tensor logits = model.forward(items[i].image, &cache);
                   Tensor grad;
                   const double loss = nn::pixel_cross_entropy(logits, items[i].labels.labels, &grad);
                   model.backward(cache, grad, grads);
                   return loss;
               });
    return model;
}

models::ConvCityClassifier train_city_classifier(std::span<const data::DatasetItem> items, int n_cities,
                                                 const TrainingOptions& options, std::uint64_t seed,
                                                 TrainingLog& log) {
    models::ConvCityClassifier model(n_cities, options.width);
    model.init(seed);
    run_epochs(model.parameters(), items.size(), options, seed, log,
               [&](std::size_t i, RngStream& rng, nn::Gradients& grads) {
                   models::ConvCityClassifier::Cache cache;
                   const auto logits = model.forward(maybe_flip(items[i].image, options.flip, rng), &cache);
                   std::vector<float> grad;
                   const double loss = nn::cross_entropy(logits, items[i].city_id, &grad);
                   model.backward(cache, grad, grads);
                   return loss;
               });
    return model;
}

models::ConvAutoencoderCodec train_codec(std::span<const data::DatasetItem> items, const TrainingOptions& options,
                                         std::uint64_t seed, TrainingLog& log) {
    models::ConvAutoencoderCodec model(6, options.width);
    model.init(seed);
    run_epochs(model.parameters(), items.size(), options, seed, log,
               [&](std::size_t i, RngStream&, nn::Gradients& grads) {
                   models::ConvAutoencoderCodec::Cache cache;
                   const Tensor recon = model.forward(items[i].image, &cache);
                   Tensor grad;
                   const double loss = nn::mse(recon, items[i].image.data(), &grad);
                   model.backward(cache, grad, grads);
                   return loss;
               });
    return model;
}

models::ConvFeatureExtractor train_feature_extractor(std::span<const data::DatasetItem> items, int n_cities,
                                                     const TrainingOptions& options, std::uint64_t seed,
                                                     TrainingLog& log) {
    models::ConvFeatureExtractor model(seed, n_cities);
    run_epochs(model.parameters(), items.size(), options, seed, log,
               [&](std::size_t i, RngStream& rng, nn::Gradients& grads) {
                   std::vector<nn::ConvCache> caches;
                   std::vector<Tensor> acts;
                   const auto logits =
                       model.head_forward(maybe_flip(items[i].image, options.flip, rng), caches, acts);
                   std::vector<float> grad;
                   const double loss = nn::cross_entropy(logits, items[i].city_id, &grad);
                   model.head_backward(caches, acts, grad, grads);
                   return loss;
               });
    return model;
}

DenoiserTask DenoiserTask::from_pipeline(const pipeline::PipelineConfig& config) {
    DenoiserTask task;
    for (const auto& name : config.sensitive.names()) {
        task.categories.push_back(name);
        task.prompts.push_back(config.prompt_for(name));
    }
    task.harmonizer_prompt = config.harmonizer_prompt;
    task.schedule = config.schedule.kind;
    return task;
}

models::UNetDenoiser train_denoiser(std::span<const data::DatasetItem> items, const DenoiserTask& task_in,
                                    const TrainingOptions& options, std::uint64_t seed, TrainingLog& log) {
    const DenoiserTask task = with_codec(task_in);
    models::UNetDenoiser::Dims dims;
    dims.latent_channels = task.codec->latent_channels();
    dims.width = options.width;
    models::UNetDenoiser model(dims);
    model.init(seed);
    const DenoiserSampler draw(task, dims.text_dim, dims.step_dim);
    run_epochs(model.parameters(), items.size(), options, seed, log,
               [&](std::size_t i, RngStream& rng, nn::Gradients& grads) {
                   const DenoiserSample s =
                       draw.draw(random_crop(items[i], options.crop, rng), options.full_mask_probability, rng);
                   models::UNetDenoiser::Cache cache;
                   const Tensor pred = model.forward(s.y, s.cond, &cache);
                   Tensor grad;
                   const double loss = nn::mse(pred, to_float(s.v), &grad);
                   model.backward(cache, grad, grads);
                   return loss;
               });
    return model;
}

DenoiserValidation validate_denoiser(const models::UNetDenoiser& model, std::span<const data::DatasetItem> items,
                                     const DenoiserTask& task_in, std::uint64_t seed) {
    if (items.empty()) {
        throw ValidationError("validation set is empty");
    }
    const DenoiserTask task = with_codec(task_in);
    const DenoiserSampler draw(task, model.dims().text_dim, model.dims().step_dim);
    RngStream rng(seed, 0x56414C);
    DenoiserValidation v;
    for (const auto& item : items) {
        const DenoiserSample s = draw.draw(item, 0.2, rng);
        const models::Latent pred = model.predict_noise(s.y, 0, s.cond);
        double err = 0.0;
        double zero = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred.values[i] - s.eps.values[i];
            err += d * d;
            zero += s.eps.values[i] * s.eps.values[i];
        }
        v.model_mse += err / static_cast<double>(pred.size());
        v.zero_mse += zero / static_cast<double>(pred.size());
    }
    v.model_mse /= static_cast<double>(items.size());
    v.zero_mse /= static_cast<double>(items.size());
    return v;
}

double pixel_accuracy(const models::SegmenterInterface& model, std::span<const data::DatasetItem> items) {
    if (items.empty()) {
        throw ValidationError("no items to score");
    }
    std::size_t correct = 0;
    std::size_t total = 0;
    for (const auto& item : items) {
        const Tensor scores = model.predict(item.image);
        const LabelMap pred = argmax_labels(scores.data, scores.channels, scores.height, scores.width);
        for (std::size_t p = 0; p < pred.labels.size(); ++p) {
            correct += pred.labels[p] == item.labels.labels[p];
        }
        total += pred.labels.size();
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

TrainingResult train_component(ComponentKind kind, const std::filesystem::path& dataset,
                               const KeyValueConfig& config, std::uint64_t seed, std::filesystem::path output) {
    if (!std::filesystem::is_directory(dataset)) {
        throw IoError("dataset not found: " + dataset.string());
    }
    const auto items = data::load_dataset(dataset);
    if (items.empty()) {
        throw ValidationError("dataset is empty: " + dataset.string());
    }
    const std::string name(component_kind_name(kind));
    if (output.empty()) {
        output = config.has("models." + name) ? config.get_path("models." + name)
                                              : std::filesystem::path(name + ".svw");
    }
    if (output.has_parent_path()) {
        std::filesystem::create_directories(output.parent_path());
    }

    const TrainingOptions options = TrainingOptions::from_config(config, kind);
    const models::WeightMetadata meta{seed, config.hash()};
    TrainingResult result;
    result.weights = output;
    switch (kind) {
    case ComponentKind::segmenter:
        train_segmenter(items, options, seed, result.log).save(output, meta);
        break;
    case ComponentKind::city_classifier: {
        const int n = static_cast<int>(config.get_int("train.city_classifier.n_cities", count_cities(items)));
        train_city_classifier(items, n, options, seed, result.log).save(output, meta);
        break;
    }
    case ComponentKind::codec:
        train_codec(items, options, seed, result.log).save(output, meta);
        break;
    case ComponentKind::feature_extractor: {
        const int n = static_cast<int>(config.get_int("train.feature_extractor.n_cities", count_cities(items)));
        auto model = train_feature_extractor(items, n, options, seed, result.log);
        model.mark_trained(config.hash());
        model.save(output, meta);
        break;
    }
    case ComponentKind::denoiser: {
        const auto pipeline_config = pipeline::PipelineConfig::from_config(config);
        DenoiserTask task = DenoiserTask::from_pipeline(pipeline_config);
        if (!pipeline_config.models.codec.empty()) {
            task.codec = std::make_shared<models::ConvAutoencoderCodec>(
                models::ConvAutoencoderCodec::load(pipeline_config.models.codec));
        }
        train_denoiser(items, task, options, seed, result.log).save(output, meta);
        break;
    }
    }

    result.log_file = output;
    result.log_file += ".log.json";
    const nlohmann::json log = {
        {"component", name},
        {"dataset", dataset.string()},
        {"seed", seed},
        {"training_config_hash", config.hash()},
        {"epochs", options.epochs},
        {"epoch_losses", result.log.epoch_losses},
        {"wall_seconds", result.log.wall_seconds},
    };
    std::ofstream out(result.log_file);
    if (!out) {
        throw IoError("cannot write training log " + result.log_file.string());
    }
    out << log.dump(2) << '\n';
    return result;
}

} // namespace svia::training
