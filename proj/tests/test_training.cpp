#include "helpers.hpp"

#include "svia/errors.hpp"
#include "svia/evaluation.hpp"
#include "svia/png_io.hpp"
#include "svia/training.hpp"

#include <doctest.h>

#include <fstream>

using namespace svia;
using namespace svia::training;

namespace {

std::filesystem::path tiny_dataset(const std::string& name, int n) {
    const auto dir = test::temp_dir(name);
    data::DatasetOptions opts;
    opts.n_images = n;
    opts.n_cities = 2;
    opts.height = 32;
    opts.width = 32;
    opts.seed = 3;
    data::generate_dataset(opts, dir);
    return dir;
}

std::string file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST_CASE("training options read per-component keys") {
    const auto cfg = KeyValueConfig::parse("train.denoiser.epochs = 3\ntrain.denoiser.learning_rate = 0.01\n");
    const auto d = TrainingOptions::from_config(cfg, ComponentKind::denoiser);
    CHECK(d.epochs == 3);
    CHECK(d.learning_rate == 0.01);
    CHECK(TrainingOptions::from_config(cfg, ComponentKind::segmenter).epochs ==
          TrainingOptions::defaults(ComponentKind::segmenter).epochs);
    CHECK(component_kind_from_name("classifier") == ComponentKind::city_classifier);
    CHECK_THROWS_AS(component_kind_from_name("vae"), ValidationError);
    CHECK_THROWS_AS(TrainingOptions::from_config(KeyValueConfig::parse("train.denoiser.crop = 12\n"),
                                                 ComponentKind::denoiser),
                    ValidationError);
}

TEST_CASE("training is seeded and writes weights with a log") {
    const auto dir = tiny_dataset("train", 6);
    const auto cfg = KeyValueConfig::parse(
        "train.city_classifier.epochs = 2\ntrain.city_classifier.width = 4\n"
        "train.denoiser.epochs = 1\ntrain.denoiser.width = 4\ntrain.denoiser.crop = 16\n");

    const auto a = train_component(ComponentKind::city_classifier, dir, cfg, 9, dir / "a.svw");
    const auto b = train_component(ComponentKind::city_classifier, dir, cfg, 9, dir / "b.svw");
    CHECK(a.log.epoch_losses.size() == 2);
    CHECK(a.log.epoch_losses == b.log.epoch_losses);
    CHECK(models::ConvCityClassifier::load(a.weights).parameters().blocks()[0].values ==
          models::ConvCityClassifier::load(b.weights).parameters().blocks()[0].values);
    std::ifstream log_in(a.log_file);
    const auto log = nlohmann::json::parse(log_in);
    CHECK(log["seed"] == 9);
    CHECK(log["component"] == "city_classifier");

    const auto c = train_component(ComponentKind::city_classifier, dir, cfg, 10, dir / "c.svw");
    CHECK(file_bytes(c.weights) != file_bytes(a.weights));

    const auto d = train_component(ComponentKind::denoiser, dir, cfg, 1, dir / "d.svw");
    CHECK(models::weight_architecture(d.weights) == models::UNetDenoiser::kArchitecture);

    CHECK_THROWS_AS(train_component(ComponentKind::segmenter, dir / "missing", cfg, 1), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("a short segmenter run beats chance") {
    const auto dir = tiny_dataset("seg", 12);
    const auto items = data::load_dataset(dir);
    auto opts = TrainingOptions::defaults(ComponentKind::segmenter);
    opts.epochs = 30;
    opts.width = 8;
    TrainingLog log;
    const auto model = train_segmenter(items, opts, 1, log);
    CHECK(log.epoch_losses.back() < log.epoch_losses.front());
    CHECK(pixel_accuracy(model, items) > 0.5);
    std::filesystem::remove_all(dir);
}

TEST_CASE("evaluate reports every set and ranks lower values first") {
    const auto dir = tiny_dataset("eval", 6);
    const auto out = dir / "gray";
    std::filesystem::create_directories(out);
    const auto items = data::load_dataset(dir);
    for (const auto& item : items) {
        write_png(out / item.filename, ImageTensor::filled(32, 32, 0.5f));
    }
    pipeline::PipelineConfig config;
    evaluation::EvaluationOptions opts;
    opts.kid_bootstrap = 5;
    opts.max_k = 2;
    const auto report = evaluation::evaluate(
        dir, {{"same", dir / "images"}, evaluation::parse_anonymized_arg("gray=" + out.string())}, config, opts);
    REQUIRE(report.sets.size() == 2);
    CHECK(report.sets[0].fid <= 1e-6);
    CHECK(report.sets[0].lpips == 0.0);
    CHECK(report.sets[1].fid > report.sets[0].fid);
    CHECK(report.sets[0].acr.empty());
    const auto j = report.to_json();
    CHECK(j["rows"][0]["ranked"]["fid"].get<std::string>().find("(1)") != std::string::npos);
    CHECK(j["rows"][1]["ranked"]["fid"].get<std::string>().find("(2)") != std::string::npos);
    CHECK(evaluation::parse_anonymized_arg("/a/b/blur").label == "blur");
    std::filesystem::remove_all(dir);
}
