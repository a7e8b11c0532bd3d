#include "helpers.hpp"

#include "svia/errors.hpp"
#include "svia/png_io.hpp"
#include "svia/synthetic_data.hpp"

#include <doctest.h>

#include <fstream>
#include <set>

using namespace svia;
using namespace svia::data;

TEST_CASE("scenes are deterministic and labelled consistently") {
    SceneSpec spec;
    spec.seed = 12;
    spec.city_id = 3;
    const Scene a = generate_scene(spec);
    const Scene b = generate_scene(spec);
    CHECK(a.image == b.image);
    CHECK(a.labels == b.labels);
    CHECK(a.image.height() == 64);

    std::set<int> present(a.labels.labels.begin(), a.labels.labels.end());
    CHECK(present.count(static_cast<int>(Category::sky)));
    CHECK(present.count(static_cast<int>(Category::road)));
    CHECK(present.count(static_cast<int>(Category::building)));

    spec.seed = 13;
    CHECK(generate_scene(spec).image != a.image);
}

TEST_CASE("empty scenes contain only sky, road and building") {
    SceneSpec spec;
    spec.vehicles = 0;
    spec.persons = 0;
    spec.signs = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        spec.seed = seed;
        const Scene s = generate_scene(spec);
        for (auto l : s.labels.labels) {
            const auto c = static_cast<Category>(l);
            CHECK((c == Category::sky || c == Category::road || c == Category::building));
        }
    }
}

TEST_CASE("road and building colours carry the city") {
    SceneSpec spec;
    spec.vehicles = 0;
    spec.persons = 0;
    spec.signs = 0;
    auto mean_road = [&](int city) {
        spec.city_id = city;
        const Scene s = generate_scene(spec);
        double r = 0.0;
        int n = 0;
        for (int y = 0; y < 64; ++y) {
            for (int x = 0; x < 64; ++x) {
                if (s.labels(y, x) == static_cast<std::uint8_t>(Category::road)) {
                    r += s.image.at(0, y, x) - s.image.at(2, y, x);
                    ++n;
                }
            }
        }
        return r / n;
    };
    CHECK(std::abs(mean_road(0) - mean_road(4)) > 0.05);
    CHECK_THROWS_AS(city_style(8, 8), ValidationError);
    spec.height = 16;
    CHECK_THROWS_AS(generate_scene(spec), ValidationError);
}

TEST_CASE("datasets round trip through the on-disk layout") {
    const auto dir = test::temp_dir("dataset");
    DatasetOptions opts;
    opts.n_images = 10;
    opts.n_cities = 4;
    opts.height = 32;
    opts.width = 32;
    opts.seed = 5;
    const auto layout = generate_dataset(opts, dir);
    CHECK(layout.filenames.size() == 10);
    CHECK(std::filesystem::exists(dir / "meta.json"));

    const auto items = load_dataset(dir);
    REQUIRE(items.size() == 10);
    for (std::size_t k = 0; k < items.size(); ++k) {
        CHECK(items[k].filename == layout.filenames[k]);
        CHECK(items[k].city_id == static_cast<int>(k % 4));
        CHECK(items[k].image.height() == 32);
    }
    CHECK(list_images(dir).size() == 10);

    const auto again = test::temp_dir("dataset2");
    CHECK(generate_dataset(opts, again).generator_config_hash == layout.generator_config_hash);
    CHECK(read_png(again / "images" / layout.filenames[3]) == items[3].image);

    std::ofstream(dir / "cities.csv", std::ios::app) << "bad row\n";
    CHECK_THROWS_AS(load_dataset(dir), IoError);
    std::filesystem::remove(dir / "labels" / layout.filenames[0]);
    CHECK_THROWS_AS(load_dataset(dir), IoError);
    CHECK_THROWS_AS(load_dataset(dir / "nowhere"), IoError);
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(again);
}
