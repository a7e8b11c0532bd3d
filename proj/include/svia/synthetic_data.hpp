#pragma once

// Procedural street scenes with free ground-truth labels and city ids, and
// the on-disk dataset layout shared with real data converted to it:
//
//   root/images/<name>.png   RGB
//   root/labels/<name>.png   single-channel category index map
//   root/cities.csv          filename,city_id
//   root/meta.json           category list, generator config hash

#include "svia/image.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace svia::data {

using Rgb = std::array<float, 3>;

/// City-specific appearance. Only roads and buildings depend on the city.
struct CityStyle {
    Rgb road{};
    Rgb stripe{};
    int stripe_period = 8;
    Rgb building_a{};
    Rgb building_b{};
    Rgb window{};
    int window_period = 4;
};

CityStyle city_style(int city_id, int n_cities);

struct SceneSpec {
    int height = 64;
    int width = 64;
    int city_id = 0;
    int n_cities = 8;
    int vehicles = 2;
    int persons = 2;
    int signs = 1;
    std::uint64_t seed = 0;
};

struct Scene {
    ImageTensor image;
    LabelMap labels;
    /// Objects that could not be placed after bounded retries.
    int dropped_objects = 0;
};

/// Layered composition: sky, buildings, road with lane stripes,
/// then vehicles, persons and signs. Quantized to 8 bits.
Scene generate_scene(const SceneSpec& spec);

struct DatasetLayout {
    std::filesystem::path root;
    std::vector<std::string> filenames;
    std::vector<int> city_ids;
    std::vector<std::string> categories;
    std::string generator_config_hash;
};

struct DatasetOptions {
    int n_images = 500;
    int n_cities = 8;
    int height = 64;
    int width = 64;
    std::uint64_t seed = 0;
};

DatasetLayout generate_dataset(const DatasetOptions& options, const std::filesystem::path& out_dir);

struct DatasetItem {
    ImageTensor image;
    LabelMap labels;
    /// -1 when the file is not listed in cities.csv.
    int city_id = -1;
    std::string filename;
};

/// Filename-sorted items; validates the layout on load.
std::vector<DatasetItem> load_dataset(const std::filesystem::path& root);

/// Sorted PNG files under dir/images if it exists, else under dir.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

} // namespace svia::data
