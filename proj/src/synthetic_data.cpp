#include "svia/synthetic_data.hpp"

#include "svia/config.hpp"
#include "svia/errors.hpp"
#include "svia/png_io.hpp"
#include "svia/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace svia::data {

namespace {

Rgb hsv(double hue_degrees, double s, double v) {
    const double h = std::fmod(std::fmod(hue_degrees, 360.0) + 360.0, 360.0) / 60.0;
    const double c = v * s;
    const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(h)) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const double m = v - c;
    return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

Rgb jitter(const Rgb& color, RngStream& rng, double amount) {
    Rgb out{};
    for (int c = 0; c < 3; ++c) {
        out[c] = static_cast<float>(std::clamp(color[c] + rng.uniform(-amount, amount), 0.0, 1.0));
    }
    return out;
}

class Canvas {
public:
    Canvas(int h, int w) : image(h, w), labels(h, w, 0) {}

    void put(int y, int x, const Rgb& color, Category label) {
        if (y < 0 || y >= image.height() || x < 0 || x >= image.width()) {
            return;
        }
        for (int c = 0; c < 3; ++c) {
            image.at(c, y, x) = color[c];
        }
        labels(y, x) = static_cast<std::uint8_t>(label);
    }

    void rect(int top, int left, int h, int w, const Rgb& color, Category label) {
        for (int y = top; y < top + h; ++y) {
            for (int x = left; x < left + w; ++x) {
                put(y, x, color, label);
            }
        }
    }

    ImageTensor image;
    LabelMap labels;
};

struct Rect {
    int top, left, height, width;

    bool overlaps(const Rect& o, int gap) const {
        return top - gap < o.top + o.height && o.top - gap < top + height && left - gap < o.left + o.width &&
               o.left - gap < left + width;
    }
};

const std::array<Rgb, 8> kVehiclePalette = {{{0.85f, 0.12f, 0.10f},
                                             {0.10f, 0.25f, 0.80f},
                                             {0.92f, 0.92f, 0.90f},
                                             {0.08f, 0.08f, 0.09f},
                                             {0.70f, 0.72f, 0.75f},
                                             {0.95f, 0.75f, 0.10f},
                                             {0.15f, 0.55f, 0.20f},
                                             {0.55f, 0.10f, 0.45f}}};

const std::array<Rgb, 3> kSignPalette = {{{0.88f, 0.08f, 0.08f}, {0.98f, 0.82f, 0.05f}, {0.05f, 0.30f, 0.85f}}};

const Rgb kPole = {0.45f, 0.45f, 0.47f};
const Rgb kTyre = {0.05f, 0.05f, 0.05f};
const Rgb kGlass = {0.22f, 0.30f, 0.38f};

} // namespace

CityStyle city_style(int city_id, int n_cities) {
    if (n_cities < 1 || city_id < 0 || city_id >= n_cities) {
        throw ValidationError("city id " + std::to_string(city_id) + " outside [0, " + std::to_string(n_cities) + ")");
    }
    const double hue = 360.0 * city_id / n_cities;
    CityStyle style;
    style.road = hsv(hue, 0.38, 0.42);
    style.building_a = hsv(hue + 15.0, 0.55, 0.80);
    style.building_b = hsv(hue + 15.0, 0.50, 0.66);
    style.window = city_id % 2 == 0 ? Rgb{0.95f, 0.93f, 0.80f} : Rgb{0.18f, 0.20f, 0.26f};
    style.window_period = 3 + city_id % 3;
    style.stripe = city_id % 2 == 0 ? Rgb{0.97f, 0.97f, 0.97f} : Rgb{0.97f, 0.85f, 0.15f};
    style.stripe_period = 6 + 2 * (city_id % 4);
    return style;
}

Scene generate_scene(const SceneSpec& spec) {
    if (spec.height < 32 || spec.width < 32) {
        throw ValidationError("scene must be at least 32 x 32");
    }
    if (spec.vehicles < 0 || spec.persons < 0 || spec.signs < 0) {
        throw ValidationError("object counts must be nonnegative");
    }
    const CityStyle style = city_style(spec.city_id, spec.n_cities);
    RngStream rng(spec.seed, 0x5CE);
    const int h = spec.height;
    const int w = spec.width;
    Canvas canvas(h, w);

    // Sky gradient.
    const Rgb sky_top = jitter({0.40f, 0.60f, 0.92f}, rng, 0.04);
    const Rgb sky_low = jitter({0.70f, 0.84f, 0.98f}, rng, 0.03);
    const int ground = static_cast<int>(std::lround(h * rng.uniform(0.53, 0.62)));
    for (int y = 0; y < ground; ++y) {
        const float t = static_cast<float>(y) / static_cast<float>(std::max(1, ground - 1));
        const Rgb c = {sky_top[0] + t * (sky_low[0] - sky_top[0]), sky_top[1] + t * (sky_low[1] - sky_top[1]),
                       sky_top[2] + t * (sky_low[2] - sky_top[2])};
        for (int x = 0; x < w; ++x) {
            canvas.put(y, x, c, Category::sky);
        }
    }

    // Building row along the horizon.
    const int min_top = std::max(2, h / 10);
    const int max_top = std::max(min_top + 1, ground - h / 5);
    int x0 = -rng.uniform_int(0, 4);
    bool alternate = rng.uniform() < 0.5;
    while (x0 < w) {
        const int bw = rng.uniform_int(w / 8, w / 4);
        const int top = rng.uniform_int(min_top, max_top);
        const Rgb base = jitter(alternate ? style.building_a : style.building_b, rng, 0.03);
        alternate = !alternate;
        canvas.rect(top, x0, ground - top, bw, base, Category::building);
        const int p = style.window_period;
        for (int y = top + 2; y + 1 < ground - 2; y += p + 1) {
            for (int x = x0 + 2; x + 1 < x0 + bw - 1; x += p + 1) {
                canvas.rect(y, x, 2, 2, style.window, Category::building);
            }
        }
        x0 += bw;
    }

    // Road and lane stripes.
    const int road_top = ground;
    const Rgb road = jitter(style.road, rng, 0.025);
    for (int y = road_top; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            canvas.put(y, x, jitter(road, rng, 0.02), Category::road);
        }
    }
    const int stripe_row = (road_top + h) / 2;
    const int phase = rng.uniform_int(0, style.stripe_period - 1);
    for (int x = 0; x < w; ++x) {
        if ((x + phase) % style.stripe_period < style.stripe_period / 2) {
            canvas.rect(stripe_row, x, 1, 1, style.stripe, Category::road);
        }
    }

    // Foreground objects: no two bounding boxes touch.
    std::vector<Rect> placed;
    int dropped = 0;
    auto try_place = [&](int bh, int bw, int top_lo, int top_hi) -> std::optional<Rect> {
        for (int attempt = 0; attempt < 25; ++attempt) {
            if (top_hi < top_lo || w - bw < 0) {
                break;
            }
            const Rect r{rng.uniform_int(top_lo, top_hi), rng.uniform_int(0, w - bw), bh, bw};
            const bool clear =
                std::none_of(placed.begin(), placed.end(), [&](const Rect& o) { return r.overlaps(o, 1); });
            if (clear) {
                placed.push_back(r);
                return r;
            }
        }
        ++dropped;
        return std::nullopt;
    };

    for (int i = 0; i < spec.signs; ++i) {
        const int size = rng.uniform_int(4, 6);
        const int pole = rng.uniform_int(5, 9);
        const auto r = try_place(size + pole, size, std::max(1, ground - size - pole - 2), ground - size - pole);
        if (!r) {
            continue;
        }
        const Rgb plate = kSignPalette[static_cast<std::size_t>(rng.uniform_int(0, 2))];
        canvas.rect(r->top, r->left, size, size, plate, Category::traffic_sign);
        canvas.rect(r->top + 1, r->left + 1, size - 2, size - 2, {0.96f, 0.96f, 0.96f}, Category::traffic_sign);
        canvas.rect(r->top + size, r->left + size / 2, pole, 1, kPole, Category::other);
    }
    for (int i = 0; i < spec.vehicles; ++i) {
        const int vw = rng.uniform_int(10, 16);
        const int vh = rng.uniform_int(6, 9);
        const auto r = try_place(vh, vw, road_top + 1, h - vh);
        if (!r) {
            continue;
        }
        const Rgb body = jitter(kVehiclePalette[static_cast<std::size_t>(rng.uniform_int(0, 7))], rng, 0.03);
        canvas.rect(r->top, r->left, vh, vw, body, Category::vehicle);
        canvas.rect(r->top + 1, r->left + 2, vh / 3, vw - 4, kGlass, Category::vehicle);
        canvas.rect(r->top + vh - 2, r->left + 1, 2, 3, kTyre, Category::vehicle);
        canvas.rect(r->top + vh - 2, r->left + vw - 4, 2, 3, kTyre, Category::vehicle);
    }
    for (int i = 0; i < spec.persons; ++i) {
        const int ph = rng.uniform_int(10, 14);
        const int pw = rng.uniform_int(3, 5);
        const auto r = try_place(ph, pw, ground - ph + 1, h - ph);
        if (!r) {
            continue;
        }
        const Rgb skin = jitter({0.85f, 0.66f, 0.52f}, rng, 0.08);
        const Rgb shirt = jitter({0.5f, 0.5f, 0.5f}, rng, 0.45);
        const Rgb trousers = jitter({0.2f, 0.2f, 0.3f}, rng, 0.15);
        const int head = std::max(2, pw - 2);
        canvas.rect(r->top, r->left + (pw - head) / 2, head, head, skin, Category::person);
        const int torso = (ph - head) / 2;
        canvas.rect(r->top + head, r->left, torso, pw, shirt, Category::person);
        canvas.rect(r->top + head + torso, r->left, ph - head - torso, pw / 2, trousers, Category::person);
        canvas.rect(r->top + head + torso, r->left + pw - pw / 2, ph - head - torso, pw / 2, trousers,
                    Category::person);
    }

    Scene scene{std::move(canvas.image), std::move(canvas.labels), dropped};
    quantize_8bit(scene.image);
    return scene;
}

DatasetLayout generate_dataset(const DatasetOptions& options, const std::filesystem::path& out_dir) {
    if (options.n_cities < 2) {
        throw ValidationError("generate_dataset: need at least two cities");
    }
    if (options.n_images < 0) {
        throw ValidationError("generate_dataset: negative image count");
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    std::filesystem::create_directories(out_dir / "labels", ec);
    if (ec) {
        throw IoError("cannot create dataset directories under '" + out_dir.string() + "': " + ec.message());
    }

    nlohmann::json generator = {{"generator", "svia_street_scenes_v1"},
                                {"n_images", options.n_images},
                                {"n_cities", options.n_cities},
                                {"height", options.height},
                                {"width", options.width},
                                {"seed", options.seed}};
    DatasetLayout layout;
    layout.root = out_dir;
    layout.categories = category_names();
    layout.generator_config_hash = to_hex(fnv1a64(generator.dump()));

    std::ofstream cities(out_dir / "cities.csv");
    if (!cities) {
        throw IoError("cannot write '" + (out_dir / "cities.csv").string() + "'");
    }
    cities << "filename,city_id\n";
    int dropped_total = 0;
    for (int k = 0; k < options.n_images; ++k) {
        RngStream counts(derive_seed(options.seed, static_cast<std::uint64_t>(k)), 0xC0);
        SceneSpec spec;
        spec.height = options.height;
        spec.width = options.width;
        spec.n_cities = options.n_cities;
        spec.city_id = k % options.n_cities;
        spec.vehicles = counts.uniform_int(0, 3);
        spec.persons = counts.uniform_int(1, 3);
        spec.signs = counts.uniform_int(0, 2);
        spec.seed = derive_seed(options.seed, static_cast<std::uint64_t>(k) + 0x100000000ULL);
        const Scene scene = generate_scene(spec);
        dropped_total += scene.dropped_objects;

        char name[32];
        std::snprintf(name, sizeof(name), "scene_%05d.png", k);
        write_png(out_dir / "images" / name, scene.image);
        write_label_png(out_dir / "labels" / name, scene.labels);
        cities << name << ',' << spec.city_id << '\n';
        layout.filenames.push_back(name);
        layout.city_ids.push_back(spec.city_id);
    }
    nlohmann::json meta = {{"categories", layout.categories},
                           {"generator_config", generator},
                           {"generator_config_hash", layout.generator_config_hash},
                           {"dropped_objects", dropped_total}};
    std::ofstream(out_dir / "meta.json") << meta.dump(2) << '\n';
    return layout;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
    std::filesystem::path source = dir;
    if (std::filesystem::is_directory(dir / "images")) {
        source = dir / "images";
    }
    if (!std::filesystem::is_directory(source)) {
        throw IoError("'" + dir.string() + "' is not a directory");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(source)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<DatasetItem> load_dataset(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root / "images")) {
        throw IoError("dataset '" + root.string() + "' has no images/ directory");
    }
    std::vector<std::string> categories = category_names();
    if (std::filesystem::exists(root / "meta.json")) {
        try {
            std::ifstream in(root / "meta.json");
            const auto meta = nlohmann::json::parse(in);
            if (meta.contains("categories")) {
                categories = meta["categories"].get<std::vector<std::string>>();
            }
        } catch (const nlohmann::json::exception& e) {
            throw IoError("dataset '" + root.string() + "': invalid meta.json: " + e.what());
        }
    }

    std::map<std::string, int> city_of;
    if (std::filesystem::exists(root / "cities.csv")) {
        std::ifstream in(root / "cities.csv");
        std::string line;
        int row = 0;
        while (std::getline(in, line)) {
            ++row;
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            if (line.empty() || (row == 1 && line.rfind("filename", 0) == 0)) {
                continue;
            }
            const auto comma = line.find(',');
            int city = -1;
            bool ok = comma != std::string::npos && comma > 0;
            if (ok) {
                std::istringstream value(line.substr(comma + 1));
                ok = static_cast<bool>(value >> city) && value.eof() && city >= 0;
            }
            if (!ok) {
                throw IoError("cities.csv row " + std::to_string(row) + " is malformed: '" + line + "'");
            }
            if (!city_of.emplace(line.substr(0, comma), city).second) {
                throw IoError("cities.csv row " + std::to_string(row) + " repeats filename '" +
                              line.substr(0, comma) + "'");
            }
        }
    }

    std::vector<DatasetItem> items;
    for (const auto& path : list_images(root)) {
        DatasetItem item;
        item.filename = path.filename().string();
        item.image = read_png(path);
        const auto label_path = root / "labels" / item.filename;
        if (!std::filesystem::exists(label_path)) {
            throw IoError("dataset: missing label for '" + item.filename + "'");
        }
        item.labels = read_label_png(label_path);
        if (item.labels.height != item.image.height() || item.labels.width != item.image.width()) {
            throw IoError("dataset: label size differs from image for '" + item.filename + "'");
        }
        for (auto l : item.labels.labels) {
            if (l >= categories.size()) {
                throw IoError("dataset: unknown category index " + std::to_string(l) + " in '" + item.filename + "'");
            }
        }
        if (const auto it = city_of.find(item.filename); it != city_of.end()) {
            item.city_id = it->second;
        }
        items.push_back(std::move(item));
    }
    return items;
}

} // namespace svia::data
