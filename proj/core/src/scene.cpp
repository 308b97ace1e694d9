#include "daal/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "daal/serialize.hpp"

namespace daal::toy {

namespace {

constexpr std::uint64_t kSceneStream = 0x5c31;
constexpr std::uint64_t kCorruptStream = 0xc042;

struct ShapeDraw {
    pseudo::Box box;
    int class_id = 0;
    double color[3] = {0, 0, 0};
};

void paint(Scene& s, std::size_t x, std::size_t y, const double rgb[3]) {
    double* p = s.pixels.data() + (y * s.width + x) * 3;
    p[0] = rgb[0];
    p[1] = rgb[1];
    p[2] = rgb[2];
}

// Distinct silhouettes per class: 0 filled rectangle, 1 filled disk,
// 2 axis-aligned cross. A pixel belongs to a shape when its center does.
bool shape_covers(const ShapeDraw& d, double cx, double cy) {
    const pseudo::Box& b = d.box;
    if (cx < b.x_min || cx > b.x_max || cy < b.y_min || cy > b.y_max) {
        return false;
    }
    switch (d.class_id) {
    case 0:
        return true;
    case 1: {
        const double rx = (b.x_max - b.x_min) / 2.0;
        const double ry = (b.y_max - b.y_min) / 2.0;
        const double dx = (cx - (b.x_min + rx)) / rx;
        const double dy = (cy - (b.y_min + ry)) / ry;
        return dx * dx + dy * dy <= 1.0;
    }
    default: {
        const double wx = (b.x_max - b.x_min) / 3.0;
        const double wy = (b.y_max - b.y_min) / 3.0;
        const double mx = (b.x_min + b.x_max) / 2.0;
        const double my = (b.y_min + b.y_max) / 2.0;
        return std::fabs(cx - mx) <= wx / 2.0 || std::fabs(cy - my) <= wy / 2.0;
    }
    }
}

const double kClassColor[3][3] = {
    {0.86, 0.29, 0.22},
    {0.24, 0.78, 0.34},
    {0.28, 0.41, 0.90},
};

} // namespace

Scene generate_scene(std::uint64_t scene_seed, const SceneConfig& cfg,
                     const DomainShiftConfig* shift) {
    if (cfg.width == 0 || cfg.height == 0 || cfg.num_classes == 0 ||
        cfg.num_classes > 3 || cfg.max_objects == 0) {
        throw std::invalid_argument("generate_scene: bad scene config");
    }
    Scene s;
    s.width = cfg.width;
    s.height = cfg.height;
    s.pixels.assign(cfg.width * cfg.height * 3, 0.0);
    s.domain = (shift != nullptr) ? Domain::target : Domain::source;
    s.seed = scene_seed;

    Rng rng(mix_seed(scene_seed, kSceneStream));

    // Background: gentle gradient plus a sinusoidal texture whose frequency
    // the target shift can move.
    double base[3];
    for (double& b : base) b = rng.uniform(0.18, 0.40);
    const double gx = rng.uniform(-0.12, 0.12);
    const double gy = rng.uniform(-0.12, 0.12);
    const double amp = rng.uniform(0.04, 0.10);
    const double freq0 = rng.uniform(1.5, 3.5);
    const double ph1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ph2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double freq = freq0 + (shift ? shift->texture_shift : 0.0);

    for (std::size_t y = 0; y < s.height; ++y) {
        for (std::size_t x = 0; x < s.width; ++x) {
            const double xn = (static_cast<double>(x) + 0.5) / s.width;
            const double yn = (static_cast<double>(y) + 0.5) / s.height;
            const double tex =
                amp *
                std::sin(2.0 * std::numbers::pi * freq * xn + ph1) *
                std::sin(2.0 * std::numbers::pi * freq * yn + ph2);
            const double shade = gx * (xn - 0.5) + gy * (yn - 0.5) + tex;
            double rgb[3];
            for (int c = 0; c < 3; ++c) {
                rgb[c] = std::clamp(base[c] + shade, 0.0, 1.0);
            }
            paint(s, x, y, rgb);
        }
    }

    // Objects: sizes and positions rejected a few times to avoid heavy
    // overlap; the last draw is accepted regardless so the count is exact.
    const std::size_t count = 1 + rng.below(cfg.max_objects);
    std::vector<ShapeDraw> draws;
    for (std::size_t i = 0; i < count; ++i) {
        ShapeDraw d;
        d.class_id = static_cast<int>(rng.below(cfg.num_classes));
        for (int attempt = 0; attempt < 12; ++attempt) {
            const double w = rng.uniform(cfg.min_size, cfg.max_size);
            const double h = rng.uniform(cfg.min_size, cfg.max_size);
            const double x0 = rng.uniform(1.0, s.width - w - 1.0);
            const double y0 = rng.uniform(1.0, s.height - h - 1.0);
            d.box = pseudo::Box{x0, y0, x0 + w, y0 + h};
            bool crowded = false;
            for (const ShapeDraw& other : draws) {
                if (pseudo::iou(d.box, other.box) > 0.25) {
                    crowded = true;
                    break;
                }
            }
            if (!crowded) break;
        }
        for (int c = 0; c < 3; ++c) {
            d.color[c] =
                std::clamp(kClassColor[d.class_id][c] + rng.uniform(-0.08, 0.08),
                           0.0, 1.0);
        }
        draws.push_back(d);
    }

    for (const ShapeDraw& d : draws) {
        const long x0 = std::max(0L, static_cast<long>(std::floor(d.box.x_min)));
        const long x1 = std::min(static_cast<long>(s.width) - 1,
                                 static_cast<long>(std::ceil(d.box.x_max)));
        const long y0 = std::max(0L, static_cast<long>(std::floor(d.box.y_min)));
        const long y1 = std::min(static_cast<long>(s.height) - 1,
                                 static_cast<long>(std::ceil(d.box.y_max)));
        for (long y = y0; y <= y1; ++y) {
            for (long x = x0; x <= x1; ++x) {
                const double cx = static_cast<double>(x) + 0.5;
                const double cy = static_cast<double>(y) + 0.5;
                if (shape_covers(d, cx, cy)) {
                    paint(s, static_cast<std::size_t>(x),
                          static_cast<std::size_t>(y), d.color);
                }
            }
        }
        s.annotations.push_back(Annotation{d.box, d.class_id});
    }

    if (shift && !shift->is_zero()) {
        Rng crng(mix_seed(mix_seed(scene_seed, kCorruptStream), shift->seed));
        const double haze_color[3] = {0.74, 0.74, 0.78};
        for (std::size_t i = 0; i < s.pixels.size(); ++i) {
            double v = s.pixels[i];
            v = (1.0 - shift->haze) * v + shift->haze * haze_color[i % 3];
            v += shift->brightness;
            if (shift->noise_sigma > 0.0) {
                v += crng.normal(0.0, shift->noise_sigma);
            }
            s.pixels[i] = std::clamp(v, 0.0, 1.0);
        }
    }
    return s;
}

Dataset generate_dataset(std::uint64_t seed, std::size_t count,
                         const SceneConfig& cfg,
                         const DomainShiftConfig* shift) {
    Dataset ds;
    ds.config = cfg;
    ds.scenes.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        ds.scenes.push_back(generate_scene(mix_seed(seed, i), cfg, shift));
    }
    return ds;
}

void save_dataset(const std::string& dir, const Dataset& dataset) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::ofstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) {
        throw std::runtime_error("save_dataset: cannot write manifest in " +
                                 dir);
    }
    manifest << "count=" << dataset.scenes.size() << "\n";
    manifest << "width=" << dataset.config.width << "\n";
    manifest << "height=" << dataset.config.height << "\n";
    manifest << "num_classes=" << dataset.config.num_classes << "\n";
    manifest << "max_objects=" << dataset.config.max_objects << "\n";
    for (std::size_t i = 0; i < dataset.scenes.size(); ++i) {
        const Scene& s = dataset.scenes[i];
        manifest << "scene " << i << " seed=" << s.seed << " domain="
                 << (s.domain == Domain::source ? "source" : "target") << "\n";
    }

    char name[32];
    for (std::size_t i = 0; i < dataset.scenes.size(); ++i) {
        const Scene& s = dataset.scenes[i];
        std::snprintf(name, sizeof(name), "scene_%06zu.bin", i);
        std::ofstream os(fs::path(dir) / name, std::ios::binary);
        nd::write_u64(os, s.width);
        nd::write_u64(os, s.height);
        nd::write_u64(os, 3);
        std::vector<unsigned char> bytes(s.pixels.size());
        for (std::size_t p = 0; p < s.pixels.size(); ++p) {
            bytes[p] = static_cast<unsigned char>(
                std::lround(std::clamp(s.pixels[p], 0.0, 1.0) * 255.0));
        }
        os.write(reinterpret_cast<const char*>(bytes.data()),
                 static_cast<std::streamsize>(bytes.size()));
        nd::write_u64(os, s.annotations.size());
        for (const Annotation& a : s.annotations) {
            nd::write_f64(os, a.box.x_min);
            nd::write_f64(os, a.box.y_min);
            nd::write_f64(os, a.box.x_max);
            nd::write_f64(os, a.box.y_max);
            nd::write_u64(os, static_cast<std::uint64_t>(a.class_id));
        }
        nd::write_u64(os, s.domain == Domain::source ? 0 : 1);
        nd::write_u64(os, s.seed);
        if (!os) {
            throw std::runtime_error("save_dataset: write failed for " +
                                     std::string(name));
        }
    }
}

Dataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) {
        throw std::runtime_error("load_dataset: no manifest in " + dir);
    }
    Dataset ds;
    std::string line;
    std::size_t count = 0;
    while (std::getline(manifest, line)) {
        if (line.rfind("count=", 0) == 0) count = std::stoull(line.substr(6));
        if (line.rfind("width=", 0) == 0) {
            ds.config.width = std::stoull(line.substr(6));
        }
        if (line.rfind("height=", 0) == 0) {
            ds.config.height = std::stoull(line.substr(7));
        }
        if (line.rfind("num_classes=", 0) == 0) {
            ds.config.num_classes = std::stoull(line.substr(12));
        }
        if (line.rfind("max_objects=", 0) == 0) {
            ds.config.max_objects = std::stoull(line.substr(12));
        }
    }

    char name[32];
    for (std::size_t i = 0; i < count; ++i) {
        std::snprintf(name, sizeof(name), "scene_%06zu.bin", i);
        std::ifstream is(fs::path(dir) / name, std::ios::binary);
        if (!is) {
            throw std::runtime_error("load_dataset: missing " +
                                     std::string(name));
        }
        std::uint64_t offset = 0;
        Scene s;
        s.width = nd::read_u64(is, offset);
        s.height = nd::read_u64(is, offset);
        const std::uint64_t channels = nd::read_u64(is, offset);
        if (channels != 3) {
            throw std::runtime_error("load_dataset: unexpected channel count");
        }
        std::vector<unsigned char> bytes(s.width * s.height * 3);
        is.read(reinterpret_cast<char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
        if (static_cast<std::size_t>(is.gcount()) != bytes.size()) {
            throw std::runtime_error("load_dataset: truncated pixels in " +
                                     std::string(name));
        }
        offset += bytes.size();
        s.pixels.resize(bytes.size());
        for (std::size_t p = 0; p < bytes.size(); ++p) {
            s.pixels[p] = static_cast<double>(bytes[p]) / 255.0;
        }
        const std::uint64_t n_ann = nd::read_u64(is, offset);
        for (std::uint64_t a = 0; a < n_ann; ++a) {
            Annotation ann;
            ann.box.x_min = nd::read_f64(is, offset);
            ann.box.y_min = nd::read_f64(is, offset);
            ann.box.x_max = nd::read_f64(is, offset);
            ann.box.y_max = nd::read_f64(is, offset);
            ann.class_id = static_cast<int>(nd::read_u64(is, offset));
            s.annotations.push_back(ann);
        }
        s.domain = nd::read_u64(is, offset) == 0 ? Domain::source
                                                 : Domain::target;
        s.seed = nd::read_u64(is, offset);
        ds.scenes.push_back(std::move(s));
    }
    return ds;
}

} // namespace daal::toy
