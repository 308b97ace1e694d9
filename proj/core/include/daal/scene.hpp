#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "daal/ota.hpp"
#include "daal/pseudo.hpp"
#include "daal/rng.hpp"

namespace daal::toy {

using ota::Domain;

struct SceneConfig {
    std::size_t width = 64;
    std::size_t height = 64;
    std::size_t num_classes = 3; // 0 rectangle, 1 disk, 2 cross
    std::size_t max_objects = 4;
    double min_size = 9.0;
    double max_size = 22.0;

    bool operator==(const SceneConfig&) const = default;
};

/// Target-domain corruption. All-zero parameters make target generation
/// byte-identical to source generation under the same scene seed.
struct DomainShiftConfig {
    double haze = 0.0;          // blend toward a gray haze color
    double brightness = 0.0;    // additive intensity shift
    double texture_shift = 0.0; // added to the background texture frequency
    double noise_sigma = 0.0;   // additive per-pixel Gaussian noise
    std::uint64_t seed = 0;     // corruption noise stream

    bool is_zero() const {
        return haze == 0.0 && brightness == 0.0 && texture_shift == 0.0 &&
               noise_sigma == 0.0;
    }
    bool operator==(const DomainShiftConfig&) const = default;
};

struct Annotation {
    pseudo::Box box;
    int class_id = 0;
};

struct Scene {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> pixels; // h*w*3 in [0,1], index (y*w + x)*3 + c
    std::vector<Annotation> annotations;
    Domain domain = Domain::source;
    std::uint64_t seed = 0;

    double pixel(std::size_t x, std::size_t y, std::size_t c) const {
        return pixels[(y * width + x) * 3 + c];
    }
};

/// Renders 1..max_objects axis-aligned shapes on a procedural background.
/// Annotations are exact by construction. Passing a shift renders the
/// target-domain version of the same scene.
Scene generate_scene(std::uint64_t scene_seed, const SceneConfig& cfg,
                     const DomainShiftConfig* shift);

struct Dataset {
    SceneConfig config;
    std::vector<Scene> scenes;
};

/// Scene seeds are derived from (seed, index), so any scene can be
/// regenerated in isolation.
Dataset generate_dataset(std::uint64_t seed, std::size_t count,
                         const SceneConfig& cfg,
                         const DomainShiftConfig* shift);

/// Snapshot: one binary record per scene (8-bit image grid plus the
/// annotation list) and a plain-text manifest of seeds and configuration,
/// for exact replay.
void save_dataset(const std::string& dir, const Dataset& dataset);
Dataset load_dataset(const std::string& dir);

} // namespace daal::toy
