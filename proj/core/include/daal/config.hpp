#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "daal/scene.hpp"

namespace daal::cli {

enum class Placement { none, backbone, decoder, both };
enum class BackboneMode { ga, oaa };
enum class DecoderMode { ota, ada };
enum class OptimizerKind { adam, sgd };

std::string to_string(Placement p);
std::string to_string(BackboneMode m);
std::string to_string(DecoderMode m);
std::string to_string(OptimizerKind k);

/// One experiment's full configuration. Serializes to diffable key=value
/// text; command-line flags override file values.
struct RunConfig {
    std::uint64_t seed = 1;

    // Model.
    std::size_t image_size = 64;
    std::vector<std::size_t> level_strides = {4, 8};
    std::vector<std::size_t> level_channels = {16, 32};
    std::size_t queries = 8;
    std::size_t feature_dim = 32;
    std::size_t disc_hidden = 32;
    std::size_t num_classes = 3;
    std::size_t max_objects = 4;

    // Data.
    std::size_t source_scenes = 192;
    std::size_t target_scenes = 192;
    std::size_t eval_scenes = 96;
    toy::DomainShiftConfig shift{0.30, 0.10, 2.0, 0.05, 0};

    // Alignment.
    double tau = 0.5;    // pseudo-label confidence threshold
    double lambda = 1.0; // object-aware term weight
    double beta = 1.0;   // decoder alignment weight
    std::size_t projections = 256;
    double grl_factor = 1.0;
    Placement placement = Placement::both;
    BackboneMode backbone_mode = BackboneMode::oaa;
    DecoderMode decoder_mode = DecoderMode::ota;
    bool disc_frozen = false;

    // Optimization.
    OptimizerKind optimizer = OptimizerKind::adam;
    double lr_detector = 2e-4;
    double lr_discriminator = 4e-3;
    std::size_t steps = 2000;
    std::size_t pretrain_steps = 1000;
    std::size_t batch_size = 4;
    std::size_t refresh_epochs = 1;     // pseudo-label refresh cadence
    std::size_t checkpoint_epochs = 5;  // checkpoint cadence (epochs)

    std::string output_dir = "out";

    void validate() const;
    /// Canonical text: fixed key order, full double precision.
    std::string serialize() const;
    /// FNV-1a over the canonical text minus output_dir, so moving outputs
    /// does not invalidate checkpoints.
    std::uint64_t hash() const;

    bool alignment_backbone() const {
        return placement == Placement::backbone || placement == Placement::both;
    }
    bool alignment_decoder() const {
        return placement == Placement::decoder || placement == Placement::both;
    }
};

/// Parses key=value text ('#' starts a comment). Unknown keys are errors.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);
/// Applies key=value overrides on top of a parsed config.
void apply_overrides(RunConfig& cfg,
                     const std::vector<std::pair<std::string, std::string>>&
                         overrides);

} // namespace daal::cli
