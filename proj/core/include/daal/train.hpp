#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "daal/config.hpp"
#include "daal/detector.hpp"
#include "daal/map_eval.hpp"
#include "daal/matcher.hpp"
#include "daal/oaa.hpp"
#include "daal/scene.hpp"

namespace daal::toy {

/// First-order updates over named tensors; Adam state is checkpointable.
class Optimizer {
public:
    explicit Optimizer(cli::OptimizerKind kind = cli::OptimizerKind::adam)
        : kind_(kind) {}

    void begin_step() { ++t_; }
    void update(const std::string& name, nd::Tensor& param,
                const nd::Tensor& grad, double lr);

    void export_state(
        std::vector<std::pair<std::string, nd::Tensor>>& out) const;
    void import_state(const std::map<std::string, nd::Tensor>& tensors);

private:
    cli::OptimizerKind kind_;
    std::uint64_t t_ = 0;
    std::map<std::string, std::pair<nd::Tensor, nd::Tensor>> moments_;
};

DetectorSizes sizes_from_config(const cli::RunConfig& cfg);
SceneConfig scene_config_from(const cli::RunConfig& cfg);

/// Generated pools plus per-scene patch caches and source ground-truth
/// masks; immutable during a run.
struct TrainData {
    Dataset source, target, eval;
    std::vector<PatchCache> source_cache, target_cache, eval_cache;
    std::vector<std::vector<nd::Tensor>> source_masks; // [scene][level]
};

TrainData build_train_data(const cli::RunConfig& cfg);

/// Everything that evolves during training.
struct TrainState {
    cli::RunConfig cfg;
    DetectorSizes sizes;
    DetectorParams det;
    std::vector<oaa::DiscriminatorHead> disc; // one head per pyramid level
    oaa::DiscriminatorHead ada_head;          // decoder-feature discriminator
    Optimizer opt;
    std::uint64_t step = 0; // completed optimization steps

    // Pseudo-label state for the target pool, refreshed per epoch.
    std::vector<std::vector<nd::Tensor>> target_masks;   // [scene][level]
    std::vector<std::vector<pseudo::Detection>> target_pseudo;
    std::size_t pseudo_box_count = 0;
    std::size_t pseudo_malformed = 0;
};

TrainState init_train_state(const cli::RunConfig& cfg);

struct LossBundle {
    double l_det = 0.0;
    double l_d = 0.0;
    double l_d_hat = 0.0;
    double l_oaa = 0.0;
    double l_decoder = 0.0;
    double total = 0.0;
};

/// One optimization step over equally sized source and target minibatches.
/// Detection loss on source only; adversarial backbone alignment on both
/// domains (ground-truth masks on source, pseudo masks on target); decoder
/// alignment on the pooled per-batch decoder features. A single backward
/// pass serves both adversarial players through the gradient reversal.
/// With adaptation_enabled false the step is plain source-only training.
/// A branch whose total weight is exactly zero (beta == 0, or a frozen
/// discriminator) is kept out of the backward graph, so the parameter
/// trajectory is bit-identical to a run without it.
/// A non-finite loss aborts the step with diagnostics.
LossBundle train_step(TrainState& state, const TrainData& data,
                      std::span<const std::size_t> source_batch,
                      std::span<const std::size_t> target_batch,
                      bool adaptation_enabled);

/// Recomputes pseudo boxes and masks for every target scene from the
/// current model (threshold cfg.tau, class-agnostic).
void refresh_pseudo_labels(TrainState& state, const TrainData& data);

/// Detections for one scene: every query contributes its best
/// non-background class with the softmax probability as confidence; boxes
/// are clamped to the image.
std::vector<pseudo::Detection> detect_scene(const DetectorSizes& sizes,
                                            const DetectorParams& params,
                                            const PatchCache& cache);

std::vector<Prediction> predict_dataset(const DetectorSizes& sizes,
                                        const DetectorParams& params,
                                        const Dataset& dataset,
                                        std::span<const PatchCache> caches);

ApReport evaluate_detector(const DetectorSizes& sizes,
                           const DetectorParams& params,
                           const Dataset& dataset,
                           std::span<const PatchCache> caches);

/// Named tensors of the model (+ optimizer state and step counter) for
/// checkpointing. Order is stable.
std::vector<std::pair<std::string, nd::Tensor>>
export_state_tensors(TrainState& state);
void import_state_tensors(TrainState& state,
                          const std::map<std::string, nd::Tensor>& tensors);

} // namespace daal::toy
