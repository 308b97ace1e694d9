#pragma once

#include <functional>
#include <string>
#include <vector>

#include "daal/graph.hpp"
#include "daal/pseudo.hpp"
#include "daal/rng.hpp"
#include "daal/scene.hpp"

namespace daal::toy {

struct LevelSpec {
    std::size_t stride = 4;
    std::size_t channels = 16;
};

struct DetectorSizes {
    std::size_t image = 64;
    std::vector<LevelSpec> levels = {{4, 16}, {8, 32}};
    std::size_t queries = 8;     // M
    std::size_t dim = 32;        // d, decoder feature width
    std::size_t num_classes = 3; // plus one background slot

    std::size_t patch_dim(std::size_t level) const {
        const std::size_t s = levels[level].stride;
        return s * s * 3 + 4; // pixels plus (cx, cy, sx, sy) position features
    }
    std::size_t level_cells(std::size_t level) const {
        const std::size_t n = image / levels[level].stride;
        return n * n;
    }
    std::size_t total_cells() const;
    void validate() const;
};

/// Query-based detector: per-level linear patch embeddings form the feature
/// pyramid; learnable queries cross-attend once over the flattened levels;
/// small relu heads emit center-size boxes (sigmoid) and class scores.
struct DetectorParams {
    std::vector<nd::Tensor> embed_w; // patch_dim x C
    std::vector<nd::Tensor> embed_b; // 1 x C
    std::vector<nd::Tensor> key_w;   // d x patch_dim, keys from raw patches
    std::vector<nd::Tensor> val_w;   // C x d
    nd::Tensor queries;              // M x d
    nd::Tensor box_w1, box_b1;       // d x d, 1 x d
    nd::Tensor box_w2, box_b2;       // d x 4, 1 x 4
    nd::Tensor cls_w1, cls_b1;       // d x d, 1 x d
    nd::Tensor cls_w2, cls_b2;       // d x (num_classes + 1), 1 x ...

    static DetectorParams init(const DetectorSizes& sizes, Rng& rng);
    /// Stable-ordered enumeration used by the optimizer and checkpoints.
    void for_each(const std::function<void(const std::string&, nd::Tensor&)>& fn);
};

/// Per-level patch matrices for one image, precomputed once per scene: each
/// row is a flattened stride x stride x 3 patch plus position features.
/// Rows are ordered v * width + u, matching WeightMask indexing.
struct PatchCache {
    std::vector<nd::Tensor> patches;             // per level, cells x patch_dim
    std::vector<nd::Tensor> patches_t;           // transposed copies
    std::vector<pseudo::LevelGeometry> geometry; // per level
};

PatchCache extract_patches(const Scene& scene, const DetectorSizes& sizes);

/// Graph-resident parameter leaves for one step.
struct DetectorVars {
    std::vector<nd::Var> embed_w, embed_b, key_w, val_w;
    nd::Var queries;
    nd::Var box_w1, box_b1, box_w2, box_b2;
    nd::Var cls_w1, cls_b1, cls_w2, cls_b2;
};

DetectorVars enter_detector(nd::Graph& g, DetectorParams& params,
                            bool trainable);

struct ForwardResult {
    std::vector<nd::Var> pyramid; // per level, cells x C
    nd::Var decoder_features;     // M x d
    nd::Var boxes_cs;             // M x 4, (cx, cy, w, h) in [0, 1]
    nd::Var cls_logits;           // M x (num_classes + 1)
    nd::Var cls_probs;            // softmax of the above
};

ForwardResult detector_forward(nd::Graph& g, const DetectorVars& vars,
                               const PatchCache& cache,
                               const DetectorSizes& sizes);

} // namespace daal::toy
