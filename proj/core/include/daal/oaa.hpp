#pragma once

#include <vector>

#include "daal/graph.hpp"
#include "daal/pseudo.hpp"
#include "daal/rng.hpp"

namespace daal::oaa {

/// Per-pixel scoring head for one pyramid level: two linear layers over the
/// channel vector with a relu between and a sigmoid on top. Shared between
/// the global and the object-aware loss terms of its level.
struct DiscriminatorHead {
    nd::Tensor w1; // channels x hidden
    nd::Tensor b1; // 1 x hidden
    nd::Tensor w2; // hidden x 1
    nd::Tensor b2; // 1 x 1

    static DiscriminatorHead init(std::size_t channels, std::size_t hidden,
                                  Rng& rng);
    std::size_t channels() const { return w1.extent(0); }
};

/// Graph-resident leaves of one head for a training step.
struct HeadVars {
    nd::Var w1, b1, w2, b2;
    double grl_factor = 1.0;
};

HeadVars enter_head(nd::Graph& g, const DiscriminatorHead& head,
                    bool trainable, double grl_factor);

/// Scores for a pixels x channels feature block: grad_reverse, then the
/// two-layer head, then sigmoid. Output shape pixels x 1 with every value
/// strictly inside (0,1); a hair of slack (1e-9) keeps log() finite even if
/// the sigmoid saturates in double precision.
nd::Var discriminate(nd::Graph& g, const HeadVars& head, nd::Var features);

/// scores[level][image], each of shape pixels x 1.
using LevelScores = std::vector<std::vector<nd::Var>>;
/// masks[level][image], constants matching the score shapes.
using LevelMasks = std::vector<std::vector<nd::Tensor>>;

/// Multi-scale adversarial loss: per level, -log p over source pixels and
/// -log(1-p) over target pixels, each averaged over that level's pixels
/// across the batch; levels are summed. The grad_reverse inside
/// discriminate turns minimization into the two-player game.
nd::Var global_align_loss(nd::Graph& g, const LevelScores& src,
                          const LevelScores& tgt);

/// Object-aware variant: per-pixel terms gated by binary foreground masks
/// and normalized by max(1, nonzero mask entries) per level and domain.
/// Pixels with mask 0 contribute exactly nothing, in value and gradient.
nd::Var masked_align_loss(nd::Graph& g, const LevelScores& src,
                          const LevelScores& tgt, const LevelMasks& mask_src,
                          const LevelMasks& mask_tgt);

/// Combined loss: global + lambda * masked.
nd::Var oaa_loss(nd::Graph& g, nd::Var global, nd::Var masked, double lambda);

/// Converts a rasterized weight mask into the pixels x 1 constant used by
/// masked_align_loss.
nd::Tensor mask_to_tensor(const pseudo::WeightMask& mask);

} // namespace daal::oaa
