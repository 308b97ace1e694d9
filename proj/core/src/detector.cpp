#include "daal/detector.hpp"

#include <cmath>
#include <stdexcept>

namespace daal::toy {

std::size_t DetectorSizes::total_cells() const {
    std::size_t total = 0;
    for (std::size_t l = 0; l < levels.size(); ++l) total += level_cells(l);
    return total;
}

void DetectorSizes::validate() const {
    if (levels.empty()) {
        throw std::invalid_argument("DetectorSizes: no pyramid levels");
    }
    for (const LevelSpec& spec : levels) {
        if (spec.stride == 0 || image % spec.stride != 0) {
            throw std::invalid_argument(
                "DetectorSizes: image size " + std::to_string(image) +
                " not divisible by stride " + std::to_string(spec.stride));
        }
        if (spec.channels == 0) {
            throw std::invalid_argument("DetectorSizes: zero channels");
        }
    }
    if (queries == 0 || dim == 0 || num_classes == 0) {
        throw std::invalid_argument("DetectorSizes: degenerate model");
    }
}

namespace {

nd::Tensor init_weight(std::size_t rows, std::size_t cols, Rng& rng) {
    std::vector<double> data(rows * cols);
    const double scale = std::sqrt(2.0 / static_cast<double>(rows + cols));
    for (double& v : data) v = rng.normal() * scale;
    nd::Tensor t({rows, cols}, std::move(data));
    t.set_requires_grad(true);
    return t;
}

nd::Tensor zero_param(std::size_t rows, std::size_t cols) {
    nd::Tensor t = nd::Tensor::zeros({rows, cols});
    t.set_requires_grad(true);
    return t;
}

} // namespace

DetectorParams DetectorParams::init(const DetectorSizes& sizes, Rng& rng) {
    sizes.validate();
    DetectorParams p;
    for (std::size_t l = 0; l < sizes.levels.size(); ++l) {
        p.embed_w.push_back(init_weight(sizes.patch_dim(l),
                                        sizes.levels[l].channels, rng));
        p.embed_b.push_back(zero_param(1, sizes.levels[l].channels));
        p.key_w.push_back(init_weight(sizes.dim, sizes.patch_dim(l), rng));
        p.val_w.push_back(init_weight(sizes.levels[l].channels, sizes.dim, rng));
    }
    p.queries = init_weight(sizes.queries, sizes.dim, rng);
    p.box_w1 = init_weight(sizes.dim, sizes.dim, rng);
    p.box_b1 = zero_param(1, sizes.dim);
    p.box_w2 = init_weight(sizes.dim, 4, rng);
    p.box_b2 = zero_param(1, 4);
    p.cls_w1 = init_weight(sizes.dim, sizes.dim, rng);
    p.cls_b1 = zero_param(1, sizes.dim);
    p.cls_w2 = init_weight(sizes.dim, sizes.num_classes + 1, rng);
    p.cls_b2 = zero_param(1, sizes.num_classes + 1);
    return p;
}

void DetectorParams::for_each(
    const std::function<void(const std::string&, nd::Tensor&)>& fn) {
    for (std::size_t l = 0; l < embed_w.size(); ++l) {
        const std::string tag = "l" + std::to_string(l);
        fn("det.embed_w." + tag, embed_w[l]);
        fn("det.embed_b." + tag, embed_b[l]);
        fn("det.key_w." + tag, key_w[l]);
        fn("det.val_w." + tag, val_w[l]);
    }
    fn("det.queries", queries);
    fn("det.box_w1", box_w1);
    fn("det.box_b1", box_b1);
    fn("det.box_w2", box_w2);
    fn("det.box_b2", box_b2);
    fn("det.cls_w1", cls_w1);
    fn("det.cls_b1", cls_b1);
    fn("det.cls_w2", cls_w2);
    fn("det.cls_b2", cls_b2);
}

PatchCache extract_patches(const Scene& scene, const DetectorSizes& sizes) {
    sizes.validate();
    if (scene.width != sizes.image || scene.height != sizes.image) {
        throw std::invalid_argument(
            "extract_patches: scene " + std::to_string(scene.width) + "x" +
            std::to_string(scene.height) + " does not match model image size " +
            std::to_string(sizes.image));
    }
    PatchCache cache;
    for (std::size_t l = 0; l < sizes.levels.size(); ++l) {
        const std::size_t s = sizes.levels[l].stride;
        const std::size_t cells_per_side = sizes.image / s;
        const std::size_t pd = sizes.patch_dim(l);
        const std::size_t cells = cells_per_side * cells_per_side;
        std::vector<double> data(cells * pd);
        for (std::size_t v = 0; v < cells_per_side; ++v) {
            for (std::size_t u = 0; u < cells_per_side; ++u) {
                double* row = data.data() + (v * cells_per_side + u) * pd;
                std::size_t k = 0;
                for (std::size_t dy = 0; dy < s; ++dy) {
                    for (std::size_t dx = 0; dx < s; ++dx) {
                        for (std::size_t c = 0; c < 3; ++c) {
                            row[k++] =
                                scene.pixel(u * s + dx, v * s + dy, c);
                        }
                    }
                }
                // Position features: normalized cell center and level scale.
                row[k++] = (static_cast<double>(u) + 0.5) * s / sizes.image;
                row[k++] = (static_cast<double>(v) + 0.5) * s / sizes.image;
                row[k++] = static_cast<double>(s) / sizes.image;
                row[k++] = static_cast<double>(s) / sizes.image;
            }
        }
        nd::Tensor patches({cells, pd}, std::move(data));
        std::vector<double> tdata(pd * cells);
        for (std::size_t r = 0; r < cells; ++r) {
            for (std::size_t c = 0; c < pd; ++c) {
                tdata[c * cells + r] = patches.at2(r, c);
            }
        }
        cache.patches.push_back(std::move(patches));
        cache.patches_t.push_back(nd::Tensor({pd, cells}, std::move(tdata)));
        cache.geometry.push_back(pseudo::LevelGeometry{
            cells_per_side, cells_per_side, static_cast<double>(s)});
    }
    return cache;
}

DetectorVars enter_detector(nd::Graph& g, DetectorParams& params,
                            bool trainable) {
    auto enter = [&](nd::Tensor& t) {
        nd::Tensor copy = t;
        copy.set_requires_grad(trainable);
        return g.leaf(std::move(copy));
    };
    DetectorVars v;
    for (std::size_t l = 0; l < params.embed_w.size(); ++l) {
        v.embed_w.push_back(enter(params.embed_w[l]));
        v.embed_b.push_back(enter(params.embed_b[l]));
        v.key_w.push_back(enter(params.key_w[l]));
        v.val_w.push_back(enter(params.val_w[l]));
    }
    v.queries = enter(params.queries);
    v.box_w1 = enter(params.box_w1);
    v.box_b1 = enter(params.box_b1);
    v.box_w2 = enter(params.box_w2);
    v.box_b2 = enter(params.box_b2);
    v.cls_w1 = enter(params.cls_w1);
    v.cls_b1 = enter(params.cls_b1);
    v.cls_w2 = enter(params.cls_w2);
    v.cls_b2 = enter(params.cls_b2);
    return v;
}

ForwardResult detector_forward(nd::Graph& g, const DetectorVars& vars,
                               const PatchCache& cache,
                               const DetectorSizes& sizes) {
    if (cache.patches.size() != sizes.levels.size()) {
        throw std::invalid_argument("detector_forward: level count mismatch");
    }
    ForwardResult out;
    std::vector<nd::Var> values;  // per level, cells x d
    std::vector<nd::Var> keys_t;  // per level, d x cells
    for (std::size_t l = 0; l < sizes.levels.size(); ++l) {
        nd::Var patches = g.constant(cache.patches[l]);
        nd::Var patches_t = g.constant(cache.patches_t[l]);
        nd::Var features = nd::add_bias_row(
            g, g.matmul(patches, vars.embed_w[l]), vars.embed_b[l]);
        out.pyramid.push_back(features);
        values.push_back(g.matmul(features, vars.val_w[l]));
        keys_t.push_back(g.matmul(vars.key_w[l], patches_t));
    }
    nd::Var v_all = values.size() == 1 ? values[0] : g.concat(values, 0);
    nd::Var k_all = keys_t.size() == 1 ? keys_t[0] : g.concat(keys_t, 1);

    const double scale = 1.0 / std::sqrt(static_cast<double>(sizes.dim));
    nd::Var scores = g.scalar_mul(g.matmul(vars.queries, k_all), scale);
    nd::Var attn = g.softmax(scores);
    out.decoder_features = g.add(g.matmul(attn, v_all), vars.queries);

    nd::Var box_h = g.relu(nd::add_bias_row(
        g, g.matmul(out.decoder_features, vars.box_w1), vars.box_b1));
    out.boxes_cs = g.sigmoid(
        nd::add_bias_row(g, g.matmul(box_h, vars.box_w2), vars.box_b2));
    nd::Var cls_h = g.relu(nd::add_bias_row(
        g, g.matmul(out.decoder_features, vars.cls_w1), vars.cls_b1));
    out.cls_logits =
        nd::add_bias_row(g, g.matmul(cls_h, vars.cls_w2), vars.cls_b2);
    out.cls_probs = g.softmax(out.cls_logits);
    return out;
}

} // namespace daal::toy
