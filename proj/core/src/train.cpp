#include "daal/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "daal/ota.hpp"
#include "daal/rng.hpp"

namespace daal::toy {

void Optimizer::update(const std::string& name, nd::Tensor& param,
                       const nd::Tensor& grad, double lr) {
    if (!param.same_shape(grad)) {
        throw std::invalid_argument("Optimizer: shape mismatch for " + name);
    }
    if (kind_ == cli::OptimizerKind::sgd) {
        for (std::size_t i = 0; i < param.numel(); ++i) {
            param[i] -= lr * grad[i];
        }
        return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    auto it = moments_.find(name);
    if (it == moments_.end()) {
        it = moments_
                 .emplace(name, std::make_pair(nd::Tensor::zeros(param.shape()),
                                               nd::Tensor::zeros(param.shape())))
                 .first;
    }
    nd::Tensor& m = it->second.first;
    nd::Tensor& v = it->second.second;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

void Optimizer::export_state(
    std::vector<std::pair<std::string, nd::Tensor>>& out) const {
    out.emplace_back("opt.t",
                     nd::Tensor::scalar(static_cast<double>(t_)));
    for (const auto& [name, mv] : moments_) {
        out.emplace_back("opt.m." + name, mv.first);
        out.emplace_back("opt.v." + name, mv.second);
    }
}

void Optimizer::import_state(
    const std::map<std::string, nd::Tensor>& tensors) {
    moments_.clear();
    t_ = 0;
    auto it = tensors.find("opt.t");
    if (it != tensors.end()) {
        t_ = static_cast<std::uint64_t>(it->second.item());
    }
    for (const auto& [name, tensor] : tensors) {
        if (name.rfind("opt.m.", 0) == 0) {
            const std::string base = name.substr(6);
            auto vit = tensors.find("opt.v." + base);
            if (vit == tensors.end()) {
                throw std::runtime_error("optimizer state missing opt.v." +
                                         base);
            }
            moments_[base] = {tensor, vit->second};
        }
    }
}

DetectorSizes sizes_from_config(const cli::RunConfig& cfg) {
    DetectorSizes sizes;
    sizes.image = cfg.image_size;
    sizes.levels.clear();
    for (std::size_t l = 0; l < cfg.level_strides.size(); ++l) {
        sizes.levels.push_back(
            LevelSpec{cfg.level_strides[l], cfg.level_channels[l]});
    }
    sizes.queries = cfg.queries;
    sizes.dim = cfg.feature_dim;
    sizes.num_classes = cfg.num_classes;
    return sizes;
}

SceneConfig scene_config_from(const cli::RunConfig& cfg) {
    SceneConfig sc;
    sc.width = cfg.image_size;
    sc.height = cfg.image_size;
    sc.num_classes = cfg.num_classes;
    sc.max_objects = cfg.max_objects;
    return sc;
}

namespace {

std::vector<std::vector<nd::Tensor>>
gt_masks_for(const Dataset& ds, std::span<const PatchCache> caches) {
    std::vector<std::vector<nd::Tensor>> out;
    out.reserve(ds.scenes.size());
    for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
        std::vector<pseudo::Box> boxes;
        for (const Annotation& a : ds.scenes[i].annotations) {
            boxes.push_back(a.box);
        }
        const auto masks =
            pseudo::source_masks_from_gt(boxes, caches[i].geometry);
        std::vector<nd::Tensor> tensors;
        tensors.reserve(masks.size());
        for (const auto& m : masks) {
            tensors.push_back(oaa::mask_to_tensor(m));
        }
        out.push_back(std::move(tensors));
    }
    return out;
}

std::vector<PatchCache> cache_dataset(const Dataset& ds,
                                      const DetectorSizes& sizes) {
    std::vector<PatchCache> caches;
    caches.reserve(ds.scenes.size());
    for (const Scene& s : ds.scenes) {
        caches.push_back(extract_patches(s, sizes));
    }
    return caches;
}

} // namespace

TrainData build_train_data(const cli::RunConfig& cfg) {
    const DetectorSizes sizes = sizes_from_config(cfg);
    const SceneConfig sc = scene_config_from(cfg);
    TrainData data;
    data.source = generate_dataset(mix_seed(cfg.seed, stream::source_data),
                                   cfg.source_scenes, sc, nullptr);
    data.target = generate_dataset(mix_seed(cfg.seed, stream::target_data),
                                   cfg.target_scenes, sc, &cfg.shift);
    data.eval = generate_dataset(mix_seed(cfg.seed, stream::eval_data),
                                 cfg.eval_scenes, sc, &cfg.shift);
    data.source_cache = cache_dataset(data.source, sizes);
    data.target_cache = cache_dataset(data.target, sizes);
    data.eval_cache = cache_dataset(data.eval, sizes);
    data.source_masks = gt_masks_for(data.source, data.source_cache);
    return data;
}

TrainState init_train_state(const cli::RunConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.cfg = cfg;
    st.sizes = sizes_from_config(cfg);
    st.sizes.validate();
    Rng prng(mix_seed(cfg.seed, stream::params));
    st.det = DetectorParams::init(st.sizes, prng);
    Rng drng(mix_seed(cfg.seed, stream::discriminator));
    for (const LevelSpec& level : st.sizes.levels) {
        st.disc.push_back(oaa::DiscriminatorHead::init(level.channels,
                                                       cfg.disc_hidden, drng));
    }
    st.ada_head =
        oaa::DiscriminatorHead::init(st.sizes.dim, cfg.disc_hidden, drng);
    st.opt = Optimizer(cfg.optimizer);
    return st;
}

namespace {

struct Binding {
    std::string name;
    nd::Tensor* param;
    nd::Var var;
};

void bind_detector(nd::Graph& g, TrainState& st, DetectorVars& vars,
                   std::vector<Binding>& bindings) {
    vars = enter_detector(g, st.det, true);
    std::vector<nd::Var> order;
    for (std::size_t l = 0; l < vars.embed_w.size(); ++l) {
        order.push_back(vars.embed_w[l]);
        order.push_back(vars.embed_b[l]);
        order.push_back(vars.key_w[l]);
        order.push_back(vars.val_w[l]);
    }
    order.push_back(vars.queries);
    order.push_back(vars.box_w1);
    order.push_back(vars.box_b1);
    order.push_back(vars.box_w2);
    order.push_back(vars.box_b2);
    order.push_back(vars.cls_w1);
    order.push_back(vars.cls_b1);
    order.push_back(vars.cls_w2);
    order.push_back(vars.cls_b2);
    std::size_t i = 0;
    st.det.for_each([&](const std::string& name, nd::Tensor& t) {
        bindings.push_back(Binding{name, &t, order[i++]});
    });
}

oaa::HeadVars bind_head(nd::Graph& g, const std::string& prefix,
                        oaa::DiscriminatorHead& head, double grl_factor,
                        bool trainable, std::vector<Binding>* bindings) {
    oaa::HeadVars vars = oaa::enter_head(g, head, trainable, grl_factor);
    if (trainable && bindings) {
        bindings->push_back(Binding{prefix + ".w1", &head.w1, vars.w1});
        bindings->push_back(Binding{prefix + ".b1", &head.b1, vars.b1});
        bindings->push_back(Binding{prefix + ".w2", &head.w2, vars.w2});
        bindings->push_back(Binding{prefix + ".b2", &head.b2, vars.b2});
    }
    return vars;
}

} // namespace

LossBundle train_step(TrainState& st, const TrainData& data,
                      std::span<const std::size_t> source_batch,
                      std::span<const std::size_t> target_batch,
                      bool adaptation_enabled) {
    const cli::RunConfig& cfg = st.cfg;
    if (source_batch.empty()) {
        throw std::invalid_argument("train_step: empty source batch");
    }
    const bool backbone_on = adaptation_enabled && cfg.alignment_backbone();
    const bool decoder_on = adaptation_enabled && cfg.alignment_decoder();
    const bool ota_active = decoder_on &&
                            cfg.decoder_mode == cli::DecoderMode::ota &&
                            cfg.beta != 0.0;
    const bool ada_active =
        decoder_on && cfg.decoder_mode == cli::DecoderMode::ada;
    if ((backbone_on || decoder_on) && target_batch.size() != source_batch.size()) {
        throw std::invalid_argument("train_step: source and target batches "
                                    "must match in size");
    }

    LossBundle bundle;
    try {
        nd::Graph g;
        std::vector<Binding> det_bindings;
        DetectorVars dvars;
        bind_detector(g, st, dvars, det_bindings);

        // Source forwards and the supervised detection loss come first so
        // this subgraph is identical whatever the alignment config.
        std::vector<ForwardResult> fwd_src;
        for (std::size_t idx : source_batch) {
            fwd_src.push_back(
                detector_forward(g, dvars, data.source_cache[idx], st.sizes));
        }
        const double image_w = static_cast<double>(cfg.image_size);
        nd::Var l_det;
        for (std::size_t i = 0; i < source_batch.size(); ++i) {
            const Scene& scene = data.source.scenes[source_batch[i]];
            const MatchResult match = match_predictions(
                fwd_src[i].boxes_cs.value(), fwd_src[i].cls_probs.value(),
                scene.annotations, image_w, image_w);
            nd::Var li =
                detection_loss(g, fwd_src[i].boxes_cs, fwd_src[i].cls_probs,
                               match, scene.annotations, image_w, image_w);
            l_det = i == 0 ? li : g.add(l_det, li);
        }
        l_det = g.scalar_mul(l_det,
                             1.0 / static_cast<double>(source_batch.size()));
        bundle.l_det = l_det.value().item();
        nd::Var backward_root = l_det;

        std::vector<ForwardResult> fwd_tgt;
        if (backbone_on || decoder_on) {
            for (std::size_t idx : target_batch) {
                fwd_tgt.push_back(detector_forward(
                    g, dvars, data.target_cache[idx], st.sizes));
            }
        }

        std::vector<Binding> disc_bindings;
        if (backbone_on) {
            if (st.target_masks.empty() &&
                cfg.backbone_mode == cli::BackboneMode::oaa && cfg.lambda != 0.0) {
                throw std::invalid_argument("train_step: pseudo masks not "
                                            "initialized; refresh first");
            }
            // A frozen discriminator plays no game: the branch is evaluated
            // on detached feature copies purely for logging.
            const bool live = !cfg.disc_frozen;
            std::vector<oaa::HeadVars> heads;
            for (std::size_t l = 0; l < st.disc.size(); ++l) {
                heads.push_back(bind_head(g, "disc.l" + std::to_string(l),
                                          st.disc[l], cfg.grl_factor, live,
                                          live ? &disc_bindings : nullptr));
            }
            const std::size_t levels = st.sizes.levels.size();
            oaa::LevelScores scores_src(levels), scores_tgt(levels);
            oaa::LevelMasks masks_src(levels), masks_tgt(levels);
            for (std::size_t i = 0; i < source_batch.size(); ++i) {
                for (std::size_t l = 0; l < levels; ++l) {
                    nd::Var feat = fwd_src[i].pyramid[l];
                    if (!live) feat = g.constant(feat.value());
                    scores_src[l].push_back(oaa::discriminate(g, heads[l], feat));
                }
            }
            for (std::size_t i = 0; i < target_batch.size(); ++i) {
                for (std::size_t l = 0; l < levels; ++l) {
                    nd::Var feat = fwd_tgt[i].pyramid[l];
                    if (!live) feat = g.constant(feat.value());
                    scores_tgt[l].push_back(oaa::discriminate(g, heads[l], feat));
                }
            }
            nd::Var l_d = oaa::global_align_loss(g, scores_src, scores_tgt);
            bundle.l_d = l_d.value().item();
            nd::Var l_oaa = l_d;
            if (cfg.backbone_mode == cli::BackboneMode::oaa &&
                cfg.lambda != 0.0) {
                for (std::size_t i = 0; i < source_batch.size(); ++i) {
                    for (std::size_t l = 0; l < levels; ++l) {
                        masks_src[l].push_back(
                            data.source_masks[source_batch[i]][l]);
                    }
                }
                for (std::size_t i = 0; i < target_batch.size(); ++i) {
                    for (std::size_t l = 0; l < levels; ++l) {
                        masks_tgt[l].push_back(
                            st.target_masks[target_batch[i]][l]);
                    }
                }
                nd::Var l_d_hat = oaa::masked_align_loss(
                    g, scores_src, scores_tgt, masks_src, masks_tgt);
                bundle.l_d_hat = l_d_hat.value().item();
                l_oaa = oaa::oaa_loss(g, l_d, l_d_hat, cfg.lambda);
            }
            bundle.l_oaa = l_oaa.value().item();
            if (live) backward_root = g.add(backward_root, l_oaa);
        }

        if (ota_active || ada_active) {
            std::vector<nd::Var> pool_src, pool_tgt;
            for (const ForwardResult& f : fwd_src) {
                pool_src.push_back(f.decoder_features);
            }
            for (const ForwardResult& f : fwd_tgt) {
                pool_tgt.push_back(f.decoder_features);
            }
            if (ota_active) {
                nd::Var src_all = pool_src.size() == 1 ? pool_src[0]
                                                       : g.concat(pool_src, 0);
                nd::Var tgt_all = pool_tgt.size() == 1 ? pool_tgt[0]
                                                       : g.concat(pool_tgt, 0);
                Rng prng(mix_seed(mix_seed(cfg.seed, stream::projections),
                                  st.step));
                const ota::ProjectionSet proj = ota::sample_projections(
                    cfg.projections, st.sizes.dim, prng);
                nd::Var l_ota = ota::sliced_w2(g, src_all, tgt_all, proj);
                bundle.l_decoder = l_ota.value().item();
                backward_root =
                    g.add(backward_root, g.scalar_mul(l_ota, cfg.beta));
            } else {
                const bool live = !cfg.disc_frozen;
                oaa::HeadVars head =
                    bind_head(g, "ada", st.ada_head, cfg.grl_factor, live,
                              live ? &disc_bindings : nullptr);
                oaa::LevelScores ssrc(1), stgt(1);
                for (const ForwardResult& f : fwd_src) {
                    nd::Var feat = live
                                       ? f.decoder_features
                                       : g.constant(f.decoder_features.value());
                    ssrc[0].push_back(oaa::discriminate(g, head, feat));
                }
                for (const ForwardResult& f : fwd_tgt) {
                    nd::Var feat = live
                                       ? f.decoder_features
                                       : g.constant(f.decoder_features.value());
                    stgt[0].push_back(oaa::discriminate(g, head, feat));
                }
                nd::Var l_ada = oaa::global_align_loss(g, ssrc, stgt);
                bundle.l_decoder = l_ada.value().item();
                if (live && cfg.beta != 0.0) {
                    backward_root = g.add(
                        backward_root, g.scalar_mul(l_ada, cfg.beta));
                }
            }
        }

        bundle.total = bundle.l_det + (backbone_on ? bundle.l_oaa : 0.0) +
                       ((ota_active || ada_active) ? cfg.beta * bundle.l_decoder
                                                   : 0.0);
        if (!std::isfinite(bundle.total)) {
            throw std::runtime_error("non-finite total loss");
        }

        const nd::GradientMap grads = g.backward(backward_root);
        st.opt.begin_step();
        for (const Binding& b : det_bindings) {
            if (const nd::Tensor* grad = grads.find(b.var)) {
                st.opt.update(b.name, *b.param, *grad, cfg.lr_detector);
            }
        }
        for (const Binding& b : disc_bindings) {
            if (const nd::Tensor* grad = grads.find(b.var)) {
                st.opt.update(b.name, *b.param, *grad, cfg.lr_discriminator);
            }
        }
        ++st.step;
    } catch (const std::exception& e) {
        std::ostringstream os;
        os << "train_step aborted at step " << st.step << ": " << e.what()
           << " (l_det=" << bundle.l_det << ", l_d=" << bundle.l_d
           << ", l_decoder=" << bundle.l_decoder << ")";
        throw std::runtime_error(os.str());
    }
    return bundle;
}

std::vector<pseudo::Detection> detect_scene(const DetectorSizes& sizes,
                                            const DetectorParams& params,
                                            const PatchCache& cache) {
    nd::Graph g;
    DetectorParams copy = params;
    DetectorVars vars = enter_detector(g, copy, false);
    const ForwardResult fwd = detector_forward(g, vars, cache, sizes);
    const nd::Tensor& boxes = fwd.boxes_cs.value();
    const nd::Tensor& probs = fwd.cls_probs.value();
    const double image = static_cast<double>(sizes.image);

    std::vector<pseudo::Detection> dets;
    for (std::size_t q = 0; q < sizes.queries; ++q) {
        int best = 0;
        double best_p = probs.at2(q, 0);
        for (std::size_t c = 1; c < sizes.num_classes; ++c) {
            if (probs.at2(q, c) > best_p) {
                best_p = probs.at2(q, c);
                best = static_cast<int>(c);
            }
        }
        pseudo::Detection det;
        det.box = cs_to_box(boxes.at2(q, 0), boxes.at2(q, 1), boxes.at2(q, 2),
                            boxes.at2(q, 3), image, image)
                      .clamped(image, image);
        det.score = best_p;
        det.class_id = best;
        dets.push_back(det);
    }
    return dets;
}

void refresh_pseudo_labels(TrainState& st, const TrainData& data) {
    st.target_masks.assign(data.target.scenes.size(), {});
    st.target_pseudo.assign(data.target.scenes.size(), {});
    st.pseudo_box_count = 0;
    st.pseudo_malformed = 0;
    for (std::size_t i = 0; i < data.target.scenes.size(); ++i) {
        const std::vector<pseudo::Detection> dets =
            detect_scene(st.sizes, st.det, data.target_cache[i]);
        const pseudo::FilterResult filtered =
            pseudo::filter_detections(dets, st.cfg.tau);
        st.pseudo_malformed += filtered.malformed_rejected;
        st.pseudo_box_count += filtered.set.boxes.size();
        for (const pseudo::Detection& d : dets) {
            if (d.box.well_formed() && d.score > st.cfg.tau) {
                st.target_pseudo[i].push_back(d);
            }
        }
        const auto masks = pseudo::rasterize_masks(
            filtered.set, data.target_cache[i].geometry);
        std::vector<nd::Tensor> tensors;
        for (const auto& m : masks) tensors.push_back(oaa::mask_to_tensor(m));
        st.target_masks[i] = std::move(tensors);
    }
}

std::vector<Prediction> predict_dataset(const DetectorSizes& sizes,
                                        const DetectorParams& params,
                                        const Dataset& dataset,
                                        std::span<const PatchCache> caches) {
    std::vector<Prediction> preds;
    for (std::size_t i = 0; i < dataset.scenes.size(); ++i) {
        const std::vector<pseudo::Detection> dets =
            detect_scene(sizes, params, caches[i]);
        for (std::size_t q = 0; q < dets.size(); ++q) {
            Prediction p;
            p.image_id = i;
            p.box_index = q;
            p.class_id = dets[q].class_id;
            p.confidence = dets[q].score;
            p.box = dets[q].box;
            preds.push_back(p);
        }
    }
    return preds;
}

ApReport evaluate_detector(const DetectorSizes& sizes,
                           const DetectorParams& params,
                           const Dataset& dataset,
                           std::span<const PatchCache> caches) {
    const std::vector<Prediction> preds =
        predict_dataset(sizes, params, dataset, caches);
    std::vector<GroundTruthBox> gts;
    for (std::size_t i = 0; i < dataset.scenes.size(); ++i) {
        for (const Annotation& a : dataset.scenes[i].annotations) {
            gts.push_back(GroundTruthBox{i, a.class_id, a.box});
        }
    }
    const std::vector<double> thresholds = default_thresholds();
    return evaluate_map(preds, gts, thresholds, sizes.num_classes);
}

std::vector<std::pair<std::string, nd::Tensor>>
export_state_tensors(TrainState& st) {
    std::vector<std::pair<std::string, nd::Tensor>> out;
    st.det.for_each([&](const std::string& name, nd::Tensor& t) {
        out.emplace_back(name, t);
    });
    for (std::size_t l = 0; l < st.disc.size(); ++l) {
        const std::string prefix = "disc.l" + std::to_string(l);
        out.emplace_back(prefix + ".w1", st.disc[l].w1);
        out.emplace_back(prefix + ".b1", st.disc[l].b1);
        out.emplace_back(prefix + ".w2", st.disc[l].w2);
        out.emplace_back(prefix + ".b2", st.disc[l].b2);
    }
    out.emplace_back("ada.w1", st.ada_head.w1);
    out.emplace_back("ada.b1", st.ada_head.b1);
    out.emplace_back("ada.w2", st.ada_head.w2);
    out.emplace_back("ada.b2", st.ada_head.b2);
    out.emplace_back("train.step",
                     nd::Tensor::scalar(static_cast<double>(st.step)));
    st.opt.export_state(out);
    return out;
}

void import_state_tensors(TrainState& st,
                          const std::map<std::string, nd::Tensor>& tensors) {
    auto take = [&](const std::string& name, nd::Tensor& into) {
        auto it = tensors.find(name);
        if (it == tensors.end()) {
            throw std::runtime_error("checkpoint missing tensor '" + name +
                                     "'");
        }
        if (it->second.shape() != into.shape()) {
            throw std::runtime_error("checkpoint tensor '" + name +
                                     "' has shape " + it->second.shape_str() +
                                     ", expected " + into.shape_str());
        }
        const bool rg = into.requires_grad();
        into = it->second;
        into.set_requires_grad(rg);
    };
    st.det.for_each([&](const std::string& name, nd::Tensor& t) {
        take(name, t);
    });
    for (std::size_t l = 0; l < st.disc.size(); ++l) {
        const std::string prefix = "disc.l" + std::to_string(l);
        take(prefix + ".w1", st.disc[l].w1);
        take(prefix + ".b1", st.disc[l].b1);
        take(prefix + ".w2", st.disc[l].w2);
        take(prefix + ".b2", st.disc[l].b2);
    }
    take("ada.w1", st.ada_head.w1);
    take("ada.b1", st.ada_head.b1);
    take("ada.w2", st.ada_head.w2);
    take("ada.b2", st.ada_head.b2);
    auto it = tensors.find("train.step");
    if (it == tensors.end()) {
        throw std::runtime_error("checkpoint missing tensor 'train.step'");
    }
    st.step = static_cast<std::uint64_t>(it->second.item());
    st.opt.import_state(tensors);
}

} // namespace daal::toy
