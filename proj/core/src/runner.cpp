#include "daal/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "daal/checkpoint.hpp"
#include "daal/rng.hpp"

namespace daal::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t stream_id,
                                     std::uint64_t epoch, std::size_t count) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(mix_seed(seed, stream_id), 1000003ULL * epoch + stream_id));
    rng.shuffle(order);
    return order;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot write " + path.string());
    }
    os << text;
}

void save_run_checkpoint(const fs::path& path, const RunConfig& cfg,
                         toy::TrainState& state) {
    save_checkpoint(path.string(), cfg.hash(),
                    toy::export_state_tensors(state));
    write_text_file(path.string() + ".config", cfg.serialize());
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) /
           static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

} // namespace

TrainResult run_train(const RunConfig& cfg, const std::string& resume_from,
                      std::ostream* progress) {
    cfg.validate();
    fs::create_directories(cfg.output_dir);

    toy::TrainState state = toy::init_train_state(cfg);
    const toy::TrainData data = toy::build_train_data(cfg);

    if (!resume_from.empty()) {
        const LoadedCheckpoint loaded = load_checkpoint(resume_from);
        if (loaded.config_hash != cfg.hash()) {
            throw std::runtime_error(
                "resume refused: checkpoint config hash " +
                std::to_string(loaded.config_hash) +
                " does not match this config (" + std::to_string(cfg.hash()) +
                ")");
        }
        toy::import_state_tensors(state, loaded.tensors);
        if (progress) {
            *progress << "resumed from " << resume_from << " at step "
                      << state.step << "\n";
        }
    }

    write_text_file(fs::path(cfg.output_dir) / "run.config", cfg.serialize());

    const std::size_t pool =
        std::min(cfg.source_scenes, cfg.target_scenes);
    const std::size_t steps_per_epoch = std::max<std::size_t>(
        1, pool / cfg.batch_size);
    const std::size_t refresh_every = steps_per_epoch * cfg.refresh_epochs;
    const std::size_t checkpoint_every =
        steps_per_epoch * cfg.checkpoint_epochs;
    const std::uint64_t total_steps = cfg.pretrain_steps + cfg.steps;

    MetricsLog log;
    toy::LossBundle last;
    const fs::path ckpt_path = fs::path(cfg.output_dir) / "model.ckpt";

    const bool needs_pseudo = cfg.alignment_backbone() &&
                              cfg.backbone_mode == BackboneMode::oaa &&
                              cfg.lambda != 0.0;
    std::vector<std::size_t> src_order, tgt_order;
    std::uint64_t cur_epoch = ~0ULL;

    const std::uint64_t resume_step = state.step;
    for (std::uint64_t s = resume_step; s < total_steps; ++s) {
        const bool adaptation = s >= cfg.pretrain_steps;
        const std::uint64_t phase_step = adaptation ? s - cfg.pretrain_steps : s;

        if (adaptation && phase_step != 0 && s != resume_step &&
            (phase_step % checkpoint_every == 0)) {
            char tagged[32];
            std::snprintf(tagged, sizeof(tagged), "model_%06llu.ckpt",
                          static_cast<unsigned long long>(s));
            save_run_checkpoint(fs::path(cfg.output_dir) / tagged, cfg, state);
            log.push_map(s, toy::evaluate_detector(state.sizes, state.det,
                                                   data.eval,
                                                   data.eval_cache));
        }
        if (adaptation && needs_pseudo && (phase_step % refresh_every == 0)) {
            toy::refresh_pseudo_labels(state, data);
            if (progress) {
                *progress << "step " << s << ": refreshed pseudo labels ("
                          << state.pseudo_box_count << " boxes kept, "
                          << state.pseudo_malformed << " malformed)\n";
            }
        }

        const std::uint64_t epoch = s / steps_per_epoch;
        if (epoch != cur_epoch) {
            src_order = epoch_order(cfg.seed, stream::shuffle * 2 + 1, epoch,
                                    cfg.source_scenes);
            tgt_order = epoch_order(cfg.seed, stream::shuffle * 2 + 2, epoch,
                                    cfg.target_scenes);
            cur_epoch = epoch;
        }
        const std::size_t b = (s % steps_per_epoch) * cfg.batch_size;
        std::vector<std::size_t> src_batch, tgt_batch;
        for (std::size_t i = 0; i < cfg.batch_size; ++i) {
            src_batch.push_back(src_order[(b + i) % cfg.source_scenes]);
            tgt_batch.push_back(tgt_order[(b + i) % cfg.target_scenes]);
        }

        const auto t0 = std::chrono::steady_clock::now();
        last = toy::train_step(state, data, src_batch, tgt_batch, adaptation);
        const auto t1 = std::chrono::steady_clock::now();

        StepRecord rec;
        rec.step = s;
        rec.l_det = last.l_det;
        rec.l_d = last.l_d;
        rec.l_d_hat = last.l_d_hat;
        rec.l_oaa = last.l_oaa;
        rec.l_decoder = last.l_decoder;
        rec.total = last.total;
        rec.wall_ms =
            std::chrono::duration<double, std::milli>(t1 - t0).count();
        log.push(rec);

        if (progress && (s + 1) % 200 == 0) {
            *progress << "step " << (s + 1) << "/" << total_steps
                      << " l_det=" << last.l_det << " total=" << last.total
                      << "\n";
        }
    }

    save_run_checkpoint(ckpt_path, cfg, state);
    const toy::ApReport final_map = toy::evaluate_detector(
        state.sizes, state.det, data.eval, data.eval_cache);
    log.push_map(total_steps, final_map);

    const fs::path metrics_path = fs::path(cfg.output_dir) / "metrics.csv";
    {
        std::ofstream os(metrics_path, std::ios::binary);
        log.write_metrics_csv(os, cfg.placement, cfg.decoder_mode);
    }
    {
        std::ofstream os(fs::path(cfg.output_dir) / "map.csv",
                         std::ios::binary);
        log.write_map_csv(os);
    }
    {
        std::ofstream os(fs::path(cfg.output_dir) / "timings.csv",
                         std::ios::binary);
        log.write_timings_csv(os);
    }
    if (progress) {
        *progress << format_map_table(final_map, cfg.num_classes);
    }

    TrainResult result;
    result.final_map = final_map;
    result.checkpoint_path = ckpt_path.string();
    result.metrics_path = metrics_path.string();
    result.last_losses = last;
    return result;
}

EvalResult run_eval(const std::string& checkpoint_path,
                    const std::string& dataset_dir,
                    const std::string& output_dir, std::ostream* progress) {
    const LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
    const std::string config_path = checkpoint_path + ".config";
    RunConfig cfg = parse_config_file(config_path);
    if (cfg.hash() != loaded.config_hash) {
        throw std::runtime_error("eval refused: " + config_path +
                                 " does not match the checkpoint's config "
                                 "hash");
    }
    cfg.validate();

    toy::TrainState state = toy::init_train_state(cfg);
    toy::import_state_tensors(state, loaded.tensors);

    toy::Dataset dataset;
    if (dataset_dir.empty()) {
        dataset = toy::generate_dataset(mix_seed(cfg.seed, stream::eval_data),
                                        cfg.eval_scenes,
                                        toy::scene_config_from(cfg),
                                        &cfg.shift);
    } else {
        dataset = toy::load_dataset(dataset_dir);
    }
    std::vector<toy::PatchCache> caches;
    for (const toy::Scene& s : dataset.scenes) {
        caches.push_back(toy::extract_patches(s, state.sizes));
    }

    EvalResult result;
    result.report = toy::evaluate_detector(state.sizes, state.det, dataset,
                                           caches);
    result.table = format_map_table(result.report, cfg.num_classes);

    const fs::path out_dir =
        output_dir.empty() ? fs::path(cfg.output_dir) : fs::path(output_dir);
    fs::create_directories(out_dir);
    const fs::path csv_path = out_dir / "eval.csv";
    {
        std::ofstream os(csv_path, std::ios::binary);
        MetricsLog log;
        log.push_map(state.step, result.report);
        log.write_map_csv(os);
    }
    result.csv_path = csv_path.string();
    if (progress) *progress << result.table;
    return result;
}

const AblationRow& AblationResult::row(const std::string& variant) const {
    for (const AblationRow& r : rows) {
        if (r.variant == variant) return r;
    }
    throw std::invalid_argument("ablation: no variant '" + variant + "'");
}

AblationResult run_ablation(const RunConfig& base,
                            std::span<const std::uint64_t> seeds,
                            std::ostream* progress) {
    if (seeds.size() < 3) {
        throw std::invalid_argument("run_ablation: needs at least 3 seeds");
    }
    base.validate();

    struct VariantSpec {
        std::string name;
        Placement placement;
        BackboneMode backbone;
        DecoderMode decoder;
    };
    const std::vector<VariantSpec> variants = {
        {"source", Placement::none, BackboneMode::oaa, DecoderMode::ota},
        {"ga", Placement::backbone, BackboneMode::ga, DecoderMode::ota},
        {"oaa", Placement::backbone, BackboneMode::oaa, DecoderMode::ota},
        {"ada", Placement::decoder, BackboneMode::oaa, DecoderMode::ada},
        {"ota", Placement::decoder, BackboneMode::oaa, DecoderMode::ota},
        {"full", Placement::both, BackboneMode::oaa, DecoderMode::ota},
    };

    AblationResult result;
    for (const VariantSpec& v : variants) {
        AblationRow row;
        row.variant = v.name;
        result.rows.push_back(row);
    }

    for (std::uint64_t seed : seeds) {
        RunConfig cfg = base;
        cfg.seed = seed;

        // One shared source-pretrained model per seed; every variant adapts
        // from the same initialization.
        toy::TrainState pretrained = toy::init_train_state(cfg);
        const toy::TrainData data = toy::build_train_data(cfg);
        const std::size_t pool = std::min(cfg.source_scenes, cfg.target_scenes);
        const std::size_t steps_per_epoch =
            std::max<std::size_t>(1, pool / cfg.batch_size);

        auto run_phase = [&](toy::TrainState& st, std::uint64_t from,
                             std::uint64_t to, bool adaptation) {
            std::vector<std::size_t> src_order, tgt_order;
            std::uint64_t cur_epoch = ~0ULL;
            const std::size_t refresh_every =
                steps_per_epoch * st.cfg.refresh_epochs;
            const bool needs_pseudo =
                st.cfg.alignment_backbone() &&
                st.cfg.backbone_mode == BackboneMode::oaa &&
                st.cfg.lambda != 0.0;
            for (std::uint64_t s = from; s < to; ++s) {
                if (adaptation && needs_pseudo &&
                    ((s - from) % refresh_every == 0)) {
                    toy::refresh_pseudo_labels(st, data);
                }
                const std::uint64_t epoch = s / steps_per_epoch;
                if (epoch != cur_epoch) {
                    src_order = epoch_order(st.cfg.seed, stream::shuffle * 2 + 1,
                                            epoch, st.cfg.source_scenes);
                    tgt_order = epoch_order(st.cfg.seed, stream::shuffle * 2 + 2,
                                            epoch, st.cfg.target_scenes);
                    cur_epoch = epoch;
                }
                const std::size_t b = (s % steps_per_epoch) * st.cfg.batch_size;
                std::vector<std::size_t> src_batch, tgt_batch;
                for (std::size_t i = 0; i < st.cfg.batch_size; ++i) {
                    src_batch.push_back(src_order[(b + i) % st.cfg.source_scenes]);
                    tgt_batch.push_back(tgt_order[(b + i) % st.cfg.target_scenes]);
                }
                toy::train_step(st, data, src_batch, tgt_batch, adaptation);
            }
        };

        run_phase(pretrained, 0, cfg.pretrain_steps, false);
        if (progress) {
            const toy::ApReport pre = toy::evaluate_detector(
                pretrained.sizes, pretrained.det, data.eval, data.eval_cache);
            *progress << "seed " << seed << ": pretrained target mAP50="
                      << pre.map_at(0.5) << "\n";
        }

        for (std::size_t vi = 0; vi < variants.size(); ++vi) {
            const VariantSpec& v = variants[vi];
            toy::TrainState st = pretrained;
            st.cfg.placement = v.placement;
            st.cfg.backbone_mode = v.backbone;
            st.cfg.decoder_mode = v.decoder;
            run_phase(st, cfg.pretrain_steps, cfg.pretrain_steps + cfg.steps,
                      v.placement != Placement::none);
            const toy::ApReport rep = toy::evaluate_detector(
                st.sizes, st.det, data.eval, data.eval_cache);
            result.rows[vi].map50.push_back(rep.map_at(0.5));
            result.rows[vi].ratio80.push_back(rep.ratio80);
            result.rows[vi].ratio90.push_back(rep.ratio90);
            if (progress) {
                *progress << "seed " << seed << " " << v.name << ": mAP50="
                          << rep.map_at(0.5) << " r80=" << rep.ratio80
                          << " r90=" << rep.ratio90 << "\n";
            }
        }
    }

    std::ostringstream os;
    os << "variant      mAP50 (mean+-sd over " << seeds.size() << " seeds)"
       << "   r80/50   r90/50\n";
    for (AblationRow& row : result.rows) {
        row.mean_map50 = mean_of(row.map50);
        row.sd_map50 = sd_of(row.map50);
        row.mean_ratio80 = mean_of(row.ratio80);
        row.mean_ratio90 = mean_of(row.ratio90);
        char line[160];
        std::snprintf(line, sizeof(line), "%-10s  %.4f +- %.4f   %.4f   %.4f\n",
                      row.variant.c_str(), row.mean_map50, row.sd_map50,
                      row.mean_ratio80, row.mean_ratio90);
        os << line;
    }
    auto m = [&](const char* name) { return result.row(name).mean_map50; };
    os << "orderings:\n";
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "  source %.4f < oaa %.4f: %s\n", m("source"), m("oaa"),
                  m("source") < m("oaa") ? "yes" : "NO");
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "  source %.4f < ota %.4f: %s\n", m("source"), m("ota"),
                  m("source") < m("ota") ? "yes" : "NO");
    os << buf;
    std::snprintf(buf, sizeof(buf), "  oaa %.4f < full %.4f: %s\n", m("oaa"),
                  m("full"), m("oaa") < m("full") ? "yes" : "NO");
    os << buf;
    std::snprintf(buf, sizeof(buf), "  ota %.4f < full %.4f: %s\n", m("ota"),
                  m("full"), m("ota") < m("full") ? "yes" : "NO");
    os << buf;
    std::snprintf(buf, sizeof(buf), "  oaa %.4f >= ga %.4f: %s\n", m("oaa"),
                  m("ga"), m("oaa") >= m("ga") ? "yes" : "NO");
    os << buf;
    std::snprintf(buf, sizeof(buf), "  ota %.4f >= ada %.4f: %s\n", m("ota"),
                  m("ada"), m("ota") >= m("ada") ? "yes" : "NO");
    os << buf;
    std::snprintf(buf, sizeof(buf), "  full - source = %.4f (want >= 0.05)\n",
                  m("full") - m("source"));
    os << buf;
    result.summary = os.str();
    if (progress) *progress << result.summary;
    return result;
}

void run_gen_data(const RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    const toy::SceneConfig sc = toy::scene_config_from(cfg);
    toy::save_dataset(
        (fs::path(out_dir) / "source").string(),
        toy::generate_dataset(mix_seed(cfg.seed, stream::source_data),
                              cfg.source_scenes, sc, nullptr));
    toy::save_dataset(
        (fs::path(out_dir) / "target").string(),
        toy::generate_dataset(mix_seed(cfg.seed, stream::target_data),
                              cfg.target_scenes, sc, &cfg.shift));
    toy::save_dataset(
        (fs::path(out_dir) / "eval").string(),
        toy::generate_dataset(mix_seed(cfg.seed, stream::eval_data),
                              cfg.eval_scenes, sc, &cfg.shift));
}

} // namespace daal::cli
