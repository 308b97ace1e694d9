#include "daal/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace daal::cli {

std::string to_string(Placement p) {
    switch (p) {
    case Placement::none: return "none";
    case Placement::backbone: return "backbone";
    case Placement::decoder: return "decoder";
    case Placement::both: return "backbone+decoder";
    }
    return "?";
}

std::string to_string(BackboneMode m) {
    return m == BackboneMode::ga ? "ga" : "oaa";
}

std::string to_string(DecoderMode m) {
    return m == DecoderMode::ota ? "ota" : "ada";
}

std::string to_string(OptimizerKind k) {
    return k == OptimizerKind::adam ? "adam" : "sgd";
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_list(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

std::vector<std::size_t> parse_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoull(item));
    }
    return out;
}

Placement parse_placement(const std::string& s) {
    if (s == "none") return Placement::none;
    if (s == "backbone") return Placement::backbone;
    if (s == "decoder") return Placement::decoder;
    if (s == "backbone+decoder" || s == "both") return Placement::both;
    throw std::invalid_argument("config: bad placement '" + s + "'");
}

BackboneMode parse_backbone_mode(const std::string& s) {
    if (s == "ga") return BackboneMode::ga;
    if (s == "oaa") return BackboneMode::oaa;
    throw std::invalid_argument("config: bad backbone_mode '" + s + "'");
}

DecoderMode parse_decoder_mode(const std::string& s) {
    if (s == "ota") return DecoderMode::ota;
    if (s == "ada") return DecoderMode::ada;
    throw std::invalid_argument("config: bad decoder_mode '" + s + "'");
}

OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd") return OptimizerKind::sgd;
    throw std::invalid_argument("config: bad optimizer '" + s + "'");
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::invalid_argument("config: bad bool '" + s + "'");
}

} // namespace

void RunConfig::validate() const {
    if (tau < 0.0 || tau > 1.0) {
        throw std::invalid_argument("config: tau must be in [0,1]");
    }
    if (lambda < 0.0 || beta < 0.0) {
        throw std::invalid_argument("config: lambda and beta must be >= 0");
    }
    if (projections == 0) {
        throw std::invalid_argument("config: projections must be >= 1");
    }
    if (level_strides.empty() || level_strides.size() != level_channels.size()) {
        throw std::invalid_argument("config: level_strides and level_channels "
                                    "must be equal-length and nonempty");
    }
    for (std::size_t s : level_strides) {
        if (s == 0 || image_size % s != 0) {
            throw std::invalid_argument("config: image_size must be divisible "
                                        "by every stride");
        }
    }
    if (batch_size == 0 || queries == 0 || feature_dim == 0) {
        throw std::invalid_argument("config: degenerate sizes");
    }
    if (max_objects > queries) {
        throw std::invalid_argument("config: max_objects exceeds query count");
    }
    if (source_scenes < batch_size || target_scenes < batch_size) {
        throw std::invalid_argument("config: training pools smaller than a "
                                    "batch");
    }
    if (num_classes == 0 || num_classes > 3) {
        throw std::invalid_argument("config: num_classes must be 1..3");
    }
    if (lr_detector <= 0.0 || lr_discriminator <= 0.0) {
        throw std::invalid_argument("config: learning rates must be positive");
    }
    if (refresh_epochs == 0 || checkpoint_epochs == 0) {
        throw std::invalid_argument("config: cadences must be >= 1");
    }
    if (checkpoint_epochs % refresh_epochs != 0) {
        throw std::invalid_argument("config: checkpoint_epochs must be a "
                                    "multiple of refresh_epochs so resumed "
                                    "runs refresh identically");
    }
}

std::string RunConfig::serialize() const {
    std::ostringstream os;
    os << "seed=" << seed << "\n";
    os << "image_size=" << image_size << "\n";
    os << "level_strides=" << fmt_list(level_strides) << "\n";
    os << "level_channels=" << fmt_list(level_channels) << "\n";
    os << "queries=" << queries << "\n";
    os << "feature_dim=" << feature_dim << "\n";
    os << "disc_hidden=" << disc_hidden << "\n";
    os << "num_classes=" << num_classes << "\n";
    os << "max_objects=" << max_objects << "\n";
    os << "source_scenes=" << source_scenes << "\n";
    os << "target_scenes=" << target_scenes << "\n";
    os << "eval_scenes=" << eval_scenes << "\n";
    os << "shift_haze=" << fmt_double(shift.haze) << "\n";
    os << "shift_brightness=" << fmt_double(shift.brightness) << "\n";
    os << "shift_texture=" << fmt_double(shift.texture_shift) << "\n";
    os << "shift_noise=" << fmt_double(shift.noise_sigma) << "\n";
    os << "shift_seed=" << shift.seed << "\n";
    os << "tau=" << fmt_double(tau) << "\n";
    os << "lambda=" << fmt_double(lambda) << "\n";
    os << "beta=" << fmt_double(beta) << "\n";
    os << "projections=" << projections << "\n";
    os << "grl_factor=" << fmt_double(grl_factor) << "\n";
    os << "placement=" << to_string(placement) << "\n";
    os << "backbone_mode=" << to_string(backbone_mode) << "\n";
    os << "decoder_mode=" << to_string(decoder_mode) << "\n";
    os << "disc_frozen=" << (disc_frozen ? "true" : "false") << "\n";
    os << "optimizer=" << to_string(optimizer) << "\n";
    os << "lr_detector=" << fmt_double(lr_detector) << "\n";
    os << "lr_discriminator=" << fmt_double(lr_discriminator) << "\n";
    os << "steps=" << steps << "\n";
    os << "pretrain_steps=" << pretrain_steps << "\n";
    os << "batch_size=" << batch_size << "\n";
    os << "refresh_epochs=" << refresh_epochs << "\n";
    os << "checkpoint_epochs=" << checkpoint_epochs << "\n";
    os << "output_dir=" << output_dir << "\n";
    return os.str();
}

std::uint64_t RunConfig::hash() const {
    std::istringstream is(serialize());
    std::string line;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    while (std::getline(is, line)) {
        if (line.rfind("output_dir=", 0) == 0) continue;
        for (char c : line) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        h ^= static_cast<unsigned char>('\n');
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

void apply_kv(RunConfig& cfg, const std::string& key, const std::string& val) {
    if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "image_size") cfg.image_size = std::stoull(val);
    else if (key == "level_strides") cfg.level_strides = parse_list(val);
    else if (key == "level_channels") cfg.level_channels = parse_list(val);
    else if (key == "queries") cfg.queries = std::stoull(val);
    else if (key == "feature_dim") cfg.feature_dim = std::stoull(val);
    else if (key == "disc_hidden") cfg.disc_hidden = std::stoull(val);
    else if (key == "num_classes") cfg.num_classes = std::stoull(val);
    else if (key == "max_objects") cfg.max_objects = std::stoull(val);
    else if (key == "source_scenes") cfg.source_scenes = std::stoull(val);
    else if (key == "target_scenes") cfg.target_scenes = std::stoull(val);
    else if (key == "eval_scenes") cfg.eval_scenes = std::stoull(val);
    else if (key == "shift_haze") cfg.shift.haze = std::stod(val);
    else if (key == "shift_brightness") cfg.shift.brightness = std::stod(val);
    else if (key == "shift_texture") cfg.shift.texture_shift = std::stod(val);
    else if (key == "shift_noise") cfg.shift.noise_sigma = std::stod(val);
    else if (key == "shift_seed") cfg.shift.seed = std::stoull(val);
    else if (key == "tau") cfg.tau = std::stod(val);
    else if (key == "lambda") cfg.lambda = std::stod(val);
    else if (key == "beta") cfg.beta = std::stod(val);
    else if (key == "projections") cfg.projections = std::stoull(val);
    else if (key == "grl_factor") cfg.grl_factor = std::stod(val);
    else if (key == "placement") cfg.placement = parse_placement(val);
    else if (key == "backbone_mode") cfg.backbone_mode = parse_backbone_mode(val);
    else if (key == "decoder_mode") cfg.decoder_mode = parse_decoder_mode(val);
    else if (key == "disc_frozen") cfg.disc_frozen = parse_bool(val);
    else if (key == "optimizer") cfg.optimizer = parse_optimizer(val);
    else if (key == "lr_detector") cfg.lr_detector = std::stod(val);
    else if (key == "lr_discriminator") cfg.lr_discriminator = std::stod(val);
    else if (key == "steps") cfg.steps = std::stoull(val);
    else if (key == "pretrain_steps") cfg.pretrain_steps = std::stoull(val);
    else if (key == "batch_size") cfg.batch_size = std::stoull(val);
    else if (key == "refresh_epochs") cfg.refresh_epochs = std::stoull(val);
    else if (key == "checkpoint_epochs") cfg.checkpoint_epochs = std::stoull(val);
    else if (key == "output_dir") cfg.output_dir = val;
    else {
        throw std::invalid_argument("config: unknown key '" + key + "'");
    }
}

} // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        // Trim.
        while (!line.empty() && (line.back() == ' ' || line.back() == '\r' ||
                                 line.back() == '\t')) {
            line.pop_back();
        }
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        line = line.substr(start);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value, got '" + line +
                                        "'");
        }
        apply_kv(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("config: cannot open " + path);
    }
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_config_text(buf.str());
}

void apply_overrides(
    RunConfig& cfg,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
    for (const auto& [key, val] : overrides) apply_kv(cfg, key, val);
}

} // namespace daal::cli
