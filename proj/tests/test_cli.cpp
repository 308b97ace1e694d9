#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "daal/checkpoint.hpp"
#include "daal/config.hpp"
#include "daal/runner.hpp"
#include "daal/serialize.hpp"
#include "daal/train.hpp"

using namespace daal;
namespace fs = std::filesystem;

namespace {

cli::RunConfig tiny_config(const std::string& out) {
    cli::RunConfig cfg;
    cfg.image_size = 32;
    cfg.level_strides = {4, 8};
    cfg.level_channels = {6, 8};
    cfg.queries = 4;
    cfg.feature_dim = 8;
    cfg.disc_hidden = 4;
    cfg.max_objects = 3;
    cfg.source_scenes = 16;
    cfg.target_scenes = 16;
    cfg.eval_scenes = 8;
    cfg.projections = 8;
    cfg.batch_size = 4;
    cfg.pretrain_steps = 8;
    cfg.steps = 16; // 4 epochs of 4 steps
    cfg.refresh_epochs = 1;
    cfg.checkpoint_epochs = 2;
    cfg.lr_detector = 1e-3;
    cfg.output_dir = out;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace

TEST_CASE("config serialization round-trips") {
    cli::RunConfig cfg;
    cfg.seed = 99;
    cfg.tau = 0.65;
    cfg.lambda = 0.1;
    cfg.placement = cli::Placement::decoder;
    cfg.decoder_mode = cli::DecoderMode::ada;
    cfg.optimizer = cli::OptimizerKind::sgd;
    cfg.shift.haze = 0.123456789012345;
    cfg.level_strides = {2, 4, 8};
    cfg.level_channels = {4, 8, 16};
    const std::string text = cfg.serialize();
    const cli::RunConfig back = cli::parse_config_text(text);
    CHECK(back.serialize() == text);
    CHECK(back.hash() == cfg.hash());
}

TEST_CASE("defaults mirror the documented values") {
    const cli::RunConfig cfg;
    CHECK(cfg.tau == 0.5);
    CHECK(cfg.projections == 256);
    CHECK(cfg.lambda == 1.0);
    CHECK(cfg.beta == 1.0);
    CHECK(cfg.lr_detector == 2e-4);
    CHECK(cfg.lr_discriminator == 4e-3);
    CHECK(cfg.placement == cli::Placement::both);
}

TEST_CASE("flag overrides win over file values") {
    cli::RunConfig cfg = cli::parse_config_text("tau=0.4\nsteps=100\n");
    CHECK(cfg.tau == 0.4);
    cli::apply_overrides(cfg, {{"tau", "0.7"}, {"placement", "decoder"}});
    CHECK(cfg.tau == 0.7);
    CHECK(cfg.placement == cli::Placement::decoder);
    CHECK(cfg.steps == 100);
}

TEST_CASE("invalid configs are rejected before any work") {
    cli::RunConfig cfg;
    cfg.tau = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = cli::RunConfig{};
    cfg.beta = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = cli::RunConfig{};
    cfg.projections = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = cli::RunConfig{};
    cfg.image_size = 30; // not divisible by stride 4
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK_THROWS_AS(cli::parse_config_text("no_such_key=1\n"),
                    std::invalid_argument);
}

TEST_CASE("output_dir does not change the config hash") {
    cli::RunConfig a, b;
    a.output_dir = "x";
    b.output_dir = "y";
    CHECK(a.hash() == b.hash());
    b.seed = 2;
    CHECK(a.hash() != b.hash());
}

TEST_CASE("tensor fragments round-trip and report truncation offsets") {
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    const nd::Tensor t({2, 3}, {1.5, -2.25, 3.0, 0.0, 1e-300, 42.0});
    nd::write_fragment(ss, "det.example", t);
    std::uint64_t offset = 0;
    auto [name, back] = nd::read_fragment(ss, offset);
    CHECK(name == "det.example");
    CHECK(back == t);

    // Truncated stream: error mentions the byte offset.
    const std::string bytes = ss.str();
    std::stringstream cut(std::ios::in | std::ios::out | std::ios::binary);
    cut.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
    std::uint64_t off2 = 0;
    try {
        nd::read_fragment(cut, off2);
        FAIL("expected truncation error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
}

TEST_CASE("checkpoints save and load bit-exactly") {
    const fs::path dir = fs::temp_directory_path() / "daal_test_ckpt";
    fs::create_directories(dir);
    const std::string path = (dir / "model.ckpt").string();

    const cli::RunConfig cfg = tiny_config((dir / "out").string());
    toy::TrainState st = toy::init_train_state(cfg);
    cli::save_checkpoint(path, cfg.hash(), toy::export_state_tensors(st));

    const cli::LoadedCheckpoint loaded = cli::load_checkpoint(path);
    CHECK(loaded.config_hash == cfg.hash());
    toy::TrainState st2 = toy::init_train_state(cfg);
    // Perturb, then restore.
    st2.det.queries[0] += 1.0;
    toy::import_state_tensors(st2, loaded.tensors);
    bool equal = true;
    st.det.for_each([&](const std::string& name, nd::Tensor& t) {
        st2.det.for_each([&](const std::string& n2, nd::Tensor& t2) {
            if (n2 == name && !(t == t2)) equal = false;
        });
    });
    CHECK(equal);
    fs::remove_all(dir);
}

TEST_CASE("corrupt checkpoints are reported with offsets") {
    const fs::path dir = fs::temp_directory_path() / "daal_test_corrupt";
    fs::create_directories(dir);
    const std::string path = (dir / "bad.ckpt").string();
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE";
    }
    CHECK_THROWS_WITH_AS(cli::load_checkpoint(path),
                         doctest::Contains("magic"), std::runtime_error);
    {
        std::ofstream os(path, std::ios::binary);
        os << "DAAL";
        nd::write_u32(os, 77); // wrong version
        nd::write_u64(os, 0);
    }
    CHECK_THROWS_WITH_AS(cli::load_checkpoint(path),
                         doctest::Contains("version"), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("training runs end to end and is reproducible") {
    const fs::path base = fs::temp_directory_path() / "daal_test_run";
    fs::remove_all(base);

    cli::RunConfig cfg = tiny_config((base / "a").string());
    const cli::TrainResult ra = cli::run_train(cfg);
    cfg.output_dir = (base / "b").string();
    const cli::TrainResult rb = cli::run_train(cfg);

    CHECK(slurp(base / "a" / "metrics.csv") == slurp(base / "b" / "metrics.csv"));
    CHECK(slurp(base / "a" / "model.ckpt") == slurp(base / "b" / "model.ckpt"));
    CHECK(ra.final_map.map_at(0.5) == rb.final_map.map_at(0.5));

    // Metrics CSV carries the alignment columns for placement=both.
    const std::string header =
        slurp(base / "a" / "metrics.csv").substr(0, 200);
    CHECK(header.find("l_d_hat") != std::string::npos);
    CHECK(header.find("l_ota") != std::string::npos);
    fs::remove_all(base);
}

TEST_CASE("placement none logs only detection entries") {
    const fs::path base = fs::temp_directory_path() / "daal_test_none";
    fs::remove_all(base);
    cli::RunConfig cfg = tiny_config((base / "out").string());
    cfg.placement = cli::Placement::none;
    cli::run_train(cfg);
    std::istringstream is(slurp(base / "out" / "metrics.csv"));
    std::string header;
    std::getline(is, header);
    CHECK(header == "step,l_det,total");
    fs::remove_all(base);
}

TEST_CASE("resume continues the exact trajectory") {
    const fs::path base = fs::temp_directory_path() / "daal_test_resume";
    fs::remove_all(base);

    cli::RunConfig cfg = tiny_config((base / "full").string());
    cli::run_train(cfg);
    const std::string full_final = slurp(base / "full" / "model.ckpt");

    // The run checkpoints every 2 epochs (8 adaptation steps); the tagged
    // mid checkpoint sits at adaptation step 8 of 16.
    const fs::path mid = base / "full" / "model_000016.ckpt";
    REQUIRE(fs::exists(mid));

    cli::RunConfig resumed = cfg;
    resumed.output_dir = (base / "resumed").string();
    cli::run_train(resumed, mid.string());
    CHECK(slurp(base / "resumed" / "model.ckpt") == full_final);

    // A doctored config must be refused.
    cli::RunConfig other = cfg;
    other.tau = 0.9;
    other.output_dir = (base / "refused").string();
    CHECK_THROWS_WITH_AS(cli::run_train(other, mid.string()),
                         doctest::Contains("refused"), std::runtime_error);
    fs::remove_all(base);
}

TEST_CASE("eval regenerates the pool and writes a table") {
    const fs::path base = fs::temp_directory_path() / "daal_test_eval";
    fs::remove_all(base);
    cli::RunConfig cfg = tiny_config((base / "out").string());
    const cli::TrainResult r = cli::run_train(cfg);

    const cli::EvalResult e1 =
        cli::run_eval(r.checkpoint_path, "", (base / "eval1").string());
    const cli::EvalResult e2 =
        cli::run_eval(r.checkpoint_path, "", (base / "eval2").string());
    CHECK(e1.report.map_at(0.5) == r.final_map.map_at(0.5));
    CHECK(slurp(e1.csv_path) == slurp(e2.csv_path));
    CHECK(e1.table.find("mAP") != std::string::npos);

    // Snapshot-based eval consumes the written dataset.
    cli::run_gen_data(cfg, (base / "data").string());
    const cli::EvalResult e3 = cli::run_eval(
        r.checkpoint_path, (base / "data" / "eval").string(),
        (base / "eval3").string());
    CHECK(e3.report.thresholds.size() == 5);
    fs::remove_all(base);
}

TEST_CASE("zero-shift domains: adaptation does not hurt the degenerate case") {
    const fs::path base = fs::temp_directory_path() / "daal_test_zeroshift";
    fs::remove_all(base);
    std::vector<double> diffs;
    for (std::uint64_t seed : {3ULL, 11ULL, 19ULL}) {
        cli::RunConfig cfg = tiny_config((base / "none").string());
        cfg.seed = seed;
        cfg.shift = toy::DomainShiftConfig{}; // zero shift
        cfg.pretrain_steps = 40;
        cfg.steps = 40;
        cfg.placement = cli::Placement::none;
        const double map_none = cli::run_train(cfg).final_map.map_at(0.5);

        cfg.placement = cli::Placement::both;
        cfg.output_dir = (base / "both").string();
        const double map_both = cli::run_train(cfg).final_map.map_at(0.5);
        diffs.push_back(map_both - map_none);
    }
    double mean = 0.0;
    for (double d : diffs) mean += d;
    mean /= static_cast<double>(diffs.size());
    // Paired across seeds: no systematic harm beyond noise.
    CHECK(mean > -0.10);
    fs::remove_all(base);
}
