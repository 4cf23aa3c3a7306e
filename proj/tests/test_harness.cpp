#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cedo/harness.hpp"

using namespace cedo;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.data.synth.samples = 240;
    cfg.data.synth.seed = 7;
    cfg.data.split_seed = 11;
    cfg.epochs = 3;
    cfg.batch_size = 32;
    cfg.seed = 1;
    return cfg;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("config json round trips and rejects unknown keys") {
    TrainConfig cfg = tiny_config();
    cfg.mho = true;
    cfg.gms = true;
    cfg.dlr = true;
    cfg.scope = GradScope::All;
    cfg.gms_cfg.ortho_mode = OrthoMode::Literal;
    cfg.tau = 0.7;
    cfg.q_branch = true;
    std::string text = config_to_json_text(cfg);
    TrainConfig back = config_from_json_text(text);
    CHECK(back.epochs == 3);
    CHECK(back.batch_size == 32);
    CHECK(back.mho);
    CHECK(back.gms);
    CHECK(back.dlr);
    CHECK(back.scope == GradScope::All);
    CHECK(back.gms_cfg.ortho_mode == OrthoMode::Literal);
    CHECK(back.tau == 0.7);
    CHECK(back.data.synth.samples == 240);
    REQUIRE(back.q_branch.has_value());
    CHECK(*back.q_branch);
    CHECK(!back.v_branch.has_value()); // null round-trips to unset

    CHECK_THROWS_AS(config_from_json_text("{\"epohcs\": 3}"), ArgumentError);
    CHECK_THROWS_AS(config_from_json_text("{\"rates\": {\"eta_x\": 1.0}}"), ArgumentError);
    CHECK_THROWS_AS(config_from_json_text("{\"data\": {\"synth\": {\"n\": 4}}}"),
                    ArgumentError);
    CHECK_THROWS_AS(config_from_json_text("not json"), ArgumentError);
    CHECK_THROWS_AS(config_from_json_text("{\"epochs\": \"many\"}"), ArgumentError);
    // Partial configs inherit defaults.
    TrainConfig partial = config_from_json_text("{\"epochs\": 9}");
    CHECK(partial.epochs == 9);
    CHECK(partial.batch_size == 64);
    CHECK(partial.rates.eta_q == 0.002);
    CHECK(partial.data.synth.samples == 2000);
}

TEST_CASE("training is deterministic for a fixed seed") {
    TrainConfig cfg = tiny_config();
    cfg.mho = true;
    cfg.dlr = true;
    Dataset data = prepare_data(cfg.data);
    RunMetrics a = train_on(cfg, data);
    RunMetrics b = train_on(cfg, data);
    CHECK(a.test_accuracy.all == b.test_accuracy.all);
    REQUIRE(a.epochs.size() == b.epochs.size());
    for (std::size_t i = 0; i < a.epochs.size(); ++i) {
        CHECK(a.epochs[i].l_t == b.epochs[i].l_t);
        CHECK(a.epochs[i].l_supcon == b.epochs[i].l_supcon);
    }
    cfg.seed = 2;
    RunMetrics c = train_on(cfg, data);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.epochs.size(); ++i) {
        if (a.epochs[i].l_t != c.epochs[i].l_t) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("zero epochs still evaluates the initial model") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 0;
    Dataset data = prepare_data(cfg.data);
    RunMetrics r = train_on(cfg, data);
    CHECK(r.epochs.empty());
    CHECK(r.steps == 0);
    CHECK(r.test_accuracy.n_all > 0);
    CHECK(r.test_accuracy.n_all == data.test.size());
}

TEST_CASE("losses start near the uniform prediction level") {
    // At init the biases are zero and the weights are small, so the first
    // epoch's joint loss sits near ln(vocab).
    TrainConfig cfg = tiny_config();
    cfg.epochs = 1;
    Dataset data = prepare_data(cfg.data);
    RunMetrics r = train_on(cfg, data);
    REQUIRE(r.epochs.size() == 1);
    double uniform = std::log(static_cast<double>(data.answer_names.size()));
    CHECK(r.epochs[0].l_t > 0.2 * uniform);
    CHECK(r.epochs[0].l_t < 2.0 * uniform);
    // Disabled branches report exactly zero loss.
    CHECK(r.epochs[0].l_q == 0.0);
    CHECK(r.epochs[0].l_v == 0.0);
    CHECK(r.epochs[0].l_supcon == 0.0);
    CHECK(r.epochs[0].total == r.epochs[0].l_t);
    // Step count: ceil(train / batch) per epoch.
    std::size_t per_epoch = (data.train.size() + cfg.batch_size - 1) / cfg.batch_size;
    CHECK(r.steps == per_epoch);
}

TEST_CASE("mechanism toggles control the diagnostics") {
    TrainConfig cfg = tiny_config();
    Dataset data = prepare_data(cfg.data);
    RunMetrics plain = train_on(cfg, data);
    CHECK(!plain.gms.has_value());
    cfg.gms = true;
    std::ostringstream diag;
    RunMetrics with_gms = train_on(cfg, data, &diag);
    REQUIRE(with_gms.gms.has_value());
    CHECK(with_gms.gms->steps == with_gms.steps);
    // Branch losses follow the gms toggle when unset.
    REQUIRE(with_gms.epochs.size() == 3);
    CHECK(with_gms.epochs[0].l_q > 0.0);
    CHECK(with_gms.epochs[0].l_v > 0.0);
    // One diagnostics line per step.
    std::istringstream lines(diag.str());
    std::string line;
    std::size_t count = 0;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        CHECK(line.front() == '{');
        ++count;
    }
    CHECK(count == with_gms.steps);
    // The echoed config records the resolved branch toggles.
    REQUIRE(with_gms.config.q_branch.has_value());
    CHECK(*with_gms.config.q_branch);
}

TEST_CASE("epoch totals are the sum of the four components") {
    TrainConfig cfg = tiny_config();
    cfg.gms = true;
    cfg.dlr = true;
    cfg.mho = true;
    cfg.normalize_features = true;
    cfg.tau = 0.25;
    Dataset data = prepare_data(cfg.data);
    RunMetrics m = train_on(cfg, data);
    REQUIRE(!m.epochs.empty());
    for (const EpochStats& e : m.epochs) {
        double sum = e.l_t + e.l_q + e.l_v + e.l_supcon;
        CHECK(std::abs(e.total - sum) <= 1e-10);
        CHECK(e.l_supcon != 0.0);
    }
}

TEST_CASE("gms requires both unimodal branches") {
    TrainConfig cfg = tiny_config();
    cfg.gms = true;
    cfg.q_branch = false;
    Dataset data = prepare_data(cfg.data);
    CHECK_THROWS_AS(train_on(cfg, data), ArgumentError);
}

TEST_CASE("invalid run parameters are rejected before training") {
    Dataset data = prepare_data(tiny_config().data);
    {
        TrainConfig cfg = tiny_config();
        cfg.batch_size = 0;
        CHECK_THROWS_AS(train_on(cfg, data), ArgumentError);
    }
    {
        TrainConfig cfg = tiny_config();
        cfg.tau = -1.0;
        CHECK_THROWS_AS(train_on(cfg, data), ArgumentError);
    }
    {
        TrainConfig cfg = tiny_config();
        cfg.rates.eta_q = 0.0;
        CHECK_THROWS_AS(train_on(cfg, data), ArgumentError);
    }
    {
        TrainConfig cfg = tiny_config();
        cfg.dims.answers = 3; // synth vocab is larger
        CHECK_THROWS_AS(train_on(cfg, data), ArgumentError);
    }
    {
        TrainConfig cfg = tiny_config();
        cfg.dims.q_in = 5; // synth features are 12 wide
        CHECK_THROWS_AS(train_on(cfg, data), ArgumentError);
    }
}

TEST_CASE("train writes the full artifact set") {
    TempDir dir("cedo_harness_artifacts");
    TrainConfig cfg = tiny_config();
    cfg.gms = true;
    cfg.dlr = true;
    cfg.out_dir = (dir.path / "run").string();
    train(cfg);
    fs::path run = dir.path / "run";
    CHECK(fs::exists(run / "metrics.json"));
    CHECK(fs::exists(run / "metrics.csv"));
    CHECK(fs::exists(run / "checkpoint.json"));
    CHECK(fs::exists(run / "weights.table.json"));
    CHECK(fs::exists(run / "gms_diag.jsonl"));

    std::string metrics = slurp(run / "metrics.json");
    CHECK(metrics.find("cedo.metrics.v1") != std::string::npos);
    CHECK(metrics.find("final_accuracy") != std::string::npos);
    CHECK(metrics.find("gms_summary") != std::string::npos);
    // No timing noise and no machine-local paths in the exported artifacts.
    CHECK(metrics.find("wall") == std::string::npos);
    CHECK(metrics.find(run.string()) == std::string::npos);
    std::string csv = slurp(run / "metrics.csv");
    CHECK(csv.rfind("schema,", 0) == 0);

    // The checkpoint reloads into a usable model.
    ModelParams p = load_checkpoint((run / "checkpoint.json").string());
    CHECK(p.dims.answers > 0);

    std::string weights = slurp(run / "weights.table.json");
    CHECK(weights.find("cedo.weights.v1") != std::string::npos);
}

TEST_CASE("plain runs skip the mechanism artifacts") {
    TempDir dir("cedo_harness_plain");
    TrainConfig cfg = tiny_config();
    cfg.out_dir = (dir.path / "run").string();
    train(cfg);
    fs::path run = dir.path / "run";
    CHECK(fs::exists(run / "metrics.json"));
    CHECK(!fs::exists(run / "weights.table.json"));
    CHECK(!fs::exists(run / "gms_diag.jsonl"));
}

TEST_CASE("identical runs produce byte identical exports") {
    TempDir dir("cedo_harness_bytes");
    TrainConfig cfg = tiny_config();
    cfg.dlr = true;
    cfg.out_dir = (dir.path / "a").string();
    train(cfg);
    cfg.out_dir = (dir.path / "b").string();
    train(cfg);
    for (const char* name : {"metrics.json", "metrics.csv", "checkpoint.json",
                             "weights.table.json"}) {
        CHECK(slurp(dir.path / "a" / name) == slurp(dir.path / "b" / name));
    }
}

TEST_CASE("corpus and split files can drive a run end to end") {
    TempDir dir("cedo_harness_files");
    SynthSpec spec;
    spec.samples = 200;
    std::vector<QAExample> corpus = generate_synthetic(spec);
    fs::path corpus_path = dir.path / "corpus.json";
    save_corpus(corpus, corpus_path.string());

    CPSplit split = cp_split(corpus, 19);
    fs::path split_path = dir.path / "split.json";
    save_split(split, split_path.string());

    TrainConfig cfg = tiny_config();
    cfg.data.corpus_path = corpus_path.string();
    cfg.data.split_path = split_path.string();
    Dataset data = prepare_data(cfg.data);
    CHECK(data.train.size() == split.train_ids.size());
    CHECK(data.test.size() == split.test_ids.size());
    RunMetrics r = train_on(cfg, data);
    CHECK(r.steps > 0);

    // A split that names unknown ids is a data error.
    split.train_ids.push_back("zzz_not_in_corpus");
    save_split(split, split_path.string());
    CHECK_THROWS_AS(prepare_data(cfg.data), ParseError);
}

TEST_CASE("ablation grid holds the dataset fixed and varies mechanisms") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 1;
    AblationResult res = ablate(cfg, {1, 2});
    REQUIRE(res.mean_rows.size() == 5);
    REQUIRE(res.per_seed.size() == 2);
    REQUIRE(res.per_seed[0].size() == 5);
    CHECK(res.mean_rows[0].name == "baseline");
    CHECK(res.mean_rows[4].name == "cedo");
    CHECK(!res.mean_rows[0].mho);
    CHECK(res.mean_rows[1].mho);
    CHECK(res.mean_rows[2].gms);
    CHECK(res.mean_rows[3].dlr);
    CHECK(res.mean_rows[4].mho);
    CHECK(res.mean_rows[4].gms);
    CHECK(res.mean_rows[4].dlr);
    // Mean of per-seed accuracies.
    double mean0 = (res.per_seed[0][0].acc.all + res.per_seed[1][0].acc.all) / 2.0;
    CHECK(res.mean_rows[0].acc.all == doctest::Approx(mean0).epsilon(1e-12));
    std::string table = format_ablation(res);
    CHECK(table.find("baseline") != std::string::npos);
    CHECK(table.find("cedo") != std::string::npos);
    CHECK_THROWS_AS(ablate(cfg, {}), ArgumentError);
}

TEST_CASE("rate sweep covers the requested axes") {
    TrainConfig cfg = tiny_config();
    cfg.epochs = 1;
    std::vector<SweepPoint> pts = sweep_rates(cfg, {0.001, 0.003}, {}, {}, false);
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].eta_q == 0.001);
    CHECK(pts[0].eta_v == cfg.rates.eta_v);
    CHECK(pts[1].eta_q == 0.003);

    // Cartesian over a 2x1x2 grid, duplicates collapsed.
    std::vector<SweepPoint> grid =
        sweep_rates(cfg, {0.001, 0.002}, {0.003}, {0.003, 0.003}, true);
    REQUIRE(grid.size() == 2);
    CHECK(grid[0].eta_c == 0.003);
    CHECK_THROWS_AS(sweep_rates(cfg, {}, {}, {}, false), ArgumentError);

    TempDir dir("cedo_sweep_csv");
    fs::path csv = dir.path / "sweep.csv";
    export_sweep_csv(pts, csv.string());
    std::string text = slurp(csv);
    CHECK(text.rfind("eta_q,", 0) == 0);
    // Header plus one row per point.
    std::size_t newlines = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
    CHECK(newlines == 3);
}
