#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cedo/datagen.hpp"
#include "cedo/gms.hpp"
#include "cedo/losses.hpp"
#include "cedo/mho.hpp"
#include "cedo/model.hpp"

namespace cedo {

struct DataConfig {
    std::string corpus_path;    // empty: synthesize from `synth`
    std::string split_path;     // empty: run the prior-flip split with split_seed
    SynthSpec synth;
    std::uint64_t split_seed = 11;
    std::size_t qtype_prefix_len = 2;
};

struct TrainConfig {
    ModelDims dims{12, 12, 16, 16, 0}; // answers == 0: resolved from the corpus
    std::size_t epochs = 60;
    std::size_t batch_size = 64;
    std::uint64_t seed = 1;

    // Mechanism toggles; rows of the ablation table are exactly the 2^3
    // corners used below (baseline, each alone, all three).
    bool mho = false;
    bool gms = false;
    bool dlr = false;

    LearningRates rates;        // used when mho is on
    double single_rate = 0.003; // every group, when mho is off
    GmsConfig gms_cfg;
    GradScope scope = GradScope::Classifier;

    double tau = 1.0;
    bool normalize_features = false;
    // Unimodal branch losses; unset means "follow the gms toggle".
    std::optional<bool> q_branch;
    std::optional<bool> v_branch;

    DataConfig data;
    std::string out_dir; // empty: no files written
};

// JSON config file mirroring TrainConfig. Missing keys keep defaults, unknown
// keys are rejected. Failures surface as ArgumentError (a config error).
TrainConfig load_config(const std::string& path);
TrainConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const TrainConfig& cfg);

struct Dataset {
    std::vector<QAExample> train;
    std::vector<QAExample> test;
    std::vector<std::string> answer_names; // sorted corpus-wide vocabulary
    std::vector<std::string> qtype_names;
    CPSplit split;
};

Dataset prepare_data(const DataConfig& cfg);

struct EpochStats {
    std::size_t epoch = 0;
    double l_t = 0.0;
    double l_q = 0.0;
    double l_v = 0.0;
    double l_supcon = 0.0;
    double total = 0.0;
};

struct GmsSummary {
    std::size_t steps = 0;
    double mean_min_norm = 0.0;
    double mean_cos_tq = 0.0;
    double mean_cos_tv = 0.0;
    double mean_cos_qv = 0.0;
    std::array<double, 3> mean_alpha{};
    std::array<std::size_t, 3> surgery_counts{}; // (t, q, v)
    std::size_t stationary_steps = 0;
    std::size_t degenerate_steps = 0;
};

struct RunMetrics {
    TrainConfig config; // effective configuration echo
    std::size_t answer_vocab = 0;
    std::size_t qtype_vocab = 0;
    std::vector<EpochStats> epochs;
    Accuracy test_accuracy;
    Accuracy train_accuracy;
    std::optional<GmsSummary> gms;
    std::size_t steps = 0;
    double wall_seconds = 0.0; // console-only; exports exclude it by design
};

// One training run on prepared data. Per step: forward all enabled heads,
// losses (batch means), rarity-weighted contrastive term when dlr is on,
// gradient combination on the configured scope when gms is on, then the
// per-group (or single-rate) SGD update. Aborts with DivergenceError on a
// non-finite loss. gms_diag, when given, receives one JSON line per step;
// final_params, when given, receives the trained parameters.
RunMetrics train_on(const TrainConfig& cfg, const Dataset& data,
                    std::ostream* gms_diag = nullptr, ModelParams* final_params = nullptr);

// prepare_data + train_on; when out_dir is set writes metrics.json,
// metrics.csv, checkpoint.json, plus weights.table.json (dlr) and
// gms_diag.jsonl (gms).
RunMetrics train(const TrainConfig& cfg);

// Greedy argmax predictions of the joint head, as answer strings.
std::vector<std::string> predict(const ModelParams& params,
                                 const std::vector<QAExample>& examples,
                                 const std::vector<std::string>& answer_names,
                                 std::size_t batch_size);

extern const char* kMetricsCsvHeader;
extern const char* kSweepCsvHeader;

// format: "json" or "csv". Deterministic byte output for a fixed config+seed.
void export_metrics(const RunMetrics& m, const std::string& path, const std::string& format);

struct AblationRow {
    std::string name; // baseline | +mho | +gms | +dlr | cedo
    bool mho = false, gms = false, dlr = false;
    Accuracy acc;               // mean over seeds in the aggregate table
    double final_total_loss = 0.0;
};

struct AblationResult {
    std::vector<std::uint64_t> seeds;
    std::vector<AblationRow> mean_rows;                // exactly 5 rows
    std::vector<std::vector<AblationRow>> per_seed;    // one 5-row table per seed
};

// Runs the five toggle combinations on one shared dataset, for each seed.
AblationResult ablate(const TrainConfig& base, const std::vector<std::uint64_t>& seeds);
std::string format_ablation(const AblationResult& result);

struct SweepPoint {
    double eta_q = 0.0, eta_v = 0.0, eta_c = 0.0;
    Accuracy acc;
};

// Per-axis sweep varies one grid at a time with the other rates at their
// configured values; cartesian sweeps the full product.
std::vector<SweepPoint> sweep_rates(const TrainConfig& base, const std::vector<double>& eta_q_grid,
                                    const std::vector<double>& eta_v_grid,
                                    const std::vector<double>& eta_c_grid, bool cartesian);
void export_sweep_csv(const std::vector<SweepPoint>& points, const std::string& path);

} // namespace cedo
