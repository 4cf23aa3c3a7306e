// Command-line front end: training, ablation grid, rate sweeps, corpus
// generation, prior-flip splitting, split inspection and checkpoint
// evaluation.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
// divergence.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cedo/harness.hpp"

using namespace cedo;
namespace fs = std::filesystem;

namespace {

// ------------------------------------------------------------- train options

// Every tunable is also a flag so a config file is never required; flags that
// were actually passed override the config file field by field.
struct TrainFlags {
    CLI::App* cmd = nullptr;
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 1;
    std::size_t epochs = 60;
    std::size_t batch_size = 64;
    bool mho = false, gms = false, dlr = false;
    double eta_q = 0.002, eta_v = 0.003, eta_c = 0.003;
    double single_rate = 0.003;
    double tau = 1.0;
    bool normalize_features = false;
    std::string scope = "classifier";
    std::string ortho_mode = "orthogonal";
    std::string combine_mode = "plain_sum";
    bool conflict_only = true;
    std::size_t pareto_max_iters = 250;
    double pareto_tol = 1e-9;
    bool q_branch = false, v_branch = false;
    std::string corpus, split;
    std::uint64_t split_seed = 11;
    std::size_t qtype_prefix_len = 2;
    std::size_t samples = 2000;
    std::uint64_t synth_seed = 7;
    double signal_strength = 0.9;
    double noise = 0.3;

    void add_to(CLI::App* sub) {
        cmd = sub;
        sub->add_option("--config", config_path, "JSON config file (flags override its fields)");
        sub->add_option("--out", out_dir, "output directory for run artifacts");
        sub->add_option("--seed", seed, "training seed (init + shuffling)");
        sub->add_option("--epochs", epochs, "training epochs");
        sub->add_option("--batch-size", batch_size, "minibatch size");
        sub->add_flag("--mho,!--no-mho", mho, "per-group learning rates");
        sub->add_flag("--gms,!--no-gms", gms, "pareto + orthogonalization gradient surgery");
        sub->add_flag("--dlr,!--no-dlr", dlr, "rarity-weighted contrastive loss");
        sub->add_option("--eta-q", eta_q, "question encoder rate (with --mho)");
        sub->add_option("--eta-v", eta_v, "image encoder rate (with --mho)");
        sub->add_option("--eta-c", eta_c, "fusion + classifier rate (with --mho)");
        sub->add_option("--single-rate", single_rate, "shared rate when --mho is off");
        sub->add_option("--tau", tau, "contrastive temperature");
        sub->add_flag("--normalize-features,!--no-normalize-features", normalize_features,
                      "l2-normalize embeddings inside the contrastive loss");
        sub->add_option("--scope", scope, "surgery scope: classifier|all");
        sub->add_option("--ortho-mode", ortho_mode, "literal|orthogonal");
        sub->add_option("--combine-mode", combine_mode, "plain_sum|pareto_weighted");
        sub->add_flag("--conflict-only,!--no-conflict-only", conflict_only,
                      "only correct conflicting gradient pairs");
        sub->add_option("--pareto-max-iters", pareto_max_iters, "min-norm solver iteration cap");
        sub->add_option("--pareto-tol", pareto_tol, "min-norm solver improvement tolerance");
        sub->add_flag("--q-branch,!--no-q-branch", q_branch,
                      "question-only loss branch (default follows --gms)");
        sub->add_flag("--v-branch,!--no-v-branch", v_branch,
                      "image-only loss branch (default follows --gms)");
        sub->add_option("--corpus", corpus, "corpus JSON (default: synthesize)");
        sub->add_option("--split", split, "split JSON (default: derive with --split-seed)");
        sub->add_option("--split-seed", split_seed, "seed for the derived split");
        sub->add_option("--qtype-prefix-len", qtype_prefix_len,
                        "question tokens forming the qtype label");
        sub->add_option("--samples", samples, "synthetic corpus size");
        sub->add_option("--synth-seed", synth_seed, "synthetic corpus seed");
        sub->add_option("--signal-strength", signal_strength, "synthetic answer signal scale");
        sub->add_option("--noise", noise, "synthetic feature noise sigma");
    }

    bool passed(const char* name) const { return cmd->count(name) > 0; }

    TrainConfig build() const {
        TrainConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        if (passed("--out")) cfg.out_dir = out_dir;
        if (passed("--seed")) cfg.seed = seed;
        if (passed("--epochs")) cfg.epochs = epochs;
        if (passed("--batch-size")) cfg.batch_size = batch_size;
        if (passed("--mho") || passed("--no-mho")) cfg.mho = mho;
        if (passed("--gms") || passed("--no-gms")) cfg.gms = gms;
        if (passed("--dlr") || passed("--no-dlr")) cfg.dlr = dlr;
        if (passed("--eta-q")) cfg.rates.eta_q = eta_q;
        if (passed("--eta-v")) cfg.rates.eta_v = eta_v;
        if (passed("--eta-c")) cfg.rates.eta_c = eta_c;
        if (passed("--single-rate")) cfg.single_rate = single_rate;
        if (passed("--tau")) cfg.tau = tau;
        if (passed("--normalize-features") || passed("--no-normalize-features")) {
            cfg.normalize_features = normalize_features;
        }
        if (passed("--scope")) cfg.scope = scope_from_name(scope);
        if (passed("--ortho-mode")) cfg.gms_cfg.ortho_mode = ortho_mode_from_name(ortho_mode);
        if (passed("--combine-mode")) {
            cfg.gms_cfg.combine_mode = combine_mode_from_name(combine_mode);
        }
        if (passed("--conflict-only") || passed("--no-conflict-only")) {
            cfg.gms_cfg.conflict_only = conflict_only;
        }
        if (passed("--pareto-max-iters")) cfg.gms_cfg.pareto_max_iters = pareto_max_iters;
        if (passed("--pareto-tol")) cfg.gms_cfg.pareto_tol = pareto_tol;
        if (passed("--q-branch") || passed("--no-q-branch")) cfg.q_branch = q_branch;
        if (passed("--v-branch") || passed("--no-v-branch")) cfg.v_branch = v_branch;
        if (passed("--corpus")) cfg.data.corpus_path = corpus;
        if (passed("--split")) cfg.data.split_path = split;
        if (passed("--split-seed")) cfg.data.split_seed = split_seed;
        if (passed("--qtype-prefix-len")) cfg.data.qtype_prefix_len = qtype_prefix_len;
        if (passed("--samples")) cfg.data.synth.samples = samples;
        if (passed("--synth-seed")) cfg.data.synth.seed = synth_seed;
        if (passed("--signal-strength")) cfg.data.synth.signal_strength = signal_strength;
        if (passed("--noise")) cfg.data.synth.noise = noise;
        return cfg;
    }
};

void print_accuracy(const char* label, const Accuracy& a) {
    std::printf("%s  all %.2f  open %.2f  closed %.2f  (n=%zu: %zu open, %zu closed)\n", label,
                a.all, a.open, a.closed, a.n_all, a.n_open, a.n_closed);
}

int run_train(const TrainFlags& flags) {
    TrainConfig cfg = flags.build();
    RunMetrics m = train(cfg);
    if (!m.epochs.empty()) {
        const EpochStats& last = m.epochs.back();
        std::printf("final losses  l_t %.4f  l_q %.4f  l_v %.4f  l_supcon %.4f  total %.4f\n",
                    last.l_t, last.l_q, last.l_v, last.l_supcon, last.total);
    }
    print_accuracy("test ", m.test_accuracy);
    print_accuracy("train", m.train_accuracy);
    if (m.gms) {
        std::printf("gms   mean min-norm %.4g  mean cos(t,q) %.3f  cos(t,v) %.3f  cos(q,v) %.3f  "
                    "stationary %zu/%zu\n",
                    m.gms->mean_min_norm, m.gms->mean_cos_tq, m.gms->mean_cos_tv,
                    m.gms->mean_cos_qv, m.gms->stationary_steps, m.gms->steps);
    }
    std::printf("%zu steps in %.1fs\n", m.steps, m.wall_seconds);
    if (!cfg.out_dir.empty()) std::printf("artifacts in %s\n", cfg.out_dir.c_str());
    return 0;
}

int run_ablate(const TrainFlags& flags, std::vector<std::uint64_t>& seeds) {
    TrainConfig cfg = flags.build();
    if (seeds.empty()) seeds = {1, 2, 3, 4, 5};
    AblationResult res = ablate(cfg, seeds);
    std::string table = format_ablation(res);
    std::printf("%s", table.c_str());
    if (!cfg.out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(cfg.out_dir, ec);
        if (ec) throw IoError("cannot create output directory " + cfg.out_dir);
        std::string path = cfg.out_dir + "/ablation.txt";
        FILE* f = std::fopen(path.c_str(), "w");
        if (!f) throw IoError("cannot open " + path);
        std::fputs(table.c_str(), f);
        std::fclose(f);
        std::printf("table written to %s\n", path.c_str());
    }
    return 0;
}

int run_sweep(const TrainFlags& flags, const std::vector<double>& gq,
              const std::vector<double>& gv, const std::vector<double>& gc, bool cartesian) {
    TrainConfig cfg = flags.build();
    std::vector<SweepPoint> points = sweep_rates(cfg, gq, gv, gc, cartesian);
    std::printf("%s\n", kSweepCsvHeader);
    for (const SweepPoint& p : points) {
        std::printf("%g,%g,%g,%.2f,%.2f,%.2f\n", p.eta_q, p.eta_v, p.eta_c, p.acc.all, p.acc.open,
                    p.acc.closed);
    }
    if (!cfg.out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(cfg.out_dir, ec);
        if (ec) throw IoError("cannot create output directory " + cfg.out_dir);
        std::string path = cfg.out_dir + "/sweep.csv";
        export_sweep_csv(points, path);
        std::printf("csv written to %s\n", path.c_str());
    }
    return 0;
}

int run_gen_synth(const SynthSpec& spec, const std::string& out) {
    std::vector<QAExample> corpus = generate_synthetic(spec);
    save_corpus(corpus, out);
    std::map<std::string, std::size_t> per_type;
    for (const QAExample& e : corpus) per_type[e.qtype] += 1;
    std::printf("%zu examples, %zu question types, q_dim %zu, v_dim %zu -> %s\n", corpus.size(),
                per_type.size(), spec.q_dim, spec.v_dim, out.c_str());
    for (const auto& [qt, n] : per_type) std::printf("  %-24s %zu\n", qt.c_str(), n);
    return 0;
}

int run_cp_split(const std::string& corpus_path, const std::string& out, std::uint64_t seed,
                 std::size_t prefix_len) {
    std::vector<QAExample> corpus = load_corpus(corpus_path);
    for (QAExample& e : corpus) {
        if (e.qtype.empty()) e.qtype = label_qtype(e.question, e.answer, prefix_len);
    }
    CPSplit split = cp_split(corpus, seed, prefix_len);
    save_split(split, out);
    std::printf("%-24s %-12s %5s %6s %6s  %s\n", "qtype", "answer", "size", "train", "test",
                "ratio");
    for (const AllocationEntry& e : split.log) {
        std::printf("%-24s %-12s %5zu %6zu %6zu  %s\n", e.qtype.c_str(), e.answer.c_str(),
                    e.cluster_size, e.train_count, e.test_count, e.ratio_used.c_str());
    }
    double ratio = split.test_ids.empty()
                       ? 0.0
                       : static_cast<double>(split.train_ids.size()) /
                             static_cast<double>(split.test_ids.size());
    std::printf("train %zu, test %zu (%.2f:1) -> %s\n", split.train_ids.size(),
                split.test_ids.size(), ratio, out.c_str());
    return 0;
}

int run_inspect(const std::string& corpus_path, const std::string& split_path,
                std::size_t prefix_len) {
    DataConfig dc;
    dc.corpus_path = corpus_path;
    dc.split_path = split_path;
    dc.qtype_prefix_len = prefix_len;
    Dataset data = prepare_data(dc);

    // Per-qtype answer histograms, mirrored across the two sides so the prior
    // flip is visible at a glance.
    std::map<std::string, std::map<std::string, std::pair<std::size_t, std::size_t>>> hist;
    std::map<std::string, std::pair<std::size_t, std::size_t>> totals;
    for (const QAExample& e : data.train) {
        hist[e.qtype][e.answer].first += 1;
        totals[e.qtype].first += 1;
    }
    for (const QAExample& e : data.test) {
        hist[e.qtype][e.answer].second += 1;
        totals[e.qtype].second += 1;
    }
    for (const auto& [qt, answers] : hist) {
        auto [tr_total, te_total] = totals[qt];
        std::printf("%s  (train %zu, test %zu)\n", qt.c_str(), tr_total, te_total);
        std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> rows(
            answers.begin(), answers.end());
        std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
            std::size_t na = a.second.first + a.second.second;
            std::size_t nb = b.second.first + b.second.second;
            if (na != nb) return na > nb;
            return a.first < b.first;
        });
        for (const auto& [answer, counts] : rows) {
            double tr_pct = tr_total ? 100.0 * static_cast<double>(counts.first) /
                                           static_cast<double>(tr_total)
                                     : 0.0;
            double te_pct = te_total ? 100.0 * static_cast<double>(counts.second) /
                                           static_cast<double>(te_total)
                                     : 0.0;
            std::printf("  %-16s train %5zu (%5.1f%%)   test %5zu (%5.1f%%)\n", answer.c_str(),
                        counts.first, tr_pct, counts.second, te_pct);
        }
    }
    return 0;
}

int run_eval(const std::string& corpus_path, const std::string& split_path,
             const std::string& checkpoint_path, const std::string& side,
             std::size_t prefix_len) {
    if (side != "test" && side != "train") {
        throw ArgumentError("eval: --on must be 'train' or 'test', got '" + side + "'");
    }
    DataConfig dc;
    dc.corpus_path = corpus_path;
    dc.split_path = split_path;
    dc.qtype_prefix_len = prefix_len;
    Dataset data = prepare_data(dc);
    ModelParams params = load_checkpoint(checkpoint_path);
    if (params.dims.answers != data.answer_names.size()) {
        throw StateError("checkpoint answer vocabulary (" +
                         std::to_string(params.dims.answers) + ") does not match the corpus (" +
                         std::to_string(data.answer_names.size()) + ")");
    }
    const std::vector<QAExample>& pool = side == "test" ? data.test : data.train;
    std::vector<std::string> preds = predict(params, pool, data.answer_names, 64);
    Accuracy acc = evaluate(preds, pool);
    print_accuracy(side == "test" ? "test " : "train", acc);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"gradient-coordination training toolkit"};
    app.require_subcommand(1);

    TrainFlags train_flags, ablate_flags, sweep_flags;

    CLI::App* cmd_train = app.add_subcommand("train", "run one training configuration");
    train_flags.add_to(cmd_train);

    CLI::App* cmd_ablate =
        app.add_subcommand("ablate", "run the five-row mechanism grid over seeds");
    ablate_flags.add_to(cmd_ablate);
    std::vector<std::uint64_t> seeds;
    cmd_ablate->add_option("--seeds", seeds, "seeds to average over (default 1..5)")
        ->delimiter(',');

    CLI::App* cmd_sweep = app.add_subcommand("sweep", "grid-sweep the per-group learning rates");
    sweep_flags.add_to(cmd_sweep);
    std::vector<double> grid_q, grid_v, grid_c;
    bool cartesian = false;
    cmd_sweep->add_option("--eta-q-grid", grid_q, "rates to try on the question group")
        ->delimiter(',');
    cmd_sweep->add_option("--eta-v-grid", grid_v, "rates to try on the image group")
        ->delimiter(',');
    cmd_sweep->add_option("--eta-c-grid", grid_c, "rates to try on the shared group")
        ->delimiter(',');
    cmd_sweep->add_flag("--cartesian", cartesian, "full product instead of one axis at a time");

    CLI::App* cmd_gen = app.add_subcommand("gen-synth", "write a synthetic biased corpus");
    SynthSpec spec;
    std::string gen_out;
    cmd_gen->add_option("--out", gen_out, "corpus JSON path")->required();
    cmd_gen->add_option("--samples", spec.samples, "number of examples");
    cmd_gen->add_option("--num-qtypes", spec.num_qtypes, "question families");
    cmd_gen->add_option("--answers-per-qtype", spec.answers_per_qtype, "answers per open family");
    cmd_gen->add_option("--q-dim", spec.q_dim, "question feature width");
    cmd_gen->add_option("--v-dim", spec.v_dim, "image feature width");
    cmd_gen->add_option("--signal-strength", spec.signal_strength, "answer signal scale");
    cmd_gen->add_option("--noise", spec.noise, "feature noise sigma");
    cmd_gen->add_option("--seed", spec.seed, "generation seed");

    CLI::App* cmd_split = app.add_subcommand("cp-split", "build the prior-flipping split");
    std::string split_corpus, split_out;
    std::uint64_t split_seed = 11;
    std::size_t split_prefix = 2;
    cmd_split->add_option("--corpus", split_corpus, "corpus JSON")->required();
    cmd_split->add_option("--out", split_out, "split JSON path")->required();
    cmd_split->add_option("--seed", split_seed, "shuffle seed");
    cmd_split->add_option("--qtype-prefix-len", split_prefix, "qtype label prefix length");

    CLI::App* cmd_inspect =
        app.add_subcommand("inspect", "per-qtype answer histograms for both split sides");
    std::string ins_corpus, ins_split;
    std::size_t ins_prefix = 2;
    cmd_inspect->add_option("--corpus", ins_corpus, "corpus JSON")->required();
    cmd_inspect->add_option("--split", ins_split, "split JSON")->required();
    cmd_inspect->add_option("--qtype-prefix-len", ins_prefix, "qtype label prefix length");

    CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on a split side");
    std::string eval_corpus, eval_split, eval_ckpt, eval_side = "test";
    std::size_t eval_prefix = 2;
    cmd_eval->add_option("--corpus", eval_corpus, "corpus JSON")->required();
    cmd_eval->add_option("--split", eval_split, "split JSON")->required();
    cmd_eval->add_option("--checkpoint", eval_ckpt, "checkpoint JSON")->required();
    cmd_eval->add_option("--on", eval_side, "side to evaluate: test|train");
    cmd_eval->add_option("--qtype-prefix-len", eval_prefix, "qtype label prefix length");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help / --version
        app.exit(e);
        return 2;
    }

    try {
        if (*cmd_train) return run_train(train_flags);
        if (*cmd_ablate) return run_ablate(ablate_flags, seeds);
        if (*cmd_sweep) return run_sweep(sweep_flags, grid_q, grid_v, grid_c, cartesian);
        if (*cmd_gen) return run_gen_synth(spec, gen_out);
        if (*cmd_split) return run_cp_split(split_corpus, split_out, split_seed, split_prefix);
        if (*cmd_inspect) return run_inspect(ins_corpus, ins_split, ins_prefix);
        if (*cmd_eval) return run_eval(eval_corpus, eval_split, eval_ckpt, eval_side, eval_prefix);
    } catch (const ArgumentError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "numeric divergence: %s\n", e.what());
        return 4;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const Error& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    }
    return 0;
}
