#include "cedo/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "cedo/errors.hpp"

namespace cedo {

namespace {

using nlohmann::json;

void expect_keys(const json& j, const char* ctx, std::initializer_list<const char*> allowed) {
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed) {
            if (item.key() == a) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ArgumentError("config: unknown key '" + item.key() + "' in " + ctx);
        }
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json config_to_json(const TrainConfig& c) {
    json j;
    j["dims"] = {{"q_in", c.dims.q_in},
                 {"v_in", c.dims.v_in},
                 {"hidden", c.dims.hidden},
                 {"fused", c.dims.fused},
                 {"answers", c.dims.answers}};
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["seed"] = c.seed;
    j["mho"] = c.mho;
    j["gms"] = c.gms;
    j["dlr"] = c.dlr;
    j["rates"] = {{"eta_q", c.rates.eta_q}, {"eta_v", c.rates.eta_v}, {"eta_c", c.rates.eta_c}};
    j["single_rate"] = c.single_rate;
    j["gms_cfg"] = {{"ortho_mode", ortho_mode_name(c.gms_cfg.ortho_mode)},
                    {"conflict_only", c.gms_cfg.conflict_only},
                    {"combine_mode", combine_mode_name(c.gms_cfg.combine_mode)},
                    {"pareto_max_iters", c.gms_cfg.pareto_max_iters},
                    {"pareto_tol", c.gms_cfg.pareto_tol},
                    {"stationary_tol", c.gms_cfg.stationary_tol}};
    j["scope"] = scope_name(c.scope);
    j["tau"] = c.tau;
    j["normalize_features"] = c.normalize_features;
    j["q_branch"] = c.q_branch ? json(*c.q_branch) : json(nullptr);
    j["v_branch"] = c.v_branch ? json(*c.v_branch) : json(nullptr);
    j["data"] = {{"corpus", c.data.corpus_path},
                 {"split", c.data.split_path},
                 {"split_seed", c.data.split_seed},
                 {"qtype_prefix_len", c.data.qtype_prefix_len},
                 {"synth", {{"num_qtypes", c.data.synth.num_qtypes},
                            {"answers_per_qtype", c.data.synth.answers_per_qtype},
                            {"samples", c.data.synth.samples},
                            {"q_dim", c.data.synth.q_dim},
                            {"v_dim", c.data.synth.v_dim},
                            {"signal_strength", c.data.synth.signal_strength},
                            {"noise", c.data.synth.noise},
                            {"seed", c.data.synth.seed}}}};
    j["out_dir"] = c.out_dir;
    return j;
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    expect_keys(j, "top level",
                {"dims", "epochs", "batch_size", "seed", "mho", "gms", "dlr", "rates",
                 "single_rate", "gms_cfg", "scope", "tau", "normalize_features", "q_branch",
                 "v_branch", "data", "out_dir"});
    if (j.contains("dims")) {
        const json& d = j.at("dims");
        expect_keys(d, "dims", {"q_in", "v_in", "hidden", "fused", "answers"});
        maybe(d, "q_in", c.dims.q_in);
        maybe(d, "v_in", c.dims.v_in);
        maybe(d, "hidden", c.dims.hidden);
        maybe(d, "fused", c.dims.fused);
        maybe(d, "answers", c.dims.answers);
    }
    maybe(j, "epochs", c.epochs);
    maybe(j, "batch_size", c.batch_size);
    maybe(j, "seed", c.seed);
    maybe(j, "mho", c.mho);
    maybe(j, "gms", c.gms);
    maybe(j, "dlr", c.dlr);
    if (j.contains("rates")) {
        const json& r = j.at("rates");
        expect_keys(r, "rates", {"eta_q", "eta_v", "eta_c"});
        maybe(r, "eta_q", c.rates.eta_q);
        maybe(r, "eta_v", c.rates.eta_v);
        maybe(r, "eta_c", c.rates.eta_c);
    }
    maybe(j, "single_rate", c.single_rate);
    if (j.contains("gms_cfg")) {
        const json& g = j.at("gms_cfg");
        expect_keys(g, "gms_cfg", {"ortho_mode", "conflict_only", "combine_mode",
                                   "pareto_max_iters", "pareto_tol", "stationary_tol"});
        if (g.contains("ortho_mode")) {
            c.gms_cfg.ortho_mode = ortho_mode_from_name(g.at("ortho_mode").get<std::string>());
        }
        maybe(g, "conflict_only", c.gms_cfg.conflict_only);
        if (g.contains("combine_mode")) {
            c.gms_cfg.combine_mode =
                combine_mode_from_name(g.at("combine_mode").get<std::string>());
        }
        maybe(g, "pareto_max_iters", c.gms_cfg.pareto_max_iters);
        maybe(g, "pareto_tol", c.gms_cfg.pareto_tol);
        maybe(g, "stationary_tol", c.gms_cfg.stationary_tol);
    }
    if (j.contains("scope")) c.scope = scope_from_name(j.at("scope").get<std::string>());
    maybe(j, "tau", c.tau);
    maybe(j, "normalize_features", c.normalize_features);
    if (j.contains("q_branch") && !j.at("q_branch").is_null()) {
        c.q_branch = j.at("q_branch").get<bool>();
    }
    if (j.contains("v_branch") && !j.at("v_branch").is_null()) {
        c.v_branch = j.at("v_branch").get<bool>();
    }
    if (j.contains("data")) {
        const json& d = j.at("data");
        expect_keys(d, "data", {"corpus", "split", "split_seed", "qtype_prefix_len", "synth"});
        maybe(d, "corpus", c.data.corpus_path);
        maybe(d, "split", c.data.split_path);
        maybe(d, "split_seed", c.data.split_seed);
        maybe(d, "qtype_prefix_len", c.data.qtype_prefix_len);
        if (d.contains("synth")) {
            const json& s = d.at("synth");
            expect_keys(s, "data.synth",
                        {"num_qtypes", "answers_per_qtype", "samples", "q_dim", "v_dim",
                         "signal_strength", "noise", "seed"});
            maybe(s, "num_qtypes", c.data.synth.num_qtypes);
            maybe(s, "answers_per_qtype", c.data.synth.answers_per_qtype);
            maybe(s, "samples", c.data.synth.samples);
            maybe(s, "q_dim", c.data.synth.q_dim);
            maybe(s, "v_dim", c.data.synth.v_dim);
            maybe(s, "signal_strength", c.data.synth.signal_strength);
            maybe(s, "noise", c.data.synth.noise);
            maybe(s, "seed", c.data.synth.seed);
        }
    }
    maybe(j, "out_dir", c.out_dir);
    return c;
}

} // namespace

TrainConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("config: ") + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("config: ") + e.what());
    }
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json_text(ss.str());
}

std::string config_to_json_text(const TrainConfig& cfg) {
    return config_to_json(cfg).dump(2);
}

Dataset prepare_data(const DataConfig& cfg) {
    std::vector<QAExample> corpus;
    if (cfg.corpus_path.empty()) {
        corpus = generate_synthetic(cfg.synth);
    } else {
        corpus = load_corpus(cfg.corpus_path);
    }
    for (QAExample& ex : corpus) {
        if (ex.qtype.empty()) ex.qtype = label_qtype(ex.question, ex.answer, cfg.qtype_prefix_len);
    }

    CPSplit split;
    if (cfg.split_path.empty()) {
        split = cp_split(corpus, cfg.split_seed, cfg.qtype_prefix_len);
    } else {
        split = load_split(cfg.split_path);
    }

    std::unordered_map<std::string, std::size_t> index;
    index.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) index[corpus[i].id] = i;

    Dataset data;
    auto take = [&](const std::vector<std::string>& ids, std::vector<QAExample>& out) {
        out.reserve(ids.size());
        for (const std::string& id : ids) {
            auto it = index.find(id);
            if (it == index.end()) {
                throw ParseError("split references unknown corpus id '" + id + "'");
            }
            out.push_back(corpus[it->second]);
        }
    };
    take(split.train_ids, data.train);
    take(split.test_ids, data.test);

    std::set<std::string> answers, qtypes;
    for (const QAExample& ex : corpus) {
        answers.insert(ex.answer);
        qtypes.insert(ex.qtype);
    }
    data.answer_names.assign(answers.begin(), answers.end());
    data.qtype_names.assign(qtypes.begin(), qtypes.end());
    data.split = std::move(split);
    return data;
}

namespace {

void add_into(Linear& acc, const Linear& g) {
    for (std::size_t i = 0; i < acc.w.data.size(); ++i) acc.w.data[i] += g.w.data[i];
    for (std::size_t i = 0; i < acc.b.size(); ++i) acc.b[i] += g.b[i];
}

void add_into(ModelGrads& acc, const ModelGrads& g) {
    add_into(acc.q_enc, g.q_enc);
    add_into(acc.v_enc, g.v_enc);
    add_into(acc.fusion, g.fusion);
    add_into(acc.classifier, g.classifier);
}

double safe_cosine(const Vector& a, const Vector& b) {
    double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Batch make_batch(const std::vector<QAExample>& pool, const std::vector<std::size_t>& order,
                 std::size_t start, std::size_t count, const std::vector<int>& answer_ids,
                 const std::vector<int>& qtype_ids) {
    const std::size_t qd = pool[0].q_feat.size();
    const std::size_t vd = pool[0].v_feat.size();
    Batch b;
    b.q_feat = Matrix(count, qd);
    b.v_feat = Matrix(count, vd);
    b.answer.resize(count);
    b.qtype.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t src = order[start + i];
        for (std::size_t d = 0; d < qd; ++d) b.q_feat(i, d) = pool[src].q_feat[d];
        for (std::size_t d = 0; d < vd; ++d) b.v_feat(i, d) = pool[src].v_feat[d];
        b.answer[i] = answer_ids[src];
        b.qtype[i] = qtype_ids[src];
    }
    return b;
}

struct CosineMean {
    double sum = 0.0;
    std::size_t n = 0;
    void add(double c) {
        if (!std::isnan(c)) {
            sum += c;
            ++n;
        }
    }
    double mean() const { return n == 0 ? 0.0 : sum / static_cast<double>(n); }
};

} // namespace

RunMetrics train_on(const TrainConfig& cfg_in, const Dataset& data, std::ostream* gms_diag,
                    ModelParams* final_params) {
    auto t0 = std::chrono::steady_clock::now();
    TrainConfig cfg = cfg_in;

    if (cfg.batch_size == 0) throw ArgumentError("batch_size must be positive");
    if (!(cfg.tau > 0.0)) throw ArgumentError("tau must be positive");
    if (data.train.empty()) throw ArgumentError("training split is empty");
    make_rates(cfg.rates.eta_q, cfg.rates.eta_v, cfg.rates.eta_c);
    make_rates(cfg.single_rate, cfg.single_rate, cfg.single_rate);

    const std::size_t vocab = data.answer_names.size();
    if (cfg.dims.answers == 0) {
        cfg.dims.answers = vocab;
    } else if (cfg.dims.answers != vocab) {
        throw ArgumentError("config answers (" + std::to_string(cfg.dims.answers) +
                            ") disagree with the corpus vocabulary (" + std::to_string(vocab) +
                            ")");
    }
    if (data.train[0].q_feat.size() != cfg.dims.q_in ||
        data.train[0].v_feat.size() != cfg.dims.v_in) {
        throw ArgumentError("config dims (" + std::to_string(cfg.dims.q_in) + ", " +
                            std::to_string(cfg.dims.v_in) +
                            ") disagree with corpus feature widths (" +
                            std::to_string(data.train[0].q_feat.size()) + ", " +
                            std::to_string(data.train[0].v_feat.size()) + ")");
    }

    const bool q_on = cfg.q_branch.value_or(cfg.gms);
    const bool v_on = cfg.v_branch.value_or(cfg.gms);
    cfg.q_branch = q_on;
    cfg.v_branch = v_on;
    if (cfg.gms && !(q_on && v_on)) {
        throw ArgumentError("gms needs both unimodal branch losses enabled");
    }

    std::unordered_map<std::string, int> answer_id, qtype_id;
    for (std::size_t i = 0; i < data.answer_names.size(); ++i) {
        answer_id[data.answer_names[i]] = static_cast<int>(i);
    }
    for (std::size_t i = 0; i < data.qtype_names.size(); ++i) {
        qtype_id[data.qtype_names[i]] = static_cast<int>(i);
    }
    const std::size_t n = data.train.size();
    std::vector<int> answers(n), qtypes(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto a = answer_id.find(data.train[i].answer);
        auto q = qtype_id.find(data.train[i].qtype);
        if (a == answer_id.end() || q == qtype_id.end()) {
            throw StateError("training example '" + data.train[i].id +
                             "' is missing from the dataset vocabularies");
        }
        answers[i] = a->second;
        qtypes[i] = q->second;
    }

    LossWeightTable table;
    if (cfg.dlr) table = compute_dlr_weights(qtypes, answers);

    RngStream rng(cfg.seed);
    ModelParams params = init_params(cfg.dims, rng);
    const LearningRates rates =
        cfg.mho ? cfg.rates : equal_rates(cfg.single_rate);

    RunMetrics m;
    GmsSummary gsum;
    CosineMean cos_tq, cos_tv, cos_qv;
    std::array<double, 3> alpha_sum{};
    double min_norm_sum = 0.0;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        EpochStats es;
        es.epoch = epoch;
        std::size_t batches = 0;

        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t bsz = std::min(cfg.batch_size, n - start);
            Batch batch = make_batch(data.train, order, start, bsz, answers, qtypes);
            std::vector<ForwardCache> caches = forward(params, batch);

            const double inv_b = 1.0 / static_cast<double>(bsz);
            Upstream up;
            double l_t = 0.0, l_q = 0.0, l_v = 0.0, l_sc = 0.0;

            up.t.resize(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                l_t += cross_entropy(caches[i].logits_t, batch.answer[i]);
                up.t[i] = scale(cross_entropy_grad(caches[i].logits_t, batch.answer[i]), inv_b);
            }
            l_t *= inv_b;
            if (q_on) {
                up.q.resize(bsz);
                for (std::size_t i = 0; i < bsz; ++i) {
                    l_q += cross_entropy(caches[i].logits_q, batch.answer[i]);
                    up.q[i] =
                        scale(cross_entropy_grad(caches[i].logits_q, batch.answer[i]), inv_b);
                }
                l_q *= inv_b;
            }
            if (v_on) {
                up.v.resize(bsz);
                for (std::size_t i = 0; i < bsz; ++i) {
                    l_v += cross_entropy(caches[i].logits_v, batch.answer[i]);
                    up.v[i] =
                        scale(cross_entropy_grad(caches[i].logits_v, batch.answer[i]), inv_b);
                }
                l_v *= inv_b;
            }

            SupconResult sc;
            bool have_sc = cfg.dlr && bsz >= 2;
            if (have_sc) {
                std::vector<Vector> feats(bsz);
                for (std::size_t i = 0; i < bsz; ++i) feats[i] = caches[i].x_t;
                sc = weighted_supcon_with_grad(feats, batch.answer, batch.qtype, table, cfg.tau,
                                               cfg.normalize_features);
                l_sc = sc.loss * inv_b;
            }

            double total = total_loss(l_t, l_q, l_v, l_sc);
            if (!std::isfinite(total)) {
                throw DivergenceError("non-finite loss at step " + std::to_string(step), step);
            }

            PerLossGrads pg = backward(params, caches, up);
            if (have_sc) {
                for (std::size_t i = 0; i < bsz; ++i) {
                    accumulate_embedding_backward(params, caches[i],
                                                  scale(sc.d_features[i], inv_b), pg.t);
                }
            }

            ModelGrads total_g = pg.t;
            add_into(total_g, pg.q);
            add_into(total_g, pg.v);

            if (cfg.gms) {
                GradientSet set{flatten_grads(pg.t, cfg.dims, cfg.scope),
                                flatten_grads(pg.q, cfg.dims, cfg.scope),
                                flatten_grads(pg.v, cfg.dims, cfg.scope)};
                double ctq = safe_cosine(set.g_t, set.g_q);
                double ctv = safe_cosine(set.g_t, set.g_v);
                double cqv = safe_cosine(set.g_q, set.g_v);
                ParetoResult pareto = pareto_min_norm(set, cfg.gms_cfg);
                OrthoReport report;
                GradientSet surgered = orthogonalize(set, cfg.gms_cfg, &report);
                Vector combined = combine(surgered, cfg.gms_cfg, pareto.alpha);
                unflatten_grads(combined, cfg.dims, cfg.scope, total_g);

                cos_tq.add(ctq);
                cos_tv.add(ctv);
                cos_qv.add(cqv);
                for (std::size_t k = 0; k < 3; ++k) {
                    alpha_sum[k] += pareto.alpha[k];
                    if (report.applied[k]) gsum.surgery_counts[k] += 1;
                }
                min_norm_sum += pareto.min_norm;
                if (pareto.stationary) gsum.stationary_steps += 1;
                bool any_degenerate =
                    report.degenerate[0] || report.degenerate[1] || report.degenerate[2];
                if (any_degenerate) gsum.degenerate_steps += 1;
                gsum.steps += 1;

                if (gms_diag) {
                    json line{{"step", step},
                              {"cos_tq", ctq},
                              {"cos_tv", ctv},
                              {"cos_qv", cqv},
                              {"alpha", pareto.alpha},
                              {"min_norm", pareto.min_norm},
                              {"stationary", pareto.stationary},
                              {"iters", pareto.iters},
                              {"applied", report.applied},
                              {"degenerate", report.degenerate}};
                    (*gms_diag) << line.dump() << "\n";
                }
            }

            apply_update(params, total_g, rates);

            es.l_t += l_t;
            es.l_q += l_q;
            es.l_v += l_v;
            es.l_supcon += l_sc;
            es.total += total;
            ++batches;
            ++step;
        }

        const double inv = 1.0 / static_cast<double>(batches);
        es.l_t *= inv;
        es.l_q *= inv;
        es.l_v *= inv;
        es.l_supcon *= inv;
        es.total *= inv;
        m.epochs.push_back(es);
    }

    m.test_accuracy =
        evaluate(predict(params, data.test, data.answer_names, cfg.batch_size), data.test);
    m.train_accuracy =
        evaluate(predict(params, data.train, data.answer_names, cfg.batch_size), data.train);

    if (cfg.gms && gsum.steps > 0) {
        gsum.mean_min_norm = min_norm_sum / static_cast<double>(gsum.steps);
        gsum.mean_cos_tq = cos_tq.mean();
        gsum.mean_cos_tv = cos_tv.mean();
        gsum.mean_cos_qv = cos_qv.mean();
        for (std::size_t k = 0; k < 3; ++k) {
            gsum.mean_alpha[k] = alpha_sum[k] / static_cast<double>(gsum.steps);
        }
        m.gms = gsum;
    }

    // out_dir is an I/O destination, not a training parameter: keep it out of
    // the echo so metrics files stay byte-identical wherever they are written.
    cfg.out_dir.clear();
    m.config = cfg;
    m.answer_vocab = data.answer_names.size();
    m.qtype_vocab = data.qtype_names.size();
    m.steps = step;
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (final_params) *final_params = std::move(params);
    return m;
}

std::vector<std::string> predict(const ModelParams& params,
                                 const std::vector<QAExample>& examples,
                                 const std::vector<std::string>& answer_names,
                                 std::size_t batch_size) {
    if (batch_size == 0) throw ArgumentError("predict: batch_size must be positive");
    std::vector<std::string> out;
    out.reserve(examples.size());
    for (const QAExample& ex : examples) {
        ForwardCache c = forward_one(params, ex.q_feat, ex.v_feat);
        std::size_t best = 0;
        for (std::size_t k = 1; k < c.logits_t.size(); ++k) {
            if (c.logits_t[k] > c.logits_t[best]) best = k;
        }
        out.push_back(answer_names[best]);
    }
    return out;
}

RunMetrics train(const TrainConfig& cfg) {
    Dataset data = prepare_data(cfg.data);

    std::ofstream diag;
    bool want_files = !cfg.out_dir.empty();
    if (want_files) {
        std::error_code ec;
        std::filesystem::create_directories(cfg.out_dir, ec);
        if (ec) throw IoError("cannot create output directory " + cfg.out_dir);
    }
    if (want_files && cfg.gms) {
        diag.open(cfg.out_dir + "/gms_diag.jsonl");
        if (!diag) throw IoError("cannot open gms diagnostics in " + cfg.out_dir);
    }

    ModelParams params;
    RunMetrics m = train_on(cfg, data, diag.is_open() ? &diag : nullptr, &params);

    if (want_files) {
        export_metrics(m, cfg.out_dir + "/metrics.json", "json");
        export_metrics(m, cfg.out_dir + "/metrics.csv", "csv");
        save_checkpoint(params, cfg.out_dir + "/checkpoint.json");
        if (cfg.dlr) {
            std::unordered_map<std::string, int> answer_id, qtype_id;
            for (std::size_t i = 0; i < data.answer_names.size(); ++i) {
                answer_id[data.answer_names[i]] = static_cast<int>(i);
            }
            for (std::size_t i = 0; i < data.qtype_names.size(); ++i) {
                qtype_id[data.qtype_names[i]] = static_cast<int>(i);
            }
            std::vector<int> answers, qtypes;
            answers.reserve(data.train.size());
            qtypes.reserve(data.train.size());
            for (const QAExample& ex : data.train) {
                answers.push_back(answer_id.at(ex.answer));
                qtypes.push_back(qtype_id.at(ex.qtype));
            }
            LossWeightTable table = compute_dlr_weights(qtypes, answers);
            export_weight_table(table, data.qtype_names, data.answer_names,
                                cfg.out_dir + "/weights.table.json");
        }
    }
    return m;
}

const char* kMetricsCsvHeader =
    "schema,seed,epochs,batch_size,mho,gms,dlr,scope,eta_q,eta_v,eta_c,single_rate,tau,"
    "acc_all,acc_open,acc_closed,train_acc_all,final_l_t,final_l_q,final_l_v,final_l_supcon,"
    "steps";

const char* kSweepCsvHeader = "eta_q,eta_v,eta_c,acc_all,acc_open,acc_closed";

namespace {

// Shortest round-trip representation, deterministic across runs.
std::string dtos(double x) {
    return json(x).dump();
}

std::string pct2(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", x);
    return buf;
}

json accuracy_json(const Accuracy& a) {
    return json{{"all", a.all},       {"open", a.open},     {"closed", a.closed},
                {"n_all", a.n_all},   {"n_open", a.n_open}, {"n_closed", a.n_closed}};
}

} // namespace

void export_metrics(const RunMetrics& m, const std::string& path, const std::string& format) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open metrics file for writing: " + path);

    if (format == "json") {
        json epochs = json::array();
        for (const EpochStats& e : m.epochs) {
            epochs.push_back({{"epoch", e.epoch},
                              {"l_t", e.l_t},
                              {"l_q", e.l_q},
                              {"l_v", e.l_v},
                              {"l_supcon", e.l_supcon},
                              {"total", e.total}});
        }
        json gms_summary = nullptr;
        if (m.gms) {
            gms_summary = json{{"steps", m.gms->steps},
                               {"mean_min_norm", m.gms->mean_min_norm},
                               {"mean_cos_tq", m.gms->mean_cos_tq},
                               {"mean_cos_tv", m.gms->mean_cos_tv},
                               {"mean_cos_qv", m.gms->mean_cos_qv},
                               {"mean_alpha", m.gms->mean_alpha},
                               {"surgery_counts", m.gms->surgery_counts},
                               {"stationary_steps", m.gms->stationary_steps},
                               {"degenerate_steps", m.gms->degenerate_steps}};
        }
        json j{{"schema", "cedo.metrics.v1"},
               {"config", json::parse(config_to_json_text(m.config))},
               {"vocab", {{"answers", m.answer_vocab}, {"qtypes", m.qtype_vocab}}},
               {"epochs", epochs},
               {"final_accuracy", accuracy_json(m.test_accuracy)},
               {"train_accuracy", accuracy_json(m.train_accuracy)},
               {"gms_summary", gms_summary},
               {"steps", m.steps}};
        out << j.dump(2) << "\n";
    } else if (format == "csv") {
        EpochStats last;
        if (!m.epochs.empty()) last = m.epochs.back();
        out << kMetricsCsvHeader << "\n";
        out << "cedo.metrics.v1," << m.config.seed << "," << m.config.epochs << ","
            << m.config.batch_size << "," << (m.config.mho ? 1 : 0) << ","
            << (m.config.gms ? 1 : 0) << "," << (m.config.dlr ? 1 : 0) << ","
            << scope_name(m.config.scope) << "," << dtos(m.config.rates.eta_q) << ","
            << dtos(m.config.rates.eta_v) << "," << dtos(m.config.rates.eta_c) << ","
            << dtos(m.config.single_rate) << "," << dtos(m.config.tau) << ","
            << pct2(m.test_accuracy.all) << "," << pct2(m.test_accuracy.open) << ","
            << pct2(m.test_accuracy.closed) << "," << pct2(m.train_accuracy.all) << ","
            << dtos(last.l_t) << "," << dtos(last.l_q) << "," << dtos(last.l_v) << ","
            << dtos(last.l_supcon) << "," << m.steps << "\n";
    } else {
        throw ArgumentError("export_metrics: unknown format '" + format + "' (json|csv)");
    }
    if (!out) throw IoError("failed writing metrics: " + path);
}

AblationResult ablate(const TrainConfig& base, const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ArgumentError("ablate: need at least one seed");
    Dataset data = prepare_data(base.data);

    struct RowDef {
        const char* name;
        bool mho, gms, dlr;
    };
    static const RowDef defs[5] = {{"baseline", false, false, false},
                                   {"+mho", true, false, false},
                                   {"+gms", false, true, false},
                                   {"+dlr", false, false, true},
                                   {"cedo", true, true, true}};

    AblationResult res;
    res.seeds = seeds;
    for (std::uint64_t seed : seeds) {
        std::vector<AblationRow> table;
        for (const RowDef& def : defs) {
            TrainConfig cfg = base;
            cfg.seed = seed;
            cfg.mho = def.mho;
            cfg.gms = def.gms;
            cfg.dlr = def.dlr;
            cfg.out_dir.clear();
            RunMetrics m = train_on(cfg, data);
            AblationRow row;
            row.name = def.name;
            row.mho = def.mho;
            row.gms = def.gms;
            row.dlr = def.dlr;
            row.acc = m.test_accuracy;
            row.final_total_loss = m.epochs.empty() ? 0.0 : m.epochs.back().total;
            table.push_back(std::move(row));
        }
        res.per_seed.push_back(std::move(table));
    }

    for (std::size_t r = 0; r < 5; ++r) {
        AblationRow mean = res.per_seed[0][r];
        double all = 0.0, open = 0.0, closed = 0.0, loss = 0.0;
        for (const auto& table : res.per_seed) {
            all += table[r].acc.all;
            open += table[r].acc.open;
            closed += table[r].acc.closed;
            loss += table[r].final_total_loss;
        }
        const double k = static_cast<double>(res.per_seed.size());
        mean.acc.all = all / k;
        mean.acc.open = open / k;
        mean.acc.closed = closed / k;
        mean.final_total_loss = loss / k;
        res.mean_rows.push_back(std::move(mean));
    }
    return res;
}

std::string format_ablation(const AblationResult& result) {
    std::ostringstream os;
    os << "mean over " << result.seeds.size() << " seed(s)\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-10s %8s %8s %8s %12s\n", "config", "all", "open", "closed",
                  "final_loss");
    os << buf;
    for (const AblationRow& row : result.mean_rows) {
        std::snprintf(buf, sizeof(buf), "%-10s %8.2f %8.2f %8.2f %12.4f\n", row.name.c_str(),
                      row.acc.all, row.acc.open, row.acc.closed, row.final_total_loss);
        os << buf;
    }
    return os.str();
}

std::vector<SweepPoint> sweep_rates(const TrainConfig& base, const std::vector<double>& eta_q_grid,
                                    const std::vector<double>& eta_v_grid,
                                    const std::vector<double>& eta_c_grid, bool cartesian) {
    Dataset data = prepare_data(base.data);

    std::vector<std::array<double, 3>> triples;
    auto push_unique = [&](double q, double v, double c) {
        std::array<double, 3> t{q, v, c};
        if (std::find(triples.begin(), triples.end(), t) == triples.end()) triples.push_back(t);
    };

    if (cartesian) {
        std::vector<double> qs = eta_q_grid.empty() ? std::vector<double>{base.rates.eta_q}
                                                    : eta_q_grid;
        std::vector<double> vs = eta_v_grid.empty() ? std::vector<double>{base.rates.eta_v}
                                                    : eta_v_grid;
        std::vector<double> cs = eta_c_grid.empty() ? std::vector<double>{base.rates.eta_c}
                                                    : eta_c_grid;
        for (double q : qs) {
            for (double v : vs) {
                for (double c : cs) push_unique(q, v, c);
            }
        }
    } else {
        for (double q : eta_q_grid) push_unique(q, base.rates.eta_v, base.rates.eta_c);
        for (double v : eta_v_grid) push_unique(base.rates.eta_q, v, base.rates.eta_c);
        for (double c : eta_c_grid) push_unique(base.rates.eta_q, base.rates.eta_v, c);
    }
    if (triples.empty()) throw ArgumentError("sweep_rates: no grid values given");

    std::vector<SweepPoint> points;
    for (const auto& t : triples) {
        TrainConfig cfg = base;
        cfg.mho = true; // the sweep studies the per-group triple
        cfg.rates = make_rates(t[0], t[1], t[2]);
        cfg.out_dir.clear();
        RunMetrics m = train_on(cfg, data);
        points.push_back(SweepPoint{t[0], t[1], t[2], m.test_accuracy});
    }
    return points;
}

void export_sweep_csv(const std::vector<SweepPoint>& points, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open sweep csv for writing: " + path);
    out << kSweepCsvHeader << "\n";
    for (const SweepPoint& p : points) {
        out << dtos(p.eta_q) << "," << dtos(p.eta_v) << "," << dtos(p.eta_c) << ","
            << pct2(p.acc.all) << "," << pct2(p.acc.open) << "," << pct2(p.acc.closed) << "\n";
    }
    if (!out) throw IoError("failed writing sweep csv: " + path);
}

} // namespace cedo
