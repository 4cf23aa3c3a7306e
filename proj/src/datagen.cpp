#include "cedo/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cedo/errors.hpp"

namespace cedo {

namespace {

std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_word_char(unsigned char c) {
    return std::isalnum(c) != 0;
}

std::string strip_token(const std::string& t) {
    std::size_t b = 0, e = t.size();
    while (b < e && !is_word_char(static_cast<unsigned char>(t[b]))) ++b;
    while (e > b && !is_word_char(static_cast<unsigned char>(t[e - 1]))) --e;
    return t.substr(b, e - b);
}

} // namespace

AnswerClass answer_class(const std::string& answer) {
    std::string a = lower(answer);
    return (a == "yes" || a == "no") ? AnswerClass::Closed : AnswerClass::Open;
}

std::string label_qtype(const std::string& question, const std::string& answer,
                        std::size_t prefix_len) {
    if (prefix_len == 0) throw ArgumentError("label_qtype: prefix_len must be positive");
    if (answer_class(answer) == AnswerClass::Closed) return "yes/no";
    std::istringstream ss(lower(question));
    std::string tok;
    std::vector<std::string> words;
    while (ss >> tok && words.size() < prefix_len) {
        std::string w = strip_token(tok);
        if (!w.empty()) words.push_back(w);
    }
    if (words.empty()) {
        throw ArgumentError("label_qtype: question has no usable tokens: '" + question + "'");
    }
    std::string out = words[0];
    for (std::size_t i = 1; i < words.size(); ++i) out += " " + words[i];
    return out;
}

std::vector<Cluster> cluster_examples(const std::vector<QAExample>& corpus,
                                      std::size_t prefix_len) {
    std::map<std::string, std::map<std::string, std::vector<std::size_t>>> by_type;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const QAExample& ex = corpus[i];
        std::string qt =
            ex.qtype.empty() ? label_qtype(ex.question, ex.answer, prefix_len) : ex.qtype;
        by_type[qt][ex.answer].push_back(i);
    }
    std::vector<Cluster> out;
    for (auto& [qt, answers] : by_type) {
        std::vector<Cluster> group;
        for (auto& [ans, members] : answers) {
            group.push_back(Cluster{qt, ans, std::move(members)});
        }
        std::stable_sort(group.begin(), group.end(), [](const Cluster& a, const Cluster& b) {
            if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
            return a.answer < b.answer;
        });
        for (auto& c : group) out.push_back(std::move(c));
    }
    return out;
}

namespace {

std::size_t rounded_count(std::size_t n, double num, double den) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(n) * num / den));
}

} // namespace

CPSplit cp_split(const std::vector<QAExample>& corpus, std::uint64_t seed,
                 std::size_t prefix_len) {
    if (corpus.empty()) throw ArgumentError("cp_split: empty corpus");
    std::vector<Cluster> clusters = cluster_examples(corpus, prefix_len);

    CPSplit split;
    RngStream rng(seed);
    std::string current_qtype;
    std::size_t rank = 0;
    for (Cluster& c : clusters) {
        if (c.qtype != current_qtype) {
            current_qtype = c.qtype;
            rank = 0;
        }
        ++rank;

        std::size_t n = c.members.size();
        std::size_t train_n;
        std::string ratio;
        if (rank == 1) {
            train_n = rounded_count(n, 39.0, 40.0);
            ratio = "39:1";
        } else if (rank == 2) {
            train_n = rounded_count(n, 1.0, 40.0);
            ratio = "1:39";
        } else {
            train_n = rounded_count(n, 3.0, 4.0);
            ratio = "3:1";
        }

        std::vector<std::size_t> members = c.members;
        rng.shuffle(members);
        for (std::size_t i = 0; i < members.size(); ++i) {
            (i < train_n ? split.train_ids : split.test_ids).push_back(corpus[members[i]].id);
        }
        split.log.push_back(
            AllocationEntry{c.qtype, c.answer, rank, n, train_n, n - train_n, ratio});
    }
    std::sort(split.train_ids.begin(), split.train_ids.end());
    std::sort(split.test_ids.begin(), split.test_ids.end());
    return split;
}

std::vector<QAExample> generate_synthetic(const SynthSpec& spec) {
    if (spec.num_qtypes == 0 || spec.samples == 0 || spec.q_dim == 0 || spec.v_dim == 0) {
        throw ArgumentError("generate_synthetic: num_qtypes, samples and feature dims must be positive");
    }
    if (spec.answers_per_qtype < 2) {
        throw ArgumentError("generate_synthetic: answers_per_qtype must be at least 2");
    }
    if (spec.signal_strength < 0.0 || spec.signal_strength > 1.0) {
        throw ArgumentError("generate_synthetic: signal_strength must lie in [0, 1]");
    }
    if (spec.noise < 0.0) throw ArgumentError("generate_synthetic: noise must be non-negative");

    static const std::vector<std::pair<std::string, std::string>> kOpenPrefixes = {
        {"how many", "how many lesions are visible"},
        {"what color", "what color is the marked region"},
        {"where is", "where is the anomaly located"},
        {"what organ", "what organ does this image show"},
        {"which side", "which side carries the finding"},
        {"what modality", "what modality produced this image"},
        {"how large", "how large is the marked area"},
        {"what plane", "what plane was this taken in"},
        {"what tissue", "what tissue dominates the region"}};

    struct QType {
        std::string question;
        std::vector<std::string> answers;
    };
    std::vector<QType> qtypes;
    for (std::size_t j = 0; j < spec.num_qtypes; ++j) {
        QType qt;
        if (j == 0) {
            qt.question = "is the finding present";
            qt.answers = {"yes", "no"};
        } else {
            std::size_t open_idx = j - 1;
            if (open_idx < kOpenPrefixes.size()) {
                qt.question = kOpenPrefixes[open_idx].second;
            } else {
                qt.question = "what group" + std::to_string(open_idx) + " fits this image";
            }
            for (std::size_t r = 0; r < spec.answers_per_qtype; ++r) {
                qt.answers.push_back("a" + std::to_string(j) + "_" + std::to_string(r));
            }
        }
        qtypes.push_back(std::move(qt));
    }

    RngStream rng(spec.seed);

    // Fixed answer-conditioned image centers and qtype-conditioned question
    // centers, drawn before any sample so the layout is seed-stable.
    std::vector<Vector> q_centers(spec.num_qtypes, Vector(spec.q_dim));
    for (auto& c : q_centers) {
        for (double& x : c) x = rng.normal();
    }
    std::vector<std::vector<Vector>> v_centers(spec.num_qtypes);
    for (std::size_t j = 0; j < spec.num_qtypes; ++j) {
        v_centers[j].assign(qtypes[j].answers.size(), Vector(spec.v_dim));
        for (auto& c : v_centers[j]) {
            for (double& x : c) x = rng.normal();
        }
    }

    // Skewed per-type answer marginal: p(rank r) proportional to 1/(1+r).
    std::vector<std::vector<double>> cdf(spec.num_qtypes);
    for (std::size_t j = 0; j < spec.num_qtypes; ++j) {
        double z = 0.0;
        for (std::size_t r = 0; r < qtypes[j].answers.size(); ++r) z += 1.0 / (1.0 + static_cast<double>(r));
        double acc = 0.0;
        for (std::size_t r = 0; r < qtypes[j].answers.size(); ++r) {
            acc += (1.0 / (1.0 + static_cast<double>(r))) / z;
            cdf[j].push_back(acc);
        }
        cdf[j].back() = 1.0;
    }

    std::vector<QAExample> corpus;
    corpus.reserve(spec.samples);
    int digits = static_cast<int>(std::to_string(spec.samples - 1).size());
    for (std::size_t i = 0; i < spec.samples; ++i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(spec.num_qtypes));
        double u = rng.uniform();
        std::size_t r = 0;
        while (r + 1 < cdf[j].size() && u > cdf[j][r]) ++r;

        QAExample ex;
        std::string idx = std::to_string(i);
        ex.id = "s" + std::string(static_cast<std::size_t>(digits) - idx.size(), '0') + idx;
        ex.question = qtypes[j].question;
        ex.answer = qtypes[j].answers[r];
        ex.qtype = label_qtype(ex.question, ex.answer);
        ex.q_feat.resize(spec.q_dim);
        for (std::size_t d = 0; d < spec.q_dim; ++d) {
            ex.q_feat[d] = q_centers[j][d] + spec.noise * rng.normal();
        }
        ex.v_feat.resize(spec.v_dim);
        for (std::size_t d = 0; d < spec.v_dim; ++d) {
            ex.v_feat[d] = spec.signal_strength * v_centers[j][r][d] + spec.noise * rng.normal();
        }
        corpus.push_back(std::move(ex));
    }
    return corpus;
}

namespace {

using nlohmann::json;

Vector feat_from_json(const json& rec, const char* field, std::size_t index) {
    const json& arr = rec.at(field);
    if (!arr.is_array()) {
        throw ParseError("corpus record " + std::to_string(index) + ": " + field +
                         " must be an array");
    }
    Vector v;
    v.reserve(arr.size());
    for (const auto& x : arr) {
        if (!x.is_number()) {
            throw ParseError("corpus record " + std::to_string(index) + ": " + field +
                             " must contain numbers only");
        }
        v.push_back(x.get<double>());
    }
    return v;
}

} // namespace

std::vector<QAExample> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("corpus " + path + ": " + e.what());
    }
    if (!j.is_array()) throw ParseError("corpus " + path + ": top level must be an array");

    std::vector<QAExample> corpus;
    corpus.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        const json& rec = j[i];
        QAExample ex;
        try {
            ex.id = rec.at("id").get<std::string>();
            ex.question = rec.at("question").get<std::string>();
            ex.answer = rec.at("answer").get<std::string>();
            if (rec.contains("qtype")) ex.qtype = rec.at("qtype").get<std::string>();
            ex.q_feat = feat_from_json(rec, "q_feat", i);
            ex.v_feat = feat_from_json(rec, "v_feat", i);
        } catch (const json::exception& e) {
            throw ParseError("corpus record " + std::to_string(i) + ": " + e.what());
        }
        if (ex.id.empty()) throw ParseError("corpus record " + std::to_string(i) + ": empty id");
        corpus.push_back(std::move(ex));
    }
    for (std::size_t i = 1; i < corpus.size(); ++i) {
        if (corpus[i].q_feat.size() != corpus[0].q_feat.size() ||
            corpus[i].v_feat.size() != corpus[0].v_feat.size()) {
            throw ShapeError("corpus record " + std::to_string(i) + " (id " + corpus[i].id +
                             "): feature widths (" + std::to_string(corpus[i].q_feat.size()) +
                             ", " + std::to_string(corpus[i].v_feat.size()) +
                             ") differ from record 0 (" +
                             std::to_string(corpus[0].q_feat.size()) + ", " +
                             std::to_string(corpus[0].v_feat.size()) + ")");
        }
    }
    std::sort(corpus.begin(), corpus.end(),
              [](const QAExample& a, const QAExample& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < corpus.size(); ++i) {
        if (corpus[i].id == corpus[i - 1].id) {
            throw ParseError("corpus " + path + ": duplicate id '" + corpus[i].id + "'");
        }
    }
    return corpus;
}

void save_corpus(const std::vector<QAExample>& corpus, const std::string& path) {
    json arr = json::array();
    for (const QAExample& ex : corpus) {
        json rec{{"id", ex.id},
                 {"question", ex.question},
                 {"answer", ex.answer},
                 {"q_feat", ex.q_feat},
                 {"v_feat", ex.v_feat}};
        if (!ex.qtype.empty()) rec["qtype"] = ex.qtype;
        arr.push_back(std::move(rec));
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open corpus for writing: " + path);
    out << arr.dump(2) << "\n";
    if (!out) throw IoError("failed writing corpus: " + path);
}

void save_split(const CPSplit& split, const std::string& path) {
    json log = json::array();
    for (const AllocationEntry& e : split.log) {
        log.push_back({{"qtype", e.qtype},
                       {"answer", e.answer},
                       {"rank", e.rank},
                       {"cluster_size", e.cluster_size},
                       {"train_count", e.train_count},
                       {"test_count", e.test_count},
                       {"ratio_used", e.ratio_used}});
    }
    json j{{"schema", "cedo.split.v1"},
           {"train", split.train_ids},
           {"test", split.test_ids},
           {"allocation_log", log}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot open split for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("failed writing split: " + path);
}

CPSplit load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open split: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("split " + path + ": " + e.what());
    }
    CPSplit split;
    try {
        if (j.at("schema").get<std::string>() != "cedo.split.v1") {
            throw ParseError("split " + path + ": unsupported schema");
        }
        split.train_ids = j.at("train").get<std::vector<std::string>>();
        split.test_ids = j.at("test").get<std::vector<std::string>>();
        if (j.contains("allocation_log")) {
            for (const auto& rec : j.at("allocation_log")) {
                AllocationEntry e;
                e.qtype = rec.at("qtype").get<std::string>();
                e.answer = rec.at("answer").get<std::string>();
                e.rank = rec.at("rank").get<std::size_t>();
                e.cluster_size = rec.at("cluster_size").get<std::size_t>();
                e.train_count = rec.at("train_count").get<std::size_t>();
                e.test_count = rec.at("test_count").get<std::size_t>();
                e.ratio_used = rec.at("ratio_used").get<std::string>();
                split.log.push_back(std::move(e));
            }
        }
    } catch (const json::exception& e) {
        throw ParseError("split " + path + ": " + e.what());
    }
    std::set<std::string> seen(split.train_ids.begin(), split.train_ids.end());
    for (const std::string& id : split.test_ids) {
        if (seen.count(id)) {
            throw ParseError("split " + path + ": id '" + id + "' appears on both sides");
        }
    }
    return split;
}

namespace {

double pct(std::size_t correct, std::size_t total) {
    if (total == 0) return 0.0;
    return std::round(10000.0 * static_cast<double>(correct) / static_cast<double>(total)) / 100.0;
}

} // namespace

Accuracy evaluate(const std::vector<std::string>& predictions,
                  const std::vector<QAExample>& truth) {
    if (predictions.size() != truth.size()) {
        throw ShapeError("evaluate: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " examples");
    }
    std::size_t c_all = 0, c_open = 0, c_closed = 0, n_open = 0, n_closed = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        bool hit = predictions[i] == truth[i].answer;
        bool closed = answer_class(truth[i].answer) == AnswerClass::Closed;
        if (closed) {
            ++n_closed;
            c_closed += hit ? 1 : 0;
        } else {
            ++n_open;
            c_open += hit ? 1 : 0;
        }
        c_all += hit ? 1 : 0;
    }
    Accuracy acc;
    acc.n_all = truth.size();
    acc.n_open = n_open;
    acc.n_closed = n_closed;
    acc.all = pct(c_all, truth.size());
    acc.open = pct(c_open, n_open);
    acc.closed = pct(c_closed, n_closed);
    return acc;
}

} // namespace cedo
