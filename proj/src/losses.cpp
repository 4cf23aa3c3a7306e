#include "cedo/losses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "cedo/errors.hpp"

namespace cedo {

double cross_entropy(const Vector& logits, int answer) {
    if (logits.empty()) throw ArgumentError("cross_entropy: empty logits");
    if (answer < 0 || static_cast<std::size_t>(answer) >= logits.size()) {
        throw ArgumentError("cross_entropy: answer id " + std::to_string(answer) +
                            " out of range for " + std::to_string(logits.size()) + " logits");
    }
    return log_sum_exp(logits) - logits[static_cast<std::size_t>(answer)];
}

Vector cross_entropy_grad(const Vector& logits, int answer) {
    if (answer < 0 || static_cast<std::size_t>(answer) >= logits.size()) {
        throw ArgumentError("cross_entropy_grad: answer id " + std::to_string(answer) +
                            " out of range for " + std::to_string(logits.size()) + " logits");
    }
    Vector g = softmax(logits);
    g[static_cast<std::size_t>(answer)] -= 1.0;
    return g;
}

double total_loss(double l_t, double l_q, double l_v, double l_supcon) {
    return l_t + l_q + l_v + l_supcon;
}

const WeightCell& LossWeightTable::at(int qtype, int answer) const {
    auto it = cells.find({qtype, answer});
    if (it == cells.end()) {
        throw ArgumentError("weight table has no cell for qtype " + std::to_string(qtype) +
                            ", answer " + std::to_string(answer));
    }
    return it->second;
}

bool LossWeightTable::contains(int qtype, int answer) const {
    return cells.count({qtype, answer}) > 0;
}

LossWeightTable compute_dlr_weights(const std::vector<int>& qtype_ids,
                                    const std::vector<int>& answer_ids) {
    if (qtype_ids.size() != answer_ids.size()) {
        throw ShapeError("compute_dlr_weights: " + std::to_string(qtype_ids.size()) +
                         " qtype ids vs " + std::to_string(answer_ids.size()) + " answer ids");
    }
    std::map<int, std::size_t> per_qtype;
    std::map<std::pair<int, int>, std::size_t> per_pair;
    for (std::size_t i = 0; i < qtype_ids.size(); ++i) {
        per_qtype[qtype_ids[i]] += 1;
        per_pair[{qtype_ids[i], answer_ids[i]}] += 1;
    }
    LossWeightTable table;
    for (const auto& [key, m] : per_pair) {
        WeightCell cell;
        cell.count_m = m;
        cell.count_M = per_qtype[key.first];
        cell.w = 1.0 / (static_cast<double>(cell.count_M) * static_cast<double>(cell.count_m));
        cell.W = std::log1p(std::exp(cell.w));
        table.cells[key] = cell;
    }
    return table;
}

void export_weight_table(const LossWeightTable& table,
                         const std::vector<std::string>& qtype_names,
                         const std::vector<std::string>& answer_names,
                         const std::string& path) {
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& [key, cell] : table.cells) {
        auto [qt, ans] = key;
        if (qt < 0 || static_cast<std::size_t>(qt) >= qtype_names.size() || ans < 0 ||
            static_cast<std::size_t>(ans) >= answer_names.size()) {
            throw ArgumentError("export_weight_table: cell ids outside the provided vocabularies");
        }
        entries[qtype_names[static_cast<std::size_t>(qt)] + "/" +
                answer_names[static_cast<std::size_t>(ans)]] = {{"count_m", cell.count_m},
                                                                {"count_M", cell.count_M},
                                                                {"w", cell.w},
                                                                {"W", cell.W}};
    }
    nlohmann::json j{{"schema", "cedo.weights.v1"}, {"entries", entries}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot open weight table for writing: " + path);
    out << j.dump(2) << "\n";
}

namespace {

struct Prepared {
    std::vector<Vector> z;       // features after optional normalization
    std::vector<double> norms;   // clamped norms, only meaningful when normalizing
};

Prepared prepare_features(const std::vector<Vector>& features, bool normalize) {
    Prepared p;
    p.z = features;
    if (!normalize) return p;
    p.norms.resize(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        double n = l2_norm(features[i]);
        p.norms[i] = std::max(n, 1e-12);
        for (double& x : p.z[i]) x /= p.norms[i];
    }
    return p;
}

void validate_supcon_args(const std::vector<Vector>& features, const std::vector<int>& answer_ids,
                          const std::vector<int>& qtype_ids, double tau) {
    if (features.size() < 2) {
        throw ArgumentError("weighted_supcon: needs a batch of at least 2, got " +
                            std::to_string(features.size()));
    }
    if (answer_ids.size() != features.size() || qtype_ids.size() != features.size()) {
        throw ShapeError("weighted_supcon: " + std::to_string(features.size()) + " features vs " +
                         std::to_string(answer_ids.size()) + " answers / " +
                         std::to_string(qtype_ids.size()) + " qtypes");
    }
    if (!(tau > 0.0)) throw ArgumentError("weighted_supcon: tau must be positive");
    for (std::size_t i = 1; i < features.size(); ++i) {
        if (features[i].size() != features[0].size()) {
            throw ShapeError("weighted_supcon: feature " + std::to_string(i) + " has width " +
                             std::to_string(features[i].size()) + ", expected " +
                             std::to_string(features[0].size()));
        }
    }
}

} // namespace

SupconResult weighted_supcon_with_grad(const std::vector<Vector>& features,
                                       const std::vector<int>& answer_ids,
                                       const std::vector<int>& qtype_ids,
                                       const LossWeightTable& table, double tau, bool normalize) {
    validate_supcon_args(features, answer_ids, qtype_ids, tau);
    std::size_t n = features.size();
    std::size_t dim = features[0].size();
    Prepared prep = prepare_features(features, normalize);
    const std::vector<Vector>& z = prep.z;

    // All pairwise similarities up front.
    Matrix s(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            s(i, j) = dot(z[i], z[j]) / tau;
        }
    }

    double loss = 0.0;
    std::vector<Vector> d_z(n, Vector(dim, 0.0));

    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> pos, neg;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            (answer_ids[j] == answer_ids[i] ? pos : neg).push_back(j);
        }
        if (pos.empty() || neg.empty()) continue;

        double wi = table.at(qtype_ids[i], answer_ids[i]).W;

        Vector neg_scores(neg.size());
        for (std::size_t k = 0; k < neg.size(); ++k) neg_scores[k] = s(i, neg[k]);
        double lse = log_sum_exp(neg_scores);

        double inv_p = 1.0 / static_cast<double>(pos.size());
        for (std::size_t p : pos) {
            loss -= inv_p * wi * (s(i, p) - lse);
        }

        // Gradient w.r.t. the (possibly normalized) embeddings. q_k below is
        // the softmax of the anchor's negative scores.
        Vector q = softmax(neg_scores);
        double c = wi * inv_p / tau;
        for (std::size_t p : pos) {
            axpy(-c, z[p], d_z[i]);
            axpy(-c, z[i], d_z[p]);
        }
        double cn = wi / tau;
        for (std::size_t k = 0; k < neg.size(); ++k) {
            axpy(cn * q[k], z[neg[k]], d_z[i]);
            axpy(cn * q[k], z[i], d_z[neg[k]]);
        }
    }

    SupconResult res;
    res.loss = loss;
    if (!normalize) {
        res.d_features = std::move(d_z);
        return res;
    }
    // Back through z = x / max(||x||, 1e-12): remove the radial component and
    // divide by the clamped norm. Near-zero features are treated as frozen.
    res.d_features.assign(n, Vector(dim, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        double raw = l2_norm(features[i]);
        if (raw < 1e-12) continue;
        double radial = dot(d_z[i], z[i]);
        for (std::size_t d = 0; d < dim; ++d) {
            res.d_features[i][d] = (d_z[i][d] - radial * z[i][d]) / prep.norms[i];
        }
    }
    return res;
}

double weighted_supcon(const std::vector<Vector>& features, const std::vector<int>& answer_ids,
                       const std::vector<int>& qtype_ids, const LossWeightTable& table,
                       double tau, bool normalize) {
    validate_supcon_args(features, answer_ids, qtype_ids, tau);
    std::size_t n = features.size();
    Prepared prep = prepare_features(features, normalize);
    const std::vector<Vector>& z = prep.z;

    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> pos, neg;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            (answer_ids[j] == answer_ids[i] ? pos : neg).push_back(j);
        }
        if (pos.empty() || neg.empty()) continue;
        double wi = table.at(qtype_ids[i], answer_ids[i]).W;
        Vector neg_scores(neg.size());
        for (std::size_t k = 0; k < neg.size(); ++k) neg_scores[k] = dot(z[i], z[neg[k]]) / tau;
        double lse = log_sum_exp(neg_scores);
        double inv_p = 1.0 / static_cast<double>(pos.size());
        for (std::size_t p : pos) {
            loss -= inv_p * wi * (dot(z[i], z[p]) / tau - lse);
        }
    }
    return loss;
}

} // namespace cedo
