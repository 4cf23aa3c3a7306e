#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cedo/numeric.hpp"

namespace cedo {

// Cross entropy of the true answer under softmax(logits), computed in log
// space (log-sum-exp minus the true logit), so near-certain predictions keep
// their tiny losses instead of collapsing to 0.
double cross_entropy(const Vector& logits, int answer);

// d(cross_entropy)/d(logits) = softmax(logits) - onehot(answer).
Vector cross_entropy_grad(const Vector& logits, int answer);

// Sum of enabled components; disabled branches are passed as 0.
double total_loss(double l_t, double l_q, double l_v, double l_supcon = 0.0);

// One (question type, answer) cell of the rarity-weight table.
// count_M: samples with this question type; count_m: samples with this
// (question type, answer) pair; w = 1 / (count_M * count_m); W = softplus(w).
struct WeightCell {
    std::size_t count_m = 0;
    std::size_t count_M = 0;
    double w = 0.0;
    double W = 0.0;
};

struct LossWeightTable {
    std::map<std::pair<int, int>, WeightCell> cells; // key: (qtype_id, answer_id)

    const WeightCell& at(int qtype, int answer) const;
    bool contains(int qtype, int answer) const;
};

// Builds the table from parallel per-sample id vectors (the training split).
// Every pair observed at least once gets a cell; softplus smoothing keeps the
// weights bounded (w -> 0 gives W -> ln 2) while rarer pairs weigh more.
LossWeightTable compute_dlr_weights(const std::vector<int>& qtype_ids,
                                    const std::vector<int>& answer_ids);

// Audit export: JSON object keyed "qtype/answer" with all four cell fields.
void export_weight_table(const LossWeightTable& table,
                         const std::vector<std::string>& qtype_names,
                         const std::vector<std::string>& answer_names,
                         const std::string& path);

// Weighted supervised contrastive loss over a batch of embeddings.
// Per anchor i: positives P_i are other samples sharing the anchor's answer,
// negatives N_i are samples with a different answer; anchors with either set
// empty contribute nothing. Each anchor's log-ratio terms are scaled by the
// rarity weight of the anchor's (question type, answer) cell and the term
// denominators run over negatives only. Returns the plain sum over anchors.
double weighted_supcon(const std::vector<Vector>& features, const std::vector<int>& answer_ids,
                       const std::vector<int>& qtype_ids, const LossWeightTable& table,
                       double tau, bool normalize);

struct SupconResult {
    double loss = 0.0;
    std::vector<Vector> d_features; // gradient w.r.t. the raw input features
};

// Same loss plus its analytic gradient w.r.t. every input feature vector
// (through the optional L2 normalization as well).
SupconResult weighted_supcon_with_grad(const std::vector<Vector>& features,
                                       const std::vector<int>& answer_ids,
                                       const std::vector<int>& qtype_ids,
                                       const LossWeightTable& table, double tau, bool normalize);

struct LossConfig {
    bool enable_q_branch = false;
    bool enable_v_branch = false;
    bool enable_dlr = false;
    double tau = 1.0;
    bool normalize_features = false;
};

} // namespace cedo
