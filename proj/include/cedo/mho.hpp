#pragma once

#include "cedo/model.hpp"

namespace cedo {

// Per-group step sizes: question encoder, image encoder, shared fusion +
// classifier. Defaults follow the tuned peak (0.002 / 0.003 / 0.003).
struct LearningRates {
    double eta_q = 0.002;
    double eta_v = 0.003;
    double eta_c = 0.003;
};

// Validates and builds the triple: every rate must be finite and positive.
LearningRates make_rates(double eta_q, double eta_v, double eta_c);

// All groups at the same rate (the single-rate baseline).
LearningRates equal_rates(double eta);

struct UpdateReport {
    double delta_q = 0.0; // l2 norm of the applied question-encoder delta
    double delta_v = 0.0;
    double delta_c = 0.0;
};

// Plain per-group SGD: theta_k <- theta_k - eta_k * grad_k. No momentum, no
// weight decay. With equal rates this is bit-for-bit ordinary SGD.
UpdateReport apply_update(ModelParams& params, const ModelGrads& grads, const LearningRates& rates);

} // namespace cedo
