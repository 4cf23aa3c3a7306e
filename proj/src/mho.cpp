#include "cedo/mho.hpp"

#include <cmath>

#include "cedo/errors.hpp"

namespace cedo {

LearningRates make_rates(double eta_q, double eta_v, double eta_c) {
    for (double e : {eta_q, eta_v, eta_c}) {
        if (!std::isfinite(e) || e <= 0.0) {
            throw ArgumentError("learning rates must be finite and positive, got " +
                                std::to_string(e));
        }
    }
    return LearningRates{eta_q, eta_v, eta_c};
}

LearningRates equal_rates(double eta) {
    return make_rates(eta, eta, eta);
}

namespace {

// theta -= eta * g for one layer; returns the squared norm of the delta.
double step_layer(Linear& layer, const Linear& grad, double eta) {
    if (!layer.w.same_shape(grad.w) || layer.b.size() != grad.b.size()) {
        throw ShapeError("apply_update: gradient shape " + shape_str(grad.w) +
                         " does not match parameter shape " + shape_str(layer.w));
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < layer.w.data.size(); ++i) {
        double d = eta * grad.w.data[i];
        layer.w.data[i] -= d;
        sq += d * d;
    }
    for (std::size_t i = 0; i < layer.b.size(); ++i) {
        double d = eta * grad.b[i];
        layer.b[i] -= d;
        sq += d * d;
    }
    return sq;
}

} // namespace

UpdateReport apply_update(ModelParams& params, const ModelGrads& grads,
                          const LearningRates& rates) {
    make_rates(rates.eta_q, rates.eta_v, rates.eta_c); // re-validate
    UpdateReport rep;
    rep.delta_q = std::sqrt(step_layer(params.q_enc, grads.q_enc, rates.eta_q));
    rep.delta_v = std::sqrt(step_layer(params.v_enc, grads.v_enc, rates.eta_v));
    double c = step_layer(params.fusion, grads.fusion, rates.eta_c);
    c += step_layer(params.classifier, grads.classifier, rates.eta_c);
    rep.delta_c = std::sqrt(c);
    return rep;
}

} // namespace cedo
