#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cedo/mho.hpp"

using namespace cedo;

namespace {

ModelParams small_params(RngStream& rng) {
    ModelDims d{3, 2, 4, 3, 5};
    return init_params(d, rng);
}

ModelGrads random_grads(const ModelDims& d, RngStream& rng) {
    ModelGrads g = zero_grads(d);
    for (Linear* l : {&g.q_enc, &g.v_enc, &g.fusion, &g.classifier}) {
        for (double& w : l->w.data) w = rng.uniform(-1, 1);
        for (double& b : l->b) b = rng.uniform(-1, 1);
    }
    return g;
}

} // namespace

TEST_CASE("defaults match the published schedule") {
    LearningRates r;
    CHECK(r.eta_q == 0.002);
    CHECK(r.eta_v == 0.003);
    CHECK(r.eta_c == 0.003);
}

TEST_CASE("update applies each rate to its own group") {
    RngStream rng(5);
    ModelParams p = small_params(rng);
    ModelParams before = p;
    ModelGrads g = random_grads(p.dims, rng);
    LearningRates r = make_rates(0.5, 0.25, 0.125);
    UpdateReport rep = apply_update(p, g, r);

    for (std::size_t k = 0; k < p.q_enc.w.data.size(); ++k) {
        CHECK(p.q_enc.w.data[k] == before.q_enc.w.data[k] - 0.5 * g.q_enc.w.data[k]);
    }
    for (std::size_t k = 0; k < p.v_enc.w.data.size(); ++k) {
        CHECK(p.v_enc.w.data[k] == before.v_enc.w.data[k] - 0.25 * g.v_enc.w.data[k]);
    }
    // Fusion and classifier share the shared-group rate.
    for (std::size_t k = 0; k < p.fusion.b.size(); ++k) {
        CHECK(p.fusion.b[k] == before.fusion.b[k] - 0.125 * g.fusion.b[k]);
    }
    for (std::size_t k = 0; k < p.classifier.w.data.size(); ++k) {
        CHECK(p.classifier.w.data[k] ==
              before.classifier.w.data[k] - 0.125 * g.classifier.w.data[k]);
    }

    // Report carries the l2 norm of each applied delta.
    double dq = 0.0;
    for (double w : g.q_enc.w.data) dq += 0.25 * w * w;
    for (double b : g.q_enc.b) dq += 0.25 * b * b;
    CHECK(rep.delta_q == doctest::Approx(std::sqrt(dq)).epsilon(1e-12));
    CHECK(rep.delta_v > 0.0);
    CHECK(rep.delta_c > 0.0);
}

TEST_CASE("equal rates collapse to single rate sgd bit for bit") {
    RngStream rng_a(9), rng_b(9);
    ModelParams a = small_params(rng_a);
    ModelParams b = small_params(rng_b);
    REQUIRE(a.fusion.w.data == b.fusion.w.data);

    LearningRates grouped = make_rates(0.003, 0.003, 0.003);
    LearningRates single = equal_rates(0.003);
    RngStream gr(33);
    for (int step = 0; step < 100; ++step) {
        ModelGrads g = random_grads(a.dims, gr);
        apply_update(a, g, grouped);
        apply_update(b, g, single);
    }
    CHECK(a.q_enc.w.data == b.q_enc.w.data);
    CHECK(a.q_enc.b == b.q_enc.b);
    CHECK(a.v_enc.w.data == b.v_enc.w.data);
    CHECK(a.fusion.w.data == b.fusion.w.data);
    CHECK(a.fusion.b == b.fusion.b);
    CHECK(a.classifier.w.data == b.classifier.w.data);
    CHECK(a.classifier.b == b.classifier.b);
}

TEST_CASE("rate validation") {
    CHECK_THROWS_AS(make_rates(0.0, 0.1, 0.1), ArgumentError);
    CHECK_THROWS_AS(make_rates(0.1, -0.2, 0.1), ArgumentError);
    CHECK_THROWS_AS(make_rates(0.1, 0.1, std::nan("")), ArgumentError);
    LearningRates ok = make_rates(1e-9, 2.0, 0.5);
    CHECK(ok.eta_q == 1e-9);
}

TEST_CASE("shape mismatch between params and grads is rejected") {
    RngStream rng(5);
    ModelParams p = small_params(rng);
    ModelDims other{4, 2, 4, 3, 5};
    ModelGrads g = zero_grads(other);
    CHECK_THROWS_AS(apply_update(p, g, LearningRates{}), ShapeError);
}
