#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cedo/losses.hpp"

using namespace cedo;

namespace {

// Independent supervised-contrastive reference: dumb triple loop, no shared
// code with the implementation beyond std::exp/std::log.
double supcon_reference(const std::vector<Vector>& feats, const std::vector<int>& answers,
                        const std::vector<int>& qtypes, const LossWeightTable& table, double tau,
                        bool normalize) {
    std::size_t n = feats.size();
    std::vector<Vector> z = feats;
    if (normalize) {
        for (Vector& v : z) {
            double norm = std::sqrt(dot(v, v));
            if (norm >= 1e-12) {
                for (double& x : v) x /= norm;
            }
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> pos, neg;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            (answers[j] == answers[i] ? pos : neg).push_back(j);
        }
        if (pos.empty() || neg.empty()) continue;
        double denom_sum = 0.0;
        for (std::size_t k : neg) denom_sum += std::exp(dot(z[i], z[k]) / tau);
        double wi = table.at(qtypes[i], answers[i]).W;
        double anchor = 0.0;
        for (std::size_t p : pos) {
            anchor += wi * (dot(z[i], z[p]) / tau - std::log(denom_sum));
        }
        total += -anchor / static_cast<double>(pos.size());
    }
    return total;
}

struct Case {
    std::vector<Vector> feats;
    std::vector<int> answers;
    std::vector<int> qtypes;
    LossWeightTable table;
};

Case random_case(RngStream& rng, std::size_t n, std::size_t dim, int n_labels) {
    Case c;
    c.feats.resize(n);
    c.answers.resize(n);
    c.qtypes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        c.feats[i].resize(dim);
        for (double& x : c.feats[i]) x = rng.uniform(-2, 2);
        c.answers[i] = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n_labels)));
        c.qtypes[i] = static_cast<int>(rng.next_below(2));
    }
    // Building the table from the batch itself guarantees a cell for every
    // anchor and makes the weights vary with label frequency.
    c.table = compute_dlr_weights(c.qtypes, c.answers);
    return c;
}

} // namespace

TEST_CASE("cross entropy pinned values") {
    // Uniform logits over 4 answers: exactly ln 4, bit for bit.
    CHECK(cross_entropy(Vector{0, 0, 0, 0}, 2) == std::log(4.0));
    // Uniform over 3 at peak 0: the log-space path is peak + log1p(sum of
    // remaining exps) - peak, bitwise the runtime log1p(2) when the peak is
    // zero. The volatile blocks compile-time folding, which is rounded
    // differently from the libm call the library makes.
    volatile double two = 2.0;
    CHECK(cross_entropy(Vector{0, 0, 0}, 0) == std::log1p(two));
    CHECK(cross_entropy(Vector{5, 5, 5}, 0) == doctest::Approx(std::log(3.0)).epsilon(1e-15));
    // Confident correct answer: loss is the genuinely tiny tail, not zero.
    double l = cross_entropy(Vector{10.0, -10.0}, 0);
    CHECK(l == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-12));
    CHECK(l > 0.0);
    CHECK(l < 1e-8);
    // Confident wrong answer is ~20.
    CHECK(cross_entropy(Vector{10.0, -10.0}, 1) == doctest::Approx(20.0).epsilon(1e-9));
    // Shift invariance.
    CHECK(cross_entropy(Vector{1, 2, 3}, 1) ==
          doctest::Approx(cross_entropy(Vector{101, 102, 103}, 1)).epsilon(1e-12));
    CHECK_THROWS_AS(cross_entropy(Vector{1, 2}, 5), ArgumentError);
}

TEST_CASE("cross entropy gradient is softmax minus one hot and sums to zero") {
    Vector logits{0.2, -1.4, 0.9, 0.0};
    Vector g = cross_entropy_grad(logits, 2);
    Vector p = softmax(logits);
    for (std::size_t k = 0; k < 4; ++k) {
        double expected = p[k] - (k == 2 ? 1.0 : 0.0);
        CHECK(g[k] == doctest::Approx(expected).epsilon(1e-15));
    }
    double s = 0.0;
    for (double x : g) s += x;
    CHECK(std::abs(s) < 1e-12);
}

TEST_CASE("loss reweighting matches the closed form softplus of inverse mass") {
    // Single qtype, one answer with 1 member, one with 4; M = 5.
    std::vector<int> qtypes{0, 0, 0, 0, 0};
    std::vector<int> answers{1, 0, 0, 0, 0};
    LossWeightTable t = compute_dlr_weights(qtypes, answers);
    const WeightCell& rare = t.at(0, 1);
    const WeightCell& common = t.at(0, 0);
    CHECK(rare.count_m == 1);
    CHECK(rare.count_M == 5);
    CHECK(common.count_m == 4);
    CHECK(rare.w == doctest::Approx(1.0 / 5.0).epsilon(1e-15));
    CHECK(rare.W == std::log1p(std::exp(1.0 / 5.0)));
    CHECK(common.W == std::log1p(std::exp(1.0 / 20.0)));
    CHECK(rare.W > common.W);

    // Frozen values for two landmark masses.
    std::vector<int> q2(5000, 0), a2(5000, 0);
    a2[0] = 1; // m = 1 out of M = 5000
    LossWeightTable t2 = compute_dlr_weights(q2, a2);
    CHECK(t2.at(0, 1).W == doctest::Approx(0.693247185560).epsilon(1e-10));
    // m*M == 1 gives softplus(1).
    LossWeightTable t3 = compute_dlr_weights(std::vector<int>{0}, std::vector<int>{0});
    CHECK(t3.at(0, 0).W == doctest::Approx(1.313261687518).epsilon(1e-10));
    // Limit direction: weights approach ln 2 from above as mass grows.
    CHECK(t2.at(0, 0).W > std::log(2.0));
    CHECK(t2.at(0, 0).W - std::log(2.0) < 1e-3);
    CHECK_THROWS_AS(t2.at(3, 3), ArgumentError);
    CHECK(t2.contains(0, 0));
    CHECK(!t2.contains(9, 9));
    CHECK_THROWS_AS(compute_dlr_weights(std::vector<int>{0, 0}, std::vector<int>{0}), ShapeError);
}

TEST_CASE("reweighting is strictly decreasing in answer frequency") {
    // qtype 0 has answers with masses 1, 2, 3, 10.
    std::vector<int> qtypes, answers;
    auto push = [&](int a, int times) {
        for (int k = 0; k < times; ++k) {
            qtypes.push_back(0);
            answers.push_back(a);
        }
    };
    push(0, 1);
    push(1, 2);
    push(2, 3);
    push(3, 10);
    LossWeightTable t = compute_dlr_weights(qtypes, answers);
    CHECK(t.at(0, 0).W > t.at(0, 1).W);
    CHECK(t.at(0, 1).W > t.at(0, 2).W);
    CHECK(t.at(0, 2).W > t.at(0, 3).W);
    // Independent per qtype: a lone sample in its own type gets softplus(1).
    qtypes.push_back(1);
    answers.push_back(0);
    LossWeightTable t2 = compute_dlr_weights(qtypes, answers);
    CHECK(t2.at(1, 0).W == std::log1p(std::exp(1.0)));
}

TEST_CASE("weighted supcon matches the brute force reference") {
    RngStream rng(101);
    for (int trial = 0; trial < 60; ++trial) {
        std::size_t n = 2 + rng.next_below(7); // 2..8
        Case c = random_case(rng, n, 3, 3);
        for (bool normalize : {false, true}) {
            double tau = trial % 2 == 0 ? 1.0 : 0.37;
            double ref = supcon_reference(c.feats, c.answers, c.qtypes, c.table, tau, normalize);
            double got = weighted_supcon(c.feats, c.answers, c.qtypes, c.table, tau, normalize);
            CHECK(std::abs(got - ref) <= 1e-10 * std::max(1.0, std::abs(ref)));
        }
    }
}

TEST_CASE("supcon degenerate batches contribute zero") {
    LossWeightTable table = compute_dlr_weights({0, 0, 0}, {2, 2, 2});
    // All same label: no negatives anywhere.
    CHECK(weighted_supcon({{1, 0}, {0, 1}, {1, 1}}, {2, 2, 2}, {0, 0, 0}, table, 1.0, false) ==
          0.0);
    // All distinct labels: no positives anywhere.
    LossWeightTable t2 = compute_dlr_weights({0, 0, 0}, {0, 1, 2});
    CHECK(weighted_supcon({{1, 0}, {0, 1}, {1, 1}}, {0, 1, 2}, {0, 0, 0}, t2, 1.0, false) == 0.0);
    LossWeightTable t1 = compute_dlr_weights({0}, {0});
    CHECK_THROWS_AS(weighted_supcon({{1, 0}}, {0}, {0}, t1, 1.0, false), ArgumentError);
    LossWeightTable t3 = compute_dlr_weights({0, 0}, {0, 0});
    CHECK_THROWS_AS(weighted_supcon({{1, 0}, {0, 1}}, {0, 0}, {0, 0}, t3, 0.0, false),
                    ArgumentError);
    CHECK_THROWS_AS(weighted_supcon({{1, 0}, {0, 1, 2}}, {0, 0}, {0, 0}, t3, 1.0, false),
                    ShapeError);
}

TEST_CASE("supcon feature gradient matches finite differences") {
    RngStream rng(211);
    const double eps = 1e-6;
    for (int trial = 0; trial < 12; ++trial) {
        std::size_t n = 3 + rng.next_below(4); // 3..6
        Case c = random_case(rng, n, 3, 2);
        bool normalize = trial % 2 == 1;
        double tau = trial % 3 == 0 ? 0.5 : 1.0;
        SupconResult res =
            weighted_supcon_with_grad(c.feats, c.answers, c.qtypes, c.table, tau, normalize);
        double base = supcon_reference(c.feats, c.answers, c.qtypes, c.table, tau, normalize);
        CHECK(std::abs(res.loss - base) <= 1e-10 * std::max(1.0, std::abs(base)));
        REQUIRE(res.d_features.size() == n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < 3; ++k) {
                double keep = c.feats[i][k];
                c.feats[i][k] = keep + eps;
                double up =
                    supcon_reference(c.feats, c.answers, c.qtypes, c.table, tau, normalize);
                c.feats[i][k] = keep - eps;
                double dn =
                    supcon_reference(c.feats, c.answers, c.qtypes, c.table, tau, normalize);
                c.feats[i][k] = keep;
                double numeric = (up - dn) / (2.0 * eps);
                double analytic = res.d_features[i][k];
                double tol =
                    std::max(5e-6, 1e-4 * std::max(std::abs(analytic), std::abs(numeric)));
                if (std::abs(analytic - numeric) > tol) {
                    CAPTURE(trial);
                    CAPTURE(i);
                    CAPTURE(k);
                    CAPTURE(analytic);
                    CAPTURE(numeric);
                    REQUIRE(false);
                }
            }
        }
    }
}

TEST_CASE("total loss is the plain sum of its parts") {
    CHECK(total_loss(1.5, 0.25, 0.75, 0.5) == 3.0);
    CHECK(total_loss(1.5, 0.25, 0.75) == 2.5);
}
