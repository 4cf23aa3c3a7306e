#include "cedo/gms.hpp"

#include <algorithm>
#include <cmath>

#include "cedo/errors.hpp"

namespace cedo {

std::string ortho_mode_name(OrthoMode m) {
    return m == OrthoMode::Literal ? "literal" : "orthogonal";
}

OrthoMode ortho_mode_from_name(const std::string& name) {
    if (name == "literal") return OrthoMode::Literal;
    if (name == "orthogonal") return OrthoMode::Orthogonal;
    throw ArgumentError("unknown ortho mode '" + name + "' (expected literal|orthogonal)");
}

std::string combine_mode_name(CombineMode m) {
    return m == CombineMode::PlainSum ? "plain_sum" : "pareto_weighted";
}

CombineMode combine_mode_from_name(const std::string& name) {
    if (name == "plain_sum") return CombineMode::PlainSum;
    if (name == "pareto_weighted") return CombineMode::ParetoWeighted;
    throw ArgumentError("unknown combine mode '" + name + "' (expected plain_sum|pareto_weighted)");
}

double cosine_similarity(const Vector& a, const Vector& b) {
    double na = l2_norm(a);
    double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) {
        throw ArgumentError("cosine_similarity: zero vector has no direction");
    }
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

namespace {

void check_set(const GradientSet& gs) {
    if (gs.g_t.size() != gs.g_q.size() || gs.g_t.size() != gs.g_v.size()) {
        throw ShapeError("gradient set lengths differ: t(" + std::to_string(gs.g_t.size()) +
                         ") q(" + std::to_string(gs.g_q.size()) + ") v(" +
                         std::to_string(gs.g_v.size()) + ")");
    }
    if (gs.g_t.empty()) throw ArgumentError("gradient set is empty");
}

// Exact minimizer of ||(1-g) u + g v|| over g in [0, 1].
double line_search(const Vector& u, const Vector& v) {
    Vector d = sub(u, v);
    double denom = dot(d, d);
    if (denom <= 0.0) return 0.0;
    return std::clamp(dot(d, u) / denom, 0.0, 1.0);
}

Vector combination(const std::array<const Vector*, 3>& g, const std::array<double, 3>& alpha) {
    Vector u(g[0]->size(), 0.0);
    for (int k = 0; k < 3; ++k) {
        if (alpha[static_cast<std::size_t>(k)] == 0.0) continue;
        axpy(alpha[static_cast<std::size_t>(k)], *g[static_cast<std::size_t>(k)], u);
    }
    return u;
}

} // namespace

ParetoResult pareto_min_norm(const GradientSet& gs, const GmsConfig& cfg) {
    check_set(gs);
    std::array<const Vector*, 3> g{&gs.g_t, &gs.g_q, &gs.g_v};

    // Seed: best vertex, then best two-point segment (closed form).
    std::array<double, 3> alpha{1.0, 0.0, 0.0};
    double best = dot(*g[0], *g[0]);
    for (std::size_t k = 1; k < 3; ++k) {
        double n2 = dot(*g[k], *g[k]);
        if (n2 < best) {
            best = n2;
            alpha = {0.0, 0.0, 0.0};
            alpha[k] = 1.0;
        }
    }
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = a + 1; b < 3; ++b) {
            double gamma = line_search(*g[a], *g[b]);
            std::array<double, 3> cand{0.0, 0.0, 0.0};
            cand[a] = 1.0 - gamma;
            cand[b] = gamma;
            Vector u = combination(g, cand);
            double n2 = dot(u, u);
            if (n2 < best) {
                best = n2;
                alpha = cand;
            }
        }
    }

    ParetoResult res;
    Vector u = combination(g, alpha);
    double norm = l2_norm(u);
    for (std::size_t it = 0; it < cfg.pareto_max_iters; ++it) {
        // Frank-Wolfe vertex: the gradient most opposed to the current point.
        std::size_t pick = 0;
        double best_dot = dot(*g[0], u);
        for (std::size_t k = 1; k < 3; ++k) {
            double d = dot(*g[k], u);
            if (d < best_dot) {
                best_dot = d;
                pick = k;
            }
        }
        double gamma = line_search(u, *g[pick]);
        res.iters = it + 1;
        if (gamma == 0.0) break;
        for (std::size_t k = 0; k < 3; ++k) alpha[k] *= (1.0 - gamma);
        alpha[pick] += gamma;
        u = combination(g, alpha);
        double new_norm = l2_norm(u);
        double improvement = norm - new_norm;
        norm = new_norm;
        if (improvement < cfg.pareto_tol) break;
    }

    res.alpha = alpha;
    res.combined = std::move(u);
    res.min_norm = norm;
    res.stationary = norm < cfg.stationary_tol;
    return res;
}

namespace {

// One surgery: corrects `target` against `ref` per the configured mode.
Vector correct(const Vector& target, const Vector& ref, OrthoMode mode, bool conflict_only,
               bool& applied, bool& degenerate) {
    applied = false;
    degenerate = false;
    double tt = dot(target, target);
    double rr = dot(ref, ref);
    if (tt == 0.0 || rr == 0.0) {
        degenerate = true;
        return target;
    }
    double tr = dot(target, ref);
    if (conflict_only && tr >= 0.0) return target;
    applied = true;
    if (mode == OrthoMode::Literal) {
        // Factored so the result is an exact scalar multiple of the target.
        double s = 1.0 - tr / tt;
        return scale(target, s);
    }
    Vector out = target;
    axpy(-tr / rr, ref, out);
    return out;
}

} // namespace

GradientSet orthogonalize(const GradientSet& gs, const GmsConfig& cfg, OrthoReport* report) {
    check_set(gs);
    OrthoReport local;
    GradientSet out;
    // Index order (t, q, v): question corrected against image, image and joint
    // both corrected against the question gradient.
    out.g_q = correct(gs.g_q, gs.g_v, cfg.ortho_mode, cfg.conflict_only, local.applied[1],
                      local.degenerate[1]);
    out.g_v = correct(gs.g_v, gs.g_q, cfg.ortho_mode, cfg.conflict_only, local.applied[2],
                      local.degenerate[2]);
    out.g_t = correct(gs.g_t, gs.g_q, cfg.ortho_mode, cfg.conflict_only, local.applied[0],
                      local.degenerate[0]);
    if (report) *report = local;
    return out;
}

Vector combine(const GradientSet& gs, const GmsConfig& cfg, const std::array<double, 3>& alpha) {
    check_set(gs);
    Vector out(gs.g_t.size(), 0.0);
    if (cfg.combine_mode == CombineMode::PlainSum) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = gs.g_t[i] + gs.g_q[i] + gs.g_v[i];
        }
        return out;
    }
    std::array<const Vector*, 3> g{&gs.g_t, &gs.g_q, &gs.g_v};
    for (std::size_t k = 0; k < 3; ++k) axpy(alpha[k], *g[k], out);
    return out;
}

} // namespace cedo
