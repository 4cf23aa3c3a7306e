#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "cedo/numeric.hpp"

namespace cedo {

// Flattened per-loss gradients over a common parameter scope, in the fixed
// order (joint, question branch, image branch).
struct GradientSet {
    Vector g_t;
    Vector g_q;
    Vector g_v;
};

// literal:    G'_x = G_x - ((G_ref . G_x) / ||G_x||^2) G_x   (stays colinear with G_x)
// orthogonal: G'_x = G_x - ((G_x . G_ref) / ||G_ref||^2) G_ref (orthogonal to the reference)
enum class OrthoMode { Literal, Orthogonal };

enum class CombineMode { PlainSum, ParetoWeighted };

struct GmsConfig {
    OrthoMode ortho_mode = OrthoMode::Orthogonal;
    bool conflict_only = true; // surgery only when cos(target, reference) < 0
    CombineMode combine_mode = CombineMode::PlainSum;
    std::size_t pareto_max_iters = 250;
    double pareto_tol = 1e-9;      // stop when the norm stops improving by this much
    double stationary_tol = 1e-3;  // min-norm below this flags Pareto stationarity
};

std::string ortho_mode_name(OrthoMode m);
OrthoMode ortho_mode_from_name(const std::string& name);
std::string combine_mode_name(CombineMode m);
CombineMode combine_mode_from_name(const std::string& name);

// Clamped to [-1, 1]; throws ArgumentError on a zero vector.
double cosine_similarity(const Vector& a, const Vector& b);

struct ParetoResult {
    std::array<double, 3> alpha{}; // simplex weights for (t, q, v)
    Vector combined;               // sum_k alpha_k g_k
    double min_norm = 0.0;
    bool stationary = false;
    std::size_t iters = 0;
};

// Min-norm convex combination of the three gradients: Frank-Wolfe with the
// exact two-point line search gamma* = clamp(((u-v).u) / ||u-v||^2, 0, 1),
// seeded at the best of the three vertices and three closed-form pair minima
// (plain FW from a uniform start crawls when the optimum sits on a simplex
// edge; the pair scan lands on edge optima exactly).
ParetoResult pareto_min_norm(const GradientSet& gs, const GmsConfig& cfg);

struct OrthoReport {
    std::array<bool, 3> applied{};    // surgery actually changed (t, q, v)
    std::array<bool, 3> degenerate{}; // zero-norm target or reference, passed through
};

// Pairing: the question gradient is corrected against the image gradient, and
// both the image and joint gradients are corrected against the question
// gradient. All references are read from the input set, so the three
// corrections are simultaneous and order-free. With conflict_only, aligned
// pairs pass through bit-identical.
GradientSet orthogonalize(const GradientSet& gs, const GmsConfig& cfg,
                          OrthoReport* report = nullptr);

// PlainSum ignores alpha; ParetoWeighted computes sum_k alpha_k g_k.
Vector combine(const GradientSet& gs, const GmsConfig& cfg, const std::array<double, 3>& alpha);

} // namespace cedo
