#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cedo/numeric.hpp"

namespace cedo {

struct ModelDims {
    std::size_t q_in = 0;    // question feature width
    std::size_t v_in = 0;    // image feature width
    std::size_t hidden = 0;  // encoder output width (shared by both encoders)
    std::size_t fused = 0;   // fusion output width, also the contrastive embedding width
    std::size_t answers = 0; // answer vocabulary size

    bool operator==(const ModelDims&) const = default;
};

// One affine layer, y = w x + b, w stored row-major (out x in).
struct Linear {
    Matrix w;
    Vector b;
};

// Parameter groups used for per-group learning rates and gradient scoping:
// Q = question encoder, V = image encoder, C = shared fusion + classifier.
enum class Group { Q, V, C };

struct ModelParams {
    ModelDims dims;
    Linear q_enc;      // hidden x q_in
    Linear v_enc;      // hidden x v_in
    Linear fusion;     // fused x 2*hidden, input is [image half | question half]
    Linear classifier; // answers x fused
};

// Gradient container mirroring ModelParams tensor-for-tensor.
struct ModelGrads {
    Linear q_enc;
    Linear v_enc;
    Linear fusion;
    Linear classifier;
};

ModelGrads zero_grads(const ModelDims& dims);

// Glorot-uniform weights (limit sqrt(6 / (fan_in + fan_out))), zero biases.
// Draw order is fixed (q_enc, v_enc, fusion, classifier, each row-major) so a
// given seed always produces the same initialization.
ModelParams init_params(const ModelDims& dims, RngStream& rng);

struct Batch {
    Matrix q_feat;            // batch x q_in
    Matrix v_feat;            // batch x v_in
    std::vector<int> answer;  // ground-truth answer ids
    std::vector<int> qtype;   // question-type ids

    std::size_t size() const { return answer.size(); }
};

// Everything backward needs, captured per sample. The three heads share the
// encoders; the question-only and image-only heads zero-fill the missing half
// of the fusion input, so gradients for the absent modality are exactly zero.
struct ForwardCache {
    Vector q_in, v_in;           // raw inputs
    Vector z_q, r_q;             // question encoder pre/post ReLU
    Vector z_v, r_v;             // image encoder pre/post ReLU
    Vector u_t, x_t, logits_t;   // joint head: fusion pre-act, embedding, logits
    Vector u_q, x_q, logits_q;   // question-only head
    Vector u_v, x_v, logits_v;   // image-only head
};

ForwardCache forward_one(const ModelParams& p, const Vector& q_feat, const Vector& v_feat);
std::vector<ForwardCache> forward(const ModelParams& p, const Batch& batch);

enum class Head { T, Q, V };

// Adds one sample's contribution to `out`, backpropagating d_logits through
// the chosen head. The caller owns any 1/batch scaling (bake it into d_logits).
void accumulate_head_backward(const ModelParams& p, const ForwardCache& c, Head head,
                              const Vector& d_logits, ModelGrads& out);

// Adds one sample's contribution entering at the joint fused embedding x_t
// (used by losses defined on the embedding rather than the logits). No
// classifier gradient by construction.
void accumulate_embedding_backward(const ModelParams& p, const ForwardCache& c,
                                   const Vector& d_x, ModelGrads& out);

// Per-sample upstream gradients for each head; an empty outer vector means the
// head is disabled and contributes nothing.
struct Upstream {
    std::vector<Vector> t;
    std::vector<Vector> q;
    std::vector<Vector> v;
};

struct PerLossGrads {
    ModelGrads t;
    ModelGrads q;
    ModelGrads v;
};

// Sums per-sample contributions for the three losses in one pass.
PerLossGrads backward(const ModelParams& p, const std::vector<ForwardCache>& caches,
                      const Upstream& up);

// Flattening scope for gradient surgery: just the shared group (fusion +
// classifier) or every parameter.
enum class GradScope { Classifier, All };

std::size_t scope_size(const ModelDims& dims, GradScope scope);
Vector flatten_grads(const ModelGrads& g, const ModelDims& dims, GradScope scope);
// Inverse of flatten_grads over the scoped tensors; out-of-scope tensors of
// `g` are left untouched.
void unflatten_grads(const Vector& flat, const ModelDims& dims, GradScope scope, ModelGrads& g);

std::string scope_name(GradScope scope);
GradScope scope_from_name(const std::string& name);

// Versioned JSON checkpoint with an exact parameter round trip.
void save_checkpoint(const ModelParams& p, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

} // namespace cedo
