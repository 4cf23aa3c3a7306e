#include "cedo/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace cedo {

namespace {

Vector relu(const Vector& z) {
    Vector r(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) r[i] = z[i] > 0.0 ? z[i] : 0.0;
    return r;
}

Vector affine(const Linear& l, const Vector& x) {
    Vector y = matvec(l.w, x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += l.b[i];
    return y;
}

Linear zero_linear(std::size_t out, std::size_t in) {
    return Linear{Matrix(out, in), Vector(out, 0.0)};
}

Linear glorot_linear(std::size_t out, std::size_t in, RngStream& rng) {
    Linear l = zero_linear(out, in);
    double s = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : l.w.data) w = rng.uniform(-s, s);
    return l;
}

void check_dims(const ModelDims& d) {
    if (d.q_in == 0 || d.v_in == 0 || d.hidden == 0 || d.fused == 0 || d.answers == 0) {
        throw ArgumentError("model dims must all be positive");
    }
}

// d_out = upstream through an affine layer: accumulates dW += d_y x^T, db += d_y,
// and returns d_x = W^T d_y.
Vector affine_backward(const Linear& l, const Vector& x, const Vector& d_y, Linear& grad) {
    for (std::size_t i = 0; i < l.w.rows; ++i) {
        double dyi = d_y[i];
        grad.b[i] += dyi;
        if (dyi == 0.0) continue;
        for (std::size_t j = 0; j < l.w.cols; ++j) {
            grad.w(i, j) += dyi * x[j];
        }
    }
    Vector d_x(l.w.cols, 0.0);
    for (std::size_t i = 0; i < l.w.rows; ++i) {
        double dyi = d_y[i];
        if (dyi == 0.0) continue;
        for (std::size_t j = 0; j < l.w.cols; ++j) {
            d_x[j] += l.w(i, j) * dyi;
        }
    }
    return d_x;
}

void relu_backward_inplace(const Vector& z, Vector& d) {
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (z[i] <= 0.0) d[i] = 0.0;
    }
}

} // namespace

ModelGrads zero_grads(const ModelDims& d) {
    ModelGrads g;
    g.q_enc = zero_linear(d.hidden, d.q_in);
    g.v_enc = zero_linear(d.hidden, d.v_in);
    g.fusion = zero_linear(d.fused, 2 * d.hidden);
    g.classifier = zero_linear(d.answers, d.fused);
    return g;
}

ModelParams init_params(const ModelDims& dims, RngStream& rng) {
    check_dims(dims);
    ModelParams p;
    p.dims = dims;
    p.q_enc = glorot_linear(dims.hidden, dims.q_in, rng);
    p.v_enc = glorot_linear(dims.hidden, dims.v_in, rng);
    p.fusion = glorot_linear(dims.fused, 2 * dims.hidden, rng);
    p.classifier = glorot_linear(dims.answers, dims.fused, rng);
    return p;
}

ForwardCache forward_one(const ModelParams& p, const Vector& q_feat, const Vector& v_feat) {
    if (q_feat.size() != p.dims.q_in || v_feat.size() != p.dims.v_in) {
        throw ShapeError("forward_one: feature widths (" + std::to_string(q_feat.size()) + ", " +
                         std::to_string(v_feat.size()) + ") do not match model dims (" +
                         std::to_string(p.dims.q_in) + ", " + std::to_string(p.dims.v_in) + ")");
    }
    ForwardCache c;
    c.q_in = q_feat;
    c.v_in = v_feat;
    c.z_q = affine(p.q_enc, q_feat);
    c.r_q = relu(c.z_q);
    c.z_v = affine(p.v_enc, v_feat);
    c.r_v = relu(c.z_v);

    std::size_t h = p.dims.hidden;
    // Fusion input layout: image half first, question half second.
    Vector cat(2 * h, 0.0);
    auto run_head = [&](bool use_v, bool use_q, Vector& u, Vector& x, Vector& logits) {
        for (std::size_t i = 0; i < h; ++i) {
            cat[i] = use_v ? c.r_v[i] : 0.0;
            cat[h + i] = use_q ? c.r_q[i] : 0.0;
        }
        u = affine(p.fusion, cat);
        x = relu(u);
        logits = affine(p.classifier, x);
    };
    run_head(true, true, c.u_t, c.x_t, c.logits_t);
    run_head(false, true, c.u_q, c.x_q, c.logits_q);
    run_head(true, false, c.u_v, c.x_v, c.logits_v);
    return c;
}

std::vector<ForwardCache> forward(const ModelParams& p, const Batch& batch) {
    std::size_t n = batch.size();
    if (batch.q_feat.rows != n || batch.v_feat.rows != n) {
        throw ShapeError("forward: batch rows q" + shape_str(batch.q_feat) + " v" +
                         shape_str(batch.v_feat) + " vs " + std::to_string(n) + " labels");
    }
    std::vector<ForwardCache> caches;
    caches.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vector q(batch.q_feat.cols), v(batch.v_feat.cols);
        for (std::size_t j = 0; j < q.size(); ++j) q[j] = batch.q_feat(i, j);
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = batch.v_feat(i, j);
        caches.push_back(forward_one(p, q, v));
    }
    return caches;
}

void accumulate_head_backward(const ModelParams& p, const ForwardCache& c, Head head,
                              const Vector& d_logits, ModelGrads& out) {
    if (d_logits.size() != p.dims.answers) {
        throw ShapeError("head backward: upstream length (" + std::to_string(d_logits.size()) +
                         ") vs answers (" + std::to_string(p.dims.answers) + ")");
    }
    const Vector* u = nullptr;
    const Vector* x = nullptr;
    bool use_v = false, use_q = false;
    switch (head) {
        case Head::T: u = &c.u_t; x = &c.x_t; use_v = true; use_q = true; break;
        case Head::Q: u = &c.u_q; x = &c.x_q; use_q = true; break;
        case Head::V: u = &c.u_v; x = &c.x_v; use_v = true; break;
    }

    Vector d_x = affine_backward(p.classifier, *x, d_logits, out.classifier);
    relu_backward_inplace(*u, d_x);

    std::size_t h = p.dims.hidden;
    Vector cat(2 * h, 0.0);
    for (std::size_t i = 0; i < h; ++i) {
        cat[i] = use_v ? c.r_v[i] : 0.0;
        cat[h + i] = use_q ? c.r_q[i] : 0.0;
    }
    Vector d_cat = affine_backward(p.fusion, cat, d_x, out.fusion);

    // The zero-filled half is a constant, so nothing flows to that encoder.
    if (use_q) {
        Vector d_rq(d_cat.begin() + static_cast<std::ptrdiff_t>(h), d_cat.end());
        relu_backward_inplace(c.z_q, d_rq);
        affine_backward(p.q_enc, c.q_in, d_rq, out.q_enc);
    }
    if (use_v) {
        Vector d_rv(d_cat.begin(), d_cat.begin() + static_cast<std::ptrdiff_t>(h));
        relu_backward_inplace(c.z_v, d_rv);
        affine_backward(p.v_enc, c.v_in, d_rv, out.v_enc);
    }
}

void accumulate_embedding_backward(const ModelParams& p, const ForwardCache& c,
                                   const Vector& d_x, ModelGrads& out) {
    if (d_x.size() != p.dims.fused) {
        throw ShapeError("embedding backward: upstream length (" + std::to_string(d_x.size()) +
                         ") vs fused width (" + std::to_string(p.dims.fused) + ")");
    }
    Vector d_u = d_x;
    relu_backward_inplace(c.u_t, d_u);

    std::size_t h = p.dims.hidden;
    Vector cat(2 * h);
    for (std::size_t i = 0; i < h; ++i) {
        cat[i] = c.r_v[i];
        cat[h + i] = c.r_q[i];
    }
    Vector d_cat = affine_backward(p.fusion, cat, d_u, out.fusion);

    Vector d_rq(d_cat.begin() + static_cast<std::ptrdiff_t>(h), d_cat.end());
    relu_backward_inplace(c.z_q, d_rq);
    affine_backward(p.q_enc, c.q_in, d_rq, out.q_enc);

    Vector d_rv(d_cat.begin(), d_cat.begin() + static_cast<std::ptrdiff_t>(h));
    relu_backward_inplace(c.z_v, d_rv);
    affine_backward(p.v_enc, c.v_in, d_rv, out.v_enc);
}

PerLossGrads backward(const ModelParams& p, const std::vector<ForwardCache>& caches,
                      const Upstream& up) {
    auto check = [&](const std::vector<Vector>& u, const char* name) {
        if (!u.empty() && u.size() != caches.size()) {
            throw ShapeError(std::string("backward: upstream ") + name + " has " +
                             std::to_string(u.size()) + " entries for " +
                             std::to_string(caches.size()) + " samples");
        }
    };
    check(up.t, "t");
    check(up.q, "q");
    check(up.v, "v");

    PerLossGrads g{zero_grads(p.dims), zero_grads(p.dims), zero_grads(p.dims)};
    for (std::size_t i = 0; i < caches.size(); ++i) {
        if (!up.t.empty()) accumulate_head_backward(p, caches[i], Head::T, up.t[i], g.t);
        if (!up.q.empty()) accumulate_head_backward(p, caches[i], Head::Q, up.q[i], g.q);
        if (!up.v.empty()) accumulate_head_backward(p, caches[i], Head::V, up.v[i], g.v);
    }
    return g;
}

std::size_t scope_size(const ModelDims& d, GradScope scope) {
    std::size_t c = d.fused * 2 * d.hidden + d.fused + d.answers * d.fused + d.answers;
    if (scope == GradScope::Classifier) return c;
    return c + d.hidden * d.q_in + d.hidden + d.hidden * d.v_in + d.hidden;
}

namespace {

template <typename G, typename Fn>
void for_each_scoped(GradScope scope, G& g, Fn&& fn) {
    if (scope == GradScope::All) {
        fn(g.q_enc);
        fn(g.v_enc);
    }
    fn(g.fusion);
    fn(g.classifier);
}

} // namespace

Vector flatten_grads(const ModelGrads& g, const ModelDims& dims, GradScope scope) {
    Vector flat;
    flat.reserve(scope_size(dims, scope));
    for_each_scoped(scope, g, [&](const Linear& l) {
        flat.insert(flat.end(), l.w.data.begin(), l.w.data.end());
        flat.insert(flat.end(), l.b.begin(), l.b.end());
    });
    return flat;
}

void unflatten_grads(const Vector& flat, const ModelDims& dims, GradScope scope, ModelGrads& g) {
    if (flat.size() != scope_size(dims, scope)) {
        throw ShapeError("unflatten_grads: vector length (" + std::to_string(flat.size()) +
                         ") vs scope size (" + std::to_string(scope_size(dims, scope)) + ")");
    }
    std::size_t pos = 0;
    for_each_scoped(scope, g, [&](Linear& l) {
        for (double& w : l.w.data) w = flat[pos++];
        for (double& b : l.b) b = flat[pos++];
    });
}

std::string scope_name(GradScope scope) {
    return scope == GradScope::Classifier ? "classifier" : "all";
}

GradScope scope_from_name(const std::string& name) {
    if (name == "classifier") return GradScope::Classifier;
    if (name == "all") return GradScope::All;
    throw ArgumentError("unknown gradient scope '" + name + "' (expected classifier|all)");
}

namespace {

using nlohmann::json;

json tensor_json(const Linear& l) {
    return json{{"rows", l.w.rows}, {"cols", l.w.cols}, {"w", l.w.data}, {"b", l.b}};
}

Linear tensor_from_json(const json& j) {
    Linear l;
    l.w.rows = j.at("rows").get<std::size_t>();
    l.w.cols = j.at("cols").get<std::size_t>();
    l.w.data = j.at("w").get<std::vector<double>>();
    l.b = j.at("b").get<std::vector<double>>();
    if (l.w.data.size() != l.w.rows * l.w.cols || l.b.size() != l.w.rows) {
        throw ParseError("checkpoint tensor sizes inconsistent with declared shape");
    }
    return l;
}

constexpr const char* kCheckpointSchema = "cedo.checkpoint.v1";

} // namespace

void save_checkpoint(const ModelParams& p, const std::string& path) {
    json j;
    j["schema"] = kCheckpointSchema;
    j["dims"] = {{"q_in", p.dims.q_in},
                 {"v_in", p.dims.v_in},
                 {"hidden", p.dims.hidden},
                 {"fused", p.dims.fused},
                 {"answers", p.dims.answers}};
    j["tensors"] = {{"q_enc", tensor_json(p.q_enc)},
                    {"v_enc", tensor_json(p.v_enc)},
                    {"fusion", tensor_json(p.fusion)},
                    {"classifier", tensor_json(p.classifier)}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("checkpoint " + path + ": " + e.what());
    }
    try {
        if (j.at("schema").get<std::string>() != kCheckpointSchema) {
            throw ParseError("checkpoint " + path + ": unsupported schema '" +
                             j.at("schema").get<std::string>() + "'");
        }
        ModelParams p;
        const json& d = j.at("dims");
        p.dims.q_in = d.at("q_in").get<std::size_t>();
        p.dims.v_in = d.at("v_in").get<std::size_t>();
        p.dims.hidden = d.at("hidden").get<std::size_t>();
        p.dims.fused = d.at("fused").get<std::size_t>();
        p.dims.answers = d.at("answers").get<std::size_t>();
        const json& t = j.at("tensors");
        p.q_enc = tensor_from_json(t.at("q_enc"));
        p.v_enc = tensor_from_json(t.at("v_enc"));
        p.fusion = tensor_from_json(t.at("fusion"));
        p.classifier = tensor_from_json(t.at("classifier"));
        if (p.q_enc.w.rows != p.dims.hidden || p.q_enc.w.cols != p.dims.q_in ||
            p.v_enc.w.rows != p.dims.hidden || p.v_enc.w.cols != p.dims.v_in ||
            p.fusion.w.rows != p.dims.fused || p.fusion.w.cols != 2 * p.dims.hidden ||
            p.classifier.w.rows != p.dims.answers || p.classifier.w.cols != p.dims.fused) {
            throw ParseError("checkpoint " + path + ": tensor shapes disagree with dims header");
        }
        return p;
    } catch (const json::exception& e) {
        throw ParseError("checkpoint " + path + ": " + e.what());
    }
}

} // namespace cedo
