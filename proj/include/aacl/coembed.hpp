#pragma once

// Observation co-embedding: per-branch embeddings of the visual, direction
// and concept features, the fused single-LN baseline embedding, and the
// per-panorama observation contrast loss.

#include <aacl/checkpoint.hpp>
#include <aacl/numeric.hpp>
#include <aacl/types.hpp>

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace aacl {

enum class NavSlot : int { View = 0, Candidate = 1, Stop = 2 };
inline constexpr int kNavSlots = 3;

enum class EmbedType : int { Visual = 0, History = 1 };
inline constexpr int kEmbedTypes = 2;

struct DirectionFeature {
    Vector e;  // (sin h, cos h, sin e, cos e)
};

inline DirectionFeature direction_feature(double heading, double elevation) {
    DirectionFeature f{Vector(4)};
    f.e << std::sin(heading), std::cos(heading), std::sin(elevation), std::cos(elevation);
    return f;
}

inline DirectionFeature direction_feature(const Direction& d) { return direction_feature(d.heading(), d.elevation()); }

struct BranchParams {
    Matrix W;  // d_model x input dim
    LayerNormParams ln_inner;
    LayerNormParams ln_outer;

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".W", W);
        ln_inner.visit(prefix + ".ln_inner", f);
        ln_outer.visit(prefix + ".ln_outer", f);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const {
        f(prefix + ".W", W);
        ln_inner.visit(prefix + ".ln_inner", f);
        ln_outer.visit(prefix + ".ln_outer", f);
    }
};

struct CoEmbedParams {
    BranchParams visual;     // W~v
    BranchParams direction;  // W~a
    BranchParams concept_branch;    // W~u
    LayerNormParams fused;   // outer LN of the fused baseline embedding
    Matrix navigable;        // d_model x kNavSlots, e^N
    Matrix type;             // d_model x kEmbedTypes, e^T
    double dropout_rate = 0.1;

    Eigen::Index d_model() const { return navigable.rows(); }

    static CoEmbedParams init(int provider_dim, int d_model, double dropout_rate, std::mt19937_64& rng) {
        if (provider_dim <= 0 || d_model <= 0) throw std::invalid_argument("CoEmbedParams: dims must be positive");
        auto branch = [&](int in) {
            return BranchParams{uniform_init(d_model, in, in, rng), LayerNormParams::identity(d_model),
                                LayerNormParams::identity(d_model)};
        };
        CoEmbedParams p;
        p.visual = branch(provider_dim);
        p.direction = branch(4);
        p.concept_branch = branch(provider_dim);
        p.fused = LayerNormParams::identity(d_model);
        p.navigable = uniform_init(d_model, kNavSlots, d_model, rng);
        p.type = uniform_init(d_model, kEmbedTypes, d_model, rng);
        p.dropout_rate = dropout_rate;
        return p;
    }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        visual.visit(prefix + "visual", f);
        direction.visit(prefix + "direction", f);
        concept_branch.visit(prefix + "concept", f);
        fused.visit(prefix + "fused", f);
        f(prefix + "navigable", navigable);
        f(prefix + "type", type);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const {
        visual.visit(prefix + "visual", f);
        direction.visit(prefix + "direction", f);
        concept_branch.visit(prefix + "concept", f);
        fused.visit(prefix + "fused", f);
        f(prefix + "navigable", navigable);
        f(prefix + "type", type);
    }
};

namespace detail {

inline void check_slot(const CoEmbedParams& p, NavSlot slot, EmbedType type) {
    const int s = static_cast<int>(slot);
    const int t = static_cast<int>(type);
    if (s < 0 || s >= p.navigable.cols())
        throw std::out_of_range("co-embedding: unknown navigable slot " + std::to_string(s));
    if (t < 0 || t >= p.type.cols()) throw std::out_of_range("co-embedding: unknown type index " + std::to_string(t));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// one branch: Dr(LN(LN(W x) + e^N + e^T))

struct BranchCache {
    Vector input;
    LayerNormCache inner;
    LayerNormCache outer;
    Vector mask;
};

inline Vector branch_forward(const Vector& x, const BranchParams& b, const Vector& nav, const Vector& type,
                             double dropout_rate, std::mt19937_64* dropout_rng, BranchCache* cache) {
    BranchCache local;
    BranchCache& c = cache ? *cache : local;
    c.input = x;
    const Vector projected = linear_forward(x, b.W);
    const Vector y = layer_norm(projected, b.ln_inner, kLayerNormEps, &c.inner) + nav + type;
    const Vector out = layer_norm(y, b.ln_outer, kLayerNormEps, &c.outer);
    c.mask = dropout_mask(out.size(), dropout_rate, dropout_rng);
    return apply_mask(out, c.mask);
}

/// Accumulates branch, e^N and e^T gradients; returns d input.
inline Vector branch_backward(const BranchCache& c, const BranchParams& b, const Vector& dy, BranchParams& grad,
                              Eigen::Ref<Vector> dnav, Eigen::Ref<Vector> dtype) {
    const Vector dout = apply_mask(dy, c.mask);
    const Vector dsum = layer_norm_backward(c.outer, b.ln_outer, dout, grad.ln_outer);
    dnav += dsum;
    dtype += dsum;
    const Vector dproj = layer_norm_backward(c.inner, b.ln_inner, dsum, grad.ln_inner);
    return linear_backward(c.input, b.W, dproj, grad.W);
}

// ---------------------------------------------------------------------------
// separate embeddings

struct ObservationEmbedding {
    Vector o_v;
    Vector o_a;
    Vector o_u;       // empty when no concept branch is used
    Vector o_V;       // o_v + o_a
    Vector o_prime;   // o_V + o_u (or o_V without concepts)
};

struct SeparateCache {
    BranchCache visual;
    BranchCache direction;
    BranchCache concept_branch;
    bool has_concept = false;
    NavSlot slot = NavSlot::View;
    EmbedType type = EmbedType::Visual;
};

/// `concept` may be null, in which case only the visual and direction
/// branches are embedded and o' = o^V.  A null `dropout_rng` is eval mode.
inline ObservationEmbedding embed_separate(const Vector& visual, const Vector& direction, const Vector* concept_feature,
                                           NavSlot slot, EmbedType type, const CoEmbedParams& p,
                                           std::mt19937_64* dropout_rng = nullptr, SeparateCache* cache = nullptr) {
    detail::check_slot(p, slot, type);
    SeparateCache local;
    SeparateCache& c = cache ? *cache : local;
    c.slot = slot;
    c.type = type;
    c.has_concept = concept_feature != nullptr;
    const Vector nav = p.navigable.col(static_cast<int>(slot));
    const Vector typ = p.type.col(static_cast<int>(type));
    ObservationEmbedding e;
    e.o_v = branch_forward(visual, p.visual, nav, typ, p.dropout_rate, dropout_rng, &c.visual);
    e.o_a = branch_forward(direction, p.direction, nav, typ, p.dropout_rate, dropout_rng, &c.direction);
    e.o_V = e.o_v + e.o_a;
    if (concept_feature != nullptr) {
        e.o_u = branch_forward(*concept_feature, p.concept_branch, nav, typ, p.dropout_rate, dropout_rng, &c.concept_branch);
        e.o_prime = e.o_V + e.o_u;
    } else {
        e.o_prime = e.o_V;
    }
    return e;
}

inline ObservationEmbedding embed_separate(const Vector& visual, const DirectionFeature& direction,
                                           const Vector& concept_feature, NavSlot slot, const CoEmbedParams& p,
                                           std::mt19937_64* dropout_rng = nullptr) {
    return embed_separate(visual, direction.e, &concept_feature, slot, EmbedType::Visual, p, dropout_rng, nullptr);
}

/// Gradients flowing into o^V, o^u and o'.  Empty vectors mean zero.
struct EmbeddingGrad {
    Vector d_V;
    Vector d_u;
    Vector d_prime;
};

/// Returns d concept input (zero-length when there is no concept branch).
inline Vector embed_separate_backward(const SeparateCache& c, const CoEmbedParams& p, const EmbeddingGrad& g,
                                      CoEmbedParams& grad) {
    const auto d = p.d_model();
    Vector dV = Vector::Zero(d);
    Vector du = Vector::Zero(d);
    if (g.d_V.size()) dV += g.d_V;
    if (g.d_u.size()) du += g.d_u;
    if (g.d_prime.size()) {
        dV += g.d_prime;
        du += g.d_prime;
    }
    auto dnav = grad.navigable.col(static_cast<int>(c.slot));
    auto dtype = grad.type.col(static_cast<int>(c.type));
    Vector nav_acc = Vector::Zero(d);
    Vector type_acc = Vector::Zero(d);
    branch_backward(c.visual, p.visual, dV, grad.visual, nav_acc, type_acc);
    branch_backward(c.direction, p.direction, dV, grad.direction, nav_acc, type_acc);
    Vector dconcept;
    if (c.has_concept) dconcept = branch_backward(c.concept_branch, p.concept_branch, du, grad.concept_branch, nav_acc, type_acc);
    dnav += nav_acc;
    dtype += type_acc;
    return dconcept;
}

// ---------------------------------------------------------------------------
// fused baseline embedding: Dr(LN(LN(Wv v) + LN(Wa e_A) + e^N + e^T))

struct BaselineCache {
    Vector visual;
    Vector direction;
    LayerNormCache ln_v;
    LayerNormCache ln_a;
    LayerNormCache fused;
    Vector mask;
    NavSlot slot = NavSlot::View;
    EmbedType type = EmbedType::Visual;
};

inline Vector baseline_embed(const Vector& visual, const Vector& direction, NavSlot slot, EmbedType type,
                             const CoEmbedParams& p, std::mt19937_64* dropout_rng = nullptr,
                             BaselineCache* cache = nullptr) {
    detail::check_slot(p, slot, type);
    BaselineCache local;
    BaselineCache& c = cache ? *cache : local;
    c.visual = visual;
    c.direction = direction;
    c.slot = slot;
    c.type = type;
    const Vector hv = layer_norm(linear_forward(visual, p.visual.W), p.visual.ln_inner, kLayerNormEps, &c.ln_v);
    const Vector ha = layer_norm(linear_forward(direction, p.direction.W), p.direction.ln_inner, kLayerNormEps, &c.ln_a);
    const Vector sum = hv + ha + p.navigable.col(static_cast<int>(slot)) + p.type.col(static_cast<int>(type));
    const Vector out = layer_norm(sum, p.fused, kLayerNormEps, &c.fused);
    c.mask = dropout_mask(out.size(), p.dropout_rate, dropout_rng);
    return apply_mask(out, c.mask);
}

inline Vector baseline_embed(const Vector& visual, const DirectionFeature& direction, NavSlot slot,
                             const CoEmbedParams& p, std::mt19937_64* dropout_rng = nullptr) {
    return baseline_embed(visual, direction.e, slot, EmbedType::Visual, p, dropout_rng, nullptr);
}

inline void baseline_embed_backward(const BaselineCache& c, const CoEmbedParams& p, const Vector& dy,
                                    CoEmbedParams& grad) {
    const Vector dsum = layer_norm_backward(c.fused, p.fused, apply_mask(dy, c.mask), grad.fused);
    grad.navigable.col(static_cast<int>(c.slot)) += dsum;
    grad.type.col(static_cast<int>(c.type)) += dsum;
    const Vector dv = layer_norm_backward(c.ln_v, p.visual.ln_inner, dsum, grad.visual.ln_inner);
    linear_backward(c.visual, p.visual.W, dv, grad.visual.W);
    const Vector da = layer_norm_backward(c.ln_a, p.direction.ln_inner, dsum, grad.direction.ln_inner);
    linear_backward(c.direction, p.direction.W, da, grad.direction.W);
}

// ---------------------------------------------------------------------------
// observation contrast loss

struct ContrastResult {
    double loss = 0.0;
    std::vector<Vector> d_V;  // dL/d o^V_n
    std::vector<Vector> d_u;  // dL/d o^u_n
};

/// L = -sum_n log( e^{s_nn} / sum_m e^{s_nm} ),  s_nm = sim(o^V_n, o^u_m) / tau.
/// Negatives are the other views of the same panorama only.
inline ContrastResult observation_contrast_loss(const std::vector<Vector>& visual, const std::vector<Vector>& concept_feature,
                                                double tau, bool with_grad = true) {
    if (!(tau > 0)) throw std::invalid_argument("observation_contrast_loss: tau must be positive");
    if (visual.empty() || visual.size() != concept_feature.size())
        throw std::invalid_argument("observation_contrast_loss: need matching, non-empty view lists");
    const std::size_t n = visual.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (!(visual[i].norm() > 0))
            throw std::invalid_argument("observation_contrast_loss: visual embedding " + std::to_string(i) +
                                        " has zero norm");
        if (!(concept_feature[i].norm() > 0))
            throw std::invalid_argument("observation_contrast_loss: concept embedding " + std::to_string(i) +
                                        " has zero norm");
    }
    ContrastResult r;
    if (with_grad) {
        r.d_V.assign(n, Vector::Zero(visual[0].size()));
        r.d_u.assign(n, Vector::Zero(concept_feature[0].size()));
    }
    Vector logits(static_cast<Eigen::Index>(n));
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t m = 0; m < n; ++m) logits[static_cast<Eigen::Index>(m)] = cosine_sim(visual[a], concept_feature[m]) / tau;
        const double mx = logits.maxCoeff();
        const double lse = mx + std::log((logits.array() - mx).exp().sum());
        r.loss += lse - logits[static_cast<Eigen::Index>(a)];
        if (!with_grad) continue;
        const Vector soft = (logits.array() - lse).exp();
        for (std::size_t m = 0; m < n; ++m) {
            const double g = (soft[static_cast<Eigen::Index>(m)] - (m == a ? 1.0 : 0.0)) / tau;
            cosine_sim_backward(visual[a], concept_feature[m], g, r.d_V[a], r.d_u[m]);
        }
    }
    return r;
}

inline ContrastResult observation_contrast_loss(const std::vector<ObservationEmbedding>& views, double tau) {
    std::vector<Vector> v, u;
    for (const auto& e : views) {
        v.push_back(e.o_V);
        u.push_back(e.o_u);
    }
    return observation_contrast_loss(v, u, tau);
}

}  // namespace aacl
