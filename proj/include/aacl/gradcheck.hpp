#pragma once

// Finite-difference checks of every hand-written backward pass, on tiny
// randomly initialised modules.  Used by `aacl grad-check` and the tests.

#include <aacl/adapter.hpp>
#include <aacl/agent.hpp>
#include <aacl/checkpoint.hpp>
#include <aacl/coembed.hpp>
#include <aacl/embedding.hpp>
#include <aacl/numeric.hpp>
#include <aacl/rng.hpp>
#include <aacl/world.hpp>

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace aacl {

struct GradCheckEntry {
    std::string name;
    GradCheckReport report;
    std::size_t parameters = 0;
};

struct GradCheckOptions {
    std::uint64_t seed = 0;
    double eps = 1e-5;
    double tol = 1e-4;
};

namespace detail {

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = g(rng);
    return v;
}

/// Perturbs every parameter so that LN gains, biases and embeddings are not
/// at their symmetric initial values.
template <typename Params>
void jitter(Params& p, std::mt19937_64& rng, double scale = 0.3) {
    Vector flat = flatten(p);
    flat += random_vector(flat.size(), rng, scale);
    unflatten(flat, p);
}

/// Checks d loss / d params for a loss written as `loss(params, grad*)`.
template <typename Params>
GradCheckEntry check_params(const std::string& name, const Params& params,
                            const std::function<double(const Params&, Params*)>& loss, const GradCheckOptions& o) {
    Params grad = zeros_like(params);
    loss(params, &grad);
    Params scratch = params;
    auto f = [&](const Vector& theta) {
        unflatten(theta, scratch);
        return loss(scratch, nullptr);
    };
    GradCheckEntry e{name, finite_diff_grad_check(f, flatten(params), flatten(grad), o.eps, o.tol), 0};
    e.parameters = static_cast<std::size_t>(param_count(params));
    return e;
}

/// Checks d loss / d x for a loss of a plain vector.
inline GradCheckEntry check_input(const std::string& name, const Vector& x,
                                  const std::function<double(const Vector&, Vector*)>& loss,
                                  const GradCheckOptions& o) {
    Vector g = Vector::Zero(x.size());
    loss(x, &g);
    GradCheckEntry e{name, finite_diff_grad_check([&](const Vector& v) { return loss(v, nullptr); }, x, g, o.eps, o.tol),
                     static_cast<std::size_t>(x.size())};
    return e;
}

/// Small hand-built world: a 2x2 grid on two levels, joined by one stair.
inline World tiny_world(std::uint64_t seed) {
    const std::vector<std::string> lexicon{"kitchen", "sofa", "stairs", "lamp", "sink", "table", "bed", "door"};
    return generate_world(seed, 8, 2, lexicon);
}

struct TinySetup {
    ModelConfig config;
    std::unique_ptr<SyntheticProvider> provider;
    std::unique_ptr<FeatureBank> bank;
    World world;
    Episode episode;
};

inline TinySetup tiny_setup(Mode mode, std::uint64_t seed) {
    TinySetup t;
    t.config.mode = mode;
    t.config.provider_dim = 8;
    t.config.d_model = 6;
    t.config.adapter_hidden = 5;
    t.config.scorer_hidden = 5;
    t.config.max_instruction_steps = 4;
    t.config.top_k = 3;
    t.config.dropout = 0.0;
    t.world = tiny_world(seed);
    SyntheticProviderConfig pc;
    pc.dim = t.config.provider_dim;
    pc.seed = seed;
    pc.noise_sigma = 0.3;
    pc.lexicon = {"kitchen", "sofa", "stairs", "lamp", "sink", "table", "bed", "door"};
    t.provider = make_synthetic(pc);
    // three-node path gives a 2-step instruction plus stop
    for (std::uint64_t s = 0;; ++s) {
        t.episode = generate_episode(t.world, stream_seed(seed, "gradcheck.episode", s), 3);
        if (t.episode.gt_path.size() == 3) break;
    }
    t.bank = std::make_unique<FeatureBank>(*t.provider, ConceptRepository(pc.lexicon, *t.provider), t.config.top_k,
                                           t.config.tau);
    t.bank->add_world(t.world);
    return t;
}

}  // namespace detail

/// Runs the whole suite.  Every entry should report max_rel_error < tol.
inline std::vector<GradCheckEntry> run_gradient_suite(const GradCheckOptions& o = {}) {
    using detail::check_input;
    using detail::check_params;
    std::vector<GradCheckEntry> out;
    auto rng = make_stream(o.seed, "gradcheck");
    const int D = 8, H = 5, dm = 6;

    // adapter: A(f)
    {
        auto p = AdapterParams::init(D, H, 0.8, rng);
        const Vector f = detail::random_vector(2 * D, rng);
        const Vector w = detail::random_vector(D, rng);
        out.push_back(check_params<AdapterParams>(
            "adapter", p,
            [&](const AdapterParams& q, AdapterParams* g) {
                AdapterCache c;
                const Vector y = adapter_forward(f, q, &c);
                if (g) adapter_backward(c, q, w, *g);
                return w.dot(y);
            },
            o));
        out.push_back(check_input(
            "adapter.input", f,
            [&](const Vector& x, Vector* g) {
                AdapterParams sink = zeros_like(p);
                AdapterCache c;
                const Vector y = adapter_forward(x, p, &c);
                if (g) *g = adapter_backward(c, p, w, sink);
                return w.dot(y);
            },
            o));
    }

    // refine + re-rank: sum_i c_i p~_i
    {
        auto p = AdapterParams::init(D, H, 0.8, rng);
        const Vector fb = detail::random_vector(D, rng);
        const Vector cls = detail::random_vector(D, rng);
        Matrix text(D, 3);
        for (int i = 0; i < 3; ++i) text.col(i) = detail::random_vector(D, rng);
        const Vector coef = detail::random_vector(3, rng);
        auto run = [&](const AdapterParams& q, const Vector& cls_in, AdapterParams* g, Vector* dcls) {
            RefineCache c;
            const Vector r = refine_image_feature(fb, cls_in, q, &c);
            const Vector pt = rerank_topk(r, text);
            if (g || dcls) {
                AdapterParams sink = zeros_like(q);
                const Vector dr = rerank_backward(r, text, pt, coef);
                const auto [dfb, dc] = refine_backward(c, q, dr, g ? *g : sink);
                if (dcls) *dcls = dc;
            }
            return coef.dot(pt);
        };
        out.push_back(check_params<AdapterParams>(
            "adapter.refine_rerank", p, [&](const AdapterParams& q, AdapterParams* g) { return run(q, cls, g, nullptr); },
            o));
        out.push_back(check_input(
            "adapter.refine_rerank.cls", cls, [&](const Vector& x, Vector* g) { return run(p, x, nullptr, g); }, o));
    }

    // co-embedding: separate branches and the fused baseline
    {
        auto p = CoEmbedParams::init(D, dm, 0.0, rng);
        detail::jitter(p, rng);
        const Vector vis = detail::random_vector(D, rng);
        const Vector dir = direction_feature(0.7, 0.3).e;
        const Vector con = detail::random_vector(D, rng);
        const Vector a = detail::random_vector(dm, rng), b = detail::random_vector(dm, rng),
                     c = detail::random_vector(dm, rng);
        out.push_back(check_params<CoEmbedParams>(
            "coembed.separate", p,
            [&](const CoEmbedParams& q, CoEmbedParams* g) {
                SeparateCache cache;
                const auto e = embed_separate(vis, dir, &con, NavSlot::Candidate, EmbedType::History, q, nullptr, &cache);
                if (g) embed_separate_backward(cache, q, {a, b, c}, *g);
                return a.dot(e.o_V) + b.dot(e.o_u) + c.dot(e.o_prime);
            },
            o));
        out.push_back(check_input(
            "coembed.separate.concept", con,
            [&](const Vector& x, Vector* g) {
                SeparateCache cache;
                CoEmbedParams sink = zeros_like(p);
                const auto e = embed_separate(vis, dir, &x, NavSlot::View, EmbedType::Visual, p, nullptr, &cache);
                if (g) *g = embed_separate_backward(cache, p, {a, b, c}, sink);
                return a.dot(e.o_V) + b.dot(e.o_u) + c.dot(e.o_prime);
            },
            o));
        out.push_back(check_params<CoEmbedParams>(
            "coembed.baseline", p,
            [&](const CoEmbedParams& q, CoEmbedParams* g) {
                BaselineCache cache;
                const Vector y = baseline_embed(vis, dir, NavSlot::Stop, EmbedType::Visual, q, nullptr, &cache);
                if (g) baseline_embed_backward(cache, q, c, *g);
                return c.dot(y);
            },
            o));
    }

    // observation contrast over 4 views, w.r.t. all o^V and o^u
    {
        const int n = 4;
        const Vector x = detail::random_vector(2 * n * dm, rng);
        out.push_back(check_input(
            "contrast", x,
            [&](const Vector& v, Vector* g) {
                std::vector<Vector> vis, con;
                for (int i = 0; i < n; ++i) {
                    vis.push_back(v.segment(i * dm, dm));
                    con.push_back(v.segment((n + i) * dm, dm));
                }
                const auto r = observation_contrast_loss(vis, con, 0.5, g != nullptr);
                if (g)
                    for (int i = 0; i < n; ++i) {
                        g->segment(i * dm, dm) = r.d_V[static_cast<std::size_t>(i)];
                        g->segment((n + i) * dm, dm) = r.d_u[static_cast<std::size_t>(i)];
                    }
                return r.loss;
            },
            o));
    }

    // scorer, IL and RL on a synthetic instruction
    {
        ModelConfig mc;
        mc.provider_dim = D;
        mc.d_model = dm;
        mc.adapter_hidden = H;
        mc.scorer_hidden = 5;
        mc.max_instruction_steps = 4;
        auto mp = ModelParams::init(mc, rng);
        detail::jitter(mp.policy, rng, 0.2);
        InstructionEncoding enc;
        enc.tokens = Matrix(D, 3);
        for (int i = 0; i < 3; ++i) enc.tokens.col(i) = detail::random_vector(D, rng);
        enc.mean = enc.tokens.rowwise().mean();
        enc.cls = linear_forward(enc.mean, mp.instruction.cls);
        const Vector history = detail::random_vector(dm, rng);
        std::vector<Vector> cands;
        for (int j = 0; j < 4; ++j) cands.push_back(detail::random_vector(dm, rng));
        const Vector wl = detail::random_vector(4, rng);
        const double wv = 0.7;
        out.push_back(check_params<PolicyParams>(
            "policy.scorer", mp.policy,
            [&](const PolicyParams& q, PolicyParams* g) {
                ScoreCache c;
                const auto d = score_candidates(enc, cands, history, 1, q, &c);
                if (g) score_candidates_backward(c, enc, q, wl, wv, *g);
                return wl.dot(d.logits) + wv * d.value;
            },
            o));
        // inputs: cls, history and candidates in one vector
        Vector packed(dm * 6);
        packed << enc.cls, history, cands[0], cands[1], cands[2], cands[3];
        out.push_back(check_input(
            "policy.scorer.inputs", packed,
            [&](const Vector& x, Vector* g) {
                InstructionEncoding e = enc;
                e.cls = x.head(dm);
                std::vector<Vector> cs;
                for (int j = 0; j < 4; ++j) cs.push_back(x.segment((2 + j) * dm, dm));
                ScoreCache c;
                PolicyParams sink = zeros_like(mp.policy);
                const auto d = score_candidates(e, cs, x.segment(dm, dm), 2, mp.policy, &c);
                if (g) {
                    const auto sg = score_candidates_backward(c, e, mp.policy, wl, wv, sink);
                    g->head(dm) = sg.d_cls;
                    g->segment(dm, dm) = sg.d_history;
                    for (int j = 0; j < 4; ++j) g->segment((2 + j) * dm, dm) = sg.d_candidates[static_cast<std::size_t>(j)];
                }
                return wl.dot(d.logits) + wv * d.value;
            },
            o));
        out.push_back(check_params<PolicyParams>(
            "loss.il", mp.policy,
            [&](const PolicyParams& q, PolicyParams* g) {
                ScoreCache c;
                const auto d = score_candidates(enc, cands, history, 0, q, &c);
                if (g) score_candidates_backward(c, enc, q, nll_logit_grad(d, 2), 0.0, *g);
                return il_loss(d, 2);
            },
            o));
        const std::vector<double> frozen{0.4, -1.1};
        out.push_back(check_params<PolicyParams>(
            "loss.rl", mp.policy,
            [&](const PolicyParams& q, PolicyParams* g) {
                ScoreCache c0, c1;
                const auto d0 = score_candidates(enc, cands, history, 0, q, &c0);
                const auto d1 = score_candidates(enc, {cands[1], cands[3]}, cands[0], 1, q, &c1);
                const auto r = rl_loss({{&d0, 1, 0.5}, {&d1, 0, 2.0}}, 0.9, &frozen);
                if (g) {
                    score_candidates_backward(c0, enc, q, r.d_logits[0], r.d_values[0], *g);
                    score_candidates_backward(c1, enc, q, r.d_logits[1], r.d_values[1], *g);
                }
                return r.total;
            },
            o));
    }

    // whole episode objective, all parameters, every mode
    for (auto mode : {Mode::Full, Mode::WithoutRefine, Mode::Separate, Mode::Baseline}) {
        auto t = detail::tiny_setup(mode, o.seed);
        auto init = make_stream(o.seed, "gradcheck.init");
        auto params = ModelParams::init(t.config, init);
        detail::jitter(params, init, 0.2);
        params.adapter.alpha = 0.8;
        EpisodeObjective obj;
        obj.max_steps = 3;
        // fixed sampled actions: first candidate, then stop
        std::vector<std::size_t> actions{0};
        {
            auto pano = panorama_at(t.world, t.episode.start, t.episode.start_heading);
            (void)pano;
            auto st = step(t.world, initial_state(t.episode), 0);
            actions.push_back(panorama_at(t.world, st.node, st.prev_selected).stop_index());
        }
        const auto base = episode_loss(params, t.config, *t.bank, t.world, t.episode, obj, nullptr, nullptr, nullptr,
                                       &actions);
        const auto frozen = base.advantages;
        out.push_back(check_params<ModelParams>(
            "episode.total[" + mode_name(mode) + "]", params,
            [&](const ModelParams& q, ModelParams* g) {
                return episode_loss(q, t.config, *t.bank, t.world, t.episode, obj, nullptr, nullptr, g, &actions,
                                    &frozen)
                    .parts.total;
            },
            o));
    }
    return out;
}

}  // namespace aacl
