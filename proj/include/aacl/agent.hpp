#pragma once

// Navigation agent: instruction encoding, per-view concept pipeline,
// cross-attention candidate scorer, IL / RL / contrast objectives and the
// hand-written backward pass through a whole episode.

#include <aacl/adapter.hpp>
#include <aacl/checkpoint.hpp>
#include <aacl/coembed.hpp>
#include <aacl/concept.hpp>
#include <aacl/embedding.hpp>
#include <aacl/numeric.hpp>
#include <aacl/world.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace aacl {

// ---------------------------------------------------------------------------
// configuration

enum class Mode { Full, WithoutRefine, WithoutContrast, Separate, Baseline };

inline std::string mode_name(Mode m) {
    switch (m) {
        case Mode::Full: return "full";
        case Mode::WithoutRefine: return "w/o-refine";
        case Mode::WithoutContrast: return "w/o-contrast";
        case Mode::Separate: return "separate";
        case Mode::Baseline: return "baseline";
    }
    throw std::logic_error("mode_name");
}

inline Mode parse_mode(const std::string& s) {
    if (s == "full") return Mode::Full;
    if (s == "w/o-refine" || s == "wo-refine" || s == "w/o refine") return Mode::WithoutRefine;
    if (s == "w/o-contrast" || s == "wo-contrast" || s == "w/o contrast") return Mode::WithoutContrast;
    if (s == "separate") return Mode::Separate;
    if (s == "baseline") return Mode::Baseline;
    throw std::invalid_argument("unknown mode \"" + s + "\"; valid modes: full, w/o-refine, w/o-contrast, separate, baseline");
}

inline bool uses_concepts(Mode m) { return m == Mode::Full || m == Mode::WithoutRefine || m == Mode::WithoutContrast; }
inline bool uses_refine(Mode m) { return m == Mode::Full || m == Mode::WithoutContrast; }
inline bool uses_contrast(Mode m) { return m == Mode::Full || m == Mode::WithoutRefine; }

struct ModelConfig {
    Mode mode = Mode::Full;
    int provider_dim = 32;
    int d_model = 64;
    int adapter_hidden = 256;
    int scorer_hidden = 64;
    int max_instruction_steps = 16;
    int top_k = 5;
    double tau = 0.5;                 // concept mapping and observation contrast
    double alpha = 0.8;               // adapter residual ratio
    double rerank_temperature = 1.0;  // re-ranking softmax has no temperature by default
    bool renormalize_topk = false;
    bool absolute_heading = false;    // direction feature uses heading relative to the previous selection
    double dropout = 0.1;
    double stop_norm_floor = 1e-8;    // views whose o^V or o^u fall below this are left out of the contrast

    nlohmann::json to_json() const {
        return {{"mode", mode_name(mode)},
                {"provider_dim", provider_dim},
                {"d_model", d_model},
                {"adapter_hidden", adapter_hidden},
                {"scorer_hidden", scorer_hidden},
                {"max_instruction_steps", max_instruction_steps},
                {"top_k", top_k},
                {"tau", tau},
                {"alpha", alpha},
                {"rerank_temperature", rerank_temperature},
                {"renormalize_topk", renormalize_topk},
                {"absolute_heading", absolute_heading},
                {"dropout", dropout}};
    }

    static ModelConfig from_json(const nlohmann::json& j, ModelConfig c) {
        if (j.contains("mode")) c.mode = parse_mode(j["mode"].get<std::string>());
        c.provider_dim = j.value("provider_dim", c.provider_dim);
        c.d_model = j.value("d_model", c.d_model);
        c.adapter_hidden = j.value("adapter_hidden", c.adapter_hidden);
        c.scorer_hidden = j.value("scorer_hidden", c.scorer_hidden);
        c.max_instruction_steps = j.value("max_instruction_steps", c.max_instruction_steps);
        c.top_k = j.value("top_k", c.top_k);
        c.tau = j.value("tau", c.tau);
        c.alpha = j.value("alpha", c.alpha);
        c.rerank_temperature = j.value("rerank_temperature", c.rerank_temperature);
        c.renormalize_topk = j.value("renormalize_topk", c.renormalize_topk);
        c.absolute_heading = j.value("absolute_heading", c.absolute_heading);
        c.dropout = j.value("dropout", c.dropout);
        return c;
    }
    static ModelConfig from_json(const nlohmann::json& j) { return from_json(j, ModelConfig{}); }
};

// ---------------------------------------------------------------------------
// parameters

struct InstructionParams {
    Matrix cls;           // d_model x provider_dim
    Matrix cls_provider;  // provider_dim x provider_dim, feeds the adapter

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + "cls", cls);
        f(prefix + "cls_provider", cls_provider);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const {
        f(prefix + "cls", cls);
        f(prefix + "cls_provider", cls_provider);
    }
};

struct PolicyParams {
    Matrix query;      // d_model x 2 d_model, over [cls ; h']
    Matrix key;        // d_model x provider_dim
    Matrix value;      // d_model x provider_dim
    Matrix position;   // d_model x max_instruction_steps, added to keys
    Matrix step;       // d_model x max_instruction_steps, added to the query at each step
    Matrix hidden;     // scorer_hidden x 3 d_model, over [context ; o'_j ; context * o'_j]
    Vector hidden_bias;
    Vector out;        // scorer_hidden
    Vector critic;     // 2 d_model, over [context ; h']
    Vector critic_bias;  // length 1

    template <typename Self, typename F>
    static void visit_impl(Self& s, const std::string& prefix, F&& f) {
        f(prefix + "query", s.query);
        f(prefix + "key", s.key);
        f(prefix + "value", s.value);
        f(prefix + "position", s.position);
        f(prefix + "step", s.step);
        f(prefix + "hidden", s.hidden);
        f(prefix + "hidden_bias", s.hidden_bias);
        f(prefix + "out", s.out);
        f(prefix + "critic", s.critic);
        f(prefix + "critic_bias", s.critic_bias);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) { visit_impl(*this, prefix, f); }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const { visit_impl(*this, prefix, f); }
};

struct ModelParams {
    AdapterParams adapter;
    CoEmbedParams coembed;
    InstructionParams instruction;
    PolicyParams policy;

    static ModelParams init(const ModelConfig& c, std::mt19937_64& rng) {
        ModelParams p;
        p.adapter = AdapterParams::init(c.provider_dim, c.adapter_hidden, c.alpha, rng);
        p.coembed = CoEmbedParams::init(c.provider_dim, c.d_model, c.dropout, rng);
        p.instruction.cls = uniform_init(c.d_model, c.provider_dim, c.provider_dim, rng);
        p.instruction.cls_provider = uniform_init(c.provider_dim, c.provider_dim, c.provider_dim, rng);
        const int dm = c.d_model;
        p.policy.query = uniform_init(dm, 2 * dm, 2 * dm, rng);
        p.policy.key = uniform_init(dm, c.provider_dim, c.provider_dim, rng);
        p.policy.value = uniform_init(dm, c.provider_dim, c.provider_dim, rng);
        // Step-query and position-key tables start identical, so the first
        // attention pass already favours the instruction step whose index
        // matches the step count.
        std::normal_distribution<double> unit(0.0, 1.0);
        p.policy.position = Matrix(dm, c.max_instruction_steps);
        for (Eigen::Index i = 0; i < p.policy.position.size(); ++i) p.policy.position.data()[i] = unit(rng);
        p.policy.step = p.policy.position;
        p.policy.hidden = uniform_init(c.scorer_hidden, 3 * dm, 3 * dm, rng);
        p.policy.hidden_bias = Vector::Zero(c.scorer_hidden);
        p.policy.out = uniform_init(c.scorer_hidden, 1, c.scorer_hidden, rng).col(0);
        p.policy.critic = Vector::Zero(2 * dm);
        p.policy.critic_bias = Vector::Zero(1);
        return p;
    }

    template <typename Self, typename F>
    static void visit_impl(Self& s, const std::string& prefix, F&& f) {
        s.adapter.visit(prefix + "adapter.", f);
        s.coembed.visit(prefix + "coembed.", f);
        s.instruction.visit(prefix + "instruction.", f);
        s.policy.visit(prefix + "policy.", f);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) { visit_impl(*this, prefix, f); }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const { visit_impl(*this, prefix, f); }
};

// ---------------------------------------------------------------------------
// frozen per-view features

struct BankView {
    Vector image;                     // f_B
    std::vector<ScoredConcept> topk;  // object concept mapping
    Vector p;                         // top-k probabilities (unnormalised slice)
    Matrix text;                      // provider_dim x k, prompt text features of the top-k
};

/// Caches every frozen quantity the model reads: image features, object
/// concept mappings and "<action> <label>" phrase features.  Read-only after
/// the worlds are added, so it can be shared across rollout threads.
class FeatureBank {
public:
    FeatureBank(const EmbeddingProvider& provider, ConceptRepository repo, int k, double tau)
        : provider_(&provider), repo_(std::move(repo)), k_(k), tau_(tau) {
        if (k < 1 || static_cast<std::size_t>(k) > repo_.size())
            throw std::invalid_argument("FeatureBank: k=" + std::to_string(k) + " outside [1, " +
                                        std::to_string(repo_.size()) + "]");
        for (auto a : kAllActions) {
            if (a == ActionConcept::Stop) continue;
            auto& table = phrases_[a];
            for (const auto& c : repo_.concepts()) table.push_back(provider.text_embed(concept_phrase(a, c.label)));
        }
        stop_ = provider.text_embed(action_phrase(ActionConcept::Stop));
    }

    void add_world(const World& w) {
        for (const auto& pano : w.views)
            for (const auto& v : pano) add_view({v.image_id, v.label, v.direction, v.navigable()});
    }

    const BankView& add_view(const ObservationView& view) {
        if (auto it = views_.find(view.image_id); it != views_.end()) return it->second;
        BankView b;
        b.image = provider_->image_embed(view);
        b.topk = map_object_concepts(b.image, repo_, tau_, k_);
        b.p = Vector(k_);
        b.text = Matrix(provider_->dim(), k_);
        for (int i = 0; i < k_; ++i) {
            b.p[i] = b.topk[static_cast<std::size_t>(i)].probability;
            b.text.col(i) = repo_[b.topk[static_cast<std::size_t>(i)].index].text_feature;
        }
        return views_.emplace(view.image_id, std::move(b)).first->second;
    }

    const BankView& view(const std::string& image_id) const {
        auto it = views_.find(image_id);
        if (it == views_.end()) throw std::out_of_range("FeatureBank: view \"" + image_id + "\" was not prepared");
        return it->second;
    }

    Matrix phrases(ActionConcept a, const std::vector<ScoredConcept>& topk) const {
        const auto& table = phrases_.at(a);
        Matrix E(provider_->dim(), static_cast<Eigen::Index>(topk.size()));
        for (std::size_t i = 0; i < topk.size(); ++i) E.col(static_cast<Eigen::Index>(i)) = table[topk[i].index];
        return E;
    }

    const Vector& stop_feature() const { return stop_; }
    const EmbeddingProvider& provider() const { return *provider_; }
    const ConceptRepository& repository() const { return repo_; }
    int dim() const { return provider_->dim(); }

private:
    const EmbeddingProvider* provider_;
    ConceptRepository repo_;
    int k_;
    double tau_;
    std::unordered_map<std::string, BankView> views_;
    std::map<ActionConcept, std::vector<Vector>> phrases_;
    Vector stop_;
};

// ---------------------------------------------------------------------------
// instruction encoding

struct InstructionEncoding {
    std::vector<Vector> token_features;  // one per instruction step
    Matrix tokens;                       // provider_dim x steps, same data
    Vector mean;
    Vector cls;           // d_model
    Vector cls_provider;  // provider_dim
};

inline InstructionEncoding encode_instruction(const std::vector<std::string>& step_texts,
                                              const EmbeddingProvider& provider, const InstructionParams& p) {
    if (step_texts.empty()) throw std::invalid_argument("encode_instruction: empty instruction");
    InstructionEncoding enc;
    enc.tokens = Matrix(provider.dim(), static_cast<Eigen::Index>(step_texts.size()));
    for (std::size_t i = 0; i < step_texts.size(); ++i) {
        enc.token_features.push_back(provider.text_embed(step_texts[i]));
        enc.tokens.col(static_cast<Eigen::Index>(i)) = enc.token_features.back();
    }
    enc.mean = enc.tokens.rowwise().mean();
    enc.cls = linear_forward(enc.mean, p.cls);
    enc.cls_provider = linear_forward(enc.mean, p.cls_provider);
    return enc;
}

inline InstructionEncoding encode_instruction(const Episode& ep, const EmbeddingProvider& provider,
                                              const InstructionParams& p) {
    std::vector<std::string> texts;
    for (const auto& s : ep.instruction) texts.push_back(s.text());
    return encode_instruction(texts, provider, p);
}

inline void encode_instruction_backward(const InstructionEncoding& enc, const InstructionParams& p, const Vector& dcls,
                                        const Vector& dcls_provider, InstructionParams& grad) {
    if (dcls.size()) linear_backward(enc.mean, p.cls, dcls, grad.cls);
    if (dcls_provider.size()) linear_backward(enc.mean, p.cls_provider, dcls_provider, grad.cls_provider);
}

// ---------------------------------------------------------------------------
// candidate scorer

struct ActionDistribution {
    Vector logits;
    Vector probabilities;
    Vector attention;  // over instruction steps
    double value = 0.0;
};

struct ScoreCache {
    Vector query_input;  // [cls ; h']
    Vector query;
    Matrix keys;
    Matrix values;
    Vector attention;
    Vector context;
    std::size_t step_column = 0;
    std::vector<Vector> candidates;
    std::vector<Vector> joint;   // [context ; o'_j ; context * o'_j]
    std::vector<Vector> pre;     // hidden pre-activations
    std::vector<Vector> hidden;
    Vector critic_input;         // [context ; h']
};

/// Single-head attention over instruction steps (query from [cls ; h'] plus
/// a learned step-index term), then a two-layer scorer over
/// [context ; o'_j ; context * o'_j] for every candidate.
inline ActionDistribution score_candidates(const InstructionEncoding& enc, const std::vector<Vector>& candidates,
                                           const Vector& history, int step_index, const PolicyParams& p,
                                           ScoreCache* cache = nullptr) {
    if (candidates.empty()) throw std::invalid_argument("score_candidates: empty candidate list");
    const auto steps = enc.tokens.cols();
    if (steps > p.position.cols())
        throw std::invalid_argument("score_candidates: instruction has " + std::to_string(steps) +
                                    " steps, model supports " + std::to_string(p.position.cols()));
    ScoreCache local;
    ScoreCache& c = cache ? *cache : local;
    const double scale = 1.0 / std::sqrt(static_cast<double>(p.query.rows()));
    c.query_input = concat(enc.cls, history);
    c.step_column = static_cast<std::size_t>(std::clamp<Eigen::Index>(step_index, 0, p.step.cols() - 1));
    c.query = linear_forward(c.query_input, p.query) + p.step.col(static_cast<Eigen::Index>(c.step_column));
    c.keys = p.key * enc.tokens + p.position.leftCols(steps);
    c.values = p.value * enc.tokens;
    c.attention = softmax_temp(c.keys.transpose() * c.query * scale);
    c.context = c.values * c.attention;
    c.candidates = candidates;
    c.joint.clear();
    c.pre.clear();
    c.hidden.clear();
    ActionDistribution d;
    d.logits = Vector(static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        if (candidates[j].size() != c.context.size())
            throw std::invalid_argument("score_candidates: candidate " + std::to_string(j) + " has length " +
                                        std::to_string(candidates[j].size()) + ", expected " +
                                        std::to_string(c.context.size()));
        Vector joint(3 * c.context.size());
        joint << c.context, candidates[j], c.context.cwiseProduct(candidates[j]);
        c.joint.push_back(std::move(joint));
        c.pre.push_back(linear_forward(c.joint.back(), p.hidden, &p.hidden_bias));
        c.hidden.push_back(relu(c.pre.back()));
        d.logits[static_cast<Eigen::Index>(j)] = p.out.dot(c.hidden.back());
    }
    d.probabilities = softmax_temp(d.logits);
    d.attention = c.attention;
    c.critic_input = concat(c.context, history);
    d.value = p.critic.dot(c.critic_input) + p.critic_bias[0];
    return d;
}

struct ScoreGrad {
    Vector d_cls;
    Vector d_history;
    std::vector<Vector> d_candidates;
};

inline ScoreGrad score_candidates_backward(const ScoreCache& c, const InstructionEncoding& enc, const PolicyParams& p,
                                           const Vector& dlogits, double dvalue, PolicyParams& grad) {
    const auto dm = p.query.rows();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dm));
    ScoreGrad g;
    Vector dcontext = Vector::Zero(dm);
    Vector dhistory = Vector::Zero(dm);
    for (std::size_t j = 0; j < c.joint.size(); ++j) {
        const double dl = dlogits[static_cast<Eigen::Index>(j)];
        grad.out += dl * c.hidden[j];
        const Vector dpre = relu_backward(c.pre[j], dl * p.out);
        const Vector djoint = linear_backward(c.joint[j], p.hidden, dpre, grad.hidden, &grad.hidden_bias);
        const Vector dprod = djoint.tail(dm);
        dcontext += djoint.head(dm) + dprod.cwiseProduct(c.candidates[j]);
        g.d_candidates.push_back(djoint.segment(dm, dm) + dprod.cwiseProduct(c.context));
    }
    if (dvalue != 0.0) {
        grad.critic += dvalue * c.critic_input;
        grad.critic_bias[0] += dvalue;
        dcontext += dvalue * p.critic.head(dm);
        dhistory += dvalue * p.critic.tail(dm);
    }
    // context = values * attention
    grad.value.noalias() += (dcontext * c.attention.transpose()) * enc.tokens.transpose();
    const Vector dattention = c.values.transpose() * dcontext;
    const Vector dscores = softmax_temp_backward(c.attention, dattention) * scale;
    const Matrix dkeys = c.query * dscores.transpose();
    grad.key.noalias() += dkeys * enc.tokens.transpose();
    grad.position.leftCols(dkeys.cols()) += dkeys;
    const Vector dquery = c.keys * dscores;
    grad.step.col(static_cast<Eigen::Index>(c.step_column)) += dquery;
    const Vector dqin = linear_backward(c.query_input, p.query, dquery, grad.query);
    g.d_cls = dqin.head(dm);
    g.d_history = dhistory + dqin.tail(dm);
    return g;
}

// ---------------------------------------------------------------------------
// losses

/// -log p[teacher]
inline double il_loss(const ActionDistribution& d, std::size_t teacher) {
    if (teacher >= static_cast<std::size_t>(d.probabilities.size()))
        throw std::out_of_range("il_loss: teacher index " + std::to_string(teacher) + " out of range");
    // log-softmax from logits keeps precision when p[teacher] is tiny
    const double m = d.logits.maxCoeff();
    const double lse = m + std::log((d.logits.array() - m).exp().sum());
    return lse - d.logits[static_cast<Eigen::Index>(teacher)];
}

/// d(-log p[index]) / d logits, scaled by `weight`.
inline Vector nll_logit_grad(const ActionDistribution& d, std::size_t index, double weight = 1.0) {
    Vector g = d.probabilities;
    g[static_cast<Eigen::Index>(index)] -= 1.0;
    return weight * g;
}

struct RlStep {
    const ActionDistribution* dist = nullptr;
    std::size_t action = 0;
    double reward = 0.0;
};

struct RlLossResult {
    double policy = 0.0;     // sum_t -log p[a_t] * A_t
    double value = 0.0;      // value_weight * 0.5 * sum_t (R_t - V_t)^2
    double total = 0.0;      // policy + value
    std::vector<double> returns;
    std::vector<double> advantages;
    std::vector<Vector> d_logits;
    std::vector<double> d_values;
};

/// Advantage actor-critic loss.  Advantages are treated as constants in the
/// policy term; pass `frozen_advantages` to pin them (gradient checks).
inline RlLossResult rl_loss(const std::vector<RlStep>& steps, double gamma,
                            const std::vector<double>* frozen_advantages = nullptr, double value_weight = 1.0) {
    RlLossResult r;
    const std::size_t n = steps.size();
    r.returns.assign(n, 0.0);
    double running = 0.0;
    for (std::size_t t = n; t-- > 0;) {
        running = steps[t].reward + gamma * running;
        r.returns[t] = running;
    }
    for (std::size_t t = 0; t < n; ++t) {
        const auto& d = *steps[t].dist;
        const double adv = frozen_advantages ? frozen_advantages->at(t) : r.returns[t] - d.value;
        r.advantages.push_back(adv);
        r.policy += il_loss(d, steps[t].action) * adv;
        const double err = d.value - r.returns[t];
        r.value += value_weight * 0.5 * err * err;
        r.d_logits.push_back(nll_logit_grad(d, steps[t].action, adv));
        r.d_values.push_back(value_weight * err);
    }
    r.total = r.policy + r.value;
    return r;
}

struct LossBreakdown {
    double rl = 0.0;
    double il = 0.0;
    double contrast = 0.0;
    double total = 0.0;
    double lambda1 = 0.2;
    double lambda2 = 1.0;

    nlohmann::json to_json() const { return {{"rl", rl}, {"il", il}, {"contrast", contrast}, {"total", total}}; }
};

/// total = L_RL + lambda1 * L_IL + lambda2 * L_c
inline LossBreakdown total_loss(double rl, double il, double contrast, double lambda1, double lambda2) {
    if (!std::isfinite(rl)) throw std::runtime_error("total_loss: L_RL is not finite");
    if (!std::isfinite(il)) throw std::runtime_error("total_loss: L_IL is not finite");
    if (!std::isfinite(contrast)) throw std::runtime_error("total_loss: L_c is not finite");
    return {rl, il, contrast, rl + lambda1 * il + lambda2 * contrast, lambda1, lambda2};
}

// ---------------------------------------------------------------------------
// per-view pipeline

struct ViewRecord {
    int view = -1;  // panorama view index; -1 is the stop candidate
    NavSlot slot = NavSlot::View;
    EmbedType type = EmbedType::Visual;
    ActionConcept action = ActionConcept::Stop;
    const BankView* bank = nullptr;
    Vector visual;
    Vector direction;
    Matrix phrases;   // provider_dim x k
    Vector weights;   // probabilities used in the weighted concept sum
    Vector p_tilde;   // re-ranked probabilities (refine modes)
    Vector refined;
    RefineCache refine;
    Vector concept_feature;
    SeparateCache separate;
    BaselineCache baseline;
    ObservationEmbedding embedding;

    const Vector& output() const { return embedding.o_prime; }
};

inline ViewRecord embed_view(const ModelParams& params, const ModelConfig& cfg, const FeatureBank& bank,
                             const Panorama& pano, int view, NavSlot slot, EmbedType type,
                             const InstructionEncoding& enc, std::mt19937_64* dropout) {
    ViewRecord r;
    r.view = view;
    r.slot = slot;
    r.type = type;
    const int dim = bank.dim();
    if (view < 0) {
        r.action = ActionConcept::Stop;
        r.visual = Vector::Zero(dim);
        r.direction = Vector::Zero(4);
        r.concept_feature = bank.stop_feature();
    } else {
        const auto& ov = pano.views.at(static_cast<std::size_t>(view));
        r.bank = &bank.view(ov.image_id);
        r.visual = r.bank->image;
        const auto rel = relative_direction(ov.direction, pano.prev_selected);
        r.action = map_action_concept(rel);
        r.direction = direction_feature(cfg.absolute_heading ? ov.direction.heading() : rel.dheading,
                                        ov.direction.elevation())
                          .e;
        if (uses_concepts(cfg.mode)) {
            r.phrases = bank.phrases(r.action, r.bank->topk);
            if (uses_refine(cfg.mode)) {
                r.refined = refine_image_feature(r.visual, enc.cls_provider, params.adapter, &r.refine);
                r.p_tilde = rerank_topk(r.refined, r.bank->text, cfg.rerank_temperature);
                r.weights = r.p_tilde;
            } else {
                r.weights = cfg.renormalize_topk ? Vector(r.bank->p / r.bank->p.sum()) : r.bank->p;
            }
            r.concept_feature = r.phrases * r.weights;
        }
    }
    if (cfg.mode == Mode::Baseline) {
        r.embedding.o_prime =
            baseline_embed(r.visual, r.direction, slot, type, params.coembed, dropout, &r.baseline);
    } else {
        const Vector* concept_feature = uses_concepts(cfg.mode) ? &r.concept_feature : nullptr;
        r.embedding = embed_separate(r.visual, r.direction, concept_feature, slot, type, params.coembed, dropout, &r.separate);
    }
    return r;
}

/// Accumulates parameter gradients; adds d cls_provider into `dcls_provider`.
inline void embed_view_backward(const ViewRecord& r, const ModelParams& params, const ModelConfig& cfg,
                                const EmbeddingGrad& g, ModelParams& grad, Vector& dcls_provider) {
    if (cfg.mode == Mode::Baseline) {
        if (g.d_prime.size()) baseline_embed_backward(r.baseline, params.coembed, g.d_prime, grad.coembed);
        return;
    }
    const Vector dconcept = embed_separate_backward(r.separate, params.coembed, g, grad.coembed);
    if (r.view < 0 || !uses_refine(cfg.mode) || dconcept.size() == 0) return;
    const Vector dweights = r.phrases.transpose() * dconcept;
    const Vector drefined = rerank_backward(r.refined, r.bank->text, r.p_tilde, dweights, cfg.rerank_temperature);
    const auto [dimage, dcls] = refine_backward(r.refine, params.adapter, drefined, grad.adapter);
    (void)dimage;  // image features are frozen
    dcls_provider += dcls;
}

// ---------------------------------------------------------------------------
// episode rollout

enum class ActionPolicy { Teacher, Sample, Greedy, Fixed };

struct RolloutOptions {
    ActionPolicy policy = ActionPolicy::Greedy;
    std::vector<std::size_t> fixed_actions;
    std::mt19937_64* sampler = nullptr;
    std::mt19937_64* dropout = nullptr;  // null: eval mode
    int max_steps = 12;
    bool with_contrast = false;
    double success_radius = 0.0;
};

struct StepRecord {
    Panorama pano;
    std::vector<ViewRecord> views;  // panorama views, then the stop candidate
    std::vector<std::size_t> candidate_rows;  // row in `views` per candidate
    ScoreCache score;
    ActionDistribution dist;
    Vector history;         // h' used at this step
    std::size_t history_count = 0;
    std::size_t chosen = 0;
    std::size_t teacher = 0;
    bool has_teacher = false;
    double reward = 0.0;
    std::vector<std::size_t> contrast_rows;
    ContrastResult contrast;
    std::optional<ViewRecord> history_item;  // chosen view re-embedded as history
};

struct Rollout {
    InstructionEncoding encoding;
    std::vector<StepRecord> steps;
    NavState state;
};

inline double step_reward(const World& w, const Episode& ep, int from, int to, bool stopped, double radius) {
    const auto& dg = w.distance;
    if (stopped) return dg[static_cast<std::size_t>(from)][static_cast<std::size_t>(ep.goal)] <= radius ? 2.0 : -2.0;
    return dg[static_cast<std::size_t>(from)][static_cast<std::size_t>(ep.goal)] -
           dg[static_cast<std::size_t>(to)][static_cast<std::size_t>(ep.goal)];
}

inline Rollout rollout_episode(const ModelParams& params, const ModelConfig& cfg, const FeatureBank& bank,
                               const World& world, const Episode& ep, const RolloutOptions& opt) {
    Rollout out;
    out.encoding = encode_instruction(ep, bank.provider(), params.instruction);
    out.state = initial_state(ep);
    const auto dm = params.coembed.d_model();
    Vector history_sum = Vector::Zero(dm);
    std::size_t history_count = 0;

    while (!out.state.stopped && out.state.steps < opt.max_steps) {
        StepRecord s;
        s.pano = panorama_at(world, out.state.node, out.state.prev_selected);
        s.history = history_count ? Vector(history_sum / static_cast<double>(history_count)) : Vector::Zero(dm);
        s.history_count = history_count;
        for (int v = 0; v < static_cast<int>(s.pano.views.size()); ++v) {
            const auto slot = s.pano.views[static_cast<std::size_t>(v)].navigable ? NavSlot::Candidate : NavSlot::View;
            s.views.push_back(embed_view(params, cfg, bank, s.pano, v, slot, EmbedType::Visual, out.encoding, opt.dropout));
        }
        s.views.push_back(embed_view(params, cfg, bank, s.pano, -1, NavSlot::Stop, EmbedType::Visual, out.encoding,
                                     opt.dropout));
        for (int v : s.pano.candidate_views) s.candidate_rows.push_back(static_cast<std::size_t>(v));
        s.candidate_rows.push_back(s.views.size() - 1);

        if (opt.with_contrast && uses_concepts(cfg.mode)) {
            std::vector<Vector> vis, con;
            for (std::size_t i = 0; i < s.views.size(); ++i) {
                const auto& e = s.views[i].embedding;
                if (e.o_V.norm() < cfg.stop_norm_floor || e.o_u.norm() < cfg.stop_norm_floor) continue;
                s.contrast_rows.push_back(i);
                vis.push_back(e.o_V);
                con.push_back(e.o_u);
            }
            if (!vis.empty()) s.contrast = observation_contrast_loss(vis, con, cfg.tau);
        }

        std::vector<Vector> cand;
        for (auto row : s.candidate_rows) cand.push_back(s.views[row].output());
        s.dist = score_candidates(out.encoding, cand, s.history, out.state.steps, params.policy, &s.score);

        const auto step_index = static_cast<std::size_t>(out.state.steps);
        if (step_index < ep.gt_path.size() && out.state.node == ep.gt_path[step_index]) {
            s.teacher = teacher_candidate(world, s.pano, ep, step_index);
            s.has_teacher = true;
        }
        switch (opt.policy) {
            case ActionPolicy::Teacher:
                if (!s.has_teacher) throw std::logic_error("rollout: teacher forcing left the ground-truth path");
                s.chosen = s.teacher;
                break;
            case ActionPolicy::Greedy: {
                Eigen::Index best = 0;
                s.dist.probabilities.maxCoeff(&best);
                s.chosen = static_cast<std::size_t>(best);
                break;
            }
            case ActionPolicy::Sample: {
                if (opt.sampler == nullptr) throw std::invalid_argument("rollout: sampling needs an RNG");
                std::discrete_distribution<std::size_t> pick(s.dist.probabilities.data(),
                                                             s.dist.probabilities.data() + s.dist.probabilities.size());
                s.chosen = pick(*opt.sampler);
                break;
            }
            case ActionPolicy::Fixed:
                if (step_index >= opt.fixed_actions.size()) throw std::invalid_argument("rollout: fixed actions exhausted");
                s.chosen = opt.fixed_actions[step_index];
                break;
        }

        const int from = out.state.node;
        out.state = step(world, out.state, s.chosen);
        s.reward = step_reward(world, ep, from, out.state.node, out.state.stopped, opt.success_radius);
        if (!out.state.stopped) {
            const int view = s.pano.candidate_views[s.chosen];
            s.history_item = embed_view(params, cfg, bank, s.pano, view, NavSlot::Candidate, EmbedType::History,
                                        out.encoding, opt.dropout);
            history_sum += s.history_item->output();
            ++history_count;
        }
        out.steps.push_back(std::move(s));
    }
    return out;
}

/// Upstream gradients for one rollout.
struct RolloutGrad {
    std::vector<Vector> d_logits;  // per step, empty = none
    std::vector<double> d_values;  // per step
    double contrast_weight = 0.0;
    bool contrast_mean = false;  // divide each panorama's contrast by its view count
};

inline void rollout_backward(const Rollout& ro, const ModelParams& params, const ModelConfig& cfg,
                             const RolloutGrad& up, ModelParams& grad) {
    const auto dm = params.coembed.d_model();
    Vector dcls = Vector::Zero(dm);
    Vector dcls_provider = Vector::Zero(params.adapter.out_dim());
    std::vector<Vector> dhist_item(ro.steps.size(), Vector::Zero(dm));

    for (std::size_t t = 0; t < ro.steps.size(); ++t) {
        const auto& s = ro.steps[t];
        std::vector<EmbeddingGrad> view_grads(s.views.size());
        const bool has_logits = t < up.d_logits.size() && up.d_logits[t].size();
        const double dvalue = t < up.d_values.size() ? up.d_values[t] : 0.0;
        if (has_logits || dvalue != 0.0) {
            const Vector dl = has_logits ? up.d_logits[t] : Vector::Zero(s.dist.logits.size());
            const auto sg = score_candidates_backward(s.score, ro.encoding, params.policy, dl, dvalue, grad.policy);
            dcls += sg.d_cls;
            for (std::size_t j = 0; j < s.candidate_rows.size(); ++j)
                view_grads[s.candidate_rows[j]].d_prime = sg.d_candidates[j];
            // h'_t = mean of the first history_count history items
            for (std::size_t i = 0; i < s.history_count; ++i)
                dhist_item[i] += sg.d_history / static_cast<double>(s.history_count);
        }
        if (up.contrast_weight != 0.0 && !s.contrast_rows.empty()) {
            const double w = up.contrast_mean ? up.contrast_weight / static_cast<double>(s.contrast_rows.size())
                                              : up.contrast_weight;
            for (std::size_t i = 0; i < s.contrast_rows.size(); ++i) {
                auto& vg = view_grads[s.contrast_rows[i]];
                vg.d_V = w * s.contrast.d_V[i];
                vg.d_u = w * s.contrast.d_u[i];
            }
        }
        for (std::size_t i = 0; i < s.views.size(); ++i) {
            const auto& vg = view_grads[i];
            if (!vg.d_prime.size() && !vg.d_V.size() && !vg.d_u.size()) continue;
            embed_view_backward(s.views[i], params, cfg, vg, grad, dcls_provider);
        }
    }
    for (std::size_t t = 0; t < ro.steps.size(); ++t) {
        const auto& item = ro.steps[t].history_item;
        if (!item || dhist_item[t].isZero(0.0)) continue;
        EmbeddingGrad g;
        g.d_prime = dhist_item[t];
        embed_view_backward(*item, params, cfg, g, grad, dcls_provider);
    }
    encode_instruction_backward(ro.encoding, params.instruction, dcls, dcls_provider, grad.instruction);
}

// ---------------------------------------------------------------------------
// episode objectives

struct EpisodeObjective {
    double lambda1 = 0.2;
    double lambda2 = 1.0;
    double rl_weight = 1.0;
    double gamma = 0.9;
    int max_steps = 12;
    double success_radius = 0.0;
    bool contrast_mean = true;  // per-panorama mean over views instead of the plain sum
    double value_weight = 1.0;  // critic term inside L_RL
};

struct EpisodeLoss {
    LossBreakdown parts;
    Rollout teacher;
    std::optional<Rollout> sampled;
    std::vector<double> advantages;
};

/// One teacher-forced pass (IL and contrast) and, when rl_weight > 0, one
/// sampled pass (A2C).  Gradients of the total are accumulated into `grad`
/// when it is non-null.  `fixed_actions` replaces sampling and
/// `frozen_advantages` pins A_t (both used by gradient checks).
inline EpisodeLoss episode_loss(const ModelParams& params, const ModelConfig& cfg, const FeatureBank& bank,
                                const World& world, const Episode& ep, const EpisodeObjective& obj,
                                std::mt19937_64* sampler, std::mt19937_64* dropout, ModelParams* grad,
                                const std::vector<std::size_t>* fixed_actions = nullptr,
                                const std::vector<double>* frozen_advantages = nullptr) {
    EpisodeLoss out;
    const bool contrast_on = uses_contrast(cfg.mode) && obj.lambda2 != 0.0;

    RolloutOptions teach;
    teach.policy = ActionPolicy::Teacher;
    teach.dropout = dropout;
    teach.max_steps = std::max<int>(obj.max_steps, static_cast<int>(ep.gt_path.size()));
    teach.with_contrast = contrast_on;
    teach.success_radius = obj.success_radius;
    out.teacher = rollout_episode(params, cfg, bank, world, ep, teach);

    double il = 0.0, lc = 0.0;
    RolloutGrad tg;
    tg.contrast_weight = contrast_on ? obj.lambda2 : 0.0;
    tg.contrast_mean = obj.contrast_mean;
    for (const auto& s : out.teacher.steps) {
        il += il_loss(s.dist, s.teacher);
        if (!s.contrast_rows.empty())
            lc += obj.contrast_mean ? s.contrast.loss / static_cast<double>(s.contrast_rows.size()) : s.contrast.loss;
        tg.d_logits.push_back(nll_logit_grad(s.dist, s.teacher, obj.lambda1));
    }
    if (grad) rollout_backward(out.teacher, params, cfg, tg, *grad);

    double rl = 0.0;
    if (obj.rl_weight != 0.0) {
        RolloutOptions samp;
        samp.policy = fixed_actions ? ActionPolicy::Fixed : ActionPolicy::Sample;
        if (fixed_actions) samp.fixed_actions = *fixed_actions;
        samp.sampler = sampler;
        samp.dropout = dropout;
        samp.max_steps = obj.max_steps;
        samp.success_radius = obj.success_radius;
        out.sampled = rollout_episode(params, cfg, bank, world, ep, samp);
        std::vector<RlStep> steps;
        for (const auto& s : out.sampled->steps) steps.push_back({&s.dist, s.chosen, s.reward});
        const auto r = rl_loss(steps, obj.gamma, frozen_advantages, obj.value_weight);
        out.advantages = r.advantages;
        rl = obj.rl_weight * r.total;
        if (grad) {
            RolloutGrad sg;
            for (std::size_t t = 0; t < steps.size(); ++t) {
                sg.d_logits.push_back(obj.rl_weight * r.d_logits[t]);
                sg.d_values.push_back(obj.rl_weight * r.d_values[t]);
            }
            rollout_backward(*out.sampled, params, cfg, sg, *grad);
        }
    }
    out.parts = total_loss(rl, il, contrast_on ? lc : 0.0, obj.lambda1, contrast_on ? obj.lambda2 : 0.0);
    return out;
}

}  // namespace aacl
