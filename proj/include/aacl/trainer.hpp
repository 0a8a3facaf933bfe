#pragma once

// Training configuration, toy dataset construction, the IL + RL + contrast
// training loop, greedy evaluation with per-step traces, and checkpoints.

#include <aacl/agent.hpp>
#include <aacl/checkpoint.hpp>
#include <aacl/embedding.hpp>
#include <aacl/rng.hpp>
#include <aacl/world.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace aacl {

inline const std::vector<std::string>& default_lexicon() {
    static const std::vector<std::string> kLabels{"bathroom", "bed",    "bedroom", "closet", "door",   "fireplace",
                                                  "hallway",  "kitchen", "lamp",   "mirror", "plant",  "sink",
                                                  "sofa",     "stairs", "table",   "window"};
    return kLabels;
}

/// Labels only ever shown in distractor views of val_unseen_like worlds.
inline const std::vector<std::string>& held_out_lexicon() {
    static const std::vector<std::string> kLabels{"painting", "piano", "rug", "shelf"};
    return kLabels;
}

inline constexpr std::array<const char*, 4> kModules{"adapter", "coembed", "instruction", "policy"};

struct TrainConfig {
    std::uint64_t seed = 0;
    ModelConfig model;

    // synthetic provider
    double noise_sigma = 1.0;
    std::vector<std::string> lexicon = default_lexicon();
    std::vector<std::string> held_out = held_out_lexicon();

    // toy worlds
    int train_worlds = 8;
    int val_worlds = 4;
    int nodes_per_world = 16;
    int levels = 2;
    int max_path_len = 5;
    int train_episodes = 200;
    int val_episodes = 60;

    // optimisation
    int epochs = 8;
    int batch_size = 8;
    double lambda1 = 0.2;
    double lambda2 = 1.0;
    double rl_weight = 1.0;
    double gamma = 0.9;
    int max_steps = 10;
    double success_radius = 0.0;
    double clip_norm = 5.0;
    bool contrast_mean = true;
    double value_weight = 1.0;
    int rl_start_epoch = 5;  // epochs before this one are IL + contrast only
    std::map<std::string, double> learning_rates{{"adapter", 0.1}, {"coembed", 0.3}, {"instruction", 0.3}, {"policy", 0.3}};

    void validate() const {
        auto positive = [](const char* key, double v) {
            if (!(v > 0)) throw std::invalid_argument(std::string("config: ") + key + " must be positive");
        };
        positive("epochs", epochs + 0.5);  // zero epochs is allowed (evaluate only)
        positive("batch_size", batch_size);
        positive("train_worlds", train_worlds);
        positive("val_worlds", val_worlds);
        positive("train_episodes", train_episodes);
        positive("val_episodes", val_episodes);
        positive("max_steps", max_steps);
        positive("model.tau", model.tau);
        positive("model.rerank_temperature", model.rerank_temperature);
        if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
        if (max_path_len < 2) throw std::invalid_argument("config: max_path_len must be >= 2");
        if (max_path_len + 1 > model.max_instruction_steps)
            throw std::invalid_argument("config: model.max_instruction_steps must exceed max_path_len");
        if (!(model.alpha >= 0 && model.alpha <= 1)) throw std::invalid_argument("config: model.alpha outside [0, 1]");
        if (!(model.dropout >= 0 && model.dropout < 1)) throw std::invalid_argument("config: model.dropout outside [0, 1)");
        if (lambda1 < 0 || lambda2 < 0 || rl_weight < 0) throw std::invalid_argument("config: loss weights must be >= 0");
        if (!(gamma >= 0 && gamma <= 1)) throw std::invalid_argument("config: gamma outside [0, 1]");
        for (const auto* name : kModules) {
            auto it = learning_rates.find(name);
            if (it == learning_rates.end())
                throw std::invalid_argument(std::string("config: learning_rates.") + name + " missing");
            positive("learning_rates entry", it->second);
        }
        for (const auto& [name, _] : learning_rates)
            if (std::find_if(kModules.begin(), kModules.end(), [&](const char* m) { return name == m; }) == kModules.end())
                throw std::invalid_argument("config: unknown learning_rates module \"" + name + "\"");
    }

    nlohmann::json to_json() const {
        return {{"seed", seed},
                {"model", model.to_json()},
                {"noise_sigma", noise_sigma},
                {"lexicon", lexicon},
                {"held_out", held_out},
                {"train_worlds", train_worlds},
                {"val_worlds", val_worlds},
                {"nodes_per_world", nodes_per_world},
                {"levels", levels},
                {"max_path_len", max_path_len},
                {"train_episodes", train_episodes},
                {"val_episodes", val_episodes},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"lambda1", lambda1},
                {"lambda2", lambda2},
                {"rl_weight", rl_weight},
                {"gamma", gamma},
                {"max_steps", max_steps},
                {"success_radius", success_radius},
                {"clip_norm", clip_norm},
                {"contrast_mean", contrast_mean},
                {"value_weight", value_weight},
                {"rl_start_epoch", rl_start_epoch},
                {"learning_rates", learning_rates}};
    }

    /// Missing keys keep their defaults; unknown keys are rejected.
    static TrainConfig from_json(const nlohmann::json& j) {
        static const std::set<std::string> kKeys{
            "seed",       "model",          "noise_sigma",  "lexicon",   "held_out",  "train_worlds",
            "val_worlds", "nodes_per_world", "levels",      "max_path_len", "train_episodes", "val_episodes",
            "epochs",     "batch_size",     "lambda1",      "lambda2",   "rl_weight", "gamma",
            "max_steps",  "success_radius", "clip_norm",    "contrast_mean", "value_weight", "rl_start_epoch", "learning_rates"};
        if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
        for (const auto& [key, _] : j.items())
            if (!kKeys.count(key)) throw std::invalid_argument("config: unknown key \"" + key + "\"");
        TrainConfig c;
        try {
            c.seed = j.value("seed", c.seed);
            if (j.contains("model")) c.model = ModelConfig::from_json(j["model"], c.model);
            c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
            c.lexicon = j.value("lexicon", c.lexicon);
            c.held_out = j.value("held_out", c.held_out);
            c.train_worlds = j.value("train_worlds", c.train_worlds);
            c.val_worlds = j.value("val_worlds", c.val_worlds);
            c.nodes_per_world = j.value("nodes_per_world", c.nodes_per_world);
            c.levels = j.value("levels", c.levels);
            c.max_path_len = j.value("max_path_len", c.max_path_len);
            c.train_episodes = j.value("train_episodes", c.train_episodes);
            c.val_episodes = j.value("val_episodes", c.val_episodes);
            c.epochs = j.value("epochs", c.epochs);
            c.batch_size = j.value("batch_size", c.batch_size);
            c.lambda1 = j.value("lambda1", c.lambda1);
            c.lambda2 = j.value("lambda2", c.lambda2);
            c.rl_weight = j.value("rl_weight", c.rl_weight);
            c.gamma = j.value("gamma", c.gamma);
            c.max_steps = j.value("max_steps", c.max_steps);
            c.success_radius = j.value("success_radius", c.success_radius);
            c.clip_norm = j.value("clip_norm", c.clip_norm);
            c.contrast_mean = j.value("contrast_mean", c.contrast_mean);
            c.value_weight = j.value("value_weight", c.value_weight);
            c.rl_start_epoch = j.value("rl_start_epoch", c.rl_start_epoch);
            if (j.contains("learning_rates"))
                for (const auto& [name, lr] : j["learning_rates"].items()) c.learning_rates[name] = lr.get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument(std::string("config: ") + e.what());
        }
        c.validate();
        return c;
    }

    EpisodeObjective objective() const {
        return {lambda1, lambda2, rl_weight, gamma, max_steps, success_radius, contrast_mean, value_weight};
    }
};

// ---------------------------------------------------------------------------
// dataset

struct Dataset {
    std::vector<World> worlds;  // train worlds first, then val_unseen_like worlds
    std::vector<std::pair<std::size_t, Episode>> train;
    std::vector<std::pair<std::size_t, Episode>> val_seen;
    std::vector<std::pair<std::size_t, Episode>> val_unseen;

    const std::vector<std::pair<std::size_t, Episode>>& split(Split s) const {
        switch (s) {
            case Split::Train: return train;
            case Split::ValSeenLike: return val_seen;
            case Split::ValUnseenLike: return val_unseen;
        }
        throw std::logic_error("Dataset::split");
    }

    std::vector<std::string> train_corpus() const {
        std::vector<std::string> out;
        for (const auto& [_, ep] : train) out.push_back(ep.instruction_text());
        return out;
    }
};

inline std::uint64_t world_seed(std::uint64_t master, std::size_t index) { return stream_seed(master, "world", index); }

inline Dataset build_dataset(const TrainConfig& c) {
    Dataset d;
    WorldOptions unseen;
    unseen.distractor_lexicon = c.held_out;
    for (int i = 0; i < c.train_worlds + c.val_worlds; ++i) {
        const bool is_val = i >= c.train_worlds;
        d.worlds.push_back(generate_world(world_seed(c.seed, static_cast<std::size_t>(i)), c.nodes_per_world, c.levels,
                                          c.lexicon, is_val ? unseen : WorldOptions{}));
    }
    auto fill = [&](std::vector<std::pair<std::size_t, Episode>>& out, Split split, int count, std::size_t first_world,
                    std::size_t n_worlds, const char* stream) {
        for (int e = 0; e < count; ++e) {
            const auto w = first_world + static_cast<std::size_t>(e) % n_worlds;
            out.emplace_back(w, generate_episode(d.worlds[w], stream_seed(c.seed, stream, static_cast<std::uint64_t>(e)),
                                                 c.max_path_len, split));
        }
    };
    const auto n_train = static_cast<std::size_t>(c.train_worlds);
    fill(d.train, Split::Train, c.train_episodes, 0, n_train, "episode.train");
    fill(d.val_seen, Split::ValSeenLike, c.val_episodes, 0, n_train, "episode.val_seen");
    fill(d.val_unseen, Split::ValUnseenLike, c.val_episodes, n_train, static_cast<std::size_t>(c.val_worlds),
         "episode.val_unseen");
    return d;
}

inline std::unique_ptr<SyntheticProvider> make_provider(const TrainConfig& c) {
    SyntheticProviderConfig pc;
    pc.dim = c.model.provider_dim;
    pc.seed = stream_seed(c.seed, "provider");
    pc.noise_sigma = c.noise_sigma;
    pc.lexicon = c.lexicon;
    pc.lexicon.insert(pc.lexicon.end(), c.held_out.begin(), c.held_out.end());
    return make_synthetic(pc);
}

/// Everything a model needs at run time: provider, data, frozen features.
struct Workspace {
    TrainConfig config;
    std::unique_ptr<EmbeddingProvider> provider;
    Dataset data;
    std::unique_ptr<FeatureBank> bank;

    explicit Workspace(TrainConfig c, std::unique_ptr<EmbeddingProvider> custom_provider = nullptr)
        : config(std::move(c)) {
        config.validate();
        provider = custom_provider ? std::move(custom_provider) : make_provider(config);
        if (provider->dim() != config.model.provider_dim)
            throw std::invalid_argument("provider dim " + std::to_string(provider->dim()) +
                                        " does not match model.provider_dim " +
                                        std::to_string(config.model.provider_dim));
        data = build_dataset(config);
        auto all = config.lexicon;
        all.insert(all.end(), config.held_out.begin(), config.held_out.end());
        auto repo = build_repository(data.train_corpus(), all, *provider);
        bank = std::make_unique<FeatureBank>(*provider, std::move(repo), config.model.top_k, config.model.tau);
        for (const auto& w : data.worlds) bank->add_world(w);
    }
};

// ---------------------------------------------------------------------------
// optimiser

/// Plain SGD with one learning rate per module.
inline void sgd_step(ModelParams& params, const ModelParams& grad, const std::map<std::string, double>& lr, long step) {
    auto apply = [&](const char* module, auto& p, const auto& g) {
        try {
            unflatten(sgd_update(flatten(p), flatten(g), lr.at(module), step), p);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(std::string(module) + ": " + e.what());
        }
    };
    apply("adapter", params.adapter, grad.adapter);
    apply("coembed", params.coembed, grad.coembed);
    apply("instruction", params.instruction, grad.instruction);
    apply("policy", params.policy, grad.policy);
}

inline double grad_norm(const ModelParams& g) {
    double s = 0.0;
    g.visit("", [&](const std::string&, const auto& t) { s += t.squaredNorm(); });
    return std::sqrt(s);
}

inline void scale_grad(ModelParams& g, double factor) {
    g.visit("", [&](const std::string&, auto& t) { t *= factor; });
}

// ---------------------------------------------------------------------------
// evaluation and traces

inline nlohmann::json trace_step(const Episode& ep, std::size_t t, const StepRecord& s) {
    nlohmann::json scores = nlohmann::json::array();
    for (Eigen::Index j = 0; j < s.dist.probabilities.size(); ++j)
        scores.push_back({{"logit", s.dist.logits[j]}, {"probability", s.dist.probabilities[j]}});
    const auto& view = s.views[s.candidate_rows[s.chosen]];
    nlohmann::json objects = nlohmann::json::array();
    if (view.bank != nullptr)
        for (std::size_t i = 0; i < view.bank->topk.size(); ++i) {
            nlohmann::json o{{"label", view.bank->topk[i].label}, {"p", view.bank->topk[i].probability}};
            if (view.p_tilde.size()) o["p_tilde"] = view.p_tilde[static_cast<Eigen::Index>(i)];
            objects.push_back(std::move(o));
        }
    return {{"episode", ep.id},
            {"step", t},
            {"node", s.pano.node},
            {"candidate_scores", scores},
            {"chosen", s.chosen},
            {"chosen_view", view.view},
            {"action", std::string(action_phrase(view.action))},
            {"objects", objects},
            {"attention", std::vector<double>(s.dist.attention.data(),
                                              s.dist.attention.data() + s.dist.attention.size())}};
}

struct EvalResult {
    NavMetrics mean;
    std::vector<NavMetrics> per_episode;
    std::vector<std::vector<nlohmann::json>> traces;  // per episode, one record per step
    std::size_t trace_lines() const {
        std::size_t n = 0;
        for (const auto& t : traces) n += t.size();
        return n;
    }
};

/// Greedy rollouts.  Per-episode results do not depend on `workers`.
inline EvalResult evaluate_policy(const ModelParams& params, const Workspace& ws,
                                  const std::vector<std::pair<std::size_t, Episode>>& episodes, int workers = 1,
                                  bool with_traces = false, std::size_t limit = 0) {
    const std::size_t n = limit ? std::min(limit, episodes.size()) : episodes.size();
    EvalResult r;
    r.per_episode.resize(n);
    if (with_traces) r.traces.resize(n);
    RolloutOptions opt;
    opt.policy = ActionPolicy::Greedy;
    opt.max_steps = ws.config.max_steps;
    opt.success_radius = ws.config.success_radius;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                const auto& [w, ep] = episodes[i];
                const auto ro = rollout_episode(params, ws.config.model, *ws.bank, ws.data.worlds[w], ep, opt);
                r.per_episode[i] = evaluate_trajectory(ws.data.worlds[w], ro.state.visited, ep, ws.config.success_radius);
                if (with_traces)
                    for (std::size_t t = 0; t < ro.steps.size(); ++t) r.traces[i].push_back(trace_step(ep, t, ro.steps[t]));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < workers; ++k) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    r.mean = mean_metrics(r.per_episode);
    return r;
}

inline nlohmann::json metrics_json(const NavMetrics& m) {
    return {{"NE", m.ne}, {"TL", m.tl}, {"SR", m.sr}, {"SPL", m.spl}};
}

// ---------------------------------------------------------------------------
// training

struct EpochSummary {
    int epoch = 0;
    LossBreakdown loss;  // mean over training episodes
    NavMetrics val_seen;
    NavMetrics val_unseen;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochSummary> epochs;
    std::vector<nlohmann::json> log;  // metrics log lines
};

struct TrainHooks {
    std::function<void(const nlohmann::json&)> on_log;  // each metrics line as it is produced
    bool evaluate_each_epoch = true;
};

inline ModelParams init_params(const TrainConfig& c) {
    auto rng = make_stream(c.seed, "init");
    return ModelParams::init(c.model, rng);
}

inline TrainResult train(const Workspace& ws, const TrainHooks& hooks = {}) {
    const auto& c = ws.config;
    TrainResult out;
    out.params = init_params(c);
    long step_count = 0;
    const auto full_obj = c.objective();
    auto warmup_obj = full_obj;
    warmup_obj.rl_weight = 0.0;
    std::vector<std::size_t> order(ws.data.train.size());

    auto emit = [&](const nlohmann::json& line) {
        out.log.push_back(line);
        if (hooks.on_log) hooks.on_log(line);
    };

    for (int epoch = 1; epoch <= c.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        auto shuffle_rng = make_stream(c.seed, "shuffle", static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const auto& obj = epoch < c.rl_start_epoch ? warmup_obj : full_obj;
        LossBreakdown sum;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(c.batch_size)) {
            const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(c.batch_size));
            ModelParams grad = zeros_like(out.params);
            for (std::size_t i = b; i < end; ++i) {
                const auto idx = order[i];
                const auto& [w, ep] = ws.data.train[idx];
                const auto tag = static_cast<std::uint64_t>(epoch) * 1000003ULL + idx;
                auto sampler = make_stream(c.seed, "sampling", tag);
                auto dropout = make_stream(c.seed, "dropout", tag);
                auto* drop = c.model.dropout > 0 ? &dropout : nullptr;
                const auto l = episode_loss(out.params, c.model, *ws.bank, ws.data.worlds[w], ep, obj, &sampler, drop,
                                            &grad);
                sum.rl += l.parts.rl;
                sum.il += l.parts.il;
                sum.contrast += l.parts.contrast;
                sum.total += l.parts.total;
            }
            scale_grad(grad, 1.0 / static_cast<double>(end - b));
            const double norm = grad_norm(grad);
            if (c.clip_norm > 0 && norm > c.clip_norm) scale_grad(grad, c.clip_norm / norm);
            sgd_step(out.params, grad, c.learning_rates, step_count++);
        }
        const double n = static_cast<double>(order.size());
        EpochSummary summary;
        summary.epoch = epoch;
        summary.loss = {sum.rl / n, sum.il / n, sum.contrast / n, sum.total / n, c.lambda1, c.lambda2};
        nlohmann::json losses = summary.loss.to_json();
        if (hooks.evaluate_each_epoch || epoch == c.epochs) {
            summary.val_seen = evaluate_policy(out.params, ws, ws.data.val_seen).mean;
            summary.val_unseen = evaluate_policy(out.params, ws, ws.data.val_unseen).mean;
            for (auto [split, m] : {std::pair{Split::ValSeenLike, summary.val_seen},
                                    std::pair{Split::ValUnseenLike, summary.val_unseen}}) {
                auto line = metrics_json(m);
                line["epoch"] = epoch;
                line["split"] = split_name(split);
                line["losses"] = losses;
                emit(line);
            }
        } else {
            emit({{"epoch", epoch}, {"split", "train"}, {"losses", losses}});
        }
        out.epochs.push_back(summary);
    }
    return out;
}

// ---------------------------------------------------------------------------
// checkpoints

inline nlohmann::json checkpoint_to_json(const TrainConfig& c, const ConceptRepository& repo, const ModelParams& p) {
    return {{"format_version", kCheckpointFormatVersion},
            {"kind", "agent"},
            {"config", c.to_json()},
            {"repository", repo.to_json()},
            {"tensors", tensors_to_json(p)}};
}

/// Restores parameters into a freshly initialised (correctly shaped) model;
/// every shape is checked against the config.
inline ModelParams params_from_checkpoint(const nlohmann::json& j, const TrainConfig& c) {
    if (j.value("format_version", -1) != kCheckpointFormatVersion)
        throw std::invalid_argument("checkpoint: unsupported format_version");
    if (j.value("kind", std::string()) != "agent") throw std::invalid_argument("checkpoint: not an agent checkpoint");
    ModelParams p = init_params(c);
    p.adapter.alpha = c.model.alpha;
    p.coembed.dropout_rate = c.model.dropout;
    tensors_from_json(j.at("tensors"), p);
    return p;
}

inline TrainConfig config_from_checkpoint(const nlohmann::json& j) { return TrainConfig::from_json(j.at("config")); }

}  // namespace aacl
