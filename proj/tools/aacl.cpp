// aacl: command-line entry point for the toy navigation pipeline.
//
// Exit codes: 0 success, 1 validation or usage error, 2 runtime failure.

#include <aacl/gradcheck.hpp>
#include <aacl/trainer.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// logging: AACL_LOG in {error, info, debug}

enum class Level { Error = 0, Info = 1, Debug = 2 };

Level log_level() {
    const char* env = std::getenv("AACL_LOG");
    if (env == nullptr) return Level::Info;
    const std::string v = env;
    if (v == "error") return Level::Error;
    if (v == "debug") return Level::Debug;
    return Level::Info;
}

void log(Level level, const std::string& msg) {
    static const Level threshold = log_level();
    if (level > threshold) return;
    static const char* names[] = {"error", "info", "debug"};
    std::cerr << "[aacl " << names[static_cast<int>(level)] << "] " << msg << '\n';
}

/// Validation problems map to exit code 1, everything else to 2.
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

void check_output(const std::string& path, bool force) {
    if (path.empty()) return;
    if (fs::exists(path) && !force) throw UsageError(path + " exists; pass --force to overwrite");
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

void write_jsonl(const std::string& path, const std::vector<json>& lines) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& l : lines) out << l.dump() << '\n';
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

// ---------------------------------------------------------------------------
// shared option groups

struct ModelSource {
    std::string checkpoint;
    std::string config;
    std::string embeddings;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

aacl::TrainConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    return aacl::TrainConfig::from_json(aacl::read_json_file(path));
}

std::unique_ptr<aacl::EmbeddingProvider> load_provider(const std::string& path) {
    if (path.empty()) return nullptr;
    return std::make_unique<aacl::EmbeddingStore>(aacl::load_store(path));
}

struct LoadedModel {
    std::unique_ptr<aacl::Workspace> ws;
    aacl::ModelParams params;
};

/// Rebuilds the workspace recorded in a checkpoint (or a fresh one from a
/// config / seed) and restores parameters.
LoadedModel load_model(const ModelSource& src) {
    LoadedModel m;
    if (!src.checkpoint.empty()) {
        const auto ck = aacl::read_json_file(src.checkpoint);
        auto cfg = aacl::config_from_checkpoint(ck);
        std::string emb = src.embeddings;
        if (emb.empty() && ck.contains("embeddings")) emb = ck["embeddings"].get<std::string>();
        m.ws = std::make_unique<aacl::Workspace>(cfg, load_provider(emb));
        if (ck.contains("repository") && ck["repository"] != m.ws->bank->repository().to_json())
            throw UsageError("checkpoint repository does not match the one rebuilt from its config");
        m.params = aacl::params_from_checkpoint(ck, cfg);
        log(Level::Debug, "loaded checkpoint " + src.checkpoint);
    } else {
        auto cfg = load_config(src.config);
        if (src.seed_set) cfg.seed = src.seed;
        m.ws = std::make_unique<aacl::Workspace>(cfg, load_provider(src.embeddings));
        m.params = aacl::init_params(cfg);
        log(Level::Info, "no checkpoint given; using freshly initialised parameters");
    }
    return m;
}

void add_model_source(CLI::App* cmd, ModelSource& src, bool checkpoint_required) {
    auto* ck = cmd->add_option("--checkpoint", src.checkpoint, "Agent checkpoint written by `train`")
                   ->check(CLI::ExistingFile);
    if (checkpoint_required) {
        ck->required();
    } else {
        cmd->add_option("--config", src.config, "Training config JSON (used when no checkpoint is given)")
            ->check(CLI::ExistingFile);
        cmd->add_option_function<std::uint64_t>(
            "--seed",
            [&src](std::uint64_t s) {
                src.seed = s;
                src.seed_set = true;
            },
            "Master seed (used when no checkpoint is given)");
    }
    cmd->add_option("--embeddings", src.embeddings, "Embedding file to use instead of the synthetic provider")
        ->check(CLI::ExistingFile);
}

const std::vector<std::pair<std::size_t, aacl::Episode>>& episodes_for(const aacl::Workspace& ws,
                                                                        const std::string& split) {
    return ws.data.split(aacl::parse_split(split));
}

// ---------------------------------------------------------------------------
// format documentation

const char* kFormatDocs = R"(# aacl file formats

All files are UTF-8 JSON (or JSON Lines, one object per line).

## Embedding file

    {"dim": 32,
     "text":  {"a photo of a kitchen": [0.12, ...], "turn left kitchen": [...], ...},
     "image": {"w123/n4/v2": [...], ...}}

Every vector has exactly `dim` finite entries and a nonzero norm. Duplicate
keys and length mismatches are errors that name the offending record. Text
keys are full phrases: concept prompts ("a photo of a <label>"), actional
phrases ("<action> <label>"), instruction steps ("turn left to the kitchen.")
and "stop". Image keys are view ids.

## Concept repository

    {"concepts": [{"label": "bathroom", "phrase": "a photo of a bathroom"}, ...]}

Labels are sorted and unique. Text features are re-derived from the provider.

## World

    {"seed": 7, "n_levels": 2,
     "nodes": [{"x": 0, "y": 0, "level": 0, "room": "kitchen",
                "edges": [{"to": 1, "heading": 1.5708, "elevation": 0.0, "length": 1.0, "view": 2}, ...],
                "views": [{"heading": 0.0, "elevation": 0.0, "label": "sofa", "target": -1,
                           "image_id": "w7/n0/v0"}, ...]}, ...]}

Heading 0 points to +y and increases clockwise (east is pi/2). `target` is
the neighbour reached through a navigable view, -1 otherwise. Every edge
names the view that shows it. The graph must be connected.

## Episodes

    {"episodes": [{"id": "train/w7/e3", "split": "train", "start": 0, "goal": 5,
                   "gt_path": [0, 1, 5], "start_heading": 0.0, "start_elevation": 0.0,
                   "instruction": "turn left to the kitchen. go forward to the sofa. stop.",
                   "steps": [{"action": "turn left", "object": "kitchen"}, ...,
                             {"action": "stop", "object": ""}]}]}

`instruction` is informational; `steps` is authoritative.

## Training config

Any subset of:

    {"seed": 0, "noise_sigma": 1.0, "lexicon": [...], "held_out": [...],
     "train_worlds": 8, "val_worlds": 4, "nodes_per_world": 16, "levels": 2,
     "max_path_len": 5, "train_episodes": 200, "val_episodes": 60,
     "epochs": 8, "batch_size": 8, "lambda1": 0.2, "lambda2": 1.0,
     "rl_weight": 1.0, "rl_start_epoch": 5, "value_weight": 1.0, "gamma": 0.9,
     "max_steps": 10, "success_radius": 0.0, "clip_norm": 5.0, "contrast_mean": true,
     "learning_rates": {"adapter": 0.1, "coembed": 0.3, "instruction": 0.3, "policy": 0.3},
     "model": {"mode": "full", "provider_dim": 32, "d_model": 64, "adapter_hidden": 256,
               "scorer_hidden": 64, "max_instruction_steps": 16, "top_k": 5, "tau": 0.5,
               "alpha": 0.8, "rerank_temperature": 1.0, "renormalize_topk": false,
               "absolute_heading": false, "dropout": 0.1}}

Unknown keys are rejected. Modes: full, w/o-refine, w/o-contrast, separate, baseline.

## Checkpoint

    {"format_version": 1, "kind": "agent", "config": {...}, "repository": {...},
     "tensors": {"policy.query": {"shape": [64, 128], "data": [...]}, ...}}

Matrices are stored row-major with shape [rows, cols]; vectors with shape [n].

## Metrics log (JSON Lines)

    {"epoch": 3, "split": "val_unseen_like", "NE": 1.2, "TL": 3.4, "SR": 0.55, "SPL": 0.52,
     "losses": {"rl": 0.0, "il": 1.1, "contrast": 4.3, "total": 4.5}}

`losses` are means over the epoch's training episodes.

## Trace (JSON Lines, one record per agent step)

    {"episode": "val_unseen_like/w9/e0", "step": 0, "node": 3,
     "candidate_scores": [{"logit": 1.2, "probability": 0.7}, ...],
     "chosen": 0, "chosen_view": 2, "action": "turn right",
     "objects": [{"label": "kitchen", "p": 0.31, "p_tilde": 0.42}, ...],
     "attention": [0.9, 0.05, ...]}

The last candidate is always stop; `chosen_view` is -1 when the agent stops.
)";

// ---------------------------------------------------------------------------
// subcommands

int run(int argc, char** argv) {
    CLI::App app{"Actional atomic-concept navigation agent on procedurally generated toy worlds"};
    app.require_subcommand(1);
    bool force = false;

    // gen-world
    auto* gw = app.add_subcommand("gen-world", "Generate a toy world");
    std::uint64_t gw_seed = 0;
    int gw_nodes = 16, gw_levels = 2;
    bool gw_held_out = false;
    std::string gw_out, gw_lexicon;
    gw->add_option("--seed", gw_seed, "World seed");
    gw->add_option("--nodes", gw_nodes, "Number of viewpoints")->check(CLI::Range(4, 10000));
    gw->add_option("--levels", gw_levels, "Number of floors")->check(CLI::Range(1, 16));
    gw->add_option("--lexicon", gw_lexicon, "Comma-separated room labels (default: built-in)");
    gw->add_flag("--held-out-distractors", gw_held_out, "Label distractor views with the held-out lexicon");
    gw->add_option("--out", gw_out, "Output world JSON")->required();
    gw->add_flag("--force", force, "Overwrite existing output files");

    // gen-episodes
    auto* ge = app.add_subcommand("gen-episodes", "Generate episodes on a world file");
    std::string ge_world, ge_out, ge_split = "train";
    std::uint64_t ge_seed = 0;
    int ge_count = 10, ge_max_len = 5;
    ge->add_option("--world", ge_world, "World JSON")->required()->check(CLI::ExistingFile);
    ge->add_option("--count", ge_count, "Number of episodes")->check(CLI::PositiveNumber);
    ge->add_option("--max-len", ge_max_len, "Maximum path length in nodes")->check(CLI::Range(2, 1000));
    ge->add_option("--seed", ge_seed, "Episode seed");
    ge->add_option("--split", ge_split, "train | val_seen_like | val_unseen_like");
    ge->add_option("--out", ge_out, "Output episodes JSON")->required();
    ge->add_flag("--force", force, "Overwrite existing output files");

    // build-repo
    auto* br = app.add_subcommand("build-repo", "Build the object concept repository from instructions");
    std::vector<std::string> br_episodes;
    std::string br_lexicon, br_out, br_embeddings;
    std::uint64_t br_seed = 0;
    int br_dim = 32;
    br->add_option("--episodes", br_episodes, "Episode JSON files (their instructions form the corpus)")
        ->required()
        ->check(CLI::ExistingFile);
    br->add_option("--lexicon", br_lexicon, "Comma-separated allowed nouns (default: built-in + held-out)");
    br->add_option("--embeddings", br_embeddings, "Embedding file (default: synthetic provider)")
        ->check(CLI::ExistingFile);
    br->add_option("--seed", br_seed, "Synthetic provider seed");
    br->add_option("--dim", br_dim, "Synthetic provider dimension")->check(CLI::Range(8, 4096));
    br->add_option("--out", br_out, "Output repository JSON")->required();
    br->add_flag("--force", force, "Overwrite existing output files");

    // train
    auto* tr = app.add_subcommand("train", "Train an agent; writes checkpoint.json and metrics.jsonl");
    std::string tr_config, tr_mode, tr_out, tr_embeddings;
    std::uint64_t tr_seed = 0;
    int tr_epochs = -1;
    bool tr_seed_set = false;
    tr->add_option("--config", tr_config, "Training config JSON")->check(CLI::ExistingFile);
    tr->add_option("--mode", tr_mode, "full | w/o-refine | w/o-contrast | separate | baseline");
    tr->add_option_function<std::uint64_t>(
        "--seed",
        [&](std::uint64_t s) {
            tr_seed = s;
            tr_seed_set = true;
        },
        "Master seed, fanned out into world/episode/init/dropout/sampling streams");
    tr->add_option("--epochs", tr_epochs, "Override the number of epochs")->check(CLI::NonNegativeNumber);
    tr->add_option("--embeddings", tr_embeddings, "Embedding file instead of the synthetic provider")
        ->check(CLI::ExistingFile);
    tr->add_option("--out", tr_out, "Output directory")->required();
    tr->add_flag("--force", force, "Overwrite existing output files");

    // eval
    auto* ev = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
    ModelSource ev_src;
    std::string ev_split = "val_unseen_like", ev_out, ev_trace;
    std::size_t ev_n = 0;
    int ev_workers = 1;
    add_model_source(ev, ev_src, true);
    ev->add_option("--split", ev_split, "train | val_seen_like | val_unseen_like");
    ev->add_option("--episodes", ev_n, "Evaluate only the first N episodes (0 = all)");
    ev->add_option("--workers", ev_workers, "Rollout threads")->check(CLI::Range(1, 256));
    ev->add_option("--out", ev_out, "Write the metrics JSON here as well as to stdout");
    ev->add_option("--trace", ev_trace, "Write per-step trace JSON Lines here");
    ev->add_flag("--force", force, "Overwrite existing output files");

    // trace
    auto* tc = app.add_subcommand("trace", "Write per-step decision traces for a split");
    ModelSource tc_src;
    std::string tc_split = "val_unseen_like", tc_out;
    std::size_t tc_n = 0;
    add_model_source(tc, tc_src, true);
    tc->add_option("--split", tc_split, "train | val_seen_like | val_unseen_like");
    tc->add_option("--episodes", tc_n, "Trace only the first N episodes (0 = all)");
    tc->add_option("--out", tc_out, "Output trace JSON Lines")->required();
    tc->add_flag("--force", force, "Overwrite existing output files");

    // map-view
    auto* mv = app.add_subcommand("map-view", "Print the actional atomic concept of one view");
    ModelSource mv_src;
    std::string mv_split = "val_unseen_like";
    std::size_t mv_episode = 0;
    int mv_node = -1, mv_view = -1;
    double mv_prev_heading = std::numeric_limits<double>::quiet_NaN();
    add_model_source(mv, mv_src, false);
    mv->add_option("--split", mv_split, "Split the episode is taken from");
    mv->add_option("--episode", mv_episode, "Episode index within the split (its instruction conditions p~)");
    mv->add_option("--node", mv_node, "Viewpoint (default: episode start)");
    mv->add_option("--view", mv_view, "View index (default: first navigable view)");
    mv->add_option("--prev-heading", mv_prev_heading, "Previous heading in radians (default: episode start heading)");

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "Finite-difference check of every backward pass");
    aacl::GradCheckOptions gc_opt;
    gc->add_option("--seed", gc_opt.seed, "Seed for the random test problems");
    gc->add_option("--eps", gc_opt.eps, "Central-difference step")->check(CLI::Range(1e-7, 1e-3));
    gc->add_option("--tol", gc_opt.tol, "Relative error tolerance")->check(CLI::PositiveNumber);

    // export-format-docs
    auto* fd = app.add_subcommand("export-format-docs", "Write documentation of every file format");
    std::string fd_out;
    fd->add_option("--out", fd_out, "Output markdown file (default: stdout)");
    fd->add_flag("--force", force, "Overwrite existing output files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << '\n';
        return 1;
    }

    if (gw->parsed()) {
        check_output(gw_out, force);
        const auto lexicon = gw_lexicon.empty() ? aacl::default_lexicon() : split_csv(gw_lexicon);
        aacl::WorldOptions opt;
        if (gw_held_out) opt.distractor_lexicon = aacl::held_out_lexicon();
        const auto w = aacl::generate_world(gw_seed, gw_nodes, gw_levels, lexicon, opt);
        aacl::write_json_file(gw_out, aacl::world_to_json(w), 1);
        log(Level::Info, "wrote world with " + std::to_string(w.size()) + " nodes to " + gw_out);
    } else if (ge->parsed()) {
        check_output(ge_out, force);
        const auto w = aacl::world_from_json(aacl::read_json_file(ge_world));
        const auto split = aacl::parse_split(ge_split);
        json arr = json::array();
        for (int i = 0; i < ge_count; ++i)
            arr.push_back(aacl::episode_to_json(aacl::generate_episode(
                w, aacl::stream_seed(ge_seed, "episode." + ge_split, static_cast<std::uint64_t>(i)), ge_max_len, split)));
        aacl::write_json_file(ge_out, {{"episodes", arr}}, 1);
        log(Level::Info, "wrote " + std::to_string(ge_count) + " episodes to " + ge_out);
    } else if (br->parsed()) {
        check_output(br_out, force);
        std::vector<std::string> corpus;
        for (const auto& path : br_episodes) {
            const auto doc = aacl::read_json_file(path);
            for (const auto& e : doc.at("episodes")) corpus.push_back(aacl::episode_from_json(e).instruction_text());
        }
        auto lexicon = split_csv(br_lexicon);
        if (lexicon.empty()) {
            lexicon = aacl::default_lexicon();
            lexicon.insert(lexicon.end(), aacl::held_out_lexicon().begin(), aacl::held_out_lexicon().end());
        }
        std::unique_ptr<aacl::EmbeddingProvider> provider = load_provider(br_embeddings);
        if (!provider) {
            aacl::SyntheticProviderConfig pc;
            pc.dim = br_dim;
            pc.seed = br_seed;
            pc.lexicon = lexicon;
            provider = aacl::make_synthetic(pc);
        }
        const auto repo = aacl::build_repository(corpus, lexicon, *provider);
        aacl::write_json_file(br_out, repo.to_json(), 1);
        log(Level::Info, "repository has " + std::to_string(repo.size()) + " concepts");
    } else if (tr->parsed()) {
        auto cfg = load_config(tr_config);
        if (!tr_mode.empty()) cfg.model.mode = aacl::parse_mode(tr_mode);
        if (tr_seed_set) cfg.seed = tr_seed;
        if (tr_epochs >= 0) cfg.epochs = tr_epochs;
        cfg.validate();
        const auto ck_path = (fs::path(tr_out) / "checkpoint.json").string();
        const auto log_path = (fs::path(tr_out) / "metrics.jsonl").string();
        check_output(ck_path, force);
        check_output(log_path, force);
        aacl::Workspace ws(cfg, load_provider(tr_embeddings));
        log(Level::Info, "mode " + aacl::mode_name(cfg.model.mode) + ", " + std::to_string(ws.data.train.size()) +
                             " training episodes, " + std::to_string(ws.bank->repository().size()) + " concepts");
        std::ofstream metrics(log_path, std::ios::binary);
        if (!metrics) throw std::runtime_error("cannot write " + log_path);
        aacl::TrainHooks hooks;
        hooks.on_log = [&](const json& line) {
            metrics << line.dump() << '\n';
            metrics.flush();
            log(Level::Debug, line.dump());
            if (line.value("split", "") == "val_unseen_like")
                log(Level::Info, "epoch " + std::to_string(line["epoch"].get<int>()) + " val_unseen_like SR " +
                                     std::to_string(line["SR"].get<double>()));
        };
        const auto result = aacl::train(ws, hooks);
        auto ck = aacl::checkpoint_to_json(cfg, ws.bank->repository(), result.params);
        if (!tr_embeddings.empty()) ck["embeddings"] = fs::absolute(tr_embeddings).string();
        aacl::write_json_file(ck_path, ck);
        log(Level::Info, "wrote " + ck_path + " and " + log_path);
    } else if (ev->parsed()) {
        check_output(ev_out, force);
        check_output(ev_trace, force);
        const auto m = load_model(ev_src);
        const auto& eps = episodes_for(*m.ws, ev_split);
        const auto r = aacl::evaluate_policy(m.params, *m.ws, eps, ev_workers, !ev_trace.empty(), ev_n);
        auto out = aacl::metrics_json(r.mean);
        out["split"] = ev_split;
        out["episodes"] = r.per_episode.size();
        std::cout << out.dump() << '\n';
        if (!ev_out.empty()) aacl::write_json_file(ev_out, out, 1);
        if (!ev_trace.empty()) {
            std::vector<json> lines;
            for (const auto& t : r.traces) lines.insert(lines.end(), t.begin(), t.end());
            write_jsonl(ev_trace, lines);
        }
    } else if (tc->parsed()) {
        check_output(tc_out, force);
        const auto m = load_model(tc_src);
        const auto r = aacl::evaluate_policy(m.params, *m.ws, episodes_for(*m.ws, tc_split), 1, true, tc_n);
        std::vector<json> lines;
        for (const auto& t : r.traces) lines.insert(lines.end(), t.begin(), t.end());
        write_jsonl(tc_out, lines);
        log(Level::Info, "wrote " + std::to_string(lines.size()) + " trace records to " + tc_out);
    } else if (mv->parsed()) {
        const auto m = load_model(mv_src);
        const auto& eps = episodes_for(*m.ws, mv_split);
        if (mv_episode >= eps.size()) throw UsageError("--episode out of range for split " + mv_split);
        const auto& [wi, ep] = eps[mv_episode];
        const auto& world = m.ws->data.worlds[wi];
        const int node = mv_node < 0 ? ep.start : mv_node;
        const aacl::Direction prev =
            std::isnan(mv_prev_heading) ? ep.start_heading : aacl::Direction(mv_prev_heading, 0.0);
        const auto pano = aacl::panorama_at(world, node, prev);
        const int view = mv_view < 0 ? pano.candidate_views.front() : mv_view;
        if (view >= static_cast<int>(pano.views.size())) throw UsageError("--view out of range");
        const auto enc = aacl::encode_instruction(ep, m.ws->bank->provider(), m.params.instruction);
        auto cfg = m.ws->config.model;
        if (cfg.mode == aacl::Mode::Separate || cfg.mode == aacl::Mode::Baseline) cfg.mode = aacl::Mode::Full;
        const auto rec = aacl::embed_view(m.params, cfg, *m.ws->bank, pano, view, aacl::NavSlot::Candidate,
                                          aacl::EmbedType::Visual, enc, nullptr);
        json objects = json::array();
        for (std::size_t i = 0; i < rec.bank->topk.size(); ++i)
            objects.push_back({{"label", rec.bank->topk[i].label},
                               {"p", rec.bank->topk[i].probability},
                               {"p_tilde", rec.p_tilde[static_cast<Eigen::Index>(i)]}});
        const auto& v = pano.views[static_cast<std::size_t>(view)];
        json out{{"episode", ep.id},
                 {"instruction", ep.instruction_text()},
                 {"node", node},
                 {"view", view},
                 {"planted_label", v.label},
                 {"navigable", v.navigable},
                 {"heading", v.direction.heading()},
                 {"elevation", v.direction.elevation()},
                 {"action", std::string(aacl::action_phrase(rec.action))},
                 {"objects", objects}};
        std::cout << out.dump(1) << '\n';
    } else if (gc->parsed()) {
        const auto entries = aacl::run_gradient_suite(gc_opt);
        bool ok = true;
        std::cout << std::left << std::setw(34) << "check" << std::right << std::setw(8) << "params" << std::setw(14)
                  << "max rel err" << "  result\n";
        for (const auto& e : entries) {
            const bool pass = e.report.max_rel_error < gc_opt.tol;
            ok = ok && pass;
            std::cout << std::left << std::setw(34) << e.name << std::right << std::setw(8) << e.parameters
                      << std::setw(14) << std::scientific << std::setprecision(3) << e.report.max_rel_error
                      << std::defaultfloat << "  " << (pass ? "pass" : "FAIL") << '\n';
        }
        if (!ok) {
            log(Level::Error, "gradient check failed");
            return 2;
        }
    } else if (fd->parsed()) {
        if (fd_out.empty()) {
            std::cout << kFormatDocs;
        } else {
            check_output(fd_out, force);
            write_text(fd_out, kFormatDocs);
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        log(Level::Error, e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        log(Level::Error, e.what());
        return 1;
    } catch (const std::out_of_range& e) {
        log(Level::Error, e.what());
        return 1;
    } catch (const std::exception& e) {
        log(Level::Error, e.what());
        return 2;
    }
}
