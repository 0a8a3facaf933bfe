#pragma once

// Procedural viewpoint-graph worlds for instruction following.
//
// Nodes sit on per-level grids; same-level neighbours are joined by unit
// edges, levels by stair edges with +/- pi/4 elevation.  Every node carries a
// panorama of 8 horizontal views (plus an up and a down view in multi-level
// worlds); a navigable neighbour is visible in exactly one view, labelled with
// that neighbour's room label.

#include <aacl/concept.hpp>
#include <aacl/rng.hpp>
#include <aacl/types.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace aacl {

inline constexpr int kHorizontalViews = 8;
inline constexpr int kUpView = 8;
inline constexpr int kDownView = 9;
inline constexpr double kStairElevation = kPi / 4;

struct WorldNode {
    int x = 0;
    int y = 0;
    int level = 0;
    std::string room;  // label shown on views looking at this node
};

struct WorldEdge {
    int to = -1;
    Direction direction;
    double length = 1.0;
    int view = -1;  // view index at the source node that shows this edge
};

struct PanoramaView {
    Direction direction;
    std::string label;
    int target = -1;  // neighbour node when navigable
    std::string image_id;

    bool navigable() const { return target >= 0; }
};

struct World {
    std::uint64_t seed = 0;
    int n_levels = 1;
    std::vector<WorldNode> nodes;
    std::vector<std::vector<WorldEdge>> edges;
    std::vector<std::vector<PanoramaView>> views;
    std::vector<std::vector<double>> distance;  // all-pairs shortest path lengths

    int size() const { return static_cast<int>(nodes.size()); }
    int views_per_panorama() const { return n_levels > 1 ? kHorizontalViews + 2 : kHorizontalViews; }

    const WorldEdge* edge_between(int a, int b) const {
        for (const auto& e : edges.at(static_cast<std::size_t>(a)))
            if (e.to == b) return &e;
        return nullptr;
    }

    void compute_distances() {
        const auto n = nodes.size();
        distance.assign(n, std::vector<double>(n, std::numeric_limits<double>::infinity()));
        for (std::size_t s = 0; s < n; ++s) {
            using Item = std::pair<double, int>;
            std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
            distance[s][s] = 0.0;
            pq.emplace(0.0, static_cast<int>(s));
            while (!pq.empty()) {
                auto [d, u] = pq.top();
                pq.pop();
                if (d > distance[s][static_cast<std::size_t>(u)]) continue;
                for (const auto& e : edges[static_cast<std::size_t>(u)]) {
                    const double nd = d + e.length;
                    if (nd < distance[s][static_cast<std::size_t>(e.to)]) {
                        distance[s][static_cast<std::size_t>(e.to)] = nd;
                        pq.emplace(nd, e.to);
                    }
                }
            }
        }
    }

    bool connected() const {
        if (nodes.empty()) return false;
        std::vector<bool> seen(nodes.size(), false);
        std::deque<int> q{0};
        seen[0] = true;
        std::size_t count = 1;
        while (!q.empty()) {
            const int u = q.front();
            q.pop_front();
            for (const auto& e : edges[static_cast<std::size_t>(u)])
                if (!seen[static_cast<std::size_t>(e.to)]) {
                    seen[static_cast<std::size_t>(e.to)] = true;
                    ++count;
                    q.push_back(e.to);
                }
        }
        return count == nodes.size();
    }
};

struct WorldOptions {
    /// Labels for non-navigable views; empty means "use the main lexicon".
    std::vector<std::string> distractor_lexicon;
    double edge_deletion_prob = 0.3;
};

namespace detail {

inline double grid_heading(int dx, int dy) {
    if (dx == 0 && dy == 1) return 0.0;
    if (dx == 1 && dy == 0) return kPi / 2;
    if (dx == 0 && dy == -1) return kPi;
    return 3 * kPi / 2;
}

inline int heading_view(double heading) {
    return static_cast<int>(std::lround(heading / (kPi / 4))) % kHorizontalViews;
}

}  // namespace detail

inline World generate_world(std::uint64_t seed, int n_nodes, int n_levels, const std::vector<std::string>& lexicon,
                            const WorldOptions& options = {}) {
    if (n_nodes < 4) throw std::invalid_argument("generate_world: n_nodes must be >= 4");
    if (n_levels < 1) throw std::invalid_argument("generate_world: n_levels must be >= 1");
    if (lexicon.size() < 4) throw std::invalid_argument("generate_world: lexicon needs at least 4 labels");
    if (n_nodes < 2 * n_levels)
        throw std::invalid_argument("generate_world: " + std::to_string(n_nodes) + " nodes cannot span " +
                                    std::to_string(n_levels) + " connected levels");
    auto rng = make_stream(seed, "world");
    World w;
    w.seed = seed;
    w.n_levels = n_levels;

    const int per_level_max = (n_nodes + n_levels - 1) / n_levels;
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(per_level_max))));
    std::map<std::tuple<int, int, int>, int> at;
    for (int l = 0, placed = 0; l < n_levels; ++l) {
        const int count = n_nodes / n_levels + (l < n_nodes % n_levels ? 1 : 0);
        for (int i = 0; i < count; ++i, ++placed) {
            w.nodes.push_back({i % cols, i / cols, l, ""});
            at[{i % cols, i / cols, l}] = placed;
        }
    }
    w.edges.assign(w.nodes.size(), {});

    auto add_edge = [&](int a, int b, int dx, int dy, int dlevel) {
        const double heading = detail::grid_heading(dx, dy);
        const double elev = dlevel * kStairElevation;
        const double len = dlevel == 0 ? 1.0 : std::sqrt(2.0);
        const int view = dlevel == 0 ? detail::heading_view(heading) : (dlevel > 0 ? kUpView : kDownView);
        w.edges[static_cast<std::size_t>(a)].push_back({b, Direction(heading, elev), len, view});
    };

    // same-level 4-neighbour grid
    std::vector<std::pair<int, int>> level_edges;
    for (int u = 0; u < w.size(); ++u) {
        const auto& n = w.nodes[static_cast<std::size_t>(u)];
        for (auto [dx, dy] : {std::pair{1, 0}, std::pair{0, 1}}) {
            auto it = at.find({n.x + dx, n.y + dy, n.level});
            if (it == at.end()) continue;
            add_edge(u, it->second, dx, dy, 0);
            add_edge(it->second, u, -dx, -dy, 0);
            level_edges.emplace_back(u, it->second);
        }
    }

    // stairs: one or two per level boundary, at most one up and one down per node
    std::vector<bool> has_up(w.nodes.size(), false), has_down(w.nodes.size(), false);
    for (int l = 0; l + 1 < n_levels; ++l) {
        std::vector<std::tuple<int, int, int, int>> options_list;
        for (int u = 0; u < w.size(); ++u) {
            const auto& n = w.nodes[static_cast<std::size_t>(u)];
            if (n.level != l) continue;
            for (auto [dx, dy] : {std::pair{1, 0}, std::pair{-1, 0}, std::pair{0, 1}, std::pair{0, -1}}) {
                auto it = at.find({n.x + dx, n.y + dy, l + 1});
                if (it != at.end()) options_list.emplace_back(u, it->second, dx, dy);
            }
        }
        if (options_list.empty())
            throw std::invalid_argument("generate_world: no stair position between levels " + std::to_string(l) +
                                        " and " + std::to_string(l + 1));
        std::shuffle(options_list.begin(), options_list.end(), rng);
        const int want = 1 + static_cast<int>(rng() % 2);
        int made = 0;
        for (auto [u, v, dx, dy] : options_list) {
            if (made == want) break;
            if (has_up[static_cast<std::size_t>(u)] || has_down[static_cast<std::size_t>(v)]) continue;
            add_edge(u, v, dx, dy, 1);
            add_edge(v, u, -dx, -dy, -1);
            has_up[static_cast<std::size_t>(u)] = true;
            has_down[static_cast<std::size_t>(v)] = true;
            ++made;
        }
    }
    if (!w.connected()) throw std::invalid_argument("generate_world: parameters admit no connected graph");

    // random deletions that keep the graph connected
    std::shuffle(level_edges.begin(), level_edges.end(), rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto erase = [&](int a, int b) {
        auto& lst = w.edges[static_cast<std::size_t>(a)];
        auto it = std::find_if(lst.begin(), lst.end(), [&](const WorldEdge& e) { return e.to == b; });
        WorldEdge removed = *it;
        lst.erase(it);
        return removed;
    };
    for (auto [a, b] : level_edges) {
        if (unit(rng) >= options.edge_deletion_prob) continue;
        const auto ab = erase(a, b);
        const auto ba = erase(b, a);
        if (!w.connected()) {
            w.edges[static_cast<std::size_t>(a)].push_back(ab);
            w.edges[static_cast<std::size_t>(b)].push_back(ba);
        }
    }
    for (auto& lst : w.edges)
        std::sort(lst.begin(), lst.end(), [](const WorldEdge& x, const WorldEdge& y) { return x.view < y.view; });

    // room labels: nodes within graph distance 2 get distinct labels, so the
    // navigable views of every panorama are pairwise distinct.
    std::vector<std::set<int>> near(w.nodes.size());
    for (int u = 0; u < w.size(); ++u)
        for (const auto& e1 : w.edges[static_cast<std::size_t>(u)]) {
            near[static_cast<std::size_t>(u)].insert(e1.to);
            for (const auto& e2 : w.edges[static_cast<std::size_t>(e1.to)])
                if (e2.to != u) near[static_cast<std::size_t>(u)].insert(e2.to);
        }
    bool labelled = false;
    for (int attempt = 0; attempt < 64 && !labelled; ++attempt) {
        std::vector<int> order(w.nodes.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (auto& n : w.nodes) n.room.clear();
        labelled = true;
        for (int u : order) {
            std::vector<std::string> allowed;
            for (const auto& l : lexicon) {
                bool clash = false;
                for (int v : near[static_cast<std::size_t>(u)])
                    if (w.nodes[static_cast<std::size_t>(v)].room == l) clash = true;
                if (!clash) allowed.push_back(l);
            }
            if (allowed.empty()) {
                labelled = false;
                break;
            }
            w.nodes[static_cast<std::size_t>(u)].room = allowed[rng() % allowed.size()];
        }
    }
    if (!labelled) throw std::invalid_argument("generate_world: lexicon too small to label the graph");

    // panoramas
    const auto& distractors = options.distractor_lexicon.empty() ? lexicon : options.distractor_lexicon;
    w.views.assign(w.nodes.size(), {});
    for (int u = 0; u < w.size(); ++u) {
        auto& pano = w.views[static_cast<std::size_t>(u)];
        pano.resize(static_cast<std::size_t>(w.views_per_panorama()));
        for (int v = 0; v < kHorizontalViews; ++v) pano[static_cast<std::size_t>(v)].direction = Direction(v * kPi / 4, 0.0);
        if (n_levels > 1) {
            pano[kUpView].direction = Direction(0.0, kStairElevation);
            pano[kDownView].direction = Direction(0.0, -kStairElevation);
        }
        std::set<std::string> used;
        for (const auto& e : w.edges[static_cast<std::size_t>(u)]) {
            auto& view = pano[static_cast<std::size_t>(e.view)];
            view.direction = e.direction;
            view.target = e.to;
            view.label = w.nodes[static_cast<std::size_t>(e.to)].room;
            used.insert(view.label);
        }
        std::vector<std::string> pool;
        for (const auto& l : distractors)
            if (!used.count(l)) pool.push_back(l);
        if (pool.empty()) pool = distractors;
        for (std::size_t v = 0; v < pano.size(); ++v) {
            auto& view = pano[v];
            if (!view.navigable()) view.label = pool[rng() % pool.size()];
            view.image_id = "w" + std::to_string(seed) + "/n" + std::to_string(u) + "/v" + std::to_string(v);
        }
    }
    w.compute_distances();
    return w;
}

// ---------------------------------------------------------------------------
// episodes

enum class Split { Train, ValSeenLike, ValUnseenLike };

inline std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::ValSeenLike: return "val_seen_like";
        case Split::ValUnseenLike: return "val_unseen_like";
    }
    throw std::logic_error("split_name");
}

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val_seen_like") return Split::ValSeenLike;
    if (s == "val_unseen_like") return Split::ValUnseenLike;
    throw std::invalid_argument("unknown split \"" + s + "\" (expected train, val_seen_like, val_unseen_like)");
}

struct InstructionStep {
    ActionConcept action = ActionConcept::Stop;
    std::string label;  // empty for the final stop step

    std::string text() const {
        if (action == ActionConcept::Stop) return "stop.";
        return std::string(action_phrase(action)) + " to the " + label + ".";
    }
};

struct Episode {
    std::string id;
    std::vector<InstructionStep> instruction;  // transitions, then a final stop step
    int start = -1;
    int goal = -1;
    std::vector<int> gt_path;
    Direction start_heading;
    Split split = Split::Train;

    std::string instruction_text() const {
        std::string out;
        for (const auto& s : instruction) {
            if (!out.empty()) out += ' ';
            out += s.text();
        }
        return out;
    }
};

inline double path_length(const World& w, const std::vector<int>& path) {
    double total = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        const auto* e = w.edge_between(path[i - 1], path[i]);
        if (e == nullptr)
            throw std::invalid_argument("path_length: nodes " + std::to_string(path[i - 1]) + " and " +
                                        std::to_string(path[i]) + " are not adjacent");
        total += e->length;
    }
    return total;
}

/// Instruction steps for a path, starting from the given heading.  Throws if
/// the instruction would not be faithful to the path.
inline std::vector<InstructionStep> describe_path(const World& w, const std::vector<int>& path, Direction heading) {
    std::vector<InstructionStep> steps;
    for (std::size_t i = 1; i < path.size(); ++i) {
        const auto* e = w.edge_between(path[i - 1], path[i]);
        if (e == nullptr) throw std::invalid_argument("describe_path: path is not connected");
        const auto& view = w.views[static_cast<std::size_t>(path[i - 1])][static_cast<std::size_t>(e->view)];
        const auto action = map_action_concept(relative_direction(e->direction, heading));
        if (view.target != path[i]) throw std::logic_error("describe_path: view/edge mismatch");
        steps.push_back({action, view.label});
        heading = e->direction;
    }
    steps.push_back({ActionConcept::Stop, ""});
    return steps;
}

inline Episode generate_episode(const World& w, std::uint64_t seed, int max_len, Split split = Split::Train) {
    if (max_len < 2) throw std::invalid_argument("generate_episode: max_len must be >= 2");
    auto rng = make_stream(seed, "episode");
    const int min_len = std::min(3, max_len);
    for (int attempt = 0; attempt < 200; ++attempt) {
        const int len = min_len + static_cast<int>(rng() % static_cast<std::uint64_t>(max_len - min_len + 1));
        std::vector<int> path{static_cast<int>(rng() % static_cast<std::uint64_t>(w.size()))};
        std::set<int> visited{path[0]};
        while (static_cast<int>(path.size()) < len) {
            std::vector<int> next;
            for (const auto& e : w.edges[static_cast<std::size_t>(path.back())])
                if (!visited.count(e.to)) next.push_back(e.to);
            if (next.empty()) break;
            const int n = next[rng() % next.size()];
            path.push_back(n);
            visited.insert(n);
        }
        if (static_cast<int>(path.size()) != len) continue;
        Episode ep;
        ep.split = split;
        ep.start = path.front();
        ep.goal = path.back();
        ep.gt_path = path;
        ep.start_heading = Direction(static_cast<double>(rng() % kHorizontalViews) * kPi / 4, 0.0);
        ep.instruction = describe_path(w, path, ep.start_heading);
        ep.id = split_name(split) + "/w" + std::to_string(w.seed) + "/e" + std::to_string(seed);
        return ep;
    }
    throw std::runtime_error("generate_episode: no simple path of length <= " + std::to_string(max_len) +
                             " found after bounded retries");
}

// ---------------------------------------------------------------------------
// panorama, stepping, metrics

struct Panorama {
    int node = -1;
    Direction prev_selected;
    std::vector<ObservationView> views;
    std::vector<int> candidate_views;  // navigable view indices; the stop candidate follows them

    std::size_t candidate_count() const { return candidate_views.size() + 1; }
    std::size_t stop_index() const { return candidate_views.size(); }
};

inline Panorama panorama_at(const World& w, int node, const Direction& prev_selected) {
    if (node < 0 || node >= w.size()) throw std::out_of_range("panorama_at: unknown node " + std::to_string(node));
    Panorama p;
    p.node = node;
    p.prev_selected = prev_selected;
    const auto& pano = w.views[static_cast<std::size_t>(node)];
    for (std::size_t v = 0; v < pano.size(); ++v) {
        p.views.push_back({pano[v].image_id, pano[v].label, pano[v].direction, pano[v].navigable()});
        if (pano[v].navigable()) p.candidate_views.push_back(static_cast<int>(v));
    }
    return p;
}

struct NavState {
    int node = -1;
    Direction prev_selected;
    int steps = 0;
    bool stopped = false;
    std::vector<int> visited;
    std::vector<int> chosen;  // candidate index per step
    double length = 0.0;
};

inline NavState initial_state(const Episode& ep) {
    NavState s;
    s.node = ep.start;
    s.prev_selected = ep.start_heading;
    s.visited = {ep.start};
    return s;
}

inline NavState step(const World& w, NavState state, std::size_t candidate) {
    if (state.stopped) throw std::logic_error("step: episode already stopped");
    const auto pano = panorama_at(w, state.node, state.prev_selected);
    if (candidate > pano.stop_index())
        throw std::out_of_range("step: candidate " + std::to_string(candidate) + " is not navigable at node " +
                                std::to_string(state.node));
    state.chosen.push_back(static_cast<int>(candidate));
    ++state.steps;
    if (candidate == pano.stop_index()) {
        state.stopped = true;
        return state;
    }
    const auto& view = w.views[static_cast<std::size_t>(state.node)][static_cast<std::size_t>(pano.candidate_views[candidate])];
    state.length += w.edge_between(state.node, view.target)->length;
    state.node = view.target;
    state.prev_selected = view.direction;
    state.visited.push_back(state.node);
    return state;
}

/// Candidate index of the teacher action (next gt node, or stop at the goal).
inline std::size_t teacher_candidate(const World& w, const Panorama& pano, const Episode& ep, std::size_t step_index) {
    if (step_index + 1 >= ep.gt_path.size()) return pano.stop_index();
    const int next = ep.gt_path[step_index + 1];
    for (std::size_t c = 0; c < pano.candidate_views.size(); ++c)
        if (w.views[static_cast<std::size_t>(pano.node)][static_cast<std::size_t>(pano.candidate_views[c])].target == next)
            return c;
    throw std::logic_error("teacher_candidate: gt path leaves the graph");
}

struct TrajectoryRecord {
    std::vector<int> visited;
    std::vector<int> chosen;
    std::vector<ActionalAtomicConcept> concepts;
    bool stopped = false;
};

struct NavMetrics {
    double ne = 0.0;
    double tl = 0.0;
    double sr = 0.0;
    double spl = 0.0;
};

inline NavMetrics evaluate_trajectory(const World& w, const std::vector<int>& visited, const Episode& ep,
                                      double success_radius = 0.0) {
    if (visited.empty()) throw std::invalid_argument("evaluate_trajectory: empty trajectory");
    NavMetrics m;
    m.ne = w.distance.at(static_cast<std::size_t>(visited.back())).at(static_cast<std::size_t>(ep.goal));
    m.tl = path_length(w, visited);
    m.sr = m.ne <= success_radius ? 1.0 : 0.0;
    const double gt = path_length(w, ep.gt_path);
    m.spl = m.sr * gt / std::max(gt, m.tl);
    return m;
}

inline NavMetrics evaluate_trajectory(const World& w, const TrajectoryRecord& traj, const Episode& ep,
                                      double success_radius = 0.0) {
    return evaluate_trajectory(w, traj.visited, ep, success_radius);
}

inline NavMetrics mean_metrics(const std::vector<NavMetrics>& all) {
    NavMetrics m;
    if (all.empty()) return m;
    for (const auto& x : all) {
        m.ne += x.ne;
        m.tl += x.tl;
        m.sr += x.sr;
        m.spl += x.spl;
    }
    const double n = static_cast<double>(all.size());
    m.ne /= n;
    m.tl /= n;
    m.sr /= n;
    m.spl /= n;
    return m;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json world_to_json(const World& w) {
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t i = 0; i < w.nodes.size(); ++i) {
        const auto& n = w.nodes[i];
        nlohmann::json views = nlohmann::json::array();
        for (const auto& v : w.views[i])
            views.push_back({{"heading", v.direction.heading()},
                             {"elevation", v.direction.elevation()},
                             {"label", v.label},
                             {"target", v.target},
                             {"image_id", v.image_id}});
        nlohmann::json edges = nlohmann::json::array();
        for (const auto& e : w.edges[i])
            edges.push_back({{"to", e.to},
                             {"heading", e.direction.heading()},
                             {"elevation", e.direction.elevation()},
                             {"length", e.length},
                             {"view", e.view}});
        nodes.push_back({{"x", n.x}, {"y", n.y}, {"level", n.level}, {"room", n.room}, {"edges", edges}, {"views", views}});
    }
    return {{"seed", w.seed}, {"n_levels", w.n_levels}, {"nodes", nodes}};
}

inline World world_from_json(const nlohmann::json& j) {
    World w;
    w.seed = j.at("seed").get<std::uint64_t>();
    w.n_levels = j.at("n_levels").get<int>();
    for (const auto& n : j.at("nodes")) {
        w.nodes.push_back({n.at("x").get<int>(), n.at("y").get<int>(), n.at("level").get<int>(),
                           n.at("room").get<std::string>()});
        std::vector<WorldEdge> edges;
        for (const auto& e : n.at("edges"))
            edges.push_back({e.at("to").get<int>(),
                             Direction(e.at("heading").get<double>(), e.at("elevation").get<double>()),
                             e.at("length").get<double>(), e.at("view").get<int>()});
        w.edges.push_back(std::move(edges));
        std::vector<PanoramaView> views;
        for (const auto& v : n.at("views"))
            views.push_back({Direction(v.at("heading").get<double>(), v.at("elevation").get<double>()),
                             v.at("label").get<std::string>(), v.at("target").get<int>(),
                             v.at("image_id").get<std::string>()});
        w.views.push_back(std::move(views));
    }
    for (std::size_t u = 0; u < w.edges.size(); ++u)
        for (const auto& e : w.edges[u]) {
            if (e.to < 0 || e.to >= w.size()) throw std::invalid_argument("world: edge to unknown node");
            if (e.view < 0 || e.view >= static_cast<int>(w.views[u].size()) || w.views[u][static_cast<std::size_t>(e.view)].target != e.to)
                throw std::invalid_argument("world: edge from node " + std::to_string(u) + " has no matching view");
        }
    if (!w.connected()) throw std::invalid_argument("world: graph is not connected");
    w.compute_distances();
    return w;
}

inline nlohmann::json episode_to_json(const Episode& ep) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : ep.instruction) steps.push_back({{"action", action_phrase(s.action)}, {"object", s.label}});
    return {{"id", ep.id},
            {"split", split_name(ep.split)},
            {"start", ep.start},
            {"goal", ep.goal},
            {"gt_path", ep.gt_path},
            {"start_heading", ep.start_heading.heading()},
            {"start_elevation", ep.start_heading.elevation()},
            {"instruction", ep.instruction_text()},
            {"steps", steps}};
}

inline Episode episode_from_json(const nlohmann::json& j) {
    Episode ep;
    ep.id = j.at("id").get<std::string>();
    ep.split = parse_split(j.at("split").get<std::string>());
    ep.start = j.at("start").get<int>();
    ep.goal = j.at("goal").get<int>();
    ep.gt_path = j.at("gt_path").get<std::vector<int>>();
    ep.start_heading = Direction(j.at("start_heading").get<double>(), j.value("start_elevation", 0.0));
    for (const auto& s : j.at("steps"))
        ep.instruction.push_back({parse_action(s.at("action").get<std::string>()), s.at("object").get<std::string>()});
    return ep;
}

}  // namespace aacl
