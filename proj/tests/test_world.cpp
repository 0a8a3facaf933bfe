#include <aacl/world.hpp>

#include <gtest/gtest.h>

#include <deque>
#include <set>

using namespace aacl;

namespace {

const std::vector<std::string> kLexicon{"bathroom", "bed",  "bedroom", "closet", "door",  "fireplace",
                                        "hallway",  "kitchen", "lamp", "mirror", "plant", "sink"};

/// Centre node 0 with arms to the north (1), east (2) and west (3).
World cross_world() {
    World w;
    w.n_levels = 1;
    w.nodes = {{0, 0, 0, "hallway"}, {0, 1, 0, "kitchen"}, {1, 0, 0, "bathroom"}, {-1, 0, 0, "bedroom"}};
    w.edges.assign(4, {});
    w.views.assign(4, std::vector<PanoramaView>(kHorizontalViews));
    for (int n = 0; n < 4; ++n)
        for (int v = 0; v < kHorizontalViews; ++v) {
            auto& view = w.views[static_cast<std::size_t>(n)][static_cast<std::size_t>(v)];
            view.direction = Direction(v * kPi / 4, 0);
            view.label = "lamp";
            view.image_id = "cross/n" + std::to_string(n) + "/v" + std::to_string(v);
        }
    auto link = [&](int a, int b, double heading) {
        const int view = static_cast<int>(std::lround(heading / (kPi / 4))) % kHorizontalViews;
        w.edges[static_cast<std::size_t>(a)].push_back({b, Direction(heading, 0), 1.0, view});
        auto& v = w.views[static_cast<std::size_t>(a)][static_cast<std::size_t>(view)];
        v.target = b;
        v.label = w.nodes[static_cast<std::size_t>(b)].room;
    };
    link(0, 1, 0.0);
    link(1, 0, kPi);
    link(0, 2, kPi / 2);
    link(2, 0, 1.5 * kPi);
    link(0, 3, 1.5 * kPi);
    link(3, 0, kPi / 2);
    for (auto& lst : w.edges)
        std::sort(lst.begin(), lst.end(), [](const WorldEdge& x, const WorldEdge& y) { return x.view < y.view; });
    w.compute_distances();
    return w;
}

bool bfs_connected(const World& w) {
    std::vector<bool> seen(w.nodes.size(), false);
    std::deque<int> q{0};
    seen[0] = true;
    while (!q.empty()) {
        const int u = q.front();
        q.pop_front();
        for (const auto& e : w.edges[static_cast<std::size_t>(u)])
            if (!seen[static_cast<std::size_t>(e.to)]) {
                seen[static_cast<std::size_t>(e.to)] = true;
                q.push_back(e.to);
            }
    }
    return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

Episode replay_episode(const World& w, std::vector<int> path, Direction heading) {
    Episode ep;
    ep.id = "hand";
    ep.start = path.front();
    ep.goal = path.back();
    ep.gt_path = path;
    ep.start_heading = heading;
    ep.instruction = describe_path(w, path, heading);
    return ep;
}

}  // namespace

TEST(World, SameSeedSameWorld) {
    const auto a = generate_world(5, 20, 2, kLexicon);
    const auto b = generate_world(5, 20, 2, kLexicon);
    EXPECT_EQ(world_to_json(a), world_to_json(b));
    EXPECT_NE(world_to_json(a), world_to_json(generate_world(6, 20, 2, kLexicon)));
}

TEST(World, SeedZeroTwentyFiveNodesConnectedByBfs) {
    const auto w = generate_world(0, 25, 1, kLexicon);
    EXPECT_EQ(w.size(), 25);
    EXPECT_TRUE(bfs_connected(w));
}

TEST(World, StructuralInvariantsAcrossSeeds) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const int levels = 1 + static_cast<int>(seed % 3);
        const auto w = generate_world(seed, 12 + static_cast<int>(seed % 10), levels, kLexicon);
        ASSERT_TRUE(bfs_connected(w)) << seed;
        for (int u = 0; u < w.size(); ++u) {
            const auto& n = w.nodes[static_cast<std::size_t>(u)];
            std::set<int> views;
            std::set<std::string> labels;
            for (const auto& e : w.edges[static_cast<std::size_t>(u)]) {
                const auto& m = w.nodes[static_cast<std::size_t>(e.to)];
                // direction agrees with coordinates
                const double dx = m.x - n.x, dy = m.y - n.y;
                EXPECT_NEAR(std::sin(e.direction.heading()), dx, 1e-12);
                EXPECT_NEAR(std::cos(e.direction.heading()), dy, 1e-12);
                EXPECT_EQ(e.direction.elevation() > 0, m.level > n.level);
                EXPECT_EQ(e.direction.elevation() < 0, m.level < n.level);
                EXPECT_TRUE(views.insert(e.view).second) << "two edges share a view";
                EXPECT_EQ(w.views[static_cast<std::size_t>(u)][static_cast<std::size_t>(e.view)].target, e.to);
                EXPECT_TRUE(labels.insert(m.room).second) << "candidate labels must be distinct";
                EXPECT_NE(w.edge_between(e.to, u), nullptr);
            }
            std::size_t navigable = 0;
            for (const auto& v : w.views[static_cast<std::size_t>(u)]) navigable += v.navigable();
            EXPECT_EQ(navigable, w.edges[static_cast<std::size_t>(u)].size());
        }
    }
}

TEST(World, SingleLevelNeverProducesUpOrDown) {
    const auto w = generate_world(3, 25, 1, kLexicon);
    for (int u = 0; u < w.size(); ++u)
        for (const auto& e : w.edges[static_cast<std::size_t>(u)])
            for (int v = 0; v < kHorizontalViews; ++v) {
                const auto a = map_action_concept(relative_direction(e.direction, Direction(v * kPi / 4, 0)));
                EXPECT_NE(a, ActionConcept::GoUp);
                EXPECT_NE(a, ActionConcept::GoDown);
            }
    EXPECT_EQ(w.views_per_panorama(), kHorizontalViews);
    EXPECT_EQ(generate_world(3, 25, 2, kLexicon).views_per_panorama(), kHorizontalViews + 2);
}

TEST(World, HeldOutDistractorsStayOffCandidates) {
    WorldOptions opt;
    opt.distractor_lexicon = {"painting", "piano", "rug", "shelf"};
    const auto w = generate_world(9, 16, 2, kLexicon, opt);
    for (const auto& pano : w.views)
        for (const auto& v : pano) {
            const bool held = std::find(opt.distractor_lexicon.begin(), opt.distractor_lexicon.end(), v.label) !=
                              opt.distractor_lexicon.end();
            EXPECT_EQ(held, !v.navigable());
        }
}

TEST(World, ParameterErrors) {
    EXPECT_THROW(generate_world(0, 3, 1, kLexicon), std::invalid_argument);
    EXPECT_THROW(generate_world(0, 10, 1, {"a", "b"}), std::invalid_argument);
    EXPECT_THROW(generate_world(0, 5, 3, kLexicon), std::invalid_argument);
    EXPECT_THROW(generate_world(0, 10, 0, kLexicon), std::invalid_argument);
}

TEST(World, JsonRoundTrip) {
    const auto w = generate_world(4, 18, 2, kLexicon);
    const auto j = world_to_json(w);
    const auto back = world_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(world_to_json(back), j);
    EXPECT_EQ(back.distance, w.distance);
    auto broken = j;
    broken["nodes"][0]["edges"][0]["view"] = 7 == j["nodes"][0]["edges"][0]["view"] ? 6 : 7;
    EXPECT_THROW(world_from_json(broken), std::invalid_argument);
}

TEST(Panorama, CrossGraphRelativeDirections) {
    const auto w = cross_world();
    // facing east: north is a left turn, east straight ahead, west behind
    const auto pano = panorama_at(w, 0, Direction(kPi / 2, 0));
    ASSERT_EQ(pano.candidate_views, (std::vector<int>{0, 2, 6}));
    EXPECT_EQ(pano.candidate_count(), 4u);
    EXPECT_EQ(pano.stop_index(), 3u);
    const std::vector<double> expected{-kPi / 2, 0.0, kPi};
    const std::vector<ActionConcept> actions{ActionConcept::TurnLeft, ActionConcept::GoForward, ActionConcept::GoBack};
    for (std::size_t c = 0; c < 3; ++c) {
        const auto r = relative_direction(pano.views[static_cast<std::size_t>(pano.candidate_views[c])].direction,
                                          pano.prev_selected);
        EXPECT_NEAR(r.dheading, expected[c], 1e-15);
        EXPECT_EQ(map_action_concept(r), actions[c]);
    }
}

TEST(Panorama, EqualHeadingSpacingAndStopCount) {
    const auto w = generate_world(2, 16, 1, kLexicon);
    for (int u = 0; u < w.size(); ++u) {
        const auto pano = panorama_at(w, u, Direction());
        EXPECT_EQ(pano.candidate_count(), w.edges[static_cast<std::size_t>(u)].size() + 1);
        for (int v = 0; v < kHorizontalViews; ++v)
            EXPECT_NEAR(pano.views[static_cast<std::size_t>(v)].direction.heading(), v * kPi / 4, 1e-12);
    }
    EXPECT_THROW(panorama_at(w, 99, Direction()), std::out_of_range);
}

TEST(Step, MoveStopAndErrors) {
    const auto w = cross_world();
    NavState s;
    s.node = 0;
    s.prev_selected = Direction(kPi / 2, 0);
    s.visited = {0};
    auto moved = step(w, s, 1);  // east
    EXPECT_EQ(moved.node, 2);
    EXPECT_EQ(moved.prev_selected, Direction(kPi / 2, 0));
    EXPECT_DOUBLE_EQ(moved.length, 1.0);
    moved = step(w, moved, 0);  // back to centre
    EXPECT_DOUBLE_EQ(moved.length, 2.0);
    EXPECT_EQ(moved.visited, (std::vector<int>{0, 2, 0}));
    const auto stopped = step(w, moved, panorama_at(w, 0, moved.prev_selected).stop_index());
    EXPECT_TRUE(stopped.stopped);
    EXPECT_EQ(stopped.node, 0);
    EXPECT_THROW(step(w, stopped, 0), std::logic_error);
    EXPECT_THROW(step(w, s, 4), std::out_of_range);
}

TEST(Episode, ForwardTemplate) {
    const auto w = cross_world();
    const auto ep = replay_episode(w, {0, 1}, Direction(0, 0));
    ASSERT_EQ(ep.instruction.size(), 2u);
    EXPECT_EQ(ep.instruction[0].text(), "go forward to the kitchen.");
    EXPECT_EQ(ep.instruction_text(), "go forward to the kitchen. stop.");
    const auto back = replay_episode(w, {2, 0, 3}, Direction(0, 0));
    EXPECT_EQ(back.instruction_text(), "turn left to the hallway. go forward to the bedroom. stop.");
}

TEST(Episode, GeneratedInvariants) {
    for (std::uint64_t ws = 0; ws < 5; ++ws) {
        const auto w = generate_world(ws, 16, 2, kLexicon);
        for (std::uint64_t s = 0; s < 40; ++s) {
            const auto ep = generate_episode(w, s, 6);
            ASSERT_GE(ep.gt_path.size(), 3u);
            ASSERT_LE(ep.gt_path.size(), 6u);
            EXPECT_EQ(ep.gt_path.front(), ep.start);
            EXPECT_EQ(ep.gt_path.back(), ep.goal);
            EXPECT_EQ(ep.instruction.size(), ep.gt_path.size());
            EXPECT_EQ(ep.instruction.back().action, ActionConcept::Stop);
            EXPECT_EQ(std::set<int>(ep.gt_path.begin(), ep.gt_path.end()).size(), ep.gt_path.size());
            // faithfulness, checked independently of describe_path
            Direction heading = ep.start_heading;
            for (std::size_t i = 1; i < ep.gt_path.size(); ++i) {
                const auto* e = w.edge_between(ep.gt_path[i - 1], ep.gt_path[i]);
                ASSERT_NE(e, nullptr);
                EXPECT_EQ(ep.instruction[i - 1].action, map_action_concept(relative_direction(e->direction, heading)));
                EXPECT_EQ(ep.instruction[i - 1].label, w.nodes[static_cast<std::size_t>(ep.gt_path[i])].room);
                heading = e->direction;
            }
        }
    }
}

TEST(Episode, DeterministicAndRoundTrips) {
    const auto w = generate_world(1, 16, 2, kLexicon);
    const auto a = generate_episode(w, 0, 5, Split::ValSeenLike);
    const auto b = generate_episode(w, 0, 5, Split::ValSeenLike);
    EXPECT_EQ(episode_to_json(a), episode_to_json(b));
    const auto back = episode_from_json(nlohmann::json::parse(episode_to_json(a).dump()));
    EXPECT_EQ(episode_to_json(back), episode_to_json(a));
    EXPECT_EQ(back.split, Split::ValSeenLike);
    EXPECT_THROW(generate_episode(w, 0, 1), std::invalid_argument);
}

TEST(Episode, TeacherReplaySucceedsOnThousandEpisodes) {
    int episodes = 0;
    for (std::uint64_t ws = 0; ws < 10; ++ws) {
        const auto w = generate_world(100 + ws, 16, 1 + static_cast<int>(ws % 2), kLexicon);
        for (std::uint64_t s = 0; s < 100; ++s, ++episodes) {
            const auto ep = generate_episode(w, s, 5);
            NavState st = initial_state(ep);
            for (std::size_t t = 0; !st.stopped; ++t) st = step(w, st, teacher_candidate(w, panorama_at(w, st.node, st.prev_selected), ep, t));
            const auto m = evaluate_trajectory(w, st.visited, ep);
            ASSERT_EQ(m.sr, 1.0);
            ASSERT_EQ(m.spl, 1.0);
            ASSERT_EQ(m.ne, 0.0);
        }
    }
    EXPECT_EQ(episodes, 1000);
}

TEST(Metrics, FormulaCases) {
    const auto w = cross_world();
    const auto ep = replay_episode(w, {1, 0, 2}, Direction(kPi, 0));
    auto m = evaluate_trajectory(w, {1, 0, 2}, ep);
    EXPECT_EQ(m.ne, 0.0);
    EXPECT_EQ(m.tl, 2.0);
    EXPECT_EQ(m.sr, 1.0);
    EXPECT_EQ(m.spl, 1.0);
    m = evaluate_trajectory(w, {1, 0, 3, 0, 2}, ep);
    EXPECT_EQ(m.tl, 4.0);
    EXPECT_EQ(m.sr, 1.0);
    EXPECT_EQ(m.spl, 0.5);
    m = evaluate_trajectory(w, {1}, ep);
    EXPECT_EQ(m.sr, 0.0);
    EXPECT_EQ(m.spl, 0.0);
    EXPECT_EQ(m.ne, 2.0);
    m = evaluate_trajectory(w, {1, 0}, ep, 1.0);
    EXPECT_EQ(m.sr, 1.0);  // within the success radius
    EXPECT_EQ(m.spl, 1.0);
    EXPECT_THROW(evaluate_trajectory(w, std::vector<int>{}, ep), std::invalid_argument);
    EXPECT_THROW(evaluate_trajectory(w, {1, 2}, ep), std::invalid_argument);
}

TEST(Metrics, SplBoundedBySuccess) {
    const auto w = generate_world(7, 16, 2, kLexicon);
    std::mt19937_64 rng(1);
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto ep = generate_episode(w, s, 5);
        NavState st = initial_state(ep);
        while (!st.stopped && st.steps < 8)
            st = step(w, st, rng() % panorama_at(w, st.node, st.prev_selected).candidate_count());
        const auto m = evaluate_trajectory(w, st.visited, ep);
        EXPECT_LE(m.spl, m.sr);
        EXPECT_LE(m.sr, 1.0);
        EXPECT_GE(m.spl, 0.0);
    }
    const auto mean = mean_metrics({{1, 2, 1, 1}, {3, 4, 0, 0}});
    EXPECT_EQ(mean.ne, 2.0);
    EXPECT_EQ(mean.sr, 0.5);
}

TEST(Split, Names) {
    for (auto s : {Split::Train, Split::ValSeenLike, Split::ValUnseenLike}) EXPECT_EQ(parse_split(split_name(s)), s);
    EXPECT_THROW(parse_split("test"), std::invalid_argument);
}
