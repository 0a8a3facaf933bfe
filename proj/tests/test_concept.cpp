#include "oracles.hpp"

#include <aacl/concept.hpp>
#include <aacl/embedding.hpp>

#include <gtest/gtest.h>

using namespace aacl;
using A = ActionConcept;

namespace {

/// Store whose "a photo of a <label>" vectors have prescribed cosine with e0.
EmbeddingStore store_with_sims(const std::vector<std::string>& labels, const std::vector<double>& sims) {
    const int dim = static_cast<int>(labels.size()) + 1;
    EmbeddingStore s(dim);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        Vector v = Vector::Zero(dim);
        v[0] = sims[i];
        v[static_cast<Eigen::Index>(i) + 1] = std::sqrt(1.0 - sims[i] * sims[i]);
        s.add_text(prompt_for(labels[i]), v);
    }
    return s;
}

Vector e0(int dim) {
    Vector v = Vector::Zero(dim);
    v[0] = 1.0;
    return v;
}

}  // namespace

TEST(RelativeDirection, Examples) {
    auto r = relative_direction({kPi / 2, 0}, {0, 0});
    EXPECT_DOUBLE_EQ(r.dheading, kPi / 2);
    EXPECT_DOUBLE_EQ(r.delevation, 0.0);
    r = relative_direction({0, 0}, {1.5 * kPi, 0});
    EXPECT_DOUBLE_EQ(r.dheading, -1.5 * kPi);
    r = relative_direction({1.0, 0.2}, {1.0, 0.2});
    EXPECT_EQ(r.dheading, 0.0);
    EXPECT_EQ(r.delevation, 0.0);
    r = relative_direction({0, kPi / 2}, {0, -kPi / 2});
    EXPECT_DOUBLE_EQ(r.delevation, kPi);
}

TEST(ActionTable, Examples) {
    EXPECT_EQ(map_action_concept({kPi / 4, 0}), A::TurnRight);
    EXPECT_EQ(map_action_concept({kPi, 0.3}), A::GoUp);
    EXPECT_EQ(map_action_concept({0, 0}), A::GoForward);
    EXPECT_EQ(map_action_concept({-7 * kPi / 4, 0}), A::TurnRight);
    EXPECT_EQ(map_action_concept({kPi, -0.01}), A::GoDown);
}

TEST(ActionTable, ColumnBoundaries) {
    EXPECT_EQ(map_action_concept({-1.5 * kPi, 0}), A::TurnRight);
    EXPECT_EQ(map_action_concept({-0.5 * kPi, 0}), A::TurnLeft);
    EXPECT_EQ(map_action_concept({0.5 * kPi, 0}), A::TurnRight);
    EXPECT_EQ(map_action_concept({1.5 * kPi, 0}), A::TurnLeft);
    EXPECT_EQ(map_action_concept({kPi, 0}), A::GoBack);
    EXPECT_EQ(map_action_concept({-kPi, 0}), A::GoBack);
    EXPECT_EQ(map_action_concept({-1e-12, 0}), A::TurnLeft);
    EXPECT_EQ(map_action_concept({1e-12, 0}), A::TurnRight);
}

TEST(ActionTable, OutOfRangeIsAnError) {
    EXPECT_THROW(map_action_concept({kTwoPi, 0}), std::invalid_argument);
    EXPECT_THROW(map_action_concept({-kTwoPi, 0}), std::invalid_argument);
    EXPECT_THROW(map_action_concept({0, 3.2}), std::invalid_argument);
    EXPECT_THROW(map_action_concept({std::nan(""), 0}), std::invalid_argument);
}

TEST(ActionTable, TotalOverValidDirectionPairs) {
    // every pair of grid Directions yields a mapped action that matches the brute-force table
    for (double h1 = 0; h1 < kTwoPi; h1 += 0.05)
        for (double h2 = 0; h2 < kTwoPi; h2 += 0.05)
            for (double e : {-0.7, 0.0, 0.7}) {
                const auto r = relative_direction({h1, e}, {h2, 0.0});
                EXPECT_EQ(map_action_concept(r), oracle::action_concept(r.dheading, r.delevation));
            }
}

TEST(ActionPhrases, RoundTrip) {
    for (auto a : kAllActions) EXPECT_EQ(parse_action(action_phrase(a)), a);
    EXPECT_EQ(action_phrase(A::GoUp), "go up");
    EXPECT_EQ(action_phrase(A::TurnLeft), "turn left");
    EXPECT_THROW(parse_action("jump"), std::invalid_argument);
}

TEST(Repository, BuildExamples) {
    SyntheticProviderConfig c;
    c.lexicon = {"bathroom", "stairs", "kitchen", "sofa"};
    const auto p = make_synthetic(c);
    auto repo = build_repository({"turn left to the bathroom"}, {"bathroom", "stairs"}, *p);
    ASSERT_EQ(repo.size(), 1u);
    EXPECT_EQ(repo[0].label, "bathroom");
    EXPECT_EQ(repo[0].phrase, "a photo of a bathroom");
    repo = build_repository({"go up stairs.", "go up the stairs to the bathroom"}, {"bathroom", "stairs"}, *p);
    EXPECT_EQ(repo.labels(), (std::vector<std::string>{"bathroom", "stairs"}));
    EXPECT_THROW(build_repository({"walk ahead"}, {"bathroom"}, *p), std::invalid_argument);
    EXPECT_THROW(build_repository({}, {"bathroom"}, *p), std::invalid_argument);
}

TEST(Repository, TemplatedToyCorpusHasFourConcepts) {
    // counted by hand: kitchen, sofa, stairs, lamp; "door" and "bed" never appear
    const std::vector<std::string> corpus{
        "turn left to the kitchen.",  "go forward to the sofa.",    "go up to the stairs.",
        "turn right to the lamp.",    "go back to the kitchen.",    "go down to the stairs. stop.",
    };
    SyntheticProviderConfig c;
    c.lexicon = {"kitchen", "sofa", "stairs", "lamp", "door", "bed"};
    const auto p = make_synthetic(c);
    const auto repo = build_repository(corpus, c.lexicon, *p);
    EXPECT_EQ(repo.size(), 4u);
    EXPECT_EQ(repo.labels(), (std::vector<std::string>{"kitchen", "lamp", "sofa", "stairs"}));
    EXPECT_EQ(repo.index_of("sofa"), std::optional<std::size_t>(2));
    EXPECT_FALSE(repo.index_of("door").has_value());
}

TEST(Repository, JsonRoundTrip) {
    SyntheticProviderConfig c;
    c.lexicon = {"kitchen", "sofa", "stairs", "lamp"};
    const auto p = make_synthetic(c);
    const ConceptRepository repo(c.lexicon, *p);
    const auto back = ConceptRepository::from_json(repo.to_json(), *p);
    EXPECT_EQ(back.labels(), repo.labels());
    EXPECT_EQ(back[1].text_feature, repo[1].text_feature);
    auto bad = repo.to_json();
    bad["concepts"][0]["phrase"] = "kitchen";
    EXPECT_THROW(ConceptRepository::from_json(bad, *p), std::invalid_argument);
    EXPECT_THROW(ConceptRepository({"sofa", "sofa"}, *p), std::invalid_argument);
}

TEST(ObjectMapping, HandSetSimilaritiesMatchScalarSoftmax) {
    const std::vector<std::string> labels{"a1", "b2", "c3", "d4"};
    const auto store = store_with_sims(labels, {0.9, 0.1, 0.1, 0.1});
    const ConceptRepository repo(labels, store);
    const auto top = map_object_concepts(e0(5), repo, 0.5, 2);
    // scalar oracle: exp(1.8) / (exp(1.8) + 3 exp(0.2)), exp(0.2) / (...)
    const double z = std::exp(1.8) + 3 * std::exp(0.2);
    ASSERT_EQ(top.size(), 2u);
    EXPECT_EQ(top[0].label, "a1");
    EXPECT_NEAR(top[0].probability, std::exp(1.8) / z, 1e-12);
    EXPECT_EQ(top[1].label, "b2");  // tie among b2, c3, d4 broken lexicographically
    EXPECT_NEAR(top[1].probability, std::exp(0.2) / z, 1e-12);
}

TEST(ObjectMapping, TiesAreLexicographic) {
    const std::vector<std::string> labels{"zeta", "alpha", "mid"};
    const auto store = store_with_sims(labels, {0.4, 0.4, -0.2});
    const ConceptRepository repo(labels, store);
    const auto top = map_object_concepts(e0(4), repo, 0.5, 2);
    EXPECT_EQ(top[0].label, "alpha");
    EXPECT_EQ(top[1].label, "zeta");
    EXPECT_DOUBLE_EQ(top[0].probability, top[1].probability);
}

TEST(ObjectMapping, KBoundsEnforced) {
    const std::vector<std::string> labels{"a", "b"};
    const auto store = store_with_sims(labels, {0.3, 0.2});
    const ConceptRepository repo(labels, store);
    EXPECT_THROW(map_object_concepts(e0(3), repo, 0.5, 3), std::invalid_argument);
    EXPECT_THROW(map_object_concepts(e0(3), repo, 0.5, 0), std::invalid_argument);
}

TEST(ObjectMapping, SliceOfFullDistributionAndTemperatureFreeSet) {
    SyntheticProviderConfig c;
    c.lexicon = {"bathroom", "bed", "closet", "door", "hallway", "kitchen", "lamp", "mirror"};
    c.noise_sigma = 1.0;
    const auto p = make_synthetic(c);
    const ConceptRepository repo(c.lexicon, *p);
    for (int i = 0; i < 50; ++i) {
        const Vector f = p->image_embed({"v" + std::to_string(i), c.lexicon[static_cast<std::size_t>(i) % 8], {}, false});
        const auto all = map_object_concepts(f, repo, 0.5, 8);
        double total = 0.0;
        for (const auto& s : all) total += s.probability;
        EXPECT_NEAR(total, 1.0, 1e-12);
        const auto top = map_object_concepts(f, repo, 0.5, 3);
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(top[j].probability, all[j].probability);
        const auto hot = map_object_concepts(f, repo, 2.0, 3);
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(hot[j].label, top[j].label);
    }
}

TEST(ActionalConcept, DegenerateAndLinearCases) {
    SyntheticProviderConfig c;
    c.lexicon = {"bathroom", "bedroom", "stairs", "sofa"};
    const auto p = make_synthetic(c);
    auto u = encode_actional_concept(A::TurnRight, {{"bathroom", 1.0}}, *p);
    EXPECT_EQ(u.feature, p->text_embed("turn right bathroom"));
    u = encode_actional_concept(A::GoUp, {{"stairs", 0.5}, {"sofa", 0.5}}, *p);
    EXPECT_LT((u.feature - 0.5 * (p->text_embed("go up stairs") + p->text_embed("go up sofa"))).norm(), 1e-15);
    u = encode_actional_concept(A::Stop, {}, *p);
    EXPECT_EQ(u.feature, p->text_embed("stop"));
    EXPECT_THROW(encode_actional_concept(A::GoBack, {}, *p), std::invalid_argument);
    EXPECT_THROW(encode_actional_concept(A::GoBack, {{"sofa", 0.7}, {"stairs", 0.6}}, *p), std::invalid_argument);
    EXPECT_THROW(encode_actional_concept(A::GoBack, {{"sofa", -0.1}}, *p), std::invalid_argument);
}

TEST(ActionalConcept, LinearInProbabilities) {
    SyntheticProviderConfig c;
    c.lexicon = {"bathroom", "bedroom", "stairs", "sofa"};
    const auto p = make_synthetic(c);
    const auto a = encode_actional_concept(A::TurnLeft, {{"bedroom", 0.2}, {"sofa", 0.1}}, *p).feature;
    const auto b = encode_actional_concept(A::TurnLeft, {{"bedroom", 0.4}, {"sofa", 0.2}}, *p).feature;
    EXPECT_LT((b - 2.0 * a).norm(), 1e-15);
    EXPECT_EQ(concept_phrase(A::TurnLeft, "sofa"), "turn left sofa");
    const Matrix E = concept_phrase_features(A::TurnLeft, {"bedroom", "sofa"}, *p);
    EXPECT_LT((0.2 * E.col(0) + 0.1 * E.col(1) - a).norm(), 1e-15);
}
