#pragma once

// Actional atomic concepts: an atomic action derived from the relative
// direction of a view, paired with the object concepts an image encoder
// assigns to that view.

#include <aacl/embedding.hpp>
#include <aacl/numeric.hpp>
#include <aacl/types.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace aacl {

enum class ActionConcept { GoUp, GoDown, GoForward, GoBack, TurnRight, TurnLeft, Stop };

inline constexpr std::array<ActionConcept, 7> kAllActions{ActionConcept::GoUp,      ActionConcept::GoDown,
                                                          ActionConcept::GoForward, ActionConcept::GoBack,
                                                          ActionConcept::TurnRight, ActionConcept::TurnLeft,
                                                          ActionConcept::Stop};

inline std::string_view action_phrase(ActionConcept a) {
    switch (a) {
        case ActionConcept::GoUp: return "go up";
        case ActionConcept::GoDown: return "go down";
        case ActionConcept::GoForward: return "go forward";
        case ActionConcept::GoBack: return "go back";
        case ActionConcept::TurnRight: return "turn right";
        case ActionConcept::TurnLeft: return "turn left";
        case ActionConcept::Stop: return "stop";
    }
    throw std::logic_error("action_phrase: bad enum");
}

inline ActionConcept parse_action(std::string_view s) {
    for (auto a : kAllActions)
        if (action_phrase(a) == s) return a;
    throw std::invalid_argument("unknown action concept \"" + std::string(s) + "\"");
}

// ---------------------------------------------------------------------------
// relative direction and the atomic action table

struct RelativeDirection {
    double dheading = 0.0;    // (-2pi, 2pi)
    double delevation = 0.0;  // [-pi, pi]
};

/// Candidate direction relative to the previously selected one.  Heading is
/// not wrapped; the action table covers the full (-2pi, 2pi) range.
inline RelativeDirection relative_direction(const Direction& candidate, const Direction& prev) {
    return {candidate.heading() - prev.heading(), candidate.elevation() - prev.elevation()};
}

/// Elevation decides first (up/down); otherwise the heading delta selects the
/// column of the atomic action table.
inline ActionConcept map_action_concept(const RelativeDirection& r) {
    const double h = r.dheading;
    const double e = r.delevation;
    if (!(h > -kTwoPi && h < kTwoPi) || !(e >= -kPi && e <= kPi))
        throw std::invalid_argument("map_action_concept: relative direction (" + std::to_string(h) + ", " +
                                    std::to_string(e) + ") out of range");
    if (e > 0) return ActionConcept::GoUp;
    if (e < 0) return ActionConcept::GoDown;
    constexpr double half = kPi / 2;
    constexpr double three_half = 3 * kPi / 2;
    if (h == 0) return ActionConcept::GoForward;
    if (h <= -three_half) return ActionConcept::TurnRight;
    if (h < -half) return ActionConcept::GoBack;
    if (h < 0) return ActionConcept::TurnLeft;
    if (h <= half) return ActionConcept::TurnRight;
    if (h < three_half) return ActionConcept::GoBack;
    return ActionConcept::TurnLeft;
}

// ---------------------------------------------------------------------------
// object concept repository

inline constexpr std::string_view kPromptPrefix = "a photo of a ";

inline std::string prompt_for(std::string_view label) { return std::string(kPromptPrefix) + std::string(label); }

struct ObjectConcept {
    std::string label;
    std::string phrase;
    Vector text_feature;
};

class ConceptRepository {
public:
    ConceptRepository() = default;

    /// Labels must be unique; they are stored sorted.
    ConceptRepository(std::vector<std::string> labels, const EmbeddingProvider& provider) {
        std::sort(labels.begin(), labels.end());
        if (std::adjacent_find(labels.begin(), labels.end()) != labels.end())
            throw std::invalid_argument("ConceptRepository: duplicate labels");
        if (labels.empty()) throw std::invalid_argument("ConceptRepository: no concepts");
        for (auto& l : labels) {
            auto phrase = prompt_for(l);
            Vector f = provider.text_embed(phrase);
            concepts_.push_back({std::move(l), std::move(phrase), std::move(f)});
        }
    }

    std::size_t size() const { return concepts_.size(); }
    const std::vector<ObjectConcept>& concepts() const { return concepts_; }
    const ObjectConcept& operator[](std::size_t i) const { return concepts_.at(i); }

    std::optional<std::size_t> index_of(std::string_view label) const {
        auto it = std::lower_bound(concepts_.begin(), concepts_.end(), label,
                                   [](const ObjectConcept& c, std::string_view l) { return c.label < l; });
        if (it == concepts_.end() || it->label != label) return std::nullopt;
        return static_cast<std::size_t>(it - concepts_.begin());
    }

    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        for (const auto& c : concepts_) out.push_back(c.label);
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& c : concepts_) arr.push_back({{"label", c.label}, {"phrase", c.phrase}});
        return {{"concepts", arr}};
    }

    static ConceptRepository from_json(const nlohmann::json& j, const EmbeddingProvider& provider) {
        std::vector<std::string> labels;
        for (const auto& c : j.at("concepts")) {
            auto label = c.at("label").get<std::string>();
            if (c.contains("phrase") && c["phrase"].get<std::string>() != prompt_for(label))
                throw std::invalid_argument("repository: phrase for \"" + label + "\" does not match the prompt template");
            labels.push_back(std::move(label));
        }
        return ConceptRepository(std::move(labels), provider);
    }

private:
    std::vector<ObjectConcept> concepts_;
};

/// Lowercased alphanumeric words.
inline std::vector<std::string> corpus_tokens(std::string_view sentence) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : sentence) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

/// Every lexicon word that occurs in the corpus, deduplicated and sorted.
inline ConceptRepository build_repository(const std::vector<std::string>& corpus,
                                          const std::vector<std::string>& lexicon,
                                          const EmbeddingProvider& provider) {
    if (corpus.empty()) throw std::invalid_argument("build_repository: empty corpus");
    if (lexicon.empty()) throw std::invalid_argument("build_repository: empty lexicon");
    const std::set<std::string> allowed(lexicon.begin(), lexicon.end());
    std::set<std::string> found;
    for (const auto& sentence : corpus)
        for (auto& tok : corpus_tokens(sentence))
            if (allowed.count(tok)) found.insert(tok);
    if (found.empty()) throw std::invalid_argument("build_repository: no lexicon word occurs in the corpus");
    return ConceptRepository({found.begin(), found.end()}, provider);
}

// ---------------------------------------------------------------------------
// object concept mapping

struct ScoredConcept {
    std::string label;
    double probability = 0.0;
    std::size_t index = 0;  // position in the repository
};

/// Full softmax over all repository similarities at temperature tau; returns
/// the k most probable entries in descending order (ties by label).  The
/// returned probabilities are the unnormalised slice of the full distribution.
inline std::vector<ScoredConcept> map_object_concepts(const Vector& view_feature, const ConceptRepository& repo,
                                                      double tau, int k) {
    if (k < 1 || static_cast<std::size_t>(k) > repo.size())
        throw std::invalid_argument("map_object_concepts: k=" + std::to_string(k) + " outside [1, " +
                                    std::to_string(repo.size()) + "]");
    Vector sims(static_cast<Eigen::Index>(repo.size()));
    for (std::size_t c = 0; c < repo.size(); ++c)
        sims[static_cast<Eigen::Index>(c)] = cosine_sim(view_feature, repo[c].text_feature);
    const Vector p = softmax_temp(sims, tau);
    std::vector<std::size_t> order(repo.size());
    std::iota(order.begin(), order.end(), 0);
    // Repository labels are sorted, so a stable sort on probability breaks ties lexicographically.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return p[static_cast<Eigen::Index>(a)] > p[static_cast<Eigen::Index>(b)];
    });
    std::vector<ScoredConcept> out;
    for (int i = 0; i < k; ++i) {
        const auto c = order[static_cast<std::size_t>(i)];
        out.push_back({repo[c].label, p[static_cast<Eigen::Index>(c)], c});
    }
    return out;
}

// ---------------------------------------------------------------------------
// actional atomic concept feature

struct ActionalAtomicConcept {
    ActionConcept action = ActionConcept::Stop;
    std::vector<std::pair<std::string, double>> objects;
    Vector feature;
};

inline std::string concept_phrase(ActionConcept action, std::string_view label) {
    return std::string(action_phrase(action)) + " " + std::string(label);
}

/// Columns are text embeddings of "<action> <label>" for each label.
inline Matrix concept_phrase_features(ActionConcept action, const std::vector<std::string>& labels,
                                      const EmbeddingProvider& provider) {
    Matrix E(provider.dim(), static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < labels.size(); ++i)
        E.col(static_cast<Eigen::Index>(i)) = provider.text_embed(concept_phrase(action, labels[i]));
    return E;
}

/// u = sum_i p_i * embed("<action> <label_i>"); the stop candidate with no
/// objects gets embed("stop").  Probabilities may be a raw top-k slice of a
/// larger distribution, so they only need to be non-negative with sum <= 1.
inline ActionalAtomicConcept encode_actional_concept(ActionConcept action,
                                                     const std::vector<std::pair<std::string, double>>& topk,
                                                     const EmbeddingProvider& provider) {
    ActionalAtomicConcept out;
    out.action = action;
    out.objects = topk;
    if (topk.empty()) {
        if (action != ActionConcept::Stop)
            throw std::invalid_argument("encode_actional_concept: empty object list for non-stop action");
        out.feature = provider.text_embed(action_phrase(ActionConcept::Stop));
        return out;
    }
    double total = 0.0;
    for (const auto& [label, p] : topk) {
        if (!(p >= 0) || !std::isfinite(p))
            throw std::invalid_argument("encode_actional_concept: bad probability for \"" + label + "\"");
        total += p;
    }
    if (total > 1.0 + 1e-6)
        throw std::invalid_argument("encode_actional_concept: probabilities sum to " + std::to_string(total) + " > 1");
    out.feature = Vector::Zero(provider.dim());
    for (const auto& [label, p] : topk) out.feature += p * provider.text_embed(concept_phrase(action, label));
    return out;
}

}  // namespace aacl
