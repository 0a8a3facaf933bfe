#pragma once

// Frozen "pretrained encoder" features behind one interface.
//
// Two providers: EmbeddingStore reads an exported JSON file of text and image
// vectors; SyntheticProvider derives deterministic vectors with planted
// structure (a bag of seeded word directions) so that tests know the truth.

#include <aacl/numeric.hpp>
#include <aacl/rng.hpp>
#include <aacl/types.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace aacl {

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual int dim() const = 0;
    virtual Vector text_embed(std::string_view phrase) const = 0;
    virtual Vector image_embed(const ObservationView& view) const = 0;
};

// ---------------------------------------------------------------------------
// file-backed store

namespace detail {

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline std::string nearest_keys(const std::map<std::string, Vector>& table, std::string_view key,
                                std::size_t n = 3) {
    std::vector<std::pair<std::size_t, std::string>> scored;
    for (const auto& [k, _] : table) scored.emplace_back(edit_distance(k, key), k);
    std::sort(scored.begin(), scored.end());
    std::string out;
    for (std::size_t i = 0; i < std::min(n, scored.size()); ++i) {
        if (i) out += ", ";
        out += "\"" + scored[i].second + "\"";
    }
    return out.empty() ? "<none>" : out;
}

}  // namespace detail

class EmbeddingStore final : public EmbeddingProvider {
public:
    EmbeddingStore() = default;
    explicit EmbeddingStore(int dim) : dim_(dim) {
        if (dim <= 0) throw std::invalid_argument("EmbeddingStore: dim must be positive");
    }

    int dim() const override { return dim_; }
    const std::map<std::string, Vector>& text_table() const { return text_; }
    const std::map<std::string, Vector>& image_table() const { return image_; }

    void add_text(const std::string& phrase, Vector v) { insert(text_, "text", phrase, std::move(v)); }
    void add_image(const std::string& id, Vector v) { insert(image_, "image", id, std::move(v)); }

    Vector text_embed(std::string_view phrase) const override {
        if (phrase.empty()) throw std::invalid_argument("text_embed: empty phrase");
        auto it = text_.find(std::string(phrase));
        if (it == text_.end())
            throw std::out_of_range("text_embed: unknown phrase \"" + std::string(phrase) +
                                    "\"; nearest known: " + detail::nearest_keys(text_, phrase));
        return it->second;
    }

    Vector image_embed(const ObservationView& view) const override {
        auto it = image_.find(view.image_id);
        if (it == image_.end())
            throw std::out_of_range("image_embed: unknown image id \"" + view.image_id + "\"");
        return it->second;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["dim"] = dim_;
        j["text"] = nlohmann::json::object();
        j["image"] = nlohmann::json::object();
        for (const auto& [k, v] : text_) j["text"][k] = std::vector<double>(v.data(), v.data() + v.size());
        for (const auto& [k, v] : image_) j["image"][k] = std::vector<double>(v.data(), v.data() + v.size());
        return j;
    }

    std::string dump() const { return to_json().dump(); }

    static EmbeddingStore parse(const std::string& text);
    static EmbeddingStore load(const std::string& path);
    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write embedding store: " + path);
        out << dump() << '\n';
    }

private:
    void insert(std::map<std::string, Vector>& table, const char* section, const std::string& id, Vector v) {
        if (v.size() != dim_)
            throw std::invalid_argument(std::string("embedding record ") + section + "/\"" + id + "\" has " +
                                        std::to_string(v.size()) + " values, expected dim " + std::to_string(dim_));
        if (!v.allFinite())
            throw std::invalid_argument(std::string("embedding record ") + section + "/\"" + id +
                                        "\" has non-finite values");
        if (!(v.norm() > 0))
            throw std::invalid_argument(std::string("embedding record ") + section + "/\"" + id + "\" has zero norm");
        if (!table.emplace(id, std::move(v)).second)
            throw std::invalid_argument(std::string("duplicate embedding record ") + section + "/\"" + id + "\"");
    }

    int dim_ = 0;
    std::map<std::string, Vector> text_;
    std::map<std::string, Vector> image_;
};

inline EmbeddingStore EmbeddingStore::parse(const std::string& text) {
    // nlohmann keeps the last of duplicated keys silently; catch them while parsing.
    std::string section;
    std::map<std::string, std::set<std::string>> seen;
    auto cb = [&](int depth, nlohmann::json::parse_event_t ev, nlohmann::json& parsed) {
        if (ev == nlohmann::json::parse_event_t::key) {
            const auto key = parsed.get<std::string>();
            if (depth == 1) {
                section = key;
            } else if (depth == 2 && (section == "text" || section == "image")) {
                if (!seen[section].insert(key).second)
                    throw std::invalid_argument("duplicate embedding record " + section + "/\"" + key + "\"");
            }
        }
        return true;
    };
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text, cb);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("embedding store: malformed JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("dim") || !j["dim"].is_number_integer())
        throw std::invalid_argument("embedding store: missing integer field \"dim\"");
    EmbeddingStore store(j["dim"].get<int>());
    auto read_section = [&](const char* name, bool image) {
        if (!j.contains(name)) return;
        if (!j[name].is_object()) throw std::invalid_argument(std::string("embedding store: \"") + name + "\" must be an object");
        for (const auto& [key, arr] : j[name].items()) {
            if (!arr.is_array())
                throw std::invalid_argument(std::string("embedding record ") + name + "/\"" + key + "\" is not an array");
            Vector v(static_cast<Eigen::Index>(arr.size()));
            for (std::size_t i = 0; i < arr.size(); ++i) {
                if (!arr[i].is_number())
                    throw std::invalid_argument(std::string("embedding record ") + name + "/\"" + key +
                                                "\" has a non-numeric entry");
                v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
            }
            image ? store.add_image(key, std::move(v)) : store.add_text(key, std::move(v));
        }
    };
    read_section("text", false);
    read_section("image", true);
    return store;
}

inline EmbeddingStore EmbeddingStore::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open embedding store: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

inline EmbeddingStore load_store(const std::string& path) { return EmbeddingStore::load(path); }

// ---------------------------------------------------------------------------
// synthetic provider

struct SyntheticProviderConfig {
    int dim = 32;
    std::uint64_t seed = 0;
    double noise_sigma = 0.05;
    std::vector<std::string> lexicon;

    void validate() const {
        if (dim < 8) throw std::invalid_argument("SyntheticProviderConfig: dim must be >= 8");
        if (!(noise_sigma >= 0)) throw std::invalid_argument("SyntheticProviderConfig: noise_sigma must be >= 0");
        if (lexicon.empty()) throw std::invalid_argument("SyntheticProviderConfig: lexicon is empty");
    }
};

/// Text phrases embed as the normalised sum of per-word unit directions, with
/// template words ("a", "photo", "of", "the", "to") ignored.  So "a photo of a
/// stairs" and "stairs" coincide, and "turn left to the kitchen." coincides
/// with the concept phrase "turn left kitchen".  Images embed as their planted
/// label's direction plus a per-view perturbation of norm noise_sigma.
class SyntheticProvider final : public EmbeddingProvider {
public:
    explicit SyntheticProvider(SyntheticProviderConfig config) : config_(std::move(config)) {
        config_.validate();
        for (const auto& label : config_.lexicon) bases_.emplace(label, draw_word(label));
    }

    int dim() const override { return config_.dim; }
    const SyntheticProviderConfig& config() const { return config_; }

    static std::vector<std::string> tokenize(std::string_view phrase) {
        static const std::set<std::string, std::less<>> kIgnored{"a", "an", "photo", "of", "the", "to"};
        std::vector<std::string> words;
        std::string cur;
        auto flush = [&] {
            if (!cur.empty() && !kIgnored.count(cur)) words.push_back(cur);
            cur.clear();
        };
        for (char c : phrase) {
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
                cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            } else {
                flush();
            }
        }
        flush();
        return words;
    }

    /// Unit direction of a single word.
    Vector word_direction(const std::string& word) const {
        if (auto it = bases_.find(word); it != bases_.end()) return it->second;
        return draw_word(word);
    }

    Vector text_embed(std::string_view phrase) const override {
        if (phrase.empty()) throw std::invalid_argument("text_embed: empty phrase");
        auto words = tokenize(phrase);
        if (words.empty()) words.emplace_back(phrase);
        Vector sum = Vector::Zero(config_.dim);
        for (const auto& w : words) sum += word_direction(w);
        const double n = sum.norm();
        // A word repeated with its negation cannot happen; sums of unit vectors
        // of distinct seeded words are nonzero with probability one.
        return n > 0 ? Vector(sum / n) : word_direction(words.front());
    }

    Vector image_embed(const ObservationView& view) const override {
        if (view.label.empty())
            throw std::invalid_argument("image_embed: view \"" + view.image_id + "\" has no planted label");
        Vector base = text_embed(view.label);
        if (config_.noise_sigma == 0.0) return base;
        auto rng = make_stream(config_.seed, "view:" + view.image_id);
        return base + config_.noise_sigma * unit_gaussian(rng);
    }

private:
    Vector unit_gaussian(std::mt19937_64& rng) const {
        std::normal_distribution<double> n01(0.0, 1.0);
        Vector v(config_.dim);
        for (int i = 0; i < config_.dim; ++i) v[i] = n01(rng);
        return v / v.norm();
    }

    Vector draw_word(const std::string& word) const {
        auto rng = make_stream(config_.seed, "word:" + word);
        return unit_gaussian(rng);
    }

    SyntheticProviderConfig config_;
    std::map<std::string, Vector, std::less<>> bases_;
};

inline std::unique_ptr<SyntheticProvider> make_synthetic(const SyntheticProviderConfig& config) {
    return std::make_unique<SyntheticProvider>(config);
}

}  // namespace aacl
