// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "oracles.hpp"

#include <aacl/adapter.hpp>
#include <aacl/coembed.hpp>
#include <aacl/concept.hpp>
#include <aacl/gradcheck.hpp>
#include <aacl/trainer.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

namespace fs = std::filesystem;
using aacl::ActionConcept;
using aacl::Vector;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x, int prec = 4) {
    std::ostringstream s;
    s.precision(prec);
    s << x;
    return s.str();
}

// ---------------------------------------------------------------------------

Outcome table_oracle() {
    const auto t0 = Clock::now();
    constexpr double pi = std::numbers::pi;
    std::vector<double> headings, elevations;
    for (double h = -2 * pi + 0.01; h < 2 * pi; h += 0.01) headings.push_back(h);
    for (double b : {-1.5 * pi, -0.5 * pi, 0.0, 0.5 * pi, 1.5 * pi}) headings.push_back(b);
    for (double e = -pi; e <= pi; e += 0.01) elevations.push_back(e);
    elevations.push_back(0.0);
    elevations.push_back(pi);
    std::size_t total = 0, mismatches = 0;
    for (double h : headings)
        for (double e : elevations) {
            ++total;
            const auto expected = oracle::action_concept(h, e);
            if (expected == ActionConcept::Stop || aacl::map_action_concept({h, e}) != expected) ++mismatches;
        }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && secs < 5.0, std::to_string(total - mismatches) + "/" + std::to_string(total) +
                                               " grid points agree, " + fmt(secs, 3) + " s"};
}

Outcome periodicity_and_precedence() {
    constexpr double pi = std::numbers::pi;
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> heading(-2 * pi, 2 * pi), elevation(-pi, pi);
    std::size_t violations = 0;
    constexpr int n = 1'000'000;
    for (int i = 0; i < n; ++i) {
        const double h = heading(rng);
        if (h != 0.0 && h > -2 * pi) {
            const double other = h > 0 ? h - 2 * pi : h + 2 * pi;
            if (other > -2 * pi && other < 2 * pi &&
                aacl::map_action_concept({h, 0.0}) != aacl::map_action_concept({other, 0.0}))
                ++violations;
        }
        double e = elevation(rng);
        if (e == 0.0) e = 1e-3;
        const auto a = aacl::map_action_concept({h, e});
        if (a != (e > 0 ? ActionConcept::GoUp : ActionConcept::GoDown)) ++violations;
    }
    for (double b : {0.5 * pi, 1.5 * pi})
        for (double s : {1.0, -1.0}) {
            const double h = s * b;
            const double other = h > 0 ? h - 2 * pi : h + 2 * pi;
            if (aacl::map_action_concept({h, 0.0}) != aacl::map_action_concept({other, 0.0})) ++violations;
        }
    return {violations == 0, std::to_string(violations) + " violations over " + std::to_string(n) + " samples"};
}

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    aacl::GradCheckOptions o;
    const auto entries = aacl::run_gradient_suite(o);
    double worst = 0.0;
    std::string worst_name;
    bool ok = true;
    for (const auto& e : entries) {
        ok = ok && e.report.max_rel_error < o.tol;
        if (e.report.max_rel_error >= worst) {
            worst = e.report.max_rel_error;
            worst_name = e.name;
        }
    }
    const double secs = seconds_since(t0);
    return {ok && secs < 60.0, std::to_string(entries.size()) + " checks, worst " + worst_name + " rel " +
                                   fmt(worst, 3) + ", " + fmt(secs, 3) + " s"};
}

Outcome contrast_closed_forms() {
    const double one = aacl::observation_contrast_loss({Vector::Ones(4)}, {Vector::Ones(4)}, 0.5).loss;
    const Vector v = Vector::Constant(4, 0.7);
    const double two = aacl::observation_contrast_loss({v, v}, {v, v}, 0.5).loss;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    double worst3 = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vector> a, b;
        for (int i = 0; i < 3; ++i) {
            Vector x(6), y(6);
            for (int d = 0; d < 6; ++d) {
                x[d] = g(rng);
                y[d] = g(rng);
            }
            a.push_back(x);
            b.push_back(y);
        }
        worst3 = std::max(worst3, std::abs(aacl::observation_contrast_loss(a, b, 0.5).loss - oracle::contrast_loss(a, b, 0.5)));
    }
    const bool ok = one == 0.0 && std::abs(two - 2 * std::log(2.0)) < 1e-9 && worst3 < 1e-9;
    return {ok, "N=1 " + fmt(one) + ", N=2 err " + fmt(std::abs(two - 2 * std::log(2.0)), 3) + ", N=3 err " +
                    fmt(worst3, 3)};
}

Outcome alpha_one_ordering() {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g;
    constexpr int dim = 16, n_concepts = 12, k = 5, cases = 1000;
    auto rand_vec = [&] {
        Vector v(dim);
        for (int d = 0; d < dim; ++d) v[d] = g(rng);
        return v;
    };
    int agree = 0;
    for (int c = 0; c < cases; ++c) {
        aacl::EmbeddingStore store(dim);
        std::vector<std::string> labels;
        for (int i = 0; i < n_concepts; ++i) {
            labels.push_back("c" + std::to_string(i));
            store.add_text(aacl::prompt_for(labels.back()), rand_vec() * (0.5 + std::abs(g(rng))));
        }
        const aacl::ConceptRepository repo(labels, store);
        const Vector f = rand_vec();
        const auto topk = aacl::map_object_concepts(f, repo, 0.5, k);
        aacl::Matrix text(dim, k);
        for (int i = 0; i < k; ++i) text.col(i) = repo[topk[static_cast<std::size_t>(i)].index].text_feature;
        auto p = aacl::AdapterParams::init(dim, 8, 1.0, rng);
        const Vector refined = aacl::refine_image_feature(f, rand_vec(), p);
        const Vector pt = aacl::rerank_topk(refined, text);
        bool ordered = true;
        for (int i = 1; i < k; ++i) ordered = ordered && pt[i - 1] >= pt[i];
        Eigen::Index argmax = 0;
        pt.maxCoeff(&argmax);
        agree += ordered && argmax == 0;
    }
    return {agree == cases, std::to_string(agree) + "/" + std::to_string(cases) + " cases keep the ordering"};
}

Outcome planted_recovery() {
    auto lexicon = aacl::default_lexicon();
    lexicon.insert(lexicon.end(), aacl::held_out_lexicon().begin(), aacl::held_out_lexicon().end());
    aacl::SyntheticProviderConfig pc;
    pc.noise_sigma = 0.0;
    pc.lexicon = lexicon;
    const auto provider = aacl::make_synthetic(pc);
    const aacl::ConceptRepository repo(lexicon, *provider);
    aacl::WorldOptions opt;
    opt.distractor_lexicon = aacl::held_out_lexicon();
    std::size_t views = 0, hits = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto w = aacl::generate_world(seed, 16, 2, aacl::default_lexicon(), seed % 2 ? opt : aacl::WorldOptions{});
        for (const auto& pano : w.views)
            for (const auto& v : pano) {
                const aacl::ObservationView ov{v.image_id, v.label, v.direction, v.navigable()};
                ++views;
                hits += aacl::map_object_concepts(provider->image_embed(ov), repo, 0.5, 1).front().label == v.label;
            }
    }
    return {hits == views, std::to_string(hits) + "/" + std::to_string(views) + " views recover their label"};
}

/// Mean refined probability of the ground-truth label over a fixed batch,
/// optionally taking one SGD step on -log p~[gt] averaged over the batch.
struct AdapterSample {
    Vector image;
    Vector cls;
    aacl::Matrix text;
    int gt = 0;
};

double adapter_objective(const aacl::AdapterParams& p, const std::vector<AdapterSample>& batch,
                         aacl::AdapterParams* grad) {
    double mean_p = 0.0;
    for (const auto& s : batch) {
        aacl::RefineCache cache;
        const Vector refined = aacl::refine_image_feature(s.image, s.cls, p, &cache);
        const Vector pt = aacl::rerank_topk(refined, s.text);
        mean_p += pt[s.gt];
        if (grad != nullptr) {
            Vector dp = Vector::Zero(pt.size());
            dp[s.gt] = -1.0 / (pt[s.gt] * static_cast<double>(batch.size()));
            const Vector dref = aacl::rerank_backward(refined, s.text, pt, dp);
            aacl::refine_backward(cache, p, dref, *grad);
        }
    }
    return mean_p / static_cast<double>(batch.size());
}

Outcome adapter_learning() {
    const auto t0 = Clock::now();
    int improved = 0;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        aacl::SyntheticProviderConfig pc;
        pc.seed = seed;
        pc.noise_sigma = 1.0;
        pc.lexicon = aacl::default_lexicon();
        const auto provider = aacl::make_synthetic(pc);
        const aacl::ConceptRepository repo(pc.lexicon, *provider);
        auto rng = aacl::make_stream(seed, "adapter-check");
        std::uniform_int_distribution<std::size_t> pick(0, pc.lexicon.size() - 1);
        std::size_t view_id = 0;
        auto draw = [&](std::size_t n) {
            std::vector<AdapterSample> out;
            while (out.size() < n) {
                const auto& label = pc.lexicon[pick(rng)];
                const aacl::ObservationView v{"v" + std::to_string(view_id++), label, {}, true};
                AdapterSample s;
                s.image = provider->image_embed(v);
                const auto topk = aacl::map_object_concepts(s.image, repo, 0.5, 5);
                s.gt = -1;
                s.text.resize(pc.dim, 5);
                for (int i = 0; i < 5; ++i) {
                    s.text.col(i) = repo[topk[static_cast<std::size_t>(i)].index].text_feature;
                    if (topk[static_cast<std::size_t>(i)].label == label) s.gt = i;
                }
                if (s.gt < 0) continue;  // re-ranking cannot recover a label outside the top-k
                s.cls = provider->text_embed(aacl::prompt_for(label));
                out.push_back(std::move(s));
            }
            return out;
        };
        const auto held = draw(200);
        auto p = aacl::AdapterParams::init(pc.dim, 256, 0.8, rng);
        const double before = adapter_objective(p, held, nullptr);
        for (int step = 0; step < 200; ++step) {
            const auto batch = draw(8);
            auto grad = aacl::zeros_like(p);
            adapter_objective(p, batch, &grad);
            p.W1 -= 0.1 * grad.W1;
            p.W2 -= 0.1 * grad.W2;
        }
        const double after = adapter_objective(p, held, nullptr);
        improved += after > before;
        detail += (seed ? ", " : "") + fmt(before, 3) + "->" + fmt(after, 3);
    }
    const double secs = seconds_since(t0);
    return {improved == 5 && secs < 30.0,
            std::to_string(improved) + "/5 seeds improve (" + detail + "), " + fmt(secs, 3) + " s"};
}

Outcome ablation_ordering() {
    const auto t0 = Clock::now();
    const std::array<aacl::Mode, 3> modes{aacl::Mode::Full, aacl::Mode::Separate, aacl::Mode::Baseline};
    std::array<double, 3> sr{0, 0, 0};
    for (std::uint64_t seed = 0; seed < 5; ++seed)
        for (std::size_t m = 0; m < modes.size(); ++m) {
            aacl::TrainConfig c;
            c.seed = seed;
            c.model.mode = modes[m];
            const aacl::Workspace ws(c);
            aacl::TrainHooks hooks;
            hooks.evaluate_each_epoch = false;
            const auto result = aacl::train(ws, hooks);
            const double s = aacl::evaluate_policy(result.params, ws, ws.data.val_unseen).mean.sr;
            sr[m] += s / 5.0;
            std::cout << "  ablation seed " << seed << " " << aacl::mode_name(modes[m]) << " val_unseen_like SR "
                      << fmt(s, 3) << '\n';
        }
    const double secs = seconds_since(t0);
    const bool ok = sr[0] > sr[1] && sr[0] >= sr[2] && sr[0] - sr[1] >= 0.05 && secs < 600.0;
    return {ok, "mean SR full " + fmt(sr[0], 3) + ", separate " + fmt(sr[1], 3) + ", baseline " + fmt(sr[2], 3) +
                    ", " + fmt(secs, 3) + " s"};
}

Outcome metric_cases() {
    // single-level worlds have unit edges
    const auto w = aacl::generate_world(3, 16, 1, aacl::default_lexicon());
    aacl::Episode ep;
    for (std::uint64_t s = 0;; ++s) {
        ep = aacl::generate_episode(w, s, 3);
        if (ep.gt_path.size() == 3) break;
    }
    const auto& g = ep.gt_path;
    const auto perfect = aacl::evaluate_trajectory(w, g, ep);
    const auto doubled = aacl::evaluate_trajectory(w, {g[0], g[1], g[0], g[1], g[2]}, ep);
    const auto wrong = aacl::evaluate_trajectory(w, {g[0]}, ep);
    const bool ok = perfect.sr == 1.0 && perfect.spl == 1.0 && perfect.ne == 0.0 && perfect.tl == 2.0 &&
                    doubled.sr == 1.0 && doubled.spl == 0.5 && doubled.tl == 4.0 && wrong.sr == 0.0 &&
                    wrong.spl == 0.0 && wrong.ne == 2.0 && wrong.tl == 0.0;
    return {ok, "perfect SPL " + fmt(perfect.spl) + ", doubled SPL " + fmt(doubled.spl) + ", immediate stop SR " +
                    fmt(wrong.sr) + " SPL " + fmt(wrong.spl)};
}

Outcome determinism() {
    const auto root = fs::temp_directory_path() / ("aacl_accept_" + std::to_string(::getpid()));
    fs::remove_all(root);
    auto run = [&](const std::string& name) {
        const auto dir = root / name;
        const std::string cmd = std::string("AACL_LOG=error \"") + AACL_CLI_PATH + "\" train --seed 0 --out \"" +
                                dir.string() + "\"";
        if (std::system(cmd.c_str()) != 0) return std::string();
        std::ifstream in(dir / "metrics.jsonl", std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const auto a = run("a");
    const auto b = run("b");
    fs::remove_all(root);
    const bool ok = !a.empty() && a == b;
    return {ok, std::to_string(a.size()) + " and " + std::to_string(b.size()) + " byte logs, " +
                    (a == b ? "identical" : "different")};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"action-table oracle equivalence", table_oracle},
        {"periodicity and elevation precedence", periodicity_and_precedence},
        {"gradient suite", gradient_suite},
        {"contrast loss closed forms", contrast_closed_forms},
        {"alpha=1 re-rank ordering", alpha_one_ordering},
        {"planted label recovery", planted_recovery},
        {"adapter learning", adapter_learning},
        {"ablation ordering", ablation_ordering},
        {"navigation metric cases", metric_cases},
        {"training determinism", determinism},
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
