#pragma once

// Concept refining adapter: a bottleneck MLP that mixes the image feature
// with the instruction summary and re-ranks the top-k object concepts.

#include <aacl/checkpoint.hpp>
#include <aacl/numeric.hpp>

#include <nlohmann/json.hpp>

#include <random>
#include <string>
#include <vector>

namespace aacl {

struct AdapterParams {
    Matrix W1;  // in_dim x hidden, in_dim = 2 * provider dim
    Matrix W2;  // hidden x provider dim
    double alpha = 0.8;

    static AdapterParams init(int provider_dim, int hidden, double alpha, std::mt19937_64& rng) {
        if (provider_dim <= 0 || hidden <= 0) throw std::invalid_argument("AdapterParams: dims must be positive");
        if (!(alpha >= 0 && alpha <= 1)) throw std::invalid_argument("AdapterParams: alpha outside [0, 1]");
        AdapterParams p;
        p.W1 = uniform_init(2 * provider_dim, hidden, 2 * provider_dim, rng);
        p.W2 = uniform_init(hidden, provider_dim, hidden, rng);
        p.alpha = alpha;
        return p;
    }

    Eigen::Index in_dim() const { return W1.rows(); }
    Eigen::Index hidden() const { return W1.cols(); }
    Eigen::Index out_dim() const { return W2.cols(); }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + "W1", W1);
        f(prefix + "W2", W2);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const {
        f(prefix + "W1", W1);
        f(prefix + "W2", W2);
    }
};

struct AdapterCache {
    Vector input;
    Vector pre;  // W1^T f
    Vector hidden;
};

/// A(f) = ReLU(f^T W1) W2
inline Vector adapter_forward(const Vector& f, const AdapterParams& p, AdapterCache* cache = nullptr) {
    if (f.size() != p.in_dim())
        throw std::invalid_argument("adapter_forward: input length " + std::to_string(f.size()) + ", expected " +
                                    std::to_string(p.in_dim()));
    if (p.W2.rows() != p.hidden())
        throw std::invalid_argument("adapter_forward: W1 " + detail::shape_str(p.W1) + " and W2 " +
                                    detail::shape_str(p.W2) + " do not chain");
    Vector pre = p.W1.transpose() * f;
    Vector hidden = relu(pre);
    Vector out = p.W2.transpose() * hidden;
    if (cache != nullptr) *cache = {f, std::move(pre), std::move(hidden)};
    return out;
}

/// Accumulates into `grad` and returns d/d input.
inline Vector adapter_backward(const AdapterCache& cache, const AdapterParams& p, const Vector& dout,
                               AdapterParams& grad) {
    grad.W2.noalias() += cache.hidden * dout.transpose();
    const Vector dpre = relu_backward(cache.pre, p.W2 * dout);
    grad.W1.noalias() += cache.input * dpre.transpose();
    return p.W1 * dpre;
}

struct RefineCache {
    AdapterCache adapter;
};

/// f~ = alpha * f_B + (1 - alpha) * A([f_B ; cls])
inline Vector refine_image_feature(const Vector& image_feature, const Vector& instruction_cls, const AdapterParams& p,
                                   RefineCache* cache = nullptr) {
    if (image_feature.size() != p.out_dim() || instruction_cls.size() != p.out_dim())
        throw std::invalid_argument("refine_image_feature: features of length " +
                                    std::to_string(image_feature.size()) + " and " +
                                    std::to_string(instruction_cls.size()) + ", expected " +
                                    std::to_string(p.out_dim()));
    if (p.alpha == 1.0) {
        if (cache != nullptr) cache->adapter = {};
        return image_feature;
    }
    const Vector a = adapter_forward(concat(image_feature, instruction_cls), p, cache ? &cache->adapter : nullptr);
    return p.alpha * image_feature + (1.0 - p.alpha) * a;
}

/// Returns (d image_feature, d instruction_cls).
inline std::pair<Vector, Vector> refine_backward(const RefineCache& cache, const AdapterParams& p, const Vector& dout,
                                                 AdapterParams& grad) {
    const auto d = p.out_dim();
    if (p.alpha == 1.0) return {dout, Vector::Zero(d)};
    const Vector din = adapter_backward(cache.adapter, p, (1.0 - p.alpha) * dout, grad);
    return {p.alpha * dout + din.head(d), din.tail(d)};
}

/// p~ = softmax(sim(f~, t_1) / T, ..., sim(f~, t_k) / T); columns of
/// `text_features` are the top-k concept text features.  T defaults to 1.
inline Vector rerank_topk(const Vector& refined, const Matrix& text_features, double temperature = 1.0) {
    if (text_features.cols() == 0) throw std::invalid_argument("rerank_topk: empty concept list");
    Vector sims(text_features.cols());
    for (Eigen::Index i = 0; i < text_features.cols(); ++i) sims[i] = cosine_sim(refined, text_features.col(i));
    return softmax_temp(sims, temperature);
}

/// Gradient of the loss w.r.t. the refined feature given dL/dp~.
inline Vector rerank_backward(const Vector& refined, const Matrix& text_features, const Vector& probs,
                              const Vector& dprobs, double temperature = 1.0) {
    const Vector dsims = softmax_temp_backward(probs, dprobs, temperature);
    Vector dref = Vector::Zero(refined.size());
    Vector unused = Vector::Zero(refined.size());
    for (Eigen::Index i = 0; i < text_features.cols(); ++i) {
        unused.setZero();
        cosine_sim_backward(refined, text_features.col(i), dsims[i], dref, unused);
    }
    return dref;
}

inline nlohmann::json adapter_to_json(const AdapterParams& p) {
    return {{"format_version", kCheckpointFormatVersion},
            {"kind", "adapter"},
            {"alpha", p.alpha},
            {"tensors", tensors_to_json(p)}};
}

inline AdapterParams adapter_from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
        throw std::invalid_argument("adapter checkpoint: unsupported format_version");
    const auto& t = j.at("tensors");
    auto shape = [&](const char* name) { return t.at(name).at("shape").get<std::vector<Eigen::Index>>(); };
    const auto s1 = shape("W1");
    const auto s2 = shape("W2");
    if (s1.size() != 2 || s2.size() != 2) throw std::invalid_argument("adapter checkpoint: bad shapes");
    AdapterParams p;
    p.W1 = Matrix::Zero(s1[0], s1[1]);
    p.W2 = Matrix::Zero(s2[0], s2[1]);
    p.alpha = j.at("alpha").get<double>();
    tensors_from_json(t, p);
    return p;
}

}  // namespace aacl
