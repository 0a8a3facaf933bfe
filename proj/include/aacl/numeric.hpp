#pragma once

// Dense numeric primitives with explicit adjoints.
//
// Every forward op here has a matching backward that takes the upstream
// gradient and accumulates into caller-owned gradient buffers.  Storage is
// Eigen; all values are 64-bit.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace aacl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace detail {

inline std::string shape_str(const Matrix& m) {
    return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}
inline std::string shape_str(const Vector& v) { return "(" + std::to_string(v.size()) + ")"; }

template <typename T>
bool all_finite(const T& t) {
    return t.allFinite();
}

}  // namespace detail

/// Throws if any entry is NaN or infinite.  `what` names the value in the message.
template <typename T>
void require_finite(const T& t, const std::string& what) {
    if (!detail::all_finite(t)) throw std::runtime_error("non-finite values in " + what);
}

// ---------------------------------------------------------------------------
// linear

/// y = W x (+ b)
inline Vector linear_forward(const Vector& x, const Matrix& W, const Vector* b = nullptr) {
    if (W.cols() != x.size())
        throw std::invalid_argument("linear_forward: W " + detail::shape_str(W) + " does not conform with x " +
                                    detail::shape_str(x));
    if (b != nullptr && b->size() != W.rows())
        throw std::invalid_argument("linear_forward: W " + detail::shape_str(W) + " does not conform with b " +
                                    detail::shape_str(*b));
    Vector y = W * x;
    if (b != nullptr) y += *b;
    return y;
}

/// Accumulates dW += dy x^T, db += dy and returns dx = W^T dy.
inline Vector linear_backward(const Vector& x, const Matrix& W, const Vector& dy, Matrix& dW, Vector* db = nullptr) {
    dW.noalias() += dy * x.transpose();
    if (db != nullptr) *db += dy;
    return W.transpose() * dy;
}

// ---------------------------------------------------------------------------
// layer norm

struct LayerNormParams {
    Vector gain;
    Vector bias;

    static LayerNormParams identity(Eigen::Index n) { return {Vector::Ones(n), Vector::Zero(n)}; }

    template <typename F>
    void visit(const std::string& prefix, F&& f) {
        f(prefix + ".gain", gain);
        f(prefix + ".bias", bias);
    }
    template <typename F>
    void visit(const std::string& prefix, F&& f) const {
        f(prefix + ".gain", gain);
        f(prefix + ".bias", bias);
    }
};

struct LayerNormCache {
    Vector xhat;
    double inv_std = 0.0;
};

inline constexpr double kLayerNormEps = 1e-5;

inline Vector layer_norm(const Vector& x, const LayerNormParams& p, double eps = kLayerNormEps,
                         LayerNormCache* cache = nullptr) {
    if (x.size() == 0) throw std::invalid_argument("layer_norm: zero-length input");
    if (p.gain.size() != x.size() || p.bias.size() != x.size())
        throw std::invalid_argument("layer_norm: params " + detail::shape_str(p.gain) + " do not match input " +
                                    detail::shape_str(x));
    if (!(eps > 0)) throw std::invalid_argument("layer_norm: eps must be positive");
    const double n = static_cast<double>(x.size());
    const double mean = x.mean();
    const Vector centered = x.array() - mean;
    const double var = centered.squaredNorm() / n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    Vector xhat = centered * inv_std;
    Vector y = p.gain.cwiseProduct(xhat) + p.bias;
    if (cache != nullptr) {
        cache->xhat = std::move(xhat);
        cache->inv_std = inv_std;
    }
    return y;
}

/// Returns dx and accumulates dgain/dbias into `grad`.
inline Vector layer_norm_backward(const LayerNormCache& cache, const LayerNormParams& p, const Vector& dy,
                                  LayerNormParams& grad) {
    const double n = static_cast<double>(dy.size());
    grad.gain += dy.cwiseProduct(cache.xhat);
    grad.bias += dy;
    const Vector dxhat = dy.cwiseProduct(p.gain);
    const double mean_dxhat = dxhat.mean();
    const double mean_dxhat_xhat = dxhat.dot(cache.xhat) / n;
    return cache.inv_std * (dxhat.array() - mean_dxhat - cache.xhat.array() * mean_dxhat_xhat).matrix();
}

// ---------------------------------------------------------------------------
// softmax

/// p_i = exp(s_i / tau) / sum_j exp(s_j / tau), max-subtracted.
inline Vector softmax_temp(const Vector& scores, double tau = 1.0) {
    if (!(tau > 0)) throw std::invalid_argument("softmax_temp: tau must be positive, got " + std::to_string(tau));
    if (scores.size() == 0) throw std::invalid_argument("softmax_temp: empty scores");
    require_finite(scores, "softmax_temp scores");
    const double m = scores.maxCoeff();
    Vector e = ((scores.array() - m) / tau).exp();
    return e / e.sum();
}

/// Gradient w.r.t. scores given dL/dp and p = softmax_temp(scores, tau).
inline Vector softmax_temp_backward(const Vector& p, const Vector& dp, double tau = 1.0) {
    const double inner = p.dot(dp);
    return (p.array() * (dp.array() - inner) / tau).matrix();
}

// ---------------------------------------------------------------------------
// cosine similarity

inline double cosine_sim(const Vector& a, const Vector& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_sim: size mismatch " + detail::shape_str(a) + " vs " +
                                    detail::shape_str(b));
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0)) throw std::invalid_argument("cosine_sim: first argument has zero norm");
    if (!(nb > 0)) throw std::invalid_argument("cosine_sim: second argument has zero norm");
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

/// Accumulates d cos(a,b)/da * g into da and likewise for b.
inline void cosine_sim_backward(const Vector& a, const Vector& b, double g, Vector& da, Vector& db) {
    const double na = a.norm();
    const double nb = b.norm();
    const double c = a.dot(b) / (na * nb);
    da += g * (b / (na * nb) - c * a / (na * na));
    db += g * (a / (na * nb) - c * b / (nb * nb));
}

// ---------------------------------------------------------------------------
// elementwise helpers

inline Vector relu(const Vector& x) { return x.cwiseMax(0.0); }

inline Vector relu_backward(const Vector& pre, const Vector& dy) {
    return (pre.array() > 0.0).select(dy.array(), 0.0).matrix();
}

/// Train-mode inverted dropout.  An empty mask means identity.
inline Vector dropout_mask(Eigen::Index n, double rate, std::mt19937_64* rng) {
    if (rng == nullptr || rate <= 0.0) return {};
    std::bernoulli_distribution keep(1.0 - rate);
    Vector mask(n);
    for (Eigen::Index i = 0; i < n; ++i) mask[i] = keep(*rng) ? 1.0 / (1.0 - rate) : 0.0;
    return mask;
}

inline Vector apply_mask(const Vector& x, const Vector& mask) {
    return mask.size() == 0 ? x : Vector(x.cwiseProduct(mask));
}

inline Vector concat(const Vector& a, const Vector& b) {
    Vector out(a.size() + b.size());
    out << a, b;
    return out;
}

/// W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); fan_in is the number of columns.
inline Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
    return m;
}

// ---------------------------------------------------------------------------
// optimisation

/// p' = p - lr * g.  `step` is reported in the error for a non-finite gradient.
inline Vector sgd_update(const Vector& params, const Vector& grads, double lr, std::optional<long> step = {}) {
    if (params.size() != grads.size())
        throw std::invalid_argument("sgd_update: params " + detail::shape_str(params) + " vs grads " +
                                    detail::shape_str(grads));
    if (!(lr > 0)) throw std::invalid_argument("sgd_update: lr must be positive");
    if (!grads.allFinite()) {
        std::string msg = "sgd_update: non-finite gradient";
        if (step) msg += " at step " + std::to_string(*step);
        throw std::runtime_error(msg);
    }
    return params - lr * grads;
}

// ---------------------------------------------------------------------------
// finite-difference gradient check

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::pair<std::size_t, std::size_t> worst_param_index{0, 0};
    bool passed = true;
    std::size_t checked = 0;
    double worst_numeric = 0.0;
    double worst_analytic = 0.0;
};

/// Central-difference check of `analytic` against f around p.
///
/// Relative error per entry is |num - ana| / max(|num|, |ana|, 1e-8), taken
/// as zero when |num - ana| is within the round-off of the difference.  The
/// worst index is reported as (entry, 0) for flat parameter vectors.
/// `probe` limits the check to a subset of coordinates when non-empty.
inline GradCheckReport finite_diff_grad_check(const std::function<double(const Vector&)>& f, const Vector& p,
                                              const Vector& analytic, double eps, double tol,
                                              const std::vector<Eigen::Index>& probe = {}) {
    if (!(eps >= 1e-7 && eps <= 1e-3))
        throw std::invalid_argument("finite_diff_grad_check: eps must lie in [1e-7, 1e-3]");
    if (analytic.size() != p.size())
        throw std::invalid_argument("finite_diff_grad_check: gradient " + detail::shape_str(analytic) +
                                    " vs params " + detail::shape_str(p));
    GradCheckReport report;
    Vector probe_point = p;
    auto eval = [&](Eigen::Index i, double value) {
        probe_point[i] = value;
        const double out = f(probe_point);
        if (!std::isfinite(out))
            throw std::runtime_error("finite_diff_grad_check: non-finite objective at coordinate " +
                                     std::to_string(i));
        return out;
    };
    auto check_one = [&](Eigen::Index i) {
        const double orig = p[i];
        const double plus = eval(i, orig + eps);
        const double minus = eval(i, orig - eps);
        probe_point[i] = orig;
        const double numeric = (plus - minus) / (2.0 * eps);
        // differences below the round-off floor of the central difference
        // itself (a few ulps of f over 2 eps) carry no information
        const double roundoff =
            8.0 * std::numeric_limits<double>::epsilon() * std::max({std::abs(plus), std::abs(minus), 1.0}) / (2.0 * eps);
        const double diff = std::abs(numeric - analytic[i]);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
        const double rel = diff <= roundoff ? 0.0 : diff / denom;
        if (report.checked++ == 0 || rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_param_index = {static_cast<std::size_t>(i), 0};
            report.worst_numeric = numeric;
            report.worst_analytic = analytic[i];
        }
    };
    if (probe.empty()) {
        for (Eigen::Index i = 0; i < p.size(); ++i) check_one(i);
    } else {
        for (Eigen::Index i : probe) check_one(i);
    }
    report.passed = report.max_rel_error < tol;
    return report;
}

}  // namespace aacl
