#pragma once

// JSON checkpoints: named tensors with shapes and flat row-major data.
//
//   {"format_version": 1, "tensors": {"<name>": {"shape": [r, c], "data": [...]}}, ...}
//
// Vectors are stored with shape [n].

#include <aacl/numeric.hpp>

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <string>

namespace aacl {

inline constexpr int kCheckpointFormatVersion = 1;

namespace detail {

inline nlohmann::json tensor_to_json(const Matrix& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

inline nlohmann::json tensor_to_json(const Vector& v) {
    return {{"shape", {v.size()}}, {"data", std::vector<double>(v.data(), v.data() + v.size())}};
}

inline void tensor_from_json(const nlohmann::json& j, const std::string& name, Matrix& m) {
    const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols())
        throw std::invalid_argument("checkpoint tensor \"" + name + "\" has shape " + nlohmann::json(shape).dump() +
                                    ", expected [" + std::to_string(m.rows()) + "," + std::to_string(m.cols()) + "]");
    if (static_cast<Eigen::Index>(data.size()) != m.size())
        throw std::invalid_argument("checkpoint tensor \"" + name + "\" has wrong data length");
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index jj = 0; jj < m.cols(); ++jj) m(i, jj) = data[k++];
}

inline void tensor_from_json(const nlohmann::json& j, const std::string& name, Vector& v) {
    const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (shape.size() != 1 || shape[0] != v.size() || static_cast<Eigen::Index>(data.size()) != v.size())
        throw std::invalid_argument("checkpoint tensor \"" + name + "\" has shape " + nlohmann::json(shape).dump() +
                                    ", expected [" + std::to_string(v.size()) + "]");
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = data[static_cast<std::size_t>(i)];
}

}  // namespace detail

/// Serialises every tensor reachable through `params.visit(prefix, f)`.
template <typename Params>
nlohmann::json tensors_to_json(const Params& params, const std::string& prefix = "") {
    nlohmann::json out = nlohmann::json::object();
    params.visit(prefix, [&](const std::string& name, const auto& t) { out[name] = detail::tensor_to_json(t); });
    return out;
}

/// Fills `params` (already shaped) from JSON; shape mismatches are hard errors.
template <typename Params>
void tensors_from_json(const nlohmann::json& j, Params& params, const std::string& prefix = "") {
    params.visit(prefix, [&](const std::string& name, auto& t) {
        if (!j.contains(name)) throw std::invalid_argument("checkpoint is missing tensor \"" + name + "\"");
        detail::tensor_from_json(j.at(name), name, t);
    });
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(path + ": malformed JSON: " + e.what());
    }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j, int indent = -1) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(indent) << '\n';
}

// ---------------------------------------------------------------------------
// flat parameter views shared by the optimiser and the gradient checker

template <typename Params>
Eigen::Index param_count(const Params& p) {
    Eigen::Index n = 0;
    p.visit("", [&](const std::string&, const auto& t) { n += t.size(); });
    return n;
}

template <typename Params>
Vector flatten(const Params& p) {
    Vector out(param_count(p));
    Eigen::Index k = 0;
    p.visit("", [&](const std::string&, const auto& t) {
        out.segment(k, t.size()) = Eigen::Map<const Vector>(t.data(), t.size());
        k += t.size();
    });
    return out;
}

template <typename Params>
void unflatten(const Vector& flat, Params& p) {
    Eigen::Index k = 0;
    p.visit("", [&](const std::string&, auto& t) {
        Eigen::Map<Vector>(t.data(), t.size()) = flat.segment(k, t.size());
        k += t.size();
    });
    if (k != flat.size()) throw std::invalid_argument("unflatten: size mismatch");
}

/// Same shapes as `p`, all zeros.
template <typename Params>
Params zeros_like(const Params& p) {
    Params out = p;
    out.visit("", [](const std::string&, auto& t) { t.setZero(); });
    return out;
}

}  // namespace aacl
