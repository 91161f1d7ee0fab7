#pragma once

#include "rwmatch/attention.hpp"
#include "rwmatch/linalg.hpp"
#include "rwmatch/matching.hpp"
#include "rwmatch/random.hpp"
#include "rwmatch/transformer.hpp"

#include <cmath>
#include <vector>

namespace testutil {

using namespace rwmatch;

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double half_width = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.uniform(-half_width, half_width);
    return m;
}

inline Vector random_vector(Rng& rng, std::size_t n, double half_width = 1.0) {
    Vector v(n);
    for (double& x : v) x = rng.uniform(-half_width, half_width);
    return v;
}

inline std::vector<std::size_t> random_counts(Rng& rng, std::size_t n, std::size_t max_count) {
    std::vector<std::size_t> c(n);
    for (auto& x : c) x = 1 + rng.below(max_count);
    return c;
}

inline Vector counts_as_weights(const std::vector<std::size_t>& c) {
    return Vector(c.begin(), c.end());
}

// Repeats column i of m c[i] times, in index order.
inline Matrix duplicate_columns(const Matrix& m, const std::vector<std::size_t>& c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < c.size(); ++i) idx.insert(idx.end(), c[i], i);
    return gather_columns(m, idx);
}

// Plain per-entry evaluation of delta(K_i, Q_j) without any shifting.
inline double delta_oracle(const Similarity& sim, const Matrix& k, std::size_t i, const Matrix& q, std::size_t j) {
    double acc = 0.0;
    for (std::size_t r = 0; r < k.rows(); ++r) {
        if (sim.kind == Similarity::Kind::Softmax) {
            acc += k(r, i) * q(r, j);
        } else {
            auto phi = [](double x) { return x >= 0.0 ? x + 1.0 : std::exp(x); };
            acc += phi(k(r, i)) * phi(q(r, j));
        }
    }
    return sim.kind == Similarity::Kind::Softmax ? std::exp(acc / sim.temperature) : acc;
}

inline Matrix attention_oracle(const Matrix& k, const Matrix& q, const Similarity& sim, const Vector& p) {
    Matrix out(k.cols(), q.cols());
    for (std::size_t j = 0; j < q.cols(); ++j) {
        double denom = 0.0;
        for (std::size_t i = 0; i < k.cols(); ++i) denom += p[i] * delta_oracle(sim, k, i, q, j);
        for (std::size_t i = 0; i < k.cols(); ++i) out(i, j) = p[i] * delta_oracle(sim, k, i, q, j) / denom;
    }
    return out;
}

// Straightforward log-domain Sinkhorn on the full matrix, no memoization.
inline Matrix sinkhorn_oracle(const Matrix& s, const Vector& a, const Vector& b, double eps, int iters) {
    const std::size_t n = s.rows(), m = s.cols();
    const double ninf = -INFINITY;
    Vector f(n), g(m);
    for (std::size_t i = 0; i < n; ++i) f[i] = a[i] > 0 ? std::log(a[i]) : ninf;
    for (std::size_t j = 0; j < m; ++j) g[j] = b[j] > 0 ? std::log(b[j]) : ninf;
    auto lse = [&](auto term, std::size_t count) {
        double hi = ninf;
        for (std::size_t k = 0; k < count; ++k) hi = std::max(hi, term(k));
        if (hi == ninf) return ninf;
        double acc = 0.0;
        for (std::size_t k = 0; k < count; ++k) {
            const double x = term(k);
            if (x != ninf) acc += std::exp(x - hi);
        }
        return hi + std::log(acc);
    };
    for (int it = 0; it < iters; ++it) {
        for (std::size_t i = 0; i < n; ++i)
            f[i] = a[i] > 0 ? std::log(a[i]) - lse([&](std::size_t j) { return s(i, j) / eps + g[j]; }, m) : ninf;
        for (std::size_t j = 0; j < m; ++j)
            g[j] = b[j] > 0 ? std::log(b[j]) - lse([&](std::size_t i) { return s(i, j) / eps + f[i]; }, n) : ninf;
    }
    Matrix plan(n, m);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const double x = f[i] + s(i, j) / eps + g[j];
            plan(i, j) = x == ninf ? 0.0 : std::exp(x);
        }
    return plan;
}

inline FeatureSet grid_set(const std::vector<std::array<double, 2>>& coords, std::size_t dim, Rng& rng,
                           Vector probs = {}) {
    std::vector<FeaturePoint> pts;
    for (const auto& c : coords) pts.push_back({c, random_vector(rng, dim)});
    if (probs.empty()) probs.assign(coords.size(), 1.0);
    return FeatureSet(std::move(pts), ProbabilityWeights(std::move(probs)), GridBounds{8.0, 8.0});
}

}  // namespace testutil
