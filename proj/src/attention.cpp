#include "rwmatch/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rwmatch {

Similarity Similarity::softmax(double temperature) {
    require(std::isfinite(temperature) && temperature > 0.0, "Similarity: temperature must be > 0");
    return {Kind::Softmax, temperature};
}

Similarity Similarity::linear() { return {Kind::Linear, 1.0}; }

double linear_feature_map(double x) { return x >= 0.0 ? x + 1.0 : std::exp(x); }

double activate(Activation act, double x) {
    switch (act) {
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Tanh: return std::tanh(x);
        case Activation::Identity: return x;
    }
    return x;
}

std::size_t AttentionLayerParams::validate() const {
    require(!heads.empty(), "AttentionLayerParams: at least one head required");
    if (sim.kind == Similarity::Kind::Softmax)
        require(sim.temperature > 0.0, "AttentionLayerParams: temperature must be > 0");
    const std::size_t d = heads.front().value_output.rows();
    const std::size_t dh = heads.front().query.rows();
    require(d >= 1 && dh >= 1, "AttentionLayerParams: empty head dimensions");
    for (const auto& h : heads) {
        require(h.query.rows() == dh && h.query.cols() == d, "AttentionLayerParams: W_Q shape");
        require(h.key.rows() == dh && h.key.cols() == d, "AttentionLayerParams: W_K shape");
        require(h.value_output.rows() == d && h.value_output.cols() == d,
                "AttentionLayerParams: W_VO shape");
        require(all_finite(h.query.data()) && all_finite(h.key.data()) &&
                    all_finite(h.value_output.data()),
                "AttentionLayerParams: non-finite head parameter");
    }
    const std::size_t df = ffn.w1.rows();
    require(ffn.w1.cols() == d && ffn.b1.size() == df, "FeedForwardParams: W_1/b_1 shape");
    require(ffn.w2.rows() == d && ffn.w2.cols() == df && ffn.b2.size() == d,
            "FeedForwardParams: W_2/b_2 shape");
    require(all_finite(ffn.w1.data()) && all_finite(ffn.b1) && all_finite(ffn.w2.data()) &&
                all_finite(ffn.b2),
            "FeedForwardParams: non-finite parameter");
    return d;
}

ProbabilityWeights::ProbabilityWeights(std::vector<double> weights) : p_(std::move(weights)) {
    require(!p_.empty(), "ProbabilityWeights: empty");
    double total = 0.0;
    for (double v : p_) {
        require(std::isfinite(v) && v >= 0.0, "ProbabilityWeights: entries must be finite and >= 0");
        total += v;
    }
    require(total > 0.0, "ProbabilityWeights: all weights are zero");
    for (auto& v : p_) v /= total;
}

ProbabilityWeights ProbabilityWeights::uniform(std::size_t n) {
    return ProbabilityWeights(std::vector<double>(n, 1.0));
}

double similarity(const Similarity& sim, std::span<const double> k, std::span<const double> q) {
    require(k.size() == q.size(), "similarity: dimension mismatch");
    if (sim.kind == Similarity::Kind::Softmax) return std::exp(dot(k, q) / sim.temperature);
    double s = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) s += linear_feature_map(k[i]) * linear_feature_map(q[i]);
    return s;
}

namespace {

Matrix apply_feature_map(const Matrix& m) {
    Matrix out = m;
    for (double& v : out.data()) v = linear_feature_map(v);
    return out;
}

// weights == nullptr means every key has the same weight.
Matrix attention_impl(const Matrix& keys, const Matrix& queries, const Similarity& sim,
                      const ProbabilityWeights* weights) {
    require(keys.cols() >= 1, "attention_matrix: need at least one key");
    require(keys.rows() == queries.rows(), "attention_matrix: key/query dimension mismatch");
    require(weights == nullptr || weights->size() == keys.cols(),
            "reweighted_attention_matrix: weight count must equal key count");
    const std::size_t nk = keys.cols();
    Matrix out(nk, queries.cols());

    auto weight = [&](std::size_t i) { return weights ? (*weights)[i] : 1.0; };

    if (sim.kind == Similarity::Kind::Softmax) {
        require(sim.temperature > 0.0, "attention_matrix: temperature must be > 0");
        Matrix logits = matmul_transposed_left(keys, queries);
        for (std::size_t j = 0; j < queries.cols(); ++j) {
            auto lc = logits.col(j);
            auto oc = out.col(j);
            double hi = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < nk; ++i) {
                lc[i] /= sim.temperature;
                if (weight(i) > 0.0) hi = std::max(hi, lc[i]);
            }
            double total = 0.0;
            for (std::size_t i = 0; i < nk; ++i) {
                const double w = weight(i);
                oc[i] = w > 0.0 ? w * std::exp(lc[i] - hi) : 0.0;
                total += oc[i];
            }
            for (auto& v : oc) v /= total;
        }
        return out;
    }

    const Matrix fk = apply_feature_map(keys);
    const Matrix fq = apply_feature_map(queries);
    for (std::size_t j = 0; j < queries.cols(); ++j) {
        auto oc = out.col(j);
        double total = 0.0;
        for (std::size_t i = 0; i < nk; ++i) {
            const double w = weight(i);
            oc[i] = w > 0.0 ? w * dot(fk.col(i), fq.col(j)) : 0.0;
            total += oc[i];
        }
        for (auto& v : oc) v /= total;
    }
    return out;
}

}  // namespace

Matrix attention_matrix(const Matrix& keys, const Matrix& queries, const Similarity& sim) {
    return attention_impl(keys, queries, sim, nullptr);
}

Matrix reweighted_attention_matrix(const Matrix& keys, const Matrix& queries,
                                   const Similarity& sim, const ProbabilityWeights& weights) {
    return attention_impl(keys, queries, sim, &weights);
}

Matrix attention_layer_forward(const Matrix& queries, const Matrix& keys, const Matrix& values,
                               const AttentionLayerParams& params,
                               const ProbabilityWeights* weights) {
    const std::size_t d = params.validate();
    require(queries.rows() == d && keys.rows() == d && values.rows() == d,
            "attention_layer_forward: token dimension mismatch");
    require(keys.cols() == values.cols(), "attention_layer_forward: key/value column counts differ");
    require(weights == nullptr || weights->size() == keys.cols(),
            "attention_layer_forward: weight count must equal key count");

    Matrix mixed = queries;
    for (const auto& head : params.heads) {
        const Matrix proj_k = matmul(head.key, keys);
        const Matrix proj_q = matmul(head.query, queries);
        const Matrix attn = attention_impl(proj_k, proj_q, params.sim, weights);
        const Matrix proj_v = matmul(head.value_output, values);
        const Matrix update = matmul(proj_v, attn);
        auto dst = mixed.data();
        auto src = update.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }

    const auto& ffn = params.ffn;
    Matrix hidden = matmul(ffn.w1, mixed);
    for (std::size_t j = 0; j < hidden.cols(); ++j) {
        auto hc = hidden.col(j);
        for (std::size_t i = 0; i < hc.size(); ++i) hc[i] = activate(ffn.act, hc[i] + ffn.b1[i]);
    }
    Matrix out = matmul(ffn.w2, hidden);
    for (std::size_t j = 0; j < out.cols(); ++j) {
        auto oc = out.col(j);
        auto mc = mixed.col(j);
        for (std::size_t i = 0; i < oc.size(); ++i) oc[i] = mc[i] + oc[i] + ffn.b2[i];
    }
    return out;
}

}  // namespace rwmatch
