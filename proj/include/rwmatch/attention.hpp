#pragma once

#include "rwmatch/linalg.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace rwmatch {

/// Similarity function delta(k, q) used inside attention. Both variants are
/// strictly positive so normalizing denominators never vanish.
struct Similarity {
    enum class Kind { Softmax, Linear };

    Kind kind = Kind::Softmax;
    /// Softmax temperature tau; ignored for Linear.
    double temperature = 1.0;

    static Similarity softmax(double temperature);
    /// Linear attention with the element-wise map phi(x) = x + 1 for x >= 0
    /// and exp(x) for x < 0.
    static Similarity linear();

    bool operator==(const Similarity&) const = default;
};

double linear_feature_map(double x);

enum class Activation { Relu, Tanh, Identity };

double activate(Activation act, double x);

struct AttentionHeadParams {
    Matrix query;         // d_h x d
    Matrix key;           // d_h x d
    Matrix value_output;  // d x d, the product W_O W_V

    bool operator==(const AttentionHeadParams&) const = default;
};

struct FeedForwardParams {
    Matrix w1;  // d_f x d
    Vector b1;  // d_f
    Matrix w2;  // d x d_f
    Vector b2;  // d
    Activation act = Activation::Relu;

    bool operator==(const FeedForwardParams&) const = default;
};

struct AttentionLayerParams {
    std::vector<AttentionHeadParams> heads;
    FeedForwardParams ffn;
    Similarity sim;

    /// Token dimension d; throws ContractViolation if the head and
    /// feed-forward shapes are inconsistent or any entry is non-finite.
    std::size_t validate() const;

    bool operator==(const AttentionLayerParams&) const = default;
};

/// Per-key detection probabilities, normalized to sum to one on construction.
class ProbabilityWeights {
public:
    /// Throws ContractViolation on negative/non-finite entries or zero total.
    explicit ProbabilityWeights(std::vector<double> weights);

    static ProbabilityWeights uniform(std::size_t n);

    std::size_t size() const noexcept { return p_.size(); }
    double operator[](std::size_t i) const { return p_[i]; }
    std::span<const double> values() const noexcept { return p_; }

    bool operator==(const ProbabilityWeights&) const = default;

private:
    std::vector<double> p_;
};

/// delta(k, q) for the given similarity kind.
double similarity(const Similarity& sim, std::span<const double> k, std::span<const double> q);

/// Column-stochastic n_K x n_Q matrix with entry (i, j) proportional to
/// delta(K_i, Q_j). Softmax logits are shifted by their column maximum.
Matrix attention_matrix(const Matrix& keys, const Matrix& queries, const Similarity& sim);

/// As attention_matrix, with each key's similarity scaled by its probability.
/// Keys of zero probability keep their row, which is identically zero.
Matrix reweighted_attention_matrix(const Matrix& keys, const Matrix& queries,
                                   const Similarity& sim, const ProbabilityWeights& weights);

/// One attention layer: multi-head residual update followed by the residual
/// feed-forward part. With `weights` set, every head uses the reweighted
/// attention matrix over the key/value columns.
Matrix attention_layer_forward(const Matrix& queries, const Matrix& keys, const Matrix& values,
                               const AttentionLayerParams& params,
                               const ProbabilityWeights* weights = nullptr);

}  // namespace rwmatch
