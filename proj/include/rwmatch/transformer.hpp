#pragma once

#include "rwmatch/attention.hpp"
#include "rwmatch/linalg.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace rwmatch {

struct GridBounds {
    double width = 1.0;
    double height = 1.0;

    bool contains(const std::array<double, 2>& xy) const {
        return xy[0] >= 0.0 && xy[0] <= width && xy[1] >= 0.0 && xy[1] <= height;
    }
    bool operator==(const GridBounds&) const = default;
};

struct FeaturePoint {
    std::array<double, 2> coord{};
    Vector descriptor;

    bool operator==(const FeaturePoint&) const = default;
};

/// The full ordered set of candidate feature points of one image together
/// with their detection probabilities.
class FeatureSet {
public:
    FeatureSet(std::vector<FeaturePoint> points, ProbabilityWeights probs, GridBounds grid);

    std::size_t size() const noexcept { return points_.size(); }
    const std::vector<FeaturePoint>& points() const noexcept { return points_; }
    const FeaturePoint& operator[](std::size_t i) const { return points_[i]; }
    const ProbabilityWeights& probs() const noexcept { return probs_; }
    const GridBounds& grid() const noexcept { return grid_; }
    std::size_t descriptor_dim() const noexcept { return points_.front().descriptor.size(); }

    /// Same points and grid with different probabilities.
    FeatureSet with_probs(ProbabilityWeights probs) const;

private:
    std::vector<FeaturePoint> points_;
    ProbabilityWeights probs_;
    GridBounds grid_;
};

/// A sequence of draws from a FeatureSet; entry k is the full-set index k*
/// of sampled point k. The base set must outlive the sample.
class SampledSet {
public:
    /// Throws ContractViolation for out-of-range or zero-probability indices.
    SampledSet(const FeatureSet& base, std::vector<std::size_t> indices);

    const FeatureSet& base() const noexcept { return *base_; }
    const std::vector<std::size_t>& indices() const noexcept { return indices_; }
    std::size_t size() const noexcept { return indices_.size(); }

    /// Every base point exactly once, in order.
    static SampledSet identity(const FeatureSet& base);

private:
    const FeatureSet* base_;
    std::vector<std::size_t> indices_;
};

enum class LayerRoute {
    SelfA,        // A queries, A keys/values; updates A
    SelfB,        // B queries, B keys/values; updates B
    CrossAfromB,  // A queries, B keys/values (weights p_B); updates A
    CrossBfromA,  // B queries, A keys/values (weights p_A); updates B
};

const char* to_string(LayerRoute route);

/// Point-wise affine map of [normalized coord; descriptor] to a token.
struct Embedding {
    Matrix weight;  // d x (2 + descriptor_dim)
    Vector bias;    // d

    std::size_t token_dim() const noexcept { return weight.rows(); }
    bool operator==(const Embedding&) const = default;
};

struct RoutedLayer {
    LayerRoute route;
    AttentionLayerParams params;

    bool operator==(const RoutedLayer&) const = default;
};

struct TransformerSpec {
    Embedding embed;
    std::vector<RoutedLayer> layers;

    /// Token dimension; throws if the embedding and any layer disagree.
    std::size_t validate() const;
    bool operator==(const TransformerSpec&) const = default;
};

struct ToyArchitecture {
    std::size_t token_dim = 8;
    std::size_t heads = 2;
    std::size_t blocks = 2;  // each block is SelfA, SelfB, CrossAfromB, CrossBfromA
    std::size_t ffn_dim = 16;
    std::size_t descriptor_dim = 8;
    Similarity sim = Similarity::softmax(2.0);
    Activation act = Activation::Relu;
};

/// Deterministic synthetic network: entries are uniform with unit variance
/// scaled by 1/sqrt(token_dim), drawn from a generator seeded with `seed`.
/// Residual-branch outputs (value/output and second feed-forward stage) get
/// an extra 1/sqrt(2 * layer count) so token norms stay bounded with depth.
TransformerSpec make_toy_transformer(const ToyArchitecture& arch, std::uint64_t seed);

/// Embedding that copies the descriptor (coordinates ignored); requires
/// descriptor_dim == token dimension.
Embedding descriptor_identity_embedding(std::size_t descriptor_dim);

/// Coordinate mapped to [-1, 1] by the grid bounds.
std::array<double, 2> normalize_coord(const std::array<double, 2>& xy, const GridBounds& grid);

Matrix embed(const TransformerSpec& spec, const FeatureSet& set);
Matrix embed(const TransformerSpec& spec, const SampledSet& set);

using TokenPair = std::pair<Matrix, Matrix>;

/// Runs the layer stack on already embedded tokens. With probability
/// weights given, every layer uses reweighted attention with the weights of
/// the key side. Query columns that are bitwise identical are evaluated once
/// and share the result.
TokenPair run_layers(const TransformerSpec& spec, Matrix tokens_a, Matrix tokens_b,
                     const ProbabilityWeights* probs_a = nullptr,
                     const ProbabilityWeights* probs_b = nullptr);

/// Standard network on sampled points; output columns follow sample order.
TokenPair forward(const TransformerSpec& spec, const SampledSet& a, const SampledSet& b);

/// Reweighted network on full sets using their detection probabilities.
TokenPair forward_reweighted(const TransformerSpec& spec, const FeatureSet& a, const FeatureSet& b);

}  // namespace rwmatch
