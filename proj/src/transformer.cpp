#include "rwmatch/transformer.hpp"

#include "rwmatch/random.hpp"

#include <cmath>

namespace rwmatch {

FeatureSet::FeatureSet(std::vector<FeaturePoint> points, ProbabilityWeights probs, GridBounds grid)
    : points_(std::move(points)), probs_(std::move(probs)), grid_(grid) {
    require(!points_.empty(), "FeatureSet: no points");
    require(probs_.size() == points_.size(), "FeatureSet: probability count differs from point count");
    require(grid_.width > 0.0 && grid_.height > 0.0, "FeatureSet: grid bounds must be positive");
    const std::size_t dim = points_.front().descriptor.size();
    for (const auto& p : points_) {
        require(p.descriptor.size() == dim, "FeatureSet: descriptor dimensions differ");
        require(all_finite(p.descriptor), "FeatureSet: non-finite descriptor");
        require(grid_.contains(p.coord), "FeatureSet: coordinate outside grid bounds");
    }
}

FeatureSet FeatureSet::with_probs(ProbabilityWeights probs) const {
    return FeatureSet(points_, std::move(probs), grid_);
}

SampledSet::SampledSet(const FeatureSet& base, std::vector<std::size_t> indices)
    : base_(&base), indices_(std::move(indices)) {
    require(!indices_.empty(), "SampledSet: empty sample");
    for (std::size_t i : indices_) {
        require(i < base.size(), "SampledSet: index out of range");
        require(base.probs()[i] > 0.0, "SampledSet: sampled a zero-probability point");
    }
}

SampledSet SampledSet::identity(const FeatureSet& base) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < base.size(); ++i)
        if (base.probs()[i] > 0.0) idx.push_back(i);
    return SampledSet(base, std::move(idx));
}

const char* to_string(LayerRoute route) {
    switch (route) {
        case LayerRoute::SelfA: return "self_a";
        case LayerRoute::SelfB: return "self_b";
        case LayerRoute::CrossAfromB: return "cross_a_from_b";
        case LayerRoute::CrossBfromA: return "cross_b_from_a";
    }
    return "?";
}

std::size_t TransformerSpec::validate() const {
    const std::size_t d = embed.token_dim();
    require(d >= 1, "TransformerSpec: empty embedding");
    require(embed.weight.cols() >= 2, "TransformerSpec: embedding must see the coordinates");
    require(embed.bias.size() == d, "TransformerSpec: embedding bias size");
    for (const auto& layer : layers)
        require(layer.params.validate() == d, "TransformerSpec: layer token dimension differs");
    return d;
}

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
    Matrix m(rows, cols);
    const double half_width = std::sqrt(3.0) * scale;
    for (double& v : m.data()) v = rng.uniform(-half_width, half_width);
    return m;
}

Vector random_vector(Rng& rng, std::size_t n, double scale) {
    Vector v(n);
    const double half_width = std::sqrt(3.0) * scale;
    for (double& x : v) x = rng.uniform(-half_width, half_width);
    return v;
}

}  // namespace

TransformerSpec make_toy_transformer(const ToyArchitecture& arch, std::uint64_t seed) {
    require(arch.token_dim >= 1 && arch.heads >= 1, "make_toy_transformer: empty dimensions");
    require(arch.token_dim % arch.heads == 0, "make_toy_transformer: token_dim must divide by heads");
    const std::size_t d = arch.token_dim;
    const std::size_t dh = d / arch.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    const double layers = static_cast<double>(4 * arch.blocks);
    const double branch_scale = layers > 0.0 ? scale / std::sqrt(2.0 * layers) : scale;
    Rng rng(seed);

    TransformerSpec spec;
    spec.embed.weight = random_matrix(rng, d, 2 + arch.descriptor_dim, scale);
    spec.embed.bias = random_vector(rng, d, scale);

    constexpr LayerRoute block[] = {LayerRoute::SelfA, LayerRoute::SelfB, LayerRoute::CrossAfromB,
                                    LayerRoute::CrossBfromA};
    for (std::size_t b = 0; b < arch.blocks; ++b) {
        for (LayerRoute route : block) {
            AttentionLayerParams params;
            params.sim = arch.sim;
            for (std::size_t h = 0; h < arch.heads; ++h) {
                AttentionHeadParams head;
                head.query = random_matrix(rng, dh, d, scale);
                head.key = random_matrix(rng, dh, d, scale);
                head.value_output = random_matrix(rng, d, d, branch_scale);
                params.heads.push_back(std::move(head));
            }
            params.ffn.w1 = random_matrix(rng, arch.ffn_dim, d, scale);
            params.ffn.b1 = random_vector(rng, arch.ffn_dim, scale);
            params.ffn.w2 = random_matrix(rng, d, arch.ffn_dim, branch_scale);
            params.ffn.b2 = random_vector(rng, d, branch_scale);
            params.ffn.act = arch.act;
            spec.layers.push_back({route, std::move(params)});
        }
    }
    return spec;
}

Embedding descriptor_identity_embedding(std::size_t descriptor_dim) {
    Embedding e;
    e.weight = Matrix(descriptor_dim, 2 + descriptor_dim);
    for (std::size_t i = 0; i < descriptor_dim; ++i) e.weight(i, 2 + i) = 1.0;
    e.bias.assign(descriptor_dim, 0.0);
    return e;
}

std::array<double, 2> normalize_coord(const std::array<double, 2>& xy, const GridBounds& grid) {
    return {2.0 * xy[0] / grid.width - 1.0, 2.0 * xy[1] / grid.height - 1.0};
}

namespace {

void embed_point(const Embedding& e, const FeaturePoint& p, const GridBounds& grid,
                 std::span<double> out) {
    const auto nc = normalize_coord(p.coord, grid);
    for (std::size_t r = 0; r < out.size(); ++r) {
        double v = e.bias[r] + e.weight(r, 0) * nc[0] + e.weight(r, 1) * nc[1];
        for (std::size_t k = 0; k < p.descriptor.size(); ++k) v += e.weight(r, 2 + k) * p.descriptor[k];
        out[r] = v;
    }
}

void check_embedding_input(const TransformerSpec& spec, const FeatureSet& set) {
    require(spec.embed.weight.cols() == 2 + set.descriptor_dim(),
            "embed: embedding input width does not match descriptor dimension");
    require(spec.embed.bias.size() == spec.embed.token_dim(), "embed: embedding bias size");
}

Matrix apply_layer(const Matrix& queries, const Matrix& keys, const AttentionLayerParams& params,
                   const ProbabilityWeights* weights) {
    const ColumnClasses classes = classify_columns(queries);
    if (classes.representatives.size() == queries.cols())
        return attention_layer_forward(queries, keys, keys, params, weights);
    const Matrix unique = gather_columns(queries, classes.representatives);
    const Matrix updated = attention_layer_forward(unique, keys, keys, params, weights);
    return gather_columns(updated, classes.class_of);
}

}  // namespace

Matrix embed(const TransformerSpec& spec, const FeatureSet& set) {
    check_embedding_input(spec, set);
    Matrix out(spec.embed.token_dim(), set.size());
    for (std::size_t j = 0; j < set.size(); ++j) embed_point(spec.embed, set[j], set.grid(), out.col(j));
    return out;
}

Matrix embed(const TransformerSpec& spec, const SampledSet& set) {
    const FeatureSet& base = set.base();
    check_embedding_input(spec, base);
    Matrix out(spec.embed.token_dim(), set.size());
    for (std::size_t j = 0; j < set.size(); ++j)
        embed_point(spec.embed, base[set.indices()[j]], base.grid(), out.col(j));
    return out;
}

TokenPair run_layers(const TransformerSpec& spec, Matrix tokens_a, Matrix tokens_b,
                     const ProbabilityWeights* probs_a, const ProbabilityWeights* probs_b) {
    const std::size_t d = spec.validate();
    require(tokens_a.cols() >= 1 && tokens_b.cols() >= 1, "forward: both sets must be nonempty");
    require(tokens_a.rows() == d && tokens_b.rows() == d, "forward: token dimension mismatch");
    for (const auto& layer : spec.layers) {
        switch (layer.route) {
            case LayerRoute::SelfA:
                tokens_a = apply_layer(tokens_a, tokens_a, layer.params, probs_a);
                break;
            case LayerRoute::SelfB:
                tokens_b = apply_layer(tokens_b, tokens_b, layer.params, probs_b);
                break;
            case LayerRoute::CrossAfromB:
                tokens_a = apply_layer(tokens_a, tokens_b, layer.params, probs_b);
                break;
            case LayerRoute::CrossBfromA:
                tokens_b = apply_layer(tokens_b, tokens_a, layer.params, probs_a);
                break;
        }
    }
    return {std::move(tokens_a), std::move(tokens_b)};
}

TokenPair forward(const TransformerSpec& spec, const SampledSet& a, const SampledSet& b) {
    require(a.size() >= 1 && b.size() >= 1, "forward: both sets must be nonempty");
    return run_layers(spec, embed(spec, a), embed(spec, b));
}

TokenPair forward_reweighted(const TransformerSpec& spec, const FeatureSet& a, const FeatureSet& b) {
    return run_layers(spec, embed(spec, a), embed(spec, b), &a.probs(), &b.probs());
}

}  // namespace rwmatch
