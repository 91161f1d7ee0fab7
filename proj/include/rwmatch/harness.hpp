#pragma once

#include "rwmatch/matching.hpp"
#include "rwmatch/random.hpp"
#include "rwmatch/transformer.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace rwmatch {

/// For each full-set index i*, the sample positions k with k* = i*.
struct GroupedIndexMap {
    std::vector<std::vector<std::size_t>> groups;
    std::size_t total = 0;

    std::size_t count(std::size_t i) const { return groups[i].size(); }
    double frequency(std::size_t i) const {
        return total ? static_cast<double>(groups[i].size()) / static_cast<double>(total) : 0.0;
    }
};

/// `n` i.i.d. draws from the set's detection probabilities.
SampledSet sample_iid(const FeatureSet& set, std::size_t n, std::uint64_t seed);

GroupedIndexMap group_indices(const SampledSet& sample);

/// Lists each point i exactly multiplicities[i] times, in index order.
SampledSet deterministic_expand(const FeatureSet& set, const std::vector<std::size_t>& multiplicities);

/// Sums the entries of an (rows.size() x cols.size()) matrix over
/// I(i*) x J(j*); the result is indexed by full-set indices.
Matrix grouped_sum(const Matrix& m, const SampledSet& rows, const SampledSet& cols);

struct SyntheticSetOptions {
    std::size_t points = 16;
    std::size_t descriptor_dim = 8;
    std::size_t grid = 8;  // square grid of grid x grid cells
};

/// Distinct grid cells, unit-variance uniform descriptors and Dirichlet(1)
/// detection probabilities.
FeatureSet make_synthetic_set(const SyntheticSetOptions& opts, Rng& rng);

struct ConvergenceRow {
    std::size_t sample_size = 0;
    std::size_t trials = 0;
    std::size_t failures = 0;
    double q25 = 0.0;
    double q50 = 0.0;
    double q75 = 0.0;
    double max = 0.0;
};

struct ConvergenceReport {
    std::string experiment;
    std::string similarity;
    std::string method;
    std::uint64_t seed = 0;
    std::vector<ConvergenceRow> rows;

    std::size_t total_failures() const;
    /// Medians non-increasing in sample size and the last median at most
    /// half the first.
    bool converges() const;
};

/// Linear-interpolated quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> values, double q);

ConvergenceRow summarize(std::size_t sample_size, std::vector<double> errors, std::size_t failures);

/// Per trial: samples both sides i.i.d., runs the standard network on the
/// samples and compares each output token with the reweighted network's
/// output for its full-set point. Metric: max l-inf distance over tokens.
ConvergenceReport run_attention_convergence(const TransformerSpec& spec, const FeatureSet& a,
                                            const FeatureSet& b, const std::vector<std::size_t>& sizes,
                                            std::size_t trials, std::uint64_t seed);

enum class MatchingMethod { OptimalTransport, DualSoftmax };

const char* to_string(MatchingMethod method);

/// Per trial: samples both sides, runs the standard network and the uniform
/// matching function on the samples, sums the assignment over index groups
/// and compares with the reweighted matching of the reweighted network's
/// full-set tokens. Metric: max absolute difference over interior entries.
ConvergenceReport run_matching_convergence(const TransformerSpec& spec, const FeatureSet& a,
                                           const FeatureSet& b, const std::vector<std::size_t>& sizes,
                                           std::size_t trials, std::uint64_t seed,
                                           MatchingMethod method, const MatchingOptions& opts);

}  // namespace rwmatch
