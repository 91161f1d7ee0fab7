#include "rwmatch/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rwmatch {

SampledSet sample_iid(const FeatureSet& set, std::size_t n, std::uint64_t seed) {
    require(n >= 1, "sample_iid: n must be >= 1");
    const auto p = set.probs().values();
    std::vector<double> cumulative(p.size());
    std::partial_sum(p.begin(), p.end(), cumulative.begin());
    Rng rng(seed);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = rng.categorical(cumulative);
    return SampledSet(set, std::move(idx));
}

GroupedIndexMap group_indices(const SampledSet& sample) {
    GroupedIndexMap out;
    out.groups.resize(sample.base().size());
    for (std::size_t k = 0; k < sample.size(); ++k) out.groups[sample.indices()[k]].push_back(k);
    out.total = sample.size();
    return out;
}

SampledSet deterministic_expand(const FeatureSet& set, const std::vector<std::size_t>& multiplicities) {
    require(multiplicities.size() == set.size(), "deterministic_expand: one multiplicity per point");
    require(std::any_of(multiplicities.begin(), multiplicities.end(), [](std::size_t c) { return c > 0; }),
            "deterministic_expand: all multiplicities are zero");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < multiplicities.size(); ++i) idx.insert(idx.end(), multiplicities[i], i);
    return SampledSet(set, std::move(idx));
}

namespace {

// Grouped sum over the leading rows.size() x cols.size() block of m.
Matrix grouped_block_sum(const Matrix& m, const SampledSet& rows, const SampledSet& cols) {
    Matrix out(rows.base().size(), cols.base().size());
    const auto& ri = rows.indices();
    for (std::size_t l = 0; l < cols.size(); ++l) {
        auto dst = out.col(cols.indices()[l]);
        auto src = m.col(l);
        for (std::size_t k = 0; k < ri.size(); ++k) dst[ri[k]] += src[k];
    }
    return out;
}

}  // namespace

Matrix grouped_sum(const Matrix& m, const SampledSet& rows, const SampledSet& cols) {
    require(m.rows() == rows.size() && m.cols() == cols.size(), "grouped_sum: shape mismatch");
    return grouped_block_sum(m, rows, cols);
}

FeatureSet make_synthetic_set(const SyntheticSetOptions& opts, Rng& rng) {
    const std::size_t cells = opts.grid * opts.grid;
    require(opts.points >= 1 && opts.points <= cells, "make_synthetic_set: points must fit the grid");
    require(opts.descriptor_dim >= 1, "make_synthetic_set: descriptor_dim must be >= 1");
    std::vector<std::size_t> order(cells);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < opts.points; ++i) std::swap(order[i], order[i + rng.below(cells - i)]);

    const double half_width = std::sqrt(3.0);
    std::vector<FeaturePoint> points(opts.points);
    for (std::size_t i = 0; i < opts.points; ++i) {
        const std::size_t cell = order[i];
        points[i].coord = {static_cast<double>(cell % opts.grid) + 0.5,
                           static_cast<double>(cell / opts.grid) + 0.5};
        points[i].descriptor.resize(opts.descriptor_dim);
        for (double& v : points[i].descriptor) v = rng.uniform(-half_width, half_width);
    }
    const auto side = static_cast<double>(opts.grid);
    return FeatureSet(std::move(points), ProbabilityWeights(rng.dirichlet_flat(opts.points)),
                      GridBounds{side, side});
}

std::size_t ConvergenceReport::total_failures() const {
    std::size_t f = 0;
    for (const auto& r : rows) f += r.failures;
    return f;
}

bool ConvergenceReport::converges() const {
    if (rows.empty()) return false;
    for (std::size_t k = 1; k < rows.size(); ++k)
        if (rows[k].q50 > rows[k - 1].q50) return false;
    if (rows.size() == 1) return true;
    return rows.back().q50 <= rows.front().q50 / 2.0;
}

double quantile(std::vector<double> values, double q) {
    require(!values.empty(), "quantile: no values");
    require(q >= 0.0 && q <= 1.0, "quantile: q must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

ConvergenceRow summarize(std::size_t sample_size, std::vector<double> errors, std::size_t failures) {
    ConvergenceRow row;
    row.sample_size = sample_size;
    row.trials = errors.size() + failures;
    row.failures = failures;
    if (errors.empty()) {
        row.q25 = row.q50 = row.q75 = row.max = std::nan("");
        return row;
    }
    row.q25 = quantile(errors, 0.25);
    row.q50 = quantile(errors, 0.50);
    row.q75 = quantile(errors, 0.75);
    row.max = *std::max_element(errors.begin(), errors.end());
    return row;
}

namespace {

void check_schedule(const std::vector<std::size_t>& sizes, std::size_t trials) {
    require(!sizes.empty(), "convergence: no sample sizes");
    require(trials >= 1, "convergence: trials must be >= 1");
    require(sizes.front() >= 1, "convergence: sample sizes must be >= 1");
    for (std::size_t k = 1; k < sizes.size(); ++k)
        require(sizes[k] > sizes[k - 1], "convergence: sample sizes must be strictly increasing");
}

const char* similarity_name(const TransformerSpec& spec) {
    if (spec.layers.empty()) return "none";
    return spec.layers.front().params.sim.kind == Similarity::Kind::Softmax ? "softmax" : "linear";
}

// Worst l-inf distance between sampled tokens and their full-set counterparts.
double token_error(const Matrix& sampled, const SampledSet& sample, const Matrix& full) {
    double worst = 0.0;
    for (std::size_t k = 0; k < sample.size(); ++k)
        worst = std::max(worst, max_abs_diff(sampled.col(k), full.col(sample.indices()[k])));
    return worst;
}

struct TrialSamples {
    SampledSet a;
    SampledSet b;
};

TrialSamples draw_trial(const FeatureSet& a, const FeatureSet& b, std::size_t m, std::uint64_t seed,
                        std::size_t trial) {
    const std::uint64_t trial_seed = derive_seed(seed, m, trial);
    return {sample_iid(a, m, derive_seed(trial_seed, 0xA)), sample_iid(b, m, derive_seed(trial_seed, 0xB))};
}

}  // namespace

ConvergenceReport run_attention_convergence(const TransformerSpec& spec, const FeatureSet& a,
                                            const FeatureSet& b, const std::vector<std::size_t>& sizes,
                                            std::size_t trials, std::uint64_t seed) {
    check_schedule(sizes, trials);
    const auto [ref_a, ref_b] = forward_reweighted(spec, a, b);

    ConvergenceReport report{"attention-converge", similarity_name(spec), "none", seed, {}};
    for (std::size_t m : sizes) {
        std::vector<double> errors;
        std::size_t failures = 0;
        for (std::size_t t = 0; t < trials; ++t) {
            const TrialSamples s = draw_trial(a, b, m, seed, t);
            try {
                const auto [out_a, out_b] = forward(spec, s.a, s.b);
                const double err = std::max(token_error(out_a, s.a, ref_a), token_error(out_b, s.b, ref_b));
                if (!std::isfinite(err)) throw NumericalFailure("attention convergence: non-finite error", 0);
                errors.push_back(err);
            } catch (const NumericalFailure&) {
                ++failures;
            }
        }
        report.rows.push_back(summarize(m, std::move(errors), failures));
    }
    return report;
}

const char* to_string(MatchingMethod method) {
    return method == MatchingMethod::OptimalTransport ? "ot" : "dual-softmax";
}

ConvergenceReport run_matching_convergence(const TransformerSpec& spec, const FeatureSet& a,
                                           const FeatureSet& b, const std::vector<std::size_t>& sizes,
                                           std::size_t trials, std::uint64_t seed,
                                           MatchingMethod method, const MatchingOptions& opts) {
    check_schedule(sizes, trials);
    const auto [tok_a, tok_b] = forward_reweighted(spec, a, b);
    const Matrix reference =
        method == MatchingMethod::OptimalTransport
            ? ot_reweighted(tok_a, tok_b, a.probs(), b.probs(), opts).interior()
            : dual_softmax_reweighted(score_matrix(tok_a, tok_b), a.probs(), b.probs());

    ConvergenceReport report{"matching-converge", similarity_name(spec), to_string(method), seed, {}};
    for (std::size_t m : sizes) {
        std::vector<double> errors;
        std::size_t failures = 0;
        for (std::size_t t = 0; t < trials; ++t) {
            const TrialSamples s = draw_trial(a, b, m, seed, t);
            try {
                const auto [out_a, out_b] = forward(spec, s.a, s.b);
                // The OT plan's dustbin row and column fall outside the summed block.
                const Matrix assignment = method == MatchingMethod::OptimalTransport
                                              ? ot_uniform(out_a, out_b, opts).plan
                                              : dual_softmax(score_matrix(out_a, out_b));
                const double err = max_abs_diff(grouped_block_sum(assignment, s.a, s.b), reference);
                if (!std::isfinite(err)) throw NumericalFailure("matching convergence: non-finite error", 0);
                errors.push_back(err);
            } catch (const NumericalFailure&) {
                ++failures;
            }
        }
        report.rows.push_back(summarize(m, std::move(errors), failures));
    }
    return report;
}

}  // namespace rwmatch
