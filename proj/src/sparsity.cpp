#include "rwmatch/sparsity.hpp"

#include "rwmatch/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace rwmatch {

Vector ScoreHeadParams::flatten() const {
    Vector flat(w1.data().begin(), w1.data().end());
    flat.insert(flat.end(), b1.begin(), b1.end());
    flat.insert(flat.end(), w2.begin(), w2.end());
    flat.push_back(b2);
    return flat;
}

ScoreHeadParams ScoreHeadParams::with_values(std::span<const double> flat) const {
    require(flat.size() == parameter_count(), "ScoreHeadParams: flat parameter count mismatch");
    ScoreHeadParams out = *this;
    auto it = flat.begin();
    for (double& v : out.w1.data()) v = *it++;
    for (double& v : out.b1) v = *it++;
    for (double& v : out.w2) v = *it++;
    out.b2 = *it;
    return out;
}

ScoreHeadParams ScoreHeadParams::random(std::size_t descriptor_dim, std::size_t hidden, Rng& rng) {
    require(descriptor_dim >= 1 && hidden >= 1, "ScoreHeadParams: empty dimensions");
    const double s1 = std::sqrt(3.0 / static_cast<double>(descriptor_dim));
    const double s2 = std::sqrt(3.0 / static_cast<double>(hidden));
    ScoreHeadParams p;
    p.w1 = Matrix(hidden, descriptor_dim);
    for (double& v : p.w1.data()) v = rng.uniform(-s1, s1);
    p.b1.resize(hidden);
    for (double& v : p.b1) v = rng.uniform(-s1, s1);
    p.w2.resize(hidden);
    for (double& v : p.w2) v = rng.uniform(-s2, s2);
    p.b2 = 0.0;
    return p;
}

double score_feature(const ScoreHeadParams& params, std::span<const double> descriptor) {
    require(descriptor.size() == params.w1.cols(), "score_feature: descriptor dimension mismatch");
    double z = params.b2;
    for (std::size_t h = 0; h < params.w1.rows(); ++h) {
        double pre = params.b1[h];
        for (std::size_t k = 0; k < descriptor.size(); ++k) pre += params.w1(h, k) * descriptor[k];
        z += params.w2[h] * (pre > 0.0 ? pre : 0.0);
    }
    // Clamp so the score stays strictly inside (0, 1) in double precision.
    const double s = 1.0 / (1.0 + std::exp(-z));
    return std::clamp(s, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

ScoreMap score_head_forward(const ScoreHeadParams& params, const FeatureSet& set) {
    ScoreMap out;
    out.s.reserve(set.size());
    for (const auto& p : set.points()) out.s.push_back(score_feature(params, p.descriptor));
    return out;
}

double sparsity_loss(const ScoreMap& scores) {
    return std::accumulate(scores.s.begin(), scores.s.end(), 0.0);
}

MatchingLoss matching_loss(const AugmentedAssignment& assignment, const GroundTruth& gt) {
    const Matrix& p = assignment.plan;
    require(p.rows() >= 2 && p.cols() >= 2, "matching_loss: empty assignment");
    const std::size_t na = p.rows() - 1;
    const std::size_t nb = p.cols() - 1;
    MatchingLoss out;
    double sum = 0.0;
    std::size_t cells = 0;
    auto add = [&](std::size_t i, std::size_t j) {
        double v = p(i, j);
        if (!(v >= kMatchingLossFloor)) {
            v = kMatchingLossFloor;
            out.clamped = true;
        }
        sum -= std::log(v);
        ++cells;
    };
    for (auto [i, j] : gt.pairs) {
        require(i < na && j < nb, "matching_loss: ground-truth pair out of range");
        add(i, j);
    }
    for (std::size_t i : gt.unmatched_a) {
        require(i < na, "matching_loss: unmatched A index out of range");
        add(i, nb);
    }
    for (std::size_t j : gt.unmatched_b) {
        require(j < nb, "matching_loss: unmatched B index out of range");
        add(na, j);
    }
    require(cells > 0, "matching_loss: empty ground truth");
    out.value = sum / static_cast<double>(cells);
    return out;
}

double total_loss(double matching, double sparsity, double lambda) {
    require(lambda >= 0.0, "total_loss: lambda must be >= 0");
    return matching + lambda * sparsity;
}

PruneRule PruneRule::keep_above(double threshold) {
    PruneRule r{Kind::Threshold, threshold, 1, 1.0};
    r.validate();
    return r;
}

PruneRule PruneRule::top_k(std::size_t k) {
    PruneRule r{Kind::TopK, 0.5, k, 1.0};
    r.validate();
    return r;
}

PruneRule PruneRule::nms(double radius, std::size_t k) {
    PruneRule r{Kind::Nms, 0.5, k, radius};
    r.validate();
    return r;
}

void PruneRule::validate() const {
    switch (kind) {
        case Kind::Threshold:
            require(threshold > 0.0 && threshold < 1.0, "PruneRule: threshold must lie in (0, 1)");
            break;
        case Kind::TopK:
            require(k >= 1, "PruneRule: k must be >= 1");
            break;
        case Kind::Nms:
            require(k >= 1, "PruneRule: k must be >= 1");
            require(std::isfinite(radius) && radius > 0.0, "PruneRule: radius must be > 0");
            break;
    }
}

namespace {

// Indices by descending score, lower index first on ties.
std::vector<std::size_t> ranked(const Vector& s) {
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return s[x] > s[y]; });
    return order;
}

double chebyshev(const std::array<double, 2>& p, const std::array<double, 2>& q) {
    return std::max(std::abs(p[0] - q[0]), std::abs(p[1] - q[1]));
}

}  // namespace

PruneResult prune(const FeatureSet& set, const ScoreMap& scores, const PruneRule& rule) {
    rule.validate();
    require(scores.s.size() == set.size(), "prune: score count differs from point count");
    std::vector<std::size_t> kept;
    switch (rule.kind) {
        case PruneRule::Kind::Threshold:
            for (std::size_t i = 0; i < set.size(); ++i)
                if (scores.s[i] >= rule.threshold) kept.push_back(i);
            break;
        case PruneRule::Kind::TopK: {
            auto order = ranked(scores.s);
            order.resize(std::min(rule.k, order.size()));
            kept = std::move(order);
            break;
        }
        case PruneRule::Kind::Nms:
            for (std::size_t i : ranked(scores.s)) {
                if (kept.size() == rule.k) break;
                const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t j) {
                    return chebyshev(set[i].coord, set[j].coord) <= rule.radius;
                });
                if (!suppressed) kept.push_back(i);
            }
            break;
    }
    if (kept.empty())
        throw ContractViolation("prune: no survivors at threshold " + std::to_string(rule.threshold));
    std::sort(kept.begin(), kept.end());

    std::vector<FeaturePoint> points;
    Vector weights;
    for (std::size_t i : kept) {
        points.push_back(set[i]);
        weights.push_back(scores.s[i]);
    }
    return {FeatureSet(std::move(points), ProbabilityWeights(std::move(weights)), set.grid()),
            std::move(kept)};
}

PipelineLoss evaluate_pipeline(const ScoreHeadParams& params, const TrainingContext& ctx, double lambda) {
    const ScoreMap sa = score_head_forward(params, ctx.a);
    const ScoreMap sb = score_head_forward(params, ctx.b);
    const FeatureSet fa = ctx.a.with_probs(ProbabilityWeights(sa.s));
    const FeatureSet fb = ctx.b.with_probs(ProbabilityWeights(sb.s));
    const auto [ta, tb] = forward_reweighted(ctx.spec, fa, fb);
    const AugmentedAssignment plan = ot_reweighted(ta, tb, fa.probs(), fb.probs(), ctx.matching);
    const MatchingLoss lm = matching_loss(plan, ctx.gt);

    PipelineLoss out;
    out.matching = lm.value;
    out.sparsity = sparsity_loss(sa) + sparsity_loss(sb);
    out.total = total_loss(out.matching, out.sparsity, lambda);
    out.clamped = lm.clamped;
    return out;
}

TrainResult train_score_head(const ScoreHeadParams& init, const TrainingContext& ctx,
                             const SparsityConfig& cfg, std::size_t steps, std::uint64_t seed,
                             const SpsaSchedule& schedule) {
    require(steps >= 1, "train_score_head: steps must be >= 1");
    require(cfg.lambda >= 0.0, "train_score_head: lambda must be >= 0");
    require(schedule.c > 0.0, "train_score_head: perturbation size c must be > 0");
    require(schedule.stability > 0.0, "train_score_head: stability constant A must be > 0");

    TrainResult result;
    result.initial = evaluate_pipeline(init, ctx, cfg.lambda);
    if (!std::isfinite(result.initial.total))
        throw TrainingAborted("train_score_head: non-finite initial loss", 0, {});

    Rng rng(seed);
    Vector theta = init.flatten();
    Vector delta(theta.size()), probe(theta.size());
    for (std::size_t k = 0; k < steps; ++k) {
        const double kk = static_cast<double>(k);
        const double ak = schedule.a / std::pow(kk + schedule.stability, schedule.alpha);
        const double ck = schedule.c / std::pow(kk + 1.0, schedule.gamma);
        for (double& v : delta) v = rng.rademacher();

        for (std::size_t i = 0; i < theta.size(); ++i) probe[i] = theta[i] + ck * delta[i];
        const PipelineLoss plus = evaluate_pipeline(init.with_values(probe), ctx, cfg.lambda);
        for (std::size_t i = 0; i < theta.size(); ++i) probe[i] = theta[i] - ck * delta[i];
        const PipelineLoss minus = evaluate_pipeline(init.with_values(probe), ctx, cfg.lambda);

        result.trace.push_back({k, 0.5 * (plus.total + minus.total), 0.5 * (plus.matching + minus.matching),
                                0.5 * (plus.sparsity + minus.sparsity)});
        if (!std::isfinite(plus.total) || !std::isfinite(minus.total))
            throw TrainingAborted("train_score_head: non-finite loss", static_cast<long>(k), result.trace);

        const double diff = (plus.total - minus.total) / (2.0 * ck);
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= ak * diff / delta[i];
    }
    result.params = init.with_values(theta);
    result.final = evaluate_pipeline(result.params, ctx, cfg.lambda);
    return result;
}

SyntheticMatchPair make_synthetic_match_pair(std::size_t points, std::size_t descriptor_dim,
                                             std::size_t grid, std::size_t unmatched, double noise,
                                             Rng& rng) {
    require(unmatched < points, "make_synthetic_match_pair: need at least one matched point");
    require(noise >= 0.0, "make_synthetic_match_pair: noise must be >= 0");
    FeatureSet a = make_synthetic_set({points, descriptor_dim, grid}, rng);
    const std::size_t matched = points - unmatched;
    const double side = static_cast<double>(grid);
    const double half_width = std::sqrt(3.0);

    std::vector<FeaturePoint> b_points;
    for (std::size_t i = 0; i < points; ++i) {
        FeaturePoint p;
        if (i < matched) {
            p = a[i];
            for (double& c : p.coord) c = std::clamp(c + rng.uniform(-0.25, 0.25), 0.0, side);
            for (double& v : p.descriptor) v += noise * rng.uniform(-half_width, half_width);
        } else {
            p.coord = {rng.uniform(0.0, side), rng.uniform(0.0, side)};
            p.descriptor.resize(descriptor_dim);
            for (double& v : p.descriptor) v = rng.uniform(-half_width, half_width);
        }
        b_points.push_back(std::move(p));
    }
    // position_of[i] is where original B point i lands after shuffling.
    std::vector<std::size_t> position_of(points);
    std::iota(position_of.begin(), position_of.end(), 0);
    for (std::size_t i = points; i > 1; --i) std::swap(position_of[i - 1], position_of[rng.below(i)]);
    std::vector<FeaturePoint> shuffled(points);
    for (std::size_t i = 0; i < points; ++i) shuffled[position_of[i]] = b_points[i];

    GroundTruth gt;
    for (std::size_t i = 0; i < matched; ++i) gt.pairs.emplace_back(i, position_of[i]);
    for (std::size_t i = matched; i < points; ++i) {
        gt.unmatched_a.push_back(i);
        gt.unmatched_b.push_back(position_of[i]);
    }
    FeatureSet b(std::move(shuffled), ProbabilityWeights(rng.dirichlet_flat(points)), GridBounds{side, side});
    return {std::move(a), std::move(b), std::move(gt)};
}

}  // namespace rwmatch
