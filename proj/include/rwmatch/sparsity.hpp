#pragma once

#include "rwmatch/linalg.hpp"
#include "rwmatch/matching.hpp"
#include "rwmatch/random.hpp"
#include "rwmatch/transformer.hpp"

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace rwmatch {

/// Per-feature score head: ReLU(W_1 x + b_1), then logistic(w_2 . h + b_2).
struct ScoreHeadParams {
    Matrix w1;  // hidden x descriptor_dim
    Vector b1;  // hidden
    Vector w2;  // hidden
    double b2 = 0.0;

    std::size_t parameter_count() const { return w1.rows() * w1.cols() + b1.size() + w2.size() + 1; }
    Vector flatten() const;
    /// Inverse of flatten for a head of the same shape.
    ScoreHeadParams with_values(std::span<const double> flat) const;

    static ScoreHeadParams random(std::size_t descriptor_dim, std::size_t hidden, Rng& rng);

    bool operator==(const ScoreHeadParams&) const = default;
};

struct ScoreMap {
    Vector s;  // one score in (0, 1) per feature
};

double score_feature(const ScoreHeadParams& params, std::span<const double> descriptor);

ScoreMap score_head_forward(const ScoreHeadParams& params, const FeatureSet& set);

/// L1 norm of the score map.
double sparsity_loss(const ScoreMap& scores);

struct GroundTruth {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::size_t> unmatched_a;  // matched to the B dustbin column
    std::vector<std::size_t> unmatched_b;  // matched to the A dustbin row
};

struct MatchingLoss {
    double value = 0.0;
    bool clamped = false;  // some ground-truth cell was below the 1e-30 floor
};

inline constexpr double kMatchingLossFloor = 1e-30;

/// Mean negative log of the assignment at the ground-truth cells, including
/// dustbin cells for unmatched points.
MatchingLoss matching_loss(const AugmentedAssignment& assignment, const GroundTruth& gt);

double total_loss(double matching, double sparsity, double lambda);

struct PruneRule {
    enum class Kind { Threshold, TopK, Nms };

    Kind kind = Kind::TopK;
    double threshold = 0.5;
    std::size_t k = 1;
    double radius = 1.0;

    static PruneRule keep_above(double threshold);
    static PruneRule top_k(std::size_t k);
    /// Greedy suppression within Chebyshev `radius`, keeping at most k.
    static PruneRule nms(double radius, std::size_t k);

    void validate() const;
};

struct SparsityConfig {
    double lambda = 1.0;
    PruneRule rule = PruneRule::top_k(8);
};

struct PruneResult {
    FeatureSet set;                 // survivors in original order, probs proportional to score
    std::vector<std::size_t> kept;  // original indices of the survivors
};

PruneResult prune(const FeatureSet& set, const ScoreMap& scores, const PruneRule& rule);

/// Gain sequences a_k = a / (k + A)^alpha and c_k = c / (k + 1)^gamma, k = 0, 1, ...
struct SpsaSchedule {
    double a = 0.1;
    double c = 0.05;
    double stability = 10.0;  // A
    double alpha = 0.602;
    double gamma = 0.101;
};

/// The frozen matcher that the score head is trained against.
struct TrainingContext {
    const TransformerSpec& spec;
    const FeatureSet& a;
    const FeatureSet& b;
    GroundTruth gt;
    MatchingOptions matching;
};

struct PipelineLoss {
    double total = 0.0;
    double matching = 0.0;
    double sparsity = 0.0;
    bool clamped = false;
};

/// Scores both sets, uses the normalized scores as detection probabilities
/// for the reweighted network and optimal transport, and evaluates the loss.
PipelineLoss evaluate_pipeline(const ScoreHeadParams& params, const TrainingContext& ctx, double lambda);

struct TraceEntry {
    std::size_t step = 0;
    double total = 0.0;     // mean of the two perturbed evaluations
    double matching = 0.0;
    double sparsity = 0.0;
};

struct TrainResult {
    ScoreHeadParams params;
    std::vector<TraceEntry> trace;
    PipelineLoss initial;
    PipelineLoss final;
};

class TrainingAborted : public NumericalFailure {
public:
    TrainingAborted(const std::string& what, long step, std::vector<TraceEntry> trace)
        : NumericalFailure(what, step), trace_(std::move(trace)) {}
    const std::vector<TraceEntry>& trace() const noexcept { return trace_; }

private:
    std::vector<TraceEntry> trace_;
};

/// Simultaneous-perturbation stochastic approximation on the total loss;
/// only the score head changes. Throws TrainingAborted on a non-finite loss.
TrainResult train_score_head(const ScoreHeadParams& init, const TrainingContext& ctx,
                             const SparsityConfig& cfg, std::size_t steps, std::uint64_t seed,
                             const SpsaSchedule& schedule = {});

/// Synthetic image pair for training: B holds noisy copies of all but
/// `unmatched` points of A plus fresh points, in shuffled order.
struct SyntheticMatchPair {
    FeatureSet a;
    FeatureSet b;
    GroundTruth gt;
};

SyntheticMatchPair make_synthetic_match_pair(std::size_t points, std::size_t descriptor_dim,
                                             std::size_t grid, std::size_t unmatched, double noise,
                                             Rng& rng);

}  // namespace rwmatch
