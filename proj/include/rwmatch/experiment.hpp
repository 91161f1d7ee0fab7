#pragma once

#include "rwmatch/config.hpp"
#include "rwmatch/harness.hpp"
#include "rwmatch/matching.hpp"
#include "rwmatch/sparsity.hpp"
#include "rwmatch/transformer.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rwmatch {

inline constexpr int kReportFormatVersion = 1;

enum ExitCode : int {
    kExitOk = 0,
    kExitThreshold = 1,
    kExitNumerical = 2,
    kExitIo = 3,
    kExitUsage = 4,
};

enum class ReportFormat { Csv, Json };

// Seed streams derived from the root seed.
inline constexpr std::uint64_t kStreamNetwork = 1;
inline constexpr std::uint64_t kStreamSetA = 2;
inline constexpr std::uint64_t kStreamSetB = 3;
inline constexpr std::uint64_t kStreamTrials = 4;
inline constexpr std::uint64_t kStreamProblems = 5;
inline constexpr std::uint64_t kStreamTraining = 6;

ToyArchitecture architecture_from(const ExperimentConfig& cfg, Similarity sim);
MatchingOptions matching_options_from(const ExperimentConfig& cfg);
std::vector<Similarity> similarities_from(const ExperimentConfig& cfg);
std::vector<MatchingMethod> methods_from(const ExperimentConfig& cfg);
PruneRule prune_rule_from(const ExperimentConfig& cfg);

struct ExperimentSets {
    FeatureSet a;
    FeatureSet b;
};

/// The two synthetic full sets used by the convergence experiments.
ExperimentSets make_experiment_sets(const ExperimentConfig& cfg);

struct SinkhornProblem {
    AugmentedScoreMatrix scores;
    MarginalPair marginals;
    SinkhornOptions opts;
};

/// Sizes uniform in [1, max_n], eps log-uniform in [eps_min, eps_max],
/// scores are inner products of random unit vectors, dustbin score
/// cfg.sinkhorn_alpha, Dirichlet(1) masses.
SinkhornProblem make_sinkhorn_problem(const ExperimentConfig& cfg, Rng& rng);

struct SinkhornCheckRow {
    std::size_t problem = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    double eps = 0.0;
    int iterations = 0;
    double residual = 0.0;
    double total_mass = 0.0;
    bool converged = false;
    bool failed = false;  // NumericalFailure
};

std::vector<SinkhornCheckRow> run_sinkhorn_check(const ExperimentConfig& cfg);

struct ReductionRow {
    std::size_t instance = 0;
    std::string similarity;
    std::size_t dim = 0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    double attention_dev = 0.0;     // reweighted attention with uniform weights vs standard
    double dual_softmax_dev = 0.0;  // same for dual-softmax
    bool ot_bitwise = false;        // ot_reweighted(uniform) == ot_uniform, bit for bit
};

/// Instances alternate between softmax and linear similarity.
std::vector<ReductionRow> run_reduction_suite(const ExperimentConfig& cfg);

/// Bit patterns of every network parameter, in a fixed traversal order.
std::vector<std::uint64_t> parameter_bits(const TransformerSpec& spec);

inline constexpr double kReductionTolerance = 1e-12;

struct SparsifyRun {
    TrainResult training;
    ScoreMap scores_a;
    ScoreMap scores_b;
    std::optional<PruneResult> pruned_a;  // empty if the rule kept nothing
    std::optional<PruneResult> pruned_b;
    bool backbone_unchanged = false;
};

/// Trains a score head against the frozen toy matcher and prunes both sets.
SparsifyRun run_sparsify(const ExperimentConfig& cfg);

struct ReportFile {
    std::string name;
    std::string content;
};

struct ExperimentOutcome {
    int exit_code = kExitOk;
    std::vector<ReportFile> files;
    std::string message;  // human-readable summary or failure reason
};

/// Runs the experiment selected by cfg.kind and renders its reports.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg, ReportFormat format);

/// Writes every report under `dir`, creating it if needed. Returns
/// kExitIo with a message on `err` if any write fails.
int write_reports(const ExperimentOutcome& outcome, const std::filesystem::path& dir, std::ostream& err);

}  // namespace rwmatch
