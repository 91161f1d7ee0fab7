#pragma once

#include "rwmatch/attention.hpp"
#include "rwmatch/linalg.hpp"

#include <cstddef>

namespace rwmatch {

/// n_A x n_B matrix of pairwise token inner products.
struct ScoreMatrix {
    Matrix values;
};

/// Score matrix with one extra row and column filled with the dustbin score.
struct AugmentedScoreMatrix {
    Matrix values;  // (n_A + 1) x (n_B + 1)
    double alpha = 0.0;

    std::size_t interior_rows() const { return values.rows() - 1; }
    std::size_t interior_cols() const { return values.cols() - 1; }
    Matrix interior() const;
};

/// Row and column target masses; the last entry of each is the dustbin.
struct MarginalPair {
    Vector a;
    Vector b;

    /// a = (p_A, 1), b = (p_B, 1).
    static MarginalPair from_weights(const ProbabilityWeights& pa, const ProbabilityWeights& pb);
    static MarginalPair uniform(std::size_t na, std::size_t nb);
};

struct SinkhornOptions {
    double eps = 0.1;
    int max_iters = 200;
    double tol = 1e-9;
};

struct AugmentedAssignment {
    Matrix plan;  // (n_A + 1) x (n_B + 1), nonnegative
    int iterations = 0;
    /// max of the l-inf row and column marginal errors of `plan`.
    double residual = 0.0;
    bool converged = false;

    Matrix interior() const;
    double total_mass() const;
};

struct MatchingOptions {
    double alpha = 1.0;
    SinkhornOptions sinkhorn;
};

ScoreMatrix score_matrix(const Matrix& tokens_a, const Matrix& tokens_b);

AugmentedScoreMatrix augment(const ScoreMatrix& scores, double alpha);

double marginal_residual(const Matrix& plan, const MarginalPair& marginals);

/// Entropic optimal transport by alternating row/column scaling of
/// K = exp(S / eps), carried out on log-scalings. Starts from u = a, v = b,
/// and stops once the marginal residual (checked after each column update)
/// is at most `tol` or `max_iters` is reached. Zero-mass rows/columns get
/// log-scaling -inf and contribute exact zeros. Rows (columns) that are
/// bitwise identical in S and carry identical mass share one evaluation.
/// Throws NumericalFailure if a scaling becomes NaN or +inf.
AugmentedAssignment sinkhorn(const AugmentedScoreMatrix& scores, const MarginalPair& marginals,
                             const SinkhornOptions& opts);

/// Optimal transport layer with equal weights 1/n per point.
AugmentedAssignment ot_uniform(const Matrix& tokens_a, const Matrix& tokens_b,
                               const MatchingOptions& opts);

/// Optimal transport layer with marginals given by detection probabilities.
AugmentedAssignment ot_reweighted(const Matrix& tokens_a, const Matrix& tokens_b,
                                  const ProbabilityWeights& pa, const ProbabilityWeights& pb,
                                  const MatchingOptions& opts);

/// Row-wise softmax times column-wise softmax of S.
Matrix dual_softmax(const ScoreMatrix& scores);

/// p_A(i) p_B(j) z_ij^2 / (sum_l p_B(l) z_il * sum_k p_A(k) z_kj), z = exp(S).
/// The row-i sum runs over B columns with B weights and the column-j sum over
/// A rows with A weights; rows/columns with zero weight are zero.
Matrix dual_softmax_reweighted(const ScoreMatrix& scores, const ProbabilityWeights& pa,
                               const ProbabilityWeights& pb);

}  // namespace rwmatch
