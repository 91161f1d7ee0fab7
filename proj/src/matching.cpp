#include "rwmatch/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rwmatch {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Vector log_of(const Vector& v) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? std::log(v[i]) : kNegInf;
    return out;
}

// log sum_k exp(row[k] + shift[k]) with -inf terms skipped.
double shifted_lse(std::span<const double> row, std::span<const double> shift) {
    double hi = kNegInf;
    for (std::size_t k = 0; k < row.size(); ++k) hi = std::max(hi, row[k] + shift[k]);
    if (hi == kNegInf) return kNegInf;
    double s = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
        const double x = row[k] + shift[k];
        if (x != kNegInf) s += std::exp(x - hi);
    }
    return hi + std::log(s);
}

// Column k of `reps` belongs to class k; the lse of each class against
// `shift` is broadcast to all of its members.
void class_lse(const Matrix& reps, const ColumnClasses& classes, const Vector& shift, Vector& out) {
    Vector per_class(classes.representatives.size());
    for (std::size_t k = 0; k < per_class.size(); ++k) per_class[k] = shifted_lse(reps.col(k), shift);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = per_class[classes.class_of[c]];
}

// out(i, j) = table(class_of_row[i], class_of_col[j]).
Matrix expand_table(const Matrix& table, const ColumnClasses& rows, const ColumnClasses& cols) {
    Matrix out(rows.class_of.size(), cols.class_of.size());
    for (std::size_t j = 0; j < out.cols(); ++j) {
        auto src = table.col(cols.class_of[j]);
        auto dst = out.col(j);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[rows.class_of[i]];
    }
    return out;
}

bool bad_scaling(double x) { return std::isnan(x) || x == std::numeric_limits<double>::infinity(); }

}  // namespace

Matrix AugmentedScoreMatrix::interior() const {
    Matrix out(interior_rows(), interior_cols());
    for (std::size_t j = 0; j < out.cols(); ++j)
        for (std::size_t i = 0; i < out.rows(); ++i) out(i, j) = values(i, j);
    return out;
}

MarginalPair MarginalPair::from_weights(const ProbabilityWeights& pa, const ProbabilityWeights& pb) {
    MarginalPair m;
    m.a.assign(pa.values().begin(), pa.values().end());
    m.a.push_back(1.0);
    m.b.assign(pb.values().begin(), pb.values().end());
    m.b.push_back(1.0);
    return m;
}

MarginalPair MarginalPair::uniform(std::size_t na, std::size_t nb) {
    return from_weights(ProbabilityWeights::uniform(na), ProbabilityWeights::uniform(nb));
}

Matrix AugmentedAssignment::interior() const {
    Matrix out(plan.rows() - 1, plan.cols() - 1);
    for (std::size_t j = 0; j < out.cols(); ++j)
        for (std::size_t i = 0; i < out.rows(); ++i) out(i, j) = plan(i, j);
    return out;
}

double AugmentedAssignment::total_mass() const {
    double s = 0.0;
    for (double v : plan.data()) s += v;
    return s;
}

ScoreMatrix score_matrix(const Matrix& tokens_a, const Matrix& tokens_b) {
    require(tokens_a.rows() == tokens_b.rows(), "score_matrix: token dimensions differ");
    return {matmul_transposed_left(tokens_a, tokens_b)};
}

AugmentedScoreMatrix augment(const ScoreMatrix& scores, double alpha) {
    require(std::isfinite(alpha), "augment: dustbin score must be finite");
    const Matrix& s = scores.values;
    AugmentedScoreMatrix out{Matrix(s.rows() + 1, s.cols() + 1, alpha), alpha};
    for (std::size_t j = 0; j < s.cols(); ++j) {
        auto src = s.col(j);
        std::copy(src.begin(), src.end(), out.values.col(j).begin());
    }
    return out;
}

double marginal_residual(const Matrix& plan, const MarginalPair& marginals) {
    require(plan.rows() == marginals.a.size() && plan.cols() == marginals.b.size(),
            "marginal_residual: shape mismatch");
    Vector rows(plan.rows(), 0.0);
    double worst = 0.0;
    for (std::size_t j = 0; j < plan.cols(); ++j) {
        double col = 0.0;
        auto pc = plan.col(j);
        for (std::size_t i = 0; i < pc.size(); ++i) {
            col += pc[i];
            rows[i] += pc[i];
        }
        worst = std::max(worst, std::abs(col - marginals.b[j]));
    }
    for (std::size_t i = 0; i < rows.size(); ++i) worst = std::max(worst, std::abs(rows[i] - marginals.a[i]));
    return worst;
}

AugmentedAssignment sinkhorn(const AugmentedScoreMatrix& scores, const MarginalPair& marginals,
                             const SinkhornOptions& opts) {
    const Matrix& s = scores.values;
    const std::size_t n = s.rows();
    const std::size_t m = s.cols();
    require(n >= 2 && m >= 2, "sinkhorn: augmented matrix needs at least one interior row and column");
    require(marginals.a.size() == n && marginals.b.size() == m, "sinkhorn: marginal sizes mismatch");
    require(std::isfinite(opts.eps) && opts.eps > 0.0, "sinkhorn: eps must be > 0");
    require(opts.max_iters >= 1, "sinkhorn: max_iters must be >= 1");
    require(opts.tol >= 0.0, "sinkhorn: tol must be >= 0");
    require(all_finite(s.data()), "sinkhorn: non-finite score");
    double sum_a = 0.0, sum_b = 0.0;
    for (double v : marginals.a) {
        require(std::isfinite(v) && v >= 0.0, "sinkhorn: row marginal must be finite and >= 0");
        sum_a += v;
    }
    for (double v : marginals.b) {
        require(std::isfinite(v) && v >= 0.0, "sinkhorn: column marginal must be finite and >= 0");
        sum_b += v;
    }
    require(sum_a > 0.0 && std::abs(sum_a - sum_b) <= 1e-9 * std::max(sum_a, sum_b),
            "sinkhorn: marginals are infeasible (total masses differ)");

    // Rows (columns) that are bitwise identical in S and carry the same mass
    // have identical scalings at every iteration, so each class is updated
    // once from its representative, which holds the full row (column) of S/eps.
    const ColumnClasses row_classes = classify_rows(s, marginals.a);
    const ColumnClasses col_classes = classify_columns(s, marginals.b);
    Matrix rep_rows(m, row_classes.representatives.size());
    for (std::size_t k = 0; k < row_classes.representatives.size(); ++k) {
        const std::size_t r = row_classes.representatives[k];
        auto dst = rep_rows.col(k);
        for (std::size_t j = 0; j < m; ++j) dst[j] = s(r, j) / opts.eps;
    }
    Matrix rep_cols(n, col_classes.representatives.size());
    for (std::size_t k = 0; k < col_classes.representatives.size(); ++k) {
        auto src = s.col(col_classes.representatives[k]);
        auto dst = rep_cols.col(k);
        for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] / opts.eps;
    }

    const Vector log_a = log_of(marginals.a);
    const Vector log_b = log_of(marginals.b);
    Vector f = log_a;  // log u
    Vector g = log_b;  // log v
    Vector row_lse(n), col_lse(m);
    class_lse(rep_rows, row_classes, g, row_lse);

    AugmentedAssignment out;
    for (int it = 1; it <= opts.max_iters; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            f[i] = log_a[i] == kNegInf ? kNegInf : log_a[i] - row_lse[i];
            if (bad_scaling(f[i])) throw NumericalFailure("sinkhorn: non-finite row scaling", it);
        }
        class_lse(rep_cols, col_classes, f, col_lse);
        for (std::size_t j = 0; j < m; ++j) {
            g[j] = log_b[j] == kNegInf ? kNegInf : log_b[j] - col_lse[j];
            if (bad_scaling(g[j])) throw NumericalFailure("sinkhorn: non-finite column scaling", it);
        }
        class_lse(rep_rows, row_classes, g, row_lse);

        double res = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double mass = f[i] == kNegInf ? 0.0 : std::exp(f[i] + row_lse[i]);
            res = std::max(res, std::abs(mass - marginals.a[i]));
        }
        for (std::size_t j = 0; j < m; ++j) {
            const double mass = g[j] == kNegInf ? 0.0 : std::exp(g[j] + col_lse[j]);
            res = std::max(res, std::abs(mass - marginals.b[j]));
        }
        if (std::isnan(res)) throw NumericalFailure("sinkhorn: non-finite marginal residual", it);
        out.iterations = it;
        if (res <= opts.tol) {
            out.converged = true;
            break;
        }
    }

    // Plan entries depend only on the (row class, column class) pair.
    const std::size_t nr = row_classes.representatives.size();
    Matrix table(nr, col_classes.representatives.size());
    for (std::size_t l = 0; l < table.cols(); ++l) {
        const std::size_t j = col_classes.representatives[l];
        auto sc = rep_cols.col(l);
        for (std::size_t k = 0; k < nr; ++k) {
            const std::size_t i = row_classes.representatives[k];
            const double x = f[i] + sc[i] + g[j];
            table(k, l) = x == kNegInf ? 0.0 : std::exp(x);
        }
    }
    if (!all_finite(table.data()))
        throw NumericalFailure("sinkhorn: non-finite transport plan", out.iterations);
    out.plan = expand_table(table, row_classes, col_classes);
    out.residual = marginal_residual(out.plan, marginals);
    return out;
}

AugmentedAssignment ot_uniform(const Matrix& tokens_a, const Matrix& tokens_b,
                               const MatchingOptions& opts) {
    return sinkhorn(augment(score_matrix(tokens_a, tokens_b), opts.alpha),
                    MarginalPair::uniform(tokens_a.cols(), tokens_b.cols()), opts.sinkhorn);
}

AugmentedAssignment ot_reweighted(const Matrix& tokens_a, const Matrix& tokens_b,
                                  const ProbabilityWeights& pa, const ProbabilityWeights& pb,
                                  const MatchingOptions& opts) {
    require(pa.size() == tokens_a.cols() && pb.size() == tokens_b.cols(),
            "ot_reweighted: weight counts must match token counts");
    return sinkhorn(augment(score_matrix(tokens_a, tokens_b), opts.alpha),
                    MarginalPair::from_weights(pa, pb), opts.sinkhorn);
}

namespace {

Matrix dual_softmax_impl(const Matrix& s, const Vector& log_pa, const Vector& log_pb) {
    require(s.rows() >= 1 && s.cols() >= 1, "dual_softmax: empty score matrix");
    require(all_finite(s.data()), "dual_softmax: non-finite score");
    // Identical rows (columns) with identical weight share their normalizer
    // and every output entry, as in sinkhorn.
    const ColumnClasses row_classes = classify_rows(s, log_pa);
    const ColumnClasses col_classes = classify_columns(s, log_pb);
    const std::size_t nr = row_classes.representatives.size();
    const std::size_t nc = col_classes.representatives.size();

    Vector row_lse(nr), col_lse(nc), row(s.cols());
    for (std::size_t k = 0; k < nr; ++k) {
        const std::size_t i = row_classes.representatives[k];
        for (std::size_t j = 0; j < s.cols(); ++j) row[j] = s(i, j);
        row_lse[k] = shifted_lse(row, log_pb);
    }
    for (std::size_t l = 0; l < nc; ++l) col_lse[l] = shifted_lse(s.col(col_classes.representatives[l]), log_pa);

    Matrix table(nr, nc);
    for (std::size_t l = 0; l < nc; ++l) {
        const std::size_t j = col_classes.representatives[l];
        for (std::size_t k = 0; k < nr; ++k) {
            const std::size_t i = row_classes.representatives[k];
            table(k, l) = log_pa[i] == kNegInf || log_pb[j] == kNegInf
                              ? 0.0
                              : std::exp(log_pa[i] + log_pb[j] + 2.0 * s(i, j) - row_lse[k] - col_lse[l]);
        }
    }
    return expand_table(table, row_classes, col_classes);
}

}  // namespace

Matrix dual_softmax(const ScoreMatrix& scores) {
    const Matrix& s = scores.values;
    return dual_softmax_impl(s, Vector(s.rows(), 0.0), Vector(s.cols(), 0.0));
}

Matrix dual_softmax_reweighted(const ScoreMatrix& scores, const ProbabilityWeights& pa,
                               const ProbabilityWeights& pb) {
    const Matrix& s = scores.values;
    require(pa.size() == s.rows() && pb.size() == s.cols(),
            "dual_softmax_reweighted: weight counts must match score shape");
    Vector la(pa.values().begin(), pa.values().end());
    Vector lb(pb.values().begin(), pb.values().end());
    return dual_softmax_impl(s, log_of(la), log_of(lb));
}

}  // namespace rwmatch
