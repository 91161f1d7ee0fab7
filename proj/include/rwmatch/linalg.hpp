#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rwmatch {

/// Thrown when a caller breaks a documented precondition (shapes, ranges).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when an iterative routine produces a non-finite intermediate.
class NumericalFailure : public std::runtime_error {
public:
    NumericalFailure(const std::string& what, long iteration)
        : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
          iteration_(iteration) {}
    long iteration() const noexcept { return iteration_; }

private:
    long iteration_;
};

inline void require(bool condition, const char* message) {
    if (!condition) throw ContractViolation(message);
}
inline void require(bool condition, const std::string& message) {
    if (!condition) throw ContractViolation(message);
}

using Vector = std::vector<double>;

/// Dense column-major matrix. Token matrices are d x n with one token per
/// column, so a column is a contiguous span.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    /// Row-major nested initializer, for tests and small literals.
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix from_columns(const std::vector<Vector>& columns);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[c * rows_ + r]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[c * rows_ + r]; }

    std::span<double> col(std::size_t c) { return {data_.data() + c * rows_, rows_}; }
    std::span<const double> col(std::size_t c) const { return {data_.data() + c * rows_, rows_}; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
/// a^T b without forming the transpose.
Matrix matmul_transposed_left(const Matrix& a, const Matrix& b);

/// Keeps the listed columns, in order, with repetition allowed.
Matrix gather_columns(const Matrix& m, std::span<const std::size_t> indices);

double dot(std::span<const double> a, std::span<const double> b);
double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> values);

/// Partition of the columns of a matrix into classes of bitwise-identical
/// columns. `representatives[k]` is the first column of class k and
/// `class_of[c]` the class of column c.
struct ColumnClasses {
    std::vector<std::size_t> representatives;
    std::vector<std::size_t> class_of;
};

/// Groups bitwise-identical columns. When `tags` is non-empty, columns must
/// also carry bitwise-identical tag values to share a class.
ColumnClasses classify_columns(const Matrix& m, std::span<const double> tags = {});

/// Same grouping for rows, streaming the matrix column by column. Rows are
/// bucketed by a 64-bit hash and verified entry by entry; a row that fails
/// verification gets its own class, so classes never mix distinct rows.
ColumnClasses classify_rows(const Matrix& m, std::span<const double> tags = {});

/// log(sum(exp(values))), -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> values);

}  // namespace rwmatch
